"""Command line entry point: ``bench run | gram | verify``."""

from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from . import bench, data, verify
from .kernels import KernelConfig, assemble_gram


def _cmd_run(args) -> int:
    cfg = bench.load_config(args.config)
    if args.output_dir:
        cfg.output_dir = args.output_dir
    try:
        report = bench.run_experiment(cfg)
    except bench.RepetitionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    am, asd = report.accuracy
    fm, fsd = report.f_measure
    print(f"{report.name} [{report.kernel}] train={report.train_size} reps={len(report.repetitions)}")
    print(f"accuracy  {bench.format_mean_std(100 * am, 100 * asd, 1)} %")
    print(f"f-measure {bench.format_mean_std(fm, fsd, 3)}")
    print(f"outputs written to {cfg.output_dir}")
    return 0


def _load(path: str, fmt: str) -> data.Dataset:
    if fmt == "idx":
        return data.load_mnist(path)
    if fmt == "pgm":
        return data.load_pgm_dir(path, data.regex_label_rule(r"(\d+)"))
    return data.load_csv(path)


def _cmd_gram(args) -> int:
    d = data.normalize_unit(_load(args.data, args.format))
    if args.limit:
        d = d.subset(np.arange(min(args.limit, len(d))))
    cfg = KernelConfig(args.kernel, alpha=args.alpha, beta=args.beta, gamma=args.gamma, base=args.base, sigma=args.sigma)
    gram = assemble_gram(d.X, cfg, workers=bench.thread_count())
    asym = np.max(np.abs(gram.blocks - np.swapaxes(gram.blocks, 0, 1).swapaxes(2, 3)))
    print(f"samples={gram.N} block={gram.c}x{gram.c} shape={d.shape} max_transpose_drift={asym:.2e}")
    if args.out:
        np.save(args.out, gram.blocks)
        print(f"blocks saved to {args.out}")
    return 0


def _cmd_verify(args) -> int:
    checks = verify.run_all(seed=args.seed)
    for c in checks:
        print(c.line())
    return 0 if all(c.passed for c in checks) else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bench", description="Matrix-kernel STM benchmark driver")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a configured experiment")
    run.add_argument("--config", required=True)
    run.add_argument("--output-dir")
    run.set_defaults(func=_cmd_run)

    gram = sub.add_parser("gram", help="assemble a block Gram for a dataset")
    gram.add_argument("--kernel", required=True, choices=["linear", "hadamard_poly", "gaussian_cols", "svd_matrix"])
    gram.add_argument("--data", required=True)
    gram.add_argument("--format", default="csv", choices=["csv", "idx", "pgm"])
    gram.add_argument("--alpha", type=float, default=0.0)
    gram.add_argument("--beta", type=int, default=1)
    gram.add_argument("--gamma", type=float, default=1.0)
    gram.add_argument("--base", default="poly", choices=["poly", "rbf"])
    gram.add_argument("--sigma", type=float, default=1.0)
    gram.add_argument("--limit", type=int, default=0)
    gram.add_argument("--out")
    gram.set_defaults(func=_cmd_gram)

    ver = sub.add_parser("verify", help="run the inner-product and kernel property suites")
    ver.add_argument("--seed", type=int, default=0)
    ver.set_defaults(func=_cmd_verify)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
