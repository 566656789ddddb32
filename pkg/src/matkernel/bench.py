"""Experiment driver: metrics, cross-validated grid search, repeated runs."""

from __future__ import annotations

import csv
import io
import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path
from typing import Sequence

import numpy as np
import yaml

from . import data as data_mod
from .data import Dataset, SplitSpec
from .kernels import BlockGram, KernelConfig, assemble_gram, cross_blocks
from .stm import StmHyper, decide_blocks, fit_gram, ovo_vote

log = logging.getLogger(__name__)

THREADS_ENV = "MATKERNEL_THREADS"


def thread_count() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


# metrics -------------------------------------------------------------------


def _f1(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f


def metrics(pred, truth, task: str = "binary", positive=1) -> dict:
    """Accuracy plus precision/recall/F1 of ``positive`` (binary) or the
    unweighted mean of per-class F1 (multiclass)."""
    pred, truth = np.asarray(pred), np.asarray(truth)
    if pred.shape != truth.shape:
        raise ValueError(f"length mismatch: {pred.shape} vs {truth.shape}")
    if pred.size == 0:
        raise ValueError("no predictions")
    acc = float(np.mean(pred == truth))

    def counts(c):
        return (
            int(np.sum((pred == c) & (truth == c))),
            int(np.sum((pred == c) & (truth != c))),
            int(np.sum((pred != c) & (truth == c))),
        )

    if task == "binary":
        p, r, f = _f1(*counts(positive))
        return {"accuracy": acc, "precision": p, "recall": r, "f1": f}
    if task == "multiclass":
        classes = np.union1d(truth, pred)
        macro = float(np.mean([_f1(*counts(c))[2] for c in classes]))
        return {"accuracy": acc, "macro_f": macro}
    raise ValueError(f"unknown task {task!r}")


def f_measure(m: dict) -> float:
    return m["f1"] if "f1" in m else m["macro_f"]


# model selection -----------------------------------------------------------


@dataclass(frozen=True)
class Grid:
    C_values: tuple = (1e-2, 1e-1, 1.0, 1e1, 1e2)
    sigma_values: tuple = tuple(10.0**k for k in range(-4, 5))
    r_values: tuple = tuple(range(1, 11))

    def __post_init__(self):
        for name, kind in (("C_values", float), ("sigma_values", float), ("r_values", int)):
            vals = tuple(getattr(self, name))
            if not vals or any(v <= 0 for v in vals):
                raise ValueError(f"{name} must be nonempty and positive")
            object.__setattr__(self, name, tuple(sorted(kind(v) for v in vals)))

    def points(self, family: str):
        """(C, sigma, r) in tie-break order; linear kernels have no width."""
        sigmas = self.sigma_values if family != "linear" else self.sigma_values[:1]
        return list(product(self.C_values, sigmas, self.r_values))


def stratified_folds(y, folds: int, seed: int) -> np.ndarray:
    """Fold id per sample; each class is dealt round-robin after a shuffle."""
    y = np.asarray(y)
    rng = np.random.Generator(np.random.PCG64(seed))
    fold = np.empty(len(y), dtype=int)
    for c in np.unique(y):
        idx = rng.permutation(np.flatnonzero(y == c))
        fold[idx] = np.arange(len(idx)) % folds
    return fold


def _binary_y(labels, positive) -> np.ndarray:
    return np.where(np.asarray(labels) == positive, 1.0, -1.0)


@dataclass
class Machine:
    """A fitted binary machine; ``sv`` indexes the shared sample pool."""

    pair: tuple[int, int]
    sv: np.ndarray
    alpha: np.ndarray
    y: np.ndarray
    v: np.ndarray
    b: float


def fit_machines(blocks: np.ndarray, labels, idx, h: StmHyper, task: str, positive=1):
    """Fit on the samples ``idx`` of a block array; binary tasks yield one
    machine, multiclass tasks one per class pair (lower class on the +1 side)."""
    labels = np.asarray(labels)
    idx = np.asarray(idx)
    if task == "binary":
        classes = np.array([positive] + [c for c in np.unique(labels[idx]) if c != positive])
        groups = [(0, 1, idx)]
    else:
        classes = np.unique(labels[idx])
        groups = [
            (a, c, idx[np.isin(labels[idx], (classes[a], classes[c]))])
            for a in range(len(classes))
            for c in range(a + 1, len(classes))
        ]
    machines = []
    for a, c, sub in groups:
        y = _binary_y(labels[sub], classes[a])
        fit = fit_gram(BlockGram(blocks[np.ix_(sub, sub)]), y, h)
        sv = np.flatnonzero(fit.alpha > 0)
        machines.append(Machine((a, c), sub[sv], fit.alpha[sv], y[sv], fit.v, fit.b))
    return machines, classes


def predict_machines(machines, classes, cross_fn, n_test: int) -> np.ndarray:
    """``cross_fn(pool_idx)`` returns kernel blocks between those pool samples and the test samples."""
    used = np.unique(np.concatenate([m.sv for m in machines]))
    pos = {int(u): k for k, u in enumerate(used)}
    cross = cross_fn(used) if used.size else None
    values = []
    for m in machines:
        if m.sv.size:
            blk = cross[[pos[int(u)] for u in m.sv]]
            values.append(decide_blocks(m.alpha, m.y, m.v, m.b, blk))
        else:
            values.append(np.full(n_test, float(m.b)))
    values = np.stack(values)
    if len(machines) == 1:
        return np.where(values[0] >= 0, classes[0], classes[1] if len(classes) > 1 else -1)
    return classes[ovo_vote([m.pair for m in machines], values, len(classes))]


@dataclass
class GridResult:
    C: float
    sigma: float
    r: int
    correct: int
    total: int
    table: list = field(default_factory=list)

    @property
    def accuracy(self) -> float:
        return self.correct / self.total


def grid_search(
    train: Dataset,
    grid: Grid,
    h_base: StmHyper,
    folds: int = 3,
    seed: int = 0,
    task: str = "binary",
    positive=1,
) -> GridResult:
    """Stratified k-fold accuracy over the grid, using the training set only.

    Ties go to the smaller C, then the smaller sigma, then the smaller r.
    """
    if folds < 2:
        raise ValueError("folds must be >= 2")
    counts = np.bincount(train.y)
    if np.min(counts[counts > 0]) < folds:
        raise ValueError(f"every class needs at least {folds} samples for {folds}-fold CV")
    fold = stratified_folds(train.y, folds, seed)
    family = h_base.kernel.family
    points = grid.points(family)
    grams = {}
    for sigma in sorted({s for _, s, _ in points}):
        grams[sigma] = assemble_gram(train.X, h_base.kernel.with_width(sigma)).blocks

    def score(point) -> int:
        C, sigma, r = point
        h = StmHyper(r=r, C=C, eps=h_base.eps, max_outer=h_base.max_outer,
                     kernel=h_base.kernel.with_width(sigma), qp_tol=h_base.qp_tol,
                     max_passes=h_base.max_passes)
        correct = 0
        for k in range(folds):
            tr, va = np.flatnonzero(fold != k), np.flatnonzero(fold == k)
            blocks = grams[sigma]
            machines, classes = fit_machines(blocks, train.y, tr, h, task, positive)
            pred = predict_machines(machines, classes, lambda u: blocks[np.ix_(u, va)], len(va))
            correct += int(np.sum(pred == train.y[va]))
        return correct

    workers = thread_count()
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            scores = list(pool.map(score, points))
    else:
        scores = [score(p) for p in points]
    best = int(np.argmax(scores))  # first maximum = tie-break order
    C, sigma, r = points[best]
    table = [(C_, s_, r_, sc) for (C_, s_, r_), sc in zip(points, scores)]
    return GridResult(C, sigma, r, scores[best], len(train), table)


# experiments ---------------------------------------------------------------


@dataclass
class ExperimentConfig:
    name: str = "experiment"
    dataset_format: str = "idx"  # idx | pgm | csv | synthetic
    dataset_path: str = ""
    dataset_split: str = "train"
    label_regex: str = r"(\d+)"
    classes: list | None = None
    task: str = "binary"  # binary | multiclass
    positive_class: int | None = None
    normalize: bool = True
    kernel: dict = field(default_factory=lambda: {"family": "svd_matrix", "base": "poly"})
    C_values: list = field(default_factory=lambda: list(Grid().C_values))
    sigma_values: list = field(default_factory=lambda: list(Grid().sigma_values))
    r_values: list = field(default_factory=lambda: list(Grid().r_values))
    folds: int = 3
    eps: float = 1e-3
    max_outer: int = 20
    qp_tol: float = 1e-3
    train_per_class: int | None = None
    train_total: int | None = None
    test_per_class: int | None = None
    test_total: int | None = None
    seed: int = 0
    repetitions: int = 1
    output_dir: str = "results"
    synthetic: dict = field(default_factory=dict)

    @classmethod
    def from_mapping(cls, mapping: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(mapping) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**mapping)

    @property
    def grid(self) -> Grid:
        return Grid(tuple(self.C_values), tuple(self.sigma_values), tuple(self.r_values))

    @property
    def split(self) -> SplitSpec:
        return SplitSpec(self.train_per_class, self.train_total, self.test_per_class,
                         self.test_total, self.seed, self.repetitions)

    def hyper(self) -> StmHyper:
        return StmHyper(eps=self.eps, max_outer=self.max_outer, kernel=KernelConfig(**self.kernel), qp_tol=self.qp_tol)


def load_config(path) -> ExperimentConfig:
    """Read a flat YAML (or JSON) mapping."""
    mapping = yaml.safe_load(Path(path).read_text()) or {}
    if not isinstance(mapping, dict):
        raise ValueError("config must be a key-value mapping")
    return ExperimentConfig.from_mapping(mapping)


def synthetic_dataset(n_per_class: int = 20, shape=(6, 6), n_classes: int = 2, noise: float = 0.3, seed: int = 0) -> Dataset:
    """Classes are noisy copies of distinct random low-rank prototypes."""
    rng = np.random.Generator(np.random.PCG64(seed))
    m, n = shape
    X, y = [], []
    for c in range(n_classes):
        proto = rng.standard_normal((m, 2)) @ rng.standard_normal((2, n))
        for _ in range(n_per_class):
            X.append(proto + noise * rng.standard_normal((m, n)))
            y.append(c)
    return Dataset(np.stack(X), np.asarray(y), "synthetic")


def load_dataset(cfg: ExperimentConfig) -> Dataset:
    fmt = cfg.dataset_format
    if fmt == "idx":
        d = data_mod.load_mnist(cfg.dataset_path, cfg.dataset_split)
    elif fmt == "pgm":
        d = data_mod.load_pgm_dir(cfg.dataset_path, data_mod.regex_label_rule(cfg.label_regex))
    elif fmt == "csv":
        d = data_mod.load_csv(cfg.dataset_path)
    elif fmt == "synthetic":
        d = synthetic_dataset(**cfg.synthetic)
    else:
        raise ValueError(f"unknown dataset format {fmt!r}")
    if cfg.classes is not None:
        d = data_mod.select_classes(d, cfg.classes)
    if cfg.task == "binary" and cfg.positive_class is not None:
        d = data_mod.one_vs_rest(d, cfg.positive_class)
    if cfg.normalize:
        d = data_mod.normalize_unit(d)
    return d


def _mean_std(vals: Sequence[float]) -> tuple[float, float]:
    vals = np.asarray(vals, dtype=float)
    std = float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
    return float(np.mean(vals)), std


@dataclass
class RunReport:
    name: str
    kernel: str
    task: str
    train_size: int
    repetitions: list = field(default_factory=list)

    @property
    def accuracy(self) -> tuple[float, float]:
        return _mean_std([r["accuracy"] for r in self.repetitions])

    @property
    def f_measure(self) -> tuple[float, float]:
        return _mean_std([r["f_measure"] for r in self.repetitions])

    def table_row(self) -> str:
        """Accuracy in percent and F-measure, each as mean(std)."""
        am, asd = self.accuracy
        fm, fsd = self.f_measure
        return f"{format_mean_std(100 * am, 100 * asd, 1)}  {format_mean_std(fm, fsd, 3)}"

    def to_dict(self) -> dict:
        am, asd = self.accuracy
        fm, fsd = self.f_measure
        return {
            "name": self.name,
            "kernel": self.kernel,
            "task": self.task,
            "train_size": self.train_size,
            "accuracy_mean": am,
            "accuracy_std": asd,
            "f_measure_mean": fm,
            "f_measure_std": fsd,
            "repetitions": self.repetitions,
        }


def format_mean_std(mean: float, std: float, digits: int) -> str:
    return f"{mean:.{digits}f}({std:.{digits}f})"


CSV_FIELDS = ("rep", "n_train", "n_test", "C", "sigma", "r", "cv_accuracy", "accuracy", "f_measure")


class RepetitionError(RuntimeError):
    def __init__(self, rep: int, cause: Exception):
        super().__init__(f"repetition {rep} failed: {cause}")
        self.rep = rep


def run_experiment(cfg: ExperimentConfig, write: bool = True) -> RunReport:
    d = load_dataset(cfg)
    h = cfg.hyper()
    grid = cfg.grid
    if cfg.task == "binary":
        if len(d.classes) != 2:
            raise ValueError(f"binary task needs two classes, found {d.classes}")
        positive = d.classes[-1]
    else:
        positive = None
    report = RunReport(cfg.name, h.kernel.family, cfg.task, 0)
    for rep in range(cfg.repetitions):
        try:
            t0 = time.perf_counter()
            tr_idx, te_idx = data_mod.split_indices(d, cfg.split, rep)
            assert not np.intersect1d(tr_idx, te_idx).size, "train and test overlap"
            train = d.subset(tr_idx)
            t1 = time.perf_counter()
            best = grid_search(train, grid, h, cfg.folds, cfg.seed + rep, cfg.task, positive)
            t2 = time.perf_counter()
            kernel = h.kernel.with_width(best.sigma)
            final = StmHyper(r=best.r, C=best.C, eps=h.eps, max_outer=h.max_outer, kernel=kernel, qp_tol=h.qp_tol)
            blocks = assemble_gram(train.X, kernel).blocks
            machines, classes = fit_machines(blocks, train.y, np.arange(len(train)), final, cfg.task, positive)
            # test samples enter the kernel only after model selection
            test_X = d.X[te_idx]
            pred = predict_machines(machines, classes, lambda u: cross_blocks(train.X[u], test_X, kernel), len(te_idx))
            t3 = time.perf_counter()
        except Exception as exc:
            raise RepetitionError(rep, exc) from exc
        m = metrics(pred, d.y[te_idx], cfg.task, positive)
        report.train_size = len(tr_idx)
        report.repetitions.append({
            "rep": rep,
            "n_train": len(tr_idx),
            "n_test": len(te_idx),
            "C": best.C,
            "sigma": best.sigma if h.kernel.family != "linear" else None,
            "r": best.r,
            "cv_accuracy": best.accuracy,
            **m,
            "f_measure": f_measure(m),
            "seconds": {"split": t1 - t0, "grid_search": t2 - t1, "fit_evaluate": t3 - t2},
        })
        log.info("rep %d: accuracy %.4f (C=%g sigma=%g r=%d)", rep, m["accuracy"], best.C, best.sigma, best.r)
    if write:
        write_outputs(report, cfg.output_dir)
    return report


def results_csv(report: RunReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for r in report.repetitions:
        w.writerow(["" if r[k] is None else repr(r[k]) if isinstance(r[k], float) else r[k] for k in CSV_FIELDS])
    am, asd = report.accuracy
    fm, fsd = report.f_measure
    w.writerow(["mean", "", "", "", "", "", "", repr(am), repr(fm)])
    w.writerow(["std", "", "", "", "", "", "", repr(asd), repr(fsd)])
    return buf.getvalue()


def write_outputs(report: RunReport, output_dir) -> None:
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "results.csv").write_text(results_csv(report))
    (out / "results.json").write_text(json.dumps(report.to_dict(), indent=2))
    emit_plot_data([report], out / "plotdata.csv")


def emit_plot_data(reports: Sequence[RunReport], path) -> None:
    """Long-format rows: kernel, task (the report name), train_size, metric, mean, std."""
    if not reports:
        raise ValueError("no reports to emit")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["kernel", "task", "train_size", "metric", "mean", "std"])
    for rep in reports:
        for metric, (mean, std) in (("accuracy", rep.accuracy), ("f_measure", rep.f_measure)):
            w.writerow([rep.kernel, rep.name, rep.train_size, metric, repr(mean), repr(std)])
    Path(path).write_text(buf.getvalue())

