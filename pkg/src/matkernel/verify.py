"""Randomized property suites for the inner-product axioms and matrix kernels."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernels import KernelConfig, check_psd_kernel
from .matspace import check_cauchy_schwarz, inner_dot

FAMILY_CONFIGS = {
    "linear": KernelConfig("linear"),
    "hadamard_poly": KernelConfig("hadamard_poly", alpha=1.0, beta=3),
    "gaussian_cols": KernelConfig("gaussian_cols", gamma=0.5),
    "svd_matrix": KernelConfig("svd_matrix", base="rbf", sigma=1.0),
}


@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}" + (f": {self.detail}" if self.detail else "")


def inner_product_axioms(pairs: int = 1000, shape=(6, 4), seed: int = 0) -> list[Check]:
    rng = np.random.default_rng(seed)
    worst = {"symmetry": 0.0, "bilinearity": 0.0, "psd": 0.0, "cauchy_schwarz": 0.0}
    for _ in range(pairs):
        X, X2, Y = rng.standard_normal((3,) + tuple(shape))
        a, b = rng.standard_normal(2)
        XY = inner_dot(X, Y)
        worst["symmetry"] = max(worst["symmetry"], np.max(np.abs(inner_dot(Y, X) - XY.T)))
        lhs = inner_dot(a * X + b * X2, Y)
        rhs = a * XY + b * inner_dot(X2, Y)
        worst["bilinearity"] = max(worst["bilinearity"], np.max(np.abs(lhs - rhs)) / max(1.0, np.max(np.abs(rhs))))
        lam = np.linalg.eigvalsh(inner_dot(X, X))
        worst["psd"] = max(worst["psd"], -lam[0] / max(1.0, lam[-1]))
        cs = check_cauchy_schwarz(X, Y)
        worst["cauchy_schwarz"] = max(worst["cauchy_schwarz"], (cs.lhs - cs.rhs) / max(1.0, cs.rhs))
    return [
        Check("inner_dot symmetry", worst["symmetry"] <= 1e-12, f"max drift {worst['symmetry']:.2e}"),
        Check("inner_dot bilinearity", worst["bilinearity"] <= 1e-10, f"max rel error {worst['bilinearity']:.2e}"),
        Check("inner_dot PSD self-product", worst["psd"] <= 1e-9, f"worst scaled eigenvalue {-worst['psd']:.2e}"),
        Check("Cauchy-Schwarz inequality", worst["cauchy_schwarz"] <= 1e-9, f"worst scaled slack {worst['cauchy_schwarz']:.2e}"),
    ]


def kernel_properties(samples: int = 5, trials: int = 100, pairs: int = 200, shape=(4, 3), seed: int = 0) -> list[Check]:
    rng = np.random.default_rng(seed)
    checks = []
    for name, cfg in FAMILY_CONFIGS.items():
        Xs = rng.standard_normal((samples,) + tuple(shape))
        rep = check_psd_kernel(list(Xs), trials, cfg, seed)
        checks.append(Check(f"{name} PSD", rep.passed, f"min eigenvalue {min(rep.min_eig_per_trial):.2e}"))
        drift = 0.0
        for _ in range(pairs):
            X, Y = rng.standard_normal((2,) + tuple(shape))
            drift = max(drift, np.max(np.abs(cfg(X, Y) - cfg(Y, X).T)))
        checks.append(Check(f"{name} symmetry", drift <= 1e-10, f"max drift {drift:.2e}"))
    return checks


def run_all(seed: int = 0) -> list[Check]:
    return inner_product_axioms(seed=seed) + kernel_properties(seed=seed)
