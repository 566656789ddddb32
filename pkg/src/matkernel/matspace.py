"""Matrix-valued inner products and the norms used to reason about them.

A matrix inner product maps a pair of m x n matrices to an n x n matrix.
Two concrete products live here: the plain ``X^T Y`` product and the
weighted integral product on matrix polynomials.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

# eigenvalue floor for PSD tests, relative to max(1, lambda_max)
PSD_RTOL = 1e-9


def as_mat(M, name: str = "M") -> np.ndarray:
    """Coerce to a finite 2-D float array."""
    A = np.asarray(M, dtype=float)
    if A.ndim != 2 or A.shape[0] < 1 or A.shape[1] < 1:
        raise ValueError(f"{name} must be a non-empty 2-D matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError(f"{name} has non-finite entries")
    return A


def _same_shape(X: np.ndarray, Y: np.ndarray) -> None:
    if X.shape != Y.shape:
        raise ValueError(f"dimension mismatch: {X.shape} vs {Y.shape}")


def frobenius_norm(M) -> float:
    M = as_mat(M)
    return float(np.sqrt(np.sum(M * M)))


def spectral_norm(M) -> float:
    """Square root of the largest eigenvalue of ``M^T M``."""
    M = as_mat(M)
    lam = np.linalg.eigvalsh(M.T @ M)
    return float(np.sqrt(max(lam[-1], 0.0)))


def is_psd(S, rtol: float = PSD_RTOL) -> bool:
    """Symmetric PSD test with a scale-aware eigenvalue floor."""
    S = np.asarray(S, dtype=float)
    lam = np.linalg.eigvalsh((S + S.T) / 2)
    return bool(lam[0] >= -rtol * max(1.0, lam[-1]))


def inner_dot(X, Y) -> np.ndarray:
    """The product ``X^T Y`` of two same-shaped matrices."""
    X, Y = as_mat(X, "X"), as_mat(Y, "Y")
    _same_shape(X, Y)
    return X.T @ Y


@dataclass(frozen=True)
class MatPoly:
    """Polynomial with n x n matrix coefficients, lowest degree first."""

    coeffs: tuple[np.ndarray, ...]

    def __init__(self, coeffs: Sequence):
        blocks = tuple(as_mat(c, "coefficient") for c in coeffs)
        if not blocks:
            raise ValueError("MatPoly needs at least one coefficient")
        n = blocks[0].shape[0]
        if any(b.shape != (n, n) for b in blocks):
            raise ValueError("all coefficients must be n x n with a common n")
        object.__setattr__(self, "coeffs", blocks)

    @property
    def n(self) -> int:
        return self.coeffs[0].shape[0]

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def __call__(self, x: float) -> np.ndarray:
        # Horner on matrix coefficients
        out = np.zeros_like(self.coeffs[0])
        for c in reversed(self.coeffs):
            out = out * x + c
        return out


@dataclass(frozen=True)
class WeightFn:
    """Symmetric PSD matrix weight on the interval ``(a, b)``."""

    fn: Callable[[float], np.ndarray]
    a: float = 0.0
    b: float = 1.0

    def __post_init__(self):
        if not self.a < self.b:
            raise ValueError("interval must satisfy a < b")

    def __call__(self, x: float) -> np.ndarray:
        W = np.atleast_2d(np.asarray(self.fn(x), dtype=float))
        if np.max(np.abs(W - W.T), initial=0.0) > 1e-12:
            raise ValueError(f"weight is not symmetric at x={x}")
        lam = np.linalg.eigvalsh(W)
        if lam[0] < -1e-10:
            raise ValueError(f"weight is not PSD at x={x} (min eigenvalue {lam[0]:.3g})")
        return W

    @classmethod
    def constant(cls, W, a: float = 0.0, b: float = 1.0) -> "WeightFn":
        W = as_mat(W, "W")
        return cls(lambda x: W, a, b)


def inner_poly(P: MatPoly, Q: MatPoly, W: WeightFn, quad_order: int) -> np.ndarray:
    """Gauss-Legendre value of the integral of ``P(x)^T W(x) Q(x)`` over ``(a, b)``.

    An order-q rule integrates polynomials up to degree 2q - 1 exactly, so
    ``quad_order >= (deg P + deg Q + deg W) / 2 + 1`` is always enough.
    """
    if quad_order < 1:
        raise ValueError("quad_order must be at least 1")
    if P.n != Q.n:
        raise ValueError(f"block size mismatch: {P.n} vs {Q.n}")
    nodes, weights = np.polynomial.legendre.leggauss(quad_order)
    half = (W.b - W.a) / 2
    mid = (W.b + W.a) / 2
    out = np.zeros((P.n, P.n))
    for t, w in zip(nodes, weights):
        x = mid + half * t
        Wx = W(x)
        if Wx.shape != (P.n, P.n):
            raise ValueError(f"weight block is {Wx.shape}, expected {(P.n, P.n)}")
        out += w * (P(x).T @ Wx @ Q(x))
    return half * out


@dataclass(frozen=True)
class CauchySchwarzReport:
    lhs: float
    rhs: float
    holds: bool


def check_cauchy_schwarz(X, Y, inner: Callable = inner_dot) -> CauchySchwarzReport:
    """Compare ``||<X,Y>||_2^2`` against ``||<X,X>||_2 * ||<Y,Y>||_2``."""
    lhs = spectral_norm(inner(X, Y)) ** 2
    rhs = spectral_norm(inner(X, X)) * spectral_norm(inner(Y, Y))
    return CauchySchwarzReport(lhs, rhs, lhs <= rhs + 1e-9 * max(1.0, rhs))
