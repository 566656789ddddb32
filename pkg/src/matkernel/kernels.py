"""Matrix-valued kernels, SVD features, and block Gram assembly.

Every kernel maps a pair of same-shaped matrices to a square block: n x n
for the linear, Hadamard-polynomial and column-Gaussian families, and
c x c (c = min(m, n)) for the SVD matrix kernel.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .matspace import as_mat, inner_dot

# magnitudes this close (relative) count as a tie in the sign convention
SIGN_TIE_RTOL = 1e-12

FAMILIES = ("linear", "hadamard_poly", "gaussian_cols", "svd_matrix")
BASES = ("rbf", "poly")


def _pair(X, Y) -> tuple[np.ndarray, np.ndarray]:
    X, Y = as_mat(X, "X"), as_mat(Y, "Y")
    if X.shape != Y.shape:
        raise ValueError(f"shape mismatch: {X.shape} vs {Y.shape}")
    return X, Y


def kernel_linear(X, Y) -> np.ndarray:
    return inner_dot(X, Y)


def kernel_hadamard_poly(X, Y, alpha: float = 0.0, beta: int = 1) -> np.ndarray:
    """Entrywise ``beta``-th power of ``X^T Y + alpha I``."""
    X, Y = _pair(X, Y)
    G = X.T @ Y
    if alpha:
        G = G + alpha * np.eye(G.shape[0])
    return G**beta


def _sq_dists(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Squared distances between the columns of A and the columns of B."""
    d = np.sum(A * A, axis=0)[:, None] + np.sum(B * B, axis=0)[None, :] - 2 * (A.T @ B)
    return np.maximum(d, 0.0)


def kernel_gaussian_cols(X, Y, gamma: float = 1.0) -> np.ndarray:
    """Entry (i, j) is ``exp(-gamma ||X[:, i] - Y[:, j]||^2)``."""
    X, Y = _pair(X, Y)
    return np.exp(-gamma * _sq_dists(X, Y))


@dataclass(frozen=True)
class SvdFeatures:
    """Stacked singular vectors: column i of ``W`` is ``[U[:, i]; V[:, i]]``."""

    W: np.ndarray
    sigma: np.ndarray
    m: int

    @property
    def U(self) -> np.ndarray:
        return self.W[: self.m]

    @property
    def V(self) -> np.ndarray:
        return self.W[self.m :]


def svd_features(X) -> SvdFeatures:
    """Thin SVD with a deterministic sign convention.

    Each singular pair is flipped so that the largest-magnitude entry of the
    left vector is positive (first such row on ties). The zero matrix maps to
    the identity completion.
    """
    X = as_mat(X, "X")
    m, n = X.shape
    c = min(m, n)
    if not np.any(X):
        U, s, V = np.eye(m)[:, :c], np.zeros(c), np.eye(n)[:, :c]
    else:
        U, s, Vt = np.linalg.svd(X, full_matrices=False)
        V = Vt.T
        mag = np.abs(U)
        lead = np.argmax(mag >= mag.max(axis=0) * (1 - SIGN_TIE_RTOL), axis=0)
        flip = np.where(U[lead, np.arange(c)] < 0, -1.0, 1.0)
        U = U * flip
        V = V * flip
    return SvdFeatures(np.vstack([U, V]), s, m)


def _base_matrix(A: np.ndarray, B: np.ndarray, base: str, sigma: float) -> np.ndarray:
    # base kernel between the columns of A and the columns of B
    if base == "rbf":
        return np.exp(-sigma * _sq_dists(A, B))
    if base == "poly":
        return (A.T @ B + sigma) ** 2
    raise ValueError(f"unknown base kernel {base!r}")


@dataclass(frozen=True)
class KernelConfig:
    """A configured matrix-kernel family; instances are callable on a pair.

    ``alpha``/``beta`` parametrize ``hadamard_poly``, ``gamma`` parametrizes
    ``gaussian_cols``, and ``base``/``sigma`` the vector kernel used by
    ``svd_matrix`` (rbf: ``exp(-sigma ||u-v||^2)``, poly: ``(u.v + sigma)^2``).
    """

    family: str = "linear"
    alpha: float = 0.0
    beta: int = 1
    gamma: float = 1.0
    base: str = "poly"
    sigma: float = 1.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if int(self.beta) != self.beta or self.beta < 1:
            raise ValueError("beta must be a positive integer")
        object.__setattr__(self, "beta", int(self.beta))
        if self.gamma <= 0:
            raise ValueError("gamma must be > 0")
        if self.base not in BASES:
            raise ValueError(f"unknown base kernel {self.base!r}")
        if self.sigma <= 0:
            raise ValueError("sigma must be > 0")

    def __call__(self, X, Y) -> np.ndarray:
        if self.family == "linear":
            return kernel_linear(X, Y)
        if self.family == "hadamard_poly":
            return kernel_hadamard_poly(X, Y, self.alpha, self.beta)
        if self.family == "gaussian_cols":
            return kernel_gaussian_cols(X, Y, self.gamma)
        return kernel_svd_matrix(X, Y, self)

    def block_size(self, shape: tuple[int, int]) -> int:
        m, n = shape
        return min(m, n) if self.family == "svd_matrix" else n

    def with_width(self, value: float) -> "KernelConfig":
        """Copy with the family's grid-searched width/offset parameter set."""
        if self.family == "svd_matrix":
            return replace(self, sigma=value)
        if self.family == "gaussian_cols":
            return replace(self, gamma=value)
        if self.family == "hadamard_poly":
            return replace(self, alpha=value)
        return self

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "alpha": self.alpha,
            "beta": self.beta,
            "gamma": self.gamma,
            "base": self.base,
            "sigma": self.sigma,
        }


def kernel_svd_matrix(X, Y, cfg: KernelConfig) -> np.ndarray:
    """Base kernel between stacked singular-vector columns of X and Y."""
    X, Y = _pair(X, Y)
    return _base_matrix(svd_features(X).W, svd_features(Y).W, cfg.base, cfg.sigma)


@dataclass(frozen=True)
class SumKernel:
    """Nonnegative combination of kernels, itself a kernel."""

    terms: tuple[tuple[float, Callable], ...]

    def __post_init__(self):
        if not self.terms or any(w < 0 for w, _ in self.terms):
            raise ValueError("SumKernel needs nonnegative weights")

    def __call__(self, X, Y) -> np.ndarray:
        return sum(w * k(X, Y) for w, k in self.terms)


@dataclass
class BlockGram:
    """``blocks[i, j]`` holds the c x c kernel block ``K(X_i, X_j)``."""

    blocks: np.ndarray

    @property
    def N(self) -> int:
        return self.blocks.shape[0]

    @property
    def c(self) -> int:
        return self.blocks.shape[2]

    def __getitem__(self, ij):
        return self.blocks[ij]

    def subset(self, idx) -> "BlockGram":
        idx = np.asarray(idx)
        return BlockGram(self.blocks[np.ix_(idx, idx)])


def _stack(samples) -> np.ndarray:
    arr = [as_mat(s, "sample") for s in samples]
    if not arr:
        raise ValueError("need at least one sample")
    shape = arr[0].shape
    if any(a.shape != shape for a in arr):
        raise ValueError("samples have heterogeneous shapes")
    return np.stack(arr)


def _svd_stack(Xs: np.ndarray) -> np.ndarray:
    return np.stack([svd_features(X).W for X in Xs])


def cross_blocks(left: Sequence, right: Sequence, kernel: Callable) -> np.ndarray:
    """Array of shape (len(left), len(right), c, c) with ``kernel(left[i], right[j])``."""
    A, B = _stack(left), _stack(right)
    if A.shape[1:] != B.shape[1:]:
        raise ValueError(f"shape mismatch: {A.shape[1:]} vs {B.shape[1:]}")
    if isinstance(kernel, KernelConfig):
        return _cross_config(A, B, kernel)
    return np.stack([np.stack([kernel(x, y) for y in B]) for x in A])


def _cross_config(A: np.ndarray, B: np.ndarray, cfg: KernelConfig) -> np.ndarray:
    # vectorized over sample pairs; entries match the per-pair kernel functions
    if cfg.family in ("linear", "hadamard_poly"):
        G = np.einsum("pmi,qmj->pqij", A, B)
        if cfg.family == "hadamard_poly":
            if cfg.alpha:
                G = G + cfg.alpha * np.eye(G.shape[-1])
            G = G**cfg.beta
        return G
    if cfg.family == "gaussian_cols":
        return np.exp(-cfg.gamma * _pair_sq_dists(A, B))
    WA, WB = _svd_stack(A), _svd_stack(B)
    if cfg.base == "poly":
        return (np.einsum("pmi,qmj->pqij", WA, WB) + cfg.sigma) ** 2
    return np.exp(-cfg.sigma * _pair_sq_dists(WA, WB))


def _pair_sq_dists(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    na = np.sum(A * A, axis=1)
    nb = np.sum(B * B, axis=1)
    d = na[:, None, :, None] + nb[None, :, None, :] - 2 * np.einsum("pmi,qmj->pqij", A, B)
    return np.maximum(d, 0.0)


def assemble_gram(samples: Sequence, kernel: Callable, workers: int = 1) -> BlockGram:
    """Block Gram over ``samples``; the lower triangle is the block transpose of the upper."""
    Xs = _stack(samples)
    N = len(Xs)
    feats = Xs
    if isinstance(kernel, KernelConfig) and kernel.family == "svd_matrix":
        feats = _svd_stack(Xs)

    def row(i: int) -> np.ndarray:
        if isinstance(kernel, KernelConfig):
            if kernel.family == "svd_matrix":
                W = feats[i : i + 1]
                rest = feats[i:]
                if kernel.base == "poly":
                    return (np.einsum("pmi,qmj->pqij", W, rest)[0] + kernel.sigma) ** 2
                return np.exp(-kernel.sigma * _pair_sq_dists(W, rest)[0])
            return _cross_config(Xs[i : i + 1], Xs[i:], kernel)[0]
        return np.stack([kernel(Xs[i], Xs[j]) for j in range(i, N)])

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            rows = list(pool.map(row, range(N)))
    else:
        rows = [row(i) for i in range(N)]
    c = rows[0].shape[-1]
    blocks = np.empty((N, N, c, c))
    for i, r in enumerate(rows):
        blocks[i, i:] = r
        blocks[i + 1 :, i] = np.swapaxes(r[1:], -1, -2)
    return BlockGram(blocks)


@dataclass
class PsdKernelReport:
    min_eig_per_trial: list[float] = field(default_factory=list)
    passed: bool = True


def combine_blocks(gram: BlockGram, coeffs) -> np.ndarray:
    """``sum_ij a_i a_j K(X_i, X_j)``."""
    a = np.asarray(coeffs, dtype=float)
    return np.einsum("i,j,ijab->ab", a, a, gram.blocks)


def check_psd_kernel(samples: Sequence, trials: int, kernel: Callable, seed: int = 0) -> PsdKernelReport:
    """Randomized PSD test: for each trial draw coefficients in (-1, 1) and
    require ``sum_ij a_i a_j K(X_i, X_j)`` to be PSD up to
    ``-1e-8 * max(1, lambda_max)``."""
    gram = assemble_gram(samples, kernel)
    rng = np.random.default_rng(seed)
    report = PsdKernelReport()
    for _ in range(trials):
        S = combine_blocks(gram, rng.uniform(-1.0, 1.0, gram.N))
        lam = np.linalg.eigvalsh((S + S.T) / 2)
        report.min_eig_per_trial.append(float(lam[0]))
        if lam[0] < -1e-8 * max(1.0, lam[-1]):
            report.passed = False
    return report
