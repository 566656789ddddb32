"""Kernelized support tensor machine trained by alternating dual solves.

The weight is a sum of r rank-one terms ``u_k v_k^T`` in feature space.
Holding the ``v_k`` fixed gives a standard SVM dual in ``alpha`` whose Gram
entries are Rayleigh quotients of the kernel blocks; holding the ``u_k``
fixed gives a second SVM dual in ``beta`` over the projected rows
``rho_k(i) = u_k^T Phi(X_i)``. The ``u_k`` are never formed explicitly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .kernels import BlockGram, KernelConfig, assemble_gram, cross_blocks
from .qp import DualProblem, solve_dual

DEGENERATE = 1e-12
FORMAT = "matkernel-stm"
VERSION = 1


@dataclass(frozen=True)
class StmHyper:
    r: int = 1
    C: float = 1.0
    eps: float = 1e-3
    max_outer: int = 20
    kernel: KernelConfig = field(default_factory=KernelConfig)
    qp_tol: float = 1e-3
    max_passes: int = 1000

    def __post_init__(self):
        if self.r < 1:
            raise ValueError("r must be >= 1")
        if self.C <= 0:
            raise ValueError("C must be > 0")
        if self.eps <= 0:
            raise ValueError("eps must be > 0")
        if self.max_outer < 1:
            raise ValueError("max_outer must be >= 1")


def init_v(r: int, c: int) -> np.ndarray:
    """Row k is the basis vector ``e_{k mod c}``."""
    V = np.zeros((r, c))
    V[np.arange(r), np.arange(r) % c] = 1.0
    return V


def _v_norms(V: np.ndarray) -> np.ndarray:
    norms = np.sum(V * V, axis=1)
    if np.any(norms <= DEGENERATE):
        raise ValueError("degenerate projection vector (squared norm <= 1e-12)")
    return norms


def u_step_gram(gram: BlockGram, y, V) -> np.ndarray:
    """``G_ij = y_i y_j sum_k v_k^T K(X_i, X_j) v_k / (v_k^T v_k)``."""
    V = np.atleast_2d(np.asarray(V, dtype=float))
    y = np.asarray(y, dtype=float)
    W = V / _v_norms(V)[:, None]
    BV = gram.blocks @ V.T  # (N, N, c, r)
    Q = np.einsum("ijak,ka->ij", BV, W)
    return np.outer(y, y) * Q


def feature_rows(gram: BlockGram, y, alpha, V) -> tuple[np.ndarray, np.ndarray]:
    """Projected rows ``rho[k, i] = u_k^T Phi(X_i)`` and ``u_norms[k] = u_k^T u_k``.

    ``rho`` has shape (r, N, c). Both vanish when ``alpha`` is all zero.
    """
    V = np.atleast_2d(np.asarray(V, dtype=float))
    norms = _v_norms(V)
    ay = np.asarray(alpha, dtype=float) * np.asarray(y, dtype=float)
    T = np.tensordot(ay, gram.blocks, axes=(0, 0))  # (N, c, c)
    rho = np.einsum("ka,iab->kib", V, T) / norms[:, None, None]
    # u_k^T u_k = sum_i a_i y_i rho_k(i) . v_k / (v_k^T v_k)
    u_norms = np.einsum("i,kib,kb->k", ay, rho, V) / norms
    return rho, u_norms


def v_step_gram(rho, u_norms, y) -> np.ndarray:
    """``G_ij = y_i y_j sum_k rho_k(i) . rho_k(j) / u_norms[k]`` over the
    terms with ``u_norms[k] > 1e-12``."""
    rho = np.asarray(rho, dtype=float)
    u_norms = np.asarray(u_norms, dtype=float)
    keep = u_norms > DEGENERATE
    if not keep.any():
        raise ValueError("every term has a vanishing u norm")
    Q = np.einsum("kia,kja,k->ij", rho[keep], rho[keep], 1.0 / u_norms[keep])
    y = np.asarray(y, dtype=float)
    return np.outer(y, y) * Q


def update_v(rho, beta, y, u_norms, v_prev) -> np.ndarray:
    """``v_k = sum_i beta_i y_i rho_k(i) / u_norms[k]``.

    Terms with a vanishing u norm keep their previous vector; vectors that
    collapse below 1e-12 squared norm are reset to their initial value.
    """
    v_prev = np.atleast_2d(np.asarray(v_prev, dtype=float))
    u_norms = np.asarray(u_norms, dtype=float)
    by = np.asarray(beta, dtype=float) * np.asarray(y, dtype=float)
    V = v_prev.copy()
    keep = u_norms > DEGENERATE
    V[keep] = np.einsum("i,kia->ka", by, np.asarray(rho)[keep]) / u_norms[keep, None]
    init = init_v(*V.shape)
    dead = np.sum(V * V, axis=1) <= DEGENERATE
    V[dead] = init[dead]
    return V


@dataclass
class StmModel:
    alpha: np.ndarray
    y: np.ndarray
    v: np.ndarray
    b: float
    kernel: KernelConfig
    train_refs: np.ndarray
    support: np.ndarray
    n_outer: int = 0
    converged: bool = True
    history: list = field(default_factory=list)


@dataclass
class _Fit:
    alpha: np.ndarray
    v: np.ndarray
    b: float
    n_outer: int
    converged: bool
    history: list


def _labels_pm1(labels) -> np.ndarray:
    y = np.asarray(labels, dtype=float)
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise ValueError("binary labels must be -1 or +1")
    if np.all(y == y[0]):
        raise ValueError("training set contains a single class")
    return y


def fit_gram(gram: BlockGram, labels, h: StmHyper) -> _Fit:
    """Alternating optimization on a precomputed block Gram.

    Each dual solve is warm-started from the previous outer iterate.
    """
    y = _labels_pm1(labels)
    V = init_v(h.r, gram.c)
    alpha_old = beta_old = None
    history = []
    for t in range(1, h.max_outer + 1):
        u_sol = solve_dual(DualProblem(u_step_gram(gram, y, V), y, h.C, h.qp_tol), h.max_passes, alpha_old)
        alpha = u_sol.alpha
        rho, u_norms = feature_rows(gram, y, alpha, V)
        if np.any(u_norms > DEGENERATE):
            v_sol = solve_dual(DualProblem(v_step_gram(rho, u_norms, y), y, h.C, h.qp_tol), h.max_passes, beta_old)
            beta = v_sol.alpha
            V_next = update_v(rho, beta, y, u_norms, V)
        else:
            beta, V_next = np.zeros_like(alpha), V
        d_alpha = np.inf if alpha_old is None else float(np.linalg.norm(alpha - alpha_old))
        d_beta = np.inf if beta_old is None else float(np.linalg.norm(beta - beta_old))
        history.append((d_alpha, d_beta))
        if d_alpha < h.eps and d_beta < h.eps:
            return _Fit(alpha, V, u_sol.b, t, True, history)
        if t == h.max_outer:
            return _Fit(alpha, V, u_sol.b, t, False, history)
        alpha_old, beta_old, V = alpha, beta, V_next


def train_binary(samples: Sequence, labels, h: StmHyper, gram: BlockGram | None = None) -> StmModel:
    """Train on matrices with labels in {-1, +1}.

    The returned model carries the last u-step ``alpha`` and bias together
    with the projection vectors that step was solved with.
    """
    Xs = np.stack([np.asarray(s, dtype=float) for s in samples])
    if gram is None:
        gram = assemble_gram(Xs, h.kernel)
    fit = fit_gram(gram, labels, h)
    return _make_model(fit, labels, Xs, np.arange(len(Xs)), h.kernel)


def _make_model(fit: _Fit, labels, Xs, index, kernel) -> StmModel:
    y = np.asarray(labels, dtype=float)
    sv = np.flatnonzero(fit.alpha > 0)
    return StmModel(
        alpha=fit.alpha[sv],
        y=y[sv],
        v=fit.v,
        b=fit.b,
        kernel=kernel,
        train_refs=Xs[sv],
        support=np.asarray(index)[sv],
        n_outer=fit.n_outer,
        converged=fit.converged,
        history=fit.history,
    )


def decide_blocks(alpha, y, V, b: float, cross: np.ndarray) -> np.ndarray:
    """Decision values from kernel blocks ``cross[j, t] = K(X_j, Z_t)``."""
    V = np.atleast_2d(V)
    ay = np.asarray(alpha) * np.asarray(y)
    if cross.shape[0] == 0:
        return np.full(cross.shape[1], float(b))
    T = np.tensordot(ay, cross, axes=(0, 0))  # (T, c, c)
    rho = np.einsum("ka,tab->ktb", V, T) / np.sum(V * V, axis=1)[:, None, None]
    return np.einsum("ktb,kb->t", rho, V) + b


def decision_values(m: StmModel, Xs: Sequence, cross: np.ndarray | None = None, chunk: int = 64) -> np.ndarray:
    Xs = np.stack([np.asarray(x, dtype=float) for x in Xs])
    if Xs.shape[1:] != m.train_refs.shape[1:] and len(m.train_refs):
        raise ValueError(f"shape mismatch: {Xs.shape[1:]} vs {m.train_refs.shape[1:]}")
    if cross is not None:
        return decide_blocks(m.alpha, m.y, m.v, m.b, cross)
    if len(m.alpha) == 0:
        return np.full(len(Xs), float(m.b))
    out = [
        decide_blocks(m.alpha, m.y, m.v, m.b, cross_blocks(m.train_refs, Xs[s : s + chunk], m.kernel))
        for s in range(0, len(Xs), chunk)
    ]
    return np.concatenate(out)


def decision_value(m: StmModel, X) -> float:
    return float(decision_values(m, [X])[0])


def predict(m: StmModel, Xs: Sequence) -> np.ndarray:
    """Sign of the decision value; exact zeros go to +1."""
    return np.where(decision_values(m, Xs) >= 0, 1, -1)


@dataclass
class OvoModel:
    classes: list
    pairs: list[tuple[int, int]]
    machines: list[StmModel]
    train_refs: np.ndarray


def ovo_train(samples: Sequence, labels, h: StmHyper, gram: BlockGram | None = None) -> OvoModel:
    """One binary machine per class pair; the lower class is the +1 side."""
    Xs = np.stack([np.asarray(s, dtype=float) for s in samples])
    labels = np.asarray(labels)
    classes = sorted(np.unique(labels).tolist())
    if len(classes) < 2:
        raise ValueError("need at least two classes")
    if gram is None:
        gram = assemble_gram(Xs, h.kernel)
    pairs, machines = [], []
    for a in range(len(classes)):
        for c in range(a + 1, len(classes)):
            idx = np.flatnonzero((labels == classes[a]) | (labels == classes[c]))
            y = np.where(labels[idx] == classes[a], 1.0, -1.0)
            fit = fit_gram(gram.subset(idx), y, h)
            machines.append(_make_model(fit, y, Xs[idx], idx, h.kernel))
            pairs.append((a, c))
    return OvoModel(classes, pairs, machines, Xs)


def ovo_vote(pairs, values: np.ndarray, n_classes: int) -> np.ndarray:
    """Majority vote over pair decisions ``values[p, t]``.

    Ties go to the class with the larger summed decision magnitude, then to
    the lower class index.
    """
    T = values.shape[1]
    votes = np.zeros((T, n_classes))
    mass = np.zeros((T, n_classes))
    for (a, c), f in zip(pairs, values):
        win = np.where(f >= 0, a, c)
        votes[np.arange(T), win] += 1
        mass[np.arange(T), win] += np.abs(f)
    out = np.empty(T, dtype=int)
    for t in range(T):
        # lexsort: last key is primary; earlier index wins remaining ties
        order = np.lexsort((np.arange(n_classes), -mass[t], -votes[t]))
        out[t] = order[0]
    return out


def ovo_decisions(m: OvoModel, Xs: Sequence) -> np.ndarray:
    # kernel blocks are shared: evaluate each support sample once across machines
    Xs = np.stack([np.asarray(x, dtype=float) for x in Xs])
    kernel = m.machines[0].kernel
    c = kernel.block_size(m.train_refs.shape[1:])
    cross = np.zeros((len(m.train_refs), len(Xs), c, c))
    used = np.unique(np.concatenate([mc.support for mc in m.machines]))
    if used.size:
        cross[used] = cross_blocks(m.train_refs[used], Xs, kernel)
    return np.stack([decision_values(mc, Xs, cross=cross[mc.support]) for mc in m.machines])


def ovo_predict_many(m: OvoModel, Xs: Sequence) -> np.ndarray:
    idx = ovo_vote(m.pairs, ovo_decisions(m, Xs), len(m.classes))
    return np.asarray(m.classes)[idx]


def ovo_predict(m: OvoModel, X):
    return ovo_predict_many(m, [X])[0]


def model_to_dict(m: StmModel | OvoModel) -> dict:
    if isinstance(m, OvoModel):
        return {
            "format": FORMAT,
            "version": VERSION,
            "kind": "ovo",
            "classes": list(m.classes),
            "pairs": [list(p) for p in m.pairs],
            "machines": [_stm_dict(mc) for mc in m.machines],
            "train_shape": list(m.train_refs.shape[1:]),
        }
    return {"format": FORMAT, "version": VERSION, "kind": "binary", **_stm_dict(m)}


def _stm_dict(m: StmModel) -> dict:
    return {
        "alpha": m.alpha.tolist(),
        "y": m.y.tolist(),
        "v": m.v.tolist(),
        "b": m.b,
        "kernel": m.kernel.to_dict(),
        "support": m.support.tolist(),
        "train_refs": m.train_refs.tolist(),
        "n_outer": m.n_outer,
        "converged": m.converged,
    }


def _stm_from(d: dict) -> StmModel:
    refs = np.asarray(d["train_refs"], dtype=float)
    return StmModel(
        alpha=np.asarray(d["alpha"], dtype=float),
        y=np.asarray(d["y"], dtype=float),
        v=np.asarray(d["v"], dtype=float).reshape(-1, len(d["v"][0])),
        b=float(d["b"]),
        kernel=KernelConfig(**d["kernel"]),
        train_refs=refs,
        support=np.asarray(d["support"], dtype=int),
        n_outer=d.get("n_outer", 0),
        converged=d.get("converged", True),
    )


def model_from_dict(d: dict) -> StmModel | OvoModel:
    if d.get("format") != FORMAT:
        raise ValueError(f"not a {FORMAT} document")
    if d.get("version") != VERSION:
        raise ValueError(f"unsupported model version {d.get('version')}")
    if d["kind"] == "binary":
        return _stm_from(d)
    machines = [_stm_from(x) for x in d["machines"]]
    shape = tuple(d["train_shape"])
    n_train = 1 + max((int(s) for mc in machines for s in mc.support), default=-1)
    refs = np.zeros((n_train,) + shape)
    for mc in machines:
        if len(mc.support):
            refs[mc.support] = mc.train_refs
    return OvoModel(d["classes"], [tuple(p) for p in d["pairs"]], machines, refs)


def save_model(m: StmModel | OvoModel, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(m)))


def load_model(path) -> StmModel | OvoModel:
    return model_from_dict(json.loads(Path(path).read_text()))
