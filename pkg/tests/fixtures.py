"""Synthetic data sets shared by the unit and acceptance tests."""

import numpy as np

from matkernel.bench import synthetic_dataset


def vector_set(seed=0, n=60, dim=5, noisy=False, flip_frac=0.1):
    """Labels from a random hyperplane through the origin.

    The clean set keeps only points with ``|w.x| >= 1``; the noisy set keeps
    every draw and flips ``flip_frac`` of the labels.
    """
    rng = np.random.default_rng(seed)
    w = rng.standard_normal(dim)
    X, y = [], []
    while len(X) < n:
        x = rng.standard_normal(dim)
        s = w @ x
        if noisy or abs(s) >= 1:
            X.append(x)
            y.append(1.0 if s > 0 else -1.0)
    X, y = np.array(X), np.array(y)
    if noisy:
        y[rng.choice(n, int(n * flip_frac), replace=False)] *= -1
    return X, y


def matrix_set(n_classes=2, seed=0):
    """Ten 3x3 samples per class around distinct low-rank prototypes."""
    return synthetic_dataset(n_per_class=10, shape=(3, 3), n_classes=n_classes, noise=0.1, seed=seed)
