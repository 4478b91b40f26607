"""Clustering agreement, image quality and cross-validation splits."""

from __future__ import annotations

import math

import numpy as np

from .errors import InputError


def _pairs(counts) -> float:
    counts = np.asarray(counts, dtype=np.int64)
    return float(np.sum(counts * (counts - 1) // 2))


def contingency(a, b) -> np.ndarray:
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape or a.ndim != 1:
        raise InputError(f"label vectors differ in shape: {a.shape} vs {b.shape}")
    if a.size == 0:
        raise InputError("label vectors are empty")
    _, ia = np.unique(a, return_inverse=True)
    _, ib = np.unique(b, return_inverse=True)
    table = np.zeros((ia.max() + 1, ib.max() + 1), dtype=np.int64)
    np.add.at(table, (ia, ib), 1)
    return table


def ari(a, b) -> float:
    """Adjusted Rand index of two labelings.

    Returns 1 when both partitions are trivial in the same way (all in one
    cluster, or all singletons), where the usual formula is 0/0.
    """
    table = contingency(a, b)
    n = int(table.sum())
    index = _pairs(table)
    rows = _pairs(table.sum(axis=1))
    cols = _pairs(table.sum(axis=0))
    total = n * (n - 1) / 2
    if total == 0:
        return 1.0
    expected = rows * cols / total
    maximum = 0.5 * (rows + cols)
    if maximum == expected:
        return 1.0
    return (index - expected) / (maximum - expected)


def mse(X, Y) -> float:
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if X.shape != Y.shape:
        raise InputError(f"images differ in shape: {X.shape} vs {Y.shape}")
    return float(np.mean((X - Y) ** 2))


def psnr(X, Y) -> float:
    """``-10 log10(MSE)`` for images in [0, 1]; ``inf`` for identical images."""
    err = mse(X, Y)
    return math.inf if err == 0 else -10.0 * math.log10(err)


def stratified_kfold(labels, k: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Split sample indices into ``k`` folds with per-class proportions preserved.

    Each class is shuffled and dealt round-robin, continuing the deal where
    the previous class stopped so fold sizes differ by at most one.
    """
    labels = np.asarray(labels)
    if k < 2 or k > labels.size:
        raise InputError(f"need 2 <= k <= n, got k={k}")
    folds = [[] for _ in range(k)]
    offset = 0
    for cls in np.unique(labels):
        idx = rng.permutation(np.flatnonzero(labels == cls))
        for j, i in enumerate(idx):
            folds[(offset + j) % k].append(int(i))
        offset += len(idx)
    return [np.sort(np.array(f, dtype=int)) for f in folds]
