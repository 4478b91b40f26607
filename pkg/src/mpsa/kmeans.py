"""K-Means (k-means++ seeding, Lloyd iterations) used to initialize EM."""

from __future__ import annotations

import numpy as np

from .errors import InputError


def _sq_dists(X, centers, x_sq=None):
    if x_sq is None:
        x_sq = np.einsum("ij,ij->i", X, X)
    c_sq = np.einsum("ij,ij->i", centers, centers)
    d2 = x_sq[:, None] - 2.0 * X @ centers.T + c_sq[None, :]
    return np.maximum(d2, 0.0)


def kmeans_plusplus(X, k: int, rng: np.random.Generator) -> np.ndarray:
    """D^2-weighted seeding of ``k`` centers among the rows of ``X``."""
    n = X.shape[0]
    idx = [int(rng.integers(n))]
    d2 = np.sum((X - X[idx[0]]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total > 0:
            i = int(rng.choice(n, p=d2 / total))
        else:
            i = int(rng.integers(n))
        idx.append(i)
        d2 = np.minimum(d2, np.sum((X - X[i]) ** 2, axis=1))
    return X[idx].copy()


def lloyd(X, centers, max_iter: int = 300):
    """Lloyd iterations until the assignment stops changing.

    Returns ``(labels, centers, inertia)`` with 0-based labels. A cluster
    that empties is moved onto the point farthest from its current center.
    """
    k = centers.shape[0]
    centers = centers.copy()
    x_sq = np.einsum("ij,ij->i", X, X)
    labels = None
    for _ in range(max_iter):
        d2 = _sq_dists(X, centers, x_sq)
        new = np.argmin(d2, axis=1)
        counts = np.bincount(new, minlength=k)
        for c in np.flatnonzero(counts == 0):
            spread = d2[np.arange(len(X)), new].copy()
            spread[counts[new] <= 1] = -1.0
            far = int(np.argmax(spread))
            counts[new[far]] -= 1
            new[far] = c
            counts[c] = 1
            d2[far, c] = 0.0
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        sums = np.zeros_like(centers)
        np.add.at(sums, labels, X)
        centers = sums / counts[:, None]
    d2 = _sq_dists(X, centers, x_sq)
    inertia = float(d2[np.arange(len(X)), labels].sum())
    return labels, centers, inertia


def kmeans(X, k: int, rng: np.random.Generator, restarts: int = 10, max_iter: int = 300):
    """Best of ``restarts`` k-means++/Lloyd runs by within-cluster sum of squares."""
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    if k < 1 or n < k:
        raise InputError(f"cannot form {k} clusters from {n} samples")
    if len(np.unique(X, axis=0)) < k:
        raise InputError(f"fewer than {k} distinct points")
    best = None
    for _ in range(max(1, restarts)):
        result = lloyd(X, kmeans_plusplus(X, k, rng), max_iter)
        if best is None or result[2] < best[2]:
            best = result
    return best
