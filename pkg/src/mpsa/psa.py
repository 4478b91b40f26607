"""Gaussian models with piecewise-constant covariance spectra.

A *composition* ``gamma = (g_1, ..., g_d)`` of the dimension ``p`` gives the
multiplicities of the distinct covariance eigenvalues, from the largest block
to the smallest. Compositions are plain tuples of positive ints.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InputError, NumericalError
from .linalg import SpectralDecomposition

LOG_2PI = math.log(2.0 * math.pi)


def as_composition(gamma, p: int | None = None) -> tuple[int, ...]:
    """Validate ``gamma`` and return it as a tuple of ints."""
    try:
        parts = tuple(int(g) for g in gamma)
    except TypeError as exc:
        raise InputError(f"composition must be a sequence of ints, got {gamma!r}") from exc
    if not parts or any(g < 1 for g in parts):
        raise InputError(f"composition parts must be positive, got {parts}")
    if any(int(g) != g for g in gamma):
        raise InputError(f"composition parts must be integers, got {gamma!r}")
    if p is not None and sum(parts) != p:
        raise InputError(f"composition {parts} does not sum to {p}")
    return parts


def full_type(p: int) -> tuple[int, ...]:
    return (1,) * p


def spherical_type(p: int) -> tuple[int, ...]:
    return (p,)


def ppca_type(q: int, p: int) -> tuple[int, ...]:
    """``(1^q, p - q)``; the spherical type when ``q == 0``."""
    if not 0 <= q < p:
        raise InputError(f"need 0 <= q < p, got q={q}, p={p}")
    return (1,) * q + (p - q,)


def format_composition(gamma) -> str:
    """Compact text form, e.g. ``(1^9,55)``."""
    out, i = [], 0
    gamma = tuple(gamma)
    while i < len(gamma):
        j = i
        while j < len(gamma) and gamma[j] == gamma[i]:
            j += 1
        run = j - i
        out.append(f"{gamma[i]}^{run}" if run > 1 and gamma[i] == 1 else ",".join([str(gamma[i])] * run))
        i = j
    return "(" + ",".join(out) + ")"


def kappa_psa(gamma) -> int:
    """Number of free parameters of a PSA model: ``p + d + (p^2 - sum g_k^2)/2``."""
    gamma = as_composition(gamma)
    p = sum(gamma)
    return p + len(gamma) + (p * p - sum(g * g for g in gamma)) // 2


def _block_slices(gamma):
    q = np.concatenate(([0], np.cumsum(gamma)))
    return [slice(int(a), int(b)) for a, b in zip(q[:-1], q[1:])]


def block_average(eigenvalues, gamma) -> np.ndarray:
    """Average descending eigenvalues within the blocks of ``gamma``."""
    ell = np.asarray(eigenvalues, dtype=float)
    gamma = as_composition(gamma)
    if ell.ndim != 1 or ell.shape[0] != sum(gamma):
        raise InputError(f"{ell.shape[0] if ell.ndim == 1 else ell.shape} eigenvalues for composition of {sum(gamma)}")
    starts = np.concatenate(([0], np.cumsum(gamma)[:-1]))
    return np.add.reduceat(ell, starts) / np.asarray(gamma, dtype=float)


@dataclass(frozen=True)
class PsaEstimate:
    """Closed-form PSA fit.

    ``basis`` holds the eigenvectors of the source scatter as columns, grouped
    by block in the order of ``composition``.
    """

    composition: tuple[int, ...]
    block_eigenvalues: np.ndarray
    basis: np.ndarray
    mean: np.ndarray

    @property
    def dim(self) -> int:
        return int(self.mean.shape[0])

    def eigenvalues(self) -> np.ndarray:
        """Block eigenvalues expanded to length ``p``."""
        return np.repeat(self.block_eigenvalues, self.composition)

    def block_basis(self, k: int) -> np.ndarray:
        return self.basis[:, _block_slices(self.composition)[k]]

    def projector(self, k: int) -> np.ndarray:
        Q = self.block_basis(k)
        return Q @ Q.T

    def covariance(self) -> np.ndarray:
        V = self.basis
        return (V * self.eigenvalues()) @ V.T


def psa_mle(S: SpectralDecomposition, mean, gamma) -> PsaEstimate:
    """Maximum-likelihood PSA covariance of type ``gamma`` from a decomposed scatter."""
    gamma = as_composition(gamma, S.dim)
    return PsaEstimate(
        composition=gamma,
        block_eigenvalues=block_average(S.eigenvalues, gamma),
        basis=S.eigenvectors,
        mean=np.asarray(mean, dtype=float),
    )


def psa_max_loglik(eigenvalues, gamma, n) -> float:
    """Maximized log-likelihood ``-(n/2)(p ln 2pi + sum g_k ln lambda_k + p)``."""
    lam = block_average(eigenvalues, gamma)
    if np.any(lam <= 0):
        raise NumericalError("block eigenvalue is not positive")
    p = len(eigenvalues)
    return -0.5 * n * (p * LOG_2PI + float(np.dot(gamma, np.log(lam))) + p)


def bic(gamma, max_loglik: float, n) -> float:
    return kappa_psa(gamma) * math.log(n) - 2.0 * max_loglik


def eigengap_threshold(n) -> float:
    """Relative-eigengap threshold below which two sample eigenvalues are merged.

    ``2 (1 - n^(2/n) + n^(1/n) sqrt(n^(2/n) - 1))``, evaluated with ``expm1``
    so that large ``n`` does not cancel catastrophically.
    """
    if n < 2:
        raise InputError(f"threshold needs n >= 2, got {n}")
    a = math.log(n) / n
    e2 = math.expm1(2.0 * a)
    return 2.0 * (-e2 + math.exp(a) * math.sqrt(e2))


def relative_gaps(eigenvalues) -> np.ndarray:
    ell = np.asarray(eigenvalues, dtype=float)
    return (ell[:-1] - ell[1:]) / ell[:-1]


def _merge_boundaries(p: int, merged) -> tuple[int, ...]:
    # merged[j] == True glues eigenvalue j to eigenvalue j+1
    parts, run = [], 1
    for j in range(p - 1):
        if merged[j]:
            run += 1
        else:
            parts.append(run)
            run = 1
    parts.append(run)
    return tuple(parts)


def candidates_relative(eigenvalues, n_eff) -> list[tuple[int, ...]]:
    """Single candidate merging every adjacent pair with gap below the threshold."""
    ell = np.asarray(eigenvalues, dtype=float)
    gaps = relative_gaps(ell)
    return [_merge_boundaries(len(ell), gaps < eigengap_threshold(n_eff))]


def candidates_hierarchical(eigenvalues) -> list[tuple[int, ...]]:
    """Nested chain of ``p`` compositions from single-linkage on relative gaps.

    Adjacent blocks are merged in increasing order of the relative gap at
    their boundary; equal gaps are merged lowest index first.
    """
    ell = np.asarray(eigenvalues, dtype=float)
    p = len(ell)
    gaps = relative_gaps(ell)
    order = np.argsort(gaps, kind="stable")
    merged = np.zeros(p - 1, dtype=bool)
    chain = [_merge_boundaries(p, merged)]
    for j in order:
        merged[j] = True
        chain.append(_merge_boundaries(p, merged))
    return chain


def upper_neighbors(gamma) -> list[tuple[int, ...]]:
    """Compositions obtained by splitting one block in two (``p - d`` of them)."""
    gamma = as_composition(gamma)
    out = []
    for k, g in enumerate(gamma):
        for a in range(1, g):
            out.append(gamma[:k] + (a, g - a) + gamma[k + 1:])
    return out


def lower_neighbors(gamma) -> list[tuple[int, ...]]:
    """Compositions obtained by merging two adjacent blocks (``d - 1`` of them)."""
    gamma = as_composition(gamma)
    return [gamma[:k] + (gamma[k] + gamma[k + 1],) + gamma[k + 2:] for k in range(len(gamma) - 1)]


def hdmi_dimension(eigenvalues, sigma2: float) -> int:
    """Intrinsic dimension whose tail-eigenvalue mean is closest to ``sigma2``."""
    ell = np.asarray(eigenvalues, dtype=float)
    p = len(ell)
    tail_sums = np.cumsum(ell[::-1])[::-1]
    tail_means = tail_sums / np.arange(p, 0, -1)
    return int(np.argmin(np.abs(sigma2 - tail_means)))
