"""Dense symmetric-matrix helpers used by the M-step.

Eigendecompositions are returned with eigenvalues sorted in descending order
and a deterministic sign/tie convention, so that downstream block averaging
and serialized models do not depend on the LAPACK build.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateWeightsError, InputError, NumericalError

SYMMETRY_RTOL = 1e-10
JACOBI_MAX_SWEEPS = 100
JACOBI_TOL = 1e-12


@dataclass(frozen=True)
class SpectralDecomposition:
    """Descending eigenvalues and matching orthonormal eigenvectors (columns)."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def dim(self) -> int:
        return self.eigenvalues.shape[0]

    def reconstruct(self) -> np.ndarray:
        V = self.eigenvectors
        return (V * self.eigenvalues) @ V.T


def _check_symmetric(A) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InputError(f"expected a square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise InputError("matrix has non-finite entries")
    scale = np.max(np.abs(A)) if A.size else 0.0
    if A.size and np.max(np.abs(A - A.T)) > SYMMETRY_RTOL * scale:
        raise InputError("matrix is not symmetric")
    return A


def _canonical(eigenvalues: np.ndarray, V: np.ndarray) -> SpectralDecomposition:
    # Sign: largest-magnitude entry of each eigenvector is positive.
    # Order: eigenvalue descending, exact ties by index of that entry.
    lead = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[lead, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    V = V * signs
    order = np.lexsort((lead, -eigenvalues))
    return SpectralDecomposition(
        np.ascontiguousarray(eigenvalues[order]), np.ascontiguousarray(V[:, order])
    )


def _off_norm(A) -> float:
    # summed directly: norm(A)^2 - norm(diag)^2 cancels near convergence
    return float(np.linalg.norm(A - np.diag(np.diag(A))))


def jacobi_eigh(A, max_sweeps: int = JACOBI_MAX_SWEEPS, tol: float = JACOBI_TOL):
    """Cyclic Jacobi eigenvalue algorithm.

    Returns unsorted ``(eigenvalues, eigenvectors)``. Converged when the
    off-diagonal Frobenius norm drops to ``tol * ||A||_F``.
    """
    A = np.array(A, dtype=float)
    p = A.shape[0]
    V = np.eye(p)
    norm = np.linalg.norm(A)
    if p == 1 or norm == 0.0:
        return np.diag(A).copy(), V
    target = tol * norm
    off = _off_norm(A)
    for _ in range(max_sweeps):
        if off <= target:
            break
        for i in range(p - 1):
            for j in range(i + 1, p):
                aij = A[i, j]
                if aij == 0.0:
                    continue
                theta = (A[j, j] - A[i, i]) / (2.0 * aij)
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                if theta == 0.0:
                    t = 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                ai = A[:, i].copy()
                aj = A[:, j].copy()
                A[:, i] = c * ai - s * aj
                A[:, j] = s * ai + c * aj
                ri = A[i, :].copy()
                rj = A[j, :].copy()
                A[i, :] = c * ri - s * rj
                A[j, :] = s * ri + c * rj
                A[i, j] = A[j, i] = 0.0
                vi = V[:, i].copy()
                V[:, i] = c * vi - s * V[:, j]
                V[:, j] = s * vi + c * V[:, j]
        off = _off_norm(A)
    else:
        if off > target:
            raise NumericalError(
                f"Jacobi did not converge in {max_sweeps} sweeps", residual=off
            )
    return np.diag(A).copy(), V


def sym_eig(A, method: str = "lapack") -> SpectralDecomposition:
    """Eigendecomposition of a symmetric matrix.

    Parameters
    ----------
    A : array_like, shape (p, p)
        Symmetric within ``1e-10 * max|A|``.
    method : {"lapack", "jacobi"}
        ``"lapack"`` calls ``numpy.linalg.eigh``; ``"jacobi"`` runs the
        dependency-free cyclic Jacobi solver.

    Returns
    -------
    SpectralDecomposition
        Eigenvalues descending. Each eigenvector has its largest-magnitude
        entry positive; exactly tied eigenvalues are ordered by the row index
        of that entry.
    """
    A = _check_symmetric(A)
    A = 0.5 * (A + A.T)
    if method == "lapack":
        try:
            w, V = np.linalg.eigh(A)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"eigh failed: {exc}") from exc
    elif method == "jacobi":
        w, V = jacobi_eigh(A)
    else:
        raise InputError(f"unknown eigensolver {method!r}")
    return _canonical(w, V)


def _check_weights(X, w):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    w = np.asarray(w, dtype=float)
    if w.shape != (X.shape[0],):
        raise InputError(f"weights have shape {w.shape}, expected ({X.shape[0]},)")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise InputError("weights must be finite and nonnegative")
    total = w.sum()
    if total <= 0:
        raise DegenerateWeightsError("weights sum to zero")
    return X, w, total


def weighted_mean(X, w) -> np.ndarray:
    """Return ``sum_i w_i x_i / sum_i w_i``."""
    X, w, total = _check_weights(X, w)
    return (w @ X) / total


def weighted_scatter(X, w, mean) -> np.ndarray:
    """Weighted average of the centered outer products ``(x_i - m)(x_i - m)^T``."""
    X, w, total = _check_weights(X, w)
    D = X - np.asarray(mean, dtype=float)
    S = (D * (w / total)[:, None]).T @ D
    return 0.5 * (S + S.T)


def regularization_shift(S, eps: float) -> float:
    """Diagonal loading applied by :func:`regularize`."""
    if eps < 0:
        raise InputError("eps must be nonnegative")
    S = np.asarray(S, dtype=float)
    tr = float(np.trace(S))
    return eps * tr / S.shape[0] if tr > 0 else float(eps)


def regularize(S, eps: float = 1e-6) -> np.ndarray:
    """Add ``eps * trace(S)/p`` to the diagonal (``eps`` if the trace is zero)."""
    S = _check_symmetric(S)
    return S + regularization_shift(S, eps) * np.eye(S.shape[0])
