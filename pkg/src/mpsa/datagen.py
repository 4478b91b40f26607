"""Synthetic mixtures with piecewise-constant spectra, and a cartoon test image.

All generators take an explicit ``numpy.random.Generator``; build one with
:func:`make_rng` (PCG64) so runs are replayable from an integer seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InputError
from .mixture import MpsaModel, PsaComponent
from .psa import PsaEstimate, as_composition


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """PCG64 generator; distinct ``stream`` values give independent streams."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), int(stream)])))


@dataclass
class SpectrumSpec:
    """Block spectrum with constant relative gap between consecutive blocks.

    Exactly one of ``snr`` (smallest over largest eigenvalue) and ``delta``
    (relative gap) is given; they are linked by ``snr = (1 - delta)^(d - 1)``.
    A single-block composition is isotropic and ignores both.
    """

    composition: tuple[int, ...]
    lambda1: float
    snr: float | None = None
    delta: float | None = None

    def __post_init__(self):
        self.composition = as_composition(self.composition)
        if (self.snr is None) == (self.delta is None):
            raise InputError("give exactly one of snr and delta")
        if self.lambda1 <= 0:
            raise InputError("lambda1 must be positive")
        if self.snr is not None and not 0 < self.snr <= 1:
            raise InputError("snr must lie in (0, 1]")
        if self.delta is not None and not 0 <= self.delta < 1:
            raise InputError("delta must lie in [0, 1)")

    def gap(self) -> float:
        d = len(self.composition)
        if self.delta is not None:
            return self.delta
        return 0.0 if d == 1 else 1.0 - self.snr ** (1.0 / (d - 1))


def build_spectrum(spec: SpectrumSpec) -> np.ndarray:
    """Descending length-``p`` spectrum; block ``k`` equals ``lambda1 (1 - delta)^k``."""
    blocks = spec.lambda1 * (1.0 - spec.gap()) ** np.arange(len(spec.composition))
    return np.repeat(blocks, spec.composition)


def haar_orthogonal(p: int, rng: np.random.Generator) -> np.ndarray:
    """Orthogonal matrix drawn from the Haar measure (QR with sign correction)."""
    if p < 1:
        raise InputError("p must be >= 1")
    Z = rng.standard_normal((p, p))
    Q, R = np.linalg.qr(Z)
    return Q * np.sign(np.diag(R))


def sample_skew(mean, basis, eigenvalues, shape, rng: np.random.Generator, size: int | None = None):
    """Multivariate skew-normal draws by the selection representation.

    With covariance ``Omega = basis diag(eigenvalues) basis^T``, draw
    ``z ~ N(0, Omega)`` and a selector ``z0`` jointly normal with unit variance
    and ``cov(z0, z) = Omega a / sqrt(1 + a^T Omega a)``. Returns
    ``mean + z`` where ``z0 > 0`` and ``mean - z`` otherwise.
    """
    mean = np.asarray(mean, dtype=float)
    a = np.asarray(shape, dtype=float)
    root = np.asarray(basis) * np.sqrt(np.asarray(eigenvalues, dtype=float))
    m = 1 if size is None else size
    z = rng.standard_normal((m, mean.shape[0])) @ root.T
    # z0 = (a^T z + e) / sqrt(1 + a^T Omega a); only its sign matters
    z0 = z @ a + rng.standard_normal(m)
    out = mean + np.where(z0[:, None] > 0, z, -z)
    return out[0] if size is None else out


@dataclass
class SyntheticSpec:
    n: int
    weights: Sequence[float]
    components: Sequence[SpectrumSpec]
    mean_bound: float | None = None
    means: np.ndarray | None = None
    distribution: str = "gaussian"
    skew_shape: np.ndarray | float | None = None
    p: int = field(init=False)

    def __post_init__(self):
        self.components = list(self.components)
        if not self.components:
            raise InputError("need at least one component")
        dims = {sum(c.composition) for c in self.components}
        if len(dims) != 1:
            raise InputError(f"component compositions sum to different values: {sorted(dims)}")
        self.p = dims.pop()
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (len(self.components),) or np.any(w <= 0):
            raise InputError("weights must be positive, one per component")
        if not math.isclose(w.sum(), 1.0, abs_tol=1e-9):
            raise InputError(f"weights sum to {w.sum()}, expected 1")
        self.weights = w
        if (self.mean_bound is None) == (self.means is None):
            raise InputError("give exactly one of mean_bound and means")
        if self.means is not None:
            self.means = np.asarray(self.means, dtype=float)
            if self.means.shape != (len(self.components), self.p):
                raise InputError(f"means must have shape ({len(self.components)}, {self.p})")
        if self.distribution not in ("gaussian", "skew-normal"):
            raise InputError(f"unknown distribution {self.distribution!r}")
        if self.n < 1:
            raise InputError("n must be >= 1")


def sample_mpsa(spec: SyntheticSpec, rng: np.random.Generator):
    """Draw ``(X, labels, truth)``; labels are 1-based.

    Draw order: means, then (basis) per component, then labels, then samples
    component by component.
    """
    C, p = len(spec.components), spec.p
    if spec.means is None:
        means = rng.uniform(-spec.mean_bound, spec.mean_bound, size=(C, p))
    else:
        means = spec.means
    bases = [haar_orthogonal(p, rng) for _ in range(C)]
    labels = rng.choice(C, size=spec.n, p=spec.weights)
    shape = None
    if spec.distribution == "skew-normal":
        shape = np.broadcast_to(np.asarray(1.0 if spec.skew_shape is None else spec.skew_shape, float), (p,))
    X = np.empty((spec.n, p))
    comps = []
    for c, cs in enumerate(spec.components):
        ell = build_spectrum(cs)
        idx = np.flatnonzero(labels == c)
        if shape is None:
            X[idx] = means[c] + (rng.standard_normal((len(idx), p)) * np.sqrt(ell)) @ bases[c].T
        else:
            X[idx] = sample_skew(means[c], bases[c], ell, shape, rng, size=len(idx))
        blocks = ell[np.concatenate(([0], np.cumsum(cs.composition)[:-1]))]
        comps.append(PsaComponent(float(spec.weights[c]), PsaEstimate(cs.composition, blocks, bases[c], means[c].copy())))
    return X, labels + 1, MpsaModel(tuple(comps))


def cartoon_image(height: int, width: int, rng: np.random.Generator, n_shapes: int = 8) -> np.ndarray:
    """Flat-shaded shapes with dark outlines on a smooth background, values in [0, 1].

    A stand-in for cartoon test images: mostly constant regions separated by
    sharp edges.
    """
    yy, xx = np.mgrid[0:height, 0:width].astype(float)
    img = 0.35 + 0.3 * (xx / max(width - 1, 1)) * (1 - 0.5 * yy / max(height - 1, 1))
    outline = np.zeros((height, width), dtype=bool)
    for _ in range(n_shapes):
        cy, cx = rng.uniform(0, height), rng.uniform(0, width)
        ry, rx = rng.uniform(0.06, 0.3) * height, rng.uniform(0.06, 0.3) * width
        level = rng.uniform(0.1, 0.95)
        if rng.random() < 0.5:
            r = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2
            inside = r <= 1.0
            ring = (r <= 1.0) & (r > (1 - 2.5 / min(ry, rx)) ** 2)
        else:
            inside = (np.abs(yy - cy) <= ry) & (np.abs(xx - cx) <= rx)
            inner = (np.abs(yy - cy) <= ry - 1.5) & (np.abs(xx - cx) <= rx - 1.5)
            ring = inside & ~inner
        img[inside] = level
        outline[inside] = False
        outline |= ring
    img[outline] = 0.05
    return np.clip(img, 0.0, 1.0)
