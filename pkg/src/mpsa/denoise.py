"""Single-image denoising with a mixture model fitted on the image's own patches.

Pipeline: extract every overlapping ``s x s`` patch, fit a mixture on the
patches, replace each patch by its posterior mean under the fitted model,
and average the overlapping estimates back into an image.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import psa
from .errors import InputError, MpsaError
from .metrics import psnr
from .mixture import (
    FitConfig, MpsaModel, PsaComponent, cpem_fit, e_step, predict, run_em,
)
from .psa import PsaEstimate

METHODS = ("mpsa", "gmm-full", "gmm-spherical", "hdmi")


@dataclass(frozen=True)
class PatchSet:
    """Patches as rows of ``data`` (row-major within the patch)."""

    data: np.ndarray
    origins: np.ndarray
    side: int
    image_shape: tuple[int, int]


def extract_patches(img, s: int) -> PatchSet:
    img = np.asarray(img, dtype=float)
    if img.ndim != 2:
        raise InputError("expected a 2-D grayscale image")
    h, w = img.shape
    if s < 1 or s > min(h, w):
        raise InputError(f"patch side {s} does not fit a {h}x{w} image")
    data = sliding_window_view(img, (s, s)).reshape(-1, s * s).copy()
    origins = np.indices((h - s + 1, w - s + 1)).reshape(2, -1).T
    return PatchSet(data, origins, s, (h, w))


def coverage(origins, s: int, s1: int, s2: int) -> np.ndarray:
    """Number of patches covering each pixel."""
    cnt = np.zeros((s1, s2))
    r0, c0 = origins[:, 0], origins[:, 1]
    for di in range(s):
        for dj in range(s):
            np.add.at(cnt, (r0 + di, c0 + dj), 1.0)
    return cnt


def reassemble(patches, origins, s1: int, s2: int) -> np.ndarray:
    """Average all patch estimates covering each pixel, clipped to [0, 1]."""
    patches = np.asarray(patches, dtype=float)
    s = int(round(np.sqrt(patches.shape[1])))
    if s * s != patches.shape[1]:
        raise InputError("patch length is not a perfect square")
    acc = np.zeros((s1, s2))
    r0, c0 = origins[:, 0], origins[:, 1]
    for di in range(s):
        for dj in range(s):
            np.add.at(acc, (r0 + di, c0 + dj), patches[:, di * s + dj])
    cnt = coverage(origins, s, s1, s2)
    if np.any(cnt == 0):
        raise MpsaError("some pixels are not covered by any patch")
    return np.clip(acc / cnt, 0.0, 1.0)


def estimate_noise(model: MpsaModel) -> float:
    """Weight-averaged smallest block eigenvalue of the components."""
    return float(sum(c.weight * c.block_eigenvalues[-1] for c in model.components))


def shrinkage_factors(comp: PsaComponent, sigma2: float) -> np.ndarray:
    """Unclamped ``1 - sigma2 / lambda_k`` for every block but the last."""
    return 1.0 - sigma2 / comp.block_eigenvalues[:-1]


def denoise_patches(patches, model: MpsaModel, sigma2: float, clamp: bool = True) -> np.ndarray:
    """Posterior-mean estimate of clean patches.

    For each component, the centered patch is projected on the blocks above
    the last one and each block is shrunk by ``1 - sigma2/lambda_k`` (clamped
    to [0, 1] when ``clamp``); the results are mixed with the E-step weights.
    """
    X = patches.data if isinstance(patches, PatchSet) else np.asarray(patches, dtype=float)
    if sigma2 <= 0:
        raise InputError("sigma2 must be positive")
    w = e_step(X, model)
    out = np.zeros_like(X)
    for wc, comp in zip(w, model.components):
        est = comp.mean[None, :].repeat(X.shape[0], axis=0)
        gamma = comp.composition
        if len(gamma) > 1:
            q = sum(gamma[:-1])
            Q = comp.basis[:, :q]
            f = shrinkage_factors(comp, sigma2)
            if clamp:
                f = np.clip(f, 0.0, 1.0)
            coeff = (X - comp.mean) @ Q
            est += (coeff * np.repeat(f, gamma[:-1])) @ Q.T
        out += wc[:, None] * est
    return out


@dataclass
class DenoiseConfig:
    method: str = "mpsa"
    fit: FitConfig = field(default_factory=lambda: FitConfig(strategy="bottom-up"))
    # noise standard deviation in [0, 1] pixel units; required by hdmi/supervised
    sigma: float | None = None
    supervised: bool = False
    # "post-hoc": estimate sigma^2 after fitting; "enforced": pin each last
    # block eigenvalue to sigma^2 after every M-step
    noise_mode: str = "post-hoc"
    clamp: bool = True

    def __post_init__(self):
        if self.method not in METHODS:
            raise InputError(f"unknown method {self.method!r}; choose from {METHODS}")
        if self.noise_mode not in ("post-hoc", "enforced"):
            raise InputError(f"unknown noise_mode {self.noise_mode!r}")
        if (self.supervised or self.method == "hdmi") and self.sigma is None:
            raise InputError("supervised denoising needs the noise level sigma")
        if self.sigma is not None and self.sigma <= 0:
            raise InputError("sigma must be positive")


@dataclass
class DenoiseReport:
    method: str
    sigma2: float
    compositions: list
    kappa: int
    n_iter: int
    converged: bool
    clamped_blocks: int
    psnr: float | None = None
    psnr_noisy: float | None = None
    model: MpsaModel | None = field(default=None, repr=False)
    patch_labels: np.ndarray | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "sigma2": self.sigma2,
            "compositions": [list(g) for g in self.compositions],
            "kappa": self.kappa,
            "n_iter": self.n_iter,
            "converged": self.converged,
            "clamped_blocks": self.clamped_blocks,
            "psnr": self.psnr,
            "psnr_noisy": self.psnr_noisy,
        }


def pin_noise(model: MpsaModel, sigma2: float) -> MpsaModel:
    """Set every last block eigenvalue to ``sigma2``, raising any block below it."""
    comps = []
    for c in model.components:
        lam = np.maximum(c.block_eigenvalues, sigma2)
        lam[-1] = sigma2
        e = c.estimate
        comps.append(PsaComponent(c.weight, PsaEstimate(e.composition, lam, e.basis, e.mean)))
    return MpsaModel(tuple(comps), model.alpha)


def _fit(X, C, config: DenoiseConfig):
    p = X.shape[1]
    fit = config.fit
    sigma2 = None if config.sigma is None else config.sigma**2
    hook = None
    if config.noise_mode == "enforced":
        hook = lambda m: pin_noise(m, sigma2 if sigma2 is not None else estimate_noise(m))  # noqa: E731
    if config.method == "gmm-full":
        return run_em(X, C, fit, [psa.full_type(p)] * C, post_mstep=hook)
    if config.method == "gmm-spherical":
        return run_em(X, C, fit, [psa.spherical_type(p)] * C, post_mstep=hook)
    if config.method == "hdmi":
        def selector(c, st, current):
            return psa.ppca_type(psa.hdmi_dimension(st.spectrum.eigenvalues, sigma2), p)
        return run_em(X, C, fit, [psa.spherical_type(p)] * C, selector, post_mstep=hook)
    return cpem_fit(X, C, fit, post_mstep=hook)


def denoise_image(noisy, s: int, C: int, config: DenoiseConfig | None = None, clean=None):
    """Denoise ``noisy``; returns ``(image, report)``.

    ``report.psnr`` is filled when the clean reference is given.
    """
    config = config or DenoiseConfig()
    noisy = np.asarray(noisy, dtype=float)
    patches = extract_patches(noisy, s)
    model, trace = _fit(patches.data, C, config)
    if config.supervised or config.method == "hdmi":
        sigma2 = config.sigma**2
    else:
        sigma2 = estimate_noise(model)
    est = denoise_patches(patches, model, sigma2, clamp=config.clamp)
    out = reassemble(est, patches.origins, *noisy.shape)
    clamped = sum(int(np.sum(shrinkage_factors(c, sigma2) < 0)) for c in model.components)
    report = DenoiseReport(
        method=config.method if config.method != "mpsa" else f"mpsa-{config.fit.strategy}",
        sigma2=float(sigma2),
        compositions=model.compositions,
        kappa=model.kappa,
        n_iter=trace.n_iter,
        converged=trace.converged,
        clamped_blocks=clamped,
        model=model,
        patch_labels=predict(patches.data, model),
    )
    if clean is not None:
        report.psnr = psnr(clean, out)
        report.psnr_noisy = psnr(clean, noisy)
    return out, report
