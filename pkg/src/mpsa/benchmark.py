"""Built-in benchmark suites: density fitting, clustering and desk-scale denoising.

Every suite compares the four CPEM strategies against full and spherical
Gaussian mixtures. Within one repetition all models share the dataset and
the k-means initialization, so differences come from the model family only.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from typing import Callable

import numpy as np

from . import psa
from .datagen import SpectrumSpec, SyntheticSpec, make_rng, sample_mpsa
from .denoise import DenoiseConfig, denoise_image
from .errors import InputError
from .fileio import format_csv, read_data_csv
from .metrics import ari, psnr, stratified_kfold
from .mixture import FitConfig, MpsaModel, cpem_fit, em_fit, penalized_loglik, predict
from .pgm import parse_pgm

MODELS = {
    "MPSA-H": "hierarchical",
    "MPSA-R": "relative",
    "MPSA-U": "bottom-up",
    "MPSA-D": "top-down",
    "GMM-F": "full",
    "GMM-S": "spherical",
}
WEIGHTS = (0.4, 0.3, 0.3)
SKEW_SHAPE = 1.0


def mpsa_types(p: int):
    return [(1, p - 1), (1, 2, p - 3), (1, 2, 4, p - 7)]


def full_types(p: int):
    return [psa.full_type(p)] * 3


def density_spec(p: int, types, distribution: str = "gaussian") -> SyntheticSpec:
    comps = [SpectrumSpec(g, lam, snr=0.01) for g, lam in zip(types, (3.0, 2.0, 1.0))]
    return SyntheticSpec(
        1000, WEIGHTS, comps, mean_bound=5.0, distribution=distribution,
        skew_shape=SKEW_SHAPE if distribution == "skew-normal" else None,
    )


def clustering_spec(n: int, p: int, types, mean_bound: float | None) -> SyntheticSpec:
    comps = [SpectrumSpec(g, lam, snr=0.01) for g, lam in zip(types, (10.0, 1.0, 0.1))]
    if mean_bound is None:
        return SyntheticSpec(n, WEIGHTS, comps, means=np.zeros((3, p)))
    return SyntheticSpec(n, WEIGHTS, comps, mean_bound=mean_bound)


@dataclass(frozen=True)
class Suite:
    name: str
    kind: str  # "density" | "clustering" | "denoise"
    make_spec: Callable[[], SyntheticSpec] | None = None
    note: str = ""


SUITES = {
    "mpsa10": Suite("mpsa10", "density", lambda: density_spec(10, mpsa_types(10))),
    "mpsa100": Suite("mpsa100", "density", lambda: density_spec(100, mpsa_types(100))),
    "full10": Suite("full10", "density", lambda: density_spec(10, full_types(10))),
    "full100": Suite("full100", "density", lambda: density_spec(100, full_types(100))),
    "skew100": Suite(
        "skew100", "density", lambda: density_spec(100, full_types(100), "skew-normal"),
        note=f"skew-normal shape {SKEW_SHAPE:g} in every coordinate",
    ),
    "clust-mpsa10": Suite("clust-mpsa10", "clustering", lambda: clustering_spec(200, 10, mpsa_types(10), 1.0)),
    "clust-mpsa50": Suite("clust-mpsa50", "clustering", lambda: clustering_spec(1000, 50, mpsa_types(50), None)),
    "clust-full10": Suite("clust-full10", "clustering", lambda: clustering_spec(200, 10, full_types(10), 1.0)),
    "denoise": Suite("denoise", "denoise", note="128x128 camera crop, sigma 30/255, s=8, C=3"),
}


@dataclass
class BenchmarkRow:
    model: str
    dataset: str
    metric: str
    values: list[float] = field(default_factory=list)
    note: str = ""

    @property
    def mean(self) -> float:
        return float(np.mean(self.values))

    @property
    def std(self) -> float:
        return float(np.std(self.values))


def fit_model(name: str, X, C: int, seed: int, config: FitConfig | None = None, labels=None):
    """Fit one of :data:`MODELS` on ``X``; returns ``(model, trace)``."""
    if name not in MODELS:
        raise InputError(f"unknown model {name!r}; choose from {list(MODELS)}")
    base = config or FitConfig()
    kind = MODELS[name]
    p = np.asarray(X).shape[1]
    if kind in ("full", "spherical"):
        cfg = FitConfig(**{**vars(base), "strategy": "fixed", "seed": seed})
        gamma = psa.full_type(p) if kind == "full" else psa.spherical_type(p)
        return em_fit(X, C, [gamma] * C, cfg, labels=labels)
    cfg = FitConfig(**{**vars(base), "strategy": kind, "seed": seed})
    return cpem_fit(X, C, cfg, labels=labels)


def score(kind: str, X, model: MpsaModel, truth_labels=None) -> float:
    """Penalized log-likelihood per sample, or ARI against ``truth_labels``."""
    if kind == "density":
        return penalized_loglik(X, model, model.alpha) / X.shape[0]
    return ari(truth_labels, predict(X, model))


def _metric_name(kind: str) -> str:
    return {"density": "penalized_loglik_per_sample", "clustering": "ari", "denoise": "psnr"}[kind]


def run_synthetic(suite: Suite, repetitions: int, seed: int, models) -> list[BenchmarkRow]:
    C = 3
    rows = {m: BenchmarkRow(m, suite.name, _metric_name(suite.kind), note=suite.note) for m in models}
    for r in range(repetitions):
        X, labels, _ = sample_mpsa(suite.make_spec(), make_rng(seed, r))
        for m in models:
            model, _ = fit_model(m, X, C, seed=seed * 1000 + r)
            rows[m].values.append(score(suite.kind, X, model, labels))
    return list(rows.values())


DENOISE_METHODS = {
    "MPSA-H": ("mpsa", "hierarchical"),
    "MPSA-R": ("mpsa", "relative"),
    "MPSA-U": ("mpsa", "bottom-up"),
    "MPSA-D": ("mpsa", "top-down"),
    "GMM-F": ("gmm-full", "fixed"),
    "GMM-S": ("gmm-spherical", "fixed"),
}


def camera_image() -> np.ndarray:
    """Central 128x128 crop of the CC0 "camera" photograph, values in [0, 1]."""
    return parse_pgm(resources.files("mpsa").joinpath("data/camera128.pgm").read_bytes())


def denoise_case(seed: int, sigma: float = 30 / 255, clean=None):
    """Clean image (the bundled crop by default) and a noisy copy drawn with ``seed``."""
    clean = camera_image() if clean is None else np.asarray(clean, dtype=float)
    noisy = clean + sigma * make_rng(seed, 2).standard_normal(clean.shape)
    return clean, noisy


def run_denoise(suite: Suite, repetitions: int, seed: int, models, s: int = 8, C: int = 3):
    rows = {m: BenchmarkRow(m, suite.name, "psnr", note=suite.note) for m in models}
    for r in range(repetitions):
        clean, noisy = denoise_case(seed * 1000 + r)
        for m in models:
            method, strategy = DENOISE_METHODS[m]
            cfg = DenoiseConfig(method=method, fit=FitConfig(strategy=strategy, seed=seed * 1000 + r))
            out, _ = denoise_image(noisy, s, C, cfg)
            rows[m].values.append(psnr(clean, out))
    return list(rows.values())


def run_suite(name: str, repetitions: int = 10, seed: int = 0, models=None) -> list[BenchmarkRow]:
    if name not in SUITES:
        raise InputError(f"unknown suite {name!r}; choose from {list(SUITES)}")
    if repetitions < 1:
        raise InputError("repetitions must be >= 1")
    models = list(models or MODELS)
    for m in models:
        if m not in MODELS:
            raise InputError(f"unknown model {m!r}; choose from {list(MODELS)}")
    suite = SUITES[name]
    if suite.kind == "denoise":
        return run_denoise(suite, repetitions, seed, models)
    return run_synthetic(suite, repetitions, seed, models)


def run_csv(path, C: int, kind: str = "clustering", folds: int = 10, seed: int = 0, models=None):
    """Stratified k-fold run on a labeled CSV.

    Each model is fitted on the union of the other folds, and scored on that
    training set (penalized log-likelihood per sample, or ARI).
    """
    if kind not in ("density", "clustering"):
        raise InputError(f"kind must be 'density' or 'clustering', got {kind!r}")
    X, labels = read_data_csv(path)
    if labels is None:
        raise InputError(f"{path}: a 'label' column is required for stratified splitting")
    models = list(models or MODELS)
    name = str(path)
    rows = {m: BenchmarkRow(m, name, _metric_name(kind)) for m in models}
    split = stratified_kfold(labels, folds, make_rng(seed, 0))
    for j, held in enumerate(split):
        train = np.setdiff1d(np.arange(X.shape[0]), held)
        for m in models:
            model, _ = fit_model(m, X[train], C, seed=seed * 1000 + j)
            rows[m].values.append(score(kind, X[train], model, labels[train]))
    return list(rows.values())


def rows_to_csv(rows) -> str:
    return format_csv(
        ["model", "dataset", "metric", "mean", "std", "repetitions", "note"],
        [[r.model, r.dataset, r.metric, repr(r.mean), repr(r.std), len(r.values), r.note] for r in rows],
    )
