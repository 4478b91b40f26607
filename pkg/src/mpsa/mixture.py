"""Mixtures of principal subspace analyzers.

Each mixture component is a Gaussian whose covariance eigenvalues are
constant within the blocks of a composition. :func:`em_fit` learns the
parameters for fixed compositions; :func:`cpem_fit` also re-selects every
component's composition at each iteration, picking the candidate that does
not decrease the component's penalized expected complete-data
log-likelihood, which keeps the mixture penalized log-likelihood monotone.

Responsibilities are ``C x n`` arrays whose columns sum to one. Cluster
labels returned by :func:`predict` are 1-based.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import logsumexp

from . import psa
from .errors import InputError, NumericalError
from .kmeans import kmeans
from .linalg import SpectralDecomposition, regularization_shift, sym_eig, weighted_mean, weighted_scatter
from .psa import LOG_2PI, PsaEstimate, as_composition, kappa_psa

log = logging.getLogger(__name__)

STRATEGIES = ("fixed", "hierarchical", "relative", "bottom-up", "top-down")


@dataclass(frozen=True)
class PsaComponent:
    weight: float
    estimate: PsaEstimate

    @property
    def mean(self) -> np.ndarray:
        return self.estimate.mean

    @property
    def composition(self) -> tuple[int, ...]:
        return self.estimate.composition

    @property
    def block_eigenvalues(self) -> np.ndarray:
        return self.estimate.block_eigenvalues

    @property
    def basis(self) -> np.ndarray:
        return self.estimate.basis

    @property
    def kappa(self) -> int:
        return kappa_psa(self.composition)


@dataclass(frozen=True)
class MpsaModel:
    components: tuple[PsaComponent, ...]
    alpha: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))
        if not self.components:
            raise InputError("a mixture needs at least one component")
        dims = {c.estimate.dim for c in self.components}
        if len(dims) != 1:
            raise InputError(f"components disagree on the dimension: {sorted(dims)}")

    @property
    def dim(self) -> int:
        return self.components[0].estimate.dim

    @property
    def n_components(self) -> int:
        return len(self.components)

    @property
    def weights(self) -> np.ndarray:
        return np.array([c.weight for c in self.components])

    @property
    def compositions(self) -> list[tuple[int, ...]]:
        return [c.composition for c in self.components]

    @property
    def kappa(self) -> int:
        """Free parameters: ``C - 1 + sum_c kappa(gamma_c)``."""
        return self.n_components - 1 + sum(c.kappa for c in self.components)


@dataclass
class FitConfig:
    max_iter: int = 200
    rel_tol: float = 1e-6
    seed: int = 0
    strategy: str = "hierarchical"
    alpha: float | str = "bic"
    reg_eps: float = 1e-6
    kmeans_max_iter: int = 300
    kmeans_restarts: int = 10
    # "spherical" | "full" | None (strategy default)
    init_types: str | None = None
    # effective sample size for the relative-eigengap threshold: n*pi_c or n
    relative_n: str = "component"
    # seed responsibilities from given labels and run a single M-step
    supervised: bool = False
    eig_method: str = "lapack"

    def __post_init__(self):
        if self.max_iter < 1:
            raise InputError("max_iter must be >= 1")
        if self.rel_tol < 0 or self.reg_eps < 0:
            raise InputError("rel_tol and reg_eps must be nonnegative")
        if self.kmeans_max_iter < 1 or self.kmeans_restarts < 1:
            raise InputError("kmeans_max_iter and kmeans_restarts must be >= 1")
        if self.strategy not in STRATEGIES:
            raise InputError(f"unknown strategy {self.strategy!r}; choose from {STRATEGIES}")
        if self.init_types not in (None, "spherical", "full"):
            raise InputError(f"init_types must be 'spherical', 'full' or None, got {self.init_types!r}")
        if self.relative_n not in ("component", "total"):
            raise InputError(f"relative_n must be 'component' or 'total', got {self.relative_n!r}")
        if isinstance(self.alpha, str):
            if self.alpha != "bic":
                raise InputError(f"alpha must be a nonnegative number or 'bic', got {self.alpha!r}")
        elif self.alpha < 0:
            raise InputError("alpha must be nonnegative")

    def resolve_alpha(self, n: int) -> float:
        return math.log(n) / 2.0 if self.alpha == "bic" else float(self.alpha)


@dataclass
class IterationRecord:
    iteration: int
    loglik: float
    penalized_loglik: float
    kappa: int
    compositions: list[tuple[int, ...]]
    events: list[str] = field(default_factory=list)


@dataclass
class FitTrace:
    records: list[IterationRecord] = field(default_factory=list)
    converged: bool = False

    @property
    def penalized_loglik(self) -> np.ndarray:
        return np.array([r.penalized_loglik for r in self.records])

    @property
    def loglik(self) -> np.ndarray:
        return np.array([r.loglik for r in self.records])

    @property
    def kappa(self) -> np.ndarray:
        return np.array([r.kappa for r in self.records])

    @property
    def n_iter(self) -> int:
        return len(self.records)


# ---------------------------------------------------------------------------
# E-step


def _block_layout(gamma):
    """Block offsets and the index of the block handled by residual subtraction."""
    gamma = np.asarray(gamma)
    starts = np.concatenate(([0], np.cumsum(gamma)[:-1]))
    big = len(gamma) - 1 - int(np.argmax(gamma[::-1]))  # largest, last among equals
    return starts, big


def _quadratic_terms(D, comp: PsaComponent) -> np.ndarray:
    """``sum_k ||Q_k^T d||^2 / lambda_k`` for the rows ``d`` of ``D``.

    The largest block is never projected onto: its squared norm is the
    residual ``||d||^2 - sum_{other k} ||Q_k^T d||^2``.
    """
    gamma = comp.composition
    lam = comp.block_eigenvalues
    total = np.einsum("ij,ij->i", D, D)
    if len(gamma) == 1:
        return total / lam[0]
    starts, big = _block_layout(gamma)
    lo, hi = starts[big], starts[big] + gamma[big]
    cols = np.r_[0:lo, hi:D.shape[1]]
    proj = D @ comp.basis[:, cols]
    other_gamma = [g for k, g in enumerate(gamma) if k != big]
    other_lam = np.delete(lam, big)
    other_starts = np.concatenate(([0], np.cumsum(other_gamma)[:-1]))
    sq = np.add.reduceat(proj * proj, other_starts, axis=1)
    residual = np.maximum(total - sq.sum(axis=1), 0.0)
    return sq @ (1.0 / other_lam) + residual / lam[big]


def cost_K(X, comp: PsaComponent) -> np.ndarray | float:
    """Cost ``-2 ln pi + sum g_k ln lambda_k + sum_k ||Q_k^T (x - mu)||^2 / lambda_k``.

    Accepts a single sample or an ``n x p`` array.
    """
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    D = np.atleast_2d(X) - comp.mean
    logdet = float(np.dot(comp.composition, np.log(comp.block_eigenvalues)))
    K = -2.0 * math.log(comp.weight) + logdet + _quadratic_terms(D, comp)
    return float(K[0]) if single else K


def _costs(X, model: MpsaModel) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != model.dim:
        raise InputError(f"data has {X.shape[1]} columns, model expects {model.dim}")
    with np.errstate(over="ignore", invalid="ignore"):
        K = np.vstack([cost_K(X, comp) for comp in model.components])
    bad = ~np.isfinite(K)
    if np.any(bad):
        c, i = np.argwhere(bad)[0]
        raise NumericalError(f"non-finite cost for sample {i}, component {c + 1}")
    return K


def _log_joint(X, model: MpsaModel) -> np.ndarray:
    """``ln(pi_c N(x_i | mu_c, Sigma_c))`` as a ``C x n`` array."""
    return -0.5 * (_costs(X, model) + model.dim * LOG_2PI)


def _posterior(log_joint):
    norm = logsumexp(log_joint, axis=0)
    t = np.exp(log_joint - norm)
    t /= t.sum(axis=0)
    return t, float(norm.sum())


def e_step(X, model: MpsaModel) -> np.ndarray:
    """Posterior membership probabilities, ``C x n``."""
    return _posterior(_log_joint(X, model))[0]


def log_likelihood(X, model: MpsaModel) -> float:
    return float(logsumexp(_log_joint(X, model), axis=0).sum())


def penalized_loglik(X, model: MpsaModel, alpha: float) -> float:
    return log_likelihood(X, model) - alpha * model.kappa


def predict(X, model: MpsaModel) -> np.ndarray:
    """1-based label of the lowest-cost component (lowest index on ties)."""
    return np.argmin(_costs(X, model), axis=0) + 1


# ---------------------------------------------------------------------------
# M-step


@dataclass(frozen=True)
class ComponentStats:
    """Responsibility-weighted statistics of one component.

    ``spectrum`` decomposes the regularized scatter; ``shift`` is the
    diagonal loading that was added to it.
    """

    weight: float
    mass: float
    mean: np.ndarray
    spectrum: SpectralDecomposition
    shift: float


def _check_responsibilities(X, t):
    X = np.asarray(X, dtype=float)
    t = np.asarray(t, dtype=float)
    if X.ndim != 2:
        raise InputError("data must be an n x p array")
    if t.ndim != 2 or t.shape[1] != X.shape[0]:
        raise InputError(f"responsibilities have shape {t.shape}, expected (C, {X.shape[0]})")
    return X, t


def _least_claimed(t, exclude=()) -> int:
    claim = t.max(axis=0).copy()
    claim[list(exclude)] = np.inf
    return int(np.argmin(claim))


def handle_empty_component(X, t, c: int, exclude: Sequence[int] = ()) -> np.ndarray:
    """Give component ``c`` the least-claimed sample.

    The sample whose largest responsibility is smallest (first such index,
    skipping ``exclude``) is reassigned entirely to ``c``.
    """
    X, t = _check_responsibilities(X, t)
    i = _least_claimed(t, exclude)
    t = t.copy()
    t[:, i] = 0.0
    t[c, i] = 1.0
    return t


def reseed_empty(X, t, min_mass: float = 2.0):
    """Apply :func:`handle_empty_component` to every component below ``min_mass``."""
    events, taken = [], []
    for c in range(t.shape[0]):
        if t[c].sum() < min_mass:
            i = _least_claimed(t, taken)
            t = handle_empty_component(X, t, c, exclude=taken)
            taken.append(i)
            events.append(f"reseeded component {c + 1} with sample {i}")
            log.info(events[-1])
    return t, events


def component_statistics(X, t, eps: float = 1e-6, eig_method: str = "lapack") -> list[ComponentStats]:
    X, t = _check_responsibilities(X, t)
    n = X.shape[0]
    out = []
    for tc in t:
        mass = float(tc.sum())
        mu = weighted_mean(X, tc)
        S = weighted_scatter(X, tc, mu)
        shift = regularization_shift(S, eps)
        spectrum = sym_eig(S + shift * np.eye(S.shape[0]), method=eig_method)
        out.append(ComponentStats(mass / n, mass, mu, spectrum, shift))
    return out


def assemble(stats: Sequence[ComponentStats], gammas, alpha=None) -> MpsaModel:
    comps = [
        PsaComponent(s.weight, psa.psa_mle(s.spectrum, s.mean, g)) for s, g in zip(stats, gammas)
    ]
    return MpsaModel(tuple(comps), alpha)


def m_step(X, t, gammas, eps: float = 1e-6, eig_method: str = "lapack") -> MpsaModel:
    """Maximize the expected complete-data log-likelihood for fixed compositions.

    Components holding less than two samples' worth of responsibility are
    first reseeded with :func:`handle_empty_component`.
    """
    X, t = _check_responsibilities(X, t)
    if len(gammas) != t.shape[0]:
        raise InputError(f"{len(gammas)} compositions for {t.shape[0]} components")
    gammas = [as_composition(g, X.shape[1]) for g in gammas]
    t, _ = reseed_empty(X, t)
    return assemble(component_statistics(X, t, eps, eig_method), gammas)


# ---------------------------------------------------------------------------
# Type selection


def component_score(eigenvalues, gamma, n, pi_c, alpha, shift: float = 0.0) -> float:
    """Component penalized expected log-likelihood, up to a type-independent constant.

    ``-(n pi_c / 2) sum_k g_k (ln lambda_k - shift / lambda_k) - alpha kappa(gamma)``
    where ``lambda_k`` are block averages of ``eigenvalues``. ``shift`` is the
    diagonal loading already included in ``eigenvalues``; with ``shift = 0``
    this is the plain ``sum g_k ln lambda_k`` criterion.
    """
    lam = psa.block_average(eigenvalues, gamma)
    if np.any(lam <= 0):
        raise NumericalError("block eigenvalue is not positive")
    fit = float(np.dot(gamma, np.log(lam) - shift / lam))
    return -0.5 * n * pi_c * fit - alpha * kappa_psa(gamma)


def candidate_types(eigenvalues, current, strategy: str, n_eff: float) -> list[tuple[int, ...]]:
    """Candidate set for ``strategy``, always containing ``current`` first."""
    current = as_composition(current)
    if strategy == "fixed":
        cands = []
    elif strategy == "relative":
        cands = psa.candidates_relative(eigenvalues, max(n_eff, 2.0))
    elif strategy == "hierarchical":
        cands = psa.candidates_hierarchical(eigenvalues)
    elif strategy in ("bottom-up", "top-down"):
        cands = psa.upper_neighbors(current) + psa.lower_neighbors(current)
    else:
        raise InputError(f"unknown strategy {strategy!r}")
    out = [current]
    for g in cands:
        if g not in out:
            out.append(g)
    return out


def select_component_type(
    spectrum: SpectralDecomposition, current, strategy: str, n, pi_c, alpha,
    shift: float = 0.0, n_eff: float | None = None,
) -> tuple[int, ...]:
    """Best-scoring candidate; ties go to fewer parameters, then to ``current``."""
    ell = spectrum.eigenvalues
    if n_eff is None:
        n_eff = n * pi_c
    current = as_composition(current, len(ell))
    best_key, best = None, current
    for g in candidate_types(ell, current, strategy, n_eff):
        key = (component_score(ell, g, n, pi_c, alpha, shift), -kappa_psa(g), g == current)
        if best_key is None or key > best_key:
            best_key, best = key, g
    return best


# ---------------------------------------------------------------------------
# Fitting loops

Selector = Callable[[int, ComponentStats, tuple], tuple]


def kmeans_init(X, C: int, config: FitConfig, rng=None) -> np.ndarray:
    """Hard ``C x n`` responsibilities from the best of several k-means runs."""
    X = np.asarray(X, dtype=float)
    if rng is None:
        rng = np.random.default_rng(config.seed)
    if C == 1:
        return np.ones((1, X.shape[0]))
    labels, _, _ = kmeans(X, C, rng, config.kmeans_restarts, config.kmeans_max_iter)
    return labels_to_responsibilities(labels, C)


def labels_to_responsibilities(labels, C: int, base: int = 0) -> np.ndarray:
    labels = np.asarray(labels, dtype=int) - base
    if labels.min() < 0 or labels.max() >= C:
        raise InputError(f"labels outside [{base}, {C - 1 + base}]")
    t = np.zeros((C, labels.shape[0]))
    t[labels, np.arange(labels.shape[0])] = 1.0
    return t


def _initial_t(X, C, config, labels):
    if labels is not None:
        return labels_to_responsibilities(labels, C, base=1)
    if config.supervised:
        raise InputError("supervised mode needs labels")
    return kmeans_init(X, C, config)


def run_em(
    X, C: int, config: FitConfig, initial_types: Sequence, selector: Selector | None = None,
    labels=None, post_mstep: Callable[[MpsaModel], MpsaModel] | None = None,
) -> tuple[MpsaModel, FitTrace]:
    """Shared EM driver.

    Each iteration optionally re-selects the compositions with ``selector``,
    runs the M-step and the E-step, and records the penalized log-likelihood.
    Stops when the relative improvement falls below ``rel_tol`` with no
    composition change, or after ``max_iter`` iterations.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] < 1:
        raise InputError("data must be a nonempty n x p array")
    if not np.all(np.isfinite(X)):
        raise InputError("data has non-finite entries")
    n, p = X.shape
    if C < 1 or C > n:
        raise InputError(f"need 1 <= C <= n, got C={C}, n={n}")
    alpha = config.resolve_alpha(n)
    gammas = [as_composition(g, p) for g in initial_types]
    if len(gammas) != C:
        raise InputError(f"{len(gammas)} initial compositions for C={C}")
    t = _initial_t(X, C, config, labels)
    max_iter = 1 if config.supervised else config.max_iter

    trace = FitTrace()
    model = None
    prev = None
    for s in range(1, max_iter + 1):
        t, events = reseed_empty(X, t)
        stats = component_statistics(X, t, config.reg_eps, config.eig_method)
        new = gammas if selector is None else [selector(c, st, g) for c, (st, g) in enumerate(zip(stats, gammas))]
        changed = new != gammas
        gammas = new
        model = assemble(stats, gammas, alpha)
        if post_mstep is not None:
            model = post_mstep(model)
        t, ll = _posterior(_log_joint(X, model))
        pll = ll - alpha * model.kappa
        trace.records.append(IterationRecord(s, ll, pll, model.kappa, list(gammas), events))
        if prev is not None and not changed and pll - prev < config.rel_tol * abs(prev):
            trace.converged = True
            break
        prev = pll
    return model, trace


def em_fit(X, C: int, gammas, config: FitConfig | None = None, labels=None):
    """EM for fixed compositions ``gammas`` (one per component)."""
    config = config or FitConfig(strategy="fixed")
    return run_em(X, C, config, gammas, labels=labels)


def default_initial_types(strategy: str, p: int, init_types: str | None = None):
    kind = init_types or ("full" if strategy == "top-down" else "spherical")
    return psa.full_type(p) if kind == "full" else psa.spherical_type(p)


def cpem_fit(X, C: int, config: FitConfig | None = None, labels=None, initial_types=None, post_mstep=None):
    """Componentwise penalized EM with the candidate strategy of ``config``."""
    config = config or FitConfig()
    X = np.asarray(X, dtype=float)
    n, p = X.shape
    alpha = config.resolve_alpha(n)
    if initial_types is None:
        initial_types = [default_initial_types(config.strategy, p, config.init_types)] * C

    def selector(c, st: ComponentStats, current):
        n_eff = n * st.weight if config.relative_n == "component" else n
        return select_component_type(st.spectrum, current, config.strategy, n, st.weight, alpha, st.shift, n_eff)

    return run_em(X, C, config, initial_types, selector, labels=labels, post_mstep=post_mstep)

