import numpy as np
import pytest

from mpsa.datagen import haar_orthogonal
from mpsa.mixture import MpsaModel, PsaComponent
from mpsa.psa import PsaEstimate


def random_composition(p, rng):
    cuts = np.flatnonzero(rng.random(p - 1) < 0.5) + 1
    bounds = np.concatenate(([0], cuts, [p]))
    return tuple(int(v) for v in np.diff(bounds))


def random_component(p, rng, gamma=None, weight=1.0, scale=1.0):
    gamma = gamma or random_composition(p, rng)
    lam = np.sort(rng.uniform(0.2, 3.0, len(gamma)))[::-1] * scale
    basis = haar_orthogonal(p, rng)
    mean = rng.normal(0.0, 2.0, p)
    return PsaComponent(weight, PsaEstimate(gamma, lam, basis, mean))


def random_model(p, C, rng, gammas=None):
    w = rng.dirichlet(np.full(C, 2.0))
    gammas = gammas or [None] * C
    return MpsaModel(tuple(random_component(p, rng, g, float(wc)) for g, wc in zip(gammas, w)))


def dense_log_density(X, mean, cov):
    """ln N(x | mean, cov) via an explicit inverse and log-determinant."""
    p = len(mean)
    inv = np.linalg.inv(cov)
    _, logdet = np.linalg.slogdet(cov)
    D = np.atleast_2d(X) - mean
    quad = np.einsum("ij,jk,ik->i", D, inv, D)
    return -0.5 * (p * np.log(2 * np.pi) + logdet + quad)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
