from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

import corrcox as cc

settings.register_profile("repo", max_examples=60, deadline=None, derandomize=True, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")

SPECS = Path(__file__).resolve().parent.parent / "demos" / "specs"


@pytest.fixture
def specs():
    return SPECS


@pytest.fixture
def shared_driver():
    """Poisson rate 2 clock, independent Exp(1) marks for two names."""
    return cc.shared_driver_model(2.0, [cc.ExponentialJumps(1.0), cc.ExponentialJumps(1.0)])


@pytest.fixture
def three_factor():
    return cc.load_spec(SPECS / "three_factor.json").model


def random_factor_model(rng: np.random.Generator, n: int, deformation=None):
    """Mixed factor structure: shared-mark and per-component-mark compound
    Poisson factors plus gamma subordinators, sparse random loadings."""
    m = int(rng.integers(1, 4))
    factors = []
    for _ in range(m):
        kind = rng.integers(0, 4)
        lam = float(rng.uniform(0.2, 2.0))
        if kind == 0:
            factors.append(cc.CompoundPoisson(lam, jumps=cc.ExponentialJumps(float(rng.uniform(0.5, 3.0)))))
        elif kind == 1:
            factors.append(cc.CompoundPoisson(lam, jumps=cc.GammaJumps(float(rng.uniform(0.5, 3)), float(rng.uniform(1, 4)))))
        elif kind == 2:
            laws = [cc.ExponentialJumps(float(rng.uniform(0.5, 3.0))) for _ in range(n)]
            factors.append(cc.CompoundPoisson(lam, component_jumps=tuple(laws)))
        else:
            factors.append(cc.GammaSubordinator(float(rng.uniform(0.3, 2.0)), float(rng.uniform(0.5, 3.0))))
    A = rng.uniform(0.0, 1.5, size=(n, m)) * (rng.uniform(size=(n, m)) < 0.7)
    A[np.arange(n), rng.integers(0, m, size=n)] += rng.uniform(0.2, 1.0, size=n)
    return cc.FactorModel(tuple(factors), A, deformation)


def random_horizons(rng: np.random.Generator, n: int):
    t = rng.uniform(0.0, 3.0, size=n)
    # Force ties in about half the draws.
    if rng.uniform() < 0.5 and n > 1:
        i, j = rng.choice(n, size=2, replace=False)
        t[i] = t[j]
    return tuple(float(x) for x in t)
