import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

import corrcox as cc
from corrcox.errors import ArgumentError, CapacityError, UnsupportedModelError
from corrcox.survival import joint_log_survival, nested_exponent, order_horizons

from conftest import random_factor_model, random_horizons

# Oracle values: exponents from the piecewise-in-time Levy exponent
# integral, evaluated at 40 digits (see the decisions ledger).
THREE_FACTOR = {
    (1.0, 0.5, 2.0): 1.9009374932748218088,
    (1.0, 1.0, 1.0): 1.3389395391202187106,
    (0.25, 3.0, 3.0): 3.3989224243772791254,
    (2.0, 1.0, 0.5): 1.5059461559847911346,
}
MIXED_POWER_CLOCK = {
    (1.0, 2.0): 7.07456570108936325,
    (2.0, 2.0): 10.289655982213915899,
    (1.5, 0.5): 6.1189699935040950729,
}


def mixed_power_model():
    emp = cc.EmpiricalJumps((0.5, 2.0), (0.3, 0.7))
    f1 = cc.CompoundPoisson(1.5, jumps=emp)
    f2 = cc.CompoundPoisson(0.7, component_jumps=(cc.ConstantJumps(1.5), cc.ExponentialJumps(3.0)))
    clock = cc.TimeDeformation("power", exponent=1.5, scale=2.0)
    return cc.FactorModel((f1, f2), [[1.0, 1.0], [0.4, 2.0]], clock)


def test_order_horizons_examples():
    c = order_horizons((2, 1))
    assert c.sigma == (2, 1) and c.sets == (0b11, 0b01)
    c = order_horizons((1, 1, 1))
    assert c.sigma == (1, 2, 3) and c.sets == (0b111, 0b110, 0b100)
    c = order_horizons((3, 1, 2))
    assert c.sigma == (2, 3, 1) and c.sets == (0b111, 0b101, 0b001)
    with pytest.raises(ArgumentError):
        order_horizons((1.0, float("nan")))
    with pytest.raises(ArgumentError):
        order_horizons((1.0, -1.0))
    with pytest.raises(ArgumentError):
        order_horizons((1.0, 2.0), sigma=(2, 1))


def test_golden_shared_driver(shared_driver):
    assert cc.joint_survival(shared_driver, (1, 2)) == pytest.approx(math.exp(-2.5), abs=1e-12)
    assert joint_log_survival(shared_driver, (1, 2)) == 2.5
    assert cc.joint_survival_mobius(shared_driver, (1, 2)) == pytest.approx(math.exp(-2.5), abs=1e-12)
    assert cc.bivariate_survival(shared_driver, 1, 2) == pytest.approx(math.exp(-2.5), abs=1e-12)
    assert cc.joint_survival(shared_driver, (0, 0)) == 1.0
    assert cc.min_survival(shared_driver, 1.0) == pytest.approx(math.exp(-1.5), rel=1e-15)
    assert cc.min_survival(shared_driver, 0.0) == 1.0
    assert cc.simultaneous_default_prob_mo(shared_driver) == pytest.approx(1 / 3, abs=1e-12)


@pytest.mark.parametrize("t,exponent", THREE_FACTOR.items())
def test_three_factor_oracle(three_factor, t, exponent):
    assert joint_log_survival(three_factor, t) == pytest.approx(exponent, rel=1e-14)
    assert cc.joint_survival_mobius(three_factor, t) == pytest.approx(math.exp(-exponent), rel=1e-13)


@pytest.mark.parametrize("t,exponent", MIXED_POWER_CLOCK.items())
def test_power_clock_oracle(t, exponent):
    m = mixed_power_model()
    assert joint_log_survival(m, t) == pytest.approx(exponent, rel=1e-14)
    assert cc.joint_survival_mobius(m, t) == pytest.approx(math.exp(-exponent), rel=1e-13)


def test_bivariate_branches(shared_driver):
    lam1 = cc.subset_compensator(shared_driver, 1, 1.3)
    assert cc.bivariate_survival(shared_driver, 1.3, 0.0) == pytest.approx(math.exp(-lam1), rel=1e-15)
    lam12 = cc.subset_compensator(shared_driver, 3, 0.7)
    assert cc.bivariate_survival(shared_driver, 0.7, 0.7) == pytest.approx(math.exp(-lam12), rel=1e-15)
    with pytest.raises(ArgumentError):
        cc.bivariate_survival(cc.independent_model([cc.GammaSubordinator(1, 1)] * 3), 1, 1)


def test_independent_is_product():
    fs = [cc.CompoundPoisson(1.0, jumps=cc.ExponentialJumps(1.0)), cc.GammaSubordinator(0.5, 2.0), cc.CompoundPoisson(2.0, jumps=cc.ConstantJumps(0.3))]
    m = cc.independent_model(fs)
    t = (0.4, 1.7, 2.2)
    prod = math.prod(math.exp(-cc.subset_compensator(m, 1 << i, t[i])) for i in range(3))
    assert cc.joint_survival(m, t) == pytest.approx(prod, rel=1e-14)
    assert cc.min_survival(cc.independent_model([cc.CompoundPoisson(2.0, jumps=cc.ExponentialJumps(1.0))] * 3), 1.0) == pytest.approx(math.exp(-3), rel=1e-15)
    assert cc.simultaneous_default_prob_mo(cc.independent_model(fs[:2])) == 0.0


def test_pure_common_shock():
    # Both names load only one factor with a large constant mark: every
    # shock kills both, so the interaction rate is (numerically) everything.
    m = cc.FactorModel((cc.CompoundPoisson(1.0, jumps=cc.ConstantJumps(40.0)),), [[1.0], [1.0]])
    assert cc.simultaneous_default_prob_mo(m) == pytest.approx(1.0, abs=1e-15)


def test_survival_errors(shared_driver):
    with pytest.raises(ArgumentError):
        cc.joint_survival(shared_driver, (1.0,))
    with pytest.raises(ArgumentError):
        cc.joint_survival(shared_driver, (1.0, math.inf))
    with pytest.raises(UnsupportedModelError):
        cc.joint_survival(shared_driver, cc.SurvivalQuery((1.0, 2.0), conditioning_time=0.5))
    with pytest.raises(ArgumentError):
        cc.SurvivalQuery((1.0, 2.0), conditioning_time=1.5)
    with pytest.raises(ArgumentError):
        cc.simultaneous_default_prob_mo(cc.independent_model([cc.GammaSubordinator(1, 1)] * 3))
    big = cc.FactorModel((cc.GammaSubordinator(1.0, 1.0),), np.ones((21, 1)))
    assert cc.joint_survival(big, [1.0] * 21) == pytest.approx(math.exp(-math.log1p(21.0)), rel=1e-14)
    with pytest.raises(CapacityError):
        cc.joint_survival_mobius(big, [1.0] * 21)


def test_log_floor():
    m = cc.FactorModel((cc.CompoundPoisson(500.0, jumps=cc.ConstantJumps(50.0)),), [[1.0]])
    assert cc.joint_survival(m, (2.0,)) == 0.0
    assert joint_log_survival(m, (2.0,)) == pytest.approx(1000.0, rel=1e-14)


def test_nested_equals_mobius_randomized():
    rng = np.random.default_rng(21)
    for _ in range(300):
        n = int(rng.integers(2, 9))
        m = random_factor_model(rng, n)
        t = random_horizons(rng, n)
        a, b = cc.joint_survival(m, t), cc.joint_survival_mobius(m, t)
        assert abs(a - b) <= 1e-12 * a


def test_tie_permutations_agree():
    rng = np.random.default_rng(22)
    for _ in range(30):
        m = random_factor_model(rng, 4)
        t = (1.0, 0.5, 1.0, 1.0)
        base = nested_exponent(m, t)
        ties = [0, 2, 3]
        for perm in itertools.permutations(ties):
            sigma = (2,) + tuple(i + 1 for i in perm)
            assert abs(nested_exponent(m, t, sigma) - base) <= 1e-14 * max(1.0, base)


def test_relabeling_equivariance():
    rng = np.random.default_rng(23)
    for _ in range(30):
        n = 4
        m = random_factor_model(rng, n)
        t = random_horizons(rng, n)
        perm = rng.permutation(n)
        factors = []
        for f in m.factors:
            if isinstance(f, cc.CompoundPoisson) and not f.shared_marks:
                f = cc.CompoundPoisson(f.intensity, component_jumps=tuple(f.component_jumps[i] for i in perm))
            factors.append(f)
        mp = cc.FactorModel(tuple(factors), m.loadings[perm])
        tp = tuple(t[i] for i in perm)
        assert cc.joint_survival(mp, tp) == pytest.approx(cc.joint_survival(m, t), rel=1e-14, abs=1e-300)


def test_monotone_in_each_horizon_and_positive_dependence():
    rng = np.random.default_rng(24)
    grid = np.linspace(0, 2, 9)
    for _ in range(10):
        m = random_factor_model(rng, 3)
        for t in itertools.product(grid[::2], repeat=3):
            s = cc.joint_survival(m, t)
            marg = math.prod(math.exp(-cc.subset_compensator(m, 1 << i, t[i])) for i in range(3))
            assert s >= marg * (1 - 1e-14)
            for i in range(3):
                bumped = list(t)
                bumped[i] += 0.25
                assert cc.joint_survival(m, bumped) <= s
            assert (s == 1.0) == all(x == 0 for x in t)


def test_marginalization_to_submodel():
    rng = np.random.default_rng(25)
    for _ in range(20):
        m = random_factor_model(rng, 4)
        t = (0.7, 0.0, 1.9, 0.0)
        sub = m.restrict([1, 3])
        assert cc.joint_survival(m, t) == pytest.approx(cc.joint_survival(sub, (0.7, 1.9)), rel=1e-14)


@given(st.floats(0, 5), st.floats(0, 5))
def test_bivariate_matches_nested(t1, t2):
    m = mixed_power_model()
    assert cc.bivariate_survival(m, t1, t2) == pytest.approx(cc.joint_survival(m, (t1, t2)), rel=1e-14, abs=1e-300)


def test_min_decomposition(shared_driver):
    parts = (cc.ContinuousHazard("linear", rate=0.1), cc.ContinuousHazard("linear", rate=0.1))
    value = cc.min_decomposition_survival(shared_driver, parts, (1.0, 2.0))
    assert value == pytest.approx(math.exp(-0.3) * math.exp(-2.5), rel=1e-14)
    zero = (cc.ContinuousHazard("zero"),) * 2
    assert cc.min_decomposition_survival(shared_driver, zero, (1.0, 2.0)) == cc.joint_survival(shared_driver, (1.0, 2.0))
    only = cc.MinDecomposition(None, (cc.ContinuousHazard("linear", rate=0.5), cc.ContinuousHazard("linear", rate=2.0)))
    assert cc.min_decomposition_survival(only, (1.0, 3.0)) == pytest.approx(math.exp(-6.5), rel=1e-15)
