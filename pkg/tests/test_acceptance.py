"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Tolerances, sample sizes and runtime budgets are the stated ones. Seeds are
fixed up front so every run is reproducible.
"""

import math
import os
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

import corrcox as cc
from corrcox.numerics import full_mask, indices_from_mask

sys.path.insert(0, str(Path(__file__).resolve().parent))
from conftest import random_factor_model, random_horizons  # noqa: E402

SPECS = Path(__file__).resolve().parent.parent / "demos" / "specs"
MC_PATHS = 1_000_000
SIGMAS = 4.0
SEED = 2026


@pytest.fixture
def report(capsys):
    """Print one line per criterion, outside pytest's capture."""

    def emit(number, title, ok, elapsed, budget, detail=""):
        ok = ok and elapsed < budget
        line = f"criterion {number} [{title}]: {'PASS' if ok else 'FAIL'} ({elapsed:.3f}s of {budget:g}s budget)"
        if detail:
            line += f" {detail}"
        with capsys.disabled():
            print("\n" + line)
        return ok

    return emit


def worst_z(pairs):
    """Largest |estimate - target| / stderr over (McEstimate, target) pairs."""
    return max(abs(est.zscore(target)) for est, target in pairs)


# ---------------------------------------------------------------------------
# 1. Hand-derived golden values
# ---------------------------------------------------------------------------


def test_criterion_1_golden_values(report):
    # A throwaway twin warms imports and numpy dispatch; the timed model is fresh.
    twin = cc.shared_driver_model(2.0, [cc.ExponentialJumps(1.0), cc.ExponentialJumps(1.0)])
    cc.joint_survival(twin, (0.5, 0.5)), cc.mo_rates(twin), cc.simultaneous_default_prob_mo(twin)
    model = cc.shared_driver_model(2.0, [cc.ExponentialJumps(1.0), cc.ExponentialJumps(1.0)])
    start = time.perf_counter()
    value = cc.joint_survival(model, (1.0, 2.0))
    rates = cc.mo_rates(model)
    simultaneous = cc.simultaneous_default_prob_mo(model)
    elapsed = time.perf_counter() - start
    target = math.exp(-2.5)
    errors = [
        abs(value - target) / target,
        max(abs(rates[m] - 0.5) for m in (1, 2, 3)),
        abs(simultaneous - 1.0 / 3.0),
    ]
    ok = max(errors) <= 1e-12
    assert report(1, "golden values", ok, elapsed, 1e-3, f"max error {max(errors):.2e}")


# ---------------------------------------------------------------------------
# 2. Nested formula vs Möbius form
# ---------------------------------------------------------------------------


def random_deformation(rng, n):
    kind = rng.integers(0, 3)
    phi = tuple(float(x) for x in rng.uniform(0.5, 1.5, size=n))
    if kind == 0:
        return None
    if kind == 1:
        return cc.TimeDeformation("identity", covariate_scales=phi)
    return cc.TimeDeformation("power", exponent=float(rng.uniform(0.5, 2.0)), scale=float(rng.uniform(0.5, 2.0)), covariate_scales=phi)


def test_criterion_2_mobius_consistency(report):
    rng = np.random.default_rng(SEED)
    cases = []
    for _ in range(1000):
        n = int(rng.integers(2, 9))
        cases.append((random_factor_model(rng, n, random_deformation(rng, n)), random_horizons(rng, n)))
    start = time.perf_counter()
    worst_rel = 0.0
    worst_roundtrip = 0.0
    roundtrip_ok = True
    for model, h in cases:
        a = cc.joint_survival(model, h)
        b = cc.joint_survival_mobius(model, h)
        worst_rel = max(worst_rel, abs(a - b) / a if a != b else 0.0)
        check = cc.mobius_inverse_check(cc.build_table(model), 1e-10)
        roundtrip_ok &= check.passed
        worst_roundtrip = max(worst_roundtrip, check.max_residual)
    elapsed = time.perf_counter() - start
    ok = worst_rel <= 1e-12 and roundtrip_ok and worst_roundtrip <= 1e-10
    detail = f"worst relative gap {worst_rel:.2e}, worst round-trip residual {worst_roundtrip:.2e}"
    assert report(2, "Mobius consistency", ok, elapsed, 10.0, detail)


# ---------------------------------------------------------------------------
# 3. Monte Carlo vs closed form
# ---------------------------------------------------------------------------


def bivariate_cp_models():
    return [
        cc.shared_driver_model(2.0, [cc.ExponentialJumps(1.0), cc.ExponentialJumps(1.0)]),
        cc.FactorModel(
            (
                cc.CompoundPoisson(1.0, jumps=cc.GammaJumps(2.0, 3.0)),
                cc.CompoundPoisson(0.5, jumps=cc.ExponentialJumps(2.0)),
            ),
            [[1.0, 0.0], [0.7, 1.2]],
        ),
        cc.FactorModel(
            (cc.CompoundPoisson(1.5, jumps=cc.EmpiricalJumps((0.5, 2.0), (0.3, 0.7))),),
            [[1.0], [0.4]],
        ),
    ]


def test_criterion_3_mc_vs_analytic(report):
    rng = np.random.default_rng(SEED + 3)
    start = time.perf_counter()
    pairs = []
    for i in range(20):
        n = int(rng.integers(2, 6))
        model = random_factor_model(rng, n)
        grids = [random_horizons(rng, n) for _ in range(5)]
        estimates = cc.mc_joint_survival_many(model, grids, MC_PATHS, SEED + i)
        for h, est in zip(grids, estimates):
            target = cc.joint_survival(model, h)
            pairs += [(est.rao_blackwell, target), (est.indicator, target)]
    sim_pairs = []
    for i, model in enumerate(bivariate_cp_models()):
        target = cc.simultaneous_default_prob_mo(model)
        est = cc.mc_simultaneous_prob(model, MC_PATHS, None, SEED + 100 + i)
        sim_pairs += [(est.indicator, target), (est.rao_blackwell, target)]
    elapsed = time.perf_counter() - start
    z_joint, z_sim = worst_z(pairs), worst_z(sim_pairs)
    ok = z_joint <= SIGMAS and z_sim <= SIGMAS
    detail = f"worst |z| joint {z_joint:.2f} over {len(pairs)}, simultaneous {z_sim:.2f} over {len(sim_pairs)}"
    assert report(3, "MC vs analytic", ok, elapsed, 300.0, detail)


# ---------------------------------------------------------------------------
# 4. Martingale mean one
# ---------------------------------------------------------------------------


def martingale_models():
    cp = cc.shared_driver_model(2.0, [cc.ExponentialJumps(1.0), cc.ExponentialJumps(1.0)])
    factor = cc.load_spec(SPECS / "three_factor.json").model
    gamma = cc.FactorModel(
        (cc.GammaSubordinator(1.0, 2.0), cc.GammaSubordinator(0.5, 1.0)),
        [[1.0, 0.0], [0.6, 1.0]],
    )
    return {"compound Poisson": cp, "factor": factor, "gamma": gamma}


def test_criterion_4_martingale_mean_one(report):
    start = time.perf_counter()
    pairs = []
    seed = SEED + 400
    for model in martingale_models().values():
        masks = [1 << i for i in range(model.n)] + [full_mask(model.n)]
        for t in (0.5, 1.0, 2.0):
            for mask in masks:
                seed += 1
                pairs.append((cc.mc_martingale_check(model, list(indices_from_mask(mask)), t, MC_PATHS, seed), 1.0))
    elapsed = time.perf_counter() - start
    z = worst_z(pairs)
    assert report(4, "martingale mean one", z <= SIGMAS, elapsed, 120.0, f"worst |z| {z:.2f} over {len(pairs)}")


# ---------------------------------------------------------------------------
# 5. Shot noise
# ---------------------------------------------------------------------------


def random_marks(rng):
    kind = rng.integers(0, 3)
    if kind == 0:
        return cc.ExponentialJumps(float(rng.uniform(0.5, 3.0)))
    if kind == 1:
        return cc.GammaJumps(float(rng.uniform(0.5, 3.0)), float(rng.uniform(0.5, 3.0)))
    return cc.ConstantJumps(float(rng.uniform(0.1, 2.0)))


def random_intensity(rng):
    if rng.uniform() < 0.5:
        return cc.ShotIntensity("constant", rate=float(rng.uniform(0.2, 3.0)))
    k = int(rng.integers(1, 4))
    bps = tuple(float(x) for x in np.sort(rng.uniform(0.1, 3.0, size=k)))
    rates = tuple(float(x) for x in rng.uniform(0.0, 3.0, size=k + 1))
    return cc.ShotIntensity("piecewise_constant", breakpoints=bps, rates=rates)


def test_criterion_5_shot_noise(report):
    rng = np.random.default_rng(SEED + 5)
    tol = 1e-10
    start = time.perf_counter()
    worst_reduction = 0.0
    for _ in range(50):
        n = int(rng.integers(1, 4))
        kernels = tuple(cc.Kernel("constant", level=float(rng.uniform(0.0, 2.0))) for _ in range(n))
        model = cc.ShotNoiseModel(kernels, random_intensity(rng), random_marks(rng))
        t = float(rng.uniform(0.0, 4.0))
        for mask in range(1, full_mask(n) + 1):
            level = math.fsum(kernels[j - 1].level for j in indices_from_mask(mask))
            cp = model.intensity.integral(t) * float(model.marks.one_minus_laplace_transform(level))
            sn = cc.sn_subset_compensator(model, mask, t, tol)
            worst_reduction = max(worst_reduction, abs(sn - cp) / max(1.0, abs(cp)))
    worst_decay = 0.0
    for _ in range(20):
        lam, kappa, g0, beta = (float(x) for x in rng.uniform(0.2, 3.0, size=4))
        t = float(rng.uniform(0.0, 5.0))
        model = cc.ShotNoiseModel(
            (cc.Kernel("exponential_decay", g0=g0, decay=kappa),),
            cc.ShotIntensity("constant", rate=lam),
            cc.ExponentialJumps(beta),
        )
        closed = lam / kappa * math.log((beta + g0) / (beta + g0 * math.exp(-kappa * t)))
        sn = cc.sn_subset_compensator(model, 1, t, tol)
        worst_decay = max(worst_decay, abs(sn - closed) / max(1.0, abs(closed)))

    piecewise = cc.ShotIntensity("piecewise_constant", breakpoints=(1.0,), rates=(1.0, 2.0))
    sets = [
        # Constant kernels under a time-varying arrival rate, staggered horizons.
        (cc.ShotNoiseModel((cc.Kernel("constant", level=1.0), cc.Kernel("constant", level=0.5)), piecewise, cc.ExponentialJumps(1.0)), (1.0, 2.0), True),
        # Linear ramps observed at a common horizon.
        (
            cc.ShotNoiseModel(
                (cc.Kernel("linear_ramp", slope=1.0, cap=2.0), cc.Kernel("linear_ramp", slope=0.5, cap=1.0, g0=0.2)),
                piecewise,
                cc.ExponentialJumps(1.0),
            ),
            (1.5, 1.5),
            True,
        ),
        # Exponential decay at (1, 1): the default times are not monotone in
        # the hazard, so only the conditional estimator targets the formula.
        (
            cc.ShotNoiseModel(
                (cc.Kernel("exponential_decay", g0=1.0, decay=1.0), cc.Kernel("exponential_decay", g0=2.0, decay=0.5)),
                cc.ShotIntensity("constant", rate=1.5),
                cc.ExponentialJumps(1.0),
            ),
            (1.0, 1.0),
            False,
        ),
    ]
    pairs = []
    for i, (model, h, with_indicator) in enumerate(sets):
        target = cc.sn_bivariate_survival(model, *h, tol)
        est = cc.mc_joint_survival(model, h, MC_PATHS, SEED + 500 + i)
        pairs.append((est.rao_blackwell, target))
        if with_indicator:
            pairs.append((est.indicator, target))
    elapsed = time.perf_counter() - start
    z = worst_z(pairs)
    ok = worst_reduction <= tol and worst_decay <= tol and z <= SIGMAS
    detail = f"reduction {worst_reduction:.1e}, decay closed form {worst_decay:.1e}, worst |z| {z:.2f}"
    assert report(5, "shot noise", ok, elapsed, 180.0, detail)


# ---------------------------------------------------------------------------
# 6. Bivariate vs multivariate
# ---------------------------------------------------------------------------


def test_criterion_6_bivariate_agreement(report):
    rng = np.random.default_rng(SEED + 6)
    models = [random_factor_model(rng, 2, random_deformation(rng, 2)) for _ in range(10)]
    grid = np.linspace(0.0, 3.0, 20)
    start = time.perf_counter()
    worst = 0.0
    for model in models:
        for t1 in grid:
            for t2 in grid:
                a = cc.bivariate_survival(model, float(t1), float(t2))
                b = cc.joint_survival(model, (float(t1), float(t2)))
                worst = max(worst, abs(a - b) / b if a != b else 0.0)
    elapsed = time.perf_counter() - start
    assert report(6, "bivariate agreement", worst <= 1e-14, elapsed, 1.0, f"worst relative gap {worst:.2e}")


# ---------------------------------------------------------------------------
# 7. Min decomposition
# ---------------------------------------------------------------------------


def test_criterion_7_min_decomposition(report):
    shared = cc.shared_driver_model(2.0, [cc.ExponentialJumps(1.0), cc.ExponentialJumps(1.0)])
    three = cc.load_spec(SPECS / "three_factor.json").model
    configs = [
        (cc.MinDecomposition(shared, (cc.ContinuousHazard("linear", rate=0.1), cc.ContinuousHazard("power", scale=0.05, exponent=1.5))), (1.0, 2.0)),
        (
            cc.MinDecomposition(
                three,
                (
                    cc.ContinuousHazard("zero"),
                    cc.ContinuousHazard("piecewise_linear", knots=((0.0, 0.0), (1.0, 0.2), (2.0, 0.3))),
                    cc.ContinuousHazard("linear", rate=0.3),
                ),
            ),
            (0.5, 1.5, 1.5),
        ),
        (cc.MinDecomposition(None, (cc.ContinuousHazard("linear", rate=0.4), cc.ContinuousHazard("power", scale=0.2, exponent=2.0))), (1.0, 1.5)),
    ]
    start = time.perf_counter()
    worst_fact = 0.0
    pairs = []
    for i, (model, h) in enumerate(configs):
        value = cc.min_decomposition_survival(model, h)
        cont = math.exp(-math.fsum(float(p(t)) for p, t in zip(model.continuous_part, h)))
        jump = 1.0 if model.jump_model is None else cc.joint_survival(model.jump_model, h)
        worst_fact = max(worst_fact, abs(value - cont * jump) / value)
        est = cc.mc_min_decomposition(model, paths=MC_PATHS, rng=SEED + 700 + i, query=h)
        pairs += [(est.rao_blackwell, value), (est.indicator, value)]
    elapsed = time.perf_counter() - start
    z = worst_z(pairs)
    ok = worst_fact <= 1e-12 and z <= SIGMAS
    assert report(7, "min decomposition", ok, elapsed, 60.0, f"factorization gap {worst_fact:.1e}, worst |z| {z:.2f}")


# ---------------------------------------------------------------------------
# 8. CLI determinism
# ---------------------------------------------------------------------------


def test_criterion_8_cli_determinism(report):
    cmd = [sys.executable, "-m", "corrcox.cli", "simulate", str(SPECS / "shared_driver.json"), "--paths", str(MC_PATHS), "--seed", "42"]
    start = time.perf_counter()
    outputs = []
    for threads in ("1", "1", "8"):
        env = dict(os.environ, CORRCOX_THREADS=threads)
        outputs.append(subprocess.run(cmd, capture_output=True, env=env, check=True).stdout)
    elapsed = time.perf_counter() - start
    ok = outputs[0] == outputs[1] == outputs[2] and len(outputs[0]) > 0
    assert report(8, "CLI determinism", ok, elapsed, 60.0, f"{len(outputs[0])} bytes, identical={ok}")
