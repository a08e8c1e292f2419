"""Cross-checks run by ``corrcox validate``.

Each check returns a :class:`Check`; Monte Carlo checks pass when the
estimate lies within ``SIGMA_MULTIPLE`` standard errors of its target.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .compensators import build_table, marginal_recovery_residuals, mobius_inverse_check
from .models import FactorModel, MinDecomposition
from .numerics import full_mask, indices_from_mask
from .shot_noise import ShotNoiseModel, sn_exact_joint_survival
from .simulation import (
    mc_joint_survival_many,
    mc_martingale_check,
    mc_simultaneous_prob,
)
from .survival import (
    bivariate_survival,
    joint_survival,
    joint_survival_mobius,
    min_decomposition_survival,
)

SIGMA_MULTIPLE = 4.0
EXACT_RTOL = 1e-12
BIVARIATE_RTOL = 1e-14
MOBIUS_RTOL = 1e-10
NEGATIVE_RATE_SLACK = 1e-10
QUAD_TOL = 1e-10

TOLERANCES = {
    "sigma_multiple": SIGMA_MULTIPLE,
    "nested_vs_mobius_rtol": EXACT_RTOL,
    "bivariate_rtol": BIVARIATE_RTOL,
    "mobius_roundtrip_rtol": MOBIUS_RTOL,
    "negative_rate_slack": NEGATIVE_RATE_SLACK,
    "quadrature_tol": QUAD_TOL,
}


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    observed: float
    expected: float
    stderr: float | None = None
    tolerance: float | None = None
    detail: str = ""

    def to_dict(self):
        return {
            "name": self.name,
            "passed": self.passed,
            "observed": self.observed,
            "expected": self.expected,
            "stderr": self.stderr,
            "tolerance": self.tolerance,
            "detail": self.detail,
        }


def _rel(a, b):
    return abs(a - b) / max(abs(b), 1e-300) if a != b else 0.0


def _close(name, observed, expected, rtol, detail=""):
    err = _rel(observed, expected)
    return Check(name, err <= rtol, float(observed), float(expected), None, rtol, detail)


def _mc(name, est, target, detail=""):
    ok = abs(est.value - target) <= SIGMA_MULTIPLE * est.stderr
    return Check(name, bool(ok), est.value, float(target), est.stderr, SIGMA_MULTIPLE, detail)


def _fmt(h):
    return "(" + ", ".join(repr(float(x)) for x in h) + ")"


def default_horizons(model) -> list[tuple]:
    """An all-equal vector and a staggered one, kept inside any clock range."""
    n = model.n
    top = 1.0
    jump = model.jump_model if isinstance(model, MinDecomposition) else model
    if isinstance(jump, FactorModel) and jump.deformation is not None:
        top = min(top, jump.deformation.max_time)
    equal = tuple([top] * n)
    staggered = tuple(top * (0.5 + 0.5 * i / max(n - 1, 1)) for i in range(n))
    return [equal, staggered]


def _martingale_times(model):
    times = [0.5, 1.0, 2.0]
    if isinstance(model, FactorModel) and model.deformation is not None:
        times = [t for t in times if t <= model.deformation.max_time] or [model.deformation.max_time]
    return times


def _martingale_checks(model, paths, seed):
    out = []
    n = model.n
    subsets = [1 << i for i in range(n)] + ([full_mask(n)] if n > 1 else [])
    for t in _martingale_times(model):
        for mask in subsets:
            est = mc_martingale_check(model, mask, t, paths, seed)
            label = str(list(indices_from_mask(mask))).replace(" ", "")
            out.append(_mc(f"martingale_mean_one J={label} t={t!r}", est, 1.0))
    return out


def _analytic_pair(model, h):
    a = joint_survival(model, h)
    b = joint_survival_mobius(model, h)
    return a, b


def factor_checks(model: FactorModel, horizons, paths, seed, table=None) -> list[Check]:
    checks = []
    table = build_table(model) if table is None else table
    mob = mobius_inverse_check(table, MOBIUS_RTOL)
    checks.append(Check("mobius_roundtrip", mob.passed, mob.max_residual, 0.0, None, MOBIUS_RTOL))
    resid = marginal_recovery_residuals(table)
    scale = max(1.0, float(np.max(np.abs(table.rates))))
    worst = float(np.max(np.abs(resid)))
    checks.append(Check("marginal_recovery", worst <= MOBIUS_RTOL * scale, worst, 0.0, None, MOBIUS_RTOL))
    gamma = table.gamma[1:]
    lowest = float(gamma.min())
    negative = [str(list(indices_from_mask(m + 1))).replace(" ", "") for m in np.flatnonzero(gamma < -NEGATIVE_RATE_SLACK)]
    detail = "negative interaction rates for " + ", ".join(negative) if negative else ""
    checks.append(
        Check("mo_representability", not negative, lowest, 0.0, None, NEGATIVE_RATE_SLACK, detail)
    )
    for h in horizons:
        a, b = _analytic_pair(model, h)
        checks.append(_close(f"nested_vs_mobius t={_fmt(h)}", b, a, EXACT_RTOL))
        if model.n == 2:
            checks.append(_close(f"bivariate_agreement t={_fmt(h)}", bivariate_survival(model, *h), a, BIVARIATE_RTOL))
    for h, est in zip(horizons, mc_joint_survival_many(model, horizons, paths, seed)):
        a = joint_survival(model, h)
        checks.append(_mc(f"mc_joint_survival_rb t={_fmt(h)}", est.rao_blackwell, a))
        checks.append(_mc(f"mc_joint_survival_indicator t={_fmt(h)}", est.indicator, a))
    checks.extend(_martingale_checks(model, paths, seed))
    if model.n == 2 and model.is_pure_jump_cp:
        g = table.gamma
        total = g[1] + g[2] + g[3]
        if total > 0 and not negative:
            target = g[3] / total
            est = mc_simultaneous_prob(model, paths, None, seed)
            checks.append(_mc("simultaneous_indicator", est.indicator, target))
            checks.append(_mc("simultaneous_rao_blackwell", est.rao_blackwell, target))
    return checks


def shot_noise_checks(model: ShotNoiseModel, horizons, paths, seed) -> list[Check]:
    checks = []
    if all(k.is_constant for k in model.kernels):
        # Constant kernels reduce to a compound Poisson compensator.
        for t in sorted({max(h) for h in horizons}):
            for mask in range(1, full_mask(model.n) + 1):
                level = sum(model.kernels[j - 1](0.0) for j in indices_from_mask(mask))
                cp = model.intensity.integral(t) * float(model.marks.one_minus_laplace_transform(level))
                sn = model.subset_compensator(mask, t, QUAD_TOL)
                err = abs(sn - cp)
                label = str(list(indices_from_mask(mask))).replace(" ", "")
                checks.append(
                    Check(
                        f"constant_kernel_reduction J={label} t={t!r}",
                        err <= QUAD_TOL * max(1.0, abs(cp)),
                        sn,
                        cp,
                        None,
                        QUAD_TOL,
                    )
                )
    for h in horizons:
        a, b = _analytic_pair(model, h)
        checks.append(_close(f"nested_vs_mobius t={_fmt(h)}", b, a, 1e-9))
        if model.n == 2:
            checks.append(_close(f"bivariate_agreement t={_fmt(h)}", bivariate_survival(model, *h), a, BIVARIATE_RTOL))
    for h, est in zip(horizons, mc_joint_survival_many(model, horizons, paths, seed)):
        checks.append(_mc(f"mc_joint_survival_rb t={_fmt(h)}", est.rao_blackwell, joint_survival(model, h)))
        if model.is_monotone:
            exact = sn_exact_joint_survival(model, h)
            checks.append(_mc(f"mc_joint_survival_indicator t={_fmt(h)}", est.indicator, exact))
    checks.extend(_martingale_checks(model, paths, seed))
    return checks


def min_decomposition_checks(model: MinDecomposition, horizons, paths, seed) -> list[Check]:
    checks = []
    for h in horizons:
        value = min_decomposition_survival(model, h)
        cont = math.exp(-math.fsum(float(p(t)) for p, t in zip(model.continuous_part, h)))
        jump = 1.0 if model.jump_model is None else joint_survival(model.jump_model, h)
        checks.append(_close(f"factorization t={_fmt(h)}", value, cont * jump, EXACT_RTOL))
    for h, est in zip(horizons, mc_joint_survival_many(model, horizons, paths, seed)):
        target = min_decomposition_survival(model, h)
        checks.append(_mc(f"mc_min_decomposition_rb t={_fmt(h)}", est.rao_blackwell, target))
        checks.append(_mc(f"mc_min_decomposition_indicator t={_fmt(h)}", est.indicator, target))
    return checks


def run_checks(model, horizons, paths, seed) -> list[Check]:
    if isinstance(model, FactorModel):
        return factor_checks(model, horizons, paths, seed)
    if isinstance(model, ShotNoiseModel):
        return shot_noise_checks(model, horizons, paths, seed)
    return min_decomposition_checks(model, horizons, paths, seed)
