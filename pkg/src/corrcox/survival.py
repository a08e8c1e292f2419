"""Closed-form joint survival probabilities.

Everything is assembled in log space: the compensator increments are summed
into one exponent and exponentiated once. Exponents beyond ``LOG_FLOOR`` are
reported as survival 0; :func:`joint_log_survival` gives the exponent itself.

A "compensator source" is anything the engine can ask for a subset compensator ``comp_J(t)``:
a :class:`FactorModel`, a prebuilt :class:`CompensatorTable`, or any object
with a ``subset_compensator(mask, t)`` method (the shot-noise models use this).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .compensators import CompensatorTable, build_table, mo_rates, subset_rate
from .errors import ArgumentError, UnsupportedModelError
from .models import ContinuousHazard, FactorModel, MinDecomposition
from .numerics import check_capacity, full_mask, log_sum_accumulate, popcount, subsets_of

LOG_FLOOR = 700.0


@dataclass(frozen=True)
class SurvivalQuery:
    """Horizons ``(t_1, ..., t_n)`` and a conditioning time ``t <= min t_i``."""

    horizons: tuple
    conditioning_time: float = 0.0

    def __post_init__(self):
        h = tuple(float(x) for x in np.ravel(self.horizons))
        if not h:
            raise ArgumentError("at least one horizon is required")
        if any(not math.isfinite(x) or x < 0 for x in h):
            raise ArgumentError(f"horizons must be finite and >= 0, got {h}")
        t = float(self.conditioning_time)
        if not math.isfinite(t) or t < 0 or t > min(h):
            raise ArgumentError(f"conditioning time {t} must lie in [0, min(horizons)]")
        object.__setattr__(self, "horizons", h)
        object.__setattr__(self, "conditioning_time", t)

    @property
    def n(self) -> int:
        return len(self.horizons)


def as_query(query) -> SurvivalQuery:
    return query if isinstance(query, SurvivalQuery) else SurvivalQuery(tuple(np.ravel(query)))


@dataclass(frozen=True)
class NestedChain:
    """Ordering permutation (1-based) and the nested sets ``A_1 > ... > A_n``."""

    sigma: tuple
    sets: tuple


def order_horizons(t, sigma: Sequence[int] | None = None) -> NestedChain:
    """Sort horizons ascending (stable) and build the nested subsets.

    A caller-supplied ``sigma`` (1-based) is accepted when it also orders
    ``t``; this is how tie permutations are exercised.
    """
    t = [float(x) for x in np.ravel(t)]
    if not t or any(not math.isfinite(x) or x < 0 for x in t):
        raise ArgumentError(f"horizons must be a nonempty vector of finite values >= 0, got {t}")
    n = len(t)
    if sigma is None:
        order = sorted(range(n), key=lambda i: t[i])
    else:
        order = [int(s) - 1 for s in sigma]
        if sorted(order) != list(range(n)):
            raise ArgumentError(f"{tuple(sigma)} is not a permutation of 1..{n}")
        if any(t[a] > t[b] for a, b in zip(order, order[1:])):
            raise ArgumentError(f"permutation {tuple(sigma)} does not sort the horizons")
    sets = []
    mask = 0
    for i in reversed(order):
        mask |= 1 << i
        sets.append(mask)
    return NestedChain(tuple(i + 1 for i in order), tuple(reversed(sets)))


def compensator_fn(source) -> Callable[[int, float], float]:
    if isinstance(source, FactorModel):
        rates = source._rate_memo

        def lam(mask, t):
            if mask == 0:
                return 0.0
            if mask not in rates:
                rates[mask] = subset_rate(source, mask)
            return float(source.clock(t)) * rates[mask]

        return lam
    if isinstance(source, CompensatorTable):
        return lambda mask, t: 0.0 if mask == 0 else source.compensator(mask, t)
    if hasattr(source, "subset_compensator"):
        return lambda mask, t: 0.0 if mask == 0 else source.subset_compensator(mask, t)
    raise ArgumentError(f"cannot evaluate compensators of {type(source).__name__}")


def _source_n(source) -> int:
    return source.n


def _exp_neg(exponent: float) -> float:
    return 0.0 if exponent > LOG_FLOOR else math.exp(-exponent)


def _unconditional(query: SurvivalQuery):
    if query.conditioning_time > 0:
        raise UnsupportedModelError(
            "conditional survival at t > 0 depends on the simulated path up to t; "
            "use simulation.mc_conditional_survival with a simulated path"
        )


def _check_query(source, query: SurvivalQuery):
    if query.n != _source_n(source):
        raise ArgumentError(f"{query.n} horizons given for a {_source_n(source)}-component model")


def nested_exponent(source, horizons, sigma=None) -> float:
    """``sum_k (comp_{S_k} - comp_{S_{k+1}})`` at the ``k``-th smallest horizon, ``S_k`` the names still alive there."""
    lam = compensator_fn(source)
    chain = order_horizons(horizons, sigma)
    t = [float(x) for x in np.ravel(horizons)]
    sets = chain.sets + (0,)
    terms = []
    for k, i in enumerate(chain.sigma):
        tk = t[i - 1]
        terms.append(lam(sets[k], tk) - lam(sets[k + 1], tk))
    return log_sum_accumulate(terms)


def joint_log_survival(source, query) -> float:
    """Exponent ``E`` with ``P(T_1 > t_1, ..., T_n > t_n) = exp(-E)``."""
    query = as_query(query)
    _check_query(source, query)
    _unconditional(query)
    return nested_exponent(source, query.horizons)


def joint_survival(source, query) -> float:
    """Unconditional joint survival from the nested-subset formula."""
    return _exp_neg(joint_log_survival(source, query))


def _table(source) -> CompensatorTable:
    if isinstance(source, CompensatorTable):
        return source
    if isinstance(source, FactorModel):
        check_capacity(source.n)
        return build_table(source)
    raise UnsupportedModelError("the Möbius form needs a factor model or a rate table")


def max_horizon_per_subset(horizons) -> np.ndarray:
    """``max_{i in J} t_i`` for every mask ``J`` (0 for the empty set)."""
    t = np.asarray(horizons, dtype=np.float64)
    n = t.size
    out = np.zeros(1 << n)
    for i in range(n):
        bit = 1 << i
        out[bit : 2 * bit] = np.maximum(out[:bit], t[i])
    return out


def mobius_log_survival(source, query) -> float:
    query = as_query(query)
    _check_query(source, query)
    _unconditional(query)
    if not isinstance(source, (FactorModel, CompensatorTable)) and hasattr(source, "subset_compensator"):
        return _generic_mobius_exponent(source, query.horizons)
    table = _table(source)
    clock = np.asarray(table.clock(max_horizon_per_subset(query.horizons)), dtype=np.float64)
    return math.fsum(table.gamma * clock)


def _generic_mobius_exponent(source, horizons) -> float:
    # Time-dependent compensators: each interaction term is built from the
    # complements' compensators at that subset's own horizon max_{i in J} t_i.
    n = len(horizons)
    check_capacity(n)
    full = full_mask(n)
    tmax = max_horizon_per_subset(horizons)
    lam = compensator_fn(source)
    cache = {}

    def value(mask, t):
        key = (mask, t)
        if key not in cache:
            cache[key] = lam(mask, t)
        return cache[key]

    terms = []
    for mask in range(1, full + 1):
        t = float(tmax[mask])
        size_j = popcount(mask)
        for sub in subsets_of(mask):
            sign = 1.0 if (size_j - popcount(sub) + 1) % 2 == 0 else -1.0
            terms.append(sign * value(full & ~sub, t))
    return math.fsum(terms)


def joint_survival_mobius(source, query) -> float:
    """Joint survival as ``exp(-sum_J shock[J] clock(max_{i in J} t_i))``."""
    return _exp_neg(mobius_log_survival(source, query))


def bivariate_survival(source, t1: float, t2: float) -> float:
    """Two-component survival, evaluated branch by branch."""
    if _source_n(source) != 2:
        raise ArgumentError("bivariate_survival needs a two-component model")
    SurvivalQuery((t1, t2))
    lam = compensator_fn(source)
    if t1 <= t2:
        exponent = lam(2, t2) + (lam(3, t1) - lam(2, t1))
    else:
        exponent = lam(1, t1) + (lam(3, t2) - lam(1, t2))
    return _exp_neg(exponent)


def min_survival(source, t: float) -> float:
    """``P(min_i T_i > t) = exp(-comp_full(t))``."""
    SurvivalQuery((t,))
    lam = compensator_fn(source)
    return _exp_neg(lam(full_mask(_source_n(source)), t))


def simultaneous_default_prob_mo(source) -> float:
    """``P(T_1 = T_2) = shock[12] / (shock[1] + shock[2] + shock[12])``."""
    if _source_n(source) != 2:
        raise ArgumentError("simultaneous default probability is implemented for n = 2")
    rates = mo_rates(source if isinstance(source, CompensatorTable) else _table(source))
    g1, g2, g12 = rates[1], rates[2], rates[3]
    if g12 < 0:
        raise UnsupportedModelError(f"negative joint shock rate for [1,2] = {g12}: not a Marshall-Olkin law")
    total = g1 + g2 + g12
    if total <= 0:
        raise UnsupportedModelError("all shock rates vanish; defaults never occur")
    return g12 / total


def _continuous_exponent(continuous_part, horizons) -> float:
    parts = tuple(continuous_part)
    if len(parts) != len(horizons):
        raise ArgumentError(f"{len(parts)} continuous hazards for {len(horizons)} horizons")
    for p in parts:
        if not isinstance(p, ContinuousHazard):
            raise ArgumentError("continuous_part entries must be ContinuousHazard")
    return log_sum_accumulate([float(p(t)) for p, t in zip(parts, horizons)])


def min_decomposition_log_survival(model, continuous_part=None, query=None) -> float:
    if isinstance(model, MinDecomposition):
        if query is None:
            query, continuous_part = continuous_part, None
        continuous_part = model.continuous_part
        model = model.jump_model
    query = as_query(query)
    _unconditional(query)
    total = _continuous_exponent(continuous_part, query.horizons)
    if model is not None:
        total += joint_log_survival(model, query)
    return total


def min_decomposition_survival(model, continuous_part=None, query=None) -> float:
    """``exp(-sum_j X^j(t_j))`` times the jump-part joint survival.

    Accepts ``(jump_model, continuous_part, query)`` or ``(MinDecomposition, query)``;
    a ``None`` jump model is the purely continuous case.
    """
    return _exp_neg(min_decomposition_log_survival(model, continuous_part, query))
