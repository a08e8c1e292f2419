"""Subset compensators, their Möbius interaction terms and Marshall-Olkin rates.

For a factor model every subset compensator is linear in deformed time,
``comp_J(t) = clock(t) * rates[J]``, where ``rates[J]`` is the joint Laplace
exponent evaluated at the covariate scales of ``J`` (zero elsewhere),
so all subset quantities are tabulated as rates and scaled by the clock.

Subsets are integer bitmasks, bit ``i`` standing for component ``i + 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple

import numpy as np

from .errors import ArgumentError, CapacityError, UnsupportedModelError
from .models import FactorModel, TimeDeformation, deformed_time
from .numerics import (
    MAX_COMPONENTS,
    full_mask,
    indices_from_mask,
    popcount,
    subset_sums,
    subsets_of,
)

# Exact (fsum) Möbius sums up to this size; the 3**n cost is fine there.
_EXACT_MOBIUS_MAX_N = 10
NEGATIVE_RATE_SLACK = 1e-10


def _check_mask(mask: int, n: int) -> int:
    mask = int(mask)
    if mask <= 0:
        raise ArgumentError("subset must be nonempty")
    if mask >> n:
        raise ArgumentError(f"subset {indices_from_mask(mask)} is not contained in 1..{n}")
    return mask


def _factor_rates(model: FactorModel, masks: np.ndarray) -> np.ndarray:
    # Row k, column r is factor k's share of rates[J] for J = masks[r]: the
    # factor sees loadings[i, k] * scale_i summed (shared marks) or kept per component
    # (independent marks) over J.
    n = model.n
    members = ((masks[:, None] >> np.arange(n)) & 1).astype(np.float64)
    weights = model.loadings * model.phi[:, None]
    out = np.zeros((len(model.factors), masks.shape[0]))
    for k, factor in enumerate(model.factors):
        w = members * weights[:, k][None, :]
        if getattr(factor, "shared_marks", True):
            out[k] = factor.exponent(w.sum(axis=1))
        else:
            prod = np.ones(masks.shape[0])
            for i, law in enumerate(factor.component_jumps):
                prod *= law.laplace_transform(w[:, i])
            out[k] = factor.intensity * (1.0 - prod)
    return out


def _rates_for_masks(model: FactorModel, masks: np.ndarray) -> np.ndarray:
    rates = np.zeros(masks.shape[0])
    for row in _factor_rates(model, masks):
        rates += row
    return rates


def subset_rate(model: FactorModel, mask: int) -> float:
    """Joint Laplace exponent at ``z_i = scale_i`` for ``i`` in ``J`` and 0 elsewhere."""
    mask = _check_mask(mask, model.n)
    return float(_rates_for_masks(model, np.array([mask], dtype=np.int64))[0])


def subset_compensator(model: FactorModel, mask: int, t: float) -> float:
    """``comp_J(t) = clock(t) * rates[J]``; works for any ``n`` (no table)."""
    rate = subset_rate(model, mask)
    return float(model.clock(t)) * rate


@dataclass(frozen=True)
class CompensatorTable:
    """Rates ``rates[J]`` for every subset (``rates[0] = 0``) of one model."""

    n: int
    rates: np.ndarray
    deformation: TimeDeformation | None = None
    # Optional per-factor split of ``rates`` (one row per factor). Inverting
    # each row separately keeps interaction rates that vanish exactly at 0.
    factor_rates: np.ndarray | None = None

    def __post_init__(self):
        rates = np.array(self.rates, dtype=np.float64)
        if rates.shape != (1 << self.n,):
            raise ArgumentError(f"rate table must have 2**n = {1 << self.n} entries")
        rates[0] = 0.0
        rates.setflags(write=False)
        object.__setattr__(self, "rates", rates)
        if self.factor_rates is not None:
            parts = np.array(self.factor_rates, dtype=np.float64)
            if parts.ndim != 2 or parts.shape[1] != rates.size:
                raise ArgumentError("factor_rates must have one row of 2**n entries per factor")
            parts[:, 0] = 0.0
            parts.setflags(write=False)
            object.__setattr__(self, "factor_rates", parts)

    def __getitem__(self, mask: int) -> float:
        return float(self.rates[mask])

    def clock(self, t):
        return deformed_time(self.deformation, t)

    def compensator(self, mask: int, t: float) -> float:
        return float(self.clock(t)) * float(self.rates[mask])

    @property
    def has_identity_clock(self) -> bool:
        return self.deformation is None or self.deformation.is_identity

    @cached_property
    def gamma(self) -> np.ndarray:
        """Möbius interaction rates ``gamma[J]`` for every mask (``gamma[0] = 0``)."""
        if self.factor_rates is None or len(self.factor_rates) < 2:
            return _gamma_all(self.rates, self.n)
        total = np.zeros(1 << self.n, dtype=np.longdouble)
        for row in self.factor_rates:
            total += _gamma_all(row, self.n)
        return total.astype(np.float64)

    def as_dict(self) -> dict[int, float]:
        return {mask: float(self.rates[mask]) for mask in range(1, 1 << self.n)}


def build_table(model: FactorModel) -> CompensatorTable:
    """Tabulate ``rates[J]`` over all ``2**n - 1`` nonempty subsets."""
    n = model.n
    if n > MAX_COMPONENTS:
        raise CapacityError(
            f"n = {n} exceeds {MAX_COMPONENTS}; use subset_compensator for on-demand values"
        )
    memo = getattr(model, "_rate_memo", {})
    if "table" not in memo:
        parts = _factor_rates(model, np.arange(1 << n, dtype=np.int64))
        rates = np.zeros(1 << n)
        for row in parts:
            rates += row
        memo["table"] = CompensatorTable(n, rates, model.deformation, parts)
    return memo["table"]


def _gamma_exact(rates: np.ndarray, n: int, mask: int) -> float:
    full = full_mask(n)
    size_j = popcount(mask)
    terms = []
    for sub in subsets_of(mask):
        sign = 1.0 if (size_j - popcount(sub) + 1) % 2 == 0 else -1.0
        terms.append(sign * rates[full & ~sub])
    return math.fsum(terms)


def _gamma_all(rates: np.ndarray, n: int) -> np.ndarray:
    size = 1 << n
    if n <= _EXACT_MOBIUS_MAX_N:
        out = np.zeros(size)
        for mask in range(1, size):
            out[mask] = _gamma_exact(rates, n, mask)
        return out
    # Fast Möbius transform of g(I) = rates[complement of I], in extended precision.
    full = size - 1
    g = np.asarray(rates, dtype=np.longdouble)[full ^ np.arange(size)]
    for i in range(n):
        bit = 1 << i
        view = g.reshape(-1, 2 * bit)
        view[:, bit:] -= view[:, :bit]
    out = (-g).astype(np.float64)
    out[0] = 0.0
    return out


def mobius_gamma(table: CompensatorTable, mask: int) -> float:
    """Interaction rate ``shock[J] = sum_{I subset J} (-1)^{|J|-|I|+1} rates[complement of I]``.

    The empty subset returns 0.
    """
    mask = int(mask)
    if mask == 0:
        return 0.0
    _check_mask(mask, table.n)
    return _gamma_exact(table.rates, table.n, mask)


class MobiusCheck(NamedTuple):
    passed: bool
    max_residual: float


def mobius_inverse_check(table: CompensatorTable, rtol: float = 1e-10) -> MobiusCheck:
    """Rebuild every ``rates[S]`` as ``sum_{J meets S} shock[J]`` and compare."""
    n = table.n
    gamma = table.gamma
    total = math.fsum(gamma)
    sums = subset_sums(gamma, n)
    masks = np.arange(1, 1 << n)
    rebuilt = total - sums[full_mask(n) ^ masks]
    lam = table.rates[1:]
    resid = np.abs(lam - rebuilt)
    passed = bool(np.all(resid <= rtol * np.maximum(1.0, lam)))
    return MobiusCheck(passed, float(resid.max()) if resid.size else 0.0)


def mo_rates(model: FactorModel | CompensatorTable) -> dict[int, float]:
    """Marshall-Olkin shock rates ``shock[J]`` for every nonempty subset.

    Only defined when the compensators are linear in calendar time.
    """
    table = model if isinstance(model, CompensatorTable) else build_table(model)
    if not table.has_identity_clock:
        raise UnsupportedModelError(
            "Marshall-Olkin rates need linear compensators (identity time deformation)"
        )
    gamma = table.gamma
    return {mask: float(gamma[mask]) for mask in range(1, 1 << table.n)}


def negative_rates(rates: dict[int, float], slack: float = NEGATIVE_RATE_SLACK) -> dict[int, float]:
    """Subsets whose interaction rate is below ``-slack`` (outside the MO class)."""
    return {mask: g for mask, g in rates.items() if g < -slack}


def marginal_recovery_residuals(table: CompensatorTable) -> np.ndarray:
    """``sum_{J containing i} shock[J] - rates[{i}]`` for each component ``i``."""
    n = table.n
    gamma = table.gamma
    masks = np.arange(1 << n)
    out = np.empty(n)
    for i in range(n):
        hit = (masks >> i) & 1 == 1
        out[i] = math.fsum(gamma[hit]) - table.rates[1 << i]
    return out
