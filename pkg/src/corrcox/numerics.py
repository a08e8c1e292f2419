"""Numerical substrate: adaptive quadrature, subset bitmasks, pairwise sums."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterator, Sequence

import numpy as np

from .errors import ArgumentError, NumericalError

MAX_COMPONENTS = 20
MAX_DEPTH = 40

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(15)
# Nudge the centre weight so the weights sum to exactly 2: constants then
# integrate without rounding.
_GL_WEIGHTS[7] = 2.0 - math.fsum(np.delete(_GL_WEIGHTS, 7))


# ---------------------------------------------------------------------------
# Quadrature
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QuadratureResult:
    value: float
    est_error: float
    panels: int


def _gl15(f, a, b):
    half = 0.5 * (b - a)
    mid = 0.5 * (a + b)
    x = mid + half * _GL_NODES
    fx = np.asarray(f(x), dtype=np.float64)
    if fx.shape != x.shape:
        fx = np.broadcast_to(fx, x.shape)
    return half * math.fsum(_GL_WEIGHTS * fx)


def integrate(
    f: Callable[[np.ndarray], np.ndarray],
    a: float,
    b: float,
    breakpoints: Sequence[float] = (),
    tol: float = 1e-10,
    max_depth: int = MAX_DEPTH,
) -> QuadratureResult:
    """Adaptive composite 15-point Gauss-Legendre quadrature.

    ``f`` must accept a numpy array of abscissae. The interval is first cut at
    every breakpoint strictly inside ``(a, b)``; each piece is then bisected
    recursively until the 15-point rule on a panel agrees with the sum of the
    rules on its two halves. The accepted value is the two-half sum.

    The target is ``|value - truth| <= tol * max(1, |value|)``; the budget is
    shared among panels in proportion to their width.

    Raises
    ------
    NumericalError
        If some panel still disagrees after ``max_depth`` bisections. The
        partial value and error estimate are attached to the exception.
    """
    if not (a <= b):
        raise ArgumentError(f"integration bounds must satisfy a <= b, got [{a}, {b}]")
    if a == b:
        return QuadratureResult(0.0, 0.0, 0)
    cuts = [a] + sorted(x for x in breakpoints if a < x < b) + [b]
    length = b - a

    # A first coarse pass fixes the scale used by the relative tolerance.
    coarse = sum(_gl15(f, lo, hi) for lo, hi in zip(cuts[:-1], cuts[1:]))
    budget = tol * max(1.0, abs(coarse))

    values, errors = [], []
    panels = 0
    failed = False
    # Explicit stack (left-to-right order) keeps the evaluation order fixed.
    for lo0, hi0 in zip(cuts[:-1], cuts[1:]):
        stack = [(lo0, hi0, _gl15(f, lo0, hi0), 0)]
        while stack:
            lo, hi, whole, depth = stack.pop()
            mid = 0.5 * (lo + hi)
            left = _gl15(f, lo, mid)
            right = _gl15(f, mid, hi)
            err = abs(left + right - whole)
            local = budget * (hi - lo) / length
            if err <= 0.5 * local or mid in (lo, hi):
                values.append(left + right)
                errors.append(err)
                panels += 2
            elif depth >= max_depth:
                values.append(left + right)
                errors.append(err)
                panels += 2
                failed = True
            else:
                stack.append((mid, hi, right, depth + 1))
                stack.append((lo, mid, left, depth + 1))
    value = math.fsum(values)
    est_error = math.fsum(errors)
    if failed:
        raise NumericalError(
            "adaptive quadrature hit the depth cap",
            value=value,
            est_error=est_error,
            panels=panels,
            interval=(a, b),
        )
    return QuadratureResult(value, est_error, panels)


# ---------------------------------------------------------------------------
# Subsets of {1, ..., n} as bitmasks (bit i <-> component i + 1)
# ---------------------------------------------------------------------------


def check_capacity(n: int) -> None:
    from .errors import CapacityError

    if n > MAX_COMPONENTS:
        raise CapacityError(f"n = {n} exceeds the supported maximum of {MAX_COMPONENTS} components")


def full_mask(n: int) -> int:
    return (1 << n) - 1


def subsets_iter(n: int) -> Iterator[int]:
    """All ``2**n`` subsets of ``{1..n}``, empty set first."""
    check_capacity(n)
    return iter(range(1 << n))


def subsets_of(mask: int) -> Iterator[int]:
    """Every submask of ``mask`` exactly once (descending, ends with 0)."""
    sub = mask
    while True:
        yield sub
        if sub == 0:
            return
        sub = (sub - 1) & mask


def complement(mask: int, n: int) -> int:
    return full_mask(n) & ~mask


def popcount(mask: int) -> int:
    return bin(mask).count("1")


def mask_from_indices(indices, n: int | None = None) -> int:
    """Bitmask from 1-based component indices."""
    mask = 0
    for i in indices:
        i = int(i)
        if i < 1 or (n is not None and i > n):
            raise ArgumentError(f"component index {i} outside 1..{n}")
        mask |= 1 << (i - 1)
    return mask


def indices_from_mask(mask: int) -> list[int]:
    """Sorted 1-based component indices of ``mask``."""
    out = []
    i = 1
    while mask:
        if mask & 1:
            out.append(i)
        mask >>= 1
        i += 1
    return out


def popcounts(n: int) -> np.ndarray:
    """Popcount of every mask in ``range(2**n)``."""
    pc = np.zeros(1 << n, dtype=np.int64)
    for i in range(n):
        pc[1 << i : 1 << (i + 1)] = pc[: 1 << i] + 1
    return pc


def subset_sums(values: np.ndarray, n: int) -> np.ndarray:
    """Zeta transform: ``out[A] = sum_{J subset of A} values[J]``."""
    out = np.array(values, dtype=np.float64, copy=True)
    for i in range(n):
        bit = 1 << i
        view = out.reshape(-1, 2 * bit)
        view[:, bit:] += view[:, :bit]
    return out


# ---------------------------------------------------------------------------
# Summation
# ---------------------------------------------------------------------------


def log_sum_accumulate(terms) -> float:
    """Pairwise summation along a fixed binary tree.

    Adjacent entries are added level by level (odd tails carried up), so the
    result depends only on the order of ``terms``.
    """
    x = np.asarray(terms, dtype=np.float64).ravel()
    if x.size == 0:
        return 0.0
    while x.size > 1:
        if x.size % 2:
            head = x[:-1:2] + x[1::2]
            x = np.concatenate([head, x[-1:]])
        else:
            x = x[0::2] + x[1::2]
    return float(x[0])
