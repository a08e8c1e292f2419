"""Event-driven Monte Carlo for factor, shot-noise and min-decomposition models.

Every random number is addressed by ``(seed, lane, path, index)`` (see
:mod:`corrcox.rng`), so a path's draws never depend on batching or on the
number of worker threads. Estimators fill one value per path into an array
indexed by path number and reduce it with a fixed pairwise tree.

Compound Poisson factors and shot noise are simulated exactly. Gamma factors
are sampled exactly at the query times in the batch estimators; single paths
(:func:`sample_path`) carry a lazily refined dyadic gamma bridge so that
default times can be located by bisection.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import numpy as np
from scipy import special

from .compensators import subset_compensator
from .errors import ArgumentError, TailBoundError, UnsupportedModelError
from .models import (
    CompoundPoisson,
    ContinuousHazard,
    FactorModel,
    GammaSubordinator,
    MinDecomposition,
    TimeDeformation,
)
from .numerics import full_mask, indices_from_mask, log_sum_accumulate, mask_from_indices
from .rng import MASK32, RngConfig, poisson_from_uniforms
from .shot_noise import ShotNoiseModel, sn_subset_compensator
from .survival import (
    SurvivalQuery,
    as_query,
    min_survival,
    nested_exponent,
    order_horizons,
)

MIN_PATHS = 1000
BATCH_SIZE = 1 << 16
DEFAULT_GRID_LEVEL = 12
TAU_TOL = 1e-10
TAIL_BOUND = 1e-6
_FINEST_LEVEL_CAP = 60


# ---------------------------------------------------------------------------
# Estimates and batching
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class McEstimate:
    """Sample mean with ``stderr = sample std / sqrt(paths)``."""

    value: float
    stderr: float
    paths: int
    seed: int

    def zscore(self, target: float) -> float:
        if self.stderr == 0:
            return 0.0 if self.value == target else math.inf
        return (self.value - target) / self.stderr

    def within(self, target: float, k: float = 4.0) -> bool:
        return abs(self.value - target) <= k * self.stderr

    def to_dict(self):
        return {"value": self.value, "stderr": self.stderr, "paths": self.paths, "seed": self.seed}


@dataclass(frozen=True)
class JointSurvivalEstimate:
    """Rao-Blackwell (default) and indicator estimates of one joint survival."""

    rao_blackwell: McEstimate
    indicator: McEstimate

    @property
    def value(self) -> float:
        return self.rao_blackwell.value

    @property
    def stderr(self) -> float:
        return self.rao_blackwell.stderr


@dataclass(frozen=True)
class SimultaneousEstimate:
    indicator: McEstimate
    rao_blackwell: McEstimate
    horizon: float


def summarize(values: np.ndarray, seed: int) -> McEstimate:
    """Mean and standard error by fixed-tree pairwise sums."""
    x = np.asarray(values, dtype=np.float64).ravel()
    n = x.size
    mean = log_sum_accumulate(x) / n
    dev = x - mean
    var = log_sum_accumulate(dev * dev) / (n - 1) if n > 1 else 0.0
    return McEstimate(float(mean), float(math.sqrt(var / n)), int(n), int(seed))


def sample_variance(values: np.ndarray) -> float:
    x = np.asarray(values, dtype=np.float64).ravel()
    mean = log_sum_accumulate(x) / x.size
    return log_sum_accumulate((x - mean) ** 2) / (x.size - 1)


def worker_count() -> int:
    """Thread cap from ``CORRCOX_THREADS`` (default: CPU count)."""
    raw = os.environ.get("CORRCOX_THREADS")
    if raw:
        try:
            value = int(raw)
        except ValueError:
            raise ArgumentError(f"CORRCOX_THREADS must be a positive integer, got {raw!r}") from None
        if value < 1:
            raise ArgumentError(f"CORRCOX_THREADS must be a positive integer, got {raw!r}")
        return value
    return os.cpu_count() or 1


def _as_rng(rng) -> RngConfig:
    if rng is None:
        return RngConfig(0)
    if isinstance(rng, RngConfig):
        return rng
    return RngConfig(int(rng))


def _check_paths(paths) -> int:
    paths = int(paths)
    if paths < MIN_PATHS:
        raise ArgumentError(f"paths below minimum: {paths} < {MIN_PATHS}")
    if paths > MASK32:
        raise ArgumentError("path counter is 32 bits wide")
    return paths


def _run_batches(paths: int, fn, batch: int = BATCH_SIZE):
    """Call ``fn(path_ids)`` per batch and stack the per-path outputs in path order."""
    starts = list(range(0, paths, batch))
    chunks = [np.arange(a, min(a + batch, paths), dtype=np.int64) for a in starts]
    workers = min(worker_count(), len(chunks))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(fn, chunks))
    else:
        results = [fn(c) for c in chunks]
    if isinstance(results[0], tuple):
        return tuple(np.concatenate([r[i] for r in results]) for i in range(len(results[0])))
    return np.concatenate(results)


# ---------------------------------------------------------------------------
# Batch simulation primitives
# ---------------------------------------------------------------------------


def _thresholds(rng: RngConfig, paths, n: int, lane: str = "theta") -> np.ndarray:
    """Unit exponentials ``-log U`` with ``U`` in (0, 1), shape ``(B, n)``."""
    out = np.empty((paths.size, n))
    for j in range(n):
        out[:, j] = -np.log(rng.stream(lane, j).uniforms(paths, 0))
    return out


def _counts(stream, paths, mean):
    counts = poisson_from_uniforms(stream.uniforms(paths, 0), mean)
    owner = np.repeat(np.arange(paths.size), counts)
    first = np.cumsum(counts) - counts
    idx = np.arange(owner.size) - np.repeat(first, counts)
    return owner, idx


def _sorted_uniforms(stream, paths, owner, idx):
    """Sorted uniforms on (0, 1) for each path, from normalized exponential spacings.

    A path with ``N`` points uses ``N + 1`` exponentials ``E_0..E_N``; point ``i``
    is ``(E_0 + ... + E_i) / (E_0 + ... + E_N)``, the ``i``-th order statistic.
    """
    counts = np.bincount(owner, minlength=paths.size)
    owner_e = np.repeat(np.arange(paths.size), counts + 1)
    first = np.cumsum(counts + 1) - (counts + 1)
    idx_e = np.arange(owner_e.size) - np.repeat(first, counts + 1)
    e = stream.exponentials(paths[owner_e], idx_e)
    c = _grouped_cumsum(e[:, None], idx_e)[:, 0]
    last = idx_e == counts[owner_e]
    total = c[last]
    keep = ~last
    return c[keep] / total[owner_e[keep]]


def _cp_shocks(model: FactorModel, k: int, rng: RngConfig, paths, clock_horizon: float):
    """Shocks of compound Poisson factor ``k`` on the deformed clock.

    Returns ``(owner, s, inc)``: the batch row of each shock, its clock time
    (increasing within each row) and the ``(N, n)`` jumps it adds to each
    component.
    """
    f = model.factors[k]
    owner, idx = _counts(rng.stream("cp", k, "count"), paths, f.intensity * clock_horizon)
    gp = paths[owner]
    s = clock_horizon * _sorted_uniforms(rng.stream("cp", k, "time"), paths, owner, idx)
    w = model.loadings[:, k] * model.phi
    inc = np.zeros((owner.size, model.n))
    if f.shared_marks:
        mark = f.jumps.sample(rng.stream("cp", k, "mark"), gp, idx)
        inc[:, w > 0] = mark[:, None] * w[None, w > 0]
    else:
        for i, law in enumerate(f.component_jumps):
            if w[i] > 0:
                inc[:, i] = w[i] * law.sample(rng.stream("cp", k, "mark", i), gp, idx)
    return owner, s, inc


def _gamma_path(f: GammaSubordinator, k: int, rng: RngConfig, paths, clock):
    """Factor path at the sorted clock times, from exact independent increments."""
    du = np.diff(np.asarray(clock, dtype=np.float64), prepend=0.0)
    inc = np.zeros((paths.size, du.size))
    stream = rng.stream("gamma", k, "increment")
    for q, d in enumerate(du):
        if d > 0:
            inc[:, q] = stream.gammas(f.shape_rate * d, paths, q, f.scale_rate)
    return np.cumsum(inc, axis=1)


def _factor_cumulative(model: FactorModel, rng: RngConfig, paths, times) -> np.ndarray:
    """Cumulative hazards at sorted calendar ``times``; shape ``(B, Q, n)``."""
    B, Q, n = paths.size, len(times), model.n
    clock = np.atleast_1d(np.asarray(model.clock(np.asarray(times, dtype=np.float64)), dtype=np.float64))
    horizon = float(clock[-1]) if Q else 0.0
    K = np.zeros((B, Q, n))
    for k, f in enumerate(model.factors):
        if isinstance(f, CompoundPoisson):
            owner, s, inc = _cp_shocks(model, k, rng, paths, horizon)
            if owner.size == 0:
                continue
            q = np.searchsorted(clock, s, side="left")
            keep = q < Q
            key = owner[keep] * Q + q[keep]
            for i in range(n):
                col = inc[keep, i]
                if col.size and np.any(col):
                    bins = np.bincount(key, weights=col, minlength=B * Q).reshape(B, Q)
                    K[:, :, i] += np.cumsum(bins, axis=1)
        else:
            L = _gamma_path(f, k, rng, paths, clock)
            w = model.loadings[:, k] * model.phi
            K += L[:, :, None] * w[None, None, :]
    return K


def _sn_shocks(model: ShotNoiseModel, rng: RngConfig, paths, arrival_horizon: float):
    """Arrivals on ``[0, arrival_horizon]`` sorted by (row, time): ``owner, theta, mark, rank``.

    Each constant-rate piece of the intensity is its own homogeneous Poisson
    process (thinning against the piece's own rate accepts every point).
    """
    owners, times, marks = [], [], []
    for piece, (a, b, r) in enumerate(model.intensity.pieces(0.0, arrival_horizon)):
        if b <= a or r == 0:
            continue
        owner, idx = _counts(rng.stream("nhpp", piece, "count"), paths, r * (b - a))
        gp = paths[owner]
        owners.append(owner)
        times.append(a + (b - a) * rng.stream("nhpp", piece, "time").uniforms(gp, idx))
        marks.append(model.marks.sample(rng.stream("nhpp", piece, "mark"), gp, idx))
    if not owners:
        e = np.zeros(0)
        return np.zeros(0, dtype=np.int64), e, e, np.zeros(0, dtype=np.int64)
    owner = np.concatenate(owners)
    theta = np.concatenate(times)
    mark = np.concatenate(marks)
    order = np.lexsort((theta, owner))
    owner, theta, mark = owner[order], theta[order], mark[order]
    return owner, theta, mark, _ranks(owner)


def _ranks(owner: np.ndarray) -> np.ndarray:
    """Position of each entry inside its (sorted, contiguous) owner group."""
    if owner.size == 0:
        return np.zeros(0, dtype=np.int64)
    start = np.r_[True, owner[1:] != owner[:-1]]
    first = np.flatnonzero(start)
    lengths = np.diff(np.r_[first, owner.size])
    return np.arange(owner.size) - np.repeat(first, lengths)


def _sn_at_shocks(kernel, theta, mark, rank) -> np.ndarray:
    """``F(s_i) = sum_{k <= i} mark_k kernel(s_i - s_k)`` within each path."""
    out = np.zeros(theta.size)
    if theta.size == 0:
        return out
    for d in range(int(rank.max()) + 1):
        sel = np.flatnonzero(rank >= d)
        out[sel] += mark[sel - d] * kernel(theta[sel] - theta[sel - d])
    return out


def _sn_cumulative(model: ShotNoiseModel, rng: RngConfig, paths, times):
    """Cumulative hazards and their running suprema at sorted calendar ``times``."""
    B, Q, n = paths.size, len(times), model.n
    times = np.asarray(times, dtype=np.float64)
    local = np.array([np.atleast_1d(np.asarray(model.local_time(j, times), dtype=np.float64)) for j in range(n)])
    top = float(local.max()) if Q else 0.0
    owner, theta, mark, rank = _sn_shocks(model, rng, paths, top)
    K = np.zeros((B, Q, n))
    sup = K if model.is_monotone else np.zeros((B, Q, n))
    for j, kern in enumerate(model.kernels):
        for q in range(Q):
            v = local[j, q]
            K[:, q, j] = np.bincount(owner, weights=mark * kern(v - theta), minlength=B)
        if not kern.is_nondecreasing:
            at_shock = _sn_at_shocks(kern, theta, mark, rank)
            for q in range(Q):
                best = K[:, q, j].copy()
                sel = theta <= local[j, q]
                np.maximum.at(best, owner[sel], at_shock[sel])
                sup[:, q, j] = best
        elif sup is not K:
            sup[:, :, j] = K[:, :, j]
    return K, sup


def _cumulative(model, rng: RngConfig, paths, times):
    """Dispatch: ``(K, running sup of K)`` for the jump-driven part."""
    if isinstance(model, FactorModel):
        K = _factor_cumulative(model, rng, paths, times)
        return K, K
    if isinstance(model, ShotNoiseModel):
        return _sn_cumulative(model, rng, paths, times)
    raise UnsupportedModelError(f"cannot simulate {type(model).__name__}")


def _unique_times(queries) -> np.ndarray:
    return np.unique(np.concatenate([np.asarray(q.horizons, dtype=np.float64) for q in queries]))


def _model_n(model) -> int:
    return model.n


# ---------------------------------------------------------------------------
# Joint survival, martingale and conditional checks
# ---------------------------------------------------------------------------


def mc_joint_survival_many(model, queries, paths: int = 100_000, rng=None) -> list[JointSurvivalEstimate]:
    """Joint survival estimates for several horizon vectors from one set of paths.

    The Rao-Blackwell value is ``mean(exp(-sum_j H_j(t_j)))``; the indicator
    value is ``mean(prod_j 1{T_j > t_j})`` with ``T_j > t`` iff the running
    maximum of ``H_j`` on ``[0, t]`` stays below the threshold ``E_j``.
    """
    rng = _as_rng(rng)
    paths = _check_paths(paths)
    queries = [as_query(q) for q in queries]
    if isinstance(model, MinDecomposition):
        return [mc_min_decomposition(model, None, paths, rng, q) for q in queries]
    n = _model_n(model)
    for q in queries:
        if q.n != n:
            raise ArgumentError(f"{q.n} horizons for a {n}-component model")
    times = _unique_times(queries)
    cols = [np.searchsorted(times, q.horizons) for q in queries]

    def batch(p):
        K, sup = _cumulative(model, rng, p, times)
        theta = _thresholds(rng, p, n)
        rb, ind = [], []
        for c in cols:
            k_at = K[:, c, np.arange(n)]
            s_at = sup[:, c, np.arange(n)]
            rb.append(np.exp(-k_at.sum(axis=1)))
            ind.append(np.all(s_at < theta, axis=1).astype(np.float64))
        return np.stack(rb, axis=1), np.stack(ind, axis=1)

    rb, ind = _run_batches(paths, batch)
    seed = rng.seed
    return [
        JointSurvivalEstimate(summarize(rb[:, i], seed), summarize(ind[:, i], seed))
        for i in range(len(queries))
    ]


def mc_joint_survival(model, query, paths: int = 100_000, rng=None) -> JointSurvivalEstimate:
    """Monte Carlo joint survival; ``.value`` is the Rao-Blackwell estimate."""
    return mc_joint_survival_many(model, [query], paths, rng)[0]


def _mask(model, J) -> int:
    n = _model_n(model)
    if isinstance(J, (list, tuple, set, frozenset)):
        return mask_from_indices(J, n)
    J = int(J)
    if J <= 0 or J >> n:
        raise ArgumentError(f"subset mask {J} is not a nonempty subset of 1..{n}")
    return J


def analytic_compensator(model, mask: int, t: float) -> float:
    if t == 0:
        return 0.0
    if isinstance(model, FactorModel):
        return subset_compensator(model, mask, t)
    if isinstance(model, ShotNoiseModel):
        return sn_subset_compensator(model, mask, t)
    raise UnsupportedModelError(f"no compensator for {type(model).__name__}")


def mc_martingale_check(model, J, t: float, paths: int = 100_000, rng=None) -> McEstimate:
    """Estimate ``E[exp(comp_J(t) - sum_{j in J} H_j(t))]``, which should be 1."""
    rng = _as_rng(rng)
    paths = _check_paths(paths)
    mask = _mask(model, J)
    t = float(t)
    SurvivalQuery((t,))
    lam = analytic_compensator(model, mask, t)
    members = np.array([i - 1 for i in indices_from_mask(mask)])

    def batch(p):
        K, _ = _cumulative(model, rng, p, np.array([t]))
        return np.exp(lam - K[:, 0, members].sum(axis=1))

    return summarize(_run_batches(paths, batch), rng.seed)


def mc_conditional_survival_batch(model, query, paths: int = 100_000, rng=None) -> McEstimate:
    """Average over paths of the conditional formula at ``query.conditioning_time``.

    By the tower property the mean equals the unconditional joint survival.
    """
    rng = _as_rng(rng)
    paths = _check_paths(paths)
    query = as_query(query)
    t = query.conditioning_time
    chain = order_horizons(query.horizons)
    a1 = chain.sets[0]
    members = np.array([i - 1 for i in indices_from_mask(a1)])
    log_base = analytic_compensator(model, a1, t) - nested_exponent(model, query.horizons)

    def batch(p):
        K, _ = _cumulative(model, rng, p, np.array([t]))
        return np.exp(log_base - K[:, 0, members].sum(axis=1))

    return summarize(_run_batches(paths, batch), rng.seed)


def mc_conditional_survival(model, path: "PathRecord", query) -> float:
    """Survival indicator of the names alive at ``t`` along ``path``, times ``exp(-exponent)`` of the nested formula."""
    if not isinstance(query, SurvivalQuery):
        raise ArgumentError("query must be a SurvivalQuery carrying the conditioning time")
    t = query.conditioning_time
    if t > path.horizon:
        raise ArgumentError(f"path horizon {path.horizon} is shorter than conditioning time {t}")
    exponent = nested_exponent(model, query.horizons)
    if t == 0:
        return math.exp(-exponent)
    a1 = order_horizons(query.horizons).sets[0]
    k = path.cumulative(t)
    k_a1 = math.fsum(k[i - 1] for i in indices_from_mask(a1))
    return math.exp(analytic_compensator(model, a1, t) - k_a1 - exponent)


# ---------------------------------------------------------------------------
# Simultaneous defaults
# ---------------------------------------------------------------------------


def _merged_cp_shocks(model: FactorModel, rng: RngConfig, paths, clock_horizon):
    parts = [_cp_shocks(model, k, rng, paths, clock_horizon) for k in range(model.m)]
    if len(parts) == 1:
        return parts[0]
    owner = np.concatenate([p[0] for p in parts])
    s = np.concatenate([p[1] for p in parts])
    inc = np.concatenate([p[2] for p in parts])
    order = np.lexsort((s, owner))
    return owner[order], s[order], inc[order]


def _grouped_cumsum(inc: np.ndarray, rank: np.ndarray) -> np.ndarray:
    """Running sums of the rows of ``inc`` inside each contiguous group
    (``rank`` restarts at 0 at the head of every group)."""
    cum = inc.copy()
    if rank.size == 0:
        return cum
    first = np.flatnonzero(rank == 0)
    lengths = np.diff(np.r_[first, rank.size])
    by_len = np.argsort(-lengths, kind="stable")
    sorted_len = lengths[by_len]
    for r in range(1, int(sorted_len[0])):
        active = by_len[: np.searchsorted(-sorted_len, -r, side="left")]
        pos = first[active] + r
        cum[pos] += cum[pos - 1]
    return cum


def _crossings(cum_col, theta_col, owner, rank, B):
    """Index of the first shock whose cumulative reaches the threshold (-1 if none)."""
    hit = cum_col >= theta_col[owner]
    prev_hit = np.zeros_like(hit)
    prev_hit[1:] = hit[:-1]
    prev_hit[rank == 0] = False
    first = np.flatnonzero(hit & ~prev_hit)
    out = np.full(B, -1, dtype=np.int64)
    out[owner[first]] = first
    return out


def suggested_horizon(model, bound: float = TAIL_BOUND) -> float:
    """Smallest ``H`` (with 5% margin) with ``P(min tau > H) <= bound``."""
    if not isinstance(model, FactorModel):
        raise UnsupportedModelError("suggested horizons are computed for factor models")
    rate = subset_compensator(model, full_mask(model.n), 1.0) / float(model.clock(1.0))
    if rate <= 0:
        return math.inf
    target = -math.log(bound) / rate
    d = model.deformation
    t = target if d is None else float(d.inverse(target))
    return 1.05 * t


def mc_simultaneous_prob(model: FactorModel, paths: int = 100_000, horizon: float | None = None, rng=None) -> SimultaneousEstimate:
    """``P(T_1 = T_2)`` by the exact-coincidence indicator and by the
    per-shock crossing-probability sum.

    The horizon must leave at most ``1e-6`` of the probability that neither
    component has defaulted; ``None`` picks a suitable one.
    """
    rng = _as_rng(rng)
    paths = _check_paths(paths)
    if not isinstance(model, FactorModel) or model.n != 2:
        raise ArgumentError("mc_simultaneous_prob needs a two-component factor model")
    if not model.is_pure_jump_cp:
        raise UnsupportedModelError("simultaneous defaults are estimated for compound Poisson factors only")
    if horizon is None:
        horizon = suggested_horizon(model)
        if not math.isfinite(horizon):
            raise UnsupportedModelError("the model never defaults")
    horizon = float(horizon)
    tail = min_survival(model, horizon)
    if tail > TAIL_BOUND:
        raise TailBoundError(
            f"horizon {horizon} leaves P(min tau > H) = {tail:.3g} > {TAIL_BOUND}; "
            f"use a horizon of at least {suggested_horizon(model):.6g}"
        )
    clock_horizon = float(model.clock(horizon))

    def batch(p):
        B = p.size
        owner, s, inc = _merged_cp_shocks(model, rng, p, clock_horizon)
        rank = _ranks(owner)
        cum = _grouped_cumsum(inc, rank)
        theta = _thresholds(rng, p, 2)
        c1 = _crossings(cum[:, 0], theta[:, 0], owner, rank, B)
        c2 = _crossings(cum[:, 1], theta[:, 1], owner, rank, B)
        both = (c1 >= 0) & (c2 >= 0)
        ind = np.zeros(B)
        ind[both] = (s[c1[both]] == s[c2[both]]).astype(np.float64)
        prev = np.zeros_like(cum)
        later = np.flatnonzero(rank > 0)
        prev[later] = cum[later - 1]
        term = np.exp(-prev[:, 0]) * -np.expm1(-inc[:, 0]) * np.exp(-prev[:, 1]) * -np.expm1(-inc[:, 1])
        rb = np.bincount(owner, weights=term, minlength=B)
        return ind, rb

    ind, rb = _run_batches(paths, batch)
    return SimultaneousEstimate(summarize(ind, rng.seed), summarize(rb, rng.seed), horizon)


# ---------------------------------------------------------------------------
# Min-decomposition
# ---------------------------------------------------------------------------


def _continuous_at(parts, horizons) -> np.ndarray:
    return np.array([float(p(t)) for p, t in zip(parts, horizons)])


def mc_min_decomposition(model, continuous_part=None, paths: int = 100_000, rng=None, query=None) -> JointSurvivalEstimate:
    """Joint survival of ``T_j = min(continuous default, jump default)`` with independent
    thresholds for the continuous and the jump mechanism."""
    if isinstance(model, MinDecomposition):
        continuous_part = model.continuous_part
        model = model.jump_model
    parts = tuple(continuous_part)
    if not all(isinstance(p, ContinuousHazard) for p in parts):
        raise ArgumentError("continuous_part entries must be ContinuousHazard")
    rng = _as_rng(rng)
    paths = _check_paths(paths)
    query = as_query(query)
    n = len(parts)
    if query.n != n or (model is not None and model.n != n):
        raise ArgumentError("component counts of query, continuous part and jump model differ")
    x = _continuous_at(parts, query.horizons)
    times = np.unique(np.asarray(query.horizons))
    cols = np.searchsorted(times, query.horizons)

    def batch(p):
        theta_bar = _thresholds(rng, p, n, "theta_bar")
        cont_alive = np.all(x[None, :] < theta_bar, axis=1)
        if model is None:
            k_at = np.zeros((p.size, n))
            s_at = k_at
            theta = np.ones((p.size, n))
        else:
            K, sup = _cumulative(model, rng, p, times)
            k_at = K[:, cols, np.arange(n)]
            s_at = sup[:, cols, np.arange(n)]
            theta = _thresholds(rng, p, n)
        rb = np.exp(-x.sum() - k_at.sum(axis=1))
        ind = (cont_alive & np.all(s_at < theta, axis=1)).astype(np.float64)
        return rb, ind

    rb, ind = _run_batches(paths, batch)
    return JointSurvivalEstimate(summarize(rb, rng.seed), summarize(ind, rng.seed))


# ---------------------------------------------------------------------------
# Single paths
# ---------------------------------------------------------------------------


def _logistic(d: float) -> float:
    # 1 / (1 + exp(-d)) without overflow; the beta split of a bridge cell.
    if d >= 0:
        return 1.0 / (1.0 + math.exp(-d))
    e = math.exp(d)
    return e / (1.0 + e)


class GammaBridge:
    """One gamma subordinator path on ``[0, S]`` built by dyadic bisection.

    The value at dyadic point ``i / 2**level`` is drawn from the beta bridge
    between its two neighbours one level up, with counters keyed by
    ``(level, i)``, so every point is fixed no matter in which order (or
    from which starting grid) the tree is explored.
    """

    def __init__(self, factor: GammaSubordinator, k: int, rng: RngConfig, path: int, clock_horizon: float, start_level: int):
        self.a = factor.shape_rate
        self.b = factor.scale_rate
        self.k = k
        self.rng = rng
        self.path = int(path)
        self.S = float(clock_horizon)
        self._streams = {}
        self._values = {(0, 0): 0.0}
        if self.S > 0:
            lg = self._stream(("gamma", k, "end")).log_gamma(self.a * self.S, self.path, 0)
            self._values[(0, 1)] = math.exp(lg)
        else:
            self._values[(0, 1)] = 0.0
        self.finest = self._finest_level()
        self.start_level = min(int(start_level), self.finest)
        self._fill(self.start_level)

    def _finest_level(self) -> int:
        if self.S <= TAU_TOL:
            return 0
        return min(_FINEST_LEVEL_CAP, int(math.ceil(math.log2(self.S / TAU_TOL))))

    def _stream(self, lane):
        s = self._streams.get(lane)
        if s is None:
            s = self._streams[lane] = self.rng.stream(*lane)
        return s

    @staticmethod
    def _reduce(level, i):
        while level > 0 and i % 2 == 0:
            i //= 2
            level -= 1
        return level, i

    def _lane(self, level, i):
        return ("gamma", self.k, "bridge", level, i >> 20)

    def _fill(self, level):
        # Vectorized construction of every point down to ``level``; the
        # result is kept as one array on the ``level`` grid.
        grid = np.array([self._values[(0, 0)], self._values[(0, 1)]])
        for lev in range(1, level + 1):
            odd = np.arange(1, 1 << lev, 2, dtype=np.int64)
            shape = self.a * self.S / (1 << lev)
            left, right = grid[:-1], grid[1:]
            vals = np.empty(odd.size)
            for hi in np.unique(odd >> 20):
                sel = (odd >> 20) == hi
                stream = self._stream(self._lane(lev, int(hi)))
                base = 2 * (odd[sel] & 0xFFFFF)
                paths = np.full(base.size, self.path)
                g1 = stream.log_gammas(shape, paths, base)
                g2 = stream.log_gammas(shape, paths, base + 1)
                vals[sel] = left[sel] + (right[sel] - left[sel]) * special.expit(g1 - g2)
            finer = np.empty(2 * grid.size - 1)
            finer[0::2] = grid
            finer[1::2] = vals
            grid = finer
        self._grid = grid
        self._grid_level = level

    def point(self, level: int, i: int) -> float:
        """Unscaled value (``Gamma(a s, 1)`` units) at ``i * S / 2**level``."""
        level, i = self._reduce(level, i)
        if level <= self._grid_level:
            return float(self._grid[i << (self._grid_level - level)])
        v = self._values.get((level, i))
        if v is not None:
            return v
        left = self.point(level, i - 1)
        right = self.point(level, i + 1)
        shape = self.a * self.S / (1 << level)
        stream = self._stream(self._lane(level, i))
        base = 2 * (i & 0xFFFFF)
        g1 = stream.log_gamma(shape, self.path, base)
        g2 = stream.log_gamma(shape, self.path, base + 1)
        v = left + (right - left) * _logistic(g1 - g2)
        self._values[(level, i)] = v
        return v

    def start_grid(self) -> np.ndarray:
        """Unscaled values on the start-level grid (a copy)."""
        level = self.start_level
        step = 1 << (self._grid_level - level)
        return self._grid[::step].copy()

    def value_at_point(self, level: int, i: int) -> float:
        return self.point(level, i) / self.b

    def __call__(self, s: float) -> float:
        """``L`` at clock time ``s``, interpolated inside a finest-level cell."""
        if self.S == 0 or s <= 0:
            return 0.0
        s = min(float(s), self.S)
        w = self.S / (1 << self.finest)
        c = min(int(s / w), (1 << self.finest) - 1)
        lo = self.point(self.finest, c)
        hi = self.point(self.finest, c + 1)
        frac = s / w - c
        return (lo + (hi - lo) * frac) / self.b


@dataclass(frozen=True, eq=False)
class PathRecord:
    """One simulated scenario.

    ``shock_marks[i, j]`` is the mark shock ``i`` carries for component ``j``:
    the jump of ``H_j`` for factor models, the size ``m_i`` multiplying
    ``kernel_j`` for shot noise (``kernels`` set). ``shock_clock`` holds shock
    times on the deformed clock when a deformation is present.
    """

    horizon: float
    shock_times: np.ndarray
    shock_marks: np.ndarray
    thresholds: np.ndarray
    taus: np.ndarray | None = None
    kernels: tuple | None = None
    deformation: TimeDeformation | None = None
    shock_clock: np.ndarray | None = None
    gamma_parts: tuple = ()
    continuous_part: tuple | None = None
    continuous_thresholds: np.ndarray | None = None
    path_index: int = 0
    seed: int = 0
    grid_level: int = DEFAULT_GRID_LEVEL
    shock_factors: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        times = np.asarray(self.shock_times, dtype=np.float64).ravel()
        marks = np.asarray(self.shock_marks, dtype=np.float64)
        thr = np.asarray(self.thresholds, dtype=np.float64).ravel()
        n = thr.size
        marks = marks.reshape(times.size, n)
        if times.size and np.any(np.diff(times) < 0):
            raise ArgumentError("shock times must be sorted")
        object.__setattr__(self, "shock_times", times)
        object.__setattr__(self, "shock_marks", marks)
        object.__setattr__(self, "thresholds", thr)
        if self.shock_clock is None:
            object.__setattr__(self, "shock_clock", times)
        if self.taus is None:
            object.__setattr__(self, "taus", extract_default_times(self))

    @property
    def n(self) -> int:
        return self.thresholds.size

    @property
    def shocks(self):
        """``[(arrival time, mark vector)]`` as plain Python values."""
        return [(float(t), tuple(m.tolist())) for t, m in zip(self.shock_times, self.shock_marks)]

    def clock(self, t):
        if self.deformation is None:
            return float(t)
        return float(self.deformation(t))

    def _jump_part(self, j: int, t: float, left: bool = False) -> float:
        if self.kernels is None:
            s = self.clock(t)
            sel = self.shock_clock < s if left else self.shock_clock <= s
            return math.fsum(self.shock_marks[sel, j])
        kern = self.kernels[j]
        sel = self.shock_times < t if left else self.shock_times <= t
        return math.fsum((self.shock_marks[sel, j] * kern(t - self.shock_times[sel])).tolist())

    def cumulative(self, t: float, left: bool = False) -> np.ndarray:
        """``H_j(t)`` for every component (left limits with ``left=True``)."""
        t = float(t)
        if t < 0:
            raise ArgumentError("t must be >= 0")
        if t > self.horizon:
            raise ArgumentError(f"t = {t} lies beyond the path horizon {self.horizon}")
        out = np.array([self._jump_part(j, t, left) for j in range(self.n)])
        if self.gamma_parts:
            s = self.clock(t)
            for bridge, w in self.gamma_parts:
                out = out + w * bridge(s)
        return out

    def continuous_default_times(self) -> np.ndarray:
        if self.continuous_part is None:
            return np.full(self.n, math.inf)
        out = np.empty(self.n)
        for j, (x, th) in enumerate(zip(self.continuous_part, self.continuous_thresholds)):
            tau = x.inverse(th)
            out[j] = tau if tau <= self.horizon else math.inf
        return out


def _tau_scan(values, times, theta):
    """First time at which the listed values reach ``theta``."""
    hit = np.flatnonzero(values >= theta)
    return float(times[hit[0]]) if hit.size else math.inf


def _bisect(f, lo, hi, theta, tol=TAU_TOL):
    # f(lo) < theta <= f(hi), f nondecreasing on [lo, hi]
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if f(mid) >= theta:
            hi = mid
        else:
            lo = mid
    return hi


def _tau_factor_cp(path: PathRecord, j: int) -> float:
    cum = np.cumsum(path.shock_marks[:, j])
    return _tau_scan(cum, path.shock_times, path.thresholds[j])


def _tau_shot_noise(path: PathRecord, j: int) -> float:
    kern = path.kernels[j]
    theta = path.thresholds[j]
    times = path.shock_times
    marks = path.shock_marks[:, j]

    def F(v, left=False):
        sel = times < v if left else times <= v
        return math.fsum((marks[sel] * kern(v - times[sel])).tolist())

    at_shock = np.array([F(v) for v in times])
    if not kern.is_nondecreasing or kern.is_constant:
        tau = _tau_scan(at_shock, times, theta)
        return tau if tau <= path.horizon else math.inf
    # Increasing between shocks: check each shock, then the segment after it.
    edges = list(times) + [path.horizon]
    starts = [0.0] + list(times)
    for i, (a, b) in enumerate(zip(starts, edges)):
        if i > 0 and at_shock[i - 1] >= theta:
            return float(times[i - 1])
        if b > a and F(b, left=True) >= theta:
            return _bisect(F, a, b, theta)
    return math.inf


def _tau_gamma(path: PathRecord, j: int) -> float:
    theta = path.thresholds[j]
    bridges = [(b, w[j]) for b, w in path.gamma_parts if w[j] > 0]
    cp_clock = path.shock_clock
    cp_marks = path.shock_marks[:, j]
    cp_cum = np.cumsum(cp_marks)
    ref = bridges[0][0]
    S, finest, start = ref.S, ref.finest, ref.start_level

    def K_point(level, i):
        s = S * i / (1 << level)
        jumps = cp_cum[np.searchsorted(cp_clock, s, side="right") - 1] if cp_clock.size and cp_clock[0] <= s else 0.0
        return math.fsum([w * b.value_at_point(level, i) for b, w in bridges]) + jumps

    # Coarse scan on the start grid in one vectorized pass.
    s_grid = S * np.arange((1 << start) + 1) / (1 << start)
    grid = sum(w * b.start_grid() / b.b for b, w in bridges)
    if cp_clock.size:
        pos = np.searchsorted(cp_clock, s_grid, side="right") - 1
        grid = grid + np.where(pos >= 0, cp_cum[np.maximum(pos, 0)], 0.0)
    hit = np.flatnonzero(grid >= theta)
    if not hit.size:
        return math.inf
    c = int(hit[0])
    lo, hi, level = c - 1, c, start
    while level < finest:
        lo, hi, level = 2 * lo, 2 * hi, level + 1
        mid = lo + 1
        if K_point(level, mid) >= theta:
            hi = mid
        else:
            lo = mid
    s_lo = S * lo / (1 << finest)
    s_hi = S * hi / (1 << finest)
    in_cell = np.flatnonzero((cp_clock > s_lo) & (cp_clock <= s_hi) & (cp_marks > 0))
    if in_cell.size:
        return float(path.shock_times[in_cell[0]])
    return s_hi if path.deformation is None else float(path.deformation.inverse(s_hi))


def extract_default_times(path: PathRecord) -> np.ndarray:
    """Default times ``inf{t <= horizon : H_j(t) >= E_j}`` (``inf`` if censored).

    Piecewise-constant cumulatives are scanned at shock times; cumulatives
    that grow between shocks (gamma factors, ramp kernels) are bisected to
    ``1e-10``. With a continuous part the earlier of the two mechanisms wins.
    """
    out = np.empty(path.n)
    for j in range(path.n):
        if path.kernels is not None:
            tau = _tau_shot_noise(path, j)
        elif any(w[j] > 0 for _, w in path.gamma_parts):
            tau = _tau_gamma(path, j)
        else:
            tau = _tau_factor_cp(path, j)
        out[j] = tau if tau <= path.horizon else math.inf
    if path.continuous_part is not None:
        out = np.minimum(out, path.continuous_default_times())
    return out


def sample_path(model, horizon: float, rng=None, path_index: int = 0, grid_level: int = DEFAULT_GRID_LEVEL) -> PathRecord:
    """Simulate one scenario of ``model`` on ``[0, horizon]``.

    Uses the same counters as the batch estimators for compound Poisson and
    shot-noise arrivals, so a batch path and its record agree.
    """
    rng = _as_rng(rng)
    horizon = float(horizon)
    if not (math.isfinite(horizon) and horizon > 0):
        raise ArgumentError(f"horizon must be finite and > 0, got {horizon}")
    p = np.array([int(path_index)], dtype=np.int64)
    continuous = None
    cont_thr = None
    if isinstance(model, MinDecomposition):
        continuous = model.continuous_part
        cont_thr = _thresholds(rng, p, model.n, "theta_bar")[0]
        jump = model.jump_model
        if jump is None:
            n = model.n
            return PathRecord(
                horizon, np.zeros(0), np.zeros((0, n)), np.ones(n) * math.inf,
                continuous_part=continuous, continuous_thresholds=cont_thr,
                path_index=int(path_index), seed=rng.seed, grid_level=grid_level,
            )
        model = jump
    n = model.n
    theta = _thresholds(rng, p, n)[0]
    common = dict(
        continuous_part=continuous, continuous_thresholds=cont_thr,
        path_index=int(path_index), seed=rng.seed, grid_level=grid_level,
    )
    if isinstance(model, ShotNoiseModel):
        top = max(float(model.local_time(j, horizon)) for j in range(n))
        if model.time_changes is not None:
            raise UnsupportedModelError("single-path records support identity time changes only")
        _, th, mark, _ = _sn_shocks(model, rng, p, top)
        return PathRecord(horizon, th, np.repeat(mark[:, None], n, axis=1), theta, kernels=model.kernels, **common)
    if not isinstance(model, FactorModel):
        raise UnsupportedModelError(f"cannot simulate {type(model).__name__}")
    clock_h = float(model.clock(horizon))
    clocks, incs, facs = [], [], []
    bridges = []
    for k, f in enumerate(model.factors):
        if isinstance(f, CompoundPoisson):
            _, s, inc = _cp_shocks(model, k, rng, p, clock_h)
            clocks.append(s)
            incs.append(inc)
            facs.append(np.full(s.size, k))
        else:
            w = model.loadings[:, k] * model.phi
            bridges.append((GammaBridge(f, k, rng, int(path_index), clock_h, grid_level), w))
    if clocks:
        s = np.concatenate(clocks)
        inc = np.concatenate(incs)
        fac = np.concatenate(facs)
        order = np.argsort(s, kind="stable")
        s, inc, fac = s[order], inc[order], fac[order]
    else:
        s, inc, fac = np.zeros(0), np.zeros((0, n)), np.zeros(0, dtype=np.int64)
    d = model.deformation
    times = s if d is None or d.is_identity else np.atleast_1d(np.asarray(d.inverse(s), dtype=np.float64))
    return PathRecord(
        horizon, times, inc, theta,
        deformation=None if d is None or d.is_identity else d,
        shock_clock=s, gamma_parts=tuple(bridges), shock_factors=fac, **common,
    )


def path_shock_counts(model: FactorModel, horizon: float, paths: int, rng=None) -> np.ndarray:
    """Number of compound Poisson arrivals per path on ``[0, horizon]`` (all factors)."""
    rng = _as_rng(rng)
    clock_h = float(model.clock(horizon))

    def batch(p):
        total = np.zeros(p.size)
        for k, f in enumerate(model.factors):
            if isinstance(f, CompoundPoisson):
                owner, _ = _counts(rng.stream("cp", k, "count"), p, f.intensity * clock_h)
                total += np.bincount(owner, minlength=p.size)
        return total

    return _run_batches(int(paths), batch)


__all__ = [
    "GammaBridge",
    "JointSurvivalEstimate",
    "McEstimate",
    "PathRecord",
    "SimultaneousEstimate",
    "extract_default_times",
    "mc_conditional_survival",
    "mc_conditional_survival_batch",
    "mc_joint_survival",
    "mc_joint_survival_many",
    "mc_martingale_check",
    "mc_min_decomposition",
    "mc_simultaneous_prob",
    "sample_path",
    "sample_variance",
    "suggested_horizon",
    "summarize",
    "worker_count",
]
