"""Counter-based random numbers with per-path substreams.

Every draw is a pure function of ``(seed, lane, path, index)``: the seed and
a lane label select a Threefry-2x32 key, the ``(path, index)`` pair is the
counter. Nothing is stateful, so a path's numbers do not depend on which
other paths were simulated, in what order, or on how many threads ran.

Lanes separate the purposes a path draws for (thresholds, Poisson counts,
arrival times, marks of factor ``k`` ...). They are arbitrary tuples of
ints and strings and are hashed to 64 bits once per stream.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np
from scipy import special, stats

from .errors import ArgumentError, NumericalError

MASK32 = 0xFFFFFFFF
_ROTATIONS = (13, 15, 26, 6, 17, 29, 16, 24)
_PARITY = 0x1BD11BDA
_ROUNDS = 20

# Raw counter slots reserved per logical gamma draw (3 per attempt, the
# last slot feeds the shape < 1 boost).
_GAMMA_STRIDE = 64
_GAMMA_ATTEMPTS = 20


def threefry2x32(key, ctr0, ctr1):
    """Threefry-2x32 with 20 rounds, vectorized over the counter words.

    Parameters
    ----------
    key : tuple of two ints
        The 64-bit key as two 32-bit words.
    ctr0, ctr1 : array_like of uint32
        Counter words; broadcast against each other.

    Returns
    -------
    x0, x1 : ndarray of uint32
    """
    k0 = np.uint32(key[0] & MASK32)
    k1 = np.uint32(key[1] & MASK32)
    ks = (k0, k1, np.uint32(_PARITY ^ int(k0) ^ int(k1)))
    x0 = np.asarray(ctr0, dtype=np.uint32)
    x1 = np.asarray(ctr1, dtype=np.uint32)
    x0, x1 = np.broadcast_arrays(x0, x1)
    with np.errstate(over="ignore"):
        x0 = x0 + ks[0]
        x1 = x1 + ks[1]
        for r in range(_ROUNDS):
            rot = _ROTATIONS[r % 8]
            x0 = x0 + x1
            x1 = (x1 << np.uint32(rot)) | (x1 >> np.uint32(32 - rot))
            x1 = x1 ^ x0
            if r % 4 == 3:
                i = (r + 1) // 4
                x0 = x0 + ks[i % 3]
                x1 = x1 + ks[(i + 1) % 3] + np.uint32(i)
    return x0, x1


def threefry2x32_scalar(key, c0, c1):
    """Pure-Python Threefry-2x32-20 for single draws (bit-identical to the
    vectorized version, without numpy call overhead)."""
    k0, k1 = key[0] & MASK32, key[1] & MASK32
    ks = (k0, k1, _PARITY ^ k0 ^ k1)
    x0 = (c0 + k0) & MASK32
    x1 = (c1 + k1) & MASK32
    for r in range(_ROUNDS):
        rot = _ROTATIONS[r % 8]
        x0 = (x0 + x1) & MASK32
        x1 = ((x1 << rot) | (x1 >> (32 - rot))) & MASK32
        x1 ^= x0
        if r % 4 == 3:
            i = (r + 1) // 4
            x0 = (x0 + ks[i % 3]) & MASK32
            x1 = (x1 + ks[(i + 1) % 3] + i) & MASK32
    return x0, x1


def _to_unit(x0, x1):
    # 53 random bits -> (0, 1), never 0 and never 1.
    hi = (x0 >> np.uint32(5)).astype(np.float64)
    lo = (x1 >> np.uint32(6)).astype(np.float64)
    return (hi * 67108864.0 + lo + 0.5) * (1.0 / 9007199254740992.0)


def _to_unit_scalar(x0, x1):
    return ((x0 >> 5) * 67108864.0 + (x1 >> 6) + 0.5) * (1.0 / 9007199254740992.0)


def lane_id(lane) -> int:
    """64-bit label for a lane tuple; platform independent."""
    digest = hashlib.blake2b(repr(tuple(lane)).encode("utf-8"), digest_size=8)
    return int.from_bytes(digest.digest(), "little")


@dataclass(frozen=True)
class RngConfig:
    """Seed plus the substream rule: path ``p`` of lane ``L`` draws from the
    Threefry key derived from ``(seed, L)`` at counters ``(p, 0), (p, 1), ...``.
    """

    seed: int = 0

    def __post_init__(self):
        if not (0 <= int(self.seed) < 2**64):
            raise ArgumentError(f"seed must be a 64-bit unsigned integer, got {self.seed}")

    def stream(self, *lane) -> "Stream":
        return Stream(self, lane)


class Stream:
    """All draws of one lane, addressed by ``(path, index)``."""

    def __init__(self, config: RngConfig, lane):
        self.config = config
        self.lane = tuple(lane)
        seed = int(config.seed)
        lid = lane_id(self.lane)
        self.key = threefry2x32_scalar(
            (seed & MASK32, seed >> 32), lid & MASK32, lid >> 32
        )

    # -- uniforms ---------------------------------------------------------
    def uniforms(self, paths, index):
        """Uniforms on (0, 1) at counters ``(paths, index)`` (broadcast)."""
        paths = np.asarray(paths)
        index = np.asarray(index)
        x0, x1 = threefry2x32(self.key, paths.astype(np.uint32), index.astype(np.uint32))
        return _to_unit(x0, x1)

    def uniform(self, path: int, index: int) -> float:
        x0, x1 = threefry2x32_scalar(self.key, path & MASK32, index & MASK32)
        return _to_unit_scalar(x0, x1)

    # -- derived variates ---------------------------------------------------
    def exponentials(self, paths, index, rate=1.0):
        return -np.log(self.uniforms(paths, index)) / rate

    def normals(self, paths, index):
        return special.ndtri(self.uniforms(paths, index))

    def log_gammas(self, shape, paths, index):
        """Logarithm of Gamma(shape, 1) variates, by Marsaglia-Tsang rejection.

        Working in logs keeps tiny shapes (deep gamma bridges) finite.
        ``shape`` broadcasts against ``paths``.
        """
        paths = np.asarray(paths, dtype=np.int64)
        index = np.broadcast_to(np.asarray(index, dtype=np.int64), paths.shape)
        shape = np.broadcast_to(np.asarray(shape, dtype=np.float64), paths.shape)
        if np.any(shape <= 0):
            raise ArgumentError("gamma shape must be positive")
        base = index * _GAMMA_STRIDE
        boosted = shape < 1.0
        a = np.where(boosted, shape + 1.0, shape)
        d = a - 1.0 / 3.0
        c = 1.0 / np.sqrt(9.0 * d)
        out = np.empty(paths.shape, dtype=np.float64)
        todo = np.arange(paths.size)
        for attempt in range(_GAMMA_ATTEMPTS):
            if todo.size == 0:
                break
            p = paths.ravel()[todo]
            slot = base.ravel()[todo] + 3 * attempt
            x = special.ndtri(self.uniforms(p, slot))
            u = self.uniforms(p, slot + 1)
            dd, cc = d.ravel()[todo], c.ravel()[todo]
            v = 1.0 + cc * x
            ok = v > 0
            v3 = np.where(ok, v, 1.0) ** 3
            with np.errstate(divide="ignore", invalid="ignore"):
                accept = ok & (np.log(u) < 0.5 * x * x + dd - dd * v3 + dd * np.log(v3))
            out.ravel()[todo[accept]] = np.log(dd[accept]) + np.log(v3[accept])
            todo = todo[~accept]
        if todo.size:
            raise NumericalError("gamma rejection sampler exhausted its attempts")
        if np.any(boosted):
            idx = np.flatnonzero(boosted.ravel())
            u = self.uniforms(paths.ravel()[idx], base.ravel()[idx] + _GAMMA_STRIDE - 1)
            out.ravel()[idx] += np.log(u) / shape.ravel()[idx]
        return out

    def gammas(self, shape, paths, index, rate=1.0):
        return np.exp(self.log_gammas(shape, paths, index)) / rate

    def log_gamma(self, shape: float, path: int, index: int) -> float:
        """Scalar twin of :meth:`log_gammas`: same draws, equal up to rounding."""
        if shape <= 0:
            raise ArgumentError("gamma shape must be positive")
        base = index * _GAMMA_STRIDE
        a = shape + 1.0 if shape < 1.0 else shape
        d = a - 1.0 / 3.0
        c = 1.0 / math.sqrt(9.0 * d)
        for attempt in range(_GAMMA_ATTEMPTS):
            slot = base + 3 * attempt
            x = float(special.ndtri(self.uniform(path, slot)))
            u = self.uniform(path, slot + 1)
            v = 1.0 + c * x
            if v <= 0:
                continue
            v3 = v**3
            if math.log(u) < 0.5 * x * x + d - d * v3 + d * math.log(v3):
                out = math.log(d) + math.log(v3)
                if shape < 1.0:
                    out += math.log(self.uniform(path, base + _GAMMA_STRIDE - 1)) / shape
                return out
        raise NumericalError("gamma rejection sampler exhausted its attempts")


def poisson_table(mean: float) -> np.ndarray:
    """CDF table of Poisson(mean) up to the point where it rounds to 1."""
    if mean < 0 or not math.isfinite(mean):
        raise ArgumentError(f"Poisson mean must be finite and >= 0, got {mean}")
    kmax = int(mean + 12.0 * math.sqrt(mean) + 40)
    cdf = stats.poisson.cdf(np.arange(kmax + 1), mean)
    cdf[-1] = 1.0
    return cdf


def poisson_from_uniforms(u, mean: float):
    """Exact inversion ``N = min{k : F(k) >= u}``."""
    if mean == 0:
        return np.zeros(np.shape(u), dtype=np.int64)
    return np.searchsorted(poisson_table(mean), u, side="left").astype(np.int64)
