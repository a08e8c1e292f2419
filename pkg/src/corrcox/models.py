"""Cumulative-hazard process families and their Laplace exponents.

A component's cumulative hazard is
``H_i(t) = scale_i * sum_k loadings[i, k] X_k(clock(t))`` where the ``X_k``
are independent driftless subordinators (compound Poisson or gamma),
``loadings`` is a nonnegative matrix and ``clock`` an optional deterministic
time deformation. A compound Poisson factor can also carry one
jump law per component: every arrival of its clock then hits each exposed
component with an independent mark.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ArgumentError, ModelValidationError


def _positive(name, value):
    value = float(value)
    if not (math.isfinite(value) and value > 0):
        raise ModelValidationError(f"{name} must be a finite positive number, got {value}")
    return value


def _nonneg_u(u):
    u = np.asarray(u, dtype=np.float64)
    if np.any(~np.isfinite(u)) or np.any(u < 0):
        raise ArgumentError("Laplace argument must be finite and >= 0")
    return u


def _scalar_or_array(x):
    return float(x) if np.ndim(x) == 0 else x


# ---------------------------------------------------------------------------
# Jump-size laws
# ---------------------------------------------------------------------------


class JumpLaw:
    """Law of a strictly positive jump size with a closed-form Laplace transform."""

    def laplace_transform(self, u):
        raise NotImplementedError

    def one_minus_laplace_transform(self, u):
        """``1 - E[exp(-u * size)]`` without cancellation for small ``u``."""
        return _scalar_or_array(1.0 - np.asarray(self.laplace_transform(u)))

    def mean(self) -> float:
        raise NotImplementedError

    def sample(self, stream, paths, index):
        """Draws at counters ``(paths, index)`` of ``stream``."""
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class ExponentialJumps(JumpLaw):
    rate: float

    def __post_init__(self):
        object.__setattr__(self, "rate", _positive("exponential rate", self.rate))

    def laplace_transform(self, u):
        u = _nonneg_u(u)
        return _scalar_or_array(self.rate / (self.rate + u))

    def one_minus_laplace_transform(self, u):
        u = _nonneg_u(u)
        return _scalar_or_array(u / (self.rate + u))

    def mean(self):
        return 1.0 / self.rate

    def sample(self, stream, paths, index):
        return stream.exponentials(paths, index, self.rate)

    def to_dict(self):
        return {"kind": "exponential", "rate": self.rate}


@dataclass(frozen=True)
class GammaJumps(JumpLaw):
    shape: float
    rate: float

    def __post_init__(self):
        object.__setattr__(self, "shape", _positive("gamma shape", self.shape))
        object.__setattr__(self, "rate", _positive("gamma rate", self.rate))

    def laplace_transform(self, u):
        u = _nonneg_u(u)
        return _scalar_or_array(np.exp(-self.shape * np.log1p(u / self.rate)))

    def one_minus_laplace_transform(self, u):
        u = _nonneg_u(u)
        return _scalar_or_array(-np.expm1(-self.shape * np.log1p(u / self.rate)))

    def mean(self):
        return self.shape / self.rate

    def sample(self, stream, paths, index):
        return stream.gammas(self.shape, paths, index, self.rate)

    def to_dict(self):
        return {"kind": "gamma", "shape": self.shape, "rate": self.rate}


@dataclass(frozen=True)
class ConstantJumps(JumpLaw):
    size: float

    def __post_init__(self):
        object.__setattr__(self, "size", _positive("constant jump size", self.size))

    def laplace_transform(self, u):
        u = _nonneg_u(u)
        return _scalar_or_array(np.exp(-u * self.size))

    def one_minus_laplace_transform(self, u):
        u = _nonneg_u(u)
        return _scalar_or_array(-np.expm1(-u * self.size))

    def mean(self):
        return self.size

    def sample(self, stream, paths, index):
        return np.full(np.broadcast(np.asarray(paths), np.asarray(index)).shape, self.size)

    def to_dict(self):
        return {"kind": "constant", "size": self.size}


@dataclass(frozen=True)
class EmpiricalJumps(JumpLaw):
    """Finitely many atoms ``sizes[r]`` with probabilities ``weights[r]``."""

    sizes: tuple
    weights: tuple

    def __post_init__(self):
        sizes = tuple(_positive("empirical atom size", s) for s in self.sizes)
        weights = tuple(float(w) for w in self.weights)
        if not sizes or len(sizes) != len(weights):
            raise ModelValidationError("empirical law needs matching, nonempty sizes and weights")
        if any(not (0 <= w <= 1) for w in weights):
            raise ModelValidationError("empirical weights must lie in [0, 1]")
        if abs(math.fsum(weights) - 1.0) > 1e-12:
            raise ModelValidationError(f"empirical weights sum to {math.fsum(weights)!r}, not 1")
        object.__setattr__(self, "sizes", sizes)
        object.__setattr__(self, "weights", weights)

    def laplace_transform(self, u):
        u = _nonneg_u(u)
        s = np.asarray(self.sizes)
        w = np.asarray(self.weights)
        out = np.exp(-np.multiply.outer(u, s)) @ w
        return _scalar_or_array(out)

    def one_minus_laplace_transform(self, u):
        u = _nonneg_u(u)
        s = np.asarray(self.sizes)
        w = np.asarray(self.weights)
        return _scalar_or_array(-np.expm1(-np.multiply.outer(u, s)) @ w)

    def mean(self):
        return math.fsum(s * w for s, w in zip(self.sizes, self.weights))

    def sample(self, stream, paths, index):
        cdf = np.cumsum(self.weights)
        cdf[-1] = 1.0
        u = stream.uniforms(paths, index)
        return np.asarray(self.sizes)[np.searchsorted(cdf, u, side="left")]

    def to_dict(self):
        return {"kind": "empirical", "atoms": [[s, w] for s, w in zip(self.sizes, self.weights)]}


def jump_laplace_transform(law: JumpLaw, u):
    """``E[exp(-u * size)]``; exactly 1 at ``u = 0``."""
    return law.laplace_transform(u)


# ---------------------------------------------------------------------------
# Subordinators
# ---------------------------------------------------------------------------


class SubordinatorSpec:
    """A driftless Lévy subordinator driving one or more components."""

    def exponent(self, u):
        raise NotImplementedError

    def joint_exponent(self, w: np.ndarray) -> float:
        """Exponent of ``sum_i w_i * (component-i contribution)``."""
        raise NotImplementedError


@dataclass(frozen=True)
class CompoundPoisson(SubordinatorSpec):
    """Compound Poisson subordinator.

    With ``jumps`` every arrival carries one mark shared by all exposed
    components. With ``component_jumps`` (one law per component) every
    arrival draws an independent mark per component on the shared clock.
    """

    intensity: float
    jumps: JumpLaw | None = None
    component_jumps: tuple | None = None

    def __post_init__(self):
        lam = float(self.intensity)
        if not (math.isfinite(lam) and lam >= 0):
            raise ModelValidationError(f"intensity must be finite and >= 0, got {lam}")
        object.__setattr__(self, "intensity", lam)
        if (self.jumps is None) == (self.component_jumps is None):
            raise ModelValidationError("compound Poisson factor needs exactly one of jumps / component_jumps")
        if self.component_jumps is not None:
            laws = tuple(self.component_jumps)
            if not laws or not all(isinstance(x, JumpLaw) for x in laws):
                raise ModelValidationError("component_jumps must be a nonempty list of jump laws")
            object.__setattr__(self, "component_jumps", laws)
        elif not isinstance(self.jumps, JumpLaw):
            raise ModelValidationError("jumps must be a JumpLaw")

    @property
    def shared_marks(self) -> bool:
        return self.component_jumps is None

    def exponent(self, u):
        if not self.shared_marks:
            raise ArgumentError(
                "a factor with per-component marks has no univariate exponent; use joint_exponent"
            )
        return _scalar_or_array(self.intensity * (1.0 - self.jumps.laplace_transform(u)))

    def joint_exponent(self, w):
        w = _nonneg_u(w)
        if self.shared_marks:
            return float(self.exponent(math.fsum(w)))
        if len(w) != len(self.component_jumps):
            raise ArgumentError("per-component marks do not match the component count")
        prod = 1.0
        for law, wi in zip(self.component_jumps, w):
            if wi > 0:
                prod *= float(law.laplace_transform(wi))
        return self.intensity * (1.0 - prod)

    def to_dict(self):
        out = {"kind": "compound_poisson", "intensity": self.intensity}
        if self.shared_marks:
            out["jumps"] = self.jumps.to_dict()
        else:
            out["component_jumps"] = [law.to_dict() for law in self.component_jumps]
        return out


@dataclass(frozen=True)
class GammaSubordinator(SubordinatorSpec):
    """Gamma subordinator with Laplace exponent ``a * log(1 + u / b)``."""

    shape_rate: float
    scale_rate: float

    def __post_init__(self):
        object.__setattr__(self, "shape_rate", _positive("gamma shape rate a", self.shape_rate))
        object.__setattr__(self, "scale_rate", _positive("gamma scale rate b", self.scale_rate))

    def exponent(self, u):
        u = _nonneg_u(u)
        return _scalar_or_array(self.shape_rate * np.log1p(u / self.scale_rate))

    def joint_exponent(self, w):
        return float(self.exponent(math.fsum(_nonneg_u(w))))

    def to_dict(self):
        return {"kind": "gamma_subordinator", "shape_rate": self.shape_rate, "scale_rate": self.scale_rate}


def laplace_exponent(spec: SubordinatorSpec, u):
    """Laplace exponent ``f(u)`` with ``E[exp(-u X_t)] = exp(-t f(u))``."""
    return spec.exponent(u)


# ---------------------------------------------------------------------------
# Time deformation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TimeDeformation:
    """Deterministic clock plus per-component covariate scales.

    kind is ``"identity"``, ``"power"`` (``scale * t**exponent``) or
    ``"piecewise_linear"`` (interpolated ``knots``, no extrapolation).
    """

    kind: str = "identity"
    exponent: float = 1.0
    scale: float = 1.0
    knots: tuple = ()
    covariate_scales: tuple | None = None

    def __post_init__(self):
        if self.kind not in ("identity", "power", "piecewise_linear"):
            raise ModelValidationError(f"unknown deformation kind {self.kind!r}")
        if self.kind == "power":
            object.__setattr__(self, "exponent", _positive("deformation exponent", self.exponent))
            object.__setattr__(self, "scale", _positive("deformation scale", self.scale))
        if self.kind == "piecewise_linear":
            knots = tuple((float(t), float(d)) for t, d in self.knots)
            if len(knots) < 2:
                raise ModelValidationError("piecewise_linear deformation needs at least two knots")
            if knots[0] != (0.0, 0.0):
                raise ModelValidationError("piecewise_linear deformation must start at (0, 0)")
            ts = [k[0] for k in knots]
            ds = [k[1] for k in knots]
            if any(b <= a for a, b in zip(ts, ts[1:])) or any(b <= a for a, b in zip(ds, ds[1:])):
                raise ModelValidationError("deformation knots must be strictly increasing in t and value")
            object.__setattr__(self, "knots", knots)
        if self.covariate_scales is not None:
            phi = tuple(_positive("covariate scale", p) for p in self.covariate_scales)
            object.__setattr__(self, "covariate_scales", phi)

    @property
    def is_identity(self) -> bool:
        return self.kind == "identity"

    def __call__(self, t):
        t = np.asarray(t, dtype=np.float64)
        if np.any(t < 0) or np.any(~np.isfinite(t)):
            raise ArgumentError("deformed_time needs finite t >= 0")
        if self.kind == "identity":
            out = t
        elif self.kind == "power":
            out = self.scale * t**self.exponent
        else:
            ts = np.array([k[0] for k in self.knots])
            if np.any(t > ts[-1]):
                raise ArgumentError(f"t beyond the last deformation knot {ts[-1]}")
            out = np.interp(t, ts, [k[1] for k in self.knots])
        return _scalar_or_array(out)

    def inverse(self, s):
        s = np.asarray(s, dtype=np.float64)
        if self.kind == "identity":
            out = s
        elif self.kind == "power":
            out = (s / self.scale) ** (1.0 / self.exponent)
        else:
            out = np.interp(s, [k[1] for k in self.knots], [k[0] for k in self.knots])
        return _scalar_or_array(out)

    @property
    def max_time(self) -> float:
        return self.knots[-1][0] if self.kind == "piecewise_linear" else math.inf

    def to_dict(self):
        out = {"kind": self.kind}
        if self.kind == "power":
            out.update(exponent=self.exponent, scale=self.scale)
        if self.kind == "piecewise_linear":
            out["knots"] = [list(k) for k in self.knots]
        if self.covariate_scales is not None:
            out["covariate_scales"] = list(self.covariate_scales)
        return out


def deformed_time(deformation: TimeDeformation | None, t):
    if deformation is None:
        if type(t) is float:
            if not (0.0 <= t < math.inf):
                raise ArgumentError("deformed_time needs finite t >= 0")
            return t
        t = np.asarray(t, dtype=np.float64)
        if np.any(t < 0) or np.any(~np.isfinite(t)):
            raise ArgumentError("deformed_time needs finite t >= 0")
        return _scalar_or_array(t)
    return deformation(t)


# ---------------------------------------------------------------------------
# Linear factor model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FactorModel:
    """``n`` components loading on ``m`` independent subordinators."""

    factors: tuple
    loadings: np.ndarray = field(repr=False)
    deformation: TimeDeformation | None = None

    def __post_init__(self):
        factors = tuple(self.factors)
        if not factors:
            raise ModelValidationError("a factor model needs at least one factor")
        if not all(isinstance(f, SubordinatorSpec) for f in factors):
            raise ModelValidationError("factors must be SubordinatorSpec instances")
        A = np.array(self.loadings, dtype=np.float64)
        if A.ndim != 2 or A.shape[1] != len(factors) or A.shape[0] < 1:
            raise ModelValidationError(f"loadings must be an n x {len(factors)} matrix, got shape {A.shape}")
        if not np.all(np.isfinite(A)) or np.any(A < 0):
            raise ModelValidationError("loadings must be finite and >= 0")
        zero_rows = np.flatnonzero(~np.any(A > 0, axis=1))
        if zero_rows.size:
            raise ModelValidationError(
                f"loadings row {int(zero_rows[0]) + 1} has no positive entry (component without hazard)"
            )
        n = A.shape[0]
        for k, f in enumerate(factors):
            if isinstance(f, CompoundPoisson) and not f.shared_marks and len(f.component_jumps) != n:
                raise ModelValidationError(
                    f"factor {k + 1}: component_jumps has {len(f.component_jumps)} laws for {n} components"
                )
        if self.deformation is not None:
            phi = self.deformation.covariate_scales
            if phi is not None and len(phi) != n:
                raise ModelValidationError(f"covariate_scales has {len(phi)} entries for {n} components")
        A.setflags(write=False)
        object.__setattr__(self, "factors", factors)
        object.__setattr__(self, "loadings", A)
        # Subset rates by mask, filled on demand by the survival formulas.
        object.__setattr__(self, "_rate_memo", {})

    @property
    def n(self) -> int:
        return self.loadings.shape[0]

    @property
    def m(self) -> int:
        return self.loadings.shape[1]

    @property
    def phi(self) -> np.ndarray:
        d = self.deformation
        if d is None or d.covariate_scales is None:
            return np.ones(self.n)
        return np.asarray(d.covariate_scales, dtype=np.float64)

    @property
    def has_identity_clock(self) -> bool:
        return self.deformation is None or self.deformation.is_identity

    def clock(self, t):
        return deformed_time(self.deformation, t)

    @property
    def is_pure_jump_cp(self) -> bool:
        return all(isinstance(f, CompoundPoisson) for f in self.factors)

    def restrict(self, components: Sequence[int]) -> "FactorModel":
        """Sub-model on the given 1-based components (same factors)."""
        idx = [int(i) - 1 for i in components]
        factors = []
        for f in self.factors:
            if isinstance(f, CompoundPoisson) and not f.shared_marks:
                f = CompoundPoisson(f.intensity, component_jumps=tuple(f.component_jumps[i] for i in idx))
            factors.append(f)
        d = self.deformation
        if d is not None and d.covariate_scales is not None:
            d = TimeDeformation(d.kind, d.exponent, d.scale, d.knots, tuple(d.covariate_scales[i] for i in idx))
        return FactorModel(tuple(factors), self.loadings[idx], d)

    def to_dict(self):
        out = {
            "model_type": "factor",
            "components": self.n,
            "factors": [f.to_dict() for f in self.factors],
            "loadings": self.loadings.tolist(),
        }
        if self.deformation is not None:
            out["deformation"] = self.deformation.to_dict()
        return out


def joint_laplace_exponent(model: FactorModel, z) -> float:
    """Sum over factors of each Laplace exponent at the loading-weighted argument ``loadings[:, k] * z``."""
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (model.n,):
        raise ArgumentError(f"z must have length {model.n}, got shape {z.shape}")
    _nonneg_u(z)
    terms = [f.joint_exponent(model.loadings[:, k] * z) for k, f in enumerate(model.factors)]
    return math.fsum(terms)


def independent_model(factors: Sequence[SubordinatorSpec], deformation=None) -> FactorModel:
    """One private factor per component (diagonal loadings)."""
    m = len(factors)
    return FactorModel(tuple(factors), np.eye(m), deformation)


def shared_driver_model(intensity: float, laws: Sequence[JumpLaw]) -> FactorModel:
    """One Poisson clock, independent per-component marks."""
    n = len(laws)
    return FactorModel((CompoundPoisson(intensity, component_jumps=tuple(laws)),), np.ones((n, 1)))


# ---------------------------------------------------------------------------
# Deterministic continuous hazards (min-decomposition)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ContinuousHazard:
    """Deterministic, continuous, nondecreasing ``X(t)`` with ``X(0) = 0``.

    kind ``zero``, ``linear`` (``rate * t``), ``power`` (``scale * t**exponent``)
    or ``piecewise_linear`` (knots, continued with the last slope).
    """

    kind: str = "zero"
    rate: float = 0.0
    scale: float = 1.0
    exponent: float = 1.0
    knots: tuple = ()

    def __post_init__(self):
        if self.kind not in ("zero", "linear", "power", "piecewise_linear"):
            raise ModelValidationError(f"unknown continuous hazard kind {self.kind!r}")
        if self.kind == "linear":
            r = float(self.rate)
            if not (math.isfinite(r) and r >= 0):
                raise ArgumentError(f"linear hazard rate must be >= 0 (nondecreasing X), got {r}")
            object.__setattr__(self, "rate", r)
        if self.kind == "power":
            object.__setattr__(self, "scale", _positive("hazard scale", self.scale))
            object.__setattr__(self, "exponent", _positive("hazard exponent", self.exponent))
        if self.kind == "piecewise_linear":
            knots = tuple((float(t), float(x)) for t, x in self.knots)
            if len(knots) < 2 or knots[0] != (0.0, 0.0):
                raise ArgumentError("piecewise_linear hazard needs >= 2 knots starting at (0, 0)")
            if any(b[0] <= a[0] for a, b in zip(knots, knots[1:])):
                raise ArgumentError("hazard knot times must be strictly increasing")
            if any(b[1] < a[1] for a, b in zip(knots, knots[1:])):
                raise ArgumentError("hazard knots must be nondecreasing (X cannot decrease)")
            object.__setattr__(self, "knots", knots)

    def __call__(self, t):
        t = np.asarray(t, dtype=np.float64)
        if self.kind == "zero":
            out = np.zeros_like(t)
        elif self.kind == "linear":
            out = self.rate * t
        elif self.kind == "power":
            out = self.scale * t**self.exponent
        else:
            ts = np.array([k[0] for k in self.knots])
            xs = np.array([k[1] for k in self.knots])
            slope = (xs[-1] - xs[-2]) / (ts[-1] - ts[-2])
            out = np.where(t <= ts[-1], np.interp(t, ts, xs), xs[-1] + slope * (t - ts[-1]))
        return _scalar_or_array(out)

    def inverse(self, x: float) -> float:
        """First ``t`` with ``X(t) >= x`` (``inf`` if never reached)."""
        x = float(x)
        if x <= 0:
            return 0.0
        if self.kind == "zero" or (self.kind == "linear" and self.rate == 0):
            return math.inf
        if self.kind == "linear":
            return x / self.rate
        if self.kind == "power":
            return (x / self.scale) ** (1.0 / self.exponent)
        ts = [k[0] for k in self.knots]
        xs = [k[1] for k in self.knots]
        for (t0, x0), (t1, x1) in zip(self.knots, self.knots[1:]):
            if x1 >= x:
                return t0 + (x - x0) * (t1 - t0) / (x1 - x0)
        slope = (xs[-1] - xs[-2]) / (ts[-1] - ts[-2])
        return math.inf if slope <= 0 else ts[-1] + (x - xs[-1]) / slope

    def to_dict(self):
        out = {"kind": self.kind}
        if self.kind == "linear":
            out["rate"] = self.rate
        if self.kind == "power":
            out.update(scale=self.scale, exponent=self.exponent)
        if self.kind == "piecewise_linear":
            out["knots"] = [list(k) for k in self.knots]
        return out


@dataclass(frozen=True)
class MinDecomposition:
    """Default time of ``j`` = the earlier of two defaults: a deterministic continuous
    hazard ``X^j`` and an independent jump-driven factor model (or none)."""

    jump_model: FactorModel | None
    continuous_part: tuple

    def __post_init__(self):
        parts = tuple(self.continuous_part)
        if not all(isinstance(p, ContinuousHazard) for p in parts):
            raise ModelValidationError("continuous_part entries must be ContinuousHazard")
        if self.jump_model is not None and len(parts) != self.jump_model.n:
            raise ModelValidationError(
                f"continuous_part has {len(parts)} entries for {self.jump_model.n} components"
            )
        if not parts:
            raise ModelValidationError("continuous_part must list one hazard per component")
        object.__setattr__(self, "continuous_part", parts)

    @property
    def n(self) -> int:
        return len(self.continuous_part)
