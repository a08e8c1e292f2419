"""Shot-noise cumulative hazards driven by a marked (nonhomogeneous) Poisson process.

Component ``j`` accumulates ``H_j(t) = sum_{s_i <= t} m_i kernel_j(t - s_i)``
over shock times ``s_i`` (arrival rate ``rate(s)``) with i.i.d. marks
``m_i``. The subset compensators are one-dimensional integrals

    comp_J(t) = int_0^t rate(s) [1 - LT(sum_{j in J} kernel_j(t - s))] ds,

the mark integral being done in closed form through the mark Laplace
transform ``LT``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, ModelValidationError
from .models import JumpLaw, TimeDeformation
from .numerics import full_mask, indices_from_mask, integrate
from .survival import LOG_FLOOR, SurvivalQuery

DEFAULT_TOL = 1e-10
MIN_TOL, MAX_TOL = 1e-13, 1e-6

KERNEL_KINDS = ("constant", "exponential_decay", "linear_ramp")


@dataclass(frozen=True)
class Kernel:
    """Response function ``G(u)``, zero for ``u < 0``.

    constant: ``G = level``; exponential_decay: ``G = g0 exp(-decay u)``;
    linear_ramp: ``G = min(slope u + g0, cap)``.
    """

    kind: str
    level: float = 0.0
    g0: float = 0.0
    decay: float = 0.0
    slope: float = 0.0
    cap: float = 0.0

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise ModelValidationError(f"unknown kernel kind {self.kind!r}")
        vals = {k: float(getattr(self, k)) for k in ("level", "g0", "decay", "slope", "cap")}
        if any(not math.isfinite(v) for v in vals.values()):
            raise ModelValidationError("kernel parameters must be finite")
        if self.kind == "constant" and vals["level"] < 0:
            raise ModelValidationError("constant kernel level must be >= 0")
        if self.kind == "exponential_decay" and (vals["g0"] <= 0 or vals["decay"] <= 0):
            raise ModelValidationError("exponential_decay kernel needs g0 > 0 and decay > 0")
        if self.kind == "linear_ramp":
            if vals["slope"] <= 0 or vals["cap"] <= 0:
                raise ModelValidationError("linear_ramp kernel needs slope > 0 and cap > 0")
            if not 0 <= vals["g0"] <= vals["cap"]:
                raise ModelValidationError("linear_ramp kernel needs 0 <= g0 <= cap")
        for k, v in vals.items():
            object.__setattr__(self, k, v)

    @classmethod
    def constant(cls, level):
        return cls("constant", level=level)

    @classmethod
    def exponential_decay(cls, g0, decay):
        return cls("exponential_decay", g0=g0, decay=decay)

    @classmethod
    def linear_ramp(cls, slope, cap, g0=0.0):
        return cls("linear_ramp", slope=slope, cap=cap, g0=g0)

    def __call__(self, u):
        u = np.asarray(u, dtype=np.float64)
        if self.kind == "constant":
            out = np.full(u.shape, self.level)
        elif self.kind == "exponential_decay":
            out = self.g0 * np.exp(-self.decay * np.maximum(u, 0.0))
        else:
            out = np.minimum(self.slope * np.maximum(u, 0.0) + self.g0, self.cap)
        out = np.where(u < 0, 0.0, out)
        return float(out) if out.ndim == 0 else out

    @property
    def is_constant(self) -> bool:
        return self.kind == "constant" or (self.kind == "linear_ramp" and self.g0 == self.cap)

    @property
    def is_nondecreasing(self) -> bool:
        return self.kind != "exponential_decay"

    @property
    def kink(self) -> float | None:
        """Lag where a ramp reaches its cap (a derivative jump)."""
        if self.kind == "linear_ramp" and self.g0 < self.cap:
            return (self.cap - self.g0) / self.slope
        return None

    def to_dict(self):
        if self.kind == "constant":
            return {"kind": "constant", "level": self.level}
        if self.kind == "exponential_decay":
            return {"kind": "exponential_decay", "g0": self.g0, "decay": self.decay}
        return {"kind": "linear_ramp", "slope": self.slope, "cap": self.cap, "g0": self.g0}


@dataclass(frozen=True)
class ShotIntensity:
    """Deterministic arrival rate: ``constant`` or ``piecewise_constant``.

    For the piecewise form ``rates[p]`` applies on ``[breakpoints[p-1], breakpoints[p])``
    with ``breakpoints[-1] = 0`` implied, the last rate continuing forever.
    """

    kind: str = "constant"
    rate: float = 0.0
    breakpoints: tuple = ()
    rates: tuple = ()

    def __post_init__(self):
        if self.kind == "constant":
            r = float(self.rate)
            if not (math.isfinite(r) and r >= 0):
                raise ModelValidationError(f"intensity rate must be finite and >= 0, got {r}")
            object.__setattr__(self, "rate", r)
            object.__setattr__(self, "breakpoints", ())
            object.__setattr__(self, "rates", (r,))
        elif self.kind == "piecewise_constant":
            bp = tuple(float(b) for b in self.breakpoints)
            rates = tuple(float(r) for r in self.rates)
            if len(rates) != len(bp) + 1:
                raise ModelValidationError("piecewise intensity needs len(rates) = len(breakpoints) + 1")
            if any(not (math.isfinite(b) and b > 0) for b in bp) or any(b <= a for a, b in zip(bp, bp[1:])):
                raise ModelValidationError("intensity breakpoints must be positive and strictly increasing")
            if any(not (math.isfinite(r) and r >= 0) for r in rates):
                raise ModelValidationError("intensity rates must be finite and >= 0")
            object.__setattr__(self, "breakpoints", bp)
            object.__setattr__(self, "rates", rates)
        else:
            raise ModelValidationError(f"unknown intensity kind {self.kind!r}")

    def __call__(self, s):
        s = np.asarray(s, dtype=np.float64)
        out = np.asarray(self.rates)[np.searchsorted(self.breakpoints, s, side="right")]
        return float(out) if out.ndim == 0 else out

    def pieces(self, t0: float, t1: float):
        """``(a, b, rate)`` for the constant-rate pieces covering ``[t0, t1]``."""
        edges = [t0] + [b for b in self.breakpoints if t0 < b < t1] + [t1]
        return [(a, b, self(0.5 * (a + b)) if b > a else self(a)) for a, b in zip(edges[:-1], edges[1:])]

    def integral(self, t: float) -> float:
        return math.fsum((b - a) * r for a, b, r in self.pieces(0.0, t))

    def to_dict(self):
        if self.kind == "constant":
            return {"kind": "constant", "rate": self.rate}
        return {"kind": "piecewise_constant", "breakpoints": list(self.breakpoints), "rates": list(self.rates)}


@dataclass(frozen=True)
class ShotNoiseModel:
    """``n`` shot-noise components sharing one marked arrival stream.

    ``time_changes`` (one deformation per component, evaluated as
    ``kernel_j(clock_j(t) - s)``) is an internal extension point; the spec-file
    format only produces identity time changes.
    """

    kernels: tuple
    intensity: ShotIntensity
    marks: JumpLaw
    time_changes: tuple | None = None

    def __post_init__(self):
        kernels = tuple(self.kernels)
        if not kernels or not all(isinstance(k, Kernel) for k in kernels):
            raise ModelValidationError("a shot-noise model needs one Kernel per component")
        if not isinstance(self.intensity, ShotIntensity):
            raise ModelValidationError("intensity must be a ShotIntensity")
        if not isinstance(self.marks, JumpLaw):
            raise ModelValidationError("marks must be a JumpLaw")
        object.__setattr__(self, "kernels", kernels)
        if self.time_changes is not None:
            h = tuple(self.time_changes)
            if len(h) != len(kernels) or not all(isinstance(x, TimeDeformation) for x in h):
                raise ModelValidationError("time_changes needs one TimeDeformation per component")
            object.__setattr__(self, "time_changes", h)

    @property
    def n(self) -> int:
        return len(self.kernels)

    @property
    def is_monotone(self) -> bool:
        return all(k.is_nondecreasing for k in self.kernels)

    def local_time(self, j: int, t):
        if self.time_changes is None:
            return t
        return self.time_changes[j](t)

    def cumulative_kernel(self, mask: int, t: float, s):
        """``sum_{j in J} kernel_j(clock_j(t) - s)``."""
        s = np.asarray(s, dtype=np.float64)
        total = np.zeros(s.shape)
        for j in indices_from_mask(mask):
            total = total + self.kernels[j - 1](self.local_time(j - 1, t) - s)
        return total

    def subset_compensator(self, mask: int, t: float, tol: float = DEFAULT_TOL) -> float:
        return sn_subset_compensator(self, mask, t, tol)

    def to_dict(self):
        return {
            "model_type": "shot_noise",
            "components": self.n,
            "intensity": self.intensity.to_dict(),
            "marks": self.marks.to_dict(),
            "kernels": [k.to_dict() for k in self.kernels],
        }


def _check_tol(tol):
    tol = float(tol)
    if not MIN_TOL <= tol <= MAX_TOL:
        raise ArgumentError(f"tol must lie in [{MIN_TOL}, {MAX_TOL}], got {tol}")
    return tol


def _check_mask(model, mask):
    if isinstance(mask, (list, tuple, set, frozenset)):
        from .numerics import mask_from_indices

        mask = mask_from_indices(mask, model.n)
    mask = int(mask)
    if mask <= 0 or mask >> model.n:
        raise ArgumentError(f"subset mask {mask} is not a nonempty subset of 1..{model.n}")
    return mask


def _breakpoints(model: ShotNoiseModel, lags, upper: float):
    """Intensity jumps and ramp kinks inside ``(0, upper)``.

    ``lags`` pairs each kernel with the local time its lag is measured from.
    """
    pts = set(model.intensity.breakpoints)
    for kernel, t_local in lags:
        pts.add(t_local)
        if kernel.kink is not None:
            pts.add(t_local - kernel.kink)
    return sorted(p for p in pts if 0.0 < p < upper)


def _integral(model, upper, total_kernel, lags, tol):
    marks = model.marks
    intensity = model.intensity

    def f(s):
        return intensity(s) * marks.one_minus_laplace_transform(total_kernel(s))

    return integrate(f, 0.0, upper, breakpoints=_breakpoints(model, lags, upper), tol=tol)


def sn_subset_compensator(model: ShotNoiseModel, mask, t: float, tol: float = DEFAULT_TOL) -> float:
    """Subset compensator ``comp_J(t)`` by adaptive quadrature, ``tol`` relative.

    Raises
    ------
    NumericalError
        If the quadrature does not converge within its depth cap.
    """
    mask = _check_mask(model, mask)
    tol = _check_tol(tol)
    t = float(t)
    if not (math.isfinite(t) and t >= 0):
        raise ArgumentError(f"t must be finite and >= 0, got {t}")
    if t == 0:
        return 0.0
    members = [j - 1 for j in indices_from_mask(mask)]
    lags = [(model.kernels[j], float(model.local_time(j, t))) for j in members]
    upper = max(tl for _, tl in lags)
    return _integral(model, upper, lambda s: model.cumulative_kernel(mask, t, s), lags, tol).value


def _exp_neg(x):
    return 0.0 if x > LOG_FLOOR else math.exp(-x)


def sn_bivariate_log_survival(model: ShotNoiseModel, t1: float, t2: float, tol: float = DEFAULT_TOL) -> float:
    """Exponent of the two-component formula built from subset compensators."""
    if model.n != 2:
        raise ArgumentError("sn_bivariate_survival needs a two-component shot-noise model")
    SurvivalQuery((t1, t2))
    lam = lambda mask, t: sn_subset_compensator(model, mask, t, tol) if t > 0 else 0.0  # noqa: E731
    if t1 <= t2:
        return lam(2, t2) + (lam(3, t1) - lam(2, t1))
    return lam(1, t1) + (lam(3, t2) - lam(1, t2))


def sn_bivariate_survival(model: ShotNoiseModel, t1: float, t2: float, tol: float = DEFAULT_TOL) -> float:
    """``exp(-comp_2(t2) - (comp_12(t1) - comp_2(t1)))`` for ``t1 <= t2``,
    the mirrored expression otherwise.

    This is the compensator-based formula. It coincides with the exact
    survival probability when ``t1 == t2`` or when every kernel is constant;
    for other time-varying kernels see :func:`sn_exact_joint_survival`.
    """
    return _exp_neg(sn_bivariate_log_survival(model, t1, t2, tol))


def sn_exact_joint_log_survival(model: ShotNoiseModel, horizons, tol: float = DEFAULT_TOL) -> float:
    """``-log E[exp(-sum_j H_j(t_j))]`` from the Poisson Laplace functional.

    ``int_0^{max t} rate(s) [1 - LT(sum_j kernel_j(t_j - s))] ds`` with ``kernel_j = 0`` at
    negative lags. For nondecreasing kernels this is the exact joint survival
    exponent at any horizon vector.
    """
    query = SurvivalQuery(tuple(np.ravel(horizons)))
    if query.n != model.n:
        raise ArgumentError(f"{query.n} horizons for a {model.n}-component model")
    tol = _check_tol(tol)
    t = query.horizons
    lags = [(model.kernels[j], float(model.local_time(j, t[j]))) for j in range(model.n)]
    upper = max(tl for _, tl in lags)
    if upper == 0:
        return 0.0

    def total_kernel(s):
        out = np.zeros(np.shape(s))
        for kernel, tl in lags:
            out = out + kernel(tl - np.asarray(s))
        return out

    return _integral(model, upper, total_kernel, lags, tol).value


def sn_exact_joint_survival(model: ShotNoiseModel, horizons, tol: float = DEFAULT_TOL) -> float:
    return _exp_neg(sn_exact_joint_log_survival(model, horizons, tol))


def exponential_decay_compensator(rate: float, decay: float, g0: float, mark_rate: float, t: float) -> float:
    """Closed-form compensator for constant intensity, ``kernel = g0 e^{-decay u}``
    and exponential marks: ``(rate/decay) log((b + g0) / (b + g0 e^{-decay t}))``."""
    b = mark_rate
    return rate / decay * math.log((b + g0) / (b + g0 * math.exp(-decay * t)))


def all_components(model: ShotNoiseModel) -> int:
    return full_mask(model.n)
