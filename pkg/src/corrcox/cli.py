"""``corrcox`` command-line front end.

Every command prints one JSON document (or a flat ``key,value`` CSV) whose
keys depend only on the command. Exit codes: 0 success, 1 failed check,
2 spec or argument error, 3 capacity, 4 numerical or tail-bound failure,
5 unsupported model.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
import time
from pathlib import Path

from . import __version__
from .checks import TOLERANCES, default_horizons, run_checks
from .compensators import build_table, marginal_recovery_residuals
from .errors import ArgumentError, CorrcoxError, UnsupportedModelError
from .models import FactorModel, MinDecomposition
from .numerics import indices_from_mask
from .shot_noise import (
    DEFAULT_TOL,
    ShotNoiseModel,
    _check_tol,
    sn_bivariate_survival,
    sn_exact_joint_survival,
    sn_subset_compensator,
)
from .simulation import mc_joint_survival, mc_simultaneous_prob
from .spec_io import load_spec
from .survival import (
    SurvivalQuery,
    joint_log_survival,
    joint_survival,
    joint_survival_mobius,
    min_decomposition_log_survival,
    min_decomposition_survival,
    mobius_log_survival,
)

LEVEL_PATHS = {"fast": 100_000, "full": 1_000_000}


def subset_label(mask: int) -> str:
    return "[" + ",".join(str(i) for i in indices_from_mask(mask)) + "]"


def parse_horizons(text: str, n: int | None = None) -> tuple:
    try:
        values = tuple(float(x) for x in text.split(","))
    except ValueError:
        raise ArgumentError(f"--horizons must be comma-separated numbers, got {text!r}") from None
    if n is not None and len(values) != n:
        raise ArgumentError(f"--horizons has {len(values)} values for a {n}-component model")
    SurvivalQuery(values)
    return values


def _horizons(args, model) -> tuple:
    if args.horizons is None:
        return tuple([1.0] * model.n)
    return parse_horizons(args.horizons, model.n)


class _TolSource:
    # Compensator source that forwards a quadrature tolerance.
    def __init__(self, model: ShotNoiseModel, tol: float):
        self.model = model
        self.tol = tol
        self.n = model.n

    def subset_compensator(self, mask, t):
        return sn_subset_compensator(self.model, mask, t, self.tol)


def _relative_residual(a: float, b: float) -> float:
    if a == b:
        return 0.0
    return abs(a - b) / max(abs(a), abs(b))


def _mc(est):
    return {"value": est.value, "stderr": est.stderr, "paths": est.paths, "seed": est.seed}


def _flatten(prefix, value, rows):
    if isinstance(value, dict):
        for k, v in value.items():
            _flatten(f"{prefix}.{k}" if prefix else str(k), v, rows)
    elif isinstance(value, list):
        for i, v in enumerate(value):
            _flatten(f"{prefix}.{i}", v, rows)
    else:
        rows.append((prefix, value))


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def render(doc: dict, fmt: str) -> str:
    """JSON (shortest round-trip floats) or a two-column CSV."""
    if fmt == "json":
        return json.dumps(doc, indent=2) + "\n"
    rows = []
    _flatten("", doc, rows)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["key", "value"])
    for key, v in rows:
        writer.writerow([key, _cell(v)])
    return buf.getvalue()


def _envelope(command, loaded, **extra):
    doc = {"command": command, "model_type": loaded.model_type, "model_hash": loaded.model_hash}
    doc.update(extra)
    return doc


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_survival(args) -> dict:
    loaded = load_spec(args.spec, args.lenient)
    model = loaded.model
    h = _horizons(args, model)
    query = SurvivalQuery(h)
    if isinstance(model, MinDecomposition):
        log_value = min_decomposition_log_survival(model, query)
        value = min_decomposition_survival(model, query)
        cont = math.fsum(float(p(t)) for p, t in zip(model.continuous_part, h))
        log_mobius = cont + (0.0 if model.jump_model is None else mobius_log_survival(model.jump_model, query))
        mobius = math.exp(-log_mobius)
    else:
        source = _TolSource(model, _check_tol(args.tol)) if isinstance(model, ShotNoiseModel) else model
        log_value = joint_log_survival(source, query)
        value = joint_survival(source, query)
        log_mobius = mobius_log_survival(source, query)
        mobius = joint_survival_mobius(source, query)
    results = {
        "joint_survival": value,
        "joint_survival_mobius": mobius,
        "residual": _relative_residual(value, mobius),
        "log_survival": log_value,
        "log_survival_mobius": log_mobius,
    }
    return _envelope("survival", loaded, horizons=list(h), results=results)


def _linear_table(model):
    if isinstance(model, FactorModel):
        return build_table(model), {}
    if isinstance(model, MinDecomposition):
        extra = {}
        for i, part in enumerate(model.continuous_part):
            if part.kind not in ("zero", "linear"):
                raise UnsupportedModelError(
                    f"continuous hazard {i + 1} is {part.kind}; Marshall-Olkin rates need linear compensators"
                )
            extra[1 << i] = part.rate if part.kind == "linear" else 0.0
        if model.jump_model is None:
            return None, extra
        return build_table(model.jump_model), extra
    raise UnsupportedModelError("Marshall-Olkin rates need a factor or min-decomposition model")


def cmd_mo_rates(args) -> dict:
    loaded = load_spec(args.spec, args.lenient)
    model = loaded.model
    table, extra = _linear_table(model)
    n = model.n
    if table is not None and not table.has_identity_clock:
        raise UnsupportedModelError(
            f"{table.deformation.kind} time deformation: compensators are not linear in time"
        )
    gamma = [0.0] * (1 << n) if table is None else [float(g) for g in table.gamma]
    for mask, rate in extra.items():
        gamma[mask] += rate
    rates = {subset_label(m): gamma[m] for m in range(1, 1 << n)}
    if table is None:
        residuals = [0.0] * n
    else:
        residuals = [float(r) for r in marginal_recovery_residuals(table)]
    negative = [subset_label(m) for m in range(1, 1 << n) if gamma[m] < -1e-10]
    results = {"rates": rates, "marginal_residuals": residuals, "negative_rates": negative}
    return _envelope("mo-rates", loaded, results=results)


def _simultaneous(model, paths, seed, horizon):
    if not (isinstance(model, FactorModel) and model.n == 2 and model.is_pure_jump_cp):
        return None
    est = mc_simultaneous_prob(model, paths, horizon, seed)
    g = build_table(model).gamma
    total = g[1] + g[2] + g[3]
    analytic = float(g[3] / total) if total > 0 and g[3] >= 0 else None
    return {
        "horizon": est.horizon,
        "analytic": analytic,
        "indicator": _mc(est.indicator),
        "rao_blackwell": _mc(est.rao_blackwell),
    }


def cmd_simulate(args) -> dict:
    loaded = load_spec(args.spec, args.lenient)
    model = loaded.model
    h = _horizons(args, model)
    paths = args.paths
    est = mc_joint_survival(model, h, paths, args.seed)
    if isinstance(model, MinDecomposition):
        analytic = min_decomposition_survival(model, h)
    else:
        analytic = joint_survival(model, h)
    results = {
        "joint_survival": {
            "analytic": analytic,
            "rao_blackwell": _mc(est.rao_blackwell),
            "indicator": _mc(est.indicator),
        },
        "simultaneous": _simultaneous(model, paths, args.seed, args.horizon),
    }
    return _envelope("simulate", loaded, horizons=list(h), paths=paths, seed=args.seed, results=results)


def cmd_shotnoise(args) -> dict:
    loaded = load_spec(args.spec, args.lenient)
    model = loaded.model
    if not isinstance(model, ShotNoiseModel):
        raise UnsupportedModelError("the shotnoise command needs a shot_noise spec")
    tol = _check_tol(args.tol)
    h = _horizons(args, model)
    comps = []
    for t in sorted(set(h)):
        for mask in range(1, 1 << model.n):
            comps.append({"subset": subset_label(mask), "t": t, "value": sn_subset_compensator(model, mask, t, tol)})
    results = {
        "compensators": comps,
        "joint_survival": joint_survival(_TolSource(model, tol), h),
        "bivariate_survival": sn_bivariate_survival(model, *h, tol) if model.n == 2 else None,
        "exact_joint_survival": sn_exact_joint_survival(model, h, tol),
        "monotone_kernels": model.is_monotone,
    }
    return _envelope("shotnoise", loaded, horizons=list(h), tol=tol, results=results)


def cmd_validate(args) -> dict:
    started = time.perf_counter()
    loaded = load_spec(args.spec, args.lenient)
    model = loaded.model
    paths = args.paths if args.paths is not None else LEVEL_PATHS[args.level]
    grid = [_horizons(args, model)] if args.horizons is not None else default_horizons(model)
    checks = run_checks(model, grid, paths, args.seed)
    failures = [c.name for c in checks if not c.passed]
    report = _envelope(
        "validate",
        loaded,
        argv=list(args.argv),
        level=args.level,
        paths=paths,
        seed=args.seed,
        horizons=[list(h) for h in grid],
        tolerances=dict(TOLERANCES),
        results=[c.to_dict() for c in checks],
        passed=not failures,
        failures=failures,
    )
    args.wall_clock = time.perf_counter() - started
    return report


COMMANDS = {
    "survival": cmd_survival,
    "mo-rates": cmd_mo_rates,
    "simulate": cmd_simulate,
    "shotnoise": cmd_shotnoise,
    "validate": cmd_validate,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="corrcox", description="Joint default-time laws of correlated Cox models.")
    parser.add_argument("--version", action="version", version=f"corrcox {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("spec", help="model specification (JSON)")
        p.add_argument("--format", choices=("json", "csv"), default="json")
        p.add_argument("--out", help="also write the output to this file")
        p.add_argument("--lenient", action="store_true", help="warn about unknown keys instead of failing")
        return p

    p = common(sub.add_parser("survival", help="closed-form joint survival"))
    p.add_argument("--horizons", help="comma-separated t_1,...,t_n (default all 1)")
    p.add_argument("--tol", type=float, default=DEFAULT_TOL, help="quadrature tolerance (shot noise)")

    common(sub.add_parser("mo-rates", help="Marshall-Olkin interaction rates"))

    p = common(sub.add_parser("simulate", help="Monte Carlo estimates"))
    p.add_argument("--horizons")
    p.add_argument("--paths", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--horizon", type=float, help="truncation horizon for simultaneous defaults")

    p = common(sub.add_parser("shotnoise", help="shot-noise compensators and survival"))
    p.add_argument("--horizons")
    p.add_argument("--tol", type=float, default=DEFAULT_TOL)

    p = common(sub.add_parser("validate", help="run every applicable cross-check"))
    p.add_argument("--horizons", help="check this horizon vector instead of the default grid")
    p.add_argument("--paths", type=int, help="override the path count of --level")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--level", choices=tuple(LEVEL_PATHS), default="fast")
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    args.argv = ["corrcox"] + argv
    args.wall_clock = None
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("corrcox: warning: %(message)s"))
    logger = logging.getLogger("corrcox")
    logger.addHandler(handler)
    try:
        doc = COMMANDS[args.command](args)
    except CorrcoxError as exc:
        print(f"corrcox: error: {exc}", file=sys.stderr)
        return exc.exit_code
    finally:
        logger.removeHandler(handler)
    text = render(doc, args.format)
    sys.stdout.write(text)
    if args.out:
        if args.wall_clock is not None:
            doc = dict(doc, wall_clock_seconds=args.wall_clock)
            text = render(doc, args.format)
        try:
            Path(args.out).write_text(text, encoding="utf-8")
        except OSError as exc:
            print(f"corrcox: error: cannot write {args.out}: {exc}", file=sys.stderr)
            return ArgumentError.exit_code
    if args.command == "validate" and not doc["passed"]:
        for name in doc["failures"]:
            print(f"corrcox: check failed: {name}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
