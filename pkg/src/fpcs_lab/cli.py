"""Command-line interface: ``fpcs-lab {simulate,analyze,constants,sensitivity,verify}``.

Exit codes: 0 success, 1 a verification suite failed, 2 bad scenario or
arguments, 3 numerical failure, 4 subset budget exceeded.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import _backend
from .constants import compute_constants
from .critical import analyze
from .errors import NumericalError, ScaleLimit
from .perturbation import integrate_perturbed, measure_deviation, sensitivity_sweep
from .scenario import ScenarioError, load
from .system import integrate_unperturbed
from .verify import SUITES

log = logging.getLogger("fpcs_lab")

EXIT_OK, EXIT_FAILED, EXIT_SCHEMA, EXIT_NUMERIC, EXIT_SCALE = 0, 1, 2, 3, 4


def _clean(v):
    """JSON-safe copy: arrays to lists, inf to "inf", nan to null."""
    if isinstance(v, dict):
        return {k: _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, np.ndarray):
        return _clean(v.tolist())
    if isinstance(v, (np.floating, float)):
        v = float(v)
        if math.isnan(v):
            return None
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def _dump(obj) -> str:
    return json.dumps(_clean(obj), indent=2) + "\n"


def _fmt(v: float) -> str:
    return f"{v:.17g}"


def trajectory_rows(traj, kind: str):
    for k, (t, x) in enumerate(zip(traj.times, traj.states)):
        label = "jump" if traj.jumps[k] else kind
        yield [_fmt(t), *map(_fmt, x), str(k), label]


def _emit(args, name: str, text: str):
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / name).write_text(text)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_simulate(args) -> int:
    sc = load(args.scenario)
    x = integrate_unperturbed(sc.potential, sc.initial_state, sc.horizon, sc.tolerances)
    report = {
        "scenario": sc.name,
        "backend": _backend.BACKEND,
        "unperturbed": {"segments": x.segment_count, "terminal": x.terminal,
                        "final_state": x.final_state},
        "perturbed": None,
        "deviation": None,
    }
    trajs = [(x, "unperturbed")]
    if sc.perturbation is not None:
        U = sc.path(args.seed)
        xt = integrate_perturbed(sc.potential, sc.initial_state, U, sc.horizon, sc.tolerances)
        rep = measure_deviation(x, xt, U)
        report["perturbed"] = {"segments": xt.segment_count, "jumps": int(xt.jumps.sum()),
                               "terminal": xt.terminal, "final_state": xt.final_state}
        report["deviation"] = rep.to_dict()
        trajs.append((xt, "perturbed"))

    n = sc.dim
    if args.format == "json":
        body = _dump([{"kind": kind, "times": t.times, "states": t.states, "drifts": t.drifts,
                       "jumps": t.jumps, "horizon": t.horizon} for t, kind in trajs])
        fname = "trajectory.json"
    else:
        lines = [",".join(["t", *[f"x{i + 1}" for i in range(n)], "segment_id", "kind"])]
        for t, kind in trajs:
            lines += [",".join(r) for r in trajectory_rows(t, kind)]
        body = "\n".join(lines) + "\n"
        fname = "trajectory.csv"
    report_text = _dump(report)
    if args.out:
        _emit(args, fname, body)
        _emit(args, "run.json", report_text)
    else:
        sys.stdout.write(body)
    sys.stdout.write(report_text if args.out else "")
    return EXIT_OK


def cmd_analyze(args) -> int:
    sc = load(args.scenario)
    res = analyze(sc.potential, samples=args.samples, seed=args.seed or 0)
    text = _dump({"scenario": sc.name, **res.to_dict()})
    _emit(args, "analysis.json", text)
    sys.stdout.write(text)
    return EXIT_OK


def _gamma(args, sc):
    return args.gamma if args.gamma is not None else sc.gamma_override


def cmd_constants(args) -> int:
    sc = load(args.scenario)
    rep = compute_constants(sc.potential, _gamma(args, sc), sc.subset_budget)
    text = _dump({"scenario": sc.name, **rep.to_dict()})
    _emit(args, "constants.json", text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_sensitivity(args) -> int:
    sc = load(args.scenario)
    if sc.perturbation is None:
        family = {"kind": "deterministic", "params": {"jumps": [], "dim": sc.dim}}
    else:
        family = {"kind": sc.perturbation["kind"], "params": sc.perturbation_params()}
    seed = args.seed if args.seed is not None else (sc.perturbation or {}).get("seed", 0)
    summary = sensitivity_sweep(sc.potential, sc.initial_state, family, args.runs, sc.horizon,
                                seed=seed, jobs=args.jobs, tol=sc.tolerances)
    try:
        kappa = compute_constants(sc.potential, _gamma(args, sc), sc.subset_budget).kappa
    except ScaleLimit:
        kappa = None
    all_zero = summary.zero_perturbation_runs == summary.runs
    max_ratio = None if all_zero else summary.max_ratio
    out = {
        "scenario": sc.name,
        "runs": summary.runs,
        "seed": seed,
        "family": family["kind"],
        "max_ratio": max_ratio,
        "mean_ratio": None if all_zero else summary.mean_ratio,
        "max_sup_deviation": summary.max_sup_deviation,
        "max_sup_perturbation": float(summary.sup_perturbations.max()),
        "max_cumulative_abs": float(summary.cumulative_abs.max()),
        "zero_perturbation_runs": summary.zero_perturbation_runs,
        "kappa": kappa,
        "within_kappa": None if kappa is None else bool((max_ratio or 0.0) <= kappa),
    }
    text = _dump(out)
    curve = ["T,max_sup_deviation,median_sup_deviation"]
    curve += [",".join(map(_fmt, row)) for row in summary.growth_curve()]
    _emit(args, "sweep.json", text)
    _emit(args, "growth.csv", "\n".join(curve) + "\n")
    sys.stdout.write(text)
    return EXIT_OK


def cmd_verify(args) -> int:
    names = list(SUITES) if args.suite == "all" else [args.suite]
    if any(n not in SUITES for n in names):
        print(f"unknown suite {args.suite!r}; choose from {', '.join(SUITES)} or all",
              file=sys.stderr)
        return EXIT_SCHEMA
    results = [SUITES[n](args.seed or 0) for n in names]
    for r in results:
        log.info("suite %s: %s in %.2fs", r.name, "pass" if r.passed else "FAIL", r.elapsed)
    text = _dump({"seed": args.seed or 0, "passed": all(r.passed for r in results),
                  "suites": [r.to_dict() for r in results]})
    _emit(args, "verify.json", text)
    sys.stdout.write(text)
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAILED


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", metavar="DIR", help="directory for output files")
    common.add_argument("--seed", type=int, default=None, help="random seed")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for sweeps")
    common.add_argument("--format", choices=("csv", "json"), default="csv",
                        help="trajectory output format")

    p = argparse.ArgumentParser(prog="fpcs-lab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="integrate a scenario exactly")
    s.add_argument("scenario")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("analyze", parents=[common], help="critical points, CNC and gamma")
    s.add_argument("scenario")
    s.add_argument("--samples", type=int, default=2000, help="samples for empirical gamma")
    s.set_defaults(func=cmd_analyze)

    s = sub.add_parser("constants", parents=[common], help="recursive constant kappa")
    s.add_argument("scenario")
    s.add_argument("--gamma", type=float, default=None, help="override gamma at the top level")
    s.set_defaults(func=cmd_constants)

    s = sub.add_parser("sensitivity", parents=[common], help="Monte-Carlo deviation sweep")
    s.add_argument("scenario")
    s.add_argument("--runs", type=int, default=20)
    s.add_argument("--gamma", type=float, default=None)
    s.set_defaults(func=cmd_sensitivity)

    s = sub.add_parser("verify", parents=[common], help="run a property suite")
    s.add_argument("--suite", required=True, help=f"one of {', '.join(SUITES)}, or all")
    s.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("FPCS_LAB_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_SCHEMA if e.code else EXIT_OK
    if getattr(args, "runs", 1) is not None and getattr(args, "runs", 1) < 1:
        print("--runs must be at least 1", file=sys.stderr)
        return EXIT_SCHEMA
    try:
        return args.func(args)
    except ScenarioError as e:
        print(str(e), file=sys.stderr)
        return EXIT_SCHEMA
    except ScaleLimit as e:
        sys.stdout.write(_dump({"error": "ScaleLimit", "message": str(e)}))
        return EXIT_SCALE
    except NumericalError as e:
        text = _dump({"error": type(e).__name__, "message": str(e)})
        _emit(args, "run.json" if args.command == "simulate" else "error.json", text)
        sys.stdout.write(text)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
