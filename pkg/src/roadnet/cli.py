"""Command-line entry point.

Exit codes: 0 on success, 1 when the input has diagnostics, 2 when a run
fails at runtime (I/O, CFL violation, domain error).
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from .io import EMIT_KINDS, RunConfig, ScenarioError, load_scenario, run_config, scenario_diagnostics
from .scenarios import SCENARIOS
from .simulation import SOLVERS, simulate

OK, DIAGNOSTICS, RUNTIME = 0, 1, 2


def _run_flags(p: argparse.ArgumentParser, scenario_flag: bool = True):
    if scenario_flag:
        p.add_argument("--scenario", help=f"built-in name ({', '.join(SCENARIOS)}) or scenario file")
    p.add_argument("--solver", choices=(*SOLVERS, "all"))
    p.add_argument("--dx", type=float)
    p.add_argument("--dt", type=float)
    p.add_argument("--tf", type=float, dest="t_f")
    p.add_argument("--out", help="output directory (default: results)")
    p.add_argument("--emit", help=f"comma-separated subset of {','.join(EMIT_KINDS)}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="roadnet", description="Traffic on road networks: junction schemes.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a scenario file")
    p.add_argument("file")

    p = sub.add_parser("run", help="run a configuration file and/or flags")
    p.add_argument("config", nargs="?", help="JSON run configuration")
    _run_flags(p)

    p = sub.add_parser("compare", help="run every applicable solver on one scenario")
    p.add_argument("scenario")
    _run_flags(p, scenario_flag=False)

    p = sub.add_parser("bench", help="time a large network run")
    p.add_argument("--scenario", default="synthetic_large")
    p.add_argument("--solver", choices=SOLVERS, default="local")
    p.add_argument("--tf", type=float, dest="t_f")
    return parser


def _config(args, base: dict) -> RunConfig:
    doc = dict(base)
    for key in ("scenario", "solver", "dx", "dt", "t_f", "out", "emit"):
        v = getattr(args, key, None)
        if v is not None:
            doc[key] = v
    return RunConfig.from_dict(doc)


def _cmd_validate(args) -> int:
    text = Path(args.file).read_text()
    diags = scenario_diagnostics(text)
    for d in diags:
        print(d)
    if diags:
        return DIAGNOSTICS
    print(f"{args.file}: ok")
    return OK


def _cmd_run(args, base: dict | None = None) -> int:
    if base is None:
        base = json.loads(Path(args.config).read_text()) if args.config else {}
        if not isinstance(base, dict):
            raise ScenarioError(["$: run configuration must be a JSON object"])
    config = _config(args, base)
    report, written = run_config(config)
    for path in written:
        print(path)
    summary = {"scenario": report.scenario, "outflow_integrals": report.outflow, "linf_difference": report.linf}
    print(json.dumps(summary, default=float, sort_keys=True))
    return OK


def _cmd_bench(args) -> int:
    sc = load_scenario(args.scenario)
    start = time.perf_counter()
    res = simulate(sc, args.solver, t_f=args.t_f)
    elapsed = time.perf_counter() - start
    out = {
        "scenario": sc.name,
        "solver": args.solver,
        "cells": int(res.arc_density.rho.size),
        "steps": res.steps_taken,
        "seconds": elapsed,
    }
    print(json.dumps(out))
    return OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "validate":
            return _cmd_validate(args)
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "compare":
            return _cmd_run(args, base={"scenario": args.scenario})
        return _cmd_bench(args)
    except ScenarioError as exc:
        for d in exc.diagnostics:
            print(d, file=sys.stderr)
        return DIAGNOSTICS
    except json.JSONDecodeError as exc:
        print(f"malformed JSON: {exc}", file=sys.stderr)
        return DIAGNOSTICS
    except Exception as exc:  # runtime failures: I/O, CFL, domain
        print(f"error: {exc}", file=sys.stderr)
        return RUNTIME


if __name__ == "__main__":
    sys.exit(main())
