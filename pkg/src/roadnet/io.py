"""Scenario files, run configuration and result emission.

A scenario document is one JSON object::

    {"name": ..., "diagram": {"type": "parabola", ...},
     "arcs": [{"id", "length", "cells"}],
     "junctions": [{"id", "incoming", "outgoing", "A", "q", "signal"}],
     "paths": [{"id", "arcs"}],
     "grid": {"dx", "dt", "t_f"},
     "boundary": {"arcs": {id: {"upstream": bc, "downstream": bc}},
                  "paths": {id: {"upstream": bc, "downstream": bc}}},
     "initial": {"arcs": {id: value | [values]}, "paths": {...}},
     "probe": "after" | "before" | null}

``A`` is the m x n routing matrix, either nested by rows or flat in
row-major order.  A boundary ``bc`` is ``{"kind": "dirichlet", "value": v}``,
``{"kind": "table", "t": [...], "value": [...]}`` or ``{"kind": "zero_flux"}``.
"""

from __future__ import annotations

import csv
import json
import os
import re
from dataclasses import dataclass, replace
from pathlib import Path

import jsonschema
import numpy as np

from .fundamental import ConfigurationError, FundamentalDiagram
from .network import (
    ArcSpec,
    BoundaryCondition,
    Boundaries,
    GridSpec,
    JunctionSpec,
    NetworkSpec,
    PathSpec,
    SignalSchedule,
)
from .scenarios import SCENARIOS, ComparisonReport, build_scenario, default_solvers, run_comparison
from .simulation import SOLVERS, Scenario

EMIT_KINDS = ("profiles", "timeseries", "report")
FLOAT_FORMAT = ".17g"

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_IDS = {"type": "array", "items": {"type": "string"}}
_DENSITIES = {"oneOf": [_NUM, {"type": "array", "items": _NUM}]}
_BC = {
    "type": "object",
    "required": ["kind"],
    "properties": {
        "kind": {"enum": ["dirichlet", "table", "zero_flux"]},
        "value": {"oneOf": [_NUM, {"type": "array", "items": _NUM}]},
        "t": {"type": "array", "items": _NUM},
    },
    "additionalProperties": False,
}
_ENDS = {
    "type": "object",
    "additionalProperties": {
        "type": "object",
        "properties": {"upstream": _BC, "downstream": _BC},
        "additionalProperties": False,
    },
}

SCENARIO_SCHEMA = {
    "type": "object",
    "required": ["arcs", "grid"],
    "properties": {
        "name": {"type": "string"},
        "diagram": {"type": "object", "properties": {"type": {"enum": ["parabola", "polynomial", "table"]}}},
        "arcs": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["id", "length"],
                "properties": {"id": {"type": "string"}, "length": _POS, "cells": {"type": "integer"}},
                "additionalProperties": False,
            },
        },
        "junctions": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "incoming", "outgoing", "A"],
                "properties": {
                    "id": {"type": "string"},
                    "incoming": _IDS,
                    "outgoing": _IDS,
                    "A": {
                        "type": "array",
                        "items": {"oneOf": [_NUM, {"type": "array", "items": _NUM}]},
                    },
                    "q": {"type": "array", "items": _NUM},
                    "signal": {
                        "type": "object",
                        "required": ["period"],
                        "properties": {
                            "period": _POS,
                            "offset": _NUM,
                            "green": {
                                "type": "object",
                                "additionalProperties": {
                                    "type": "array",
                                    "items": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2},
                                },
                            },
                        },
                        "additionalProperties": False,
                    },
                },
                "additionalProperties": False,
            },
        },
        "paths": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "arcs"],
                "properties": {"id": {"type": "string"}, "arcs": _IDS},
                "additionalProperties": False,
            },
        },
        "grid": {
            "type": "object",
            "required": ["dx", "dt", "t_f"],
            "properties": {"dx": _POS, "dt": _POS, "t_f": {"type": "number", "minimum": 0}},
            "additionalProperties": False,
        },
        "boundary": {
            "type": "object",
            "properties": {"arcs": _ENDS, "paths": _ENDS},
            "additionalProperties": False,
        },
        "initial": {
            "type": "object",
            "properties": {
                "arcs": {"type": "object", "additionalProperties": _DENSITIES},
                "paths": {"type": "object", "additionalProperties": _DENSITIES},
            },
            "additionalProperties": False,
        },
        "probe": {"enum": ["after", "before", None]},
    },
    "additionalProperties": False,
}


class ScenarioError(ValueError):
    """A scenario document failed validation; ``diagnostics`` lists why."""

    def __init__(self, diagnostics: list[str]):
        super().__init__("\n".join(diagnostics))
        self.diagnostics = list(diagnostics)


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------


def _bc_from_doc(doc: dict) -> BoundaryCondition:
    kind = doc["kind"]
    if kind == "dirichlet":
        return BoundaryCondition.dirichlet(doc.get("value", 0.0))
    if kind == "table":
        return BoundaryCondition.sampled(doc.get("t", ()), doc.get("value", ()))
    return BoundaryCondition.closed()


def _densities(value):
    return float(value) if isinstance(value, (int, float)) else tuple(float(v) for v in value)


def _matrix(flat_or_rows, m: int, n: int, loc: str, diags: list) -> tuple:
    if all(isinstance(r, list) for r in flat_or_rows):
        rows = tuple(tuple(float(v) for v in r) for r in flat_or_rows)
        if len(rows) != m or any(len(r) != n for r in rows):
            diags.append(f"{loc}: A must be {m}x{n}")
        return rows
    if any(isinstance(r, list) for r in flat_or_rows):
        diags.append(f"{loc}: A mixes rows and scalars")
        return ()
    if len(flat_or_rows) != m * n:
        diags.append(f"{loc}: A has {len(flat_or_rows)} entries, expected {m}x{n}")
        return ()
    vals = [float(v) for v in flat_or_rows]
    return tuple(tuple(vals[r * n : (r + 1) * n]) for r in range(m))


def _locations(doc: dict) -> dict[tuple[str, str], str]:
    out = {}
    for key, kind in (("arcs", "arc"), ("junctions", "junction"), ("paths", "path")):
        for i, item in enumerate(doc.get(key, [])):
            out[(kind, str(item.get("id")))] = f"$.{key}[{i}]"
    return out


_SEMANTIC = re.compile(r"^(arc|junction|path) (\S+?):")
_BOUNDARY = re.compile(r"^(arc|path) (upstream|downstream) boundary (\S+?):")


def _locate(diag: str, where: dict) -> str:
    m = _BOUNDARY.match(diag)
    if m:
        return f"$.boundary.{m.group(1)}s.{m.group(3)}.{m.group(2)}: {diag}"
    m = _SEMANTIC.match(diag)
    if m and (m.group(1), m.group(2)) in where:
        return f"{where[(m.group(1), m.group(2))]}: {diag}"
    if diag.startswith("initial"):
        return f"$.initial: {diag}"
    return f"$: {diag}"


def _build(doc: dict) -> tuple[Scenario | None, list[str]]:
    diags: list[str] = []
    try:
        diagram = FundamentalDiagram.from_config(doc.get("diagram", {"type": "parabola"}))
    except (ConfigurationError, KeyError, ValueError) as exc:
        return None, [f"$.diagram: {exc}"]

    g = doc["grid"]
    grid = GridSpec(float(g["dx"]), float(g["dt"]), float(g["t_f"]))
    arcs = []
    for i, a in enumerate(doc["arcs"]):
        cells = a.get("cells")
        if cells is None:
            cells = int(round(a["length"] / grid.dx))
        arcs.append(ArcSpec(str(a["id"]), float(a["length"]), int(cells)))

    junctions = []
    for i, j in enumerate(doc.get("junctions", [])):
        loc = f"$.junctions[{i}]"
        inc, out = tuple(j["incoming"]), tuple(j["outgoing"])
        rows = _matrix(j["A"], len(out), len(inc), loc, diags)
        signal = None
        if "signal" in j:
            s = j["signal"]
            green = {k: tuple((float(a), float(b)) for a, b in w) for k, w in s.get("green", {}).items()}
            signal = SignalSchedule(float(s["period"]), float(s.get("offset", 0.0)), green)
        q = tuple(float(v) for v in j["q"]) if "q" in j else None
        junctions.append(JunctionSpec(str(j["id"]), inc, out, rows, q, signal))

    paths = tuple(PathSpec(str(p["id"]), tuple(p["arcs"])) for p in doc.get("paths", []))
    net = NetworkSpec(tuple(arcs), tuple(junctions), paths, diagram)

    b = doc.get("boundary", {})
    tables: dict[str, dict] = {"arc_upstream": {}, "arc_downstream": {}, "path_upstream": {}, "path_downstream": {}}
    for group in ("arcs", "paths"):
        for key, ends in b.get(group, {}).items():
            for end, bc in ends.items():
                if bc["kind"] == "table" and not isinstance(bc.get("value"), list):
                    diags.append(f"$.boundary.{group}.{key}.{end}: table needs a value list")
                    continue
                if bc["kind"] == "dirichlet" and isinstance(bc.get("value"), list):
                    diags.append(f"$.boundary.{group}.{key}.{end}: dirichlet value must be a number")
                    continue
                tables[f"{group[:-1]}_{end}"][key] = _bc_from_doc(bc)
    bcs = Boundaries(**tables)

    init = doc.get("initial", {})
    sc = Scenario(
        name=str(doc.get("name", "scenario")),
        network=net,
        grid=grid,
        boundary=bcs,
        initial_arcs={k: _densities(v) for k, v in init.get("arcs", {}).items()},
        initial_paths={k: _densities(v) for k, v in init.get("paths", {}).items()},
        probe=doc.get("probe"),
    )
    if diags:
        return None, diags
    where = _locations(doc)
    diags = [_locate(d, where) for d in sc.diagnostics()]
    diags += _initial_diagnostics(sc)
    return (None if diags else sc), diags


def _initial_diagnostics(sc: Scenario) -> list[str]:
    out = []
    rho_max = sc.network.diagram.rho_max
    counts = {a.id: a.cell_count for a in sc.network.arcs}
    lengths = {p.id: sum(counts.get(a, 0) for a in p.arcs) for p in sc.network.paths}
    for group, table, sizes in (("arcs", sc.initial_arcs, counts), ("paths", sc.initial_paths, lengths)):
        for key, v in table.items():
            vals = [v] if isinstance(v, float) else list(v)
            if not isinstance(v, float) and key in sizes and len(vals) != sizes[key]:
                out.append(f"$.initial.{group}.{key}: expected {sizes[key]} values, got {len(vals)}")
            if any(not (0.0 <= x <= rho_max) for x in vals):
                out.append(f"$.initial.{group}.{key}: densities must lie in [0, {rho_max}]")
    return out


def scenario_diagnostics(document) -> list[str]:
    """Schema and semantic problems of ``document`` (empty when valid)."""
    if isinstance(document, (str, bytes)):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            return [f"$: malformed JSON: {exc}"]
    validator = jsonschema.Draft202012Validator(SCENARIO_SCHEMA)
    errors = sorted(validator.iter_errors(document), key=lambda e: e.json_path)
    if errors:
        return [f"{e.json_path}: {e.message}" for e in errors]
    return _build(document)[1]


def parse_scenario(document) -> Scenario:
    """Build a validated :class:`Scenario` from a JSON string or decoded object.

    Raises :class:`ScenarioError` carrying every diagnostic; nothing is
    constructed when any check fails.
    """
    if isinstance(document, (str, bytes)):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise ScenarioError([f"$: malformed JSON: {exc}"]) from None
    validator = jsonschema.Draft202012Validator(SCENARIO_SCHEMA)
    errors = sorted(validator.iter_errors(document), key=lambda e: e.json_path)
    if errors:
        raise ScenarioError([f"{e.json_path}: {e.message}" for e in errors])
    sc, diags = _build(document)
    if diags:
        raise ScenarioError(diags)
    return sc


def load_scenario(source: str | os.PathLike) -> Scenario:
    """A built-in scenario name or a path to a scenario file."""
    if str(source) in SCENARIOS:
        return build_scenario(str(source))
    path = Path(source)
    if not path.is_file():
        raise ScenarioError([f"$.scenario: {source!r} is neither a built-in scenario nor a file"])
    return parse_scenario(path.read_text())


# ---------------------------------------------------------------------------
# Serialisation
# ---------------------------------------------------------------------------


def _bc_to_doc(bc: BoundaryCondition) -> dict:
    if bc.kind == "dirichlet":
        return {"kind": "dirichlet", "value": bc.value}
    if bc.kind == "table":
        return {"kind": "table", "t": list(bc.times), "value": list(bc.values)}
    return {"kind": "zero_flux"}


def _ends(up: dict, down: dict) -> dict:
    out: dict = {}
    for key, bc in up.items():
        out.setdefault(key, {})["upstream"] = _bc_to_doc(bc)
    for key, bc in down.items():
        out.setdefault(key, {})["downstream"] = _bc_to_doc(bc)
    return out


def scenario_to_dict(sc: Scenario) -> dict:
    """JSON-ready document that :func:`parse_scenario` turns back into ``sc``."""
    net = sc.network
    junctions = []
    for j in net.junctions:
        item = {
            "id": j.id,
            "incoming": list(j.incoming),
            "outgoing": list(j.outgoing),
            "A": [list(r) for r in j.preferences],
        }
        if j.priorities is not None:
            item["q"] = list(j.priorities)
        if j.signal is not None:
            item["signal"] = {
                "period": j.signal.period,
                "offset": j.signal.offset,
                "green": {k: [list(w) for w in v] for k, v in j.signal.green.items()},
            }
        junctions.append(item)
    dens = lambda v: v if isinstance(v, float) else list(v)
    return {
        "name": sc.name,
        "diagram": net.diagram.to_config(),
        "arcs": [{"id": a.id, "length": a.length, "cells": a.cell_count} for a in net.arcs],
        "junctions": junctions,
        "paths": [{"id": p.id, "arcs": list(p.arcs)} for p in net.paths],
        "grid": {"dx": sc.grid.dx, "dt": sc.grid.dt, "t_f": sc.grid.t_f},
        "boundary": {
            "arcs": _ends(sc.boundary.arc_upstream, sc.boundary.arc_downstream),
            "paths": _ends(sc.boundary.path_upstream, sc.boundary.path_downstream),
        },
        "initial": {
            "arcs": {k: dens(v) for k, v in sc.initial_arcs.items()},
            "paths": {k: dens(v) for k, v in sc.initial_paths.items()},
        },
        "probe": sc.probe,
    }


def dump_scenario(sc: Scenario) -> str:
    return json.dumps(scenario_to_dict(sc), indent=2)


# ---------------------------------------------------------------------------
# Run configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RunConfig:
    """What to run and where to write it."""

    scenario: str
    solver: str = "all"
    dx: float | None = None
    dt: float | None = None
    t_f: float | None = None
    out: str = "results"
    emit: tuple[str, ...] = EMIT_KINDS

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        known = {"scenario", "solver", "dx", "dt", "t_f", "out", "emit"}
        unknown = set(doc) - known
        if unknown:
            raise ScenarioError([f"$.{k}: unknown run option" for k in sorted(unknown)])
        if "scenario" not in doc:
            raise ScenarioError(["$: 'scenario' is required"])
        emit = doc.get("emit", EMIT_KINDS)
        if isinstance(emit, str):
            emit = tuple(e.strip() for e in emit.split(",") if e.strip())
        return cls(
            scenario=str(doc["scenario"]),
            solver=doc.get("solver", "all"),
            dx=doc.get("dx"),
            dt=doc.get("dt"),
            t_f=doc.get("t_f"),
            out=str(doc.get("out", "results")),
            emit=tuple(emit),
        )

    def diagnostics(self) -> list[str]:
        out = []
        if self.solver not in (*SOLVERS, "all"):
            out.append(f"$.solver: {self.solver!r} is not one of {(*SOLVERS, 'all')}")
        for name in ("dx", "dt", "t_f"):
            v = getattr(self, name)
            if v is not None and not (isinstance(v, (int, float)) and v > 0):
                out.append(f"$.{name}: override must be positive, got {v!r}")
        for e in self.emit:
            if e not in EMIT_KINDS:
                out.append(f"$.emit: {e!r} is not one of {EMIT_KINDS}")
        return out

    def solvers(self, sc: Scenario) -> list[str]:
        return default_solvers(sc) if self.solver == "all" else [self.solver]


def apply_overrides(sc: Scenario, dx: float | None = None, dt: float | None = None, t_f: float | None = None) -> Scenario:
    """Copy of ``sc`` on a different grid.

    Changing ``dx`` recomputes every arc's cell count, which must come out
    integral; per-cell initial arrays cannot be carried over.
    """
    grid = sc.grid
    net = sc.network
    if dx is not None and dx != grid.dx:
        arcs = []
        for a in net.arcs:
            cells = a.length / dx
            if abs(cells - round(cells)) > 1e-9 * max(1.0, cells):
                raise ScenarioError([f"$.grid.dx: arc {a.id} length {a.length} is not a multiple of {dx}"])
            arcs.append(replace(a, cell_count=int(round(cells))))
        net = replace(net, arcs=tuple(arcs))
        for group, table in (("arcs", sc.initial_arcs), ("paths", sc.initial_paths)):
            for key, v in table.items():
                if not isinstance(v, float):
                    raise ScenarioError([f"$.initial.{group}.{key}: per-cell values cannot be regridded"])
    grid = GridSpec(
        dx if dx is not None else grid.dx,
        dt if dt is not None else grid.dt,
        t_f if t_f is not None else grid.t_f,
    )
    return replace(sc, network=net, grid=grid)


# ---------------------------------------------------------------------------
# Emission
# ---------------------------------------------------------------------------


def _fmt(v) -> str:
    return format(float(v), FLOAT_FORMAT)


def _plain(obj):
    """Convert numpy scalars/arrays nested in ``obj`` to JSON-native values."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    return obj


def _write(path: Path, writer):
    try:
        with path.open("w", newline="") as fh:
            writer(fh)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def emit_results(report: ComparisonReport, config: RunConfig | str | os.PathLike) -> list[Path]:
    """Write profile, time-series and report files; return their paths.

    ``profile_<solver>.csv`` has one row per (path, cell) with the cell
    centre ``x`` measured along the path; ``timeseries_J.csv`` has one row
    per time node and one column per (solver, probed cell).
    """
    if isinstance(config, RunConfig):
        out_dir, emit = Path(config.out), config.emit
    else:
        out_dir, emit = Path(config), EMIT_KINDS
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create {out_dir}: {exc.strerror or exc}") from exc
    written = []

    if "profiles" in emit:
        for solver in report.solvers:
            dx = report.results[solver].grid.dx if solver in report.results else 1.0
            profiles = report.profiles[solver]

            def rows(fh, profiles=profiles, dx=dx):
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["path", "cell", "x", "mu", "omega"])
                for pid, prof in profiles.items():
                    for k, (mu, om) in enumerate(zip(prof["mu"], prof["omega"]), start=1):
                        w.writerow([pid, k, _fmt((k - 0.5) * dx), _fmt(mu), _fmt(om)])

            path = out_dir / f"profile_{solver}.csv"
            _write(path, rows)
            written.append(path)

    if "timeseries" in emit:
        cols = list(report.timeseries_columns)

        def series(fh):
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t"] + [f"{s}:{c}" for s in report.solvers for c in cols])
            n = min(len(report.timeseries[s]) for s in report.solvers)
            for i in range(n):
                vals = [report.timeseries[s][i, c] for s in report.solvers for c in range(len(cols))]
                w.writerow([_fmt(report.times[i])] + [_fmt(v) for v in vals])

        path = out_dir / "timeseries_J.csv"
        _write(path, series)
        written.append(path)

    if "report" in emit:
        path = out_dir / "report.json"
        _write(path, lambda fh: json.dump(_plain(report.scalars()), fh, indent=2, sort_keys=True))
        written.append(path)
    return written


def run_config(config: RunConfig) -> tuple[ComparisonReport, list[Path]]:
    """Load, regrid, run and emit one configuration."""
    diags = config.diagnostics()
    if diags:
        raise ScenarioError(diags)
    sc = apply_overrides(load_scenario(config.scenario), config.dx, config.dt, config.t_f)
    report = run_comparison(sc, config.solvers(sc))
    return report, emit_results(report, config)


__all__ = [
    "EMIT_KINDS",
    "RunConfig",
    "SCENARIO_SCHEMA",
    "ScenarioError",
    "apply_overrides",
    "dump_scenario",
    "emit_results",
    "load_scenario",
    "parse_scenario",
    "run_config",
    "scenario_diagnostics",
    "scenario_to_dict",
]
