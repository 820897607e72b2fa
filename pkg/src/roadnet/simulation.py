"""Run a scenario to its final time with one of the three schemes."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .classical import ClassicalScheme, StepFluxes
from .multipath import LocalScheme, MultipathScheme
from .network import (
    ArcDensityState,
    Boundaries,
    GridSpec,
    NetworkSpec,
    PathCellMap,
    PathDensityState,
    merge_path_state,
    physical_omega,
    split_arc_state,
    validate,
    validate_boundaries,
)

SOLVERS = ("classical", "multipath", "local")


@dataclass(frozen=True)
class Scenario:
    """Everything needed to run one experiment.

    ``initial_arcs`` / ``initial_paths`` map ids to a constant or per-cell
    densities.  When only arc totals are given, the multi-path state shares
    each cell equally among the paths through it; when only path densities
    are given, arc totals are their sums.  ``probe`` places the recorded
    cell ``J`` just ``"after"`` or just ``"before"`` the first junction of
    each path; time series are kept at ``J-1, J, J+1``.
    """

    name: str
    network: NetworkSpec
    grid: GridSpec
    boundary: Boundaries = field(default_factory=Boundaries)
    initial_arcs: Mapping[str, float | tuple[float, ...]] = field(default_factory=dict)
    initial_paths: Mapping[str, float | tuple[float, ...]] = field(default_factory=dict)
    probe: str | None = None

    def diagnostics(self) -> list[str]:
        diags = validate(self.network, self.grid) + validate_boundaries(self.network, self.boundary, self.grid.t_f)
        for kind, table, ids in (
            ("arc", self.initial_arcs, set(self.network.arc_ids)),
            ("path", self.initial_paths, {p.id for p in self.network.paths}),
        ):
            for key in table:
                if key not in ids:
                    diags.append(f"initial: unknown {kind} {key!r}")
        return diags

    def arc_state(self) -> ArcDensityState:
        if self.initial_arcs or not self.initial_paths:
            return ArcDensityState.from_arrays(self.network, dict(self.initial_arcs))
        return merge_path_state(self.path_state())

    def path_state(self) -> PathDensityState:
        cmap = PathCellMap(self.network, self.grid)
        if self.initial_paths or not self.initial_arcs:
            return PathDensityState.from_arrays(cmap, dict(self.initial_paths))
        return split_arc_state(cmap, self.arc_state())


@dataclass
class SimulationResult:
    solver: str
    scenario: str
    grid: GridSpec
    final: ArcDensityState | PathDensityState
    arc_density: ArcDensityState
    times: np.ndarray
    mass: np.ndarray
    mass_residual: float
    inflow_integral: dict
    outflow_integral: dict
    probe_columns: list
    probes: np.ndarray
    fluxes: list = field(default_factory=list)
    steps_taken: int = 0
    wall_clock: float = 0.0


def total_mass(state: ArcDensityState | PathDensityState, grid: GridSpec) -> float:
    """Vehicles on the network; a shared cell counts once."""
    if isinstance(state, PathDensityState):
        values = physical_omega(state)
    else:
        values = state.rho
    return grid.dx * math.fsum(values)


def _make_scheme(sc: Scenario, solver: str, check_cfl: bool):
    if solver == "classical":
        return ClassicalScheme(sc.network, sc.grid, sc.boundary, check_cfl)
    if solver == "multipath":
        if not sc.network.paths:
            raise ValueError(f"scenario {sc.name} defines no paths")
        return MultipathScheme(sc.network, sc.grid, sc.boundary, check_cfl)
    if solver == "local":
        return LocalScheme(sc.network, sc.grid, sc.boundary, check_cfl)
    raise ValueError(f"unknown solver {solver!r}; expected one of {SOLVERS}")


def probe_index(cmap: PathCellMap, path_id: str, probe: str) -> int | None:
    """Path-cell index ``J`` for ``probe`` in {"after", "before"}."""
    crossings = cmap.junction_interfaces(path_id)
    if not crossings:
        return None
    _, before, after = crossings[0]
    return after if probe == "after" else before


def probe_layout(net: NetworkSpec, grid: GridSpec, probe: str | None) -> tuple[list[str], np.ndarray]:
    """Column names and physical cell indices for cells ``J-1, J, J+1`` of every path."""
    if probe is None or not net.paths:
        return [], np.zeros(0, dtype=int)
    cmap = PathCellMap(net, grid)
    names, cells = [], []
    for pid in cmap.path_ids:
        J = probe_index(cmap, pid, probe)
        if J is None:
            continue
        for off, tag in ((-1, "J-1"), (0, "J"), (1, "J+1")):
            k = J + off
            if 1 <= k <= cmap.path_length(pid):
                names.append(f"{pid}:{tag}")
                cells.append(int(cmap.global_cells[pid][k - 1]))
    return names, np.array(cells, dtype=int)


def simulate(
    sc: Scenario,
    solver: str,
    *,
    t_f: float | None = None,
    check_cfl: bool = True,
    keep_fluxes: bool = False,
    steady_tol: float | None = None,
    initial: ArcDensityState | PathDensityState | None = None,
) -> SimulationResult:
    """Advance ``sc`` from its initial state with ``solver``.

    Each step uses left-endpoint boundary data (``t^n``).  Boundary flux
    integrals use the same rectangle rule, so they balance the mass change
    to roundoff.  With ``steady_tol`` the run stops early once no cell
    changes by more than that in one step.
    """
    scheme = _make_scheme(sc, solver, check_cfl)
    grid = sc.grid
    if t_f is None:
        n_steps = grid.n_steps
    else:
        n_steps = max(0, math.ceil(t_f / grid.dt - 1e-9))

    if solver == "multipath":
        state = initial if initial is not None else sc.path_state()
        values = state.mu.copy()
        physical = lambda v: np.bincount(scheme.cmap.flat_cells, weights=v, minlength=scheme.cmap.layout.n_cells)
    else:
        state = initial if initial is not None else sc.arc_state()
        values = state.rho.copy()
        physical = lambda v: v

    names, cells = probe_layout(sc.network, grid, sc.probe)
    probes = np.empty((n_steps + 1, cells.size))
    mass = np.empty(n_steps + 1)
    inflow: dict[str, float] = {}
    outflow: dict[str, float] = {}
    history: list[StepFluxes] = []
    residual = 0.0

    phys = physical(values)
    mass[0] = grid.dx * math.fsum(phys)
    probes[0] = phys[cells]
    start = time.perf_counter()
    steps = 0
    for n in range(n_steps):
        t = n * grid.dt
        new, fl = scheme.advance(values, t)
        for k, v in fl.inflow.items():
            inflow[k] = inflow.get(k, 0.0) + grid.dt * v
        for k, v in fl.outflow.items():
            outflow[k] = outflow.get(k, 0.0) + grid.dt * v
        if keep_fluxes:
            history.append(fl)
        change = float(np.max(np.abs(new - values))) if new.size else 0.0
        values = new
        steps = n + 1
        phys = physical(values)
        mass[n + 1] = grid.dx * math.fsum(phys)
        probes[n + 1] = phys[cells]
        balance = grid.dt * (math.fsum(fl.inflow.values()) - math.fsum(fl.outflow.values()))
        residual = max(residual, abs(mass[n + 1] - mass[n] - balance))
        if steady_tol is not None and change < steady_tol:
            break
    elapsed = time.perf_counter() - start

    mass = mass[: steps + 1]
    probes = probes[: steps + 1]
    if solver == "multipath":
        final = PathDensityState(scheme.cmap, values)
        arc_density = ArcDensityState(scheme.cmap.layout, physical(values))
    else:
        final = ArcDensityState(state.layout, values)
        arc_density = final
    return SimulationResult(
        solver=solver,
        scenario=sc.name,
        grid=grid,
        final=final,
        arc_density=arc_density,
        times=np.arange(steps + 1) * grid.dt,
        mass=mass,
        mass_residual=residual,
        inflow_integral=inflow,
        outflow_integral=outflow,
        probe_columns=names,
        probes=probes,
        fluxes=history,
        steps_taken=steps,
        wall_clock=elapsed,
    )


def path_profiles(result: SimulationResult, net: NetworkSpec) -> dict[str, dict[str, np.ndarray]]:
    """Per-path density profiles: ``mu`` (own density) and ``omega`` (total).

    Arc-based solvers have no per-path split, so both entries hold the arc
    total along the path.  Networks without paths get one pseudo-path per
    arc named ``arc:<id>``.
    """
    out = {}
    rho = result.arc_density.rho
    if net.paths:
        cmap = PathCellMap(net, result.grid)
        for pid in cmap.path_ids:
            omega = rho[cmap.global_cells[pid]]
            if isinstance(result.final, PathDensityState):
                mu = result.final.path(pid).copy()
            else:
                mu = omega.copy()
            out[pid] = {"mu": mu, "omega": omega}
    else:
        layout = result.arc_density.layout
        for a in layout.arc_ids:
            v = rho[layout.slice(a)].copy()
            out[f"arc:{a}"] = {"mu": v, "omega": v.copy()}
    return out
