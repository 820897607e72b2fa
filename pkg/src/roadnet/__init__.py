"""Godunov-type traffic simulation on road networks.

Two solvers are provided: a classical per-arc scheme that resolves each
junction by maximising its throughput, and a multi-path scheme that tracks
one density per route and needs no junction procedure.  A local variant of
the latter splits traffic by direction only next to junctions.
"""

from .classical import (
    CFLError,
    JunctionFluxSolution,
    cfl_check_classical,
    demand,
    solve_junction,
    step_classical,
    supply,
)
from .fundamental import (
    ConfigurationError,
    DomainError,
    FundamentalDiagram,
    critical_density,
    flux,
    godunov_flux,
)
from .multipath import admissible, cfl_check_multipath, step_local, step_multipath
from .network import (
    ArcDensityState,
    ArcSpec,
    Boundaries,
    BoundaryCondition,
    GridSpec,
    JunctionSpec,
    NetworkSpec,
    PathCellMap,
    PathDensityState,
    PathSpec,
    SignalSchedule,
    aggregate_omega,
    path_cell_map,
    validate,
)
from .scenarios import (
    SCENARIOS,
    ComparisonReport,
    build_scenario,
    junction_oracle,
    riemann_exact,
    run_comparison,
)
from .simulation import Scenario, SimulationResult, simulate, total_mass
from .io import RunConfig, ScenarioError, emit_results, parse_scenario, scenario_to_dict

__version__ = "0.1.0"
