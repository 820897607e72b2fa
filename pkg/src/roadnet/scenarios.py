"""Canonical test networks, comparison runs and independent oracles."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .fundamental import FundamentalDiagram
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
from .simulation import SOLVERS, Scenario, SimulationResult, path_profiles, simulate, total_mass

SCENARIOS = (
    "two_in_one_out_const",
    "two_in_one_out_timedep",
    "one_in_two_out",
    "two_in_two_out",
    "five_arc",
    "single_road_riemann",
    "synthetic_large",
)

# 241 time nodes on [0, 5]
REFERENCE_DT = 5.0 / 240.0
CELLS = 20

D = BoundaryCondition.dirichlet


def _unit_arcs(ids, cells=CELLS):
    return tuple(ArcSpec(a, 1.0, cells) for a in ids)


def _grid(t_f, cells=CELLS):
    return GridSpec(dx=1.0 / cells, dt=REFERENCE_DT, t_f=float(t_f))


def _two_in_one_out(name, t_f, up1, up2):
    net = NetworkSpec(
        arcs=_unit_arcs(["1", "2", "3"]),
        junctions=(JunctionSpec("J", ("1", "2"), ("3",), ((1.0, 1.0),), (0.5, 0.5)),),
        paths=(PathSpec("P1", ("1", "3")), PathSpec("P2", ("2", "3"))),
    )
    bcs = Boundaries(
        arc_upstream={"1": up1, "2": up2},
        arc_downstream={"3": D(0.0)},
        path_upstream={"P1": up1, "P2": up2},
        path_downstream={"P1": D(0.0), "P2": D(0.0)},
    )
    return Scenario(name, net, _grid(t_f), bcs, probe="after")


def _one_in_two_out():
    a21, a31 = 0.8, 0.2
    rho_in = 0.5
    net = NetworkSpec(
        arcs=_unit_arcs(["1", "2", "3"]),
        junctions=(JunctionSpec("J", ("1",), ("2", "3"), ((a21,), (a31,)), (1.0,)),),
        paths=(PathSpec("P1", ("1", "2")), PathSpec("P2", ("1", "3"))),
    )
    bcs = Boundaries(
        arc_upstream={"1": D(rho_in)},
        arc_downstream={"2": D(0.0), "3": D(0.9)},
        path_upstream={"P1": D(a21 * rho_in), "P2": D(a31 * rho_in)},
        path_downstream={"P1": D(0.0), "P2": D(0.9)},
    )
    return Scenario("one_in_two_out", net, _grid(11), bcs, probe="before")


def _two_in_two_out():
    a31, a41, a32, a42 = 0.8, 0.2, 0.9, 0.1
    r1 = r2 = 0.5
    net = NetworkSpec(
        arcs=_unit_arcs(["1", "2", "3", "4"]),
        junctions=(JunctionSpec("J", ("1", "2"), ("3", "4"), ((a31, a32), (a41, a42)), (0.5, 0.5)),),
        paths=(
            PathSpec("P1", ("1", "3")),
            PathSpec("P2", ("2", "3")),
            PathSpec("P3", ("1", "4")),
            PathSpec("P4", ("2", "4")),
        ),
    )
    bcs = Boundaries(
        arc_upstream={"1": D(r1), "2": D(r2)},
        arc_downstream={"3": D(0.0), "4": D(0.0)},
        path_upstream={"P1": D(a31 * r1), "P2": D(a32 * r2), "P3": D(a41 * r1), "P4": D(a42 * r2)},
        path_downstream={p: D(0.0) for p in ("P1", "P2", "P3", "P4")},
    )
    return Scenario("two_in_two_out", net, _grid(6), bcs, probe="after")


def _five_arc(t_block=2.0, t_f=8.0, alpha=0.6):
    # arc 2 is stopped at J1 from t_block on (an accident)
    signal = SignalSchedule(period=1e6, offset=0.0, green={"2": ((0.0, t_block),)})
    net = NetworkSpec(
        arcs=_unit_arcs(["1", "2", "3", "4", "5"]),
        junctions=(
            JunctionSpec("J1", ("1", "2"), ("3",), ((1.0, 1.0),), (0.5, 0.5), signal),
            JunctionSpec("J2", ("3",), ("4", "5"), ((alpha,), (1.0 - alpha,)), (1.0,)),
        ),
        paths=(PathSpec("P1", ("1", "3", "4")), PathSpec("P2", ("2", "3", "5"))),
    )
    bcs = Boundaries(
        arc_upstream={"1": D(0.3), "2": D(0.2)},
        arc_downstream={"4": D(0.0), "5": D(0.0)},
        path_upstream={"P1": D(0.3), "P2": D(0.2)},
        path_downstream={"P1": D(0.0), "P2": D(0.0)},
    )
    return Scenario("five_arc", net, _grid(t_f), bcs)


def _riemann(cells=40, left=0.8, right=0.2, t_f=0.5, x0=0.5):
    dx = 1.0 / cells
    net = NetworkSpec(arcs=(ArcSpec("1", 1.0, cells),), paths=(PathSpec("P1", ("1",)),))
    centers = (np.arange(cells) + 0.5) * dx
    init = tuple(float(left) if x < x0 else float(right) for x in centers)
    bcs = Boundaries(
        arc_upstream={"1": D(left)},
        arc_downstream={"1": D(right)},
        path_upstream={"P1": D(left)},
        path_downstream={"P1": D(right)},
    )
    grid = GridSpec(dx=dx, dt=0.5 * dx, t_f=float(t_f))
    return Scenario("single_road_riemann", net, grid, bcs, initial_arcs={"1": init})


# arc id -> (cells at 100 m); 3282 cells = 328.2 km
_LARGE_ARCS = {
    "e0": 300, "n0": 250, "f0": 400, "n1": 250, "c1": 150, "n2": 250, "c2": 150,
    "n3": 300, "c3": 150, "s0": 300, "s1": 250, "s2": 250, "s3": 282,
}


def _synthetic_large():
    dx, dt = 100.0, 2.5
    arcs = tuple(ArcSpec(a, n * dx, n) for a, n in _LARGE_ARCS.items())
    pair_a = ((0.0, 45.0),)
    pair_b = ((45.0, 90.0),)
    junctions = (
        JunctionSpec("J7", ("e0",), ("n0", "f0"), ((0.6,), (0.4,)), (1.0,)),
        JunctionSpec("N1", ("n0",), ("n1", "c1"), ((0.7,), (0.3,)), (1.0,)),
        JunctionSpec(
            "N2", ("n1", "c2"), ("n2",), ((1.0, 1.0),), (0.5, 0.5),
            SignalSchedule(90.0, 0.0, {"n1": pair_a, "c2": pair_b}),
        ),
        JunctionSpec("N3", ("n2",), ("n3", "c3"), ((0.7,), (0.3,)), (1.0,)),
        JunctionSpec("S3", ("s0", "c3"), ("s1",), ((1.0, 1.0),), (0.5, 0.5)),
        JunctionSpec("S2", ("s1", "f0"), ("s2", "c2"), ((0.7, 0.7), (0.3, 0.3)), (0.5, 0.5)),
        JunctionSpec(
            "S1", ("s2", "c1"), ("s3",), ((1.0, 1.0),), (0.5, 0.5),
            SignalSchedule(90.0, 0.0, {"s2": pair_a, "c1": pair_b}),
        ),
    )
    # 20 m/s free speed keeps 2 * dt * v_max <= dx
    net = NetworkSpec(arcs=arcs, junctions=junctions, diagram=FundamentalDiagram.parabola(1.0, 20.0))
    bcs = Boundaries(
        arc_upstream={"e0": D(0.3), "s0": D(0.25)},
        arc_downstream={"n3": D(0.0), "s3": D(0.0)},
    )
    grid = GridSpec(dx=dx, dt=dt, t_f=0.75 * 3600.0)
    return Scenario("synthetic_large", net, grid, bcs, initial_arcs={a: 0.05 for a in _LARGE_ARCS})


def build_scenario(name: str, **kwargs) -> Scenario:
    """Build one of :data:`SCENARIOS`.  Keyword arguments tweak the
    parametrised ones (``single_road_riemann``: cells/left/right/t_f;
    ``five_arc``: t_block/t_f/alpha)."""
    if name == "two_in_one_out_const":
        return _two_in_one_out(name, 5.0, D(0.4), D(0.2))
    if name == "two_in_one_out_timedep":
        t_f = 8.0
        times = np.arange(round(t_f / REFERENCE_DT) + 1) * REFERENCE_DT
        up1 = BoundaryCondition.sampled(times, 0.25 * (1.0 + np.sin(times)))
        up2 = BoundaryCondition.sampled(times, 0.25 * (1.0 + np.cos(times)))
        return _two_in_one_out(name, t_f, up1, up2)
    if name == "one_in_two_out":
        return _one_in_two_out()
    if name == "two_in_two_out":
        return _two_in_two_out()
    if name == "five_arc":
        return _five_arc(**kwargs)
    if name == "single_road_riemann":
        return _riemann(**kwargs)
    if name == "synthetic_large":
        return _synthetic_large()
    raise KeyError(f"unknown scenario {name!r}; expected one of {', '.join(SCENARIOS)}")


# ---------------------------------------------------------------------------
# Oracles
# ---------------------------------------------------------------------------


def riemann_exact(d: FundamentalDiagram, rho_l: float, rho_r: float, xi):
    """Entropy solution of the Riemann problem at ``xi = x / t``."""
    rho_l = float(d.check(rho_l))
    rho_r = float(d.check(rho_r))
    xi = np.asarray(xi, dtype=float)
    if rho_l == rho_r:
        out = np.full(xi.shape, rho_l)
    elif rho_l < rho_r:
        speed = (d.flux(rho_r) - d.flux(rho_l)) / (rho_r - rho_l)
        out = np.where(xi < speed, rho_l, rho_r)
    else:
        a, b = d.derivative(rho_l), d.derivative(rho_r)
        # f' is decreasing: bisect f'(rho) = xi inside [rho_r, rho_l]
        lo = np.full(xi.shape, rho_r)
        hi = np.full(xi.shape, rho_l)
        target = np.clip(xi, a, b)
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            above = d.derivative(mid) > target
            lo = np.where(above, mid, lo)
            hi = np.where(above, hi, mid)
        out = np.where(xi <= a, rho_l, np.where(xi >= b, rho_r, 0.5 * (lo + hi)))
    return float(out) if out.ndim == 0 else out


def riemann_cell_averages(d, rho_l, rho_r, x0, t, edges) -> np.ndarray:
    """Exact cell averages at time ``t`` of a Riemann problem centred at ``x0``."""
    edges = np.asarray(edges, dtype=float)
    if rho_l > rho_r:
        kinks = [x0 + t * d.derivative(rho_l), x0 + t * d.derivative(rho_r)]
    elif rho_l < rho_r:
        kinks = [x0 + t * (d.flux(rho_r) - d.flux(rho_l)) / (rho_r - rho_l)]
    else:
        kinks = []
    out = np.empty(edges.size - 1)
    for i, (a, b) in enumerate(zip(edges[:-1], edges[1:])):
        pts = [k for k in kinks if a < k < b]
        val, _ = integrate.quad(
            lambda x: riemann_exact(d, rho_l, rho_r, (x - x0) / t), a, b, points=pts or None, limit=200
        )
        out[i] = val / (b - a)
    return out


@dataclass
class OracleResult:
    max_total: float
    argmax: np.ndarray
    ray_point: np.ndarray
    ray_attains: bool
    resolution: float


def junction_oracle(demands, supplies, A, q=None, max_flux: float = 0.25) -> OracleResult:
    """Brute-force maximum of the junction throughput.

    All incoming fluxes but the last run over a grid; the last one is set
    to its largest feasible value.  The grid step is chosen so that the
    reported maximum is within ``1e-3 * max_flux`` of the true supremum.
    """
    d = np.atleast_1d(np.asarray(demands, dtype=float))
    s = np.atleast_1d(np.asarray(supplies, dtype=float))
    n, m = d.size, s.size
    A = np.asarray(A, dtype=float).reshape(m, n)
    h = 1e-3 * max_flux
    step = h / max(1, n - 1)
    axes = [np.append(np.arange(0.0, d[i], step), d[i]) for i in range(n - 1)]
    last = A[:, n - 1]

    best, arg = -np.inf, np.zeros(n)

    def scan(prefix_vals):
        nonlocal best, arg
        # prefix_vals: (k, n-1) candidate values of the gridded fluxes
        used = prefix_vals @ A[:, : n - 1].T if n > 1 else np.zeros((1, m))
        room = s[None, :] - used
        ok = np.all((room >= -1e-15) | (last[None, :] > 0), axis=1)
        cap = np.full(room.shape[0], d[n - 1])
        for j in range(m):
            if last[j] > 0:
                cap = np.minimum(cap, room[:, j] / last[j])
        ok &= cap >= 0
        if not ok.any():
            return
        total = (prefix_vals.sum(axis=1) if n > 1 else 0.0) + cap
        total = np.where(ok, total, -np.inf)
        i = int(np.argmax(total))
        if total[i] > best:
            best = float(total[i])
            arg = np.append(prefix_vals[i] if n > 1 else [], cap[i])

    if n == 1:
        scan(np.zeros((1, 0)))
    elif n == 2:
        scan(axes[0][:, None])
    else:
        rest = np.stack(np.meshgrid(*axes[1:], indexing="ij"), axis=-1).reshape(-1, n - 2)
        for v in axes[0]:
            scan(np.hstack([np.full((rest.shape[0], 1), v), rest]))

    if q is None:
        q = np.full(n, 1.0 / n)
    q = np.asarray(q, dtype=float)
    caps = [d[i] / q[i] for i in range(n) if q[i] > 0]
    Aq = A @ q
    caps += [s[j] / Aq[j] for j in range(m) if Aq[j] > 0]
    ray = q * min(caps)
    return OracleResult(best, arg, ray, bool(ray.sum() >= best - h), h)


# ---------------------------------------------------------------------------
# Comparison runs
# ---------------------------------------------------------------------------


@dataclass
class ComparisonReport:
    scenario: str
    solvers: list
    profiles: dict
    timeseries_columns: list
    times: np.ndarray
    timeseries: dict
    outflow: dict
    linf: dict
    l1: dict
    mass_residual: dict
    wall_clock: dict
    extras: dict = field(default_factory=dict)
    results: dict = field(default_factory=dict, repr=False)

    def scalars(self) -> dict:
        return {
            "scenario": self.scenario,
            "solvers": list(self.solvers),
            "outflow_integrals": self.outflow,
            "linf_difference": self.linf,
            "l1_difference": self.l1,
            "mass_balance_residual": self.mass_residual,
            "wall_clock_s": self.wall_clock,
            **self.extras,
        }


def default_solvers(sc: Scenario) -> list[str]:
    out = ["classical"]
    if sc.network.paths:
        out.append("multipath")
    if sc.network.junctions:
        out.append("local")
    return out


def _pair_diffs(results, dx):
    linf, l1 = {}, {}
    names = list(results)
    for i, a in enumerate(names):
        for b in names[i + 1 :]:
            diff = np.abs(results[a].arc_density.rho - results[b].arc_density.rho)
            key = f"{a}-{b}"
            linf[key] = float(diff.max()) if diff.size else 0.0
            l1[key] = float(dx * diff.sum())
    return linf, l1


def junction_throughputs(result: SimulationResult, junction_id: str, step: int = -1) -> dict:
    """Flux leaving each incoming arc of a junction during one recorded step."""
    fl = result.fluxes[step].junctions[junction_id]
    if isinstance(fl, dict):
        return dict(fl["in"])
    if hasattr(fl, "gamma_in"):
        return list(fl.gamma_in)
    return list(np.asarray(fl).sum(axis=0))


def shift_error(classical: SimulationResult, multipath: SimulationResult, arc: str, min_distance: int = 3) -> float:
    """max_k |classical rho_k - multipath omega_{k+1}| on ``arc``, k >= min_distance."""
    layout = classical.arc_density.layout
    rc = classical.arc_density.rho[layout.slice(arc)]
    wm = multipath.arc_density.rho[layout.slice(arc)]
    k = np.arange(min_distance, rc.size)  # 1-based cell k -> index k-1
    return float(np.max(np.abs(rc[k - 1] - wm[k])))


def _extras(sc: Scenario, results: dict) -> dict:
    ex: dict = {}
    d = sc.network.diagram
    name = sc.name
    if name.startswith("two_in_one_out") and {"classical", "multipath"} <= set(results):
        c, mp = results["classical"], results["multipath"]
        oc, om = c.outflow_integral["3"], mp.outflow_integral["3"]
        ex["outflow_relative_difference"] = abs(oc - om) / oc if oc else abs(oc - om)
        ex["junction_shift_error"] = shift_error(c, mp, "3")
    if name == "one_in_two_out":
        ex["queue_formed"] = {
            k: bool(r.arc_density.arc("1")[-1] > d.sigma) for k, r in results.items()
        }
    if name == "two_in_two_out":
        bal = {}
        for k, r in results.items():
            if r.fluxes:
                tp = junction_throughputs(r, "J")
                vals = list(tp.values()) if isinstance(tp, dict) else list(tp)
                bal[k] = {"gamma": [float(v) for v in vals], "imbalance": float(abs(vals[0] - vals[1]))}
        ex["junction_throughput"] = bal
        out = {k: sum(r.outflow_integral.values()) for k, r in results.items()}
        ex["total_outflow"] = out
        if {"classical", "multipath"} <= set(out):
            ex["outflows_equal"] = bool(abs(out["classical"] - out["multipath"]) <= 1e-8 * out["classical"])
    if name == "five_arc":
        ex["arc5_vehicles"] = {
            k: r.grid.dx * float(r.arc_density.arc("5").sum()) for k, r in results.items()
        }
    ex["steps"] = {k: r.steps_taken for k, r in results.items()}
    return ex


def run_comparison(scenario: Scenario | str, solvers=None, keep_fluxes: bool = True) -> ComparisonReport:
    """Run ``scenario`` with several solvers and compare the results.

    Outflow integrals are left-endpoint sums ``dt * sum_n g(last, ghost)``,
    the same quadrature the schemes use, so mass balances exactly.
    """
    sc = build_scenario(scenario) if isinstance(scenario, str) else scenario
    diags = sc.diagnostics()
    if diags:
        raise ValueError("; ".join(diags))
    solvers = list(solvers) if solvers else default_solvers(sc)
    for s in solvers:
        if s not in SOLVERS:
            raise ValueError(f"unknown solver {s!r}")
    results = {s: simulate(sc, s, keep_fluxes=keep_fluxes) for s in solvers}
    linf, l1 = _pair_diffs(results, sc.grid.dx)
    first = next(iter(results.values()))
    return ComparisonReport(
        scenario=sc.name,
        solvers=solvers,
        profiles={s: path_profiles(r, sc.network) for s, r in results.items()},
        timeseries_columns=first.probe_columns,
        times=first.times,
        timeseries={s: r.probes for s, r in results.items()},
        outflow={s: dict(r.outflow_integral) for s, r in results.items()},
        linf=linf,
        l1=l1,
        mass_residual={s: r.mass_residual for s, r in results.items()},
        wall_clock={s: r.wall_clock for s, r in results.items()},
        extras=_extras(sc, results),
        results=results,
    )


__all__ = [
    "SCENARIOS",
    "ComparisonReport",
    "OracleResult",
    "build_scenario",
    "junction_oracle",
    "riemann_cell_averages",
    "riemann_exact",
    "run_comparison",
    "shift_error",
    "total_mass",
]
