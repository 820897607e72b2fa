"""Per-arc Godunov scheme with junctions resolved by flux maximisation.

At every junction the incoming fluxes are chosen to maximise the total
throughput subject to the demand of each incoming road, the supply of each
outgoing road and the routing matrix.  Ties are broken with the
right-of-way (priority) vector.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .fundamental import FundamentalDiagram, godunov_flux
from .network import ArcDensityState, Boundaries, GridSpec, NetworkSpec

LP_TOL = 1e-13


def demand(d: FundamentalDiagram, rho):
    """Largest flux a cell at density ``rho`` can send downstream."""
    r = d.check(rho)
    out = np.where(r <= d.sigma, d._flux(r), d.max_flux)
    return float(out) if out.ndim == 0 else out


def supply(d: FundamentalDiagram, rho):
    """Largest flux a cell at density ``rho`` can receive from upstream."""
    r = d.check(rho)
    out = np.where(r <= d.sigma, d.max_flux, d._flux(r))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class CFLResult:
    passed: bool
    margin: float

    def __bool__(self) -> bool:
        return self.passed


def cfl_check_classical(d: FundamentalDiagram, grid: GridSpec) -> CFLResult:
    """``dt * sup|f'| <= dx``; margin is ``dx - dt * sup|f'|``."""
    margin = grid.dx - grid.dt * d.max_char_speed
    return CFLResult(margin >= -1e-15 * grid.dx, margin)


class CFLError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Junction problem
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class JunctionFluxSolution:
    gamma_in: np.ndarray
    gamma_out: np.ndarray

    @property
    def total(self) -> float:
        return float(self.gamma_in.sum())


def _constraints(demands, supplies, A):
    n = demands.size
    G = np.vstack([-np.eye(n), np.eye(n), A])
    h = np.concatenate([np.zeros(n), demands, supplies])
    return G, h


def feasible_vertices(demands, supplies, A) -> np.ndarray:
    """All vertices of ``{0 <= g <= demands, A g <= supplies}``."""
    demands = np.asarray(demands, dtype=float)
    G, h = _constraints(demands, np.asarray(supplies, dtype=float), np.asarray(A, dtype=float))
    n = demands.size
    scale = max(1.0, float(np.max(np.abs(h))))
    out = []
    for rows in combinations(range(G.shape[0]), n):
        M = G[list(rows)]
        if abs(np.linalg.det(M)) < 1e-12:
            continue
        v = np.linalg.solve(M, h[list(rows)])
        if np.all(G @ v <= h + LP_TOL * scale):
            out.append(v)
    return np.array(out).reshape(-1, n)


def _nearest_on_optimal_face(G, h, target_total, point):
    """Closest point to ``point`` within ``{G g <= h, sum(g) = target_total}``.

    Exact for tiny dimensions: the minimiser is the projection onto the
    affine hull of some face, so every active set of size < n is tried.
    """
    n = point.size
    scale = max(1.0, float(np.max(np.abs(h))))
    best, best_dist = None, np.inf
    ones = np.ones((1, n))
    for size in range(n):
        for rows in combinations(range(G.shape[0]), size):
            M = np.vstack([G[list(rows)], ones])
            b = np.concatenate([h[list(rows)], [target_total]])
            MMt = M @ M.T
            if np.linalg.matrix_rank(MMt) < M.shape[0]:
                continue
            cand = point + M.T @ np.linalg.solve(MMt, b - M @ point)
            if np.any(G @ cand > h + 1e-12 * scale):
                continue
            dist = float(np.sum((cand - point) ** 2))
            if dist < best_dist:
                best, best_dist = cand, dist
    return best


def solve_junction(demands, supplies, A, q=None) -> JunctionFluxSolution:
    """Maximise total junction flux, breaking ties with priorities ``q``.

    The maximum is found by enumerating the vertices of the feasible
    polytope.  The returned point is the furthest feasible point on the ray
    ``q * s`` when that point is optimal.  Otherwise the incoming roads
    whose demand bound stops the ray are saturated and the ray continues
    over the remaining roads; if supply constraints stop it short of the
    optimum, the optimal point nearest to where it stopped is taken.
    """
    d = np.atleast_1d(np.asarray(demands, dtype=float))
    s = np.atleast_1d(np.asarray(supplies, dtype=float))
    n, m = d.size, s.size
    A = np.asarray(A, dtype=float).reshape(m, n) if np.size(A) == m * n else None
    if A is None:
        raise ValueError(f"preference matrix must be {m}x{n}")
    if q is None:
        q = np.full(n, 1.0 / n)
    q = np.atleast_1d(np.asarray(q, dtype=float))
    if q.shape != (n,):
        raise ValueError(f"priorities must have {n} entries")
    if np.any(q < 0) or abs(q.sum() - 1.0) > 1e-12:
        raise ValueError("priorities must be non-negative and sum to 1")
    if np.any(d < 0) or np.any(s < 0):
        raise ValueError("demands and supplies must be non-negative")

    if n == 1:
        col = A[:, 0]
        caps = [d[0]] + [s[j] / col[j] for j in range(m) if col[j] > 0]
        g = np.array([min(caps)])
        return JunctionFluxSolution(g, A @ g)

    verts = feasible_vertices(d, s, A)
    best = float(np.max(verts.sum(axis=1)))
    tol = LP_TOL * max(1.0, best)

    fixed = np.zeros(n)
    free = np.ones(n, dtype=bool)
    point = fixed
    while free.any():
        direction = np.where(free, q, 0.0)
        if direction.sum() <= 0:
            direction = free.astype(float)
        residual = np.maximum(s - A @ fixed, 0.0)
        along = A @ direction
        caps = [d[i] / direction[i] for i in range(n) if free[i] and direction[i] > 0]
        caps += [residual[j] / along[j] for j in range(m) if along[j] > 0]
        step = min(caps)
        point = fixed + direction * step
        if point.sum() >= best - tol:
            return JunctionFluxSolution(point, A @ point)
        binding = free & (direction > 0) & (np.abs(point - d) <= tol)
        if not binding.any():
            break
        fixed = np.where(binding, d, fixed)
        free &= ~binding
        point = fixed

    G, h = _constraints(d, s, A)
    g = _nearest_on_optimal_face(G, h, best, point)
    g = np.clip(g, 0.0, d)
    return JunctionFluxSolution(g, A @ g)


# ---------------------------------------------------------------------------
# Time stepping
# ---------------------------------------------------------------------------


@dataclass
class StepFluxes:
    """Boundary and junction fluxes used during one step (flow rates)."""

    inflow: dict = field(default_factory=dict)
    outflow: dict = field(default_factory=dict)
    junctions: dict = field(default_factory=dict)
    paths: dict = field(default_factory=dict)

    def net_boundary_flux(self) -> float:
        return sum(self.inflow.values()) - sum(self.outflow.values())


class ArcScheme:
    """Shared plumbing for schemes that evolve one density per arc cell."""

    def __init__(self, net: NetworkSpec, grid: GridSpec, bcs: Boundaries):
        self.net = net
        self.grid = grid
        self.bcs = bcs
        self.d = net.diagram
        state = ArcDensityState.constant(net)
        self.layout = state.layout
        L = self.layout
        self.entries = [(a, L.first(a)) for a in net.entry_arcs()]
        self.exits = [(a, L.last(a)) for a in net.exit_arcs()]
        self.junction_cells = [
            (
                j,
                np.array([L.last(a) for a in j.incoming]),
                np.array([L.first(a) for a in j.outgoing]),
                j.A,
                j.q,
            )
            for j in net.junctions
        ]

    def interior_fluxes(self, rho):
        G = godunov_flux(self.d, rho[:-1], rho[1:])
        right = np.empty_like(rho)
        left = np.empty_like(rho)
        right[:-1] = G
        left[1:] = G
        return left, right

    def free_ends(self, rho, t, left, right, fluxes: StepFluxes):
        d = self.d
        for a, c in self.entries:
            bc = self.bcs.arc_up(a)
            g = godunov_flux(d, bc.ghost(t), rho[c]) if bc.is_open else 0.0
            left[c] = g
            fluxes.inflow[a] = g
        for a, c in self.exits:
            bc = self.bcs.arc_down(a)
            g = godunov_flux(d, rho[c], bc.ghost(t)) if bc.is_open else 0.0
            right[c] = g
            fluxes.outflow[a] = g

    def junction_fluxes(self, rho, t, left, right, fluxes: StepFluxes):
        raise NotImplementedError

    def advance(self, rho: np.ndarray, t: float):
        rho = self.d.check(rho)
        left, right = self.interior_fluxes(rho)
        fluxes = StepFluxes()
        self.free_ends(rho, t, left, right, fluxes)
        self.junction_fluxes(rho, t, left, right, fluxes)
        new = rho - self.grid.ratio * (right - left)
        return new, fluxes

    def step(self, state: ArcDensityState, t: float) -> ArcDensityState:
        new, _ = self.advance(state.rho, t)
        return ArcDensityState(state.layout, new)


class ClassicalScheme(ArcScheme):
    def __init__(self, net: NetworkSpec, grid: GridSpec, bcs: Boundaries, check_cfl: bool = True):
        if check_cfl:
            res = cfl_check_classical(net.diagram, grid)
            if not res:
                raise CFLError(f"dt * sup|f'| exceeds dx by {-res.margin:.3g}")
        super().__init__(net, grid, bcs)

    def junction_fluxes(self, rho, t, left, right, fluxes):
        d = self.d
        for j, cin, cout, A, q in self.junction_cells:
            dem = demand(d, rho[cin]) * j.green_mask(t)
            sup = supply(d, rho[cout])
            sol = solve_junction(dem, sup, A, q)
            right[cin] = sol.gamma_in
            left[cout] = sol.gamma_out
            fluxes.junctions[j.id] = sol


def step_classical(
    net: NetworkSpec, grid: GridSpec, state: ArcDensityState, t: float, bcs: Boundaries | None = None
) -> ArcDensityState:
    return ClassicalScheme(net, grid, bcs or Boundaries()).step(state, t)
