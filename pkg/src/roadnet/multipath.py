"""Multi-path Godunov scheme and its local (per-junction split) variant.

Each path carries its own density ``mu``.  The flux through every
interface is the scalar Godunov flux of the total density ``omega`` and is
shared among paths in proportion to ``mu / omega`` of the upstream cell,
so junctions need no separate treatment.
"""

from __future__ import annotations

import numpy as np

from .classical import ArcScheme, CFLError, CFLResult, StepFluxes
from .fundamental import DOMAIN_SLACK, DomainError, FundamentalDiagram, godunov_flux
from .network import (
    ArcDensityState,
    Boundaries,
    GridSpec,
    NetworkSpec,
    PathCellMap,
    PathDensityState,
    physical_omega,
)

OMEGA_FLOOR = 1e-300


def cfl_check_multipath(d: FundamentalDiagram, grid: GridSpec) -> CFLResult:
    """``2 * dt * sup|f'| <= dx``; margin is ``dx - 2 * dt * sup|f'|``."""
    margin = grid.dx - 2.0 * grid.dt * d.max_char_speed
    return CFLResult(margin >= -1e-15 * grid.dx, margin)


def admissible(state: PathDensityState, cmap: PathCellMap | None = None, rho_max: float | None = None) -> bool:
    cmap = cmap or state.cmap
    if rho_max is None:
        rho_max = cmap.net.diagram.rho_max
    if np.any(state.mu < 0):
        return False
    omega = physical_omega(PathDensityState(cmap, state.mu))
    return bool(np.all(omega <= rho_max + 1e-12))


def _ratio(mu, omega):
    return np.divide(mu, omega, out=np.zeros_like(mu), where=omega > OMEGA_FLOOR)


class MultipathScheme:
    """Global multi-path scheme on a validated network with paths."""

    def __init__(self, net: NetworkSpec, grid: GridSpec, bcs: Boundaries, check_cfl: bool = True):
        if check_cfl:
            res = cfl_check_multipath(net.diagram, grid)
            if not res:
                raise CFLError(f"2 * dt * sup|f'| exceeds dx by {-res.margin:.3g}")
        self.net = net
        self.grid = grid
        self.bcs = bcs
        self.d = net.diagram
        self.cmap = cmap = PathCellMap(net, grid)

        # extended per-path layout: [ghost, cells..., ghost]
        ext_off, o = {}, 0
        for pid in cmap.path_ids:
            ext_off[pid] = o
            o += cmap.path_length(pid) + 2
        self.ext_size = o
        self.interior = np.concatenate(
            [np.arange(ext_off[p] + 1, ext_off[p] + 1 + cmap.path_length(p)) for p in cmap.path_ids]
        ) if cmap.path_ids else np.zeros(0, int)
        self.ghost_left = np.array([ext_off[p] for p in cmap.path_ids], dtype=int)
        self.ghost_right = np.array([ext_off[p] + cmap.path_length(p) + 1 for p in cmap.path_ids], dtype=int)
        # interface i sits between ext positions i and i + 1
        self.iface_in = self.ghost_left
        self.iface_out = self.ghost_right - 1

        paths = {p.id: p for p in net.paths}
        self.first_arc = [paths[p].arcs[0] for p in cmap.path_ids]
        self.last_arc = [paths[p].arcs[-1] for p in cmap.path_ids]

        # junction crossings: (interface index, junction, incoming arc, outgoing arc)
        self.crossings = []
        for p in cmap.path_ids:
            arcs = paths[p].arcs
            for idx, (a, b) in enumerate(zip(arcs, arcs[1:])):
                j = net.downstream_junction(a)
                k_before = cmap.path_cell(p, a, cmap.layout.counts[a])
                self.crossings.append((ext_off[p] + k_before, j, a, b))

    # -- boundary data -------------------------------------------------------

    def _ghosts(self, t):
        bcs = self.bcs
        mu_l = np.array([bcs.path_up(p).ghost(t) for p in self.cmap.path_ids])
        mu_r = np.array([bcs.path_down(p).ghost(t) for p in self.cmap.path_ids])
        open_l = np.array([bcs.path_up(p).is_open for p in self.cmap.path_ids], dtype=bool)
        open_r = np.array([bcs.path_down(p).is_open for p in self.cmap.path_ids], dtype=bool)
        mu_l = np.where(open_l, mu_l, 0.0)
        mu_r = np.where(open_r, mu_r, 0.0)
        # ghost total density: all paths meeting at the same free end
        w_l = np.array([mu_l[[a == b for b in self.first_arc]].sum() for a in self.first_arc])
        w_r = np.array([mu_r[[a == b for b in self.last_arc]].sum() for a in self.last_arc])
        return mu_l, w_l, open_l, mu_r, w_r, open_r

    # -- stepping ---------------------------------------------------------------

    def advance(self, mu: np.ndarray, t: float):
        cmap, d = self.cmap, self.d
        if np.any(mu < -DOMAIN_SLACK):
            raise DomainError("negative path density")
        omega = np.bincount(cmap.flat_cells, weights=mu, minlength=cmap.layout.n_cells)
        if np.any(omega > d.rho_max + 1e-12):
            raise DomainError("total density exceeds rho_max")

        mu_l, w_l, open_l, mu_r, w_r, open_r = self._ghosts(t)
        mu_ext = np.zeros(self.ext_size)
        w_ext = np.zeros(self.ext_size)
        mu_ext[self.interior] = mu
        w_ext[self.interior] = omega[cmap.flat_cells]
        mu_ext[self.ghost_left] = mu_l
        w_ext[self.ghost_left] = w_l
        mu_ext[self.ghost_right] = mu_r
        w_ext[self.ghost_right] = w_r

        # all omega first, then every flux, then every update
        g = godunov_flux(d, w_ext[:-1], w_ext[1:])
        F = _ratio(mu_ext, w_ext)[:-1] * g
        F[self.iface_in[~open_l]] = 0.0
        F[self.iface_out[~open_r]] = 0.0

        fluxes = StepFluxes()
        for i, j, a, b in self.crossings:
            if j is not None and j.signal is not None and not j.signal.is_green(a, t):
                F[i] = 0.0
        for i, j, a, b in self.crossings:
            rec = fluxes.junctions.setdefault(j.id, {"in": {}, "out": {}})
            rec["in"][a] = rec["in"].get(a, 0.0) + F[i]
            rec["out"][b] = rec["out"].get(b, 0.0) + F[i]

        new = mu - self.grid.ratio * (F[self.interior] - F[self.interior - 1])

        for k, pid in enumerate(cmap.path_ids):
            fin, fout = F[self.iface_in[k]], F[self.iface_out[k]]
            a, b = self.first_arc[k], self.last_arc[k]
            fluxes.inflow[a] = fluxes.inflow.get(a, 0.0) + fin
            fluxes.outflow[b] = fluxes.outflow.get(b, 0.0) + fout
            fluxes.paths[pid] = (fin, fout)
        return new, fluxes

    def step(self, state: PathDensityState, t: float) -> PathDensityState:
        new, _ = self.advance(state.mu, t)
        return PathDensityState(state.cmap, new)


def step_multipath(
    net: NetworkSpec, grid: GridSpec, state: PathDensityState, t: float, bcs: Boundaries | None = None
) -> PathDensityState:
    return MultipathScheme(net, grid, bcs or Boundaries()).step(state, t)


class LocalScheme(ArcScheme):
    """Total density on arcs; per-direction split only across junctions.

    The last cell of each incoming arc is split into components
    ``A[j, i] * rho_i`` and pushed across the junction with the multi-path
    stencil.  As the component ratio ``mu / omega`` is exactly ``A[j, i]``
    there, the flux from arc ``i`` into arc ``j`` is
    ``A[j, i] * g(rho_i, rho_j)``; the first outgoing cell sums what it
    receives.
    """

    def __init__(self, net: NetworkSpec, grid: GridSpec, bcs: Boundaries, check_cfl: bool = True):
        if check_cfl:
            res = cfl_check_multipath(net.diagram, grid)
            if not res:
                raise CFLError(f"2 * dt * sup|f'| exceeds dx by {-res.margin:.3g}")
        super().__init__(net, grid, bcs)

    def junction_fluxes(self, rho, t, left, right, fluxes):
        d = self.d
        for j, cin, cout, A, _ in self.junction_cells:
            g = godunov_flux(d, rho[cin][None, :], rho[cout][:, None])
            flow = A * g * j.green_mask(t)[None, :]
            right[cin] = flow.sum(axis=0)
            left[cout] = flow.sum(axis=1)
            fluxes.junctions[j.id] = flow


def step_local(
    net: NetworkSpec, grid: GridSpec, state: ArcDensityState, t: float, bcs: Boundaries | None = None
) -> ArcDensityState:
    return LocalScheme(net, grid, bcs or Boundaries()).step(state, t)
