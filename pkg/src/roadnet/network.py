"""Network description, discretisation and the path/cell bookkeeping.

Cells are numbered from 1 within an arc.  Along a path the cells of its
arcs are concatenated in order, so on a 20-cell-per-arc network the second
arc of a path starts at path cell 21.  Internally everything lives in flat
0-based numpy arrays; the 1-based numbering only appears in the public
lookup helpers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .fundamental import ConfigurationError, FundamentalDiagram

SUM_TOL = 1e-12


# ---------------------------------------------------------------------------
# Specs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ArcSpec:
    id: str
    length: float
    cell_count: int


@dataclass(frozen=True)
class SignalSchedule:
    """Periodic traffic light on the incoming arcs of one junction.

    ``green`` maps an incoming arc id to ``(start, end)`` windows measured
    in ``[0, period)`` after shifting time by ``offset``.  Incoming arcs not
    listed are always green.
    """

    period: float
    offset: float = 0.0
    green: Mapping[str, tuple[tuple[float, float], ...]] = field(default_factory=dict)

    def is_green(self, arc_id: str, t: float) -> bool:
        windows = self.green.get(arc_id)
        if windows is None:
            return True
        phase = (t - self.offset) % self.period
        return any(a <= phase < b for a, b in windows)


@dataclass(frozen=True)
class JunctionSpec:
    """Junction with ``n`` incoming and ``m`` outgoing arcs.

    ``preferences`` is the m x n routing matrix (rows follow ``outgoing``,
    columns follow ``incoming``); ``priorities`` has one entry per incoming
    arc.
    """

    id: str
    incoming: tuple[str, ...]
    outgoing: tuple[str, ...]
    preferences: tuple[tuple[float, ...], ...]
    priorities: tuple[float, ...] | None = None
    signal: SignalSchedule | None = None

    @property
    def A(self) -> np.ndarray:
        return np.array(self.preferences, dtype=float).reshape(len(self.outgoing), len(self.incoming))

    @property
    def q(self) -> np.ndarray:
        if self.priorities is None:
            n = len(self.incoming)
            return np.full(n, 1.0 / n)
        return np.array(self.priorities, dtype=float)

    def green_mask(self, t: float) -> np.ndarray:
        if self.signal is None:
            return np.ones(len(self.incoming), dtype=bool)
        return np.array([self.signal.is_green(a, t) for a in self.incoming], dtype=bool)


@dataclass(frozen=True)
class PathSpec:
    id: str
    arcs: tuple[str, ...]


@dataclass(frozen=True)
class NetworkSpec:
    arcs: tuple[ArcSpec, ...]
    junctions: tuple[JunctionSpec, ...] = ()
    paths: tuple[PathSpec, ...] = ()
    diagram: FundamentalDiagram = field(default_factory=FundamentalDiagram.parabola)

    def arc(self, arc_id: str) -> ArcSpec:
        for a in self.arcs:
            if a.id == arc_id:
                return a
        raise KeyError(arc_id)

    @property
    def arc_ids(self) -> tuple[str, ...]:
        return tuple(a.id for a in self.arcs)

    def upstream_junction(self, arc_id: str) -> JunctionSpec | None:
        for j in self.junctions:
            if arc_id in j.outgoing:
                return j
        return None

    def downstream_junction(self, arc_id: str) -> JunctionSpec | None:
        for j in self.junctions:
            if arc_id in j.incoming:
                return j
        return None

    def entry_arcs(self) -> list[str]:
        """Arcs whose upstream end is a free network boundary."""
        return [a.id for a in self.arcs if self.upstream_junction(a.id) is None]

    def exit_arcs(self) -> list[str]:
        """Arcs whose downstream end is a free network boundary."""
        return [a.id for a in self.arcs if self.downstream_junction(a.id) is None]


@dataclass(frozen=True)
class GridSpec:
    dx: float
    dt: float
    t_f: float

    @property
    def ratio(self) -> float:
        return self.dt / self.dx

    @property
    def n_steps(self) -> int:
        # the last step ends at or just past t_f
        return max(0, math.ceil(self.t_f / self.dt - 1e-9))

    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt


@dataclass(frozen=True)
class BoundaryCondition:
    """Ghost-cell data at one free end.

    ``kind`` is ``"dirichlet"`` (constant ``value``), ``"table"`` (piecewise
    linear in time through ``times``/``values``, evaluated at the start of
    each step) or ``"zero_flux"`` (closed end).
    """

    kind: str = "zero_flux"
    value: float = 0.0
    times: tuple[float, ...] = ()
    values: tuple[float, ...] = ()

    @classmethod
    def dirichlet(cls, value: float) -> "BoundaryCondition":
        return cls("dirichlet", float(value))

    @classmethod
    def closed(cls) -> "BoundaryCondition":
        return cls("zero_flux")

    @classmethod
    def sampled(cls, times: Iterable[float], values: Iterable[float]) -> "BoundaryCondition":
        return cls("table", 0.0, tuple(float(t) for t in times), tuple(float(v) for v in values))

    @property
    def is_open(self) -> bool:
        return self.kind != "zero_flux"

    def ghost(self, t: float) -> float:
        if self.kind == "dirichlet":
            return self.value
        if self.kind == "table":
            return float(np.interp(t, self.times, self.values))
        return 0.0


@dataclass(frozen=True)
class Boundaries:
    """Boundary data keyed by arc id (classical and local solvers) and by
    path id (multi-path solver).  Missing entries are closed ends."""

    arc_upstream: Mapping[str, BoundaryCondition] = field(default_factory=dict)
    arc_downstream: Mapping[str, BoundaryCondition] = field(default_factory=dict)
    path_upstream: Mapping[str, BoundaryCondition] = field(default_factory=dict)
    path_downstream: Mapping[str, BoundaryCondition] = field(default_factory=dict)

    def arc_up(self, arc_id: str) -> BoundaryCondition:
        return self.arc_upstream.get(arc_id, _CLOSED)

    def arc_down(self, arc_id: str) -> BoundaryCondition:
        return self.arc_downstream.get(arc_id, _CLOSED)

    def path_up(self, path_id: str) -> BoundaryCondition:
        return self.path_upstream.get(path_id, _CLOSED)

    def path_down(self, path_id: str) -> BoundaryCondition:
        return self.path_downstream.get(path_id, _CLOSED)

    def all_conditions(self):
        for kind, table in (
            ("arc upstream", self.arc_upstream),
            ("arc downstream", self.arc_downstream),
            ("path upstream", self.path_upstream),
            ("path downstream", self.path_downstream),
        ):
            for key, bc in table.items():
                yield kind, key, bc


_CLOSED = BoundaryCondition()


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


def validate(net: NetworkSpec, grid: GridSpec | None = None) -> list[str]:
    """Return one diagnostic string per violated invariant (empty if valid)."""
    diags: list[str] = []
    ids = [a.id for a in net.arcs]
    arc_ids = set(ids)
    if len(arc_ids) != len(ids):
        diags.append("duplicate arc ids")
    for a in net.arcs:
        if not a.length > 0:
            diags.append(f"arc {a.id}: length must be positive")
        if a.cell_count < 3:
            diags.append(f"arc {a.id}: cell_count {a.cell_count} < 3")
        if grid is not None and a.cell_count > 0:
            if abs(a.length / a.cell_count - grid.dx) > 1e-12:
                diags.append(
                    f"arc {a.id}: length/cell_count = {a.length / a.cell_count!r} differs from dx = {grid.dx!r}"
                )

    seen_in: dict[str, str] = {}
    seen_out: dict[str, str] = {}
    for j in net.junctions:
        loc = f"junction {j.id}"
        for a in (*j.incoming, *j.outgoing):
            if a not in arc_ids:
                diags.append(f"{loc}: unknown arc {a!r}")
        if set(j.incoming) & set(j.outgoing):
            diags.append(f"{loc}: incoming and outgoing arcs overlap")
        for a in j.incoming:
            if a in seen_in:
                diags.append(f"{loc}: arc {a} already enters junction {seen_in[a]}")
            seen_in[a] = j.id
        for a in j.outgoing:
            if a in seen_out:
                diags.append(f"{loc}: arc {a} already leaves junction {seen_out[a]}")
            seen_out[a] = j.id
        n, m = len(j.incoming), len(j.outgoing)
        if n == 0 or m == 0:
            diags.append(f"{loc}: needs at least one incoming and one outgoing arc")
            continue
        rows = j.preferences
        if len(rows) != m or any(len(r) != n for r in rows):
            diags.append(f"{loc}: preference matrix must be {m}x{n}")
        else:
            A = np.array(rows, dtype=float)
            if np.any(A < 0) or np.any(A > 1):
                diags.append(f"{loc}: preference entries must lie in [0, 1]")
            for i, s in enumerate(A.sum(axis=0), start=1):
                if abs(s - 1.0) > SUM_TOL:
                    diags.append(f"{loc}: preference column {i} sums to {s:.12g}")
        if j.priorities is None:
            if n > 1:
                diags.append(f"{loc}: priorities q required for {n} incoming arcs")
        else:
            q = np.array(j.priorities, dtype=float)
            if q.shape != (n,):
                diags.append(f"{loc}: priorities must have {n} entries")
            elif np.any(q < 0) or abs(q.sum() - 1.0) > SUM_TOL:
                diags.append(f"{loc}: priorities must be non-negative and sum to 1")
        if j.signal is not None:
            if not j.signal.period > 0:
                diags.append(f"{loc}: signal period must be positive")
            for a in j.signal.green:
                if a not in j.incoming:
                    diags.append(f"{loc}: signal refers to non-incoming arc {a!r}")

    path_ids = [p.id for p in net.paths]
    if len(set(path_ids)) != len(path_ids):
        diags.append("duplicate path ids")
    for p in net.paths:
        loc = f"path {p.id}"
        if not p.arcs:
            diags.append(f"{loc}: empty")
            continue
        missing = [a for a in p.arcs if a not in arc_ids]
        if missing:
            diags.append(f"{loc}: unknown arcs {missing}")
            continue
        if len(set(p.arcs)) != len(p.arcs):
            diags.append(f"{loc}: repeats an arc")
        for a, b in zip(p.arcs, p.arcs[1:]):
            if not any(a in j.incoming and b in j.outgoing for j in net.junctions):
                diags.append(f"{loc}: arcs {a} -> {b} are not (incoming, outgoing) at a common junction")
    return diags


def validate_boundaries(net: NetworkSpec, bcs: Boundaries, t_f: float | None = None) -> list[str]:
    diags = []
    arc_ids = set(net.arc_ids)
    path_ids = {p.id for p in net.paths}
    for kind, key, bc in bcs.all_conditions():
        loc = f"{kind} boundary {key}"
        if kind.startswith("arc") and key not in arc_ids:
            diags.append(f"{loc}: unknown arc")
        if kind.startswith("path") and key not in path_ids:
            diags.append(f"{loc}: unknown path")
        if bc.kind not in ("dirichlet", "table", "zero_flux"):
            diags.append(f"{loc}: unknown kind {bc.kind!r}")
            continue
        vals = [bc.value] if bc.kind == "dirichlet" else list(bc.values)
        rho_max = net.diagram.rho_max
        if any(not (0.0 <= v <= rho_max) for v in vals):
            diags.append(f"{loc}: values must lie in [0, {rho_max}]")
        if bc.kind == "table":
            if len(bc.times) != len(bc.values) or len(bc.times) == 0:
                diags.append(f"{loc}: time table needs matching non-empty times/values")
            elif np.any(np.diff(bc.times) <= 0):
                diags.append(f"{loc}: table times must increase")
            elif t_f is not None and (bc.times[0] > 0 or bc.times[-1] < t_f - 1e-9):
                diags.append(f"{loc}: time table does not cover [0, {t_f}]")
    return diags


# ---------------------------------------------------------------------------
# Discretisation
# ---------------------------------------------------------------------------


class CellLayout:
    """Flat 0-based numbering of all physical cells, arcs in declaration order."""

    def __init__(self, net: NetworkSpec):
        self.arc_ids = net.arc_ids
        counts = [a.cell_count for a in net.arcs]
        self.offsets = dict(zip(self.arc_ids, np.concatenate([[0], np.cumsum(counts)[:-1]]).astype(int)))
        self.counts = dict(zip(self.arc_ids, counts))
        self.n_cells = int(sum(counts))

    def first(self, arc_id: str) -> int:
        return int(self.offsets[arc_id])

    def last(self, arc_id: str) -> int:
        return int(self.offsets[arc_id] + self.counts[arc_id] - 1)

    def slice(self, arc_id: str) -> slice:
        o = int(self.offsets[arc_id])
        return slice(o, o + self.counts[arc_id])


class PathCellMap:
    """Bijection between (path, path cell) and (arc, arc cell).

    ``global_cells[p]`` holds, for every cell of path ``p`` in order, its
    index in the flat physical-cell numbering of :class:`CellLayout`.
    """

    def __init__(self, net: NetworkSpec, grid: GridSpec | None = None):
        if grid is not None:
            for a in net.arcs:
                if abs(a.length / a.cell_count - grid.dx) > 1e-12:
                    raise ConfigurationError(f"arc {a.id}: cell count inconsistent with dx")
        self.net = net
        self.layout = CellLayout(net)
        self.path_ids = tuple(p.id for p in net.paths)
        self.global_cells: dict[str, np.ndarray] = {}
        self._arc_start: dict[str, dict[str, int]] = {}
        for p in net.paths:
            parts, starts, k = [], {}, 0
            for a in p.arcs:
                starts[a] = k
                s = self.layout.slice(a)
                parts.append(np.arange(s.start, s.stop))
                k += self.layout.counts[a]
            self.global_cells[p.id] = np.concatenate(parts) if parts else np.zeros(0, int)
            self._arc_start[p.id] = starts
        # flat concatenation of all path cells, used by aggregate_omega
        self.offsets = {}
        o = 0
        for pid in self.path_ids:
            self.offsets[pid] = o
            o += self.global_cells[pid].size
        self.size = o
        self.flat_cells = (
            np.concatenate([self.global_cells[p] for p in self.path_ids]) if self.path_ids else np.zeros(0, int)
        )
        self.traversing: dict[int, tuple[str, ...]] = {}
        for pid in self.path_ids:
            for c in self.global_cells[pid]:
                self.traversing[int(c)] = self.traversing.get(int(c), ()) + (pid,)

    def path_length(self, path_id: str) -> int:
        return int(self.global_cells[path_id].size)

    def locate(self, path_id: str, k: int) -> tuple[str, int]:
        """Path cell ``k`` (1-based) -> (arc id, arc cell, 1-based)."""
        n = self.path_length(path_id)
        if not 1 <= k <= n:
            raise IndexError(f"path {path_id} has cells 1..{n}")
        for a, start in self._arc_start[path_id].items():
            if start < k <= start + self.layout.counts[a]:
                return a, k - start
        raise AssertionError("unreachable")

    def path_cell(self, path_id: str, arc_id: str, cell: int) -> int:
        """Inverse of :meth:`locate`."""
        starts = self._arc_start[path_id]
        if arc_id not in starts:
            raise KeyError(f"path {path_id} does not traverse arc {arc_id}")
        if not 1 <= cell <= self.layout.counts[arc_id]:
            raise IndexError(f"arc {arc_id} has cells 1..{self.layout.counts[arc_id]}")
        return starts[arc_id] + cell

    def paths_through(self, arc_id: str, cell: int) -> tuple[str, ...]:
        g = self.layout.first(arc_id) + cell - 1
        return self.traversing.get(g, ())

    def junction_interfaces(self, path_id: str) -> list[tuple[str, int, int]]:
        """``(junction id, k_before, k_after)`` for every junction on the path."""
        out = []
        path = self.net.paths[self.path_ids.index(path_id)]
        for a, b in zip(path.arcs, path.arcs[1:]):
            j = self.net.downstream_junction(a)
            k = self._arc_start[path_id][b]
            out.append((j.id if j else "?", k, k + 1))
        return out


def path_cell_map(net: NetworkSpec, grid: GridSpec | None = None) -> PathCellMap:
    return PathCellMap(net, grid)


# ---------------------------------------------------------------------------
# States
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ArcDensityState:
    """Total density per physical cell, flat in :class:`CellLayout` order."""

    layout: CellLayout
    rho: np.ndarray

    @classmethod
    def constant(cls, net: NetworkSpec, value: float = 0.0) -> "ArcDensityState":
        layout = CellLayout(net)
        return cls(layout, np.full(layout.n_cells, float(value)))

    @classmethod
    def from_arrays(cls, net: NetworkSpec, values: Mapping[str, float | Sequence[float]]) -> "ArcDensityState":
        layout = CellLayout(net)
        rho = np.zeros(layout.n_cells)
        for a, v in values.items():
            rho[layout.slice(a)] = v
        return cls(layout, rho)

    def arc(self, arc_id: str) -> np.ndarray:
        return self.rho[self.layout.slice(arc_id)]

    def copy(self) -> "ArcDensityState":
        return ArcDensityState(self.layout, self.rho.copy())


@dataclass(frozen=True, eq=False)
class PathDensityState:
    """Per-path densities, flat in :class:`PathCellMap` order."""

    cmap: PathCellMap
    mu: np.ndarray

    @classmethod
    def zeros(cls, cmap: PathCellMap) -> "PathDensityState":
        return cls(cmap, np.zeros(cmap.size))

    @classmethod
    def from_arrays(cls, cmap: PathCellMap, values: Mapping[str, float | Sequence[float]]) -> "PathDensityState":
        mu = np.zeros(cmap.size)
        for pid, v in values.items():
            o = cmap.offsets[pid]
            mu[o : o + cmap.path_length(pid)] = v
        return cls(cmap, mu)

    def path(self, path_id: str) -> np.ndarray:
        o = self.cmap.offsets[path_id]
        return self.mu[o : o + self.cmap.path_length(path_id)]

    def copy(self) -> "PathDensityState":
        return PathDensityState(self.cmap, self.mu.copy())


def physical_omega(state: PathDensityState) -> np.ndarray:
    """Total density of every physical cell (zero on cells no path visits)."""
    cmap = state.cmap
    return np.bincount(cmap.flat_cells, weights=state.mu, minlength=cmap.layout.n_cells)


def aggregate_omega(state: PathDensityState, cmap: PathCellMap | None = None) -> dict[str, np.ndarray]:
    """Total density seen along each path, aligned with that path's cells."""
    cmap = cmap or state.cmap
    omega = physical_omega(PathDensityState(cmap, state.mu))
    return {pid: omega[cmap.global_cells[pid]] for pid in cmap.path_ids}


def split_arc_state(cmap: PathCellMap, state: ArcDensityState) -> PathDensityState:
    """Share each cell's total density equally among the paths through it."""
    mu = np.zeros(cmap.size)
    counts = np.bincount(cmap.flat_cells, minlength=cmap.layout.n_cells)
    share = np.divide(state.rho, counts, out=np.zeros_like(state.rho), where=counts > 0)
    mu[:] = share[cmap.flat_cells]
    return PathDensityState(cmap, mu)


def merge_path_state(state: PathDensityState) -> ArcDensityState:
    return ArcDensityState(state.cmap.layout, physical_omega(state))
