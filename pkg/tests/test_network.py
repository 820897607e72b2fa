import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from roadnet.network import (
    ArcDensityState,
    ArcSpec,
    Boundaries,
    BoundaryCondition,
    GridSpec,
    JunctionSpec,
    NetworkSpec,
    PathDensityState,
    PathSpec,
    SignalSchedule,
    aggregate_omega,
    merge_path_state,
    path_cell_map,
    physical_omega,
    split_arc_state,
    validate,
    validate_boundaries,
)
from roadnet.scenarios import build_scenario

GRID = GridSpec(dx=0.05, dt=5 / 240, t_f=5.0)


def three_arc(A=((1.0, 1.0),), paths=None, q=(0.5, 0.5)):
    return NetworkSpec(
        arcs=tuple(ArcSpec(a, 1.0, 20) for a in "123"),
        junctions=(JunctionSpec("J", ("1", "2"), ("3",), A, q),),
        paths=paths or (PathSpec("P1", ("1", "3")), PathSpec("P2", ("2", "3"))),
    )


def test_merge_network_is_valid():
    assert validate(three_arc(), GRID) == []


def test_column_sum_diagnostic():
    net = NetworkSpec(
        arcs=tuple(ArcSpec(a, 1.0, 20) for a in "123"),
        junctions=(JunctionSpec("J", ("1",), ("2", "3"), ((0.7,), (0.2,))),),
    )
    diags = validate(net)
    assert any("preference column 1 sums to 0.9" in d for d in diags)


def test_path_order_diagnostic():
    net = three_arc(paths=(PathSpec("P1", ("3", "1")),))
    diags = validate(net)
    assert any("path P1" in d and "not (incoming, outgoing)" in d for d in diags)


def test_missing_priorities_diagnostic():
    diags = validate(three_arc(q=None))
    assert diags == ["junction J: priorities q required for 2 incoming arcs"]


def test_other_diagnostics():
    net = NetworkSpec(arcs=(ArcSpec("1", 1.0, 2), ArcSpec("1", 1.0, 20)))
    diags = validate(net, GRID)
    assert "duplicate arc ids" in diags
    assert any("cell_count 2 < 3" in d for d in diags)
    assert any("differs from dx" in d for d in diags)


def test_boundary_validation():
    net = three_arc()
    bcs = Boundaries(
        arc_upstream={"1": BoundaryCondition.dirichlet(1.5), "9": BoundaryCondition.dirichlet(0.1)},
        path_upstream={"P1": BoundaryCondition.sampled([0.0, 1.0], [0.1, 0.2])},
    )
    diags = validate_boundaries(net, bcs, t_f=5.0)
    assert any("values must lie" in d for d in diags)
    assert any("unknown arc" in d for d in diags)
    assert any("does not cover" in d for d in diags)


def test_path_cell_map_example():
    cmap = path_cell_map(three_arc(), GRID)
    assert cmap.locate("P1", 25) == ("3", 5)
    assert cmap.locate("P2", 25) == ("3", 5)
    assert cmap.global_cells["P1"][24] == cmap.global_cells["P2"][24]
    assert cmap.paths_through("3", 5) == ("P1", "P2")


def test_junction_sits_between_cells_20_and_21():
    cmap = path_cell_map(three_arc(), GRID)
    for p in ("P1", "P2"):
        assert cmap.junction_interfaces(p) == [("J", 20, 21)]


def test_single_arc_map_is_identity():
    net = NetworkSpec(arcs=(ArcSpec("1", 1.0, 10),), paths=(PathSpec("P", ("1",)),))
    cmap = path_cell_map(net)
    np.testing.assert_array_equal(cmap.global_cells["P"], np.arange(10))
    assert [cmap.locate("P", k) for k in (1, 10)] == [("1", 1), ("1", 10)]


def test_five_arc_paths_share_arc_three_exactly():
    sc = build_scenario("five_arc")
    cmap = path_cell_map(sc.network, sc.grid)
    shared = set(cmap.global_cells["P1"]) & set(cmap.global_cells["P2"])
    s = cmap.layout.slice("3")
    assert shared == set(range(s.start, s.stop))


def test_map_round_trip():
    for name in ("two_in_two_out", "five_arc", "synthetic_large"):
        sc = build_scenario(name)
        cmap = path_cell_map(sc.network, sc.grid)
        for pid in cmap.path_ids:
            for k in range(1, cmap.path_length(pid) + 1):
                arc, cell = cmap.locate(pid, k)
                assert cmap.path_cell(pid, arc, cell) == k


def test_aggregate_omega_examples():
    cmap = path_cell_map(three_arc(), GRID)
    st_ = PathDensityState.zeros(cmap)
    for w in aggregate_omega(st_).values():
        assert not w.any()
    st_.path("P1")[0] = 0.4  # arc 1, used by P1 only
    st_.path("P1")[30] = 0.3  # arc 3, shared
    st_.path("P2")[30] = 0.2
    om = aggregate_omega(st_)
    assert om["P1"][0] == 0.4
    assert om["P1"][30] == pytest.approx(0.5)
    assert om["P2"][30] == pytest.approx(0.5)


@settings(max_examples=50, deadline=None)
@given(st.floats(-3, 3), st.integers(0, 2**31))
def test_aggregate_omega_linear(alpha, seed):
    cmap = path_cell_map(three_arc(), GRID)
    mu = np.random.default_rng(seed).random(cmap.size)
    a = aggregate_omega(PathDensityState(cmap, alpha * mu))
    b = aggregate_omega(PathDensityState(cmap, mu))
    for p in a:
        np.testing.assert_allclose(a[p], alpha * b[p], rtol=1e-13, atol=1e-15)


def test_split_and_merge():
    net = three_arc()
    cmap = path_cell_map(net, GRID)
    arc = ArcDensityState.from_arrays(net, {"1": 0.2, "3": 0.6})
    mu = split_arc_state(cmap, arc)
    assert mu.path("P1")[25] == pytest.approx(0.3)
    np.testing.assert_allclose(merge_path_state(mu).rho, arc.rho)
    np.testing.assert_allclose(physical_omega(mu), arc.rho)


def test_signal_schedule():
    s = SignalSchedule(period=90.0, offset=0.0, green={"a": ((0.0, 45.0),)})
    assert s.is_green("a", 10.0) and not s.is_green("a", 50.0) and s.is_green("a", 95.0)
    assert s.is_green("b", 50.0)
    j = JunctionSpec("J", ("a", "b"), ("c",), ((1.0, 1.0),), (0.5, 0.5), s)
    np.testing.assert_array_equal(j.green_mask(50.0), [0.0, 1.0])


def test_boundary_condition_ghosts():
    assert BoundaryCondition.dirichlet(0.3).ghost(7.0) == 0.3
    tab = BoundaryCondition.sampled([0.0, 2.0], [0.0, 0.4])
    assert tab.ghost(1.0) == pytest.approx(0.2)
    assert not BoundaryCondition.closed().is_open
    assert Boundaries().arc_up("x") == BoundaryCondition.closed()


def test_grid_step_count():
    assert GRID.n_steps == 240
    assert GRID.times().size == 241
