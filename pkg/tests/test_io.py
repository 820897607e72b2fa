import csv
import json

import numpy as np
import pytest

from roadnet.cli import main
from roadnet.io import (
    RunConfig,
    ScenarioError,
    apply_overrides,
    dump_scenario,
    emit_results,
    parse_scenario,
    scenario_diagnostics,
    scenario_to_dict,
)
from roadnet.scenarios import SCENARIOS, build_scenario, run_comparison
from roadnet.simulation import Scenario
from roadnet.network import ArcSpec, GridSpec, NetworkSpec


@pytest.mark.parametrize("name", SCENARIOS)
def test_round_trip(name):
    sc = build_scenario(name)
    assert parse_scenario(dump_scenario(sc)) == sc
    assert parse_scenario(json.loads(dump_scenario(sc))) == sc


def test_missing_priorities_names_junction():
    doc = scenario_to_dict(build_scenario("two_in_one_out_const"))
    del doc["junctions"][0]["q"]
    diags = scenario_diagnostics(doc)
    assert len(diags) == 1
    assert diags[0].startswith("$.junctions[0]") and "junction J" in diags[0]
    with pytest.raises(ScenarioError) as err:
        parse_scenario(doc)
    assert err.value.diagnostics == diags


def test_flat_row_major_matrix_accepted():
    doc = scenario_to_dict(build_scenario("two_in_two_out"))
    doc["junctions"][0]["A"] = [0.8, 0.9, 0.2, 0.1]
    assert parse_scenario(doc) == build_scenario("two_in_two_out")


def test_schema_and_semantic_diagnostics():
    doc = scenario_to_dict(build_scenario("two_in_two_out"))
    doc["arcs"][0]["length"] = -1
    doc["grid"].pop("dt")
    diags = scenario_diagnostics(doc)
    assert any(d.startswith("$.arcs[0].length") for d in diags)
    assert any(d.startswith("$.grid") and "dt" in d for d in diags)

    doc = scenario_to_dict(build_scenario("two_in_two_out"))
    doc["junctions"][0]["A"] = [0.8, 0.9, 0.3]
    assert any("A has 3 entries" in d for d in scenario_diagnostics(doc))
    doc["junctions"][0]["A"] = [[0.8, 0.9], [0.3, 0.1]]
    assert scenario_diagnostics(doc) == ["$.junctions[0]: junction J: preference column 1 sums to 1.1"]

    doc = scenario_to_dict(build_scenario("two_in_one_out_const"))
    doc["boundary"]["arcs"]["1"]["upstream"]["value"] = 2.0
    assert scenario_diagnostics(doc)[0].startswith("$.boundary.arcs.1.upstream")
    assert scenario_diagnostics("{not json")[0].startswith("$: malformed JSON")


def test_run_config_checks():
    assert RunConfig("x", solver="bogus", dx=-1.0, emit=("plots",)).diagnostics() == [
        "$.solver: 'bogus' is not one of ('classical', 'multipath', 'local', 'all')",
        "$.dx: override must be positive, got -1.0",
        "$.emit: 'plots' is not one of ('profiles', 'timeseries', 'report')",
    ]
    cfg = RunConfig.from_dict({"scenario": "five_arc", "emit": "report,profiles"})
    assert cfg.emit == ("report", "profiles")
    with pytest.raises(ScenarioError):
        RunConfig.from_dict({"scenario": "x", "colour": 1})


def test_regridding():
    sc = apply_overrides(build_scenario("two_in_one_out_const"), dx=0.025, dt=0.01, t_f=1.0)
    assert all(a.cell_count == 40 for a in sc.network.arcs)
    assert sc.grid == GridSpec(0.025, 0.01, 1.0)
    assert sc.diagnostics() == []
    with pytest.raises(ScenarioError):
        apply_overrides(build_scenario("two_in_one_out_const"), dx=0.3)
    with pytest.raises(ScenarioError):
        apply_overrides(build_scenario("single_road_riemann"), dx=0.05)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_emission(tmp_path):
    rep = run_comparison("two_in_one_out_const", solvers=["classical", "multipath"])
    files = emit_results(rep, RunConfig("two_in_one_out_const", out=str(tmp_path)))
    assert sorted(p.name for p in files) == [
        "profile_classical.csv",
        "profile_multipath.csv",
        "report.json",
        "timeseries_J.csv",
    ]
    ts = read_csv(tmp_path / "timeseries_J.csv")
    assert len(ts) - 1 == 241
    assert ts[0][:4] == ["t", "classical:P1:J-1", "classical:P1:J", "classical:P1:J+1"]
    prof = read_csv(tmp_path / "profile_multipath.csv")
    assert prof[0] == ["path", "cell", "x", "mu", "omega"]
    assert len(prof) - 1 == 80
    # full precision survives
    k = 1 + 25
    assert float(prof[k][4]) == rep.profiles["multipath"]["P1"]["omega"][25]
    report = json.loads((tmp_path / "report.json").read_text())
    assert set(report["outflow_integrals"]) == {"classical", "multipath"}
    assert report["outflow_integrals"]["classical"]["3"] == rep.outflow["classical"]["3"]


def test_emission_is_deterministic(tmp_path):
    for d in ("a", "b"):
        rep = run_comparison("one_in_two_out")
        emit_results(rep, tmp_path / d)
    for name in ("profile_classical.csv", "profile_multipath.csv", "profile_local.csv", "timeseries_J.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_empty_network_profiles(tmp_path):
    net = NetworkSpec(arcs=(ArcSpec("1", 1.0, 10), ArcSpec("2", 0.5, 5)))
    sc = Scenario("empty", net, GridSpec(0.1, 0.05, 0.5))
    rep = run_comparison(sc, solvers=["classical"])
    emit_results(rep, tmp_path)
    rows = read_csv(tmp_path / "profile_classical.csv")[1:]
    assert len(rows) == 15
    assert all(float(r[3]) == 0.0 and float(r[4]) == 0.0 for r in rows)
    assert len(read_csv(tmp_path / "timeseries_J.csv")) == 1 + 11


def test_unwritable_output(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    rep = run_comparison("two_in_one_out_const", solvers=["classical"])
    with pytest.raises(OSError, match="file"):
        emit_results(rep, blocker / "sub")


# -- command line ---------------------------------------------------------------


def test_cli_validate(tmp_path, capsys):
    good = tmp_path / "good.json"
    good.write_text(dump_scenario(build_scenario("two_in_two_out")))
    assert main(["validate", str(good)]) == 0
    doc = scenario_to_dict(build_scenario("two_in_two_out"))
    del doc["junctions"][0]["q"]
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(doc))
    assert main(["validate", str(bad)]) == 1
    assert "junction J" in capsys.readouterr().out
    assert main(["validate", str(tmp_path / "missing.json")]) == 2


def test_cli_run_and_compare(tmp_path, capsys):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"scenario": "two_in_one_out_const", "solver": "classical", "emit": ["report"]}))
    out = tmp_path / "o1"
    assert main(["run", str(cfg), "--out", str(out), "--tf", "1"]) == 0
    assert sorted(p.name for p in out.iterdir()) == ["report.json"]

    out = tmp_path / "o2"
    assert main(["compare", "one_in_two_out", "--out", str(out), "--emit", "timeseries"]) == 0
    head = read_csv(out / "timeseries_J.csv")[0]
    assert head[1].startswith("classical:") and any(h.startswith("multipath:") for h in head)

    scen = tmp_path / "s.json"
    scen.write_text(dump_scenario(build_scenario("two_in_one_out_const")))
    assert main(["run", "--scenario", str(scen), "--solver", "multipath", "--out", str(tmp_path / "o3")]) == 0


def test_cli_exit_codes(tmp_path, capsys):
    assert main(["run", "--scenario", "nowhere", "--out", str(tmp_path)]) == 1
    assert main(["run", "--scenario", "two_in_one_out_const", "--dt", "0.1", "--out", str(tmp_path)]) == 2
    assert "exceeds dx" in capsys.readouterr().err
    assert main(["run"]) == 1


def test_cli_bench(capsys):
    assert main(["bench", "--tf", "100"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["cells"] == 3282 and out["steps"] == 40
