"""Command line driver: bundled configurations end to end."""

import json
from importlib import resources
from pathlib import Path

import pytest
from click.testing import CliRunner

from nphgsd.cli import bundled_config, main


@pytest.fixture()
def runner():
    return CliRunner()


def write_config(tmp_path, cfg, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def bundled_path(name):
    return str(resources.files("nphgsd") / "configs" / name)


def test_validate_only_bundled(runner):
    for name, command in (("section5_design.json", "design"), ("section4_scenarios.json", "scenarios")):
        res = runner.invoke(main, [command, "--config", bundled_path(name), "--validate-only"])
        assert res.exit_code == 0, res.output
        assert "configuration valid" in res.output


def test_design_bundled(runner, tmp_path):
    res = runner.invoke(
        main, ["design", "--config", bundled_path("section5_design.json"), "--out", str(tmp_path)]
    )
    assert res.exit_code == 0, res.output
    assert "N = 643.5" in res.output
    csv_text = (tmp_path / "design.csv").read_text()
    payload = json.loads((tmp_path / "design.json").read_text())
    assert payload["n_total"] == pytest.approx(643.5)
    assert payload["power"] == pytest.approx(0.9908, abs=2e-3)
    z = [row["efficacy_z"] for row in payload["analyses"]]
    for got, want in zip(z, (6.2955, 3.3848, 2.4253, 2.0025)):
        assert got == pytest.approx(want, abs=2e-3)
    assert csv_text.splitlines()[0].startswith("analysis,")

    # rerun is byte-identical
    again = tmp_path / "again"
    res2 = runner.invoke(
        main, ["design", "--config", bundled_path("section5_design.json"), "--out", str(again)]
    )
    assert res2.exit_code == 0
    assert (again / "design.csv").read_text() == csv_text


def test_expect_grid(runner, tmp_path):
    cfg = {
        "model": {
            "enroll_rate": 53.625,
            "control_hazard": 0.046209812037329684,
            "hazard_ratio": {"breakpoints": [4.0], "values": [1.0, 0.6]},
            "dropout": 0.001,
            "enroll_duration": 12.0,
            "total_duration": 36.0,
        },
        "expect": {"times": [0.0, 12.0, 20.0, 28.0, 36.0]},
    }
    res = runner.invoke(main, ["expect", "--config", write_config(tmp_path, cfg), "--out", str(tmp_path)])
    assert res.exit_code == 0, res.output
    lines = (tmp_path / "expect.csv").read_text().splitlines()
    assert lines[0] == "time,ahr,expected_events"
    rows = [line.split(",") for line in lines[1:]]
    assert rows[0] == ["0.0000", "1.0000", "0.0000"]
    ahr = [float(r[1]) for r in rows[1:]]
    for got, want in zip(ahr, (0.8447, 0.7420, 0.7026, 0.6850)):
        assert got == pytest.approx(want, abs=5e-4)
    events = [float(r[2]) for r in rows[1:]]
    for got, want in zip(events, (138.2164, 267.5627, 359.2063, 426.3715)):
        assert got == pytest.approx(want, abs=5e-3)


def test_expect_rejects_grid_beyond_duration(runner, tmp_path):
    cfg = {
        "model": {
            "enroll_rate": 10.0,
            "control_hazard": 0.05,
            "hazard_ratio": 0.7,
            "enroll_duration": 12.0,
            "total_duration": 30.0,
        },
        "expect": {"from": 0.0, "to": 48.0, "by": 6.0},
    }
    res = runner.invoke(main, ["expect", "--config", write_config(tmp_path, cfg)])
    assert res.exit_code != 0
    assert "beyond the study duration" in res.output


def test_schema_rejects_bad_configs(runner, tmp_path):
    base = {
        "model": {
            "enroll_rate": 10.0,
            "control_hazard": 0.05,
            "hazard_ratio": 0.7,
            "enroll_duration": 12.0,
            "total_duration": 30.0,
        },
        "schedule": {"times": [30.0]},
        "tests": [{"wlr": "logrank"}],
    }
    bad_alpha = json.loads(json.dumps(base))
    bad_alpha["targets"] = {"alpha": 0.0}
    res = runner.invoke(main, ["design", "--config", write_config(tmp_path, bad_alpha, "a.json")])
    assert res.exit_code != 0
    assert "invalid configuration" in res.output

    no_tests = json.loads(json.dumps(base))
    no_tests["tests"] = []
    res = runner.invoke(main, ["design", "--config", write_config(tmp_path, no_tests, "b.json")])
    assert res.exit_code != 0
    assert "invalid configuration" in res.output


def test_scenarios_rejects_simulation_only_tests_without_simulate(runner, tmp_path):
    cfg = {
        "scenarios": {"names": ["ph"], "n": 698.0, "analysis_time": 36.0},
        "tests": [{"rmst": 24.0}],
        "simulate": False,
    }
    res = runner.invoke(main, ["scenarios", "--config", write_config(tmp_path, cfg)])
    assert res.exit_code != 0
    assert "simulation-only" in res.output


def test_simulate_deterministic(runner, tmp_path):
    cfg = {
        "scenario": "ph",
        "simulation": {"n": 200, "replicates": 300, "seed": 99, "workers": 1},
        "tests": [{"wlr": "logrank"}, {"rmst": 24.0}],
        "schedule": {"times": [36.0]},
    }
    path = write_config(tmp_path, cfg)
    res = runner.invoke(main, ["simulate", "--config", path, "--out", str(tmp_path)])
    assert res.exit_code == 0, res.output
    first = (tmp_path / "simulate.csv").read_text()
    assert first.splitlines()[0] == "test,rejections,replicates,rate,mc_se"
    res2 = runner.invoke(main, ["simulate", "--config", path, "--out", str(tmp_path)])
    assert res2.exit_code == 0
    assert (tmp_path / "simulate.csv").read_text() == first


def test_scenarios_asymptotic_small(runner, tmp_path):
    cfg = {
        "scenarios": {"names": ["ph", "weak-null"], "n": 698.0, "analysis_time": 36.0},
        "tests": [{"wlr": "logrank"}, {"maxcombo": ["logrank", {"fh": [0.0, 0.5]}]}],
        "simulate": False,
    }
    res = runner.invoke(main, ["scenarios", "--config", write_config(tmp_path, cfg), "--out", str(tmp_path)])
    assert res.exit_code == 0, res.output
    lines = (tmp_path / "scenarios.csv").read_text().splitlines()
    assert lines[0] == "scenario,test,asymptotic,simulated,mc_se"
    # not simulating leaves the simulated columns empty
    assert all(line.endswith(",,") for line in lines[1:])
    table = {(r.split(",")[0], r.split(",")[1]): float(r.split(",")[2]) for r in lines[1:]}
    assert table[("ph", "logrank")] == pytest.approx(0.8783, abs=2e-3)
    assert table[("weak-null", "logrank")] == pytest.approx(0.025, abs=1e-4)
    assert table[("weak-null", "maxcombo{logrank,fh(0,0.5)}")] == pytest.approx(0.025, abs=1e-3)


def test_docs_schema_matches_package():
    packaged = (resources.files("nphgsd") / "configs" / "schema.json").read_text()
    docs = Path(__file__).resolve().parents[1].joinpath("docs", "schema.json").read_text()
    assert docs == packaged


def test_bundled_config_loader():
    cfg = bundled_config("section5_design.json")
    assert cfg["model"]["enroll_rate"] == pytest.approx(53.625)
    with pytest.raises(Exception):
        bundled_config("missing.json")
