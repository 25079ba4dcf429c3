"""End-to-end tests for the command-line interface.

Everything goes through cli.main(argv) so exit codes, stderr messages, and
artifact layouts are exercised exactly as a shell user would see them.
"""

from __future__ import annotations

import json
from dataclasses import replace

import pytest

from uavtraj.artifacts import load_results_csv
from uavtraj.cli import main
from uavtraj.planners import static_baseline, travel_free_upper_bound
from uavtraj.scenario import render_scenario

from conftest import FIXED_WING_ENERGY, two_user_scenario

ARTIFACT_SET = ["manifest.json", "powers.csv", "rates.csv", "report.json",
                "schedule.csv", "trajectory_uav1.csv"]
TIMING_KEYS = ("wall_time_s", "iteration_times_s")


def write_scenario(path, s):
    path.write_text(render_scenario(s), encoding="utf-8")
    return str(path)


def read_report(out_dir, drop_timing: bool = False) -> dict:
    with open(out_dir / "report.json", "r", encoding="utf-8") as fh:
        report = json.load(fh)
    if drop_timing:
        for key in TIMING_KEYS:
            report.pop(key, None)
    return report


def tiny_energy_scenario(budget: float = 13000.0):
    return two_user_scenario(period=120.0, slot_count=12, v_min=5.0,
                             a_max=5.0, energy_budget=budget,
                             energy=FIXED_WING_ENERGY)


@pytest.fixture(scope="module")
def p1_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("scen") / "p1_tiny.yaml"
    return write_scenario(path, two_user_scenario(slot_count=8))


@pytest.fixture(scope="module")
def solve_out(tmp_path_factory, p1_path):
    out = tmp_path_factory.mktemp("solve")
    rc = main(["solve", "--scenario", p1_path, "--problem", "delay",
               "--out", str(out)])
    return rc, out


@pytest.fixture(scope="module")
def warm_sweep(tmp_path_factory, p1_path):
    out = tmp_path_factory.mktemp("sweep_warm")
    rc = main(["sweep", "--scenario", p1_path, "--problem", "delay",
               "--param", "period_s", "--values", "40,60",
               "--out", str(out)])
    return rc, out


@pytest.fixture(scope="module")
def cold_sweep(tmp_path_factory, p1_path):
    out = tmp_path_factory.mktemp("sweep_cold")
    rc = main(["sweep", "--scenario", p1_path, "--problem", "delay",
               "--param", "period_s", "--values", "40,60",
               "--out", str(out), "--cold-start"])
    return rc, out


# --------------------------------------------------------------------------
# validate

def test_validate_ok(p1_path, capsys):
    assert main(["validate", "--scenario", p1_path]) == 0
    out = capsys.readouterr().out
    assert "OK" in out
    assert "2 users, 1 UAVs" in out
    assert "N=8" in out


def test_validate_missing_file(tmp_path, capsys):
    missing = str(tmp_path / "nope.yaml")
    assert main(["validate", "--scenario", missing]) == 2
    err = capsys.readouterr().err
    assert "nope.yaml" in err
    assert err.startswith("error:")


def test_validate_rejects_bad_config(tmp_path, capsys):
    path = tmp_path / "broken.yaml"
    path.write_text("users: [\n", encoding="utf-8")
    assert main(["validate", "--scenario", str(path)]) == 2
    assert "error:" in capsys.readouterr().err


# --------------------------------------------------------------------------
# solve

def test_solve_writes_full_artifact_set(solve_out):
    rc, out = solve_out
    assert rc == 0
    assert sorted(p.name for p in out.iterdir()) == ARTIFACT_SET


def test_solve_report_contents(solve_out, p1_path):
    _, out = solve_out
    report = read_report(out)
    assert report["status"] == "converged"
    assert report["iterations"] >= 1
    assert report["warm_started"] is False
    s = two_user_scenario(slot_count=8)
    r = report["common_throughput_bpshz"]
    assert static_baseline(s) - 1e-6 <= r <= travel_free_upper_bound(s) + 1e-6
    trace = report["objective_trace"]
    assert all(b >= a - 1e-6 for a, b in zip(trace, trace[1:]))


def test_solve_missing_scenario(tmp_path, capsys):
    rc = main(["solve", "--scenario", str(tmp_path / "gone.yaml"),
               "--problem", "delay", "--out", str(tmp_path / "out")])
    assert rc == 2
    assert "gone.yaml" in capsys.readouterr().err


def test_solve_problem_mismatch_iuic(p1_path, tmp_path, capsys):
    rc = main(["solve", "--scenario", p1_path, "--problem", "iuic",
               "--out", str(tmp_path / "out")])
    assert rc == 2
    assert "at least two UAVs" in capsys.readouterr().err


def test_solve_energy_needs_budget(tmp_path, capsys):
    s = two_user_scenario(slot_count=12, v_min=5.0,
                          energy=FIXED_WING_ENERGY)
    path = write_scenario(tmp_path / "nobudget.yaml", s)
    rc = main(["solve", "--scenario", path, "--problem", "energy",
               "--out", str(tmp_path / "out")])
    assert rc == 2
    assert "energy_budget_j" in capsys.readouterr().err


def test_solve_infeasible_budget_exit3(tmp_path, capsys):
    path = write_scenario(tmp_path / "lean.yaml",
                          tiny_energy_scenario(budget=11000.0))
    out = tmp_path / "out"
    rc = main(["solve", "--scenario", path, "--problem", "energy",
               "--out", str(out)])
    assert rc == 3
    assert "11000" in capsys.readouterr().err
    report = read_report(out)
    assert report["status"] == "failed"
    assert "budget" in report["error"]
    assert (out / "manifest.json").exists()


def test_solve_reruns_are_identical(solve_out, p1_path, tmp_path):
    _, first = solve_out
    again = tmp_path / "again"
    assert main(["solve", "--scenario", p1_path, "--problem", "delay",
                 "--out", str(again)]) == 0
    for name in ARTIFACT_SET:
        if name == "report.json":
            continue
        assert (again / name).read_bytes() == (first / name).read_bytes()
    assert read_report(again, drop_timing=True) \
        == read_report(first, drop_timing=True)


# --------------------------------------------------------------------------
# sweep

def test_sweep_period_csv_shape(warm_sweep):
    rc, out = warm_sweep
    assert rc == 0
    rows = load_results_csv(out / "sweep.csv")
    assert len(rows) == 2
    assert list(rows[0]) == ["period_s", "r_com_bpshz", "r_gu1_bpshz",
                             "r_gu2_bpshz", "energy_used_j", "iterations",
                             "wall_time_s", "status", "warm_started", "error"]
    assert [r["period_s"] for r in rows] == [40, 60]
    assert all(r["status"] == "converged" for r in rows)
    assert rows[1]["r_com_bpshz"] >= rows[0]["r_com_bpshz"] - 1e-6


def test_sweep_warm_chain_lineage(warm_sweep):
    _, out = warm_sweep
    rows = load_results_csv(out / "sweep.csv")
    assert rows[0]["warm_started"] is False
    assert rows[1]["warm_started"] is True
    with open(out / "point_01_period_s_60" / "manifest.json",
              encoding="utf-8") as fh:
        manifest = json.load(fh)
    assert manifest["warm_start_source"] == "point_00_period_s_40"


def test_sweep_manifest_and_point_dirs(warm_sweep):
    _, out = warm_sweep
    with open(out / "manifest.json", encoding="utf-8") as fh:
        manifest = json.load(fh)
    assert manifest["sweep_param"] == "period_s"
    assert manifest["values"] == [40.0, 60.0]
    assert manifest["problem"] == "delay"
    assert manifest["cold_start"] is False
    for label in ("point_00_period_s_40", "point_01_period_s_60"):
        assert sorted(p.name for p in (out / label).iterdir()) == ARTIFACT_SET


def test_sweep_cold_start_flag(cold_sweep):
    rc, out = cold_sweep
    assert rc == 0
    rows = load_results_csv(out / "sweep.csv")
    assert [r["warm_started"] for r in rows] == [False, False]


def test_sweep_workers_match_serial_cold(tmp_path, p1_path, cold_sweep):
    _, cold_out = cold_sweep
    out = tmp_path / "par"
    rc = main(["sweep", "--scenario", p1_path, "--problem", "delay",
               "--param", "period_s", "--values", "40,60",
               "--out", str(out), "--workers", "2"])
    assert rc == 0
    par = load_results_csv(out / "sweep.csv")
    serial = load_results_csv(cold_out / "sweep.csv")
    for a, b in zip(par, serial):
        a.pop("wall_time_s"), b.pop("wall_time_s")
        assert a == b
    with open(out / "manifest.json", encoding="utf-8") as fh:
        assert json.load(fh)["cold_start"] is True


def test_sweep_single_value_matches_solve(tmp_path, p1_path, solve_out):
    _, solved = solve_out
    out = tmp_path / "one"
    rc = main(["sweep", "--scenario", p1_path, "--problem", "delay",
               "--param", "period_s", "--values", "100",
               "--out", str(out)])
    assert rc == 0
    point = out / "point_00_period_s_100"
    for name in ARTIFACT_SET:
        if name == "report.json":
            continue
        assert (point / name).read_bytes() == (solved / name).read_bytes()
    assert read_report(point, drop_timing=True) \
        == read_report(solved, drop_timing=True)


def test_sweep_partial_failure_exit4(tmp_path):
    path = write_scenario(tmp_path / "p3.yaml", tiny_energy_scenario())
    out = tmp_path / "sweep"
    rc = main(["sweep", "--scenario", path, "--problem", "energy",
               "--param", "energy_budget_j", "--values", "11000,13000",
               "--out", str(out)])
    assert rc == 4
    rows = load_results_csv(out / "sweep.csv")
    assert rows[0]["status"] == "failed"
    assert "budget" in rows[0]["error"]
    assert rows[0]["r_com_bpshz"] == ""
    assert rows[1]["status"] == "converged"
    assert rows[1]["error"] == ""
    # the failed predecessor leaves nothing to warm-start from
    assert rows[1]["warm_started"] is False
    assert rows[1]["energy_used_j"] <= 13000.0 + 1e-3
    fail_report = read_report(out / "point_00_energy_budget_j_11000")
    assert fail_report["status"] == "failed"
    full = out / "point_01_energy_budget_j_13000"
    assert sorted(p.name for p in full.iterdir()) == ARTIFACT_SET


def test_sweep_rejects_unsorted_values(p1_path, tmp_path, capsys):
    rc = main(["sweep", "--scenario", p1_path, "--problem", "delay",
               "--param", "period_s", "--values", "60,40",
               "--out", str(tmp_path / "out")])
    assert rc == 2
    assert "strictly increasing" in capsys.readouterr().err


def test_sweep_rejects_non_numeric_values(p1_path, tmp_path, capsys):
    rc = main(["sweep", "--scenario", p1_path, "--problem", "delay",
               "--param", "period_s", "--values", "a,b",
               "--out", str(tmp_path / "out")])
    assert rc == 2
    assert "--values must be numbers" in capsys.readouterr().err


def test_sweep_power_control_needs_iuic(p1_path, tmp_path, capsys):
    rc = main(["sweep", "--scenario", p1_path, "--problem", "delay",
               "--param", "power_control", "--values", "off,on",
               "--out", str(tmp_path / "out")])
    assert rc == 2
    assert "power_control sweeps require --problem iuic" \
        in capsys.readouterr().err


# --------------------------------------------------------------------------
# energy-curve

def test_energy_curve_fixed_wing_stdout(capsys):
    rc = main(["energy-curve", "--model", "fixed-wing", "--out", "-",
               "--speed-min", "5", "--speed-max", "50", "--speed-step", "5"])
    assert rc == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "speed_mps,power_w"
    assert len(lines) == 11
    table = {float(l.split(",")[0]): float(l.split(",")[1])
             for l in lines[1:]}
    assert table[30.0] == pytest.approx(100.002, abs=1e-6)
    assert table[5.0] == pytest.approx(450.11575, abs=1e-4)
    assert table[50.0] == pytest.approx(160.75, abs=1e-2)


def test_energy_curve_rotary_file(tmp_path):
    out = tmp_path / "rotary.csv"
    rc = main(["energy-curve", "--model", "rotary-wing", "--out", str(out),
               "--speed-min", "0", "--speed-max", "10", "--speed-step", "5"])
    assert rc == 0
    lines = out.read_text(encoding="utf-8").strip().splitlines()
    assert lines[0] == "speed_mps,power_w"
    hover = float(lines[1].split(",")[1])
    assert hover == pytest.approx(79.8563 + 88.6279, rel=1e-9)


def test_energy_curve_fixed_wing_rejects_zero_speed(capsys):
    rc = main(["energy-curve", "--model", "fixed-wing", "--out", "-",
               "--speed-min", "0", "--speed-max", "10", "--speed-step", "5"])
    assert rc == 2
    assert "<= 0" in capsys.readouterr().err


def test_energy_curve_rejects_bad_step(capsys):
    rc = main(["energy-curve", "--model", "fixed-wing", "--out", "-",
               "--speed-step", "0"])
    assert rc == 2
    assert "--speed-step must be positive" in capsys.readouterr().err


# --------------------------------------------------------------------------
# oracle

def oracle_scenario():
    # four 40 s slots; 2 km hops fit inside the 50 m/s budget, so the
    # exhaustive search can park on both user zeniths
    return two_user_scenario(period=160.0, slot_count=4)


def test_oracle_cli_reaches_travel_free_bound(tmp_path, capsys):
    s = oracle_scenario()
    path = write_scenario(tmp_path / "dwell.yaml", s)
    out = tmp_path / "oracle"
    rc = main(["oracle", "--scenario", path, "--out", str(out),
               "--step", "250", "--segment"])
    assert rc == 0
    assert "oracle R_com = 6.64392832" in capsys.readouterr().out
    report = read_report(out)
    assert report["status"] == "oracle"
    assert report["common_throughput_bpshz"] \
        == pytest.approx(travel_free_upper_bound(s), rel=1e-9)
    with open(out / "oracle_meta.json", encoding="utf-8") as fh:
        meta = json.load(fh)
    assert meta["candidates_evaluated"] > 0
    assert meta["epsilon_grid"] > 0
    assert meta["step_m"] == 250.0
    assert meta["restrict_to_segment"] is True
    assert meta["wall_time_s"] >= 0


def test_oracle_cli_deterministic(tmp_path):
    path = write_scenario(tmp_path / "dwell.yaml", oracle_scenario())
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert main(["oracle", "--scenario", path, "--out", str(out),
                     "--step", "250", "--segment"]) == 0
        outs.append(out)
    for name in ARTIFACT_SET:
        if name == "report.json":
            continue
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
    metas = []
    for out in outs:
        with open(out / "oracle_meta.json", encoding="utf-8") as fh:
            meta = json.load(fh)
        meta.pop("wall_time_s")
        metas.append(meta)
    assert metas[0] == metas[1]


def test_oracle_cli_rejects_multi_uav(tmp_path, capsys):
    s = two_user_scenario(slot_count=4)
    second = replace(s.uavs[0], id="uav2")
    s = replace(s, uavs=(s.uavs[0], second))
    path = write_scenario(tmp_path / "m2.yaml", s)
    rc = main(["oracle", "--scenario", path, "--out", str(tmp_path / "out"),
               "--step", "100"])
    assert rc == 2
    assert "single-UAV" in capsys.readouterr().err


def test_oracle_cli_rejects_bad_bounds(tmp_path, capsys):
    path = write_scenario(tmp_path / "dwell.yaml", oracle_scenario())
    rc = main(["oracle", "--scenario", path, "--out", str(tmp_path / "out"),
               "--step", "250", "--bounds", "abc"])
    assert rc == 2
    assert "--bounds must look like" in capsys.readouterr().err
