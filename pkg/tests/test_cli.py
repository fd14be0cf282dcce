import csv

import numpy as np
import pytest

from oxyro import instance as inst_mod
from oxyro.cli import main
from oxyro.distmodel import solve_deterministic
from oxyro.gpforecast import synthetic_series
from oxyro.robust import INFEASIBLE_SENTINEL, budget_grid
from oxyro.scheduler import save_graph, synthetic_graph

from factories import small_instance


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _series(path, values):
    path.write_text("time,value\n" + "".join(f"{k},{v}\n" for k, v in enumerate(values)))
    return path


@pytest.fixture
def small_file(tmp_path):
    p = tmp_path / "inst.json"
    inst_mod.save(small_instance(np.random.default_rng(3), periods=6, eta=0.1), p)
    return p


def test_forecast_synthetic_series(tmp_path, capsys):
    s = _series(tmp_path / "s.csv", synthetic_series(150, 1))
    assert main(["forecast", str(s), "--restarts", "3", "--out", str(tmp_path / "o")]) == 0
    summary = {r["key"]: float(r["value"]) for r in _rows(tmp_path / "o" / "forecast_summary.csv")}
    assert summary["mape"] <= 2.5
    assert summary["deviation"] > 0
    assert (tmp_path / "o" / "forecast.png").exists()
    assert "MAPE" in capsys.readouterr().out


def test_forecast_constant_series_has_zero_mape(tmp_path):
    s = _series(tmp_path / "c.csv", [500.0] * 40)
    assert main(["forecast", str(s), "--restarts", "2", "--no-plots", "--out", str(tmp_path / "o")]) == 0
    summary = {r["key"]: float(r["value"]) for r in _rows(tmp_path / "o" / "forecast_summary.csv")}
    assert summary["mape"] == pytest.approx(0.0, abs=1e-9)
    assert not (tmp_path / "o" / "forecast.png").exists()


def test_forecast_missing_file(tmp_path, capsys):
    assert main(["forecast", str(tmp_path / "none.csv")]) == 2
    assert "none.csv" in capsys.readouterr().err


def test_bad_flag_value_is_config_error(tmp_path):
    assert main(["distribute", "--budget-a", "0.8", "--out", str(tmp_path)]) == 3
    assert main(["simulate", "--rounds", "abc"]) == 3


def test_schedule_two_capacities(tmp_path):
    g = tmp_path / "g.json"
    save_graph(synthetic_graph(2, jobs=4), g)
    out = tmp_path / "o"
    assert main(["schedule", "--graph", str(g), "--capacity", "5", "4", "--no-plots", "--out", str(out),
                 "--total", "DP=3200", "--total", "DC=6400"]) == 0
    summary = {int(r["capacity"]): float(r["objective"]) for r in _rows(out / "schedule_summary.csv")}
    assert summary[4] >= summary[5]
    demand = _rows(out / "demand_WL4.csv")
    assert len(demand) == 32
    assert sum(float(r["DP_nominal"]) for r in demand) == pytest.approx(3200.0)
    assert (out / "gantt_WL5.csv").exists()


def test_schedule_single_capacity_and_short_horizon(tmp_path):
    out = tmp_path / "o"
    assert main(["schedule", "--jobs", "3", "--capacity", "4", "--out", str(out)]) == 0
    assert (out / "gantt_WL4.png").exists() and not (out / "gantt_WL5.csv").exists()
    assert main(["schedule", "--jobs", "3", "--capacity", "4", "--horizon", "5", "--out", str(out)]) == 3


def test_schedule_malformed_graph(tmp_path):
    g = tmp_path / "g.json"
    g.write_text("{")
    assert main(["schedule", "--graph", str(g), "--out", str(tmp_path / "o")]) == 2


def test_distribute_grid_and_ramp(tmp_path, small_file):
    out = tmp_path / "o"
    code = main(["distribute", "--instance", str(small_file), "--grid", "--ramp-sweep", "--out", str(out)])
    assert code in (0, 1)
    grid = _rows(out / "budget_grid.csv")
    assert len(grid) == 121
    for r in grid:
        assert (float(r["objective"]) == INFEASIBLE_SENTINEL) == (r["feasible"] == "0")
    ramp = _rows(out / "ramp_sweep.csv")
    assert [float(r["ramp"]) for r in ramp] == list(range(0, 501, 50))
    for name in ("levels.png", "budget_grid.png", "ramp_sweep.png", "do_solution.csv"):
        assert (out / name).exists()


def test_zero_cap_cell_equals_deterministic(small_file):
    inst = inst_mod.load(small_file)
    grid = budget_grid(inst, [0.1], [0.0])
    assert grid.objective[0, 0] == pytest.approx(solve_deterministic(inst).objective, rel=1e-9)


def test_distribute_infeasible_robust_exit_code(tmp_path):
    out = tmp_path / "o"
    assert main(["distribute", "--synth-level", "high", "--eta", "0.08", "--no-plots", "--out", str(out)]) == 1
    rows = {r["method"]: r for r in _rows(out / "distribute_summary.csv")}
    assert float(rows["TSRO"]["objective"]) == INFEASIBLE_SENTINEL
    assert rows["DO"]["status"] == "optimal"


def test_simulate_deterministic_bytes(tmp_path, small_file):
    outs = []
    for k in range(2):
        out = tmp_path / f"o{k}"
        assert main(["simulate", "--instance", str(small_file), "--rounds", "5", "--levels", "0.4", "0.6",
                     "--seed", "7", "--no-plots", "--out", str(out)]) == 0
        outs.append((out / "simulation.csv").read_bytes())
    assert outs[0] == outs[1]
    assert len(outs[0].decode().strip().splitlines()) == 1 + 2 * 2


def test_config_file_mirrors_flags(tmp_path, small_file):
    cfg = tmp_path / "cfg.json"
    cfg.write_text('{"instance": "%s", "rounds": 2, "levels": [0.5], "no_plots": true}' % small_file)
    out = tmp_path / "o"
    assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == 0
    rows = _rows(out / "simulation.csv")
    assert {r["rounds"] for r in rows} == {"2"}
    # flags override the file
    assert main(["simulate", "--config", str(cfg), "--rounds", "1", "--out", str(out)]) == 0
    assert {r["rounds"] for r in _rows(out / "simulation.csv")} == {"1"}


def test_config_unknown_key(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text('{"colour": 1}')
    assert main(["simulate", "--config", str(cfg)]) == 3
