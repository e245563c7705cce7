import json

import numpy as np
import pytest

from hypyr import __version__
from hypyr.cli import EXIT_CONFIG, EXIT_DATA, grid_level_for, main


def _simulate(tmp_path, name, n, seed=7, extra=()):
    out = tmp_path / f"{name}_{n}_{seed}.csv"
    assert main(["simulate", name, str(n), "--seed", str(seed), "--out", str(out), *extra]) == 0
    return out


def test_simulate_is_reproducible(tmp_path):
    a = _simulate(tmp_path, "mixture4", 2000)
    b = tmp_path / "again.csv"
    assert main(["simulate", "mixture4", "2000", "--seed", "7", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    meta = json.loads((tmp_path / "mixture4_2000_7.csv.meta.json").read_text())
    assert meta["version"] == __version__ and meta["config"]["seed"] == 7


def test_simulate_copula_columns(tmp_path):
    x = np.loadtxt(_simulate(tmp_path, "frank_clayton", 2000), delimiter=",", skiprows=1)
    assert x.shape == (2000, 2) and x.min() >= 0 and x.max() <= 1


def test_simulate_unknown_scenario(capsys):
    assert main(["simulate", "mixture5", "10"]) == EXIT_CONFIG
    err = capsys.readouterr().err
    assert "mixture4" in err and "frank_clayton" in err


def test_estimate_uniform(tmp_path):
    data = _simulate(tmp_path, "uniform2d", 1000, seed=1)
    out = tmp_path / "est"
    assert main(["estimate", str(data), "--framework", "density", "--out", str(out)]) == 0
    report = json.loads((tmp_path / "est.json").read_text())
    grid = np.loadtxt(tmp_path / "est_grid.csv", delimiter=",", skiprows=1)
    assert grid.shape == (4 ** report["grid_level"], 3)
    assert np.all((grid[:, 2] >= 0) & (grid[:, 2] <= 3))
    beta0 = report["result"]["coefficients"][0][2]
    assert abs(grid[:, 2].mean() - beta0) < 1e-10
    assert report["config"]["framework"] == "density" and report["version"] == __version__


def test_estimate_thread_count_is_invisible(tmp_path):
    data = _simulate(tmp_path, "mixture4", 9000, seed=3)
    outs = []
    for threads in ("1", "8"):
        out = tmp_path / f"t{threads}"
        assert main(["estimate", str(data), "--framework", "density", "--threads", threads, "--out", str(out)]) == 0
        outs.append((tmp_path / f"t{threads}.json").read_bytes().replace(f"t{threads}".encode(), b"T"))
    assert outs[0] == outs[1]


def test_threads_env_fallback(tmp_path, monkeypatch):
    data = _simulate(tmp_path, "uniform2d", 500)
    monkeypatch.setenv("HYPYR_THREADS", "4")
    assert main(["estimate", str(data), "--framework", "density", "--out", str(tmp_path / "e")]) == 0
    monkeypatch.setenv("HYPYR_THREADS", "four")
    assert main(["estimate", str(data), "--framework", "density", "--out", str(tmp_path / "e")]) == EXIT_CONFIG


def test_rerun_from_echoed_config(tmp_path):
    data = _simulate(tmp_path, "frank_clayton", 1500)
    out = tmp_path / "cop"
    assert main(["estimate", str(data), "--framework", "copula", "--c1", "2", "--out", str(out)]) == 0
    first = (tmp_path / "cop.json").read_bytes()
    assert main(["estimate", "--config", str(tmp_path / "cop.json")]) == 0
    assert (tmp_path / "cop.json").read_bytes() == first


def test_copula_dimension_mismatch(tmp_path):
    path = tmp_path / "c3.csv"
    np.savetxt(path, np.random.default_rng(0).uniform(size=(30, 3)), delimiter=",")
    assert main(["estimate", str(path), "--framework", "copula", "--dim", "2"]) == EXIT_CONFIG


def test_copula_rejects_domain(tmp_path):
    data = _simulate(tmp_path, "frank_clayton", 100)
    assert main(["estimate", str(data), "--framework", "copula", "--domain", "0,2,0,2"]) == EXIT_CONFIG


def test_malformed_csv_reports_line(tmp_path, capsys):
    path = tmp_path / "bad.csv"
    path.write_text("x,y\n0.1,0.2\n0.3,oops\n")
    assert main(["estimate", str(path), "--framework", "density"]) == EXIT_DATA
    assert ":3:" in capsys.readouterr().err


def test_domain_errors(tmp_path):
    data = _simulate(tmp_path, "uniform2d", 100)
    assert main(["estimate", str(data), "--framework", "density", "--domain", "0,1,0"]) == EXIT_CONFIG
    assert main(["estimate", str(data), "--framework", "density", "--domain", "0,1,0,1,0,1"]) == EXIT_CONFIG
    assert main(["estimate", str(data), "--framework", "density", "--domain", "1,0,0,1"]) == EXIT_CONFIG


def test_small_poisson_needs_explicit_level(tmp_path):
    data = _simulate(tmp_path, "poisson_blocks", 300)
    assert main(["estimate", str(data), "--framework", "poisson"]) == EXIT_CONFIG
    assert main(["estimate", str(data), "--framework", "poisson", "--L", "4", "--out", str(tmp_path / "p")]) == 0


def test_levy_discrete_path_input(tmp_path):
    path = _simulate(tmp_path, "levy_cpp_discrete", 4000, extra=["--path"])
    args = ["estimate", str(path), "--framework", "levy-discrete", "--domain", "0.5,2,0.5,2",
            "--delta", "0.01", "--path", "--L", "3", "--out", str(tmp_path / "ld")]
    assert main(args) == 0
    report = json.loads((tmp_path / "ld.json").read_text())
    assert report["n_bar"] == pytest.approx(40.0)


def test_levy_continuous_requires_horizon(tmp_path):
    data = _simulate(tmp_path, "levy_cpp", 100)
    assert main(["estimate", str(data), "--framework", "levy-continuous", "--domain", "0.5,2,0.5,2"]) == EXIT_DATA


def test_risk_curve_output(tmp_path):
    out = tmp_path / "curve.csv"
    assert main(["risk-curve", "uniform2d", "--n", "500,2000", "--replications", "4", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "n,mean_risk,std_error" and len(lines) == 3
    meta = json.loads((tmp_path / "curve.csv.meta.json").read_text())
    assert len(meta["reports"]) == 2


def test_inspect_models(capsys):
    assert main(["inspect-models", "--dim", "2", "--L", "9"]) == 0
    rows = json.loads(capsys.readouterr().out)["rows"]
    row = next(r for r in rows if r["ell1"] == 8)
    assert row["budgets"] == {"8": 22, "9": 4}
    assert all(r["dimension_lower_ok"] and r["dimension_upper_ok"] and r["log_count_ok"] for r in rows)
    assert main(["inspect-models", "--dim", "2", "--L", "0"]) == 0
    assert len(json.loads(capsys.readouterr().out)["rows"]) == 1
    assert main(["inspect-models", "--dim", "2"]) == EXIT_CONFIG


def test_selftest(capsys):
    assert main(["selftest"]) == 0
    assert capsys.readouterr().out.count("PASS") == 4


def test_grid_level_rule():
    assert grid_level_for(3, 2) == 6
    assert grid_level_for(7, 2) == 7
    assert grid_level_for(12, 2) == 8
    assert grid_level_for(12, 3) == 6
    assert grid_level_for(5, 2, requested=3) == 3
