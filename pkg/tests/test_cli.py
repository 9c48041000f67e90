import json
import subprocess
import sys

import numpy as np
import pytest

from pearl.cli import run
from pearl.dataset import load_dataset


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv("PEARL_OUTPUT_DIR", raising=False)
    return tmp_path


@pytest.fixture
def fitted(workdir, capsys):
    assert run(["--seed", "7", "simulate", "--n", "80", "-o", "data.csv"]) == 0
    assert run(["fit", "data.csv", "--model", "cd", "--preset", "tuned", "--epochs", "150",
                "-o", "model.json", "--loss-csv", "loss.csv"]) == 0
    capsys.readouterr()
    return workdir


def test_simulate_writes_dataset(workdir):
    assert run(["simulate", "--n", "12", "--k", "3", "--theta", "0.2,0.3,0.5", "--seed", "3",
                "-o", "d.csv"]) == 0
    d = load_dataset(workdir / "d.csv")
    assert (d.N, d.k) == (12, 3)


def test_simulate_seed_reproducible(workdir):
    run(["--seed", "4", "simulate", "--n", "10", "-o", "a.csv"])
    run(["simulate", "--n", "10", "--seed", "4", "-o", "b.csv"])
    assert (workdir / "a.csv").read_text() == (workdir / "b.csv").read_text()


def test_check_garp_outputs_json(workdir, capsys):
    run(["simulate", "--n", "160", "--noise", "random-utility", "--seed", "7", "-o", "d.csv"])
    capsys.readouterr()
    assert run(["check-garp", "d.csv"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert {"consistent", "violating_cycle", "afriat_index"} <= out.keys()
    assert not out["consistent"] and 0 < out["afriat_index"] < 1


def test_fit_and_predict(fitted, capsys):
    assert (fitted / "model.json").exists()
    assert (fitted / "loss.csv").read_text().startswith("epoch,loss")
    assert run(["predict", "model.json", "--p", "1,1", "--m", "100"]) == 0
    x = json.loads(capsys.readouterr().out)
    np.testing.assert_allclose(x, [40, 60], rtol=1e-3)


def test_elasticity_csv(fitted, capsys):
    assert run(["elasticity", "model.json", "--p", "5.5,5.5", "--m", "100", "-o", "e.csv"]) == 0
    out = json.loads(capsys.readouterr().out)
    np.testing.assert_allclose(np.diag(out["elasticity"]), -1.0, atol=1e-3)
    assert (fitted / "e.csv").read_text().splitlines()[0] == "good,1,2"


def test_figure_outputs(fitted, capsys):
    assert run(["figure", "demand-curve", "--model", "model.json", "--theta", "0.4,0.6"]) == 0
    assert (fitted / "demand-curve.csv").exists() and (fitted / "demand-curve.png").exists()
    assert run(["figure", "loss-curve", "--data", "data.csv", "--no-plot", "-o", "lc"]) == 0
    assert (fitted / "lc.csv").exists() and not (fitted / "lc.png").exists()


def test_output_dir_env(fitted, monkeypatch):
    monkeypatch.setenv("PEARL_OUTPUT_DIR", str(fitted / "out"))
    assert run(["simulate", "--n", "5", "-o", "x.csv"]) == 0
    assert (fitted / "out" / "x.csv").exists()


def test_config_file_and_override(workdir):
    (workdir / "c.toml").write_text('N = 9\nseed = 2\n')
    assert run(["--config", "c.toml", "simulate", "-o", "a.csv"]) == 0
    assert load_dataset(workdir / "a.csv").N == 9
    assert run(["--config", "c.toml", "simulate", "--n", "4", "-o", "b.csv"]) == 0
    assert load_dataset(workdir / "b.csv").N == 4


def test_benchmark_table(workdir, capsys):
    assert run(["benchmark", "--n", "60", "--methods", "linear,knn", "--seed", "1",
                "-o", "bench.csv"]) == 0
    assert "linear" in capsys.readouterr().out
    assert len((workdir / "bench.csv").read_text().splitlines()) == 3


@pytest.mark.parametrize("argv", [
    ["simulate", "--bogus"],
    ["predict", "missing.json", "--p", "1,1", "--m", "1"],
    ["check-garp", "missing.csv"],
    ["simulate", "--theta", "0.5,0.7"],
])
def test_usage_errors_exit_one(workdir, argv, capsys):
    assert run(argv) == 1
    assert capsys.readouterr().err


def test_wrong_price_count_exit_one(fitted):
    assert run(["predict", "model.json", "--p", "1,1,1", "--m", "10"]) == 1


def test_unwritable_output_exit_two(workdir):
    (workdir / "blocker").write_text("")
    assert run(["simulate", "--n", "5", "-o", str(workdir / "blocker" / "d.csv")]) == 2


def test_console_entry_point(workdir):
    res = subprocess.run([sys.executable, "-m", "pearl.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "simulate" in res.stdout
