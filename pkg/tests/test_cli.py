import csv
import shutil
import subprocess

import numpy as np
import pytest

from abc_misspec import experiments as ex
from abc_misspec.cli import EXIT_CONFIG, EXIT_FAILED, EXIT_OK, EXIT_PARTIAL, main
from abc_misspec.errors import EmptyPosteriorError
from abc_misspec.models import Scenario, simulate, write_dataset_csv
from abc_misspec.rng import RngStream


@pytest.fixture
def data_file(tmp_path):
    y = simulate(Scenario(sigma2=3.0), [1.0], "true", RngStream(8))
    path = tmp_path / "y.csv"
    write_dataset_csv(path, y)
    return path


def test_console_script():
    exe = shutil.which("abc-misspec")
    assert exe is not None
    out = subprocess.run([exe, "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "pseudo-true" in out.stdout


@pytest.mark.parametrize("argv", [[], ["table9"], ["table1", "--set", "bogus=1"], ["table1", "--set", "R=0"],
                                  ["table1", "--set", "noequals"], ["table1", "--config", "/nonexistent.cfg"],
                                  ["diag-accept", "--data", "/nonexistent.csv"]])
def test_config_errors_exit_1(argv, capsys):
    assert main(argv) == EXIT_CONFIG


def test_experiment_run(tmp_path, capsys):
    cfg = tmp_path / "t.cfg"
    cfg.write_text("R = 2\nN = 2000\nsigma2_list = [1, 3]\n")
    code = main(["table1", "--config", str(cfg), "--set", "methods=AR,Reg", "--seed", "3", "--out", str(tmp_path / "o")])
    assert code == EXIT_OK
    with open(tmp_path / "o" / "seeds.csv") as fh:
        assert len(list(csv.DictReader(fh))) == 4
    assert "table1: wrote" in capsys.readouterr().out


def _flaky(monkeypatch, bad):
    real = ex.analyze

    def fn(scen, table, eta, q, methods, seed, *a, **k):
        if bad(seed):
            raise EmptyPosteriorError("synthetic failure")
        return real(scen, table, eta, q, methods, seed, *a, **k)

    monkeypatch.setattr(ex, "analyze", fn)


def test_partial_failure_exit_2(tmp_path, monkeypatch, capsys):
    target = ex.derive_seed(0, ex.PHASE_REP, 0, 5)
    _flaky(monkeypatch, lambda s: s == target)
    code = main(["table1", "--set", "R=200", "--set", "N=500", "--set", "sigma2_list=1", "--set", "methods=AR",
                 "--out", str(tmp_path)])
    assert code == EXIT_PARTIAL
    assert "1 replication(s) failed" in capsys.readouterr().err


def test_widespread_failure_exit_3(tmp_path, monkeypatch, capsys):
    _flaky(monkeypatch, lambda s: True)
    code = main(["table1", "--set", "R=2", "--set", "N=500", "--set", "sigma2_list=1", "--out", str(tmp_path)])
    assert code == EXIT_FAILED and (tmp_path / "replications.csv").exists()


def test_pseudo_true_normal(tmp_path, capsys):
    cfg = tmp_path / "n.cfg"
    cfg.write_text("kind = normal\nsigma2 = 3\n")
    assert main(["pseudo-true", "--config", str(cfg), "--restarts", "3", "--out", str(tmp_path)]) == EXIT_OK
    out = capsys.readouterr().out
    assert "theta=1.000000" in out and "eps* = 2" in out and "restart  0" in out
    assert float((tmp_path / "eps_star.txt").read_text()) == pytest.approx(2.0)
    with open(tmp_path / "trace.csv") as fh:
        assert len(list(csv.DictReader(fh))) == 3


def test_pseudo_true_gk(capsys):
    assert main(["pseudo-true", "--scenario", "gk-mixture", "--restarts", "4"]) == EXIT_OK
    line = next(l for l in capsys.readouterr().out.splitlines() if l.startswith("theta*"))
    vals = [float(t.split("=")[1]) for t in line[len("theta* = "):].split(", ")]
    assert np.allclose(vals, [1.17, 1.50, 0.41, 0.23], atol=0.02)


def test_pseudo_true_beta0(capsys):
    assert main(["pseudo-true", "--scenario", "normal", "--restarts", "2", "--beta0-N", "20000"]) == EXIT_OK
    assert "regression-adjusted pseudo-true" in capsys.readouterr().out


def test_diag_accept(tmp_path, data_file, capsys):
    out = tmp_path / "acc"
    code = main(["diag-accept", "--data", str(data_file), "--N", "5000", "--J", "20", "--benchmark", "5",
                 "--out", str(out)])
    assert code == EXIT_OK
    text = capsys.readouterr().out
    assert "nonlinearity score" in text and "benchmark scores" in text
    assert (out / "accept_curve.csv").read_text().count("\n") == 21
    assert (out / "benchmark_scores.csv").read_text().count("\n") == 6


def test_diag_accept_from_table(tmp_path, data_file, capsys):
    from abc_misspec.table import generate_table, write_table_csv
    tab = tmp_path / "table.csv"
    write_table_csv(tab, generate_table(Scenario(), 3000, 1))
    assert main(["diag-accept", "--data", str(data_file), "--table", str(tab), "--out", str(tmp_path)]) == EXIT_OK


def test_diag_reg(tmp_path, data_file, capsys):
    code = main(["diag-reg", "--data", str(data_file), "--N", "3000", "--B", "5", "--h", "identity",
                 "--out", str(tmp_path)])
    assert code == EXIT_OK
    assert "T = " in capsys.readouterr().out
    with open(tmp_path / "discrepancy_report.csv") as fh:
        row = next(csv.DictReader(fh))
    assert row["h"] == "identity" and row["B"] == "5"
    assert row["flagged"] in ("0", "1", "True", "False")
