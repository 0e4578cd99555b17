import csv
import json
import subprocess
import sys

import pytest

from filterstab.cli import main

CONFIG = {
    "schema_version": 1, "name": "cli-small",
    "model": {"kind": "finite-hmm", "matrix": [[0.7, 0.3], [0.3, 0.7]],
              "emissions": [{"kind": "normal", "mean": 0.0, "std": 1.0}, {"kind": "normal", "mean": 1.0, "std": 1.0}]},
    "true_prior": {"kind": "finite", "weights": [0.5, 0.5]},
    "filter_prior": {"kind": "finite", "weights": [0.99, 0.01]},
    "functions": {"g": {"kind": "polynomial", "coefficients": [0.0, 1.0]}},
    "metrics": ["tv", "predictor"], "n_max": 10, "trials": 8, "seed": 3,
}


@pytest.fixture
def config_path(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(CONFIG))
    return path


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_mixing_output(capsys):
    assert main(["mixing", "--matrix", "0.7,0.3;0.3,0.7"]) == 0
    assert capsys.readouterr().out.strip() == "λ_*=0.3 λ^*=0.7 λ∘=0.3 rate=-0.428571"
    assert main(["mixing", "--matrix", "0,1;1,0"]) == 0
    assert "λ∘=undefined" in capsys.readouterr().out


def test_mixing_from_config(config_path, capsys):
    assert main(["mixing", "--config", str(config_path)]) == 0
    assert "λ∘=0.3" in capsys.readouterr().out


def test_solve_g_default(capsys):
    assert main(["solve-g"]) == 0
    assert capsys.readouterr().out.strip() == "g = (1.4, -0.6), residual 0"


def test_bad_matrix_is_a_usage_error(capsys):
    assert main(["mixing", "--matrix", "0.7,0.4;0.3,0.7"]) == 1
    assert main(["mixing", "--matrix", "a,b"]) == 1


def test_missing_config_names_the_path(tmp_path, capsys):
    missing = tmp_path / "nowhere.json"
    assert main(["stability", "--config", str(missing)]) == 1
    assert str(missing) in capsys.readouterr().err


def test_unknown_flag_and_subcommand(capsys):
    assert main(["stability", "--colour", "red"]) == 1
    assert main(["teleport"]) == 1
    assert main(["stability"]) == 1


def test_stability_writes_outputs(config_path, tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["stability", "--config", str(config_path), "--out", str(out), "--seed", "9"]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["status"] == "OK" and manifest["rng"]["master_seed"] == 9
    assert len(rows(out / "tv.csv")) == 11
    assert "status OK" in capsys.readouterr().out


def test_stability_rejected_pair(tmp_path):
    cfg = dict(CONFIG, filter_prior={"kind": "finite", "weights": [0.0, 1.0]})
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(cfg))
    assert main(["stability", "--config", str(path), "--out", str(tmp_path / "r")]) == 2
    assert json.loads((tmp_path / "r" / "manifest.json").read_text())["status"] == "REJECTED"


def test_simulate_and_filter(config_path, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    out = tmp_path / "sim"
    assert main(["simulate", "--config", str(config_path), "--out", str(out), "--trials", "2", "--nmax", "5"]) == 0
    sim = rows(out / "simulate.csv")
    assert len(sim) == 12 and sim[0]["y"] == "0.0"
    obs = tmp_path / "obs.csv"
    with open(obs, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["y"])
        for r in sim[:6]:
            w.writerow([r["y"]])
    assert main(["filter", "--config", str(config_path), "--out", str(out), "--observations", str(obs)]) == 0
    a, b = rows(out / "filter-true-prior.csv"), rows(out / "filter-filter-prior.csv")
    assert len(a) == len(b) > 0
    bad = tmp_path / "bad_obs.csv"
    bad.write_text("z\n1\n")
    assert main(["filter", "--config", str(config_path), "--observations", str(bad)]) == 1


def test_conditions_report(config_path, tmp_path):
    out = tmp_path / "cond"
    assert main(["conditions", "--config", str(config_path), "--out", str(out)]) == 0
    report = json.loads((out / "conditions.json").read_text())
    assert report["condition_i"] is False and report["ratio_sup"] == pytest.approx(1 / 0.01 * 0.5)


def test_reproduce_dry_run(capsys):
    assert main(["reproduce", "--dry-run"]) == 0
    out = capsys.readouterr().out
    for name in ("hmm-prop4", "hmm-prop4-negative", "sg-volatility", "linear-prop5", "mixing-rate"):
        assert f"{name}: valid" in out


def test_console_entry_point():
    done = subprocess.run([sys.executable, "-m", "filterstab.cli", "solve-g"], capture_output=True, text=True)
    assert done.returncode == 0 and "1.4" in done.stdout
