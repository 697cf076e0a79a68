import hashlib
import json
import shutil
import subprocess
import sys

import numpy as np
import pytest

from pcnarx import cli
from pcnarx.cli import EXIT_FAILURE, EXIT_OK, EXIT_USAGE, main
from pcnarx.narx import SelectionError


def digest(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["simulate", "--system", "quarter_car", "--n", "40", "--seed", "7",
                 "--duration", "10", "--out", str(root / "ed")]) == EXIT_OK
    assert main(["fit", "--ed", str(root / "ed"), "--out", str(root / "fit")]) == EXIT_OK
    assert main(["simulate", "--system", "quarter_car", "--n", "10", "--seed", "8",
                 "--duration", "10", "--out", str(root / "val")]) == EXIT_OK
    return root


class TestSimulate:
    def test_outputs(self, work):
        manifest = json.loads((work / "ed" / "manifest.json").read_text())
        assert len(manifest["runs"]) == 40 and manifest["n_failed"] == 0
        assert len(list((work / "ed").glob("run_*.csv"))) == 40
        header = (work / "ed" / "run_00000.csv").read_text().splitlines()[0]
        assert header == "t,x,y"

    def test_rerun_identical_and_config_replay(self, work, tmp_path):
        cfg = json.loads((work / "ed" / "config.json").read_text())
        assert cfg["command"] == "simulate" and cfg["n"] == 40 and cfg["seed"] == 7
        cfg["out"] = str(tmp_path / "again")
        (tmp_path / "cfg.json").write_text(json.dumps(cfg))
        assert main(["simulate", "--config", str(tmp_path / "cfg.json")]) == EXIT_OK
        assert digest(tmp_path / "again" / "manifest.json") == digest(work / "ed" / "manifest.json")

    def test_flags_override_config(self, tmp_path):
        (tmp_path / "cfg.json").write_text(json.dumps({"system": "duffing", "n": 5, "duration": 1.0}))
        out = tmp_path / "o"
        assert main(["simulate", "--config", str(tmp_path / "cfg.json"), "--n", "2", "--out", str(out)]) == EXIT_OK
        echoed = json.loads((out / "config.json").read_text())
        assert echoed["n"] == 2 and echoed["system"] == "duffing"

    @pytest.mark.parametrize(
        "argv",
        [
            ["simulate", "--system", "quarter_car", "--n", "0"],
            ["simulate", "--system", "pendulum", "--n", "1"],
            ["simulate", "--n", "1"],
            ["simulate", "--system", "duffing", "--n", "1", "--dt", "-1"],
            ["bogus"],
            [],
        ],
    )
    def test_usage_errors(self, argv, tmp_path):
        assert main(argv + ["--out", str(tmp_path / "x")] if argv and argv[0] == "simulate" else argv) == EXIT_USAGE

    def test_bad_config(self, tmp_path):
        (tmp_path / "c.json").write_text(json.dumps({"system": "duffing", "bogus": 1}))
        assert main(["simulate", "--config", str(tmp_path / "c.json"), "--out", str(tmp_path)]) == EXIT_USAGE
        (tmp_path / "c.json").write_text(json.dumps({"command": "fit"}))
        assert main(["simulate", "--config", str(tmp_path / "c.json"), "--out", str(tmp_path)]) == EXIT_USAGE
        assert main(["simulate", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == EXIT_USAGE


class TestFit:
    def test_outputs(self, work):
        model = json.loads((work / "fit" / "model.json").read_text())
        assert model["info"]["system"] == "quarter_car"
        rows = (work / "fit" / "candidates.csv").read_text().splitlines()
        assert rows[0] == "candidate,n_terms,mean_error,n_failed,evaluated,sources,terms"
        assert len(rows) - 1 == model["info"]["n_candidates"]
        coefs = (work / "fit" / "coefficients.csv").read_text().splitlines()
        assert coefs[0] == "term,loo,relative_loo,degree,n_basis"
        assert [row.split(",")[0] for row in coefs[1:]] == model["terms"]

    def test_deterministic(self, work, tmp_path):
        assert main(["fit", "--ed", str(work / "ed"), "--out", str(tmp_path)]) == EXIT_OK
        assert digest(tmp_path / "model.json") == digest(work / "fit" / "model.json")

    def test_time_frozen(self, work, tmp_path):
        assert main(["fit", "--ed", str(work / "ed"), "--mode", "time-frozen", "--times", "1", "5",
                     "--p-max", "4", "--out", str(tmp_path)]) == EXIT_OK
        table = np.genfromtxt(tmp_path / "instant_loo.csv", delimiter=",", names=True)
        np.testing.assert_array_equal(table["instant"], [100, 500])
        assert (tmp_path / "time_frozen.json").exists()

    def test_missing_manifest(self, tmp_path):
        (tmp_path / "empty").mkdir()
        assert main(["fit", "--ed", str(tmp_path / "empty"), "--out", str(tmp_path / "o")]) == EXIT_USAGE

    def test_time_outside_interval(self, work, tmp_path):
        assert main(["fit", "--ed", str(work / "ed"), "--mode", "time-frozen", "--times", "99",
                     "--out", str(tmp_path)]) == EXIT_USAGE

    def test_selection_failure_exit_code(self, work, tmp_path, monkeypatch, capsys):
        def failing(*args, **kwargs):
            raise SelectionError("every candidate failed on every experiment:\n  # terms ...")

        monkeypatch.setattr(cli, "fit", failing)
        assert main(["fit", "--ed", str(work / "ed"), "--out", str(tmp_path)]) == EXIT_FAILURE
        assert "every candidate failed" in capsys.readouterr().err


class TestValidateStatsPredict:
    def test_validate(self, work, tmp_path, capsys):
        assert main(["validate", "--model", str(work / "fit" / "model.json"), "--data", str(work / "val"),
                     "--out", str(tmp_path)]) == EXIT_OK
        line = capsys.readouterr().out
        assert "mean_error=" in line and "runs_above_0.1=" in line
        summary = json.loads((tmp_path / "summary.json").read_text())
        errors = np.genfromtxt(tmp_path / "errors.csv", delimiter=",", names=True)
        assert summary["mean_error"] == pytest.approx(errors["error"].mean())
        for name in ("statistics.csv", "max_response.csv", "config.json"):
            assert (tmp_path / name).exists()

    def test_validate_empty_directory(self, work, tmp_path):
        (tmp_path / "empty").mkdir()
        assert main(["validate", "--model", str(work / "fit" / "model.json"), "--data", str(tmp_path / "empty"),
                     "--out", str(tmp_path / "o")]) == EXIT_USAGE

    def test_validate_grid_mismatch(self, work, tmp_path):
        assert main(["simulate", "--system", "quarter_car", "--n", "2", "--duration", "5",
                     "--out", str(tmp_path / "short")]) == EXIT_OK
        assert main(["validate", "--model", str(work / "fit" / "model.json"), "--data", str(tmp_path / "short"),
                     "--out", str(tmp_path / "o")]) == EXIT_USAGE

    def test_validate_missing_channel(self, work, tmp_path):
        assert main(["validate", "--model", str(work / "fit" / "model.json"), "--data", str(work / "val"),
                     "--channel", "displacement", "--out", str(tmp_path)]) == EXIT_USAGE

    def test_stats_deterministic(self, work, tmp_path):
        for name in ("a", "b"):
            assert main(["stats", "--model", str(work / "fit" / "model.json"), "--n", "200", "--seed", "1",
                         "--out", str(tmp_path / name)]) == EXIT_OK
        for f in ("max_response_samples.csv", "max_response_density.csv", "statistics.csv"):
            assert digest(tmp_path / "a" / f) == digest(tmp_path / "b" / f)
        assert main(["stats", "--model", str(work / "fit" / "model.json"), "--n", "50",
                     "--out", str(tmp_path / "c")]) == EXIT_USAGE

    def test_predict(self, work, tmp_path):
        manifest = json.loads((work / "val" / "manifest.json").read_text())
        xi = [str(v) for v in manifest["runs"][0]["xi"]]
        assert main(["predict", "--model", str(work / "fit" / "model.json"), "--xi", *xi,
                     "--out", str(tmp_path / "p")]) == EXIT_OK
        pred = np.genfromtxt(tmp_path / "p" / "prediction.csv", delimiter=",", names=True)
        ref = np.genfromtxt(work / "val" / "run_00000.csv", delimiter=",", names=True)
        np.testing.assert_allclose(pred["x"], ref["x"], rtol=1e-12)
        err = np.sum((pred["y"] - ref["y"]) ** 2) / np.sum((ref["y"] - ref["y"].mean()) ** 2)
        assert err < 0.1
        # the recorded run as excitation file: same input, seeded with the recorded first instants
        assert main(["predict", "--model", str(work / "fit" / "model.json"), "--xi", *xi,
                     "--excitation", str(work / "val" / "run_00000.csv"), "--out", str(tmp_path / "q")]) == EXIT_OK
        seeded = np.genfromtxt(tmp_path / "q" / "prediction.csv", delimiter=",", names=True)
        np.testing.assert_array_equal(seeded["y"][:4], ref["y"][:4])
        assert np.linalg.norm(seeded["y"] - pred["y"]) < 1e-2 * np.linalg.norm(ref["y"])

    def test_predict_errors(self, work, tmp_path):
        model = str(work / "fit" / "model.json")
        assert main(["predict", "--model", model, "--xi", "1", "2", "--out", str(tmp_path)]) == EXIT_USAGE
        bad = ["2000", "2000", "20", "40", "600", "0.5", "6.0"]  # amplitude outside its support
        assert main(["predict", "--model", model, "--xi", *bad, "--out", str(tmp_path)]) == EXIT_USAGE
        assert main(["predict", "--model", str(tmp_path / "none.json"), "--xi", "1",
                     "--out", str(tmp_path)]) == EXIT_USAGE


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "pcnarx", "simulate", "--system", "duffing", "--n", "0",
                          "--out", str(tmp_path)], capture_output=True, text=True)
    assert res.returncode == EXIT_USAGE
    assert "n must be a positive integer" in res.stderr
    if shutil.which("pcnarx"):
        assert subprocess.run(["pcnarx", "--help"], capture_output=True).returncode == EXIT_OK
