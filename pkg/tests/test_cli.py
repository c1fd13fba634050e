import subprocess
import sys

import pytest

from gripforce.cli import EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, main
from gripforce.evaluation import read_records


@pytest.fixture
def small_cfg(tmp_path):
    path = tmp_path / "small.cfg"
    path.write_text(
        "experiment.kappa_grid = [0.0, 1.0]\n"
        "experiment.trials_per_kappa = 2\n"
        "ppo.rollout_len = 250\n"
        "ppo.epochs = 1\n"
        "ppo.eval_window = 2\n"
    )
    return str(path)


def test_help_exits_ok(capsys):
    assert main(["--help"]) == EXIT_OK
    assert "calibrate" in capsys.readouterr().out


@pytest.mark.parametrize("argv", [[], ["fly"], ["evaluate", "--bogus"], ["rollout", "--kappa", "x"]])
def test_usage_errors(argv, capsys):
    assert main(argv) == EXIT_USAGE
    assert "usage" in capsys.readouterr().err


def test_missing_checkpoint_names_path(tmp_path, small_cfg, capsys):
    missing = tmp_path / "none.ckpt"
    code = main(["evaluate", "--config", small_cfg, "--out", str(tmp_path), "--checkpoint", str(missing)])
    assert code == EXIT_RUNTIME
    assert str(missing) in capsys.readouterr().err


def test_evaluate_without_checkpoint_is_usage_error(tmp_path, small_cfg):
    assert main(["evaluate", "--config", small_cfg, "--out", str(tmp_path)]) == EXIT_USAGE


def test_bad_config_is_runtime_error(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("env.nope = 1\n")
    assert main(["calibrate", "--config", str(bad), "--out", str(tmp_path)]) == EXIT_RUNTIME
    assert "unknown key" in capsys.readouterr().err


def test_env_var_config(tmp_path, monkeypatch, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("env.nope = 1\n")
    monkeypatch.setenv("GRIPFORCE_CONFIG", str(bad))
    assert main(["rollout", "--out", str(tmp_path)]) == EXIT_RUNTIME


def test_rollout_deterministic(tmp_path, small_cfg):
    for sub in ("a", "b"):
        assert main(["rollout", "--config", small_cfg, "--seed", "7", "--out", str(tmp_path / sub)]) == 0
    a = (tmp_path / "a" / "rollout_baseline_seed7.csv").read_bytes()
    assert a == (tmp_path / "b" / "rollout_baseline_seed7.csv").read_bytes()


def test_train_evaluate_compare(tmp_path, small_cfg, capsys):
    out = tmp_path / "run"
    assert main(["train", "--config", small_cfg, "--out", str(out), "--steps", "500"]) == 0
    assert (out / "final.ckpt").is_file() and (out / "training_curve.csv").is_file()
    assert main(["evaluate", "--config", small_cfg, "--out", str(out),
                 "--checkpoint", str(out / "final.ckpt"), "--model-id", "tiny"]) == 0
    assert main(["baseline-eval", "--config", small_cfg, "--out", str(out)]) == 0
    assert main(["baseline-eval", "--config", small_cfg, "--out", str(out), "--policy", "zero"]) == 0
    records = read_records(out / "eval_tiny.csv")
    assert len(records) == 4 and {r.model_id for r in records} == {"tiny"}
    capsys.readouterr()
    assert main(["compare", "--out", str(out), str(out / "eval_tiny.csv"),
                 str(out / "eval_baseline.csv"), str(out / "eval_zero.csv")]) == 0
    table = capsys.readouterr().out
    assert all(name in table for name in ("tiny", "baseline", "zero"))
    assert len((out / "compare.csv").read_text().splitlines()) == 4


def test_compare_missing_csv(tmp_path):
    assert main(["compare", "--out", str(tmp_path), str(tmp_path / "x.csv")]) == EXIT_RUNTIME


def test_calibrate_writes_tables(tmp_path, capsys):
    assert main(["calibrate", "--out", str(tmp_path)]) == 0
    assert "278" in capsys.readouterr().out
    assert (tmp_path / "calibration_slopes.csv").is_file()


def test_console_script_entry_point():
    res = subprocess.run([sys.executable, "-m", "gripforce.cli", "fly"], capture_output=True, text=True)
    assert res.returncode == EXIT_USAGE and "invalid choice" in res.stderr
