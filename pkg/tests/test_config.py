from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from gripforce.config import (
    CONFIG_ENV_VAR, ConfigError, ExperimentConfig, load_config, parse_config, render_config,
)

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def test_shipped_default_matches_built_in():
    assert load_config(CONFIGS / "default.cfg") == ExperimentConfig()


def test_shipped_default_lists_every_key():
    text = (CONFIGS / "default.cfg").read_text()
    keys = {line.split("=")[0].strip() for line in render_config(ExperimentConfig()).splitlines()}
    missing = [k for k in keys if f"\n{k} =" not in text]
    assert not missing


def test_desk_config():
    cfg = load_config(CONFIGS / "desk.cfg")
    assert cfg.ppo.total_steps == 300_000
    assert cfg.curriculum.s_end / cfg.ppo.total_steps == pytest.approx(1.5 / 4)


def test_render_round_trip():
    cfg = ExperimentConfig()
    cfg = replace(cfg, ppo=replace(cfg.ppo, hidden=(8, 4), learning_rate=1e-3),
                  curriculum=replace(cfg.curriculum, W_o=((0.01, 0.02), (0.015, 0.03))),
                  curriculum_enabled=False)
    assert parse_config(render_config(cfg)) == cfg


def test_default_grid():
    grid = ExperimentConfig().experiment.kappa_grid
    assert len(grid) == 11 and grid[0] == 0.0 and grid[-1] == 1.0
    assert np.allclose(np.diff(grid), 0.1)
    assert all(type(k) is float for k in grid)


def test_partial_config_and_comments():
    cfg = parse_config("""
        # comment line
        env.randomize = false   # trailing comment
        ppo.hidden = [16, 16]
        ppo.epochs = 3.0
        curriculum.alpha2_final = 0.5
        curriculum.O_y_final = [-0.01, 0.01]
    """)
    assert cfg.env.randomize is False and cfg.ppo.hidden == (16, 16) and cfg.ppo.epochs == 3
    assert cfg.curriculum.alpha2 == (0.0, 0.5)
    assert cfg.curriculum.O_y == ((0.0, 0.0), (-0.01, 0.01))
    assert cfg.actuator == ExperimentConfig().actuator


@pytest.mark.parametrize("text,match", [
    ("nonsense", "expected 'section.key = value'"),
    ("env.colour = 3", "unknown key 'env.colour'"),
    ("robot.speed = 1", "unknown section 'robot'"),
    ("env.randomize = 3", "expected true/false"),
    ("ppo.epochs = 2.5", "expected an integer"),
    ("reward.alpha1 = 'big'", "expected a number"),
    ("reward.alpha1 = 0", "invalid \\[reward\\]"),
    ("experiment.kappa_grid = [0.0, 1.5]", "kappa_grid"),
    ("experiment.trials_per_kappa = 0", "trials_per_kappa"),
])
def test_invalid_configs(text, match):
    with pytest.raises(ConfigError, match=match):
        parse_config(text)


def test_error_names_line():
    with pytest.raises(ConfigError, match="cfg:3"):
        parse_config("env.stack_k = 2\n\nenv.bogus = 1", source="cfg")


def test_env_var_fallback(tmp_path, monkeypatch):
    path = tmp_path / "c.cfg"
    path.write_text("randomization.seed = 42\n")
    monkeypatch.setenv(CONFIG_ENV_VAR, str(path))
    assert load_config().randomization.seed == 42
    monkeypatch.delenv(CONFIG_ENV_VAR)
    assert load_config() == ExperimentConfig()


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read config"):
        load_config(tmp_path / "nope.cfg")


def test_make_env_curriculum_only_when_training():
    cfg = ExperimentConfig()
    assert cfg.make_env(seed=0).schedule is None
    assert cfg.make_env(seed=0, training=True).schedule == cfg.curriculum
    off = replace(cfg, curriculum_enabled=False)
    assert off.make_env(seed=0, training=True).schedule is None
    assert cfg.make_env(seed=0, randomize=False).cfg.randomize is False


def test_obs_standardization_maps_joint_range():
    shift, scale = ExperimentConfig().obs_standardization()
    assert shift.shape == (30,)
    q = np.array([0.0, 0.045])
    assert np.allclose((q - shift[:2]) / scale[:2], [-1.0, 1.0])
    assert np.all(scale[2:10] == 1.0) and np.all(shift[2:10] == 0.0)
