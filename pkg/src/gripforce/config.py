"""Experiment configuration: flat ``section.key = value`` text files.

Lines starting with ``#`` are comments, values are Python literals
(numbers, ``[lo, hi]`` intervals, lists, quoted strings) or the bare words
``true``/``false``.  Every key maps onto a field of one of the module config
dataclasses; unknown keys are rejected.
"""

from __future__ import annotations

import ast
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .agent.ppo import PPOConfig
from .baseline import BaselineConfig
from .env import FRAME_SIZE, EnvConfig, GraspEnv
from .physics import ActuatorParams, ContactParams
from .randomization import RandomizationRanges
from .reward import CurriculumSchedule, RewardWeights

CONFIG_ENV_VAR = "GRIPFORCE_CONFIG"
REFERENCE_SLOPES = {"Sponge": 278.0, "Wood": 330.0}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentSettings:
    seeds: tuple[int, ...] = (0, 1, 2)
    kappa_grid: tuple[float, ...] = tuple(round(0.1 * i, 10) for i in range(11))
    trials_per_kappa: int = 200
    out_dir: str = "runs"
    model_id: str = "pi_IB"
    checkpoint: str = ""
    workers: int = 1
    stochastic: bool = False
    o_y_dot_max: float = 5e-5

    def __post_init__(self):
        if self.trials_per_kappa < 1:
            raise ConfigError("trials_per_kappa must be >= 1")
        if any(not 0.0 <= k <= 1.0 for k in self.kappa_grid):
            raise ConfigError(f"kappa_grid {self.kappa_grid} not within [0, 1]")


@dataclass(frozen=True)
class CalibrationSettings:
    dq_step: float = 3e-4
    r_o: float = 0.0125
    kappas: tuple[float, ...] = (0.0, 0.5, 1.0)
    b2_values: tuple[float, ...] = (-13.0, -9.0, -6.0)
    trajectory_steps: int = 60
    # real-robot regression slopes (N/m) echoed next to the simulated ones
    reference_sponge: float = REFERENCE_SLOPES["Sponge"]
    reference_wood: float = REFERENCE_SLOPES["Wood"]


@dataclass(frozen=True)
class ExperimentConfig:
    actuator: ActuatorParams = ActuatorParams()
    contact: ContactParams = ContactParams()
    randomization: RandomizationRanges = RandomizationRanges()
    env: EnvConfig = EnvConfig()
    reward: RewardWeights = RewardWeights()
    curriculum: CurriculumSchedule = CurriculumSchedule()
    ppo: PPOConfig = PPOConfig()
    baseline: BaselineConfig = BaselineConfig()
    experiment: ExperimentSettings = ExperimentSettings()
    calibration: CalibrationSettings = CalibrationSettings()
    curriculum_enabled: bool = field(default=True)

    def make_env(self, seed: int | None = None, training: bool = False, **env_overrides) -> GraspEnv:
        """Environment at final difficulty, or curriculum-driven when ``training``."""
        cfg = replace(self.env, **env_overrides) if env_overrides else self.env
        schedule = self.curriculum if (training and self.curriculum_enabled) else None
        return GraspEnv(cfg, self.randomization, self.reward, self.actuator, self.contact,
                        schedule=schedule, o_y_dot_max=self.experiment.o_y_dot_max,
                        seed=seed if seed is not None else self.randomization.seed)

    def obs_standardization(self) -> tuple[np.ndarray, np.ndarray]:
        """Fixed per-frame input shift/scale: joint positions to [-1, 1], the rest as is."""
        half = 0.5 * self.actuator.q_max
        shift = np.zeros(FRAME_SIZE)
        scale = np.ones(FRAME_SIZE)
        shift[:2] = half
        scale[:2] = half
        k = self.env.stack_k
        return np.tile(shift, k), np.tile(scale, k)


def _literal(text: str):
    low = text.strip().lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    try:
        return ast.literal_eval(text.strip())
    except (ValueError, SyntaxError):
        return text.strip()


def _coerce(value, like):
    if isinstance(like, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"expected true/false, got {value!r}")
        return value
    if isinstance(like, int) and not isinstance(like, bool):
        if isinstance(value, float) and value.is_integer():
            return int(value)
        if not isinstance(value, int):
            raise ConfigError(f"expected an integer, got {value!r}")
        return value
    if isinstance(like, float):
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise ConfigError(f"expected a number, got {value!r}")
        return float(value)
    if isinstance(like, tuple):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"expected a list, got {value!r}")
        return tuple(tuple(v) if isinstance(v, (list, tuple)) else v for v in value)
    if isinstance(like, str):
        return str(value)
    return value


# flat key aliases for the curriculum's (initial, final) pairs
_CURRICULUM_PAIRS = {
    "alpha2_initial": ("alpha2", 0), "alpha2_final": ("alpha2", 1),
    "o_y_dot_max_initial": ("o_y_dot_max", 0), "o_y_dot_max_final": ("o_y_dot_max", 1),
    "W_o_initial": ("W_o", 0), "W_o_final": ("W_o", 1),
    "O_y_initial": ("O_y", 0), "O_y_final": ("O_y", 1),
}


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    sections: dict[str, dict] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line or "." not in line.split("=", 1)[0]:
            raise ConfigError(f"{source}:{lineno}: expected 'section.key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        section, name = key.split(".", 1)
        sections.setdefault(section, {})[name] = (_literal(value), lineno)

    base = ExperimentConfig()
    updates = {}
    for section, entries in sections.items():
        if section == "curriculum":
            entries = dict(entries)
            enabled = entries.pop("enabled", None)
            if enabled is not None:
                updates["curriculum_enabled"] = _coerce(enabled[0], True)
            current = base.curriculum
            pairs = {}
            for name in list(entries):
                if name in _CURRICULUM_PAIRS:
                    target, idx = _CURRICULUM_PAIRS[name]
                    value, lineno = entries.pop(name)
                    pair = list(pairs.get(target, getattr(current, target)))
                    pair[idx] = tuple(value) if isinstance(value, (list, tuple)) else float(value)
                    pairs[target] = tuple(pair)
            for target, pair in pairs.items():
                entries[target] = (pair, 0)
        if section not in {f.name for f in fields(ExperimentConfig)} or section == "curriculum_enabled":
            raise ConfigError(f"{source}: unknown section '{section}'")
        current = getattr(base, section)
        known = {f.name for f in fields(current)}
        kwargs = {}
        for name, (value, lineno) in entries.items():
            if name not in known:
                raise ConfigError(f"{source}:{lineno}: unknown key '{section}.{name}'")
            try:
                kwargs[name] = _coerce(value, getattr(current, name))
            except ConfigError as exc:
                raise ConfigError(f"{source}:{lineno}: {section}.{name}: {exc}") from None
        try:
            updates[section] = replace(current, **kwargs)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"{source}: invalid [{section}] settings: {exc}") from None
    return replace(base, **updates)


def load_config(path: str | os.PathLike | None = None) -> ExperimentConfig:
    """Read ``path``, falling back to ``$GRIPFORCE_CONFIG``, else defaults."""
    if path is None:
        path = os.environ.get(CONFIG_ENV_VAR)
    if not path:
        return ExperimentConfig()
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from exc
    return parse_config(text, str(p))


def render_config(cfg: ExperimentConfig) -> str:
    """Serialize ``cfg`` back to the flat text format (parseable by ``parse_config``)."""
    lines = []
    for f in fields(ExperimentConfig):
        value = getattr(cfg, f.name)
        if f.name == "curriculum_enabled":
            lines.append(f"curriculum.enabled = {str(value).lower()}")
            continue
        for sub in fields(value):
            v = getattr(value, sub.name)
            if isinstance(v, bool):
                text = str(v).lower()
            elif isinstance(v, tuple):
                text = repr(list(list(x) if isinstance(x, tuple) else x for x in v))
            else:
                text = repr(v)
            lines.append(f"{f.name}.{sub.name} = {text}")
    return "\n".join(lines) + "\n"
