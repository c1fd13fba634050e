"""Hand-modeled phase controller used as the comparison reference.

Per finger: APPROACH closes at ``closing_speed`` until the finger has touched;
HOLD-OFF keeps a finger that touched first still while the other one is still
travelling; FORCE-SERVO (both touched) integrates the force error on top of
the previous command.  The grip force is shared by both fingers, so the servo
starts from the mean of the previous commands and issues the same correction to
both sides, which keeps the object where it is.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum


class Phase(Enum):
    APPROACH = "approach"
    HOLD_OFF = "hold_off"
    FORCE_SERVO = "force_servo"


@dataclass(frozen=True)
class BaselineConfig:
    closing_speed: float = -1.0
    kp: float = 0.1  # normalized command per N
    f_theta: float = 0.039
    settle_band: float = 0.02

    def __post_init__(self):
        if self.kp <= 0 or self.settle_band < 0:
            raise ValueError("kp must be positive and settle_band non-negative")


def phases(h: tuple[int, int]) -> tuple[Phase, Phase]:
    if h[0] and h[1]:
        return Phase.FORCE_SERVO, Phase.FORCE_SERVO
    return tuple(Phase.HOLD_OFF if h[i] else Phase.APPROACH for i in (0, 1))


def baseline_step(f: tuple[float, float], h: tuple[int, int], a_prev: tuple[float, float],
                  f_goal: float, cfg: BaselineConfig = BaselineConfig()) -> tuple[float, float]:
    """Normalized command pair for the current contact state."""
    ph = phases(h)
    if ph[0] is Phase.FORCE_SERVO:
        base = 0.5 * (a_prev[0] + a_prev[1])
        df = 0.5 * ((f_goal - f[0]) + (f_goal - f[1]))
        u = min(max(base - cfg.kp * df, -1.0), 1.0)
        return u, u
    return tuple(0.0 if p is Phase.HOLD_OFF else cfg.closing_speed for p in ph)


class BaselinePolicy:
    """Adapter driving ``baseline_step`` from an environment's simulator state."""

    def __init__(self, cfg: BaselineConfig = BaselineConfig()):
        self.cfg = cfg

    def act(self, env) -> tuple[float, float]:
        s = env.state
        return baseline_step((s.f_l, s.f_r), env.h, env.a_prev, env.params.f_goal, self.cfg)
