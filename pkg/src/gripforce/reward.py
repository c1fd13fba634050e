"""Reward terms and the linear curriculum over environment difficulty."""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class RewardWeights:
    alpha1: float = 1.0
    alpha2: float = 1.0
    alpha3: float = 0.1

    def __post_init__(self):
        if self.alpha1 <= 0 or self.alpha2 < 0 or self.alpha3 < 0:
            raise ValueError(f"invalid reward weights {self}")


@dataclass(frozen=True)
class RewardTerms:
    r_force: float
    r_obj: float
    r_act: float


def r_force(delta_f_l: float, delta_f_r: float) -> float:
    return 1.0 - math.tanh(abs(delta_f_l) + abs(delta_f_r))


def r_obj(o_y_dot: float, o_y_dot_max: float) -> float:
    # either direction of object motion counts
    return -1.0 if abs(o_y_dot) > o_y_dot_max else 0.0


def r_act(a_prev, a_now) -> float:
    return -sum(abs(p - n) for p, n in zip(a_prev, a_now))


def total_reward(terms: RewardTerms, w: RewardWeights) -> float:
    return w.alpha1 * terms.r_force + w.alpha2 * terms.r_obj + w.alpha3 * terms.r_act


def reward_bounds(w: RewardWeights, episode_len: int = 1) -> tuple[float, float]:
    """Range of the summed reward over ``episode_len`` steps."""
    return -(w.alpha2 + 4.0 * w.alpha3) * episode_len, w.alpha1 * episode_len


@dataclass(frozen=True)
class CurriculumSchedule:
    s_end: float = 1.5e6
    alpha2: tuple[float, float] = (0.0, 1.0)
    o_y_dot_max: tuple[float, float] = (2e-4, 5e-5)
    W_o: tuple[tuple[float, float], tuple[float, float]] = ((0.020, 0.025), (0.015, 0.035))
    O_y: tuple[tuple[float, float], tuple[float, float]] = ((0.0, 0.0), (-0.040, 0.040))

    def __post_init__(self):
        if self.s_end <= 0:
            raise ValueError("s_end must be positive")


@dataclass(frozen=True)
class CurriculumValues:
    alpha2: float
    o_y_dot_max: float
    W_o: tuple[float, float]
    O_y: tuple[float, float]


def _lerp(a: float, b: float, u: float) -> float:
    return (1.0 - u) * a + u * b


def curriculum_at(step: float, sched: CurriculumSchedule) -> CurriculumValues:
    """Annealed values at ``step``; frozen at the final values from ``s_end`` on."""
    if step < 0:
        raise ValueError("step must be non-negative")
    u = min(1.0, step / sched.s_end)
    w0, w1 = sched.W_o
    o0, o1 = sched.O_y
    return CurriculumValues(
        alpha2=_lerp(*sched.alpha2, u),
        o_y_dot_max=_lerp(*sched.o_y_dot_max, u),
        W_o=(_lerp(w0[0], w1[0], u), _lerp(w0[1], w1[1], u)),
        O_y=(_lerp(o0[0], o1[0], u), _lerp(o0[1], o1[1], u)),
    )
