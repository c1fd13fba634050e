"""Grasp force control MDP: reset/step lifecycle with noisy stacked observations."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, replace

import numpy as np

from .physics import ActuatorParams, ContactParams, WorldState, initial_state, physics_step
from .randomization import (
    NOMINAL_B2, NOMINAL_KAPPA, EpisodeParams, RandomizationRanges, sample_episode,
)
from .reward import (
    CurriculumSchedule, RewardTerms, RewardWeights, curriculum_at, r_act, r_force, r_obj,
    total_reward,
)

FRAME_FIELDS = ("q_l", "q_r", "f_l", "f_r", "df_l", "df_r", "a_l", "a_r", "h_l", "h_r")
FRAME_SIZE = len(FRAME_FIELDS)


class EpisodeFinished(RuntimeError):
    """step() was called on an episode that already ended."""


@dataclass(frozen=True)
class EnvConfig:
    episode_len: int = 150
    stack_k: int = 3
    sigma_q: float = 2.7e-5
    sigma_f: float = 0.013
    f_theta: float = 0.039
    inductive_bias_enabled: bool = True
    randomize: bool = True
    d_p_frac: float = 0.3
    stiff_is_one: bool = True

    def __post_init__(self):
        if self.episode_len < 1 or self.stack_k < 1:
            raise ValueError("episode_len and stack_k must be >= 1")
        if self.sigma_q < 0 or self.sigma_f < 0 or self.f_theta <= 0:
            raise ValueError("noise levels must be >= 0 and f_theta > 0")

    @property
    def obs_dim(self) -> int:
        return FRAME_SIZE * self.stack_k


def update_contact_flags(f_l: float, f_r: float, h_prev: tuple[int, int],
                         f_theta: float) -> tuple[int, int]:
    """Sticky per-finger contact flags: set once the force exceeds ``f_theta``."""
    return int(f_l > f_theta or h_prev[0] == 1), int(f_r > f_theta or h_prev[1] == 1)


def inductive_bias(delta_f: tuple[float, float], f_goal: float,
                   h: tuple[int, int]) -> tuple[float, float]:
    """Per-finger action scale from the contact state.

    A finger that touched first while the other has not is slowed to 10 %; with
    both fingers in contact the scale shrinks towards 0.9 as the force error grows.
    """
    if f_goal <= 0:
        raise ValueError("f_goal must be positive")
    phi = []
    for i, j in ((0, 1), (1, 0)):
        if h[i] == 1 and h[j] == 1:
            phi.append(max(0.9, 1.0 - abs(delta_f[i]) / f_goal))
        elif h[i] == 1:
            phi.append(0.1)
        else:
            phi.append(1.0)
    return phi[0], phi[1]


class GraspEnv:
    """Single gripper/object environment.

    Rewards, contact flags and the inductive bias use the simulator's raw
    forces; only the observation carries sensor noise.  When ``schedule`` is
    given the curriculum is evaluated at ``global_step``, which advances by one
    per environment step; otherwise the env runs at ``ranges`` with fixed
    ``weights.alpha2`` and ``o_y_dot_max``.
    """

    def __init__(self, cfg: EnvConfig = EnvConfig(),
                 ranges: RandomizationRanges = RandomizationRanges(),
                 weights: RewardWeights = RewardWeights(),
                 actuator: ActuatorParams = ActuatorParams(),
                 contact: ContactParams = ContactParams(),
                 schedule: CurriculumSchedule | None = None,
                 o_y_dot_max: float = 5e-5,
                 seed: int | None = None):
        self.cfg = cfg
        self.ranges = ranges
        self.weights = weights
        self.actuator = actuator
        self.contact = contact
        self.schedule = schedule
        self.o_y_dot_max = o_y_dot_max
        self.global_step = 0
        self.rng = np.random.default_rng(seed if seed is not None else ranges.seed)
        self._noise_scale = np.array([cfg.sigma_q, cfg.sigma_q, cfg.sigma_f, cfg.sigma_f])
        self.params: EpisodeParams | None = None
        self.state: WorldState | None = None
        self._done = True

    @property
    def obs_dim(self) -> int:
        return self.cfg.obs_dim

    def _episode_ranges(self) -> RandomizationRanges:
        ranges = self.ranges
        if self.schedule is not None:
            cur = curriculum_at(self.global_step, self.schedule)
            ranges = replace(ranges, W_o=cur.W_o, O_y=cur.O_y)
        if not self.cfg.randomize:
            ranges = ranges.with_fixed(kappa=NOMINAL_KAPPA, b2=NOMINAL_B2)
        return ranges

    def _reward_setting(self) -> tuple[RewardWeights, float]:
        if self.schedule is None:
            return self.weights, self.o_y_dot_max
        cur = curriculum_at(self.global_step, self.schedule)
        return replace(self.weights, alpha2=cur.alpha2), cur.o_y_dot_max

    def reset(self, seed: int | None = None, params: EpisodeParams | None = None) -> np.ndarray:
        if seed is not None:
            self.rng = np.random.default_rng(seed)
        if params is None:
            params = sample_episode(self._episode_ranges(), self.rng,
                                    q_max=self.actuator.q_max, d_p_frac=self.cfg.d_p_frac,
                                    stiff_is_one=self.cfg.stiff_is_one)
        self.params = params
        self._ap = replace(self.actuator, b2=params.b2)
        self._cp = replace(self.contact, rho=params.rho, f_alpha=params.f_alpha, d_p=params.d_p)
        self.state = initial_state(params.r_o, params.o_y, self.actuator.q_max)
        self.h = (0, 0)
        self.a_prev = (0.0, 0.0)
        self.t = 0
        self._done = False
        frame = self._frame()
        self.frames = deque([frame] * self.cfg.stack_k, maxlen=self.cfg.stack_k)
        return np.concatenate(self.frames)

    def _frame(self) -> np.ndarray:
        s, fg = self.state, self.params.f_goal
        noise = self.rng.standard_normal(4) * self._noise_scale
        q_l, q_r = s.q_l + noise[0], s.q_r + noise[1]
        f_l, f_r = s.f_l + noise[2], s.f_r + noise[3]
        return np.array([q_l, q_r, f_l, f_r, fg - f_l, fg - f_r,
                         self.a_prev[0], self.a_prev[1], self.h[0], self.h[1]])

    def step(self, action) -> tuple[np.ndarray, float, bool, dict]:
        if self._done:
            raise EpisodeFinished("episode is over; call reset()")
        a_l = min(max(float(action[0]), -1.0), 1.0)
        a_r = min(max(float(action[1]), -1.0), 1.0)
        fg = self.params.f_goal
        s = self.state
        h_applied = self.h
        if self.cfg.inductive_bias_enabled:
            phi = inductive_bias((fg - s.f_l, fg - s.f_r), fg, h_applied)
        else:
            phi = (1.0, 1.0)
        u_l, u_r = phi[0] * a_l, phi[1] * a_r
        self.state = s = physics_step(s, u_l, u_r, self._ap, self._cp)
        self.h = update_contact_flags(s.f_l, s.f_r, self.h, self.cfg.f_theta)
        weights, threshold = self._reward_setting()
        terms = RewardTerms(
            r_force=r_force(fg - s.f_l, fg - s.f_r),
            r_obj=r_obj(s.o_y_dot, threshold),
            r_act=r_act(self.a_prev, (a_l, a_r)),
        )
        reward = total_reward(terms, weights)
        self.a_prev = (a_l, a_r)
        self.t += 1
        self.global_step += 1
        self._done = self.t >= self.cfg.episode_len
        self.frames.append(self._frame())
        info = {
            "step": self.t, "state": s, "params": self.params, "terms": terms,
            "reward": reward, "action": (a_l, a_r), "phi": phi, "command": (u_l, u_r),
            "h_applied": h_applied, "h": self.h, "alpha2": weights.alpha2,
            "o_y_dot_max": threshold, "core_contact": s.core_contact,
        }
        return np.concatenate(self.frames), reward, self._done, info


TRAJECTORY_COLUMNS = (
    "step", "q_l", "q_r", "o_y", "o_y_dot", "f_l", "f_r", "f_goal", "a_l", "a_r",
    "phi_l", "phi_r", "h_l", "h_r", "r_force", "r_obj", "r_act", "r_total",
)


def trajectory_row(info: dict) -> dict:
    """One trajectory CSV row; ``h_l``/``h_r`` are the flags that gated the action."""
    s, t = info["state"], info["terms"]
    return {
        "step": info["step"], "q_l": s.q_l, "q_r": s.q_r, "o_y": s.o_y, "o_y_dot": s.o_y_dot,
        "f_l": s.f_l, "f_r": s.f_r, "f_goal": info["params"].f_goal,
        "a_l": info["action"][0], "a_r": info["action"][1],
        "phi_l": info["phi"][0], "phi_r": info["phi"][1],
        "h_l": info["h_applied"][0], "h_r": info["h_applied"][1],
        "r_force": t.r_force, "r_obj": t.r_obj, "r_act": t.r_act, "r_total": info["reward"],
    }
