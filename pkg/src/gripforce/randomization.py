"""Per-episode world sampling and the unified stiffness mapping."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

RHO_RANGE = (0.003, 0.01)
F_ALPHA_RANGE = (0.5, 5.0)
NOMINAL_KAPPA = 0.5
NOMINAL_B2 = -9.0
MAX_REJECTIONS = 1000


class ConfigurationError(ValueError):
    pass


def _interval(name: str, value) -> tuple[float, float]:
    lo, hi = (float(v) for v in value)
    if not lo <= hi:
        raise ConfigurationError(f"{name}: empty interval [{lo}, {hi}]")
    return lo, hi


@dataclass(frozen=True)
class RandomizationRanges:
    kappa_range: tuple[float, float] = (0.0, 1.0)
    b2_range: tuple[float, float] = (-13.0, -6.0)
    W_o: tuple[float, float] = (0.015, 0.035)
    O_y: tuple[float, float] = (-0.040, 0.040)
    f_goal_range: tuple[float, float] = (0.3, 1.0)
    seed: int = 0

    def __post_init__(self):
        for name in ("kappa_range", "b2_range", "W_o", "O_y", "f_goal_range"):
            object.__setattr__(self, name, _interval(name, getattr(self, name)))
        k_lo, k_hi = self.kappa_range
        if k_lo < 0 or k_hi > 1:
            raise ConfigurationError(f"kappa_range {self.kappa_range} not within [0, 1]")
        if self.b2_range[1] >= 0:
            raise ConfigurationError("b2 must stay negative")
        if self.W_o[0] <= 0:
            raise ConfigurationError("object widths must be positive")
        if self.O_y[0] != -self.O_y[1]:
            raise ConfigurationError(f"O_y {self.O_y} must be symmetric about 0")
        if self.f_goal_range[0] <= 0:
            raise ConfigurationError("goal forces must be positive")

    def with_fixed(self, **fixed: float) -> "RandomizationRanges":
        """Copy with some parameters pinned, e.g. ``with_fixed(kappa=0.5)``."""
        fields = dict(self.__dict__)
        for key, value in fixed.items():
            fields[f"{key}_range"] = (value, value)
        return RandomizationRanges(**fields)


@dataclass(frozen=True)
class EpisodeParams:
    o_y: float
    w_o: float
    kappa: float
    rho: float
    f_alpha: float
    b2: float
    f_goal: float
    d_p: float

    @property
    def r_o(self) -> float:
        return 0.5 * self.w_o


def kappa_to_contact(kappa: float, stiff_is_one: bool = True) -> tuple[float, float]:
    """Map the unified stiffness factor to (rho, f_alpha).

    Both interpolate linearly.  With the default orientation kappa = 1 is the
    stiffest object: narrowest softness width, largest force scale.
    """
    if not 0.0 <= kappa <= 1.0:
        raise ConfigurationError(f"kappa {kappa} outside [0, 1]")
    s = kappa if stiff_is_one else 1.0 - kappa
    rho = RHO_RANGE[1] + s * (RHO_RANGE[0] - RHO_RANGE[1])
    f_alpha = F_ALPHA_RANGE[0] + s * (F_ALPHA_RANGE[1] - F_ALPHA_RANGE[0])
    return rho, f_alpha


def constraint_violations(p: EpisodeParams, q_max: float = 0.045) -> list[str]:
    """Names of the placement constraints ``p`` breaks (empty when valid)."""
    r_o = p.r_o
    bad = []
    if not abs(p.o_y) + r_o < q_max:
        bad.append("|o_y| + r_o < q_max")
    if not r_o - p.d_p > abs(p.o_y):
        bad.append("r_o - d_p > |o_y|")
    if not p.d_p < r_o:
        bad.append("d_p < r_o")
    return bad


def sample_episode(ranges: RandomizationRanges, rng: np.random.Generator,
                   q_max: float = 0.045, d_p_frac: float = 0.3,
                   stiff_is_one: bool = True) -> EpisodeParams:
    """Draw one episode's world.

    Width, stiffness, actuator speed and goal force are uniform over their
    ranges; the offset is drawn uniformly from ``O_y`` and rejected until the
    object neither touches an open finger nor lets a finger reach its core.
    """
    w_o = rng.uniform(*ranges.W_o)
    kappa = rng.uniform(*ranges.kappa_range)
    b2 = rng.uniform(*ranges.b2_range)
    f_goal = rng.uniform(*ranges.f_goal_range)
    rho, f_alpha = kappa_to_contact(kappa, stiff_is_one)
    r_o = 0.5 * w_o
    d_p = d_p_frac * r_o
    if not 0 < d_p < r_o:
        raise ConfigurationError(f"d_p = {d_p} violates d_p < r_o = {r_o}")
    failed: list[str] = []
    for _ in range(MAX_REJECTIONS):
        o_y = rng.uniform(*ranges.O_y)
        params = EpisodeParams(o_y=o_y, w_o=w_o, kappa=kappa, rho=rho, f_alpha=f_alpha,
                               b2=b2, f_goal=f_goal, d_p=d_p)
        failed = constraint_violations(params, q_max)
        if not failed:
            return params
    raise ConfigurationError(
        f"no feasible object offset in {ranges.O_y} for w_o={w_o:.4f}: "
        f"violates {', '.join(failed)}")
