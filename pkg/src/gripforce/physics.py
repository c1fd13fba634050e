"""Quasi-static simulation of a 2-DoF parallel-jaw gripper squeezing a deformable object.

Geometry (all lengths in meters, world frame centered between the fingertips):
the left finger surface sits at ``y = -q_l``, the right one at ``y = +q_r`` and
the object spans ``[o_y - r_o, o_y + r_o]``.  A finger is fully open at
``q = q_max``.

Each joint is a position servo driven by desired position deltas: the servo
set point is ``q + u * dq_max``.  The finger is coupled to its set point
through a spring (``ActuatorParams.servo_stiffness``) and, per control
period, covers the fraction ``gain`` of the way to the position where the
spring balances the contact reaction (``gain`` grows with ``|b2|``).  In free
space this is exactly ``actuator_step``.  Under a constant command the finger
settles where the reaction equals ``servo_stiffness * |u| * dq_max``; the
measured fingertip force is the reaction scaled by ``f_alpha``, so the
steady-state force depends on ``f_alpha`` and the command but neither on the
softness width ``rho`` nor on ``b2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np


class InvalidInput(ValueError):
    """Raised when a physics routine receives non-finite or out-of-domain input."""


@dataclass(frozen=True)
class ActuatorParams:
    b2: float = -9.0
    dq_max: float = 0.003
    q_max: float = 0.045
    dt: float = 0.04
    lambda0: float = 0.75
    servo_stiffness: float = 700.0  # N/m, finger-to-set-point coupling

    def __post_init__(self):
        if not self.b2 < 0:
            raise InvalidInput(f"b2 must be negative, got {self.b2}")
        if not 0 < self.dq_max < self.q_max:
            raise InvalidInput("need 0 < dq_max < q_max")
        if self.dt <= 0 or self.servo_stiffness <= 0:
            raise InvalidInput("dt and servo_stiffness must be positive")

    @property
    def gain(self) -> float:
        """Fraction of the commanded delta the servo covers per step."""
        return min(max(abs(self.b2) / 9.0 * self.lambda0, 0.0), 1.0)


@dataclass(frozen=True)
class ContactParams:
    rho: float = 0.0065
    f_alpha: float = 2.75
    d_p: float = 0.00375
    k0: float = 1.5
    core_stiffness_mult: float = 50.0
    # fraction of the gap to the force-balance position the held object covers
    # per control period; 1 is the frictionless quasi-static limit
    object_mobility: float = 1.0

    def __post_init__(self):
        if self.rho <= 0 or self.f_alpha <= 0 or self.d_p <= 0 or self.k0 <= 0:
            raise InvalidInput("rho, f_alpha, d_p and k0 must be positive")
        if self.core_stiffness_mult < 10:
            raise InvalidInput("core_stiffness_mult must be >= 10")
        if not 0.0 < self.object_mobility <= 1.0:
            raise InvalidInput("object_mobility must lie in (0, 1]")


@dataclass(frozen=True)
class WorldState:
    q_l: float
    q_r: float
    o_y: float
    r_o: float
    o_y_dot: float = 0.0
    delta_l: float = 0.0
    delta_r: float = 0.0
    f_l: float = 0.0
    f_r: float = 0.0
    qdes_l: float = float("nan")
    qdes_r: float = float("nan")
    core_contact: bool = False

    def mirrored(self) -> "WorldState":
        """The same world reflected about y = 0 (fingers swapped, offset negated)."""
        return WorldState(
            q_l=self.q_r, q_r=self.q_l, o_y=-self.o_y, r_o=self.r_o,
            o_y_dot=-self.o_y_dot, delta_l=self.delta_r, delta_r=self.delta_l,
            f_l=self.f_r, f_r=self.f_l, qdes_l=self.qdes_r, qdes_r=self.qdes_l,
            core_contact=self.core_contact,
        )


def initial_state(r_o: float, o_y: float, q_max: float = 0.045) -> WorldState:
    """Fully open gripper around an undeformed object."""
    state = WorldState(q_l=q_max, q_r=q_max, o_y=o_y, r_o=r_o, qdes_l=q_max, qdes_r=q_max)
    d_l, d_r = penetrations(q_max, q_max, o_y, r_o)
    if d_l > 0 or d_r > 0:
        raise InvalidInput("object intersects a fully open finger")
    return state


def _finite(*values: float) -> None:
    for v in values:
        if not math.isfinite(v):
            raise InvalidInput(f"non-finite input {v!r}")


def actuator_step(q: float, u: float, p: ActuatorParams) -> float:
    """Free-space joint motion under the normalized delta command ``u``."""
    _finite(q, u)
    if q < 0 or q > p.q_max:
        raise InvalidInput(f"joint position {q} outside [0, {p.q_max}]")
    dq_des = min(max(u, -1.0), 1.0) * p.dq_max
    q_des = min(max(q + dq_des, 0.0), p.q_max)
    move = min(max(p.gain * (q_des - q), -p.dq_max), p.dq_max)
    return min(max(q + move, 0.0), p.q_max)


def penetrations(q_l: float, q_r: float, o_y: float, r_o: float) -> tuple[float, float]:
    _finite(q_l, q_r, o_y, r_o)
    if r_o <= 0:
        raise InvalidInput("object radius must be positive")
    return max(0.0, r_o - o_y - q_l), max(0.0, r_o + o_y - q_r)


def _reaction(delta: float, p: ContactParams) -> float:
    # contact reaction before the f_alpha sensor scaling
    c = p.k0 / p.rho
    if delta <= p.d_p:
        return c * delta
    return c * (p.d_p + p.core_stiffness_mult * (delta - p.d_p))


def contact_force(delta: float, p: ContactParams) -> float:
    """Measured normal force for a shell penetration ``delta``.

    Linear with slope ``f_alpha * k0 / rho`` up to ``d_p``; beyond that the
    rigid core stiffens the response by ``core_stiffness_mult``.
    """
    _finite(delta)
    if delta < 0:
        raise InvalidInput(f"negative penetration {delta}")
    return p.f_alpha * _reaction(delta, p)


def _settle(s: float, p: ContactParams, k: float, capped: bool) -> float:
    """Solve ``delta + reaction(delta) / k = s`` for the settled penetration.

    ``s`` is the penetration the servo target alone would produce.  With
    ``capped`` the reaction saturates at the shell limit (the object slides
    instead of compressing its core); the returned delta may then exceed d_p
    and the caller moves the object.
    """
    if s <= 0:
        return 0.0
    c = p.k0 / p.rho
    delta = s / (1.0 + c / k)
    if delta <= p.d_p:
        return delta
    if capped:
        return s - c * p.d_p / k
    m = p.core_stiffness_mult
    return (s - c * p.d_p * (1.0 - m) / k) / (1.0 + c * m / k)


def _comply(t_l: float, t_r: float, o_y: float, r_o: float,
            cp: ContactParams, k: float) -> tuple[float, float]:
    """Finger positions once each finger has yielded to its contact reaction."""
    s_l = r_o - o_y - t_l
    s_r = r_o + o_y - t_r
    if s_l <= 0 and s_r <= 0:
        return t_l, t_r
    if s_l > 0 and s_r <= 0:
        d = _settle(s_l, cp, k, capped=True)
        q_l = t_l + _reaction(min(d, cp.d_p), cp) / k
        if d > cp.d_p:
            o_y = r_o - q_l - cp.d_p
        if r_o + o_y - t_r <= 0:
            return q_l, t_r
    elif s_r > 0 and s_l <= 0:
        d = _settle(s_r, cp, k, capped=True)
        q_r = t_r + _reaction(min(d, cp.d_p), cp) / k
        if d > cp.d_p:
            o_y = -(r_o - q_r - cp.d_p)
        if r_o - o_y - t_l <= 0:
            return t_l, q_r
    # both fingers hold the object: a common penetration on each side
    d = _settle(r_o - 0.5 * (t_l + t_r), cp, k, capped=False)
    back = _reaction(d, cp) / k
    return t_l + back, t_r + back


def object_update(state: WorldState, p: ContactParams, dt: float) -> tuple[float, float]:
    """Quasi-static object position for the fingers in ``state``.

    No contact: the object stays.  One contact: the shell absorbs the push
    until the penetration reaches ``d_p``, after which the core drags the
    object along.  Both contacts: the object sits where the two contact forces
    balance, which for identical contact laws equalizes the penetrations.
    """
    q_l, q_r, o_y, r_o = state.q_l, state.q_r, state.o_y, state.r_o
    d_l, d_r = penetrations(q_l, q_r, o_y, r_o)
    y = o_y
    if d_l > 0 and d_r <= 0 and d_l > p.d_p:
        y = r_o - q_l - p.d_p
    elif d_r > 0 and d_l <= 0 and d_r > p.d_p:
        y = -(r_o - q_r - p.d_p)
    d_l, d_r = penetrations(q_l, q_r, y, r_o)
    if d_l > 0 and d_r > 0:
        y = 0.5 * (q_r - q_l)
    return y, (y - o_y) / dt


def _lag(q_prev: float, q_eq: float, ap: ActuatorParams) -> float:
    move = min(max(ap.gain * (q_eq - q_prev), -ap.dq_max), ap.dq_max)
    return min(max(q_prev + move, 0.0), ap.q_max)


def _held(t: float, s: float, cp: ContactParams, k: float) -> float:
    # equilibrium of a finger pressing an object that does not move
    return t + _reaction(_settle(s, cp, k, capped=False), cp) / k


def physics_step(state: WorldState, u_l: float, u_r: float,
                 ap: ActuatorParams, cp: ContactParams) -> WorldState:
    """One control period: set points, finger compliance, object, forces."""
    _finite(u_l, u_r)
    for q in (state.q_l, state.q_r):
        if q < 0 or q > ap.q_max:
            raise InvalidInput(f"joint position {q} outside [0, {ap.q_max}]")
    k = ap.servo_stiffness
    t_l = state.q_l + min(max(u_l, -1.0), 1.0) * ap.dq_max
    t_r = state.q_r + min(max(u_r, -1.0), 1.0) * ap.dq_max
    eq_l, eq_r = _comply(t_l, t_r, state.o_y, state.r_o, cp, k)
    q_l, q_r = _lag(state.q_l, eq_l, ap), _lag(state.q_r, eq_r, ap)
    moved = replace(state, q_l=q_l, q_r=q_r)
    o_y, o_y_dot = object_update(moved, cp, ap.dt)
    r_o = state.r_o
    d_l, d_r = penetrations(q_l, q_r, o_y, r_o)
    if cp.object_mobility < 1.0 and d_l > 0 and d_r > 0:
        # table drag: the object only closes part of the gap to the balance
        # point, and each finger settles against it separately
        o_y = state.o_y + cp.object_mobility * (o_y - state.o_y)
        o_y_dot = (o_y - state.o_y) / ap.dt
        q_l = _lag(state.q_l, _held(t_l, r_o - o_y - t_l, cp, k), ap)
        q_r = _lag(state.q_r, _held(t_r, r_o + o_y - t_r, cp, k), ap)
        d_l, d_r = penetrations(q_l, q_r, o_y, r_o)
    return WorldState(
        q_l=q_l, q_r=q_r, o_y=o_y, r_o=r_o, o_y_dot=o_y_dot,
        delta_l=d_l, delta_r=d_r,
        f_l=contact_force(d_l, cp), f_r=contact_force(d_r, cp),
        qdes_l=min(max(t_l, 0.0), ap.q_max), qdes_r=min(max(t_r, 0.0), ap.q_max),
        core_contact=d_l > cp.d_p and d_r > cp.d_p,
    )


def calibrate_slope(cp: ContactParams, ap: ActuatorParams, dq_grid,
                    r_o: float = 0.0125, max_steps: int = 150,
                    tol: float = 1e-6, window: int = 10) -> float:
    """Regress steady grasp force against a constant position-delta command.

    For each delta in ``dq_grid`` both fingers start touching a centered object
    and receive the same closing command until the force settles (change below
    ``tol`` over ``window`` steps) or ``max_steps`` elapse.  Returns the least
    squares slope of final force over commanded delta, in N/m.
    """
    grid = np.asarray(dq_grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2:
        raise InvalidInput("calibration needs at least two grid points")
    if np.any(np.diff(grid) <= 0) or grid[0] <= 0 or grid[-1] > ap.dq_max:
        raise InvalidInput("grid must be strictly increasing within (0, dq_max]")
    finals = np.array([steady_force(cp, ap, dq, r_o, max_steps, tol, window) for dq in grid])
    if np.ptp(finals) == 0:
        raise InvalidInput("degenerate calibration: final force does not vary with command")
    slope, _ = np.polyfit(grid, finals, 1)
    return float(slope)


def steady_force(cp: ContactParams, ap: ActuatorParams, dq: float, r_o: float = 0.0125,
                 max_steps: int = 150, tol: float = 1e-6, window: int = 10) -> float:
    """Final force of one constant-command grasp (both fingers, centered object)."""
    u = -dq / ap.dq_max
    state = WorldState(q_l=r_o, q_r=r_o, o_y=0.0, r_o=r_o)
    history = [0.0]
    for _ in range(max_steps):
        state = physics_step(state, u, u, ap, cp)
        history.append(state.f_l)
        recent = history[-(window + 1):]
        if len(recent) == window + 1 and max(recent) - min(recent) < tol:
            break
    return state.f_l
