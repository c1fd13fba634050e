"""Evaluation harness: κ-grid trials, aggregation, calibration runs and CSV output.

Every trial derives its own seed from ``(base seed, model id, κ index, trial
index)``, so a trial's outcome does not depend on which worker runs it or in
which order; parallel evaluation therefore reproduces serial evaluation
exactly.
"""

from __future__ import annotations

import csv
import math
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .agent.checkpoint import checkpoint_load
from .agent.network import ActorCritic
from .baseline import BaselinePolicy
from .config import ExperimentConfig
from .env import TRAJECTORY_COLUMNS, GraspEnv, trajectory_row
from .physics import (ActuatorParams, ContactParams, WorldState, calibrate_slope, initial_state,
                      physics_step, steady_force)
from .randomization import kappa_to_contact
from .reward import reward_bounds


# ----------------------------------------------------------------------------- policies

class ModelPolicy:
    """A trained actor-critic; mean action unless ``stochastic``."""

    def __init__(self, model: ActorCritic, model_id: str = "pi_IB", stochastic: bool = False):
        self.model, self.model_id, self.stochastic = model, model_id, stochastic
        self.inductive_bias = model.inductive_bias

    def act(self, env: GraspEnv, obs: np.ndarray, rng: np.random.Generator):
        return self.model.act(obs, rng if self.stochastic else None)[0]


class BaselineAgent:
    """The phase controller; it reads simulator state, so it runs without action scaling."""

    inductive_bias = False

    def __init__(self, policy: BaselinePolicy, model_id: str = "baseline"):
        self.policy, self.model_id = policy, model_id

    def act(self, env, obs, rng):
        return self.policy.act(env)


class ZeroPolicy:
    def __init__(self, model_id: str = "zero", inductive_bias: bool = True):
        self.model_id, self.inductive_bias = model_id, inductive_bias

    def act(self, env, obs, rng):
        return (0.0, 0.0)


class RandomPolicy:
    """Uniform random commands in [-1, 1] per finger and step."""

    def __init__(self, model_id: str = "random", inductive_bias: bool = True):
        self.model_id, self.inductive_bias = model_id, inductive_bias

    def act(self, env, obs, rng):
        return rng.uniform(-1.0, 1.0, size=2)


def load_policy(path, cfg: ExperimentConfig, model_id: str | None = None,
                stochastic: bool = False) -> ModelPolicy:
    model = checkpoint_load(path, obs_dim=cfg.env.obs_dim)
    return ModelPolicy(model, model_id or cfg.experiment.model_id, stochastic)


# ----------------------------------------------------------------------------- records

@dataclass(frozen=True)
class TrialRecord:
    model_id: str
    seed: int
    kappa_index: int
    trial: int
    kappa: float
    episode_return: float
    r_force_sum: float
    r_obj_sum: float
    r_act_sum: float
    displacement: float  # |o_y(T) - o_y(0)|, meters
    final_abs_df_l: float
    final_abs_df_r: float
    o_y: float
    w_o: float
    rho: float
    f_alpha: float
    b2: float
    f_goal: float
    d_p: float


TRIAL_COLUMNS = tuple(f.name for f in fields(TrialRecord))
_INT_COLUMNS = {"seed", "kappa_index", "trial"}


def _fmt(value) -> str:
    if isinstance(value, float):
        return "%.17g" % value
    return str(value)


def write_records(path, records: Iterable[TrialRecord]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRIAL_COLUMNS)
        for rec in records:
            writer.writerow([_fmt(getattr(rec, c)) for c in TRIAL_COLUMNS])


def read_records(path) -> list[TrialRecord]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != TRIAL_COLUMNS:
            raise ValueError(f"{path}: not an evaluation CSV (header {reader.fieldnames})")
        out = []
        for row in reader:
            kw = {}
            for c in TRIAL_COLUMNS:
                if c == "model_id":
                    kw[c] = row[c]
                elif c in _INT_COLUMNS:
                    kw[c] = int(row[c])
                else:
                    kw[c] = float(row[c])
            out.append(TrialRecord(**kw))
    return out


# ----------------------------------------------------------------------------- trials

def trial_seed(base_seed: int, model_id: str, kappa_index: int, trial: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(base_seed), zlib.crc32(model_id.encode("utf-8")),
                                   int(kappa_index), int(trial)])


def make_eval_env(cfg: ExperimentConfig, inductive_bias: bool) -> GraspEnv:
    """Environment at the final curriculum values, randomizing everything but κ."""
    env = cfg.make_env(training=True, inductive_bias_enabled=inductive_bias, randomize=True)
    if env.schedule is not None:
        env.global_step = int(math.ceil(env.schedule.s_end))
    return env


def run_trial(policy, env: GraspEnv, kappa: float, kappa_index: int, trial: int,
              base_seed: int, model_id: str, trajectory: list | None = None) -> TrialRecord:
    ss = trial_seed(base_seed, model_id, kappa_index, trial)
    env_ss, policy_ss = ss.spawn(2)
    env.ranges = replace(env.ranges, kappa_range=(kappa, kappa))
    obs = env.reset(seed=env_ss)
    rng = np.random.default_rng(policy_ss)
    p = env.params
    o_start = env.state.o_y
    total = rf = ro = ra = 0.0
    done = False
    while not done:
        obs, reward, done, info = env.step(policy.act(env, obs, rng))
        t = info["terms"]
        total += reward
        rf += t.r_force
        ro += t.r_obj
        ra += t.r_act
        if trajectory is not None:
            trajectory.append(trajectory_row(info))
    s = env.state
    return TrialRecord(
        model_id=model_id, seed=int(base_seed), kappa_index=kappa_index, trial=trial,
        kappa=float(kappa), episode_return=total, r_force_sum=rf, r_obj_sum=ro, r_act_sum=ra,
        displacement=abs(s.o_y - o_start),
        final_abs_df_l=abs(p.f_goal - s.f_l), final_abs_df_r=abs(p.f_goal - s.f_r),
        o_y=p.o_y, w_o=p.w_o, rho=p.rho, f_alpha=p.f_alpha, b2=p.b2, f_goal=p.f_goal, d_p=p.d_p,
    )


def _run_kappa(args) -> list[TrialRecord]:
    policy, cfg, kappa_index, kappa, trials, base_seed, model_id = args
    env = make_eval_env(cfg, policy.inductive_bias)
    return [run_trial(policy, env, kappa, kappa_index, t, base_seed, model_id)
            for t in range(trials)]


def run_evaluation(policy, cfg: ExperimentConfig, seed: int | None = None,
                   trials: int | None = None, workers: int | None = None,
                   csv_path=None) -> list[TrialRecord]:
    """Roll ``trials`` episodes per κ of the configured grid.

    With ``csv_path`` the records are written as each κ completes, so an
    aborted run leaves the finished part on disk.
    """
    grid = cfg.experiment.kappa_grid
    trials = cfg.experiment.trials_per_kappa if trials is None else trials
    if trials < 1:
        raise ValueError("trials must be >= 1")
    workers = cfg.experiment.workers if workers is None else workers
    base_seed = cfg.randomization.seed if seed is None else seed
    jobs = [(policy, cfg, i, float(k), trials, base_seed, policy.model_id)
            for i, k in enumerate(grid)]
    records: list[TrialRecord] = []
    fh = writer = None
    if csv_path is not None:
        fh = open(csv_path, "w", newline="", encoding="utf-8")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRIAL_COLUMNS)
    try:
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                chunks = pool.map(_run_kappa, jobs)
                for chunk in chunks:
                    records.extend(chunk)
                    _flush(writer, fh, chunk)
        else:
            for job in jobs:
                chunk = _run_kappa(job)
                records.extend(chunk)
                _flush(writer, fh, chunk)
    finally:
        if fh is not None:
            fh.close()
    return records


def _flush(writer, fh, chunk) -> None:
    if writer is None:
        return
    for rec in chunk:
        writer.writerow([_fmt(getattr(rec, c)) for c in TRIAL_COLUMNS])
    fh.flush()


def check_record_bounds(records: Sequence[TrialRecord], cfg: ExperimentConfig) -> None:
    lo, hi = reward_bounds(cfg.reward, cfg.env.episode_len)
    for r in records:
        if not lo - 1e-9 <= r.episode_return <= hi + 1e-9:
            raise ValueError(f"return {r.episode_return} outside [{lo}, {hi}] ({r.model_id}, "
                             f"kappa {r.kappa}, trial {r.trial})")


# ----------------------------------------------------------------------------- aggregation

@dataclass(frozen=True)
class KappaSummary:
    model_id: str
    kappa: float
    n: int
    mean: float
    std: float
    min: float
    q25: float
    median: float
    q75: float
    max: float
    mean_displacement_mm: float


SUMMARY_COLUMNS = tuple(f.name for f in fields(KappaSummary))


def _stats(values: np.ndarray) -> tuple[float, float]:
    # sample standard deviation; a single trial has none
    std = float(np.std(values, ddof=1)) if values.size > 1 else 0.0
    return float(np.mean(values)), std


def aggregate(records: Sequence[TrialRecord]) -> list[KappaSummary]:
    """Per (model, κ) return statistics in first-seen order."""
    groups: dict[tuple[str, float], list[TrialRecord]] = {}
    for r in records:
        groups.setdefault((r.model_id, r.kappa), []).append(r)
    out = []
    for (model_id, kappa), recs in groups.items():
        values = np.array([r.episode_return for r in recs])
        mean, std = _stats(values)
        q = np.quantile(values, [0.0, 0.25, 0.5, 0.75, 1.0])
        disp = 1000.0 * float(np.mean([r.displacement for r in recs]))
        out.append(KappaSummary(model_id, kappa, values.size, mean, std, *map(float, q), disp))
    return out


def mean_return(records: Sequence[TrialRecord]) -> float:
    return float(np.mean([r.episode_return for r in records]))


def write_summary(path, summaries: Sequence[KappaSummary]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SUMMARY_COLUMNS)
        for s in summaries:
            writer.writerow([_fmt(v) for v in asdict(s).values()])


@dataclass(frozen=True)
class CompareRow:
    model_id: str
    per_kappa: tuple[tuple[float, float, float], ...]  # (kappa, mean, std)
    mean: float
    std: float
    mean_displacement_mm: float


def compare(record_sets: Sequence[Sequence[TrialRecord]]) -> list[CompareRow]:
    """One row per model: mean ± std of the return per κ and over all trials."""
    by_model: dict[str, list[TrialRecord]] = {}
    for records in record_sets:
        for r in records:
            by_model.setdefault(r.model_id, []).append(r)
    rows = []
    for model_id, recs in by_model.items():
        per = []
        for s in aggregate(recs):
            per.append((s.kappa, s.mean, s.std))
        per.sort(key=lambda x: x[0])
        mean, std = _stats(np.array([r.episode_return for r in recs]))
        disp = 1000.0 * float(np.mean([r.displacement for r in recs]))
        rows.append(CompareRow(model_id, tuple(per), mean, std, disp))
    return rows


def write_compare(path, rows: Sequence[CompareRow]) -> None:
    kappas = sorted({k for row in rows for k, _, _ in row.per_kappa})
    header = ["model_id"]
    for k in kappas:
        header += [f"mean_k{k:g}", f"std_k{k:g}"]
    header += ["mean", "std", "obj_mov_mm"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            cells = {k: (m, s) for k, m, s in row.per_kappa}
            line = [row.model_id]
            for k in kappas:
                m, s = cells.get(k, (float("nan"), float("nan")))
                line += [_fmt(m), _fmt(s)]
            line += [_fmt(row.mean), _fmt(row.std), _fmt(row.mean_displacement_mm)]
            writer.writerow(line)


def format_compare(rows: Sequence[CompareRow]) -> str:
    kappas = sorted({k for row in rows for k, _, _ in row.per_kappa})
    head = ["model".ljust(12)] + [f"k={k:.1f}".rjust(13) for k in kappas] + ["average".rjust(13),
                                                                               "mov mm".rjust(8)]
    lines = [" ".join(head)]
    for row in rows:
        cells = {k: (m, s) for k, m, s in row.per_kappa}
        parts = [row.model_id.ljust(12)]
        for k in kappas:
            m, s = cells.get(k, (float("nan"), float("nan")))
            parts.append(f"{m:6.1f}±{s:<6.1f}".rjust(13))
        parts.append(f"{row.mean:6.1f}±{row.std:<6.1f}".rjust(13))
        parts.append(f"{row.mean_displacement_mm:8.2f}")
        lines.append(" ".join(parts))
    return "\n".join(lines)


# ----------------------------------------------------------------------------- rollout

def rollout(policy, cfg: ExperimentConfig, seed: int, kappa: float | None = None) -> list[dict]:
    """One verbose episode; returns the per-step trajectory rows."""
    env = make_eval_env(cfg, policy.inductive_bias)
    if kappa is None:
        kappa = float(np.random.default_rng(seed).uniform(*cfg.randomization.kappa_range))
    rows: list[dict] = []
    run_trial(policy, env, kappa, 0, 0, seed, policy.model_id, trajectory=rows)
    return rows


def write_trajectory(path, rows: Sequence[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRAJECTORY_COLUMNS)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in TRAJECTORY_COLUMNS])


# ----------------------------------------------------------------------------- calibration

@dataclass(frozen=True)
class CalibrationRow:
    kappa: float
    b2: float
    rho: float
    f_alpha: float
    slope: float  # N/m
    closing_time: float  # s, from fully open to first contact
    final_force: float  # N, steady force at the largest commanded delta


CALIBRATION_COLUMNS = tuple(f.name for f in fields(CalibrationRow))
CALIBRATION_TRAJ_COLUMNS = ("kappa", "b2", "step", "time", "q", "q_des", "f")


def calibration_grid(ap: ActuatorParams, step: float) -> np.ndarray:
    n = int(math.floor(ap.dq_max / step + 1e-9))
    return step * np.arange(1, n + 1)


def closing_time(ap: ActuatorParams, r_o: float, max_steps: int = 1000) -> float:
    """Seconds of full closing from fully open until the fingers touch a centered object."""
    s = initial_state(r_o, 0.0, ap.q_max)
    cp = ContactParams()
    for step in range(1, max_steps + 1):
        s = physics_step(s, -1.0, -1.0, ap, cp)
        if s.delta_l > 0 or s.delta_r > 0:
            return step * ap.dt
    raise RuntimeError("fingers never reached the object")


def closing_trajectory(ap: ActuatorParams, cp: ContactParams, r_o: float,
                       steps: int) -> list[tuple[int, float, float, float]]:
    """Full-command close onto a centered object: (step, q, q_des, f) of the left finger."""
    s: WorldState = initial_state(r_o, 0.0, ap.q_max)
    out = [(0, s.q_l, s.q_l, 0.0)]
    for step in range(1, steps + 1):
        s = physics_step(s, -1.0, -1.0, ap, cp)
        out.append((step, s.q_l, s.qdes_l, s.f_l))
    return out


@dataclass
class CalibrationReport:
    rows: list[CalibrationRow]
    trajectories: list[tuple]
    reference_slopes: dict

    def format(self) -> str:
        lines = ["kappa     b2       rho  f_alpha   slope[N/m]  closing[s]",
                 *(f"{r.kappa:5.2f} {r.b2:6.1f} {r.rho:9.4f} {r.f_alpha:8.2f} {r.slope:12.1f} "
                   f"{r.closing_time:11.2f}" for r in self.rows),
                 "reference real-object slopes: "
                 + ", ".join(f"{k} {v:g} N/m" for k, v in self.reference_slopes.items())]
        return "\n".join(lines)


def run_calibration(cfg: ExperimentConfig) -> CalibrationReport:
    cal = cfg.calibration
    rows, traj = [], []
    for b2 in cal.b2_values:
        ap = replace(cfg.actuator, b2=b2)
        t_close = closing_time(ap, cal.r_o)
        grid = calibration_grid(ap, cal.dq_step)
        for kappa in cal.kappas:
            rho, f_alpha = kappa_to_contact(kappa, cfg.env.stiff_is_one)
            cp = replace(cfg.contact, rho=rho, f_alpha=f_alpha, d_p=cfg.env.d_p_frac * cal.r_o)
            slope = calibrate_slope(cp, ap, grid, r_o=cal.r_o)
            final = steady_force(cp, ap, float(grid[-1]), r_o=cal.r_o)
            rows.append(CalibrationRow(kappa, b2, rho, f_alpha, slope, t_close, final))
            for step, q, qd, f in closing_trajectory(ap, cp, cal.r_o, cal.trajectory_steps):
                traj.append((kappa, b2, step, step * ap.dt, q, qd, f))
    return CalibrationReport(rows, traj, {"Sponge": cal.reference_sponge, "Wood": cal.reference_wood})


def write_calibration(report: CalibrationReport, out_dir) -> tuple[Path, Path]:
    out = Path(out_dir)
    slopes, traj = out / "calibration_slopes.csv", out / "calibration_trajectories.csv"
    with open(slopes, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CALIBRATION_COLUMNS + ("reference_sponge", "reference_wood"))
        for r in report.rows:
            writer.writerow([_fmt(getattr(r, c)) for c in CALIBRATION_COLUMNS]
                            + [_fmt(report.reference_slopes["Sponge"]),
                               _fmt(report.reference_slopes["Wood"])])
    with open(traj, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CALIBRATION_TRAJ_COLUMNS)
        for row in report.trajectories:
            writer.writerow([_fmt(v) for v in row])
    return slopes, traj
