"""Clipped-surrogate PPO with generalized advantage estimation."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .checkpoint import checkpoint_save
from .network import ActorCritic, gaussian_entropy, gaussian_log_prob

log = logging.getLogger(__name__)


class NonFiniteLoss(FloatingPointError):
    pass


@dataclass(frozen=True)
class PPOConfig:
    learning_rate: float = 6e-4
    clip_epsilon: float = 0.2
    gamma: float = 0.99
    gae_lambda: float = 0.95
    rollout_len: int = 2048
    minibatch_size: int = 64
    epochs: int = 10
    total_steps: int = 4_000_000
    eval_window: int = 30
    vf_coef: float = 0.5
    ent_coef: float = 0.0
    max_grad_norm: float = 0.5
    adam_eps: float = 1e-5
    hidden: tuple[int, ...] = (50, 50)
    shared_trunk: bool = False
    log_std_init: float = 0.0
    normalize_advantages: bool = True

    def __post_init__(self):
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must lie in (0, 1]")
        if self.clip_epsilon <= 0 or self.learning_rate < 0:
            raise ValueError("clip_epsilon and learning_rate must be positive")
        if self.rollout_len < 1 or self.minibatch_size < 1 or self.epochs < 1:
            raise ValueError("rollout_len, minibatch_size and epochs must be >= 1")


def gae_advantages(rewards, values, dones, gamma: float, lam: float):
    """Generalized advantage estimates.

    ``values`` has one more entry than ``rewards``: the bootstrap value of the
    state after the last step.  ``dones[t]`` marks that the episode ended with
    step ``t``, which cuts both the bootstrap and the trace.
    """
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    dones = np.asarray(dones, dtype=float)
    T = rewards.shape[0]
    if values.shape[0] != T + 1 or dones.shape[0] != T:
        raise ValueError(f"length mismatch: {T} rewards, {values.shape[0]} values, "
                         f"{dones.shape[0]} dones")
    adv = np.zeros(T)
    last = 0.0
    for t in range(T - 1, -1, -1):
        keep = 1.0 - dones[t]
        delta = rewards[t] + gamma * values[t + 1] * keep - values[t]
        last = delta + gamma * lam * keep * last
        adv[t] = last
    return adv, adv + values[:T]


def normalize(x: np.ndarray) -> np.ndarray:
    if x.size < 2:
        return x - x.mean()
    return (x - x.mean()) / (x.std() + 1e-8)


@dataclass
class LossInfo:
    loss: float
    policy_loss: float
    value_loss: float
    entropy: float
    approx_kl: float
    clip_fraction: float


def ppo_loss_and_grad(model: ActorCritic, obs, actions, old_logp, advantages, returns,
                      cfg: PPOConfig) -> tuple[LossInfo, np.ndarray]:
    """PPO objective on one minibatch and its exact gradient w.r.t. ``model.theta``.

    ``advantages`` are used as given (normalize before calling).
    """
    mean, value, cache = model.forward(obs)
    log_std = model.log_std
    B = mean.shape[0]
    logp = gaussian_log_prob(actions, mean, log_std)
    log_ratio = logp - old_logp
    ratio = np.exp(log_ratio)
    eps = cfg.clip_epsilon
    surr1 = ratio * advantages
    surr2 = np.clip(ratio, 1.0 - eps, 1.0 + eps) * advantages
    unclipped = surr1 <= surr2
    policy_loss = -np.mean(np.minimum(surr1, surr2))
    value_loss = np.mean((value - returns) ** 2)
    entropy = gaussian_entropy(log_std)
    loss = policy_loss + cfg.vf_coef * value_loss - cfg.ent_coef * entropy
    if not math.isfinite(loss):
        raise NonFiniteLoss(f"non-finite PPO loss (policy {policy_loss}, value {value_loss})")

    g_logp = np.where(unclipped, -ratio * advantages / B, 0.0)
    inv_var = np.exp(-2.0 * log_std)
    diff = actions - mean
    g_mean = g_logp[:, None] * diff * inv_var
    g_log_std = (g_logp[:, None] * (diff * diff * inv_var - 1.0)).sum(axis=0) - cfg.ent_coef
    g_value = cfg.vf_coef * 2.0 * (value - returns) / B
    grad = model.backward(cache, g_mean, g_value, g_log_std)
    info = LossInfo(
        loss=float(loss), policy_loss=float(policy_loss), value_loss=float(value_loss),
        entropy=entropy, approx_kl=float(np.mean((ratio - 1.0) - log_ratio)),
        clip_fraction=float(np.mean(np.abs(ratio - 1.0) > eps)),
    )
    return info, grad


class Adam:
    def __init__(self, size: int, lr: float, eps: float = 1e-8, betas=(0.9, 0.999)):
        self.lr, self.eps = lr, eps
        self.b1, self.b2 = betas
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, theta: np.ndarray, grad: np.ndarray) -> None:
        self.t += 1
        self.m = self.b1 * self.m + (1 - self.b1) * grad
        self.v = self.b2 * self.v + (1 - self.b2) * grad * grad
        m_hat = self.m / (1 - self.b1 ** self.t)
        v_hat = self.v / (1 - self.b2 ** self.t)
        theta -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


@dataclass
class RolloutBuffer:
    obs: np.ndarray
    actions: np.ndarray
    log_probs: np.ndarray
    advantages: np.ndarray
    returns: np.ndarray

    def __len__(self) -> int:
        return self.obs.shape[0]


def ppo_update(buffer: RolloutBuffer, model: ActorCritic, cfg: PPOConfig,
               rng: np.random.Generator, optimizer: Adam | None = None) -> dict:
    """Run ``cfg.epochs`` passes of minibatch PPO over ``buffer``, in place on ``model``.

    Returns the mean loss diagnostics of the last epoch.
    """
    if optimizer is None:
        optimizer = Adam(model.size, cfg.learning_rate, cfg.adam_eps)
    n = len(buffer)
    infos: list[LossInfo] = []
    for _ in range(cfg.epochs):
        infos = []
        order = rng.permutation(n)
        for start in range(0, n, cfg.minibatch_size):
            idx = order[start:start + cfg.minibatch_size]
            adv = buffer.advantages[idx]
            if cfg.normalize_advantages:
                adv = normalize(adv)
            info, grad = ppo_loss_and_grad(model, buffer.obs[idx], buffer.actions[idx],
                                           buffer.log_probs[idx], adv, buffer.returns[idx], cfg)
            norm = float(np.linalg.norm(grad))
            if cfg.max_grad_norm and norm > cfg.max_grad_norm:
                grad *= cfg.max_grad_norm / (norm + 1e-6)
            optimizer.step(model.theta, grad)
            infos.append(info)
    return {k: float(np.mean([getattr(i, k) for i in infos])) for k in LossInfo.__dataclass_fields__}


@dataclass
class TrainResult:
    model: ActorCritic
    history: list[dict] = field(default_factory=list)
    checkpoints: list[int] = field(default_factory=list)
    best_mean: float = -math.inf


CURVE_COLUMNS = ("update", "step", "mean_return_30", "episodes", "loss", "policy_loss",
                 "value_loss", "entropy", "approx_kl", "clip_fraction", "checkpoint")


def checkpoint_updates(means) -> list[int]:
    """1-based update indices at which the running mean strictly beats the best so far."""
    best = -math.inf
    saved = []
    for i, m in enumerate(means, start=1):
        if m is not None and m > best:
            best = m
            saved.append(i)
    return saved


def train(env_factory: Callable[[int], object], cfg: PPOConfig, out_dir: str | Path,
          seed: int = 0, obs_shift=None, obs_scale=None, model: ActorCritic | None = None,
          progress: Callable[[dict], None] | None = None) -> TrainResult:
    """Alternate rollout collection and PPO updates for ``cfg.total_steps`` env steps.

    ``env_factory(seed)`` builds the (curriculum-carrying) environment.  The
    policy is checkpointed to ``best.ckpt`` whenever the mean return of the last
    ``cfg.eval_window`` episodes beats the best so far, and to ``final.ckpt`` at
    the end; ``training_curve.csv`` records one row per update.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    rng = np.random.default_rng(seed)
    env = env_factory(seed)
    if model is None:
        ib = bool(getattr(getattr(env, "cfg", None), "inductive_bias_enabled", True))
        model = ActorCritic(env.obs_dim, 2, cfg.hidden, cfg.shared_trunk,
                            obs_shift=obs_shift, obs_scale=obs_scale, inductive_bias=ib)
        model.init_params(rng, cfg.log_std_init)
    optimizer = Adam(model.size, cfg.learning_rate, cfg.adam_eps)
    result = TrainResult(model=model)

    T = cfg.rollout_len
    obs_buf = np.zeros((T, model.obs_dim))
    act_buf = np.zeros((T, 2))
    logp_buf = np.zeros(T)
    rew_buf = np.zeros(T)
    val_buf = np.zeros(T + 1)
    done_buf = np.zeros(T)
    episode_returns: list[float] = []
    ep_return = 0.0
    obs = env.reset()
    steps = 0
    update = 0
    curve_path = out / "training_curve.csv"
    with open(curve_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CURVE_COLUMNS, lineterminator="\n")
        writer.writeheader()
        while steps < cfg.total_steps:
            n = min(T, cfg.total_steps - steps)
            for t in range(n):
                action, logp, value = model.act(obs, rng)
                obs_buf[t] = obs
                act_buf[t] = action
                logp_buf[t] = logp
                val_buf[t] = value
                obs, reward, done, _ = env.step(action)
                rew_buf[t] = reward
                done_buf[t] = done
                ep_return += reward
                if done:
                    episode_returns.append(ep_return)
                    ep_return = 0.0
                    obs = env.reset()
            steps += n
            val_buf[n] = model.act(obs)[2]
            adv, ret = gae_advantages(rew_buf[:n], val_buf[:n + 1], done_buf[:n],
                                      cfg.gamma, cfg.gae_lambda)
            buffer = RolloutBuffer(obs_buf[:n].copy(), act_buf[:n].copy(), logp_buf[:n].copy(),
                                   adv, ret)
            losses = ppo_update(buffer, model, cfg, rng, optimizer)
            update += 1
            window = episode_returns[-cfg.eval_window:]
            mean_ret = float(np.mean(window)) if window else None
            saved = mean_ret is not None and mean_ret > result.best_mean
            if saved:
                result.best_mean = mean_ret
                result.checkpoints.append(update)
                checkpoint_save(out / "best.ckpt", model)
            row = {"update": update, "step": steps,
                   "mean_return_30": "" if mean_ret is None else repr(mean_ret),
                   "episodes": len(episode_returns), **{k: repr(v) for k, v in losses.items()},
                   "checkpoint": int(saved)}
            writer.writerow(row)
            result.history.append(row)
            if progress is not None:
                progress(row)
            log.debug("update %d step %d mean return %s", update, steps, mean_ret)
    checkpoint_save(out / "final.ckpt", model)
    return result
