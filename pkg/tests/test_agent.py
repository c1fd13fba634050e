import math
import struct
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gripforce.agent import (
    MLP, ActorCritic, Adam, CheckpointError, NonFiniteLoss, PPOConfig, RolloutBuffer,
    checkpoint_load, checkpoint_save, checkpoint_updates, gae_advantages, gaussian_entropy,
    gaussian_log_prob, ppo_loss_and_grad, ppo_update, train,
)
from gripforce.agent.ppo import normalize
from gripforce.env import EnvConfig, GraspEnv
from gripforce.reward import CurriculumSchedule


def central_diff(f, theta, h=1e-6):
    g = np.zeros_like(theta)
    for i in range(theta.size):
        old = theta[i]
        theta[i] = old + h
        up = f()
        theta[i] = old - h
        down = f()
        theta[i] = old
        g[i] = (up - down) / (2 * h)
    return g


def rel_err(a, b):
    return np.max(np.abs(a - b)) / max(1e-8, np.max(np.abs(a)), np.max(np.abs(b)))


def small_model(rng, obs_dim=5, hidden=(6, 7), shared=False, log_std=-0.3):
    m = ActorCritic(obs_dim, 2, hidden, shared)
    m.init_params(rng, log_std)
    m.theta += 0.1 * rng.standard_normal(m.size)  # break the near-zero output layer
    return m


# ----------------------------------------------------------------------------- forward

def test_zero_weights_zero_mean():
    m = ActorCritic(4, 2, (8, 8))
    mean, log_std = m.policy_forward(np.ones(4))
    assert np.array_equal(mean, np.zeros((1, 2))) and np.array_equal(log_std, np.zeros(2))


def test_hand_forward_pass():
    net = MLP([1, 1, 1], np.array([2.0, -1.0, 3.0, 0.0]))
    out, _ = net.forward(np.array([[1.0]]))
    assert out[0, 0] == 3.0


def test_forward_rejects_wrong_dimension():
    with pytest.raises(ValueError, match="expected 4"):
        ActorCritic(4).forward(np.zeros(5))


def test_layout_and_sizes():
    m = ActorCritic(30, 2, (50, 50))
    assert m.policy_sizes == [30, 50, 50, 2] and m.value_sizes == [30, 50, 50, 1]
    shared = ActorCritic(30, 2, (50, 50), shared_trunk=True)
    assert shared.policy_sizes == [30, 50, 50, 3] and shared.v_net is None


def test_act_deterministic_without_rng():
    m = small_model(np.random.default_rng(0))
    obs = np.arange(5.0)
    a, logp, v = m.act(obs)
    mean, value, _ = m.forward(obs)
    assert np.array_equal(a, mean[0]) and v == value[0] and logp == 0.0


def test_orthogonal_init_is_orthogonal():
    net = MLP([20, 10, 2])
    net.init_orthogonal(np.random.default_rng(1), hidden_gain=1.0)
    W = net.layers[0][0]
    assert np.allclose(W.T @ W, np.eye(10), atol=1e-12)


@pytest.mark.parametrize("shared", [False, True])
@pytest.mark.parametrize("seed", range(5))
def test_mean_and_value_gradients(seed, shared):
    rng = np.random.default_rng(seed)
    m = small_model(rng, shared=shared)
    obs = rng.standard_normal((4, 5))
    wm, wv = rng.standard_normal((4, 2)), rng.standard_normal(4)

    def f():
        mean, value, _ = m.forward(obs)
        return float(np.sum(wm * mean) + np.sum(wv * value))

    _, _, cache = m.forward(obs)
    analytic = m.backward(cache, wm, wv, np.zeros(2))
    assert rel_err(analytic, central_diff(f, m.theta)) < 1e-6


# ----------------------------------------------------------------------------- gaussian

def test_log_prob_at_mean():
    log_std = np.array([-0.5, 0.3])
    lp = gaussian_log_prob(np.zeros(2), np.zeros(2), log_std)
    assert lp == pytest.approx(-np.sum(log_std) - math.log(2 * math.pi), abs=1e-14)


def test_log_prob_integrates_to_one():
    x = np.linspace(-12, 12, 200_001)[:, None]
    p = np.exp(gaussian_log_prob(x, np.full((1, 1), 0.7), np.array([0.2])))
    assert abs(np.trapezoid(p, x[:, 0]) - 1.0) < 1e-4


def test_entropy_formula():
    log_std = np.array([0.1, -0.4])
    assert gaussian_entropy(log_std) == pytest.approx(np.sum(log_std) + math.log(2 * math.pi * math.e))


# ----------------------------------------------------------------------------- GAE

def gae_oracle(r, v, d, gamma, lam):
    """Direct sum over n-step TD errors, without the backward recursion."""
    T = len(r)
    adv = np.zeros(T)
    for t in range(T):
        total, weight = 0.0, 1.0
        for k in range(t, T):
            keep = 1.0 - d[k]
            delta = r[k] + gamma * v[k + 1] * keep - v[k]
            total += weight * delta
            if d[k]:
                break
            weight *= gamma * lam
        adv[t] = total
    return adv


def test_gae_one_step_td():
    r, v, d = [1.0, 0.5, -1.0], [0.2, 0.4, 0.1, 0.3], [0, 0, 0]
    adv, ret = gae_advantages(r, v, d, 0.9, 0.0)
    expected = [r[t] + 0.9 * v[t + 1] - v[t] for t in range(3)]
    assert adv == pytest.approx(expected, abs=1e-15)
    assert ret == pytest.approx(adv + np.array(v[:3]))


def test_gae_monte_carlo():
    r = np.array([1.0, 2.0, -0.5, 3.0])
    adv, _ = gae_advantages(r, np.zeros(5), np.zeros(4), 1.0, 1.0)
    assert adv == pytest.approx(np.cumsum(r[::-1])[::-1])


def test_gae_hand_example():
    r, v = [1.0, 0.0, 1.0], [0.5, 0.5, 0.5, 0.0]
    adv, _ = gae_advantages(r, v, [0, 0, 0], 0.9, 0.8)
    assert adv == pytest.approx(gae_oracle(r, v, [0, 0, 0], 0.9, 0.8), abs=1e-12)
    d2 = 1.0 + 0.9 * 0.0 - 0.5
    d1 = 0.0 + 0.9 * 0.5 - 0.5
    d0 = 1.0 + 0.9 * 0.5 - 0.5
    assert adv[2] == pytest.approx(d2)
    assert adv[0] == pytest.approx(d0 + 0.72 * d1 + 0.72 ** 2 * d2)


def test_gae_random_sequences_match_oracle():
    rng = np.random.default_rng(0)
    for _ in range(100):
        T = int(rng.integers(1, 17))
        r, v = rng.standard_normal(T), rng.standard_normal(T + 1)
        d = (rng.random(T) < 0.2).astype(float)
        gamma, lam = rng.uniform(0.8, 1.0), rng.uniform(0.0, 1.0)
        adv, _ = gae_advantages(r, v, d, gamma, lam)
        assert np.max(np.abs(adv - gae_oracle(r, v, d, gamma, lam))) < 1e-10


def test_gae_length_mismatch():
    with pytest.raises(ValueError, match="length mismatch"):
        gae_advantages([1.0, 2.0], [0.0, 0.0], [0, 0], 0.99, 0.95)


@given(st.lists(st.floats(-100, 100), min_size=2, max_size=64))
def test_normalized_advantages(xs):
    x = np.array(xs)
    if np.std(x) < 1e-3:
        return
    z = normalize(x)
    assert abs(z.mean()) < 1e-10 and abs(z.std() - 1.0) < 1e-6


# ----------------------------------------------------------------------------- PPO loss

def _batch(rng, m, B=5):
    obs = rng.standard_normal((B, m.obs_dim))
    mean, _, _ = m.forward(obs)
    actions = mean + rng.standard_normal((B, 2)) * 0.5
    old_logp = gaussian_log_prob(actions, mean, m.log_std) + rng.normal(0, 0.3, B)
    return obs, actions, old_logp, rng.standard_normal(B), rng.standard_normal(B)


@pytest.mark.parametrize("shared", [False, True])
@pytest.mark.parametrize("seed", range(10))
def test_ppo_loss_gradient(seed, shared):
    rng = np.random.default_rng(seed)
    m = small_model(rng, obs_dim=int(rng.integers(2, 9)), hidden=(8, 8), shared=shared)
    obs, act, old, adv, ret = _batch(rng, m)
    cfg = PPOConfig(ent_coef=0.01)
    _, grad = ppo_loss_and_grad(m, obs, act, old, adv, ret, cfg)
    num = central_diff(lambda: ppo_loss_and_grad(m, obs, act, old, adv, ret, cfg)[0].loss, m.theta)
    assert rel_err(grad, num) < 1e-5


def test_ratio_one_loss_is_minus_mean_advantage():
    rng = np.random.default_rng(3)
    m = small_model(rng)
    obs = rng.standard_normal((6, 5))
    mean, value, _ = m.forward(obs)
    act = mean + 0.3
    logp = gaussian_log_prob(act, mean, m.log_std)
    adv = rng.standard_normal(6)
    info, _ = ppo_loss_and_grad(m, obs, act, logp, adv, value, PPOConfig())
    assert info.policy_loss == pytest.approx(-adv.mean(), abs=1e-14)
    assert info.value_loss == 0.0 and info.approx_kl == pytest.approx(0.0, abs=1e-14)

    before = m.theta.copy()
    buf = RolloutBuffer(obs, act, logp, adv, value)
    ppo_update(buf, m, PPOConfig(learning_rate=0.0, epochs=1), rng)
    assert np.array_equal(m.theta, before)


def test_clipped_samples_have_zero_policy_gradient():
    rng = np.random.default_rng(1)
    m = small_model(rng)
    obs = rng.standard_normal((4, 5))
    mean, value, _ = m.forward(obs)
    act = mean + 0.2
    logp = gaussian_log_prob(act, mean, m.log_std)
    # ratio 2 with positive advantage and ratio 0.5 with negative advantage: both clip
    old = logp - np.log(np.array([2.0, 2.0, 0.5, 0.5]))
    adv = np.array([1.0, 2.0, -1.0, -3.0])
    cfg = replace(PPOConfig(), vf_coef=0.0)
    info, grad = ppo_loss_and_grad(m, obs, act, old, adv, value, cfg)
    assert info.clip_fraction == 1.0
    assert np.all(grad == 0.0)


def test_non_finite_loss_aborts():
    m = small_model(np.random.default_rng(0))
    obs = np.zeros((2, 5))
    with pytest.raises(NonFiniteLoss):
        ppo_loss_and_grad(m, obs, np.zeros((2, 2)), np.zeros(2), np.array([np.nan, 1.0]),
                          np.zeros(2), PPOConfig())


def test_adam_first_step_size():
    theta = np.zeros(3)
    Adam(3, lr=0.1).step(theta, np.array([1.0, -2.0, 0.0]))
    assert theta == pytest.approx([-0.1, 0.1, 0.0], abs=1e-6)


def test_bandit_moves_mean_toward_better_action():
    # one state, reward is highest at action (0.5, -0.5)
    rng = np.random.default_rng(0)
    m = ActorCritic(1, 2, (8, 8))
    m.init_params(rng, -0.5)
    cfg = PPOConfig(learning_rate=3e-3, epochs=4, minibatch_size=32)
    target = np.array([0.5, -0.5])
    obs = np.ones((64, 1))
    opt = Adam(m.size, cfg.learning_rate)
    start = np.linalg.norm(m.act(obs[0])[0] - target)
    for _ in range(200):
        acts, logps = [], []
        for o in obs:
            a, lp, _ = m.act(o, rng)
            acts.append(a)
            logps.append(lp)
        acts = np.array(acts)
        r = -np.sum((acts - target) ** 2, axis=1)
        _, value, _ = m.forward(obs)
        buf = RolloutBuffer(obs, acts, np.array(logps), r - value, r)
        ppo_update(buf, m, cfg, rng, opt)
    end = np.linalg.norm(m.act(obs[0])[0] - target)
    assert end < 0.1 < start


# ----------------------------------------------------------------------------- training loop

@pytest.mark.parametrize("means,expected", [
    ([10, 12, 11, 13], [1, 2, 4]), ([None, 5, 5, 4, 6], [2, 5]), ([], []),
])
def test_checkpoint_rule(means, expected):
    assert checkpoint_updates(means) == expected


def _factory(seed):
    return GraspEnv(EnvConfig(), schedule=CurriculumSchedule(s_end=500), seed=seed)


def test_train_is_deterministic(tmp_path):
    cfg = PPOConfig(total_steps=600, rollout_len=200, epochs=2, eval_window=2)
    a = train(_factory, cfg, tmp_path / "a", seed=5)
    b = train(_factory, cfg, tmp_path / "b", seed=5)
    assert np.array_equal(a.model.theta, b.model.theta)
    assert (tmp_path / "a" / "training_curve.csv").read_bytes() == \
        (tmp_path / "b" / "training_curve.csv").read_bytes()
    assert (tmp_path / "a" / "final.ckpt").read_bytes() == (tmp_path / "b" / "final.ckpt").read_bytes()


def test_train_checkpoints_follow_rule(tmp_path):
    cfg = PPOConfig(total_steps=1500, rollout_len=150, epochs=1, eval_window=3)
    res = train(_factory, cfg, tmp_path, seed=0)
    means = [float(r["mean_return_30"]) if r["mean_return_30"] else None for r in res.history]
    assert res.checkpoints == checkpoint_updates(means)
    assert (tmp_path / "best.ckpt").is_file() and (tmp_path / "final.ckpt").is_file()
    lines = (tmp_path / "training_curve.csv").read_text().splitlines()
    assert lines[0].startswith("update,step,mean_return_30") and len(lines) == 11


def test_train_records_inductive_bias(tmp_path):
    def factory(seed):
        return GraspEnv(EnvConfig(inductive_bias_enabled=False), seed=seed)
    res = train(factory, PPOConfig(total_steps=150, rollout_len=150, epochs=1), tmp_path)
    assert res.model.inductive_bias is False
    assert checkpoint_load(tmp_path / "final.ckpt").inductive_bias is False


def test_train_reports_unwritable_dir(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(OSError, match="file"):
        train(_factory, PPOConfig(total_steps=10), blocker / "sub")


# ----------------------------------------------------------------------------- checkpoints

@pytest.mark.parametrize("shared,ib", [(False, True), (True, False)])
def test_checkpoint_round_trip(tmp_path, shared, ib):
    m = small_model(np.random.default_rng(0), obs_dim=30, hidden=(50, 50), shared=shared)
    m.obs_shift[:] = np.linspace(0, 1, 30)
    m.inductive_bias = ib
    checkpoint_save(tmp_path / "m.ckpt", m)
    n = checkpoint_load(tmp_path / "m.ckpt", obs_dim=30)
    assert np.array_equal(n.theta, m.theta) and np.array_equal(n.obs_shift, m.obs_shift)
    assert n.shared_trunk == shared and n.inductive_bias == ib and n.hidden == (50, 50)


def test_checkpoint_truncated(tmp_path):
    m = small_model(np.random.default_rng(0))
    checkpoint_save(tmp_path / "m.ckpt", m)
    data = (tmp_path / "m.ckpt").read_bytes()
    (tmp_path / "t.ckpt").write_bytes(data[:-9])
    with pytest.raises(CheckpointError, match="truncated"):
        checkpoint_load(tmp_path / "t.ckpt")


def test_checkpoint_wrong_obs_dim(tmp_path):
    checkpoint_save(tmp_path / "m.ckpt", small_model(np.random.default_rng(0)))
    with pytest.raises(CheckpointError, match="expected 30, found 5"):
        checkpoint_load(tmp_path / "m.ckpt", obs_dim=30)


def test_checkpoint_version_mismatch(tmp_path):
    checkpoint_save(tmp_path / "m.ckpt", small_model(np.random.default_rng(0)))
    data = bytearray((tmp_path / "m.ckpt").read_bytes())
    data[8:12] = struct.pack("<I", 99)
    (tmp_path / "v.ckpt").write_bytes(bytes(data))
    with pytest.raises(CheckpointError, match="version 99"):
        checkpoint_load(tmp_path / "v.ckpt")


def test_checkpoint_not_a_checkpoint(tmp_path):
    (tmp_path / "x.ckpt").write_bytes(b"hello world, not a policy")
    with pytest.raises(CheckpointError, match="not a policy checkpoint"):
        checkpoint_load(tmp_path / "x.ckpt")


@settings(max_examples=20, deadline=None)
@given(hidden=st.lists(st.integers(1, 9), min_size=1, max_size=3), obs_dim=st.integers(1, 12))
def test_checkpoint_round_trip_any_shape(tmp_path_factory, hidden, obs_dim):
    path = tmp_path_factory.mktemp("ck") / "m.ckpt"
    m = ActorCritic(obs_dim, 2, tuple(hidden))
    m.init_params(np.random.default_rng(obs_dim))
    checkpoint_save(path, m)
    assert np.array_equal(checkpoint_load(path).theta, m.theta)
