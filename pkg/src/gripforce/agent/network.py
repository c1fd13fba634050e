"""Numpy MLPs with hand-written backprop and the Gaussian actor-critic built on them.

All parameters live in one flat float64 vector so the optimizer, the
checkpoint format and finite-difference checks can treat them uniformly; the
layer weights are views into it.
"""

from __future__ import annotations

import math

import numpy as np

LOG_2PI = math.log(2.0 * math.pi)


def orthogonal(shape: tuple[int, int], gain: float, rng: np.random.Generator) -> np.ndarray:
    a = rng.standard_normal(shape if shape[0] >= shape[1] else shape[::-1])
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if shape[0] < shape[1]:
        q = q.T
    return gain * q[: shape[0], : shape[1]]


class MLP:
    """Fully connected ReLU network with a linear output layer.

    Weights are stored ``(fan_in, fan_out)`` so a batch ``x`` of shape
    ``(B, fan_in)`` maps as ``x @ W + b``.
    """

    def __init__(self, sizes, theta: np.ndarray | None = None):
        self.sizes = [int(s) for s in sizes]
        if len(self.sizes) < 2 or min(self.sizes) < 1:
            raise ValueError(f"bad layer sizes {self.sizes}")
        self.size = sum(a * b + b for a, b in zip(self.sizes[:-1], self.sizes[1:]))
        self.theta = np.zeros(self.size) if theta is None else theta
        if self.theta.shape != (self.size,):
            raise ValueError(f"expected {self.size} parameters, got {self.theta.shape}")
        self.layers = []
        i = 0
        for a, b in zip(self.sizes[:-1], self.sizes[1:]):
            W = self.theta[i:i + a * b].reshape(a, b)
            i += a * b
            bias = self.theta[i:i + b]
            i += b
            self.layers.append((W, bias))

    def init_orthogonal(self, rng: np.random.Generator, hidden_gain=math.sqrt(2), out_gain=1.0):
        for n, (W, b) in enumerate(self.layers):
            gain = out_gain if n == len(self.layers) - 1 else hidden_gain
            W[...] = orthogonal(W.shape, gain, rng)
            b[...] = 0.0

    def forward(self, x: np.ndarray):
        """Returns the output and the activations needed by ``backward``."""
        acts = [x]
        h = x
        last = len(self.layers) - 1
        for n, (W, b) in enumerate(self.layers):
            z = h @ W + b
            h = z if n == last else np.maximum(z, 0.0)
            acts.append(h)
        return h, acts

    def backward(self, acts, grad_out: np.ndarray) -> np.ndarray:
        """Gradient of ``sum(grad_out * output)`` w.r.t. the flat parameters."""
        grad = np.empty(self.size)
        views = MLP(self.sizes, grad).layers
        g = grad_out
        for n in range(len(self.layers) - 1, -1, -1):
            W, _ = self.layers[n]
            gW, gb = views[n]
            h_in = acts[n]
            gW[...] = h_in.T @ g
            gb[...] = g.sum(axis=0)
            if n > 0:
                g = (g @ W.T) * (acts[n] > 0)
        return grad


def gaussian_log_prob(actions: np.ndarray, mean: np.ndarray, log_std: np.ndarray) -> np.ndarray:
    """Log density of a diagonal Gaussian, summed over action dimensions."""
    z = (actions - mean) * np.exp(-log_std)
    return -0.5 * np.sum(z * z, axis=-1) - np.sum(log_std) - 0.5 * mean.shape[-1] * LOG_2PI


def gaussian_entropy(log_std: np.ndarray) -> float:
    return float(np.sum(log_std) + 0.5 * log_std.size * (1.0 + LOG_2PI))


class ActorCritic:
    """Gaussian policy (state-independent log-std) and value function.

    Layout of ``theta``: policy net, log-std, value net.  With ``shared_trunk``
    a single net emits ``act_dim + 1`` outputs (means, then the value) and the
    value segment is empty.  Observations are standardized with the fixed
    ``obs_shift``/``obs_scale`` before entering the nets.  ``inductive_bias``
    records whether the policy was trained with contact-state action scaling,
    so it is evaluated in the same action space.
    """

    def __init__(self, obs_dim: int, act_dim: int = 2, hidden=(50, 50),
                 shared_trunk: bool = False, theta: np.ndarray | None = None,
                 obs_shift: np.ndarray | None = None, obs_scale: np.ndarray | None = None,
                 inductive_bias: bool = True):
        self.inductive_bias = bool(inductive_bias)
        self.obs_dim, self.act_dim = int(obs_dim), int(act_dim)
        self.hidden = tuple(int(h) for h in hidden)
        self.shared_trunk = bool(shared_trunk)
        if self.shared_trunk:
            self.policy_sizes = [self.obs_dim, *self.hidden, self.act_dim + 1]
            self.value_sizes: list[int] = []
        else:
            self.policy_sizes = [self.obs_dim, *self.hidden, self.act_dim]
            self.value_sizes = [self.obs_dim, *self.hidden, 1]
        n_pi = MLP(self.policy_sizes).size
        n_v = MLP(self.value_sizes).size if self.value_sizes else 0
        self.size = n_pi + self.act_dim + n_v
        self.theta = np.zeros(self.size) if theta is None else theta
        if self.theta.shape != (self.size,):
            raise ValueError(f"expected {self.size} parameters, got {self.theta.shape}")
        self._pi_slice = slice(0, n_pi)
        self._std_slice = slice(n_pi, n_pi + self.act_dim)
        self._v_slice = slice(n_pi + self.act_dim, self.size)
        self.pi_net = MLP(self.policy_sizes, self.theta[self._pi_slice])
        self.log_std = self.theta[self._std_slice]
        self.v_net = MLP(self.value_sizes, self.theta[self._v_slice]) if self.value_sizes else None
        self.obs_shift = np.zeros(self.obs_dim) if obs_shift is None else np.asarray(obs_shift, float)
        self.obs_scale = np.ones(self.obs_dim) if obs_scale is None else np.asarray(obs_scale, float)
        if self.obs_shift.shape != (self.obs_dim,) or self.obs_scale.shape != (self.obs_dim,):
            raise ValueError("observation standardization must match obs_dim")

    def init_params(self, rng: np.random.Generator, log_std_init: float = 0.0):
        if self.shared_trunk:
            self.pi_net.init_orthogonal(rng, out_gain=0.01)
        else:
            self.pi_net.init_orthogonal(rng, out_gain=0.01)
            self.v_net.init_orthogonal(rng, out_gain=1.0)
        self.log_std[...] = log_std_init

    def copy(self) -> "ActorCritic":
        return ActorCritic(self.obs_dim, self.act_dim, self.hidden, self.shared_trunk,
                           self.theta.copy(), self.obs_shift.copy(), self.obs_scale.copy(),
                           self.inductive_bias)

    def _input(self, obs: np.ndarray) -> np.ndarray:
        obs = np.atleast_2d(np.asarray(obs, dtype=float))
        if obs.shape[1] != self.obs_dim:
            raise ValueError(f"observation has {obs.shape[1]} values, expected {self.obs_dim}")
        return (obs - self.obs_shift) / self.obs_scale

    def forward(self, obs: np.ndarray):
        """Means ``(B, act_dim)``, values ``(B,)`` and the caches for ``backward``."""
        x = self._input(obs)
        out, pi_acts = self.pi_net.forward(x)
        if self.shared_trunk:
            return out[:, : self.act_dim], out[:, self.act_dim], (pi_acts, None)
        v, v_acts = self.v_net.forward(x)
        return out, v[:, 0], (pi_acts, v_acts)

    def backward(self, cache, g_mean: np.ndarray, g_value: np.ndarray,
                 g_log_std: np.ndarray) -> np.ndarray:
        """Flat gradient given upstream gradients on means, values and log-std."""
        pi_acts, v_acts = cache
        grad = np.zeros(self.size)
        if self.shared_trunk:
            g_out = np.concatenate([g_mean, g_value[:, None]], axis=1)
            grad[self._pi_slice] = self.pi_net.backward(pi_acts, g_out)
        else:
            grad[self._pi_slice] = self.pi_net.backward(pi_acts, g_mean)
            grad[self._v_slice] = self.v_net.backward(v_acts, g_value[:, None])
        grad[self._std_slice] = g_log_std
        return grad

    def policy_forward(self, obs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Action means for ``obs`` and the (state-independent) log-std."""
        mean, _, _ = self.forward(obs)
        return mean, self.log_std.copy()

    def act(self, obs: np.ndarray, rng: np.random.Generator | None = None):
        """Single-observation action, its log-prob and the value estimate.

        Without ``rng`` the mean action is returned (deterministic evaluation).
        """
        x = (np.asarray(obs, dtype=float) - self.obs_shift) / self.obs_scale
        out, _ = self.pi_net.forward(x)
        mean = out[: self.act_dim]
        if self.shared_trunk:
            value = out[self.act_dim]
        else:
            value = self.v_net.forward(x)[0][0]
        if rng is None:
            return mean, 0.0, float(value)
        action = mean + np.exp(self.log_std) * rng.standard_normal(self.act_dim)
        logp = gaussian_log_prob(action, mean, self.log_std)
        return action, float(logp), float(value)
