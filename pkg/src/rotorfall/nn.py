"""Small dense-network engine: forward pass, hand-written reverse-mode
gradients, a tanh-squashed Gaussian head, and Adam.

Everything operates on float64 numpy arrays with batch-first shapes
(batch, features). Networks are plain parameter containers; gradient
computation is pure given a cached forward pass, and optimizers mutate the
parameter arrays in place.
"""

from __future__ import annotations

import logging
import math

import numpy as np

log = logging.getLogger(__name__)

LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0
SQUASH_EPS = 1e-6
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


def _as_batch(x: np.ndarray) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        return x[None, :], True
    if x.ndim == 2:
        return x, False
    raise ValueError(f"expected 1-D or 2-D input, got shape {x.shape}")


class Mlp:
    """Fully connected network, ReLU on hidden layers, identity output
    (optionally ReLU on the output too, for use as a feature trunk)."""

    def __init__(
        self,
        layer_sizes: list[int],
        rng: np.random.Generator | None = None,
        relu_output: bool = False,
    ):
        if len(layer_sizes) < 2:
            raise ValueError("need at least input and output sizes")
        self.layer_sizes = list(layer_sizes)
        self.relu_output = relu_output
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        rng = rng or np.random.default_rng()
        for n_in, n_out in zip(layer_sizes[:-1], layer_sizes[1:]):
            bound = 1.0 / math.sqrt(n_in)
            self.weights.append(rng.uniform(-bound, bound, size=(n_in, n_out)))
            self.biases.append(rng.uniform(-bound, bound, size=n_out))

    @property
    def in_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def out_dim(self) -> int:
        return self.layer_sizes[-1]

    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def copy(self) -> "Mlp":
        other = Mlp.__new__(Mlp)
        other.layer_sizes = list(self.layer_sizes)
        other.relu_output = self.relu_output
        other.weights = [w.copy() for w in self.weights]
        other.biases = [b.copy() for b in self.biases]
        return other

    def copy_from(self, other: "Mlp"):
        for dst, src in zip(self.params(), other.params()):
            dst[...] = src

    def forward(self, x: np.ndarray) -> np.ndarray:
        y, _ = self.forward_cached(x)
        return y

    def forward_cached(self, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
        """Returns the output and the per-layer inputs needed for backward."""
        x, squeeze = _as_batch(x)
        if x.shape[1] != self.in_dim:
            raise ValueError(f"input has {x.shape[1]} features, expected {self.in_dim}")
        cache = [x]
        a = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            a = a @ w + b
            if i < last or self.relu_output:
                a = np.maximum(a, 0.0)
            cache.append(a)
        if squeeze:
            return a[0], cache
        return a, cache

    def backward(
        self,
        cache: list[np.ndarray],
        grad_out: np.ndarray,
        with_param_grads: bool = True,
    ) -> tuple[list[np.ndarray] | None, np.ndarray]:
        """Backpropagate grad_out through the cached forward pass.

        Returns (param_grads, grad_input) where param_grads interleaves
        (dW, db) in the same order as params(). Set with_param_grads=False
        when only the input gradient is needed.
        """
        delta, squeeze = _as_batch(grad_out)
        if delta.shape[1] != self.out_dim:
            raise ValueError(f"grad has {delta.shape[1]} features, expected {self.out_dim}")
        grads: list[np.ndarray | None] = [None] * (2 * len(self.weights)) if with_param_grads else None
        last = len(self.weights) - 1
        for i in range(last, -1, -1):
            if i < last or self.relu_output:
                delta = delta * (cache[i + 1] > 0.0)
            if with_param_grads:
                grads[2 * i] = cache[i].T @ delta
                grads[2 * i + 1] = delta.sum(axis=0)
            delta = delta @ self.weights[i].T
        if squeeze:
            delta = delta[0]
        return grads, delta


class GaussianHead:
    """Mean and log-std linear heads over a feature vector, producing a
    tanh-squashed Gaussian action with its log density."""

    def __init__(self, in_dim: int, act_dim: int, rng: np.random.Generator | None = None):
        rng = rng or np.random.default_rng()
        bound = 1.0 / math.sqrt(in_dim)
        self.in_dim = in_dim
        self.act_dim = act_dim
        self.w_mean = rng.uniform(-bound, bound, size=(in_dim, act_dim))
        self.b_mean = rng.uniform(-bound, bound, size=act_dim)
        self.w_log_std = rng.uniform(-bound, bound, size=(in_dim, act_dim))
        self.b_log_std = rng.uniform(-bound, bound, size=act_dim)

    def params(self) -> list[np.ndarray]:
        return [self.w_mean, self.b_mean, self.w_log_std, self.b_log_std]

    def copy(self) -> "GaussianHead":
        other = GaussianHead.__new__(GaussianHead)
        other.in_dim = self.in_dim
        other.act_dim = self.act_dim
        other.w_mean = self.w_mean.copy()
        other.b_mean = self.b_mean.copy()
        other.w_log_std = self.w_log_std.copy()
        other.b_log_std = self.b_log_std.copy()
        return other

    def mean_log_std(self, features: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        h, squeeze = _as_batch(features)
        mean = h @ self.w_mean + self.b_mean
        log_std = np.clip(h @ self.w_log_std + self.b_log_std, LOG_STD_MIN, LOG_STD_MAX)
        if squeeze:
            return mean[0], log_std[0]
        return mean, log_std

    def sample(self, features: np.ndarray, noise: np.ndarray):
        """Reparameterized draw: action = tanh(mean + std * noise).

        Returns (action, log_prob, cache); log_prob sums the per-dimension
        Gaussian log density with the tanh change-of-variables correction.
        """
        h, squeeze = _as_batch(features)
        xi = np.asarray(noise, dtype=float).reshape(h.shape[0], self.act_dim)
        mean = h @ self.w_mean + self.b_mean
        log_std_raw = h @ self.w_log_std + self.b_log_std
        log_std = np.clip(log_std_raw, LOG_STD_MIN, LOG_STD_MAX)
        std = np.exp(log_std)
        u = mean + std * xi
        action = np.tanh(u)
        one_m_a2 = 1.0 - action * action
        log_prob = (
            -0.5 * xi * xi - log_std - _LOG_SQRT_2PI - np.log(one_m_a2 + SQUASH_EPS)
        ).sum(axis=1)
        cache = {
            "h": h,
            "xi": xi,
            "std": std,
            "action": action,
            "one_m_a2": one_m_a2,
            "clip_mask": (log_std_raw > LOG_STD_MIN) & (log_std_raw < LOG_STD_MAX),
        }
        if squeeze:
            return action[0], float(log_prob[0]), cache
        return action, log_prob, cache

    def backward(self, cache: dict, grad_action: np.ndarray, grad_log_prob: np.ndarray):
        """Gradients of (action, log_prob) w.r.t. head parameters and features.

        grad_action is (batch, act_dim); grad_log_prob is (batch,). Returns
        (param_grads, grad_features) with param_grads ordered like params().
        """
        h = cache["h"]
        xi = cache["xi"]
        std = cache["std"]
        a = cache["action"]
        one_m_a2 = cache["one_m_a2"]
        glp = np.asarray(grad_log_prob, dtype=float).reshape(-1, 1)
        ga = np.asarray(grad_action, dtype=float).reshape(h.shape[0], self.act_dim)

        # d log_prob / d u through the squash correction; Gaussian term has no
        # u-dependence under the reparameterization (xi held fixed)
        dlp_du = 2.0 * a * one_m_a2 / (one_m_a2 + SQUASH_EPS)
        g_u = ga * one_m_a2 + glp * dlp_du
        g_mean = g_u
        g_log_std = (g_u * std * xi - glp) * cache["clip_mask"]

        grads = [
            h.T @ g_mean,
            g_mean.sum(axis=0),
            h.T @ g_log_std,
            g_log_std.sum(axis=0),
        ]
        grad_h = g_mean @ self.w_mean.T + g_log_std @ self.w_log_std.T
        return grads, grad_h


class GaussianPolicy:
    """ReLU trunk feeding a squashed-Gaussian head."""

    def __init__(
        self,
        obs_dim: int,
        act_dim: int,
        hidden: list[int],
        rng: np.random.Generator | None = None,
    ):
        rng = rng or np.random.default_rng()
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        self.trunk = Mlp([obs_dim, *hidden], rng=rng, relu_output=True)
        self.head = GaussianHead(hidden[-1], act_dim, rng=rng)

    def params(self) -> list[np.ndarray]:
        return self.trunk.params() + self.head.params()

    def copy(self) -> "GaussianPolicy":
        other = GaussianPolicy.__new__(GaussianPolicy)
        other.obs_dim = self.obs_dim
        other.act_dim = self.act_dim
        other.trunk = self.trunk.copy()
        other.head = self.head.copy()
        return other

    def sample(self, obs: np.ndarray, noise: np.ndarray):
        """Returns (action, log_prob, cache) for a reparameterized draw."""
        obs_b, squeeze = _as_batch(obs)
        features, trunk_cache = self.trunk.forward_cached(obs_b)
        action, log_prob, head_cache = self.head.sample(features, noise)
        cache = {"trunk": trunk_cache, "head": head_cache}
        if squeeze:
            return action[0], float(np.asarray(log_prob).reshape(-1)[0]), cache
        return action, log_prob, cache

    def backward(self, cache: dict, grad_action: np.ndarray, grad_log_prob: np.ndarray):
        head_grads, grad_features = self.head.backward(cache["head"], grad_action, grad_log_prob)
        trunk_grads, grad_obs = self.trunk.backward(cache["trunk"], grad_features)
        return trunk_grads + head_grads, grad_obs

    def deterministic(self, obs: np.ndarray) -> np.ndarray:
        """Evaluation action: tanh of the mean, no sampling."""
        features = self.trunk.forward(obs)
        mean, _ = self.head.mean_log_std(features)
        return np.tanh(mean)

    def log_prob(self, obs: np.ndarray, noise: np.ndarray):
        _, log_prob, _ = self.sample(obs, noise)
        return log_prob


class Adam:
    """Bias-corrected Adam over a fixed list of parameter arrays, updated
    in place. Non-finite gradients skip the update and are reported."""

    def __init__(self, params: list[np.ndarray], lr=3e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.skipped = 0

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> bool:
        if len(params) != len(self.m) or len(grads) != len(self.m):
            raise ValueError("parameter/gradient count mismatch with optimizer state")
        for g in grads:
            if not np.all(np.isfinite(g)):
                self.skipped += 1
                log.warning("non-finite gradient; Adam update skipped")
                return False
        self.step_count += 1
        b1c = 1.0 - self.beta1**self.step_count
        b2c = 1.0 - self.beta2**self.step_count
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)
        return True

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {"step_count": np.array(self.step_count)}
        for i, (m, v) in enumerate(zip(self.m, self.v)):
            out[f"m{i}"] = m
            out[f"v{i}"] = v
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray]):
        self.step_count = int(arrays["step_count"])
        for i in range(len(self.m)):
            self.m[i][...] = arrays[f"m{i}"]
            self.v[i][...] = arrays[f"v{i}"]
