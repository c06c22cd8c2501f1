"""Soft actor-critic learner: FIFO replay buffer, twin Q-networks with
polyak-averaged targets, tanh-squashed Gaussian actor, and automatic
temperature tuning toward a target entropy.

One call to update() performs exactly one Adam step on each critic, the
actor and the temperature, then one polyak step on both targets. All
randomness (batch indices, action noise, exploration) flows through the
agent's own generator, so a seed fully determines the parameter trajectory.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass

import numpy as np

from .nn import Adam, GaussianPolicy, Mlp

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class SacConfig:
    gamma: float = 0.99
    rho: float = 0.05  # polyak step toward the live critics
    batch_size: int = 256
    # hot critics: action advantages near the episode start are a fraction
    # of a reward unit on top of a ~1e3 value scale, so the critics must fit
    # tightly before the actor can steer by them
    lr_q: float = 1e-3
    lr_pi: float = 3e-4
    # slow temperature decay and a warm entropy setpoint: exploration must
    # outlive the long crash-only phase of fault-recovery training, and the
    # usual -dim(action) target leaves per-rotor noise too cold to discover
    # weight-bearing flight
    lr_alpha: float = 1e-4
    target_entropy: float = -2.0
    epsilon_explore: float = 0.001
    # long uniform-random prefix: the random PWM walk is what first
    # demonstrates weight-bearing rotor configurations in the buffer
    warmup_steps: int = 25_000
    buffer_capacity: int = 1_000_000
    hidden_width: int = 64
    init_alpha: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must be in (0,1)")
        if not 0.0 < self.rho <= 1.0:
            raise ValueError("rho must be in (0,1]")
        if self.batch_size <= 0 or self.batch_size > self.buffer_capacity:
            raise ValueError("need 0 < batch_size <= buffer_capacity")
        if not 0.0 <= self.epsilon_explore <= 1.0:
            raise ValueError("epsilon_explore must be in [0,1]")
        if self.init_alpha <= 0:
            raise ValueError("init_alpha must be positive")
        if self.hidden_width <= 0 or self.warmup_steps < 0:
            raise ValueError("hidden_width must be positive, warmup_steps >= 0")


class ReplayBuffer:
    """Fixed-capacity ring of transitions; push evicts the oldest entry once
    full, sample draws uniformly with replacement."""

    def __init__(self, capacity: int, obs_dim: int, act_dim: int):
        if capacity <= 0:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.obs = np.zeros((capacity, obs_dim))
        self.act = np.zeros((capacity, act_dim))
        self.rew = np.zeros(capacity)
        self.next_obs = np.zeros((capacity, obs_dim))
        self.done = np.zeros(capacity)
        self.size = 0
        self.cursor = 0

    def __len__(self) -> int:
        return self.size

    def push(self, obs, action, rew, next_obs, done):
        i = self.cursor
        self.obs[i] = obs
        self.act[i] = action
        self.rew[i] = rew
        self.next_obs[i] = next_obs
        self.done[i] = done
        self.cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch_size: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
        if self.size < batch_size:
            raise ValueError(f"buffer holds {self.size} transitions, need {batch_size}")
        idx = rng.integers(0, self.size, size=batch_size)
        return {
            "obs": self.obs[idx],
            "act": self.act[idx],
            "rew": self.rew[idx],
            "next_obs": self.next_obs[idx],
            "done": self.done[idx],
        }


class SacAgent:
    """Actor, twin critics, twin targets, temperature and their optimizers."""

    def __init__(
        self,
        obs_dim: int,
        act_dim: int,
        cfg: SacConfig = SacConfig(),
        seed: int | np.random.SeedSequence = 0,
        obs_scale: np.ndarray | None = None,
    ):
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        self.cfg = cfg
        self.rng = np.random.default_rng(seed)
        self.obs_scale = (
            np.ones(obs_dim) if obs_scale is None else np.asarray(obs_scale, dtype=float)
        )
        if self.obs_scale.shape != (obs_dim,):
            raise ValueError("obs_scale must have one entry per observation feature")

        w = cfg.hidden_width
        self.actor = GaussianPolicy(obs_dim, act_dim, [w, w], rng=self.rng)
        self.q1 = Mlp([obs_dim + act_dim, w, w, w, 1], rng=self.rng)
        self.q2 = Mlp([obs_dim + act_dim, w, w, w, 1], rng=self.rng)
        self.q1_target = self.q1.copy()
        self.q2_target = self.q2.copy()
        self.log_alpha = np.array(np.log(cfg.init_alpha))

        self.opt_pi = Adam(self.actor.params(), lr=cfg.lr_pi)
        self.opt_q1 = Adam(self.q1.params(), lr=cfg.lr_q)
        self.opt_q2 = Adam(self.q2.params(), lr=cfg.lr_q)
        self.opt_alpha = Adam([self.log_alpha], lr=cfg.lr_alpha)

    @property
    def alpha(self) -> float:
        return float(np.exp(self.log_alpha))

    def _scale(self, obs: np.ndarray) -> np.ndarray:
        return np.asarray(obs, dtype=float) * self.obs_scale

    def random_action(self) -> np.ndarray:
        return self.rng.uniform(-1.0, 1.0, size=self.act_dim)

    def act(self, obs: np.ndarray, deterministic: bool = False) -> np.ndarray:
        obs = np.asarray(obs, dtype=float).reshape(-1)
        if obs.shape != (self.obs_dim,):
            raise ValueError(f"observation must have {self.obs_dim} entries")
        if deterministic:
            return self.actor.deterministic(self._scale(obs))
        if self.rng.random() < self.cfg.epsilon_explore:
            return self.random_action()
        noise = self.rng.standard_normal(self.act_dim)
        action, _, _ = self.actor.sample(self._scale(obs), noise)
        return action

    def compute_target(self, batch: dict[str, np.ndarray]) -> np.ndarray:
        """Bootstrap values: r + gamma*(1-d)*(min target Q - alpha*log pi),
        with the next action freshly sampled from the current policy."""
        next_scaled = self._scale(batch["next_obs"])
        noise = self.rng.standard_normal((next_scaled.shape[0], self.act_dim))
        next_act, next_logp, _ = self.actor.sample(next_scaled, noise)
        x = np.concatenate([next_scaled, next_act], axis=1)
        q1t = self.q1_target.forward(x)[:, 0]
        q2t = self.q2_target.forward(x)[:, 0]
        soft_value = np.minimum(q1t, q2t) - self.alpha * next_logp
        return batch["rew"] + self.cfg.gamma * (1.0 - batch["done"]) * soft_value

    def critic_update(self, batch: dict[str, np.ndarray]) -> tuple[float, float]:
        """One Adam step on each critic toward the shared bootstrap target;
        returns the two mean-squared losses."""
        y = self.compute_target(batch)
        x = np.concatenate([self._scale(batch["obs"]), batch["act"]], axis=1)
        n = x.shape[0]
        losses = []
        for net, opt in ((self.q1, self.opt_q1), (self.q2, self.opt_q2)):
            q, cache = net.forward_cached(x)
            diff = q[:, 0] - y
            loss = float(diff @ diff) / n
            if not np.isfinite(loss):
                log.warning("non-finite critic loss %r; update aborted", loss)
                losses.append(loss)
                continue
            grads, _ = net.backward(cache, (2.0 / n) * diff[:, None])
            opt.step(net.params(), grads)
            losses.append(loss)
        return losses[0], losses[1]

    def actor_update(self, batch: dict[str, np.ndarray]) -> tuple[float, np.ndarray]:
        """One Adam step ascending min-Q minus the entropy-weighted log
        density, with fresh reparameterized actions; returns (loss, log_probs)."""
        obs_scaled = self._scale(batch["obs"])
        n = obs_scaled.shape[0]
        noise = self.rng.standard_normal((n, self.act_dim))
        action, log_prob, cache = self.actor.sample(obs_scaled, noise)
        x = np.concatenate([obs_scaled, action], axis=1)
        q1, c1 = self.q1.forward_cached(x)
        q2, c2 = self.q2.forward_cached(x)
        qmin = np.minimum(q1, q2)[:, 0]
        alpha = self.alpha
        loss = float(np.mean(alpha * log_prob - qmin))
        if not np.isfinite(loss):
            log.warning("non-finite actor loss %r; update aborted", loss)
            return loss, log_prob

        take_q1 = (q1 <= q2).astype(float)
        _, gx1 = self.q1.backward(c1, -take_q1 / n, with_param_grads=False)
        _, gx2 = self.q2.backward(c2, -(1.0 - take_q1) / n, with_param_grads=False)
        grad_action = (gx1 + gx2)[:, self.obs_dim :]
        grad_log_prob = np.full(n, alpha / n)
        grads, _ = self.actor.backward(cache, grad_action, grad_log_prob)
        self.opt_pi.step(self.actor.params(), grads)
        return loss, log_prob

    def alpha_update(
        self,
        batch: dict[str, np.ndarray] | None = None,
        log_probs: np.ndarray | None = None,
    ) -> float:
        """One Adam step on the temperature toward the entropy target.

        Uses the provided log densities (e.g. from actor_update), else
        samples fresh actions for the batch.
        """
        if log_probs is None:
            if batch is None:
                raise ValueError("need a batch or precomputed log_probs")
            scaled = self._scale(batch["obs"])
            noise = self.rng.standard_normal((scaled.shape[0], self.act_dim))
            _, log_probs, _ = self.actor.sample(scaled, noise)
        grad = -self.alpha * float(np.mean(log_probs) + self.cfg.target_entropy)
        self.opt_alpha.step([self.log_alpha], [np.asarray(grad)])
        return self.alpha

    def polyak_update(self):
        rho = self.cfg.rho
        for target, live in (
            (self.q1_target, self.q1),
            (self.q2_target, self.q2),
        ):
            for t, p in zip(target.params(), live.params()):
                t *= 1.0 - rho
                t += rho * p

    def update(self, buffer: ReplayBuffer) -> dict[str, float]:
        """One full learner iteration on a fresh uniform batch."""
        batch = buffer.sample(self.cfg.batch_size, self.rng)
        q1_loss, q2_loss = self.critic_update(batch)
        pi_loss, log_probs = self.actor_update(batch)
        alpha = self.alpha_update(log_probs=log_probs)
        self.polyak_update()
        return {
            "q1_loss": q1_loss,
            "q2_loss": q2_loss,
            "pi_loss": pi_loss,
            "alpha": alpha,
            "entropy": -float(np.mean(log_probs)),
        }

    # ---- checkpointing ----

    def save(self, path, extra_meta: dict | None = None):
        """Write a versioned npz checkpoint: parameters, optimizer moments,
        temperature, RNG state and config."""
        arrays: dict[str, np.ndarray] = {"log_alpha": self.log_alpha}
        for name, net in (
            ("actor", self.actor),
            ("q1", self.q1),
            ("q2", self.q2),
            ("t1", self.q1_target),
            ("t2", self.q2_target),
        ):
            for i, p in enumerate(net.params()):
                arrays[f"{name}.p{i}"] = p
        for name, opt in (
            ("opt_pi", self.opt_pi),
            ("opt_q1", self.opt_q1),
            ("opt_q2", self.opt_q2),
            ("opt_alpha", self.opt_alpha),
        ):
            for key, arr in opt.state_arrays().items():
                arrays[f"{name}.{key}"] = arr
        arrays["obs_scale"] = self.obs_scale
        meta = {
            "version": CHECKPOINT_VERSION,
            "obs_dim": self.obs_dim,
            "act_dim": self.act_dim,
            "config": asdict(self.cfg),
            "rng_state": self.rng.bit_generator.state,
            "extra": extra_meta or {},
        }
        arrays["meta_json"] = np.array(json.dumps(meta))
        np.savez(path, **arrays)

    @classmethod
    def load(cls, path) -> "SacAgent":
        with np.load(path, allow_pickle=False) as data:
            meta = json.loads(str(data["meta_json"]))
            if meta["version"] != CHECKPOINT_VERSION:
                raise ValueError(f"unsupported checkpoint version {meta['version']}")
            cfg = SacConfig(**meta["config"])
            agent = cls(
                meta["obs_dim"],
                meta["act_dim"],
                cfg,
                seed=0,
                obs_scale=np.asarray(data["obs_scale"]),
            )
            for name, net in (
                ("actor", agent.actor),
                ("q1", agent.q1),
                ("q2", agent.q2),
                ("t1", agent.q1_target),
                ("t2", agent.q2_target),
            ):
                for i, p in enumerate(net.params()):
                    p[...] = data[f"{name}.p{i}"]
            agent.log_alpha[...] = data["log_alpha"]
            for name, opt in (
                ("opt_pi", agent.opt_pi),
                ("opt_q1", agent.opt_q1),
                ("opt_q2", agent.opt_q2),
                ("opt_alpha", agent.opt_alpha),
            ):
                prefix = f"{name}."
                opt.load_state_arrays(
                    {k[len(prefix) :]: data[k] for k in data.files if k.startswith(prefix)}
                )
            agent.rng.bit_generator.state = meta["rng_state"]
            agent.loaded_meta = meta["extra"]
        return agent
