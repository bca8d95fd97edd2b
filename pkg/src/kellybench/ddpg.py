"""
DDPG agent with a dense time-series encoder
===========================================

Deterministic actor-critic over continuous portfolio weights.  Both
networks own an encoder that flattens the 228-value observation,
projects it through a linear layer, and refines it with two residual
blocks (ReLU + layer norm).  The actor maps the latent to a weight via
a final linear layer and a sigmoid scaled by ``max_weight``; the critic
concatenates the latent with the action and scores it with a small ReLU
stack.  Exploration uses Ornstein-Uhlenbeck noise; training replays
uniformly sampled mini-batches of n-step transitions and soft-updates
target copies of both networks with blend rate tau.
"""

from __future__ import annotations

import copy
import math
from collections import deque
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import nn
from .env import Observation


@dataclass
class DdpgConfig:
    gamma_td: float = 0.99
    tau: float = 0.005
    actor_lr: float = 1e-4
    critic_lr: float = 1e-3
    batch_size: int = 64
    capacity: int = 100_000
    n_step: int = 3
    episodes: int = 50
    seed: int = 0
    max_weight: float = 1.0
    latent_width: int = 64
    critic_hidden: int = 64
    ou_theta: float = 0.15
    ou_sigma: float = 0.2

    def __post_init__(self) -> None:
        if not 0.0 < self.tau <= 1.0:
            raise ValueError("tau must be in (0, 1]")
        if self.n_step < 1:
            raise ValueError("n_step must be >= 1")
        if not 0.0 <= self.gamma_td <= 1.0:
            raise ValueError("gamma_td must be in [0, 1]")
        if self.batch_size < 1 or self.capacity < self.batch_size:
            raise ValueError("need capacity >= batch_size >= 1")


class TideEncoder(nn.Sequential):
    """Flatten -> projection linear -> two residual blocks -> latent."""

    def __init__(self, in_dim: int, width: int, rng: np.random.Generator):
        super().__init__([
            nn.Linear(in_dim, width, rng, init="xavier"),
            nn.ResidualBlock(width, rng),
            nn.ResidualBlock(width, rng),
        ])
        self.in_dim = in_dim
        self.width = width


class Actor:
    """Deterministic policy: encoder latent -> linear -> sigmoid * max_weight."""

    def __init__(self, obs_dim: int, width: int, max_weight: float,
                 rng: np.random.Generator):
        self.encoder = TideEncoder(obs_dim, width, rng)
        self.head = nn.Sequential([nn.Linear(width, 1, rng, init="xavier"),
                                   nn.Sigmoid()])
        self.max_weight = max_weight

    def forward(self, obs: np.ndarray) -> np.ndarray:
        return self.max_weight * self.head.forward(self.encoder.forward(obs))

    def backward(self, grad_action: np.ndarray) -> np.ndarray:
        grad_latent = self.head.backward(grad_action * self.max_weight)
        return self.encoder.backward(grad_latent)

    def parameters(self) -> list[nn.Parameter]:
        return self.encoder.parameters() + self.head.parameters()

    def named_parameters(self, prefix: str = "") -> list[tuple[str, nn.Parameter]]:
        return (self.encoder.named_parameters(prefix + "encoder.")
                + self.head.named_parameters(prefix + "head."))


class Critic:
    """Q(s, a): concat(encoder latent, action) -> two linear+ReLU -> scalar."""

    def __init__(self, obs_dim: int, width: int, hidden: int,
                 rng: np.random.Generator):
        self.encoder = TideEncoder(obs_dim, width, rng)
        self.head = nn.Sequential([
            nn.Linear(width + 1, hidden, rng, init="he"),
            nn.ReLU(),
            nn.Linear(hidden, hidden, rng, init="he"),
            nn.ReLU(),
            nn.Linear(hidden, 1, rng, init="xavier"),
        ])
        self.width = width

    def forward(self, obs: np.ndarray, action: np.ndarray) -> np.ndarray:
        latent = self.encoder.forward(obs)
        return self.head.forward(np.concatenate([latent, action], axis=1))

    def backward(self, grad_q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        grad_concat = self.head.backward(grad_q)
        grad_obs = self.encoder.backward(grad_concat[:, : self.width])
        return grad_obs, grad_concat[:, self.width:]

    def parameters(self) -> list[nn.Parameter]:
        return self.encoder.parameters() + self.head.parameters()

    def named_parameters(self, prefix: str = "") -> list[tuple[str, nn.Parameter]]:
        return (self.encoder.named_parameters(prefix + "encoder.")
                + self.head.named_parameters(prefix + "head."))


class OUNoise:
    """Mean-reverting exploration noise x <- x + theta*(mu - x) + sigma*N(0,1)."""

    def __init__(self, theta: float = 0.15, sigma: float = 0.2, mu: float = 0.0,
                 seed: int | np.random.SeedSequence = 0):
        self.theta = theta
        self.sigma = sigma
        self.mu = mu
        self._rng = np.random.default_rng(seed)
        self.state = mu

    def reset(self) -> None:
        self.state = self.mu

    def step(self) -> float:
        self.state = (self.state + self.theta * (self.mu - self.state)
                      + self.sigma * self._rng.standard_normal())
        return self.state


@dataclass
class Transition:
    state: np.ndarray
    action: float
    reward: float          # n-step aggregated
    next_state: np.ndarray  # state n steps ahead (zeros at terminal)
    done: bool
    steps: int             # rewards aggregated (< n_step only at episode end)


class ReplayBuffer:
    """FIFO ring buffer of pre-aggregated n-step transitions.

    push() receives raw 1-step transitions; a decision is emitted once its
    trailing ``n_step`` rewards are known, aggregated as
    sum_i gamma^i * r_(t+i), with the state n steps ahead as next_state.
    At episode end the pending tail is flushed with truncated sums and
    done=True.
    """

    def __init__(self, capacity: int, n_step: int, gamma_td: float, obs_dim: int):
        self.capacity = capacity
        self.n_step = n_step
        self.gamma_td = gamma_td
        self._obs_dim = obs_dim
        self._storage: list[Transition] = []
        self._cursor = 0
        self._pending: deque[tuple[np.ndarray, float, list[float]]] = deque()

    def __len__(self) -> int:
        return len(self._storage)

    def _store(self, transition: Transition) -> None:
        if len(self._storage) < self.capacity:
            self._storage.append(transition)
        else:
            self._storage[self._cursor] = transition
            self._cursor = (self._cursor + 1) % self.capacity

    def _emit(self, pending, next_state: np.ndarray | None, done: bool) -> None:
        state, action, rewards = pending
        agg = 0.0
        for i, r in enumerate(rewards):
            agg += (self.gamma_td ** i) * r
        self._store(Transition(
            state=state,
            action=action,
            reward=agg,
            next_state=np.zeros(self._obs_dim) if next_state is None else next_state,
            done=done,
            steps=len(rewards),
        ))

    def push(self, state: np.ndarray, action: float, reward: float,
             next_state: np.ndarray | None, done: bool) -> None:
        self._pending.append((state, action, []))
        for entry in self._pending:
            entry[2].append(reward)
        if len(self._pending) == self.n_step:
            self._emit(self._pending.popleft(), next_state, done)
        if done:
            while self._pending:
                self._emit(self._pending.popleft(), next_state, True)

    def sample(self, batch_size: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
        """Uniform sample without replacement within the batch."""
        if len(self._storage) < batch_size:
            raise ValueError(f"buffer holds {len(self._storage)} transitions, "
                             f"need {batch_size}")
        idx = rng.choice(len(self._storage), size=batch_size, replace=False)
        picked = [self._storage[i] for i in idx]
        return {
            "state": np.stack([t.state for t in picked]),
            "action": np.array([[t.action] for t in picked]),
            "reward": np.array([t.reward for t in picked]),
            "next_state": np.stack([t.next_state for t in picked]),
            "done": np.array([t.done for t in picked]),
            "steps": np.array([t.steps for t in picked]),
        }


def soft_update(online_params: list[nn.Parameter], target_params: list[nn.Parameter],
                tau: float) -> None:
    """target <- tau * online + (1 - tau) * target, elementwise."""
    if len(online_params) != len(target_params):
        raise ValueError("parameter lists differ in length")
    for online, target in zip(online_params, target_params):
        if online.value.shape != target.value.shape:
            raise ValueError(f"shape mismatch {online.value.shape} "
                             f"vs {target.value.shape}")
        target.value[...] = tau * online.value + (1.0 - tau) * target.value


class DdpgAgent:
    """Actor-critic pair with target copies, OU noise, and an n-step buffer."""

    def __init__(self, config: DdpgConfig, obs_dim: int = 228):
        self.config = config
        self.obs_dim = obs_dim
        ss = np.random.SeedSequence(config.seed)
        init_ss, noise_ss, sample_ss = ss.spawn(3)
        init_rng = np.random.default_rng(init_ss)
        self.actor = Actor(obs_dim, config.latent_width, config.max_weight, init_rng)
        self.critic = Critic(obs_dim, config.latent_width, config.critic_hidden, init_rng)
        self.target_actor = copy.deepcopy(self.actor)
        self.target_critic = copy.deepcopy(self.critic)
        self.actor_opt = nn.Adam(self.actor.parameters(), lr=config.actor_lr)
        self.critic_opt = nn.Adam(self.critic.parameters(), lr=config.critic_lr)
        # noise magnitude scales with the action range
        self.noise = OUNoise(theta=config.ou_theta,
                             sigma=config.ou_sigma * config.max_weight,
                             seed=noise_ss)
        self.buffer = ReplayBuffer(config.capacity, config.n_step,
                                   config.gamma_td, obs_dim)
        self._sample_rng = np.random.default_rng(sample_ss)

    def act(self, obs_flat: np.ndarray, explore: bool = False) -> float:
        action = float(self.actor.forward(obs_flat[None, :])[0, 0])
        if explore:
            action += self.noise.step()
        return min(max(action, 0.0), self.config.max_weight)

    def critic_update(self, batch: dict[str, np.ndarray]) -> float:
        """One MSE step toward y = r + gamma^steps * Q_target(s', pi_target(s'))."""
        gamma_pow = self.config.gamma_td ** batch["steps"]
        next_action = self.target_actor.forward(batch["next_state"])
        next_q = self.target_critic.forward(batch["next_state"], next_action)[:, 0]
        target = batch["reward"] + gamma_pow * next_q * (~batch["done"])
        self.critic_opt.zero_grad()
        q = self.critic.forward(batch["state"], batch["action"])[:, 0]
        diff = q - target
        loss = float(np.mean(diff * diff))
        self.critic.backward((2.0 * diff / diff.size)[:, None])
        self.critic_opt.step()
        return loss

    def actor_update(self, batch: dict[str, np.ndarray]) -> float:
        """One ascent step on mean Q(s, pi(s)); the critic is not stepped."""
        self.actor_opt.zero_grad()
        action = self.actor.forward(batch["state"])
        q = self.critic.forward(batch["state"], action)
        objective = float(np.mean(q))
        # grads below also land in critic.grad buffers; critic_update zeroes
        # them before its own step, so the critic stays frozen here
        _, grad_action = self.critic.backward(np.full_like(q, 1.0 / q.shape[0]))
        self.actor.backward(-grad_action)  # minimize -J
        self.actor_opt.step()
        return objective

    def soft_update_targets(self) -> None:
        soft_update(self.actor.parameters(), self.target_actor.parameters(),
                    self.config.tau)
        soft_update(self.critic.parameters(), self.target_critic.parameters(),
                    self.config.tau)

    def train(self, env) -> dict[str, list[float]]:
        """Noisy rollouts with one critic, actor, and target update per step
        once the buffer holds a full batch.  Deterministic under the seed."""
        curves: dict[str, list[float]] = {"reward": [], "critic_loss": [], "actor_objective": []}
        for _ in range(self.config.episodes):
            self.noise.reset()
            obs = env.reset()
            flat = obs.flat()
            total, losses, objectives = 0.0, [], []
            done = False
            while not done:
                action = self.act(flat, explore=True)
                outcome = env.step(action)
                done = outcome.done
                next_flat = None if done else outcome.observation.flat()
                self.buffer.push(flat, action, outcome.reward, next_flat, done)
                total += outcome.reward
                if len(self.buffer) >= self.config.batch_size:
                    batch = self.buffer.sample(self.config.batch_size, self._sample_rng)
                    losses.append(self.critic_update(batch))
                    objectives.append(self.actor_update(batch))
                    self.soft_update_targets()
                if not done:
                    flat = next_flat
            curves["reward"].append(total)
            curves["critic_loss"].append(float(np.mean(losses)) if losses else math.nan)
            curves["actor_objective"].append(float(np.mean(objectives)) if objectives else math.nan)
        return curves

    def policy(self):
        """Noiseless deterministic policy Observation -> weight."""
        def policy_fn(observation: Observation) -> float:
            return self.act(observation.flat(), explore=False)
        return policy_fn

    # -- checkpointing --------------------------------------------------

    def _named_all(self) -> list[tuple[str, nn.Parameter]]:
        named = (self.actor.named_parameters("actor/")
                 + self.critic.named_parameters("critic/")
                 + self.target_actor.named_parameters("target_actor/")
                 + self.target_critic.named_parameters("target_critic/"))
        meta = nn.Parameter(np.array([float(self.obs_dim), self.config.latent_width,
                                      self.config.critic_hidden, self.config.max_weight,
                                      float(self.actor_opt.t), float(self.critic_opt.t)]))
        return named + [("meta/state", meta)]

    def save(self, path: str | Path, manifest: str | None = None) -> None:
        """Checkpoint networks, targets, and optimizer moments (no buffer).

        Written atomically: a half-written checkpoint never replaces a
        good one."""
        path = Path(path)
        scratch = path.with_suffix(path.suffix + ".tmp")
        nn.save_parameters(scratch, self._named_all(), moments=True, manifest=manifest)
        scratch.replace(path)

    @classmethod
    def load(cls, path: str | Path, config: DdpgConfig) -> "DdpgAgent":
        loaded = nn.load_parameters(path)
        meta = loaded["meta/state"]["value"]
        obs_dim, latent, hidden, max_weight = (int(meta[0]), int(meta[1]),
                                               int(meta[2]), float(meta[3]))
        if (latent, hidden, max_weight) != (config.latent_width, config.critic_hidden,
                                            config.max_weight):
            raise ValueError("checkpoint architecture does not match the config")
        agent = cls(config, obs_dim=obs_dim)
        for prefix, net in (("actor/", agent.actor), ("critic/", agent.critic),
                            ("target_actor/", agent.target_actor),
                            ("target_critic/", agent.target_critic)):
            nn.restore_parameters(net.named_parameters(prefix), loaded)
        agent.actor_opt.t = int(meta[4])
        agent.critic_opt.t = int(meta[5])
        return agent
