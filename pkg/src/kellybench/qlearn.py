"""
Tabular Q-learning with K-means state discretization
====================================================

States are cluster labels from a seeded K-means (k=50) fit on the train
split's standardized current-month feature vectors; actions are fixed
portfolio-weight grids (11 weights, 0..1 without leverage or 0..1.5 with
50% leverage).  Updates follow the one-cell temporal-difference rule
``Q <- Q + alpha * (r + gamma * max_a' Q(s',a') - Q)`` with epsilon-greedy
exploration decaying per episode.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .env import Observation

QTABLE_FILE_TAG = "kellybench-qtable v1"
CENTROIDS_FILE_TAG = "kellybench-centroids v1"


def make_action_grid(leverage: bool) -> np.ndarray:
    """11 weights: 0.0..1.0 step 0.1, or 0.0..1.5 step 0.15 with leverage."""
    if leverage:
        return np.arange(11) * 15 / 100.0
    return np.arange(11) / 10.0


# ---------------------------------------------------------------------------
# K-means discretization

@dataclass
class Centroids:
    k: int
    vectors: np.ndarray  # (k, n_features)
    seed: int


def _kmeans_plus_plus(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centers = np.empty((k, points.shape[1]))
    centers[0] = points[rng.integers(n)]
    dist_sq = np.sum((points - centers[0]) ** 2, axis=1)
    for i in range(1, k):
        total = dist_sq.sum()
        if total == 0.0:  # all remaining points coincide with a center
            centers[i:] = points[rng.integers(n, size=k - i)]
            break
        probs = dist_sq / total
        centers[i] = points[rng.choice(n, p=probs)]
        dist_sq = np.minimum(dist_sq, np.sum((points - centers[i]) ** 2, axis=1))
    return centers


def fit_kmeans(train_features: np.ndarray, k: int = 50, seed: int = 0,
               max_iter: int = 300) -> Centroids:
    """Lloyd's iterations from a seeded k-means++ start until the
    assignment fixpoint or max_iter.  Deterministic under seed; an empty
    cluster keeps its previous centroid."""
    points = np.asarray(train_features, dtype=np.float64)
    if np.unique(points, axis=0).shape[0] < k:
        raise ValueError(f"need at least {k} distinct feature vectors")
    rng = np.random.default_rng(seed)
    centers = _kmeans_plus_plus(points, k, rng)
    labels = None
    for _ in range(max_iter):
        dists = np.sum((points[:, None, :] - centers[None, :, :]) ** 2, axis=2)
        new_labels = np.argmin(dists, axis=1)
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for j in range(k):
            members = points[labels == j]
            if members.shape[0] > 0:
                centers[j] = members.mean(axis=0)
    return Centroids(k=k, vectors=centers, seed=seed)


def assign_cluster(features: np.ndarray, centroids: Centroids) -> int:
    """Index of the nearest centroid (Euclidean); ties go to the lowest index."""
    dists = np.sum((centroids.vectors - np.asarray(features)) ** 2, axis=1)
    return int(np.argmin(dists))


class ClusterStateMap:
    """Maps an Observation to the cluster of its current-month features."""

    def __init__(self, centroids: Centroids):
        self.centroids = centroids
        self.n_states = centroids.k

    def __call__(self, observation: Observation) -> int:
        return assign_cluster(observation.feature_window[-1], self.centroids)


# ---------------------------------------------------------------------------
# Q-table and updates

@dataclass
class QTable:
    values: np.ndarray        # (n_states, n_actions)
    visit_counts: np.ndarray  # (n_states, n_actions), int64

    @classmethod
    def zeros(cls, n_states: int, n_actions: int) -> "QTable":
        return cls(values=np.zeros((n_states, n_actions)),
                   visit_counts=np.zeros((n_states, n_actions), dtype=np.int64))


@dataclass
class QConfig:
    alpha: float = 0.1
    alpha_decay: float = 0.0   # effective alpha = alpha / (1 + visits)^alpha_decay
    gamma_td: float = 0.9
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_decay: float = 0.97  # multiplicative, per episode
    episodes: int = 300
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must be in (0, 1]")
        if not 0.0 <= self.gamma_td < 1.0:
            raise ValueError("gamma_td must be in [0, 1)")
        for eps in (self.epsilon_start, self.epsilon_end):
            if not 0.0 <= eps <= 1.0:
                raise ValueError("epsilon bounds must be in [0, 1]")


def q_update(table: QTable, s: int, a: int, r: float, s_next: int | None,
             alpha: float, gamma_td: float) -> QTable:
    """One-cell TD update; terminal next states use a zero max term."""
    future = 0.0 if s_next is None else float(np.max(table.values[s_next]))
    current = table.values[s, a]
    table.values[s, a] = current + alpha * (r + gamma_td * future - current)
    table.visit_counts[s, a] += 1
    return table


def select_action(table: QTable, s: int, epsilon: float, rng: np.random.Generator) -> int:
    """Epsilon-greedy over the row; greedy ties go to the lowest index."""
    n_actions = table.values.shape[1]
    if rng.random() < epsilon:
        return int(rng.integers(n_actions))
    return int(np.argmax(table.values[s]))


def train(env, state_map, grid: np.ndarray, config: QConfig
          ) -> tuple[QTable, list[float]]:
    """Run `episodes` full passes over the environment's split.

    ``state_map`` is any callable Observation -> state index exposing
    ``n_states`` (usually a ClusterStateMap).  Returns the final table and
    the per-episode cumulative-reward curve; deterministic under seed.
    """
    rng = np.random.default_rng(config.seed)
    table = QTable.zeros(state_map.n_states, len(grid))
    curve: list[float] = []
    for episode in range(config.episodes):
        epsilon = max(config.epsilon_end,
                      config.epsilon_start * config.epsilon_decay ** episode)
        obs = env.reset()
        s = state_map(obs)
        total = 0.0
        done = False
        while not done:
            a = select_action(table, s, epsilon, rng)
            outcome = env.step(float(grid[a]))
            done = outcome.done
            s_next = None if done else state_map(outcome.observation)
            alpha = config.alpha
            if config.alpha_decay:
                alpha /= (1.0 + table.visit_counts[s, a]) ** config.alpha_decay
            q_update(table, s, a, outcome.reward, s_next, alpha, config.gamma_td)
            total += outcome.reward
            if not done:
                s = s_next
        curve.append(total)
    return table, curve


def greedy_policy(table: QTable, state_map, grid: np.ndarray):
    """Deterministic policy Observation -> weight (argmax row, ties lowest)."""
    def policy(observation: Observation) -> float:
        return float(grid[int(np.argmax(table.values[state_map(observation)]))])
    return policy


# ---------------------------------------------------------------------------
# persistence

def save_centroids(path: str | Path, centroids: Centroids,
                   manifest: str | None = None) -> None:
    lines = [f"# {CENTROIDS_FILE_TAG}"]
    if manifest is not None:
        lines.append(f"# manifest {manifest}")
    lines.append(f"k {centroids.k} dims {centroids.vectors.shape[1]} seed {centroids.seed}")
    for row in centroids.vectors:
        lines.append(" ".join(repr(float(v)) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def load_centroids(path: str | Path) -> Centroids:
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith(f"# {CENTROIDS_FILE_TAG}"):
        raise ValueError(f"{path}: not a {CENTROIDS_FILE_TAG} file")
    body = [l for l in lines if not l.startswith("#")]
    head = body[0].split()
    k, dims, seed = int(head[1]), int(head[3]), int(head[5])
    vectors = np.array([[float(v) for v in line.split()] for line in body[1:1 + k]])
    if vectors.shape != (k, dims):
        raise ValueError(f"{path}: expected {k}x{dims} centroids, got {vectors.shape}")
    return Centroids(k=k, vectors=vectors, seed=seed)


def save_qtable(path: str | Path, table: QTable, grid: np.ndarray,
                manifest: str | None = None) -> None:
    lines = [f"# {QTABLE_FILE_TAG}"]
    if manifest is not None:
        lines.append(f"# manifest {manifest}")
    lines.append(f"states {table.values.shape[0]} actions {table.values.shape[1]}")
    lines.append("grid " + " ".join(repr(float(w)) for w in grid))
    for row in table.values:
        lines.append(" ".join(repr(float(v)) for v in row))
    for row in table.visit_counts:
        lines.append(" ".join(str(int(v)) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def load_qtable(path: str | Path) -> tuple[QTable, np.ndarray]:
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith(f"# {QTABLE_FILE_TAG}"):
        raise ValueError(f"{path}: not a {QTABLE_FILE_TAG} file")
    body = [l for l in lines if not l.startswith("#")]
    head = body[0].split()
    n_states, n_actions = int(head[1]), int(head[3])
    grid = np.array([float(v) for v in body[1].split()[1:]])
    values = np.array([[float(v) for v in line.split()]
                       for line in body[2:2 + n_states]])
    counts = np.array([[int(v) for v in line.split()]
                       for line in body[2 + n_states:2 + 2 * n_states]], dtype=np.int64)
    table = QTable(values=values, visit_counts=counts)
    if table.values.shape != (n_states, n_actions):
        raise ValueError(f"{path}: malformed table block")
    return table, grid
