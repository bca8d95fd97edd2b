"""Tabular MDP test apparatus: a known-transition environment speaking the
episode protocol, an identity state map, and a value-iteration oracle."""

import numpy as np


class MdpEnv:
    """Episodic MDP with an absorbing terminal state.

    Observations are plain state ids; step() accepts the float the agent
    looked up in its action grid and rounds it back to an action index,
    so an ``np.arange(n_actions)`` grid makes weights and actions agree.
    """

    def __init__(self, P, R, terminal, seed=0):
        self.P = np.asarray(P, dtype=np.float64)
        self.R = np.asarray(R, dtype=np.float64)
        self.terminal = np.asarray(terminal, dtype=bool)
        self._cum = np.cumsum(self.P, axis=2)
        self._rng = np.random.default_rng(seed)
        self._state = 0
        self._done = True

    def reset(self):
        self._state = 0
        self._done = False
        return self._state

    def step(self, weight):
        if self._done:
            raise RuntimeError("step() after done")
        action = int(round(weight))
        reward = float(self.R[self._state, action])
        nxt = int(np.searchsorted(self._cum[self._state, action], self._rng.random()))
        self._done = bool(self.terminal[nxt])
        self._state = nxt
        return _Outcome(None if self._done else nxt, reward, self._done)


class _Outcome:
    def __init__(self, observation, reward, done):
        self.observation = observation
        self.reward = reward
        self.done = done


class IdentityStateMap:
    def __init__(self, n_states):
        self.n_states = n_states

    def __call__(self, observation):
        return int(observation)


def value_iteration(P, R, terminal, gamma, tol=1e-13):
    """Exact Q* for the episodic MDP (terminal states have value 0)."""
    P = np.asarray(P, dtype=np.float64)
    R = np.asarray(R, dtype=np.float64)
    terminal = np.asarray(terminal, dtype=bool)
    Q = np.zeros_like(R)
    while True:
        V = np.where(terminal, 0.0, Q.max(axis=1))
        Q_next = R + gamma * (P @ V)
        if np.max(np.abs(Q_next - Q)) < tol:
            return Q_next
        Q = Q_next


def deterministic_chain():
    """3 states (last terminal), 2 actions, deterministic transitions."""
    P = np.zeros((3, 2, 3))
    P[0, 0, 1] = 1.0   # advance
    P[0, 1, 2] = 1.0   # bail out
    P[1, 0, 2] = 1.0
    P[1, 1, 0] = 1.0   # loop back
    P[2, :, 2] = 1.0
    R = np.array([[0.2, 0.05], [1.0, 0.3], [0.0, 0.0]])
    terminal = np.array([False, False, True])
    return P, R, terminal, 0.9


def stochastic_small():
    """3 states, 2 actions; successor values are close together so the
    TD targets are low-variance and Q-learning converges tightly."""
    P = np.zeros((3, 2, 3))
    P[0, 0] = [0.8, 0.2, 0.0]
    P[0, 1] = [0.1, 0.6, 0.3]
    P[1, 0] = [0.5, 0.3, 0.2]
    P[1, 1] = [0.1, 0.5, 0.4]
    P[2, :] = [0.0, 0.0, 1.0]
    R = np.array([[0.05, 0.20], [0.02, 0.10], [0.0, 0.0]])
    terminal = np.array([False, False, True])
    return P, R, terminal, 0.5


def stochastic_wide():
    """5 states, 3 actions, same low-variance design at the size limit."""
    rng = np.random.default_rng(5)
    n_s, n_a = 5, 3
    P = np.zeros((n_s, n_a, n_s))
    for s in range(n_s - 1):
        for a in range(n_a):
            raw = rng.uniform(0.1, 1.0, size=n_s - 1)
            raw = raw / raw.sum() * 0.8
            P[s, a, : n_s - 1] = raw
            P[s, a, n_s - 1] = 0.2  # exit chance keeps episodes short
    P[n_s - 1, :, n_s - 1] = 1.0
    R = np.round(rng.uniform(0.0, 0.15, size=(n_s, n_a)), 3)
    R[n_s - 1] = 0.0
    terminal = np.array([False] * (n_s - 1) + [True])
    return P, R, terminal, 0.5
