"""
Two-asset market environment
============================

The MDP environment for monthly allocation between the market index and
the risk-free asset.  An observation summarizes the 12 most recent
completed months (12 x 18 standardized features plus 12 logarithmic
market returns, 228 values); the chosen weight is then applied to the
*following* month's returns, so no component of the observation overlaps
the return it earns.  Wealth compounds multiplicatively from 1.0 and the
per-step reward is ``gamma_reward * ln(1 + portfolio_return)``, which
makes the cumulative reward the log of final wealth (the Kelly
criterion / log-utility objective).

Also provides the closed-form optimal risky fraction
``(mu - rf) / (risk_aversion * sigma^2)``, the CRRA utility it derives
from, and a seeded synthetic i.i.d. Gaussian market used as the oracle
environment when testing agents against that closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import DatasetSplit, FeatureStats, MonthlyRecord, month_add


class RuinError(Exception):
    """Portfolio return reached -100%; the log reward is undefined."""


class EnvProtocolError(Exception):
    """Episode protocol violation, e.g. step() after done."""


@dataclass
class EnvConfig:
    max_weight: float = 1.0
    gamma_reward: float = 1.0
    window: int = 12

    def __post_init__(self) -> None:
        if self.max_weight not in (1.0, 1.5):
            raise ValueError(f"max_weight must be 1.0 or 1.5, got {self.max_weight}")
        if self.window < 1:
            raise ValueError("window must be >= 1")


@dataclass
class Observation:
    """State seen by the agent: trailing feature window plus log returns."""

    feature_window: np.ndarray   # (window, 18)
    log_return_window: np.ndarray  # (window,)

    def flat(self) -> np.ndarray:
        """Row-major feature window followed by the log returns (228 values)."""
        return np.concatenate([self.feature_window.ravel(), self.log_return_window])


@dataclass
class StepOutcome:
    observation: Observation | None
    reward: float
    portfolio_return: float
    wealth: float
    done: bool


def portfolio_return(weight: float, mkt_return: float, rf: float) -> float:
    """Frictionless two-asset mix; weight > 1 borrows at the risk-free rate."""
    return weight * mkt_return + (1.0 - weight) * rf


def reward(portfolio_ret: float, gamma_reward: float = 1.0) -> float:
    """Log-growth reward gamma * ln(1 + r); raises RuinError at r <= -1."""
    if 1.0 + portfolio_ret <= 0.0:
        raise RuinError(f"portfolio return {portfolio_ret} wiped out the portfolio")
    return gamma_reward * math.log1p(portfolio_ret)


def crra_utility(wealth: float, risk_aversion: float) -> float:
    """CRRA utility W^(1-Ra)/(1-Ra) for 0 < Ra < 1."""
    if wealth <= 0.0:
        raise ValueError("CRRA utility needs wealth > 0")
    if risk_aversion == 1.0:
        raise ValueError("Ra = 1 is the logarithmic limit; use the log reward instead")
    if not 0.0 < risk_aversion < 1.0:
        raise ValueError("risk aversion must lie in (0, 1)")
    return wealth ** (1.0 - risk_aversion) / (1.0 - risk_aversion)


def kelly_fraction(mu: float, rf: float, sigma_sq: float, risk_aversion: float = 1.0) -> float:
    """Closed-form optimal risky fraction (mu - rf) / (Ra * sigma^2), unclamped."""
    if sigma_sq <= 0.0:
        raise ValueError("sigma_sq must be positive")
    if risk_aversion <= 0.0:
        raise ValueError("risk aversion must be positive")
    return (mu - rf) / (risk_aversion * sigma_sq)


class MarketEnv:
    """Episode over one split: reset() then step(weight) until done.

    The observation returned before each step covers months up to and
    including some month t; step(weight) then applies month t+1's market
    and risk-free returns.  The first observation therefore becomes
    available at the split's ``window``-th month and the episode earns
    the returns of months ``window+1 .. N``.

    Instances hold a mutable episode cursor and are single-threaded;
    run independent instances for parallel episodes.
    """

    def __init__(self, split: DatasetSplit | list[MonthlyRecord],
                 config: EnvConfig | None = None):
        records = split.records if isinstance(split, DatasetSplit) else split
        self.config = config or EnvConfig()
        w = self.config.window
        if len(records) < w + 1:
            raise ValueError(f"split has {len(records)} months; "
                             f"need at least window+1 = {w + 1}")
        self.dates = [r.date for r in records]
        self._features = np.array([r.features for r in records], dtype=np.float64)
        self._mkt = np.array([r.mkt_return for r in records], dtype=np.float64)
        self._rf = np.array([r.rf for r in records], dtype=np.float64)
        if not (np.all(np.isfinite(self._features)) and np.all(np.isfinite(self._mkt))
                and np.all(np.isfinite(self._rf)) and np.all(self._mkt > -1.0)):
            raise ValueError("split contains non-finite values or returns <= -100%")
        self._log_mkt = np.log1p(self._mkt)
        self._n = len(records)
        self._t = -1
        self._wealth = 1.0
        self._done = True

    @property
    def n_decisions(self) -> int:
        return self._n - self.config.window

    @property
    def earned_dates(self) -> list[int]:
        """Dates of the months whose returns the episode's steps apply."""
        return self.dates[self.config.window:]

    @property
    def wealth(self) -> float:
        return self._wealth

    @property
    def done(self) -> bool:
        return self._done

    def _observation(self, t: int) -> Observation:
        w = self.config.window
        return Observation(
            feature_window=self._features[t - w + 1: t + 1].copy(),
            log_return_window=self._log_mkt[t - w + 1: t + 1].copy(),
        )

    def reset(self) -> Observation:
        self._t = self.config.window - 1
        self._wealth = 1.0
        self._done = False
        return self._observation(self._t)

    def step(self, weight: float) -> StepOutcome:
        if self._done:
            raise EnvProtocolError("step() called on a finished episode")
        if not 0.0 <= weight <= self.config.max_weight:
            raise ValueError(f"weight {weight} outside [0, {self.config.max_weight}]")
        earned = self._t + 1
        r_p = portfolio_return(weight, self._mkt[earned], self._rf[earned])
        try:
            r = reward(r_p, self.config.gamma_reward)
        except RuinError:
            self._done = True
            raise
        self._wealth *= 1.0 + r_p
        self._t = earned
        self._done = earned == self._n - 1
        obs = None if self._done else self._observation(self._t)
        return StepOutcome(observation=obs, reward=r, portfolio_return=float(r_p),
                           wealth=self._wealth, done=self._done)


# ---------------------------------------------------------------------------
# synthetic oracle market

SYNTHETIC_FEATURE_NAMES = (
    "r_lag0", "r_lag1", "r_lag2",
    "mean_3", "mean_6", "mean_12",
    "std_3", "std_6", "std_12",
    "min_6", "max_6", "min_12", "max_12",
    "logsum_6", "logsum_12",
    "upfrac_12", "absmean_6", "rv_12",
)


def _trailing_feature(r: np.ndarray, window: int, fn) -> np.ndarray:
    """Apply an axis-aware reduction over trailing windows, truncated at the head."""
    n = r.size
    out = np.empty(n)
    for t in range(min(window - 1, n)):
        out[t] = fn(r[: t + 1])
    if n >= window:
        view = np.lib.stride_tricks.sliding_window_view(r, window)
        out[window - 1:] = fn(view, axis=-1)
    return out


def _synthetic_features(r: np.ndarray) -> np.ndarray:
    """Deterministic trailing statistics of the return series, one row per month.

    Every statistic uses returns up to and including the row's own month,
    with windows truncated at the start of the series, so features never
    contain information about the month a decision will earn.
    """
    n = r.size
    log_r = np.log1p(r)

    def lag(k):
        return r[np.maximum(np.arange(n) - k, 0)]

    cols = [
        lag(0),
        lag(1),
        lag(2),
        _trailing_feature(r, 3, np.mean),
        _trailing_feature(r, 6, np.mean),
        _trailing_feature(r, 12, np.mean),
        _trailing_feature(r, 3, np.std),
        _trailing_feature(r, 6, np.std),
        _trailing_feature(r, 12, np.std),
        _trailing_feature(r, 6, np.min),
        _trailing_feature(r, 6, np.max),
        _trailing_feature(r, 12, np.min),
        _trailing_feature(r, 12, np.max),
        _trailing_feature(log_r, 6, np.sum),
        _trailing_feature(log_r, 12, np.sum),
        _trailing_feature((r > 0).astype(np.float64), 12, np.mean),
        _trailing_feature(np.abs(r), 6, np.mean),
        _trailing_feature(r * r, 12, np.mean),
    ]
    return np.column_stack(cols)


def synthetic_market(mu: float, sigma: float, rf: float, months: int,
                     seed: int, start_date: int = 200001) -> DatasetSplit:
    """Seeded i.i.d. Gaussian market: returns ~ N(mu, sigma^2), constant rf.

    Features are z-scored trailing statistics of the generated series
    (see ``_synthetic_features``); the same seed reproduces the series
    bit for bit.
    """
    if months < 24:
        raise ValueError("synthetic market needs at least 24 months")
    rng = np.random.default_rng(seed)
    returns = mu + sigma * rng.standard_normal(months)
    raw = _synthetic_features(returns)
    mean = raw.mean(axis=0)
    std = raw.std(axis=0)
    constant = std < 1e-12 * np.maximum(np.abs(mean), 1.0)
    divisor = np.where(constant, 1.0, std)
    features = (raw - mean) / divisor
    stats = FeatureStats(names=SYNTHETIC_FEATURE_NAMES, mean=mean, std=divisor)
    records = []
    date = start_date
    for i in range(months):
        records.append(MonthlyRecord(date=date, mkt_return=float(returns[i]),
                                     rf=rf, features=features[i]))
        date = month_add(date, 1)
    return DatasetSplit(name="synthetic", records=records, stats=stats)
