"""
Backtesting and performance metrics
===================================

Runs a frozen deterministic policy over one split and reports the three
headline metrics: logarithmic utility (cumulative log-return rewards),
portfolio value (final wealth over initial wealth), and the 12-month
rolling Sharpe ratio of excess portfolio returns.

Sharpe conventions are pinned: the window standard deviation is the
sample one (divide by window-1), a window with std below 1e-12 scores 0,
and annualization (multiply by sqrt(12)) is off by default with an
explicit switch; which convention matches the published buy-and-hold
average is an empirical calibration left to the data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import DatasetSplit
from .env import EnvConfig, MarketEnv

SHARPE_WINDOW = 12
REPORT_FILE_TAG = "kellybench-report v1"
COMPARISON_FILE_TAG = "kellybench-comparison v1"


@dataclass
class BacktestReport:
    policy_name: str
    split_name: str
    dates: list[int]                 # earned months
    weights: np.ndarray
    portfolio_returns: np.ndarray
    rf_returns: np.ndarray
    rewards: np.ndarray
    wealth: np.ndarray
    rolling_sharpe: np.ndarray       # aligned to dates[SHARPE_WINDOW-1:]
    annualized: bool
    max_weight: float

    @property
    def log_utility(self) -> float:
        return float(np.sum(self.rewards))

    @property
    def portfolio_value(self) -> float:
        return float(self.wealth[-1])  # initial wealth is 1

    @property
    def average_rolling_sharpe(self) -> float:
        if self.rolling_sharpe.size == 0:
            return math.nan
        return float(np.mean(self.rolling_sharpe))


def rolling_sharpe(portfolio_returns: np.ndarray, rf_returns: np.ndarray,
                   window: int = SHARPE_WINDOW, annualize: bool = False) -> np.ndarray:
    """Mean over sample std of trailing-window excess returns, per month.

    Zero-variance windows score 0; annualize multiplies by sqrt(12).
    """
    excess = np.asarray(portfolio_returns) - np.asarray(rf_returns)
    if excess.size < window:
        raise ValueError(f"need at least {window} months, got {excess.size}")
    view = np.lib.stride_tricks.sliding_window_view(excess, window)
    means = view.mean(axis=1)
    stds = view.std(axis=1, ddof=1)
    out = np.where(stds < 1e-12, 0.0, means / np.where(stds < 1e-12, 1.0, stds))
    if annualize:
        out = out * math.sqrt(12.0)
    return out


def run_backtest(policy, split: DatasetSplit, env_config: EnvConfig | None = None,
                 name: str = "policy", annualize_sharpe: bool = False) -> BacktestReport:
    """Single deterministic pass of a frozen policy over one split."""
    config = env_config or EnvConfig()
    env = MarketEnv(split, config)
    obs = env.reset()
    weights, returns, rewards, wealth = [], [], [], []
    done = False
    while not done:
        w = float(policy(obs))
        outcome = env.step(w)
        weights.append(w)
        returns.append(outcome.portfolio_return)
        rewards.append(outcome.reward)
        wealth.append(outcome.wealth)
        obs = outcome.observation
        done = outcome.done
    returns = np.array(returns)
    rf = np.array([r.rf for r in split.records[config.window:]])
    sharpe = (rolling_sharpe(returns, rf, annualize=annualize_sharpe)
              if returns.size >= SHARPE_WINDOW else np.empty(0))
    return BacktestReport(
        policy_name=name,
        split_name=split.name,
        dates=env.earned_dates,
        weights=np.array(weights),
        portfolio_returns=returns,
        rf_returns=rf,
        rewards=np.array(rewards),
        wealth=np.array(wealth),
        rolling_sharpe=sharpe,
        annualized=annualize_sharpe,
        max_weight=config.max_weight,
    )


def log_utility(report: BacktestReport) -> float:
    """Cumulative reward; equals ln(portfolio value) when gamma_reward is 1."""
    return report.log_utility


def portfolio_value(report: BacktestReport) -> float:
    return report.portfolio_value


def buy_and_hold_policy(observation) -> float:
    """The passive baseline: constant full investment in the market index."""
    return 1.0


def constant_policy(weight: float):
    def policy(observation) -> float:
        return weight
    return policy


@dataclass
class Comparison:
    split_name: str
    dates: list[int]
    names: list[str]
    wealth: np.ndarray          # (n_policies, n_months)
    weights: np.ndarray
    sharpe: np.ndarray          # (n_policies, n_months - window + 1)
    summary: list[tuple[str, float, float, float]]  # name, LU, PV, avg SR


def compare(reports: list[BacktestReport]) -> Comparison:
    """Align several reports on one split into figure-ready series plus a
    summary row (log utility, portfolio value, average Sharpe) per policy."""
    if len(reports) < 2:
        raise ValueError("comparison needs at least two reports")
    first = reports[0]
    for report in reports[1:]:
        if report.split_name != first.split_name or report.dates != first.dates:
            raise ValueError(f"split mismatch: {report.split_name} vs {first.split_name}")
    return Comparison(
        split_name=first.split_name,
        dates=first.dates,
        names=[r.policy_name for r in reports],
        wealth=np.stack([r.wealth for r in reports]),
        weights=np.stack([r.weights for r in reports]),
        sharpe=np.stack([r.rolling_sharpe for r in reports]),
        summary=[(r.policy_name, r.log_utility, r.portfolio_value,
                  r.average_rolling_sharpe) for r in reports],
    )


# ---------------------------------------------------------------------------
# persistence

def save_report(path: str | Path, report: BacktestReport,
                manifest: str | None = None) -> None:
    lines = [f"# {REPORT_FILE_TAG}"]
    if manifest is not None:
        lines.append(f"# manifest {manifest}")
    lines.append(f"# policy {report.policy_name} split {report.split_name} "
                 f"annualized {int(report.annualized)} max_weight {report.max_weight}")
    lines.append("date,weight,portfolio_return,rf,reward,wealth,rolling_sharpe")
    pad = len(report.dates) - report.rolling_sharpe.size
    for i, date in enumerate(report.dates):
        sharpe = "" if i < pad else repr(float(report.rolling_sharpe[i - pad]))
        lines.append(",".join([
            str(date),
            repr(float(report.weights[i])),
            repr(float(report.portfolio_returns[i])),
            repr(float(report.rf_returns[i])),
            repr(float(report.rewards[i])),
            repr(float(report.wealth[i])),
            sharpe,
        ]))
    Path(path).write_text("\n".join(lines) + "\n")


def load_report(path: str | Path) -> BacktestReport:
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines or not lines[0].startswith(f"# {REPORT_FILE_TAG}"):
        raise ValueError(f"{path}: not a {REPORT_FILE_TAG} file")
    meta = {}
    for line in lines:
        if line.startswith("# policy "):
            fields = line[2:].split()
            meta = {fields[i]: fields[i + 1] for i in range(0, len(fields), 2)}
    body = [l for l in lines if not l.startswith("#")]
    dates, cols = [], {k: [] for k in ("weight", "portfolio_return", "rf",
                                       "reward", "wealth", "rolling_sharpe")}
    for line in body[1:]:
        fields = line.split(",")
        dates.append(int(fields[0]))
        for key, value in zip(cols, fields[1:]):
            if value != "":
                cols[key].append(float(value))
    return BacktestReport(
        policy_name=meta.get("policy", path.stem),
        split_name=meta.get("split", ""),
        dates=dates,
        weights=np.array(cols["weight"]),
        portfolio_returns=np.array(cols["portfolio_return"]),
        rf_returns=np.array(cols["rf"]),
        rewards=np.array(cols["reward"]),
        wealth=np.array(cols["wealth"]),
        rolling_sharpe=np.array(cols["rolling_sharpe"]),
        annualized=bool(int(meta.get("annualized", "0"))),
        max_weight=float(meta.get("max_weight", "1.0")),
    )


def save_comparison(path: str | Path, comparison: Comparison,
                    manifest: str | None = None) -> None:
    lines = [f"# {COMPARISON_FILE_TAG}"]
    if manifest is not None:
        lines.append(f"# manifest {manifest}")
    lines.append(f"# split {comparison.split_name}")
    lines.append("policy,log_utility,portfolio_value,average_rolling_sharpe")
    for name, lu, pv, sr in comparison.summary:
        lines.append(f"{name},{repr(lu)},{repr(pv)},{repr(sr)}")
    Path(path).write_text("\n".join(lines) + "\n")
