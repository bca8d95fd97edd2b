"""
kellybench: reinforcement learning for two-asset allocation
===========================================================

A workbench for the monthly allocation problem between a market index
and the risk-free asset under the Kelly (log-utility) criterion:
a feature-engineered market environment, a tabular Q-learning baseline
with K-means state discretization, a DDPG agent with a dense time-series
encoder, a buy-and-hold baseline, and the backtesting metrics to compare
them.
"""

from .backtest import (BacktestReport, buy_and_hold_policy, compare,
                       rolling_sharpe, run_backtest)
from .data import (DatasetSplit, FeatureStats, MonthlyRecord, RawMonthly,
                   prepare_dataset)
from .ddpg import DdpgAgent, DdpgConfig, OUNoise, ReplayBuffer
from .env import (EnvConfig, MarketEnv, Observation, StepOutcome, crra_utility,
                  kelly_fraction, portfolio_return, reward, synthetic_market)
from .qlearn import (Centroids, ClusterStateMap, QConfig, QTable, assign_cluster,
                     fit_kmeans, greedy_policy, make_action_grid)

__version__ = "0.1.0"

__all__ = [
    "BacktestReport", "Centroids", "ClusterStateMap", "DatasetSplit",
    "DdpgAgent", "DdpgConfig", "EnvConfig", "FeatureStats", "MarketEnv",
    "MonthlyRecord", "Observation", "OUNoise", "QConfig", "QTable",
    "RawMonthly", "ReplayBuffer", "StepOutcome", "assign_cluster",
    "buy_and_hold_policy", "compare", "crra_utility", "fit_kmeans",
    "greedy_policy", "kelly_fraction", "make_action_grid", "portfolio_return",
    "prepare_dataset", "reward", "rolling_sharpe", "run_backtest",
    "synthetic_market",
]
