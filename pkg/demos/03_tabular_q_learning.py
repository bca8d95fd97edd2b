"""
Tabular Q-learning on a discretized market
==========================================

Fits the K-means state discretization on a synthetic market, trains the
Q-learning agent over the 11-weight action grid, and compares the greedy
policy's backtest against buy-and-hold.
"""

from kellybench import (ClusterStateMap, EnvConfig, MarketEnv, QConfig,
                        buy_and_hold_policy, fit_kmeans, greedy_policy,
                        make_action_grid, run_backtest, synthetic_market)
from kellybench.qlearn import train

# A choppy market where a partial allocation is optimal: the closed-form
# fraction (mu - rf)/sigma^2 is 0.4, so all-in overexposes and all-cash
# leaves growth on the table.
split = synthetic_market(mu=0.012, sigma=0.15, rf=0.003, months=2400, seed=4)

# K-means on the 18 current-month features gives the discrete state space.
# k=8 keeps this demo fast; the production configuration uses k=50.
centroids = fit_kmeans(split.feature_matrix(), k=8, seed=0)
state_map = ClusterStateMap(centroids)
grid = make_action_grid(leverage=False)
print(f"states: {state_map.n_states}, actions: {[float(w) for w in grid]}")

config = QConfig(alpha=0.1, gamma_td=0.9, epsilon_start=1.0, epsilon_end=0.05,
                 epsilon_decay=0.9, episodes=40, seed=0)
table, curve = train(MarketEnv(split), state_map, grid, config)
print(f"episode reward: first {curve[0]:.3f} -> last {curve[-1]:.3f}")
print(f"visits per state-action cell: min {table.visit_counts.min()}, "
      f"max {table.visit_counts.max()}")

# Freeze the greedy policy and backtest it against the passive baseline.
policy = greedy_policy(table, state_map, grid)
evaluation = synthetic_market(mu=0.012, sigma=0.15, rf=0.003, months=600, seed=99)
for name, pol in (("q-greedy", policy), ("buy-and-hold", buy_and_hold_policy)):
    report = run_backtest(pol, evaluation, EnvConfig(), name=name)
    print(f"{name:>13}: log utility {report.log_utility:7.3f}  "
          f"final value {report.portfolio_value:6.3f}  "
          f"mean weight {report.weights.mean():.2f}")
