"""
DDPG with the dense encoder recovers the Kelly fraction
=======================================================

Trains the continuous-action agent on a synthetic i.i.d. Gaussian market
whose closed-form optimal risky fraction is 0.6, then evaluates the
noiseless policy on a fresh series.  This is a shortened version of the
acceptance run (fewer months), so expect the mean weight near 0.6 but
with more sampling slack; the full-strength version lives in
tests/test_acceptance.py::test_c5_kelly_recovery.
"""

from kellybench import (DdpgAgent, DdpgConfig, EnvConfig, MarketEnv,
                        kelly_fraction, run_backtest, synthetic_market)

rf, sigma, target = 0.002, 0.2, 0.6
mu = rf + target * sigma**2
print(f"market: mu={mu:.4f}, sigma={sigma}, rf={rf} "
      f"-> closed-form fraction {kelly_fraction(mu, rf, sigma**2):.2f}")

train_split = synthetic_market(mu, sigma, rf, months=8000, seed=1000)
config = DdpgConfig(gamma_td=0.0, actor_lr=3e-4, critic_lr=3e-3, batch_size=32,
                    capacity=120_000, n_step=3, episodes=1, seed=0,
                    max_weight=1.0, latent_width=12, critic_hidden=24)
agent = DdpgAgent(config, obs_dim=228)
print("training one pass over the series (a minute or two)...")
curves = agent.train(MarketEnv(train_split, EnvConfig(max_weight=1.0)))
print(f"episode reward {curves['reward'][0]:.2f}, "
      f"final critic loss {curves['critic_loss'][0]:.5f}")

eval_split = synthetic_market(mu, sigma, rf, months=1200, seed=9000)
report = run_backtest(agent.policy(), eval_split, EnvConfig(max_weight=1.0),
                      name="ddpg-tide")
print(f"mean deterministic weight on fresh data: {report.weights.mean():.3f} "
      f"(target {target}); weight std across states {report.weights.std():.3f}")
print(f"final portfolio value {report.portfolio_value:.2f} over "
      f"{len(report.dates)} months")
