import numpy as np
import pytest

import mdp_oracle
from kellybench.env import MarketEnv, synthetic_market
from kellybench.qlearn import (Centroids, ClusterStateMap, QConfig, QTable,
                               assign_cluster, fit_kmeans, greedy_policy,
                               load_centroids, load_qtable, make_action_grid,
                               q_update, save_centroids, save_qtable,
                               select_action, train)


class TestActionGrid:
    def test_no_leverage_grid(self):
        np.testing.assert_array_equal(
            make_action_grid(False),
            [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0])

    def test_leverage_grid(self):
        np.testing.assert_array_equal(
            make_action_grid(True),
            [0.0, 0.15, 0.3, 0.45, 0.6, 0.75, 0.9, 1.05, 1.2, 1.35, 1.5])

    def test_endpoints_and_size(self):
        for leverage, top in ((False, 1.0), (True, 1.5)):
            grid = make_action_grid(leverage)
            assert grid.size == 11
            assert grid[0] == 0.0
            assert grid[-1] == top
            assert np.all(np.diff(grid) > 0)


class TestKMeans:
    def test_k_equals_n_distinct_points(self):
        points = np.arange(10, dtype=float).reshape(5, 2)
        centroids = fit_kmeans(points, k=5, seed=0)
        # every point is its own centroid: inertia is zero
        sorted_centers = centroids.vectors[np.argsort(centroids.vectors[:, 0])]
        np.testing.assert_allclose(sorted_centers, points)

    def test_two_cluster_oracle(self):
        points = np.array([[0.0], [0.1], [10.0], [10.1]])
        centroids = fit_kmeans(points, k=2, seed=3)
        centers = np.sort(centroids.vectors[:, 0])
        np.testing.assert_allclose(centers, [0.05, 10.05])

    def test_deterministic_under_seed(self):
        rng = np.random.default_rng(0)
        points = rng.standard_normal((60, 4))
        a = fit_kmeans(points, k=7, seed=42)
        b = fit_kmeans(points, k=7, seed=42)
        np.testing.assert_array_equal(a.vectors, b.vectors)

    def test_too_few_distinct_points(self):
        points = np.zeros((30, 3))
        with pytest.raises(ValueError, match="distinct"):
            fit_kmeans(points, k=5, seed=0)


class TestAssignCluster:
    def test_exact_match(self):
        centroids = Centroids(k=3, vectors=np.eye(3), seed=0)
        assert assign_cluster(np.array([0.0, 1.0, 0.0]), centroids) == 1

    def test_tie_goes_to_lowest_index(self):
        vectors = np.array([[0.0], [0.0], [2.0], [0.0]])
        centroids = Centroids(k=4, vectors=vectors, seed=0)
        assert assign_cluster(np.array([1.0]), centroids) == 0

    def test_matches_brute_force_scan(self):
        rng = np.random.default_rng(1)
        centroids = Centroids(k=9, vectors=rng.standard_normal((9, 6)), seed=0)
        for _ in range(100):
            x = rng.standard_normal(6)
            brute = min(range(9),
                        key=lambda j: float(np.sum((centroids.vectors[j] - x) ** 2)))
            assert assign_cluster(x, centroids) == brute


class TestQUpdate:
    def test_zero_alpha_is_identity(self):
        table = QTable.zeros(2, 2)
        table.values[0, 1] = 0.7
        q_update(table, 0, 1, 5.0, 1, alpha=0.0, gamma_td=0.9)
        assert table.values[0, 1] == 0.7
        assert table.visit_counts[0, 1] == 1

    def test_hand_arithmetic(self):
        table = QTable.zeros(2, 2)
        q_update(table, 0, 0, 1.0, 1, alpha=0.5, gamma_td=0.9)
        assert table.values[0, 0] == pytest.approx(0.5)

        table.values[:] = 1.0
        q_update(table, 0, 0, 0.0, 1, alpha=0.1, gamma_td=0.9)
        assert table.values[0, 0] == pytest.approx(0.99)

    def test_terminal_drops_bootstrap(self):
        table = QTable.zeros(1, 1)
        table.values[0, 0] = 1.0
        q_update(table, 0, 0, 0.5, None, alpha=1.0, gamma_td=0.9)
        assert table.values[0, 0] == pytest.approx(0.5)

    def test_contraction_toward_target(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            table = QTable.zeros(3, 2)
            table.values[:] = rng.standard_normal((3, 2))
            s, a = 1, 0
            r, alpha, gamma = rng.standard_normal(), rng.uniform(0.05, 1), 0.9
            target = r + gamma * table.values[2].max()
            before = abs(table.values[s, a] - target)
            q_update(table, s, a, r, 2, alpha, gamma)
            after = abs(table.values[s, a] - target)
            assert after == pytest.approx((1 - alpha) * before, abs=1e-12)


class TestSelectAction:
    def test_pure_greedy(self):
        table = QTable.zeros(1, 5)
        table.values[0] = [0.0, 0.1, 0.2, 0.9, 0.3]
        assert select_action(table, 0, 0.0, np.random.default_rng(0)) == 3

    def test_all_equal_ties_to_first(self):
        table = QTable.zeros(1, 4)
        assert select_action(table, 0, 0.0, np.random.default_rng(0)) == 0

    def test_full_exploration_is_uniform(self):
        table = QTable.zeros(1, 4)
        rng = np.random.default_rng(3)
        n = 100_000
        counts = np.bincount(
            [select_action(table, 0, 1.0, rng) for _ in range(n)], minlength=4)
        expected = n / 4
        tolerance = 3 * np.sqrt(n * 0.25 * 0.75)
        assert np.all(np.abs(counts - expected) < tolerance)


class TestTrain:
    def test_zero_episodes_returns_zero_table(self):
        env = mdp_oracle.MdpEnv(*mdp_oracle.deterministic_chain()[:3], seed=0)
        config = QConfig(episodes=0, seed=0)
        table, curve = train(env, mdp_oracle.IdentityStateMap(3),
                             np.arange(2, dtype=float), config)
        np.testing.assert_array_equal(table.values, 0.0)
        assert curve == []

    def test_deterministic_under_seed(self):
        def run():
            env = mdp_oracle.MdpEnv(*mdp_oracle.stochastic_small()[:3], seed=11)
            config = QConfig(alpha=0.5, episodes=300, seed=5)
            table, curve = train(env, mdp_oracle.IdentityStateMap(3),
                                 np.arange(2, dtype=float), config)
            return table.values.copy(), curve

        (va, ca), (vb, cb) = run(), run()
        np.testing.assert_array_equal(va, vb)
        assert ca == cb

    def test_deterministic_chain_converges_quickly(self):
        # constant alpha=1 is exact for deterministic transitions and rewards
        P, R, terminal, gamma = mdp_oracle.deterministic_chain()
        q_star = mdp_oracle.value_iteration(P, R, terminal, gamma)
        env = mdp_oracle.MdpEnv(P, R, terminal, seed=1)
        config = QConfig(alpha=1.0, alpha_decay=0.0, gamma_td=gamma,
                         epsilon_start=1.0, epsilon_end=1.0, epsilon_decay=1.0,
                         episodes=3000, seed=2)
        table, _ = train(env, mdp_oracle.IdentityStateMap(3),
                         np.arange(2, dtype=float), config)
        np.testing.assert_allclose(table.values[:2], q_star[:2], atol=1e-9)

    def test_market_env_training_runs(self, dataset):
        split = dataset["train"]
        centroids = fit_kmeans(split.feature_matrix(), k=8, seed=0)
        env = MarketEnv(split)
        config = QConfig(episodes=2, seed=0)
        table, curve = train(env, ClusterStateMap(centroids),
                             make_action_grid(False), config)
        assert len(curve) == 2
        assert table.visit_counts.sum() == 2 * env.n_decisions


class TestGreedyPolicy:
    def test_dominant_column(self):
        split = synthetic_market(0.005, 0.04, 0.002, 40, seed=0)
        centroids = fit_kmeans(split.feature_matrix(), k=5, seed=0)
        table = QTable.zeros(5, 11)
        table.values[:, 4] = 1.0
        grid = make_action_grid(False)
        policy = greedy_policy(table, ClusterStateMap(centroids), grid)
        env = MarketEnv(split)
        obs = env.reset()
        assert policy(obs) == grid[4]

    def test_leveraged_grid_top_action(self):
        grid = make_action_grid(True)
        assert grid[10] == 1.5

    def test_policy_is_pure_function(self, dataset):
        split = dataset["validation"]
        centroids = fit_kmeans(dataset["train"].feature_matrix(), k=6, seed=1)
        table = QTable.zeros(6, 11)
        table.values[:] = np.random.default_rng(0).standard_normal((6, 11))
        policy = greedy_policy(table, ClusterStateMap(centroids),
                               make_action_grid(False))
        env = MarketEnv(split)
        obs = env.reset()
        assert policy(obs) == policy(obs)


class TestPersistence:
    def test_centroids_roundtrip(self, tmp_path):
        rng = np.random.default_rng(0)
        centroids = fit_kmeans(rng.standard_normal((40, 6)), k=5, seed=9)
        save_centroids(tmp_path / "c.txt", centroids, manifest="cafe01")
        loaded = load_centroids(tmp_path / "c.txt")
        assert loaded.k == 5 and loaded.seed == 9
        np.testing.assert_array_equal(loaded.vectors, centroids.vectors)

    def test_qtable_roundtrip(self, tmp_path):
        table = QTable.zeros(4, 11)
        table.values[:] = np.random.default_rng(1).standard_normal((4, 11))
        table.visit_counts[:] = 7
        grid = make_action_grid(True)
        save_qtable(tmp_path / "q.txt", table, grid)
        loaded, loaded_grid = load_qtable(tmp_path / "q.txt")
        np.testing.assert_array_equal(loaded.values, table.values)
        np.testing.assert_array_equal(loaded.visit_counts, table.visit_counts)
        np.testing.assert_array_equal(loaded_grid, grid)
