"""Exploited-level estimation: neighborhood formula, learned regressor,
normalization, and the recurrent variant."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ela.el import (
    ElSample,
    ExploitedLevelRegressor,
    RecurrentExploitedLevelEstimator,
    default_delta,
    el_delta,
    el_delta_all,
    normalize_el,
)
from ela.games import generate_dataset, make_env, parse_pool_spec


def sample(key, vec, reward):
    return ElSample(key, np.asarray(vec, dtype=float), reward)


class TestElDelta:
    def test_single_losing_sample_is_its_own_neighborhood(self):
        samples = [sample((0, 0), [0.0, 0.0], -0.4)]
        assert el_delta((0, 0), samples, delta=1.0) == pytest.approx(0.4)

    def test_hand_evaluated_neighborhood(self):
        # Rewards {-0.2, -0.6, +0.5}: numerator 0.2 + 0.6 + 0, denominator 2.
        samples = [
            sample((0, 0), [0.0], -0.2),
            sample((1, 0), [0.1], -0.6),
            sample((2, 0), [0.2], 0.5),
        ]
        assert el_delta((0, 0), samples, delta=1.0) == pytest.approx(0.4)

    def test_neighborhood_respects_delta(self):
        samples = [
            sample((0, 0), [0.0], -1.0),
            sample((1, 0), [10.0], -9.0),  # out of range
        ]
        assert el_delta((0, 0), samples, delta=1.0) == pytest.approx(1.0)

    def test_draws_count_in_the_denominator_only(self):
        # reward == 0 satisfies the losing condition but adds no loss mass.
        samples = [sample((0, 0), [0.0], -1.0), sample((1, 0), [0.0], 0.0)]
        assert el_delta((0, 0), samples, delta=1.0) == pytest.approx(0.5)

    def test_no_losing_neighbors_is_an_error(self):
        samples = [sample((0, 0), [0.0], 0.7), sample((1, 0), [0.0], 0.2)]
        with pytest.raises(ValueError, match="no losing neighbors"):
            el_delta((0, 0), samples, delta=1.0)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(0)
        samples = [
            sample((i, 0), rng.normal(size=2), rng.normal()) for i in range(20)
        ]
        value = el_delta((3, 0), samples, delta=1.5)
        rng.shuffle(samples)
        assert el_delta((3, 0), samples, delta=1.5) == pytest.approx(value)

    def test_global_delta_makes_all_estimates_equal(self):
        rng = np.random.default_rng(1)
        samples = [
            sample((i, 0), rng.normal(size=3), rng.normal()) for i in range(30)
        ]
        estimates = el_delta_all(samples, delta=1e9)
        values = np.array(list(estimates.values()))
        rewards = np.array([s.reward for s in samples])
        expected = np.maximum(-rewards, 0.0).sum() / (rewards <= 0).sum()
        np.testing.assert_allclose(values, expected)

    def test_vectorized_matches_scalar_route(self):
        rng = np.random.default_rng(2)
        samples = [
            sample((i, 0), rng.normal(size=2), rng.normal()) for i in range(15)
        ]
        estimates = el_delta_all(samples, delta=2.0)
        for s in samples:
            if np.isnan(estimates[s.key]):
                with pytest.raises(ValueError, match="no losing neighbors"):
                    el_delta(s.key, samples, 2.0)
            else:
                assert estimates[s.key] == pytest.approx(el_delta(s.key, samples, 2.0))

    def test_near_nash_cluster_is_bounded_by_epsilon(self):
        # Every member of a tight cluster has |reward| <= eps, so the
        # neighborhood estimate cannot exceed eps.
        rng = np.random.default_rng(3)
        eps = 0.05
        samples = [
            sample((i, 0), rng.normal(0, 0.01, size=3), rng.uniform(-eps, eps))
            for i in range(40)
        ]
        estimates = el_delta_all(samples, delta=1.0)
        assert all(v <= eps + 1e-12 for v in estimates.values())

    def test_oracle_embedding_orders_bias_levels(self):
        # Replace learned vectors with the demonstrators' true strategy
        # rows: the neighborhood estimate must rank bias 0.5 above 0.2.
        env = make_env("rps", rounds=60)
        pool = parse_pool_spec("bias:0:1,bias:0.2:1,bias:0.5:1", env)
        ds = generate_dataset(pool, 400, env, seed=3)
        by_tag = {}
        samples = []
        for t in ds.trajectories:
            freq = np.bincount(t.actions, minlength=3) / len(t)
            samples.append(ElSample(t.key, freq, t.terminal_reward, t.demonstrator_tag))
        estimates = el_delta_all(samples, delta=0.08)
        for s in samples:
            by_tag.setdefault(s.tag, []).append(estimates[s.key])
        means = {tag: np.nanmean(v) for tag, v in by_tag.items()}
        assert means["bias-0"] < means["bias-0.2"] < means["bias-0.5"]

    def test_invalid_delta(self):
        with pytest.raises(ValueError, match="positive"):
            el_delta((0, 0), [sample((0, 0), [0.0], -1.0)], delta=0.0)

    def test_unknown_key(self):
        with pytest.raises(KeyError):
            el_delta((9, 9), [sample((0, 0), [0.0], -1.0)], delta=1.0)


class TestDefaultDelta:
    def test_scales_with_the_cloud(self):
        rng = np.random.default_rng(4)
        cloud = rng.normal(size=(100, 3))
        assert default_delta(10.0 * cloud) == pytest.approx(10.0 * default_delta(cloud))

    def test_needs_two_vectors(self):
        with pytest.raises(ValueError):
            default_delta(np.zeros((1, 3)))


class TestRegressor:
    def test_constant_targets_converge_to_the_constant(self):
        rng = np.random.default_rng(5)
        X = rng.normal(0.0, 0.01, size=(60, 4))  # indistinguishable inputs
        y = np.full(60, -0.8)
        model = ExploitedLevelRegressor(epochs=300, random_state=0).fit(X, y)
        np.testing.assert_allclose(model.predict(X), 0.8, atol=0.05)

    def test_two_clusters_resolve(self):
        rng = np.random.default_rng(6)
        a = rng.normal(0, 0.05, size=(80, 3)) + np.array([1.5, 0, 0])
        b = rng.normal(0, 0.05, size=(80, 3)) - np.array([1.5, 0, 0])
        X = np.concatenate([a, b])
        y = np.concatenate([np.full(80, -0.1), np.full(80, -0.9)])
        model = ExploitedLevelRegressor(random_state=1).fit(X, y)
        assert model.predict(np.array([[1.5, 0, 0]]))[0] == pytest.approx(0.1, abs=0.05)
        assert model.predict(np.array([[-1.5, 0, 0]]))[0] == pytest.approx(0.9, abs=0.05)

    def test_winning_trajectories_contribute_no_loss_term(self):
        rng = np.random.default_rng(7)
        X = rng.normal(size=(40, 3))
        y = -np.abs(rng.normal(size=40))
        base = ExploitedLevelRegressor(epochs=50, random_state=2).fit(X, y)
        # Appending winners must leave the fitted parameters untouched.
        X2 = np.concatenate([X, rng.normal(size=(20, 3))])
        y2 = np.concatenate([y, np.abs(rng.normal(size=20)) + 0.1])
        again = ExploitedLevelRegressor(epochs=50, random_state=2).fit(X2, y2)
        for name in base.store_.names():
            np.testing.assert_array_equal(base.store_[name].data, again.store_[name].data)

    def test_predictions_are_nonnegative_everywhere(self):
        rng = np.random.default_rng(8)
        X = rng.normal(size=(30, 2))
        y = rng.normal(size=30) - 0.5
        model = ExploitedLevelRegressor(epochs=100, random_state=3).fit(X, y)
        probes = rng.uniform(-50, 50, size=(200, 2))
        assert np.all(model.predict(probes) >= 0.0)

    def test_prediction_is_deterministic(self):
        rng = np.random.default_rng(9)
        X, y = rng.normal(size=(25, 2)), -np.abs(rng.normal(size=25))
        model = ExploitedLevelRegressor(epochs=50, random_state=4).fit(X, y)
        np.testing.assert_array_equal(model.predict(X), model.predict(X))

    def test_all_winning_rewards_is_an_error(self):
        with pytest.raises(ValueError, match="losing"):
            ExploitedLevelRegressor().fit(np.zeros((5, 2)), np.ones(5))

    def test_save_load_round_trip(self, tmp_path):
        rng = np.random.default_rng(10)
        X, y = rng.normal(size=(25, 3)), -np.abs(rng.normal(size=25))
        model = ExploitedLevelRegressor(epochs=50, random_state=5).fit(X, y)
        path = tmp_path / "el.ckpt"
        model.save(path)
        loaded = ExploitedLevelRegressor.load(path)
        np.testing.assert_array_equal(loaded.predict(X), model.predict(X))
        assert loaded.train_min_ == model.train_min_


class TestNormalization:
    def test_affine_example(self):
        np.testing.assert_allclose(normalize_el([1.0, 2.0, 3.0]), [0.0, 0.5, 1.0])

    def test_degenerate_range_maps_to_zero(self):
        np.testing.assert_array_equal(normalize_el([2.0, 2.0, 2.0]), np.zeros(3))

    @settings(max_examples=50, deadline=None)
    @given(
        st.lists(st.floats(min_value=-1e6, max_value=1e6), min_size=2, max_size=30)
    )
    def test_rank_order_is_preserved(self, values):
        values = np.asarray(values)
        scaled = normalize_el(values)
        # Monotone map: strict order never inverts (ties may appear).
        vi, vj = values[:, None], values[None, :]
        si, sj = scaled[:, None], scaled[None, :]
        assert not np.any((vi < vj) & (si > sj))
        assert np.all(scaled >= 0.0) and np.all(scaled <= 1.0)


class TestRecurrentVariant:
    def test_learns_to_separate_obvious_cases(self):
        rng = np.random.default_rng(11)
        seqs, rewards = [], []
        for i in range(40):
            heavy = i % 2 == 0
            obs = rng.normal(size=(6, 2))
            act = np.full(6, 0 if heavy else 1)
            seqs.append((obs, act))
            rewards.append(-2.0 if heavy else -0.2)
        model = RecurrentExploitedLevelEstimator(epochs=300, random_state=0).fit(
            seqs, np.array(rewards)
        )
        preds = model.predict(seqs)
        assert preds[::2].mean() > preds[1::2].mean()
        assert np.all(preds >= 0.0)

    def test_handles_mixed_lengths_and_is_deterministic(self):
        rng = np.random.default_rng(12)
        seqs = [
            (rng.normal(size=(n, 2)), rng.integers(2, size=n)) for n in (3, 5, 3, 5, 4)
        ]
        rewards = -np.abs(rng.normal(size=5))
        model = RecurrentExploitedLevelEstimator(epochs=20, random_state=1).fit(seqs, rewards)
        np.testing.assert_array_equal(model.predict(seqs), model.predict(seqs))
        again = RecurrentExploitedLevelEstimator(epochs=20, random_state=1).fit(seqs, rewards)
        np.testing.assert_array_equal(model.predict(seqs), again.predict(seqs))
