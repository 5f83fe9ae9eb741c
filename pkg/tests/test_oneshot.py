"""Tests for chain sampling, average-likelihood scoring, and episodic classification."""

import numpy as np
import pytest

from chainorder import (Dataset, Episode, GatedTransitionNet, build_episode,
                        class_chain, class_log_likelihood, classify, derive_rng,
                        log_transition, transition_stats)


def build_net(kind="continuous", p=2, seed=0):
    return GatedTransitionNet.build(p, (6,), kind, 0.0, np.random.default_rng(seed))


class TestClassChain:
    def test_zero_length_chain_is_empty(self):
        net = build_net()
        chain = class_chain(net, np.zeros(2), 0, np.random.default_rng(0))
        assert chain.shape == (0, 2)

    def test_fixed_seed_reproduces_chain(self):
        net = build_net(seed=1)
        s = np.array([0.5, -0.5])
        a = class_chain(net, s, 5, np.random.default_rng(3))
        b = class_chain(net, s, 5, np.random.default_rng(3))
        assert np.array_equal(a, b)

    def test_floor_variance_follows_iterated_mean_map(self):
        net = build_net(seed=2)
        net.variance_head.layers[-1].bias[:] = -50.0  # sd = exp(-5) per step
        s = np.array([0.1, 0.2])
        chain = class_chain(net, s, 5, np.random.default_rng(4))
        cur = s
        for i in range(5):
            cur, _ = transition_stats(net, cur)
            assert np.all(np.abs(chain[i] - cur) < 3e-2)

    def test_negative_length_rejected(self):
        with pytest.raises(ValueError, match="k"):
            class_chain(build_net(), np.zeros(2), -1, np.random.default_rng(0))


class TestClassLogLikelihood:
    def test_empty_chain_is_single_transition(self):
        net = build_net(seed=3)
        rng = np.random.default_rng(5)
        support, query = rng.normal(size=2), rng.normal(size=2)
        got = class_log_likelihood(net, support, np.empty((0, 2)), query)
        assert np.isclose(got, log_transition(net, support, query))

    def test_constant_chain_collapses_to_one_term(self):
        net = build_net(seed=4)
        rng = np.random.default_rng(6)
        state, query = rng.normal(size=2), rng.normal(size=2)
        chain = np.tile(state, (4, 1))
        got = class_log_likelihood(net, state, chain, query)
        assert np.isclose(got, log_transition(net, state, query))

    def test_matches_directly_averaged_terms(self):
        net = build_net(seed=5)
        rng = np.random.default_rng(7)
        support, query = rng.normal(size=2), rng.normal(size=2)
        chain = rng.normal(size=(2, 2))
        a = log_transition(net, support, query)
        b = log_transition(net, chain[0], query)
        c = log_transition(net, chain[1], query)
        assert np.isclose(class_log_likelihood(net, support, chain, query), (a + b + c) / 3)


class TestClassify:
    def test_single_class_is_always_correct(self):
        net = build_net(seed=6)
        rng = np.random.default_rng(8)
        episode = Episode(rng.normal(size=(1, 2)), rng.normal(size=(5, 2)),
                          np.zeros(5, dtype=int), k=3)
        result = classify(net, episode, rng)
        assert result.accuracy == 1.0

    def test_separated_clusters_with_near_identity_gate(self):
        net = build_net(seed=7)
        net.gate_head.layers[-1].bias[:] = -50.0  # mean sticks to the source state
        supports = np.array([[0.0, 0.0], [30.0, 30.0]])
        rng = np.random.default_rng(9)
        queries = np.vstack([rng.normal(0.0, 0.3, (6, 2)),
                             rng.normal(30.0, 0.3, (6, 2))])
        labels = np.array([0] * 6 + [1] * 6)
        result = classify(net, Episode(supports, queries, labels, k=2), rng)
        assert result.accuracy == 1.0

    def test_zero_chain_reduces_to_nearest_support_by_log_transition(self):
        net = build_net(seed=8)
        rng = np.random.default_rng(10)
        supports = rng.normal(size=(4, 2))
        queries = rng.normal(size=(7, 2))
        labels = np.zeros(7, dtype=int)
        result = classify(net, Episode(supports, queries, labels, k=0), rng)
        for q in range(7):
            direct = [log_transition(net, supports[c], queries[q]) for c in range(4)]
            assert result.predictions[q] == int(np.argmax(direct))

    def test_predictions_are_argmax_of_reported_likelihoods(self):
        net = build_net(seed=9)
        rng = np.random.default_rng(11)
        episode = Episode(rng.normal(size=(3, 2)), rng.normal(size=(6, 2)),
                          rng.integers(0, 3, 6), k=2)
        result = classify(net, episode, rng)
        assert np.array_equal(result.predictions,
                              np.argmax(result.class_log_likelihoods, axis=1))
        # shifting every class score equally cannot change any decision
        shifted = np.argmax(result.class_log_likelihoods + 123.4, axis=1)
        assert np.array_equal(result.predictions, shifted)

    def test_empty_query_set_flags_undefined_accuracy(self):
        net = build_net(seed=10)
        episode = Episode(np.zeros((2, 2)), np.empty((0, 2)), np.empty(0, dtype=int), k=1)
        result = classify(net, episode, np.random.default_rng(0))
        assert result.accuracy is None
        assert len(result.predictions) == 0

    def test_fixed_seed_reproduces_predictions(self):
        net = build_net(seed=11)
        rng = np.random.default_rng(12)
        episode = Episode(rng.normal(size=(3, 2)), rng.normal(size=(9, 2)),
                          rng.integers(0, 3, 9), k=4)
        a = classify(net, episode, np.random.default_rng(5))
        b = classify(net, episode, np.random.default_rng(5))
        assert np.array_equal(a.predictions, b.predictions)
        assert np.array_equal(a.class_log_likelihoods, b.class_log_likelihoods)


def cluster_datasets(n_classes=5, n_per=20, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for c in range(n_classes):
        center = 3.0 * np.array([np.cos(2 * np.pi * c / n_classes),
                                 np.sin(2 * np.pi * c / n_classes)])
        out.append(Dataset(center + rng.normal(0, 0.05, (n_per, 2)), "continuous"))
    return out


class TestBuildEpisode:
    def test_way_exceeding_classes_rejected(self):
        with pytest.raises(ValueError, match="classes"):
            build_episode(cluster_datasets(3), 4, 2, 5, np.random.default_rng(0))

    def test_insufficient_instances_rejected(self):
        small = [Dataset(np.zeros((2, 2)), "continuous") for _ in range(3)]
        with pytest.raises(ValueError, match="instances"):
            build_episode(small, 3, 5, 2, np.random.default_rng(0))

    def test_zero_queries_allowed(self):
        episode = build_episode(cluster_datasets(), 5, 0, 3, np.random.default_rng(1))
        assert len(episode.query_values) == 0
        assert episode.way == 5

    def test_supports_and_queries_disjoint_within_class(self):
        sets = cluster_datasets()
        episode = build_episode(sets, 5, 3, 2, np.random.default_rng(2))
        for c in range(5):
            mask = episode.query_labels == c
            qs = episode.query_values[mask]
            assert not any(np.array_equal(episode.supports[c], q) for q in qs)

    def test_labels_cover_expected_range(self):
        episode = build_episode(cluster_datasets(), 5, 2, 1, np.random.default_rng(3))
        assert sorted(set(episode.query_labels.tolist())) == [0, 1, 2, 3, 4]

    def test_seeded_build_is_deterministic(self):
        sets = cluster_datasets()
        a = build_episode(sets, 4, 2, 3, np.random.default_rng(9))
        b = build_episode(sets, 4, 2, 3, np.random.default_rng(9))
        assert np.array_equal(a.supports, b.supports)
        assert np.array_equal(a.query_values, b.query_values)
        assert np.array_equal(a.query_labels, b.query_labels)


def test_random_model_five_way_accuracy_near_chance():
    # small-scale clusters: a random operator's scores carry almost no class
    # signal, so 5-way accuracy sits near 0.2
    sets = [Dataset(v.values * 0.2, "continuous") for v in cluster_datasets(seed=4)]
    net = build_net(seed=12)
    accs = []
    for ep in range(300):
        rng = derive_rng(31, f"episode:{ep}")
        episode = build_episode(sets, 5, 2, 5, rng)
        accs.append(classify(net, episode, rng).accuracy)
    assert abs(np.mean(accs) - 0.2) < 0.05
