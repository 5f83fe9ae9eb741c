"""Tests for batch sampling, the training loop, and model persistence."""

import json

import numpy as np
import pytest

import chainorder.training as training_mod
from chainorder import (AdamState, Dataset, GatedTransitionNet, ModelDimensionError,
                        ModelFormatError, ModelVersionError, TrainConfig,
                        TrainHistory, TrainingError, adam_step, derive_rng,
                        gen_rotation_chain, load_model, log_transition_grad,
                        sample_batch, save_model, shuffle_with_truth, train)


def rotation_dataset(n=32, seed=7, noise=0.02):
    traj = gen_rotation_chain(n, 1.0, 0.9 * 2 * np.pi / n, noise, derive_rng(seed, "gen"))
    ds, _ = shuffle_with_truth(traj, derive_rng(seed, "shuffle"))
    return ds


class TestSampleBatch:
    def test_first_call_is_full_fresh_sample(self):
        batch = sample_batch(20, None, 6, 3, np.random.default_rng(0))
        assert len(batch) == 6
        assert len(set(batch.tolist())) == 6

    def test_no_overlap_gives_fresh_batch(self):
        prev = np.arange(6)
        batch = sample_batch(50, prev, 6, 0, np.random.default_rng(1))
        assert len(set(batch.tolist())) == 6
        assert not set(batch.tolist()) & set(prev.tolist())

    def test_maximal_overlap_renews_one_index(self):
        prev = np.array([3, 1, 4, 1 + 10, 5, 9])
        batch = sample_batch(30, prev, 6, 5, np.random.default_rng(2))
        assert np.array_equal(batch[1:], prev[:5])
        assert batch[0] not in set(prev.tolist())

    def test_documented_example(self):
        prev = np.array([4, 9, 1, 7, 3, 0])
        for seed in range(20):
            batch = sample_batch(12, prev, 6, 2, np.random.default_rng(seed))
            assert len(batch) == 6
            assert len(set(batch.tolist())) == 6
            assert np.array_equal(batch[4:], [4, 9])
            assert set(batch.tolist()) & set(prev.tolist()) == {4, 9}

    def test_overlap_is_exact_across_seeded_refreshes(self):
        rng = np.random.default_rng(3)
        batch = sample_batch(100, None, 20, 5, rng)
        for _ in range(200):
            new = sample_batch(100, batch, 20, 5, rng)
            assert len(new) == 20
            assert len(set(new.tolist())) == 20
            assert len(set(new.tolist()) & set(batch.tolist())) == 5
            batch = new

    def test_full_batch_fallback_keeps_size(self):
        rng = np.random.default_rng(4)
        batch = sample_batch(10, None, 10, 0, rng)
        again = sample_batch(10, batch, 10, 0, rng)
        assert sorted(again.tolist()) == list(range(10))

    def test_oversized_batch_rejected(self):
        with pytest.raises(ValueError, match="exceeds"):
            sample_batch(5, None, 6, 0, np.random.default_rng(0))

    def test_short_prev_batch_rejected(self):
        with pytest.raises(ValueError, match="previous batch"):
            sample_batch(20, np.array([1, 2]), 6, 3, np.random.default_rng(0))


class TestTrainConfig:
    def test_invariants_enforced(self):
        with pytest.raises(ValueError, match="total_steps"):
            TrainConfig(batch_size=8, total_steps=0).validate(16)
        with pytest.raises(ValueError, match="overlap"):
            TrainConfig(batch_size=8, total_steps=1, overlap=8).validate(16)
        with pytest.raises(ValueError, match="exceeds"):
            TrainConfig(batch_size=32, total_steps=1).validate(16)
        with pytest.raises(ValueError, match="refresh"):
            TrainConfig(batch_size=8, total_steps=1, refresh_period=0).validate(16)

    def test_valid_config_passes(self):
        TrainConfig(batch_size=8, total_steps=5, overlap=2).validate(16)


class TestTrainLoop:
    def quick_config(self, n, steps=40, **kw):
        defaults = dict(batch_size=n, total_steps=steps, overlap=0, refresh_period=1,
                        hidden_sizes=(8,), lr=1e-3, dropout_rate=0.0, seed=3)
        defaults.update(kw)
        return TrainConfig(**defaults)

    def test_log_likelihood_improves_on_rotation_data(self):
        ds = rotation_dataset(32)
        config = TrainConfig(batch_size=32, total_steps=2000, overlap=0,
                             refresh_period=1, hidden_sizes=(8,), lr=1e-3,
                             dropout_rate=0.2, seed=1, num_starts=1)
        _, history = train(ds, config)
        assert len(history) == 2000
        assert history.log_likelihoods[-1] > history.log_likelihoods[0]

    def test_identical_seeds_reproduce_parameters_bitwise(self):
        ds = rotation_dataset(16)
        config = self.quick_config(16, seed=11, dropout_rate=0.2)
        net_a, hist_a = train(ds, config)
        net_b, hist_b = train(ds, config)
        assert np.array_equal(net_a.flat_params(), net_b.flat_params())
        assert hist_a.log_likelihoods == hist_b.log_likelihoods

    def test_history_is_one_record_per_step(self):
        ds = rotation_dataset(16)
        _, history = train(ds, self.quick_config(16, steps=25))
        assert history.steps == list(range(1, 26))

    def test_greedy_order_recomputed_every_step(self, monkeypatch):
        calls = {"n": 0}
        original = training_mod.greedy_order

        def counting(scorer):
            calls["n"] += 1
            return original(scorer)

        monkeypatch.setattr(training_mod, "greedy_order", counting)
        ds = rotation_dataset(12)
        train(ds, self.quick_config(12, steps=9, batch_size=8, refresh_period=4))
        assert calls["n"] == 9

    def test_batch_refresh_follows_period(self, monkeypatch):
        refreshes = {"n": 0}
        original = training_mod.sample_batch

        def counting(*args, **kw):
            refreshes["n"] += 1
            return original(*args, **kw)

        monkeypatch.setattr(training_mod, "sample_batch", counting)
        ds = rotation_dataset(16)
        train(ds, self.quick_config(16, steps=10, batch_size=8, refresh_period=3))
        # refresh at k = 1, 4, 7, 10
        assert refreshes["n"] == 4

    def test_kind_mismatch_model_building(self):
        ds = Dataset((np.random.default_rng(0).random((12, 4)) < 0.5).astype(float),
                     "binary")
        net, _ = train(ds, self.quick_config(12, steps=3))
        assert net.kind == "binary"
        assert net.variance_head is None

    def test_divergence_aborts_with_step_diagnostic(self):
        values = np.random.default_rng(0).normal(size=(8, 2)) * 1e160
        ds = Dataset(values, "continuous")
        with pytest.raises(TrainingError, match="step 1"):
            train(ds, self.quick_config(8, steps=3))

    def test_metadata_recorded_on_model(self):
        ds = rotation_dataset(16)
        net, _ = train(ds, self.quick_config(16, steps=5, seed=21))
        assert net.seed == 21
        assert net.train_steps == 5


def test_fixed_permutation_ascent_is_nearly_monotone():
    # fixed batch, fixed chain: 50 ADAM steps must never dip below the start
    # by more than 10% of the improvement range, and must end above it
    ds = rotation_dataset(24, seed=5)
    perm = np.random.default_rng(0).permutation(24)
    src, tgt = ds.values[perm[:-1]], ds.values[perm[1:]]
    net = GatedTransitionNet.build(2, (8,), "continuous", 0.0, derive_rng(4, "init"))
    params = net.flat_params()
    adam = AdamState.fresh(params.size, lr=1e-3)
    lls = []
    for _ in range(50):
        lp, grad = log_transition_grad(net, src, tgt)
        lls.append(lp)
        params = adam_step(params, -grad, adam)
        net.set_flat_params(params)
    lp_final, _ = log_transition_grad(net, src, tgt)
    lls.append(lp_final)
    improvement = max(lls) - lls[0]
    assert lls[-1] > lls[0]
    assert min(lls) >= lls[0] - 0.1 * improvement


class TestTrainHistory:
    def test_rejects_non_increasing_steps(self):
        hist = TrainHistory()
        hist.append(1, -5.0, 1.0)
        with pytest.raises(ValueError, match="increasing"):
            hist.append(1, -4.0, 1.0)


class TestPersistence:
    def trained_net(self, tmp_path, kind="continuous"):
        if kind == "continuous":
            ds = rotation_dataset(12)
        else:
            vals = (np.random.default_rng(1).random((12, 3)) < 0.5).astype(float)
            ds = Dataset(vals, "binary")
        config = TrainConfig(batch_size=12, total_steps=4, hidden_sizes=(6,),
                             dropout_rate=0.1, seed=9)
        net, _ = train(ds, config)
        return net

    @pytest.mark.parametrize("kind", ["continuous", "binary"])
    def test_round_trip_is_bitwise(self, tmp_path, kind):
        net = self.trained_net(tmp_path, kind)
        path = tmp_path / "model.json"
        save_model(net, path)
        loaded = load_model(path)
        assert np.array_equal(loaded.flat_params(), net.flat_params())
        assert loaded.kind == net.kind
        assert loaded.seed == net.seed
        assert loaded.train_steps == net.train_steps
        assert loaded.dropout_rate == net.dropout_rate

    def test_save_is_byte_stable(self, tmp_path):
        net = self.trained_net(tmp_path)
        p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
        save_model(net, p1)
        save_model(net, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_truncated_file_rejected(self, tmp_path):
        net = self.trained_net(tmp_path)
        path = tmp_path / "model.json"
        save_model(net, path)
        path.write_text(path.read_text()[:100])
        with pytest.raises(ModelFormatError):
            load_model(path)

    def test_unsupported_version_rejected(self, tmp_path):
        net = self.trained_net(tmp_path)
        path = tmp_path / "model.json"
        save_model(net, path)
        doc = json.loads(path.read_text())
        doc["format_version"] = 99
        path.write_text(json.dumps(doc))
        with pytest.raises(ModelVersionError):
            load_model(path)

    def test_parameter_count_mismatch_rejected(self, tmp_path):
        net = self.trained_net(tmp_path)
        path = tmp_path / "model.json"
        save_model(net, path)
        doc = json.loads(path.read_text())
        doc["params"] = doc["params"][:-3]
        path.write_text(json.dumps(doc))
        with pytest.raises(ModelDimensionError):
            load_model(path)

    def test_missing_field_rejected(self, tmp_path):
        net = self.trained_net(tmp_path)
        path = tmp_path / "model.json"
        save_model(net, path)
        doc = json.loads(path.read_text())
        del doc["kind"]
        path.write_text(json.dumps(doc))
        with pytest.raises(ModelFormatError, match="missing"):
            load_model(path)

    def test_loaded_model_reproduces_log_densities(self, tmp_path):
        from chainorder import log_transition

        net = self.trained_net(tmp_path)
        path = tmp_path / "model.json"
        save_model(net, path)
        loaded = load_model(path)
        rng = np.random.default_rng(0)
        s, t = rng.normal(size=2), rng.normal(size=2)
        assert log_transition(net, s, t) == log_transition(loaded, s, t)
