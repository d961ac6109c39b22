import copy
import json

import numpy as np
import pytest

from mczsl.errors import ConfigError
from mczsl.gradcheck import finite_difference_check
from mczsl.losses import LossWeights
from mczsl.numeric import make_rng
from mczsl.training import (
    Hyperparams,
    batch_loss_and_grads,
    load_checkpoint,
    make_intervention_attention,
    rmsprop_update,
    save_checkpoint,
    state_for_dataset,
    train,
    train_step,
)


def states_equal(a, b):
    return all(np.array_equal(a.params()[n], b.params()[n]) for n in a.params())


def clone_state(state):
    return copy.deepcopy(state)


class TestHyperparams:
    def test_paper_defaults_accepted(self):
        hp = Hyperparams()
        assert hp.learning_rate == 1e-4
        assert hp.batch_size == 50
        assert hp.momentum == 0.9
        assert hp.weight_decay == 1e-4

    def test_validation(self):
        with pytest.raises(ConfigError):
            Hyperparams(batch_size=0)
        with pytest.raises(ConfigError):
            Hyperparams(momentum=1.0)
        with pytest.raises(ConfigError):
            Hyperparams(intervention="nope")
        with pytest.raises(ConfigError):
            Hyperparams(learning_rate=-1e-4)


class TestInterventionAttention:
    def test_uniform(self):
        m = make_intervention_attention("uniform", 3, 4, None, None)
        assert np.array_equal(m, np.full((3, 4), 0.25))

    def test_random_rows_normalized_and_deterministic(self):
        a = make_intervention_attention("random", 5, 7, None, make_rng(3))
        b = make_intervention_attention("random", 5, 7, None, make_rng(3))
        assert np.array_equal(a, b)
        assert np.max(np.abs(a.sum(axis=1) - 1.0)) < 1e-6
        assert np.all(a > 0)

    def test_reversed_inverts_ranking(self):
        observed = np.array([[0.94, 0.02, 0.02, 0.02]])
        rev = make_intervention_attention("reversed", 1, 4, observed, None)
        assert np.max(np.abs(rev.sum(axis=1) - 1.0)) < 1e-9
        # the former-max entry is now strictly the smallest
        assert np.argmin(rev[0]) == 0
        # remaining entries are near-uniform among themselves
        rest = rev[0, 1:]
        assert np.max(rest) - np.min(rest) < 1e-9

    def test_reversed_orders_fully(self):
        observed = np.array([[0.5, 0.3, 0.2]])
        rev = make_intervention_attention("reversed", 1, 3, observed, None)
        assert rev[0, 0] < rev[0, 1] < rev[0, 2]

    def test_reversed_requires_normalized_observed(self):
        with pytest.raises(ValueError, match="sum to 1"):
            make_intervention_attention("reversed", 1, 3, np.array([[0.5, 0.3, 0.5]]), None)

    def test_alternation(self):
        obs = np.array([[0.7, 0.2, 0.1]])
        even = make_intervention_attention("random_plus_reversed", 1, 3, obs,
                                           make_rng(0), alternation_index=0)
        rand = make_intervention_attention("random", 1, 3, obs, make_rng(0))
        assert np.array_equal(even, rand)
        odd = make_intervention_attention("random_plus_reversed", 1, 3, obs,
                                          make_rng(0), alternation_index=1)
        rev = make_intervention_attention("reversed", 1, 3, obs, None)
        assert np.array_equal(odd, rev)

    def test_unknown_kind(self):
        with pytest.raises(ValueError, match="unknown intervention"):
            make_intervention_attention("shuffled", 2, 2, None, make_rng(0))


class TestTrainStep:
    def test_zero_learning_rate_freezes_parameters(self, small_dataset):
        state = state_for_dataset(small_dataset, make_rng(0))
        before = clone_state(state)
        hp = Hyperparams(learning_rate=0.0, batch_size=4, epochs=1, seed=0)
        train_step(small_dataset.split.train_idx[:4], small_dataset, state, hp, make_rng(1))
        assert states_equal(before, state)

    def test_descent_on_repeated_small_batch(self, small_dataset):
        state = state_for_dataset(small_dataset, make_rng(0))
        hp = Hyperparams(learning_rate=1e-3, batch_size=2, epochs=1, seed=0)
        batch = small_dataset.split.train_idx[:2]
        rng = make_rng(5)
        first = train_step(batch, small_dataset, state, hp, rng).total
        last = first
        for _ in range(49):
            last = train_step(batch, small_dataset, state, hp, rng).total
        assert last < first

    def test_bit_identical_across_runs(self, small_dataset):
        finals = []
        for _ in range(2):
            state = state_for_dataset(small_dataset, make_rng(0))
            hp = Hyperparams(learning_rate=1e-3, batch_size=3, epochs=1, seed=0)
            rng = make_rng(9)
            for _ in range(5):
                train_step(small_dataset.split.train_idx[:3], small_dataset, state, hp, rng)
            finals.append(state)
        assert states_equal(finals[0], finals[1])

    def test_empty_batch_rejected(self, small_dataset):
        state = state_for_dataset(small_dataset, make_rng(0))
        with pytest.raises(ValueError, match="nonempty"):
            train_step([], small_dataset, state, Hyperparams(), make_rng(0))

    def test_report_satisfies_total_identity(self, small_dataset):
        state = state_for_dataset(small_dataset, make_rng(0))
        hp = Hyperparams(learning_rate=1e-3, batch_size=4)
        r = train_step(small_dataset.split.train_idx[:4], small_dataset, state, hp, make_rng(2))
        w = hp.loss_weights
        expected = (r.acec + w.lambda_ar * r.ar + w.lambda_causal * r.causal
                    + w.lambda_distill * r.distill)
        assert abs(r.total - expected) < 1e-9


class TestRmsprop:
    def test_zero_gradient_no_weight_decay_is_noop(self, small_dataset):
        state = state_for_dataset(small_dataset, make_rng(0))
        before = clone_state(state)
        for g in state.grads.values():
            g[:] = 0.0
        rmsprop_update(state, Hyperparams(learning_rate=0.1, weight_decay=0.0))
        assert states_equal(before, state)

    def test_decoupled_weight_decay_shrinks_parameters(self, small_dataset):
        state = state_for_dataset(small_dataset, make_rng(0))
        before = clone_state(state)
        for g in state.grads.values():
            g[:] = 0.0
        hp = Hyperparams(learning_rate=0.5, weight_decay=0.1)
        rmsprop_update(state, hp)
        for name in state.params():
            assert np.allclose(state.params()[name],
                               before.params()[name] * (1 - 0.5 * 0.1), atol=1e-15)


class TestTrain:
    def test_zero_epochs_returns_initialized_state(self, small_dataset):
        hp = Hyperparams(epochs=0, seed=42)
        state, log = train(small_dataset, hp)
        from mczsl.numeric import spawn_rngs
        expected = state_for_dataset(small_dataset, spawn_rngs(42, 3)[0])
        assert states_equal(state, expected)
        assert log.epoch_reports == []

    def test_loss_trend_downward(self, small_dataset):
        hp = Hyperparams(learning_rate=3e-3, batch_size=4, epochs=10, seed=1)
        state, log = train(small_dataset, hp)
        assert len(log.epoch_reports) == 10
        assert log.epoch_reports[-1].total < log.epoch_reports[0].total

    def test_deterministic_given_seed(self, small_dataset):
        hp = Hyperparams(learning_rate=1e-3, batch_size=4, epochs=3, seed=7)
        s1, _ = train(small_dataset, hp)
        s2, _ = train(small_dataset, hp)
        assert states_equal(s1, s2)

    def test_intervention_stream_is_isolated_when_causal_weight_zero(self, small_dataset):
        weights = LossWeights(lambda_causal=0.0)
        base = dict(learning_rate=1e-3, batch_size=4, epochs=3, seed=7, loss_weights=weights)
        s1, _ = train(small_dataset, Hyperparams(**base, intervention_seed=111))
        s2, _ = train(small_dataset, Hyperparams(**base, intervention_seed=222))
        assert states_equal(s1, s2)

    def test_intervention_stream_matters_with_causal_loss(self, small_dataset):
        base = dict(learning_rate=1e-3, batch_size=4, epochs=3, seed=7)
        s1, _ = train(small_dataset, Hyperparams(**base, intervention_seed=111))
        s2, _ = train(small_dataset, Hyperparams(**base, intervention_seed=222))
        assert not states_equal(s1, s2)

    def test_no_training_samples_rejected(self, small_dataset):
        small_dataset.split.train_idx.clear()
        with pytest.raises(ValueError, match="no training samples"):
            train(small_dataset, Hyperparams(epochs=1, learning_rate=1e-3))

    def test_short_final_batch_kept(self, small_dataset):
        # 6 train samples, batch 4 -> batches of 4 and 2
        assert len(small_dataset.split.train_idx) == 6
        hp = Hyperparams(learning_rate=1e-3, batch_size=4, epochs=1, seed=0)
        _, log = train(small_dataset, hp)
        assert len(log.epoch_reports) == 1


def test_gradient_fidelity_at_checkpoint(small_dataset):
    # a few steps in, the analytic batch gradient still matches central differences
    state = state_for_dataset(small_dataset, make_rng(1))
    hp = Hyperparams(learning_rate=1e-3, batch_size=3)
    rng = make_rng(2)
    for _ in range(3):
        train_step(small_dataset.split.train_idx[:3], small_dataset, state, hp, rng)

    K, R = small_dataset.num_attributes, small_dataset.num_regions
    irng = make_rng(3)
    frozen = [(make_intervention_attention("random", K, R, None, irng),
               make_intervention_attention("random", R, K, None, irng))
              for _ in range(3)]
    batch = small_dataset.split.train_idx[:3]

    def loss_fn(params):
        rep, grads = batch_loss_and_grads(batch, small_dataset, params,
                                          hp.loss_weights, lambda p, b, g: frozen[p])
        return rep.total, grads

    report = finite_difference_check(loss_fn, state.params(), epsilon=1e-5, tolerance=1e-4)
    assert report.passed, report


class TestCheckpoint:
    def test_round_trip(self, tmp_path, small_dataset):
        state = state_for_dataset(small_dataset, make_rng(0))
        hp = Hyperparams(epochs=2, seed=5)
        save_checkpoint(state, hp, tmp_path / "ck", epoch=2)
        loaded, meta = load_checkpoint(tmp_path / "ck")
        for name in state.params():
            saved = state.params()[name].astype(np.float32).astype(np.float64)
            assert np.array_equal(loaded.params()[name], saved)
        assert meta["epoch"] == 2
        assert meta["seed"] == 5
        assert meta["hyperparams"]["batch_size"] == 50

    def test_metadata_has_no_wall_clock(self, tmp_path, small_dataset):
        state = state_for_dataset(small_dataset, make_rng(0))
        save_checkpoint(state, Hyperparams(), tmp_path / "ck", epoch=0)
        meta = json.loads((tmp_path / "ck" / "metadata.json").read_text())
        assert "seconds" not in json.dumps(meta)

    def test_missing_checkpoint(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_checkpoint(tmp_path / "absent")
