import math

import numpy as np
import pytest

from embsum import geometry
from embsum.corpus import gen_synthetic, SyntheticConfig
from embsum.model import PARAM_NAMES, init_params, run_decoder
from embsum.training import (TrainConfig, TrainingError, backward,
                             clip_global_norm, gradient_check, loss_forward,
                             step_losses, train)

from conftest import make_corpus, random_units, unit


class TestStepLosses:
    def test_stationary_trace_zero_losses(self, rng):
        p = init_params(4, 2, seed=0)
        v = unit(rng.standard_normal(4))
        trace = run_decoder(p, np.tile(v, (3, 1)))
        trace.y_hat[:] = trace.y_hat_init  # force a motionless chain
        sl = step_losses(trace, unit(rng.standard_normal(4)), skip_first=False)
        assert np.allclose(sl.losses, 0.0)
        assert sl.total == 0.0

    def test_telescoping(self, rng):
        p = init_params(6, 3, seed=1)
        X = random_units(rng, 10, 6)
        y = unit(rng.standard_normal(6))
        trace = run_decoder(p, X)
        sl = step_losses(trace, y, skip_first=False)
        expected = geometry.angle(trace.y_hat[-1], y) - geometry.angle(trace.y_hat_init, y)
        assert sl.total == pytest.approx(expected, abs=1e-9 * 10)

    def test_hand_example(self, rng):
        p = init_params(2, 1, seed=0)
        trace = run_decoder(p, np.array([[0.0, 1.0], [1.0, 0.0]]))
        trace.y_hat_init = np.array([0.0, 1.0])
        trace.y_hat = np.array([[0.0, 1.0], [1.0, 1.0]])
        sl = step_losses(trace, [1.0, 0.0], skip_first=True)
        assert sl.losses[1] == pytest.approx(math.pi / 4 - math.pi / 2, abs=1e-9)
        assert sl.total == pytest.approx(-math.pi / 4, abs=1e-9)

    def test_skip_first_excludes_step0(self, rng):
        p = init_params(4, 2, seed=2)
        X = random_units(rng, 4, 4)
        y = unit(rng.standard_normal(4))
        trace = run_decoder(p, X)
        a = step_losses(trace, y, skip_first=True)
        b = step_losses(trace, y, skip_first=False)
        assert a.total == pytest.approx(b.total - b.losses[0], abs=1e-12)

    def test_printed_sign_flips(self, rng):
        p = init_params(4, 2, seed=2)
        X = random_units(rng, 4, 4)
        y = unit(rng.standard_normal(4))
        trace = run_decoder(p, X)
        a = step_losses(trace, y, loss_sign="prose")
        b = step_losses(trace, y, loss_sign="printed")
        assert np.allclose(a.losses, -b.losses)

    def test_zero_target_rejected(self, rng):
        p = init_params(4, 2, seed=0)
        trace = run_decoder(p, random_units(rng, 2, 4))
        with pytest.raises(TrainingError):
            step_losses(trace, np.zeros(4))


class TestBackward:
    def test_skip_first_single_step_all_zero(self, rng):
        p = init_params(4, 2, seed=0)
        X = random_units(rng, 1, 4)
        y = unit(rng.standard_normal(4))
        sl, grads = backward(p, X, y, TrainConfig())
        assert sl.total == 0.0
        assert all(np.all(g == 0.0) for g in grads.values())

    def test_matches_finite_differences(self):
        report = gradient_check(8, 4, 5, seed=0)
        assert report["max_rel_err"] < 1e-4

    def test_fd_with_first_step_included(self):
        report = gradient_check(6, 3, 4, seed=3,
                                config=TrainConfig(skip_first_step_loss=False))
        assert report["max_rel_err"] < 1e-4

    def test_fd_printed_sign(self):
        report = gradient_check(6, 3, 4, seed=4,
                                config=TrainConfig(loss_sign="printed"))
        assert report["max_rel_err"] < 1e-4

    def test_score_bias_gradient_nonzero(self, rng):
        p = init_params(6, 3, seed=5)
        X = random_units(rng, 5, 6)
        y = unit(rng.standard_normal(6))
        _, grads = backward(p, X, y, TrainConfig())
        assert abs(grads["b_sc"][0]) > 0.0

    def test_stop_similarity_gradient_changes_result(self, rng):
        p = init_params(6, 3, seed=6)
        X = random_units(rng, 5, 6)
        y = unit(rng.standard_normal(6))
        _, g_full = backward(p, X, y, TrainConfig())
        _, g_stop = backward(p, X, y, TrainConfig(backprop_similarities=False))
        assert not np.allclose(g_full["W_ogy"], g_stop["W_ogy"])


class TestClipping:
    def test_below_threshold_untouched(self, rng):
        grads = {"a": rng.standard_normal(4) * 0.1, "b": rng.standard_normal(3) * 0.1}
        before = {k: v.copy() for k, v in grads.items()}
        clip_global_norm(grads, 100.0)
        assert all(np.array_equal(before[k], grads[k]) for k in grads)

    def test_above_threshold_scaled_to_norm(self, rng):
        grads = {"a": rng.standard_normal(50) * 10}
        clip_global_norm(grads, 1.0)
        total = math.sqrt(sum(float(np.sum(v * v)) for v in grads.values()))
        assert total == pytest.approx(1.0)


class TestTrain:
    def test_lr_zero_leaves_params(self, rng):
        corpus = make_corpus(rng, n_docs=2, n_sentences=3, d=4)
        p = init_params(4, 2, seed=0)
        trained, _ = train(p, corpus, TrainConfig(learning_rate=0.0, epochs=3,
                                                  optimizer="sgd"))
        assert all(np.array_equal(p.arrays[n], trained.arrays[n]) for n in PARAM_NAMES)

    def test_deterministic(self, rng):
        corpus = make_corpus(rng, n_docs=3, n_sentences=4, d=4)
        p = init_params(4, 2, seed=0)
        a, _ = train(p, corpus, TrainConfig(epochs=3, seed=7))
        b, _ = train(p, corpus, TrainConfig(epochs=3, seed=7))
        assert all(np.array_equal(a.arrays[n], b.arrays[n]) for n in PARAM_NAMES)

    def test_missing_target_rejected(self, rng):
        corpus = make_corpus(rng, n_docs=2, n_sentences=3, d=4, with_targets=False)
        with pytest.raises(TrainingError, match="no target"):
            train(init_params(4, 2, seed=0), corpus, TrainConfig(epochs=1))

    def test_synthetic_angle_decreases_over_first_epochs(self):
        corpus, _ = gen_synthetic(SyntheticConfig(
            n_docs=40, sentences_per_doc=10, dim=16, planted_count=3,
            noise_scale=0.1, seed=0))
        p = init_params(16, 4, seed=0)
        _, log = train(p, corpus, TrainConfig(epochs=5, seed=0))
        angles = [r["mean_final_angle"] for r in log]
        assert all(angles[i + 1] < angles[i] for i in range(4))

    def test_log_schema(self, rng):
        corpus = make_corpus(rng, n_docs=2, n_sentences=3, d=4)
        _, log = train(init_params(4, 2, seed=0), corpus, TrainConfig(epochs=2))
        assert [r["epoch"] for r in log] == [0, 1]
        assert all({"epoch", "mean_loss", "mean_final_angle", "wall_ms"} <= set(r)
                   for r in log)


class TestGradCheckHarness:
    def test_vacuous_case_flagged(self):
        report = gradient_check(4, 2, 1, seed=0)
        assert report["all_zero"]
        assert report["max_rel_err"] == 0.0

    def test_guard(self):
        with pytest.raises(TrainingError, match="guard"):
            gradient_check(1000, 1000, 10)
