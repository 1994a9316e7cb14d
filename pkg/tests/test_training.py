import numpy as np
import pytest

import oclas
from oclas import (TrainerConfig, class_il_schedule, final_averages,
                   init_state, models_equal, on_task_boundary,
                   prediction_bias_histogram, run, stream_batches,
                   synthetic_gaussians, train_step)


def gaussian_stream(num_classes=4, per_class=60, dim=6, num_tasks=2,
                    data_seed=0, order_seed=3, shuffle_seed=4, scale=4.0):
    means = np.zeros((num_classes, dim))
    for c in range(num_classes):
        means[c, c % dim] = scale
    train = synthetic_gaussians(means, 1.0, [per_class] * num_classes,
                                seed=data_seed)
    test = synthetic_gaussians(means, 1.0, [20] * num_classes,
                               seed=data_seed + 1, split="test")
    return class_il_schedule(train, test, num_tasks, order_seed, shuffle_seed)


def small_config(algorithm, **kw):
    defaults = dict(algorithm=algorithm, learning_rate=0.05,
                    incoming_batch_size=8, buffer_batch_size=8,
                    memory_capacity=40, hidden_sizes=(16,), master_seed=11)
    defaults.update(kw)
    return TrainerConfig(**defaults)


class TestTrainStep:
    def test_head_tracks_observed_classes(self):
        sched = gaussian_stream()
        config = small_config("er")
        state = init_state(config, sched.train_data.feature_dim)
        seen = set()
        for batch in stream_batches(sched, config.incoming_batch_size):
            train_step(state, batch, config)
            seen |= {ex.label for ex in batch.examples}
            assert state.model.num_classes == len(seen)
            assert len(state.observed_labels) == len(seen)

    def test_one_gradient_step_per_batch(self):
        sched = gaussian_stream()
        config = small_config("er")
        result = run(sched, config)
        n_batches = sum(1 for _ in stream_batches(sched, 8))
        assert result.total_steps == n_batches

    def test_buffer_sees_only_incoming_examples(self):
        sched = gaussian_stream()
        config = small_config("er")
        state = init_state(config, sched.train_data.feature_dim)
        n_incoming = 0
        for batch in stream_batches(sched, config.incoming_batch_size):
            train_step(state, batch, config)
            n_incoming += len(batch.examples)
            assert state.buffer.seen_count == n_incoming

    def test_empty_batch_rejected(self):
        sched = gaussian_stream()
        config = small_config("er")
        state = init_state(config, sched.train_data.feature_dim)
        batch = oclas.StreamBatch([], 1, 0, True)
        with pytest.raises(ValueError, match="empty"):
            train_step(state, batch, config)

    def test_macro_estimator_needs_task_counts(self):
        sched = gaussian_stream()
        config = small_config("er_las", estimator="macro")
        state = init_state(config, sched.train_data.feature_dim)
        batch = next(stream_batches(sched, 8))
        with pytest.raises(RuntimeError, match="macro"):
            train_step(state, batch, config)


class TestTauZeroDegeneration:
    def test_er_equals_er_las_with_tau_zero_bitwise(self):
        sched = gaussian_stream()
        res_er = run(sched, small_config("er"))
        res_las = run(sched, small_config("er_las", tau=0.0))
        assert models_equal(res_er.model, res_las.model)
        assert res_er.matrix.rows == res_las.matrix.rows

    def test_er_with_no_memory_equals_fine_tune_bitwise(self):
        sched = gaussian_stream()
        res_er0 = run(sched, small_config("er", memory_capacity=0))
        res_ft = run(sched, small_config("fine_tune"))
        assert models_equal(res_er0.model, res_ft.model)


class TestTaskBoundaries:
    def test_non_kd_algorithms_never_snapshot(self):
        sched = gaussian_stream()
        for algo in ("fine_tune", "er", "er_las", "er_las_tau_inf",
                     "las_no_rehearsal"):
            result = run(sched, small_config(algo))
            assert result.teacher_snapshots == 0

    def test_boundary_hook_rejects_non_kd(self):
        config = small_config("er")
        state = init_state(config, 6)
        with pytest.raises(RuntimeError, match="boundaries"):
            on_task_boundary(state, config)

    def test_kd_las_snapshots_once_per_later_task(self):
        sched = gaussian_stream(num_classes=6, num_tasks=3)
        result = run(sched, small_config("kd_las"))
        assert result.teacher_snapshots == 2  # T - 1

    def test_teacher_is_bitwise_snapshot(self):
        sched = gaussian_stream()
        config = small_config("kd_las")
        state = init_state(config, sched.train_data.feature_dim)
        batches = list(stream_batches(sched, config.incoming_batch_size))
        train_step(state, batches[0], config)
        on_task_boundary(state, config)
        assert models_equal(state.teacher, state.model)
        train_step(state, batches[1], config)
        assert not models_equal(state.teacher, state.model)


class TestRunDeterminism:
    def test_identical_runs_are_bit_identical(self):
        sched = gaussian_stream()
        a = run(sched, small_config("er_las"))
        b = run(sched, small_config("er_las"))
        assert models_equal(a.model, b.model)
        assert a.matrix.rows == b.matrix.rows
        assert a.matrix.cbl_rows == b.matrix.cbl_rows
        assert a.manifest_sha256 == b.manifest_sha256

    def test_weight_init_isolated_from_algorithm_and_stream(self):
        init_a = init_state(small_config("er"), 6).model
        init_b = init_state(small_config("fine_tune"), 6).model
        init_c = init_state(small_config("er_las", estimator="random"), 6).model
        assert models_equal(init_a, init_b)
        assert models_equal(init_a, init_c)

    def test_different_seed_changes_model(self):
        sched = gaussian_stream()
        a = run(sched, small_config("er", master_seed=1))
        b = run(sched, small_config("er", master_seed=2))
        assert not models_equal(a.model, b.model)


class TestProbeTrace:
    def test_trace_steps_are_multiples_of_interval(self):
        sched = gaussian_stream()
        config = small_config("er", probe_interval=5, probe_subset_size=30)
        result = run(sched, config)
        assert result.trace, "probe trace expected"
        assert [s for s, _ in result.trace] == \
            [5 * (k + 1) for k in range(len(result.trace))]
        auc = oclas.auc_accuracy(result.trace, 5, result.total_steps)
        assert 0.0 <= auc <= 1.0

    def test_probes_disabled_by_default(self):
        sched = gaussian_stream()
        assert run(sched, small_config("er")).trace == []


class TestDirectionalBehavior:
    def test_fine_tune_collapses_to_last_task(self):
        sched = gaussian_stream(per_class=400, scale=2.0)
        config = small_config("fine_tune", master_seed=5, learning_rate=0.1)
        result = run(sched, config)
        hist = prediction_bias_histogram(result.model, sched.test_data, sched,
                                         result.observed_labels)
        assert hist.share(sched.num_tasks - 1) >= 0.9

    def test_prior_adjustment_beats_fine_tune_without_memory(self):
        sched = gaussian_stream(per_class=400, scale=2.0)
        ft = run(sched, small_config("fine_tune", master_seed=5,
                                     learning_rate=0.1))
        las = run(sched, small_config("las_no_rehearsal", master_seed=5,
                                      learning_rate=0.1))
        assert final_averages(las.matrix)[0] > final_averages(ft.matrix)[0] + 0.1

    def test_estimator_variants_run(self):
        sched = gaussian_stream()
        for estimator in ("sliding", "random", "macro"):
            result = run(sched, small_config("er_las", estimator=estimator))
            a_t, _, _ = final_averages(result.matrix)
            assert 0.0 <= a_t <= 1.0

    def test_kd_las_runs_and_uses_teacher(self):
        sched = gaussian_stream(num_classes=6, num_tasks=3)
        result = run(sched, small_config("kd_las", kd_weight=0.5))
        assert result.teacher_snapshots == 2
        a_t, _, _ = final_averages(result.matrix)
        assert a_t > 0.2


class TestPriorTraceRecording:
    def test_rows_cover_observed_classes(self):
        sched = gaussian_stream()
        config = small_config("er_las", record_prior_trace=True)
        result = run(sched, config)
        assert result.prior_trace
        steps = sorted({row[0] for row in result.prior_trace})
        assert steps == list(range(1, result.total_steps + 1))
        last_step_rows = [r for r in result.prior_trace
                          if r[0] == result.total_steps]
        assert {r[1] for r in last_step_rows} == set(result.observed_labels)
        for _, _, p in result.prior_trace:
            assert 0.0 < p <= 1.0


class TestConfigValidation:
    def test_unknown_algorithm(self):
        with pytest.raises(ValueError, match="unknown algorithm"):
            TrainerConfig(algorithm="sgd")

    def test_unknown_estimator(self):
        with pytest.raises(ValueError, match="unknown estimator"):
            TrainerConfig(algorithm="er", estimator="bayes")

    def test_invalid_sizes(self):
        with pytest.raises(ValueError):
            TrainerConfig(algorithm="er", incoming_batch_size=0)
        with pytest.raises(ValueError):
            TrainerConfig(algorithm="er", tau=-1.0)
        with pytest.raises(ValueError):
            TrainerConfig(algorithm="er", window_length=0)
