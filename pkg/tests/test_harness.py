import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from linksched.config import RunConfig
from linksched.dqn import PARAM_KEYS, QNetwork, load_policy
from linksched.environment import noise_power_w, dbm_to_watts
from linksched.harness import (
    CalibrationError,
    EpsilonGreedyPolicy,
    ExhaustivePolicy,
    FullReusePolicy,
    GreedyPolicy,
    TdmPolicy,
    TrainContext,
    calibrate_validation_set,
    evaluate,
    fifth_percentile,
    run_episode,
    score,
    seed_stream,
    train,
)
from linksched.dqn import DqnTrainer, ReplayBuffer


def tiny_cfg(**overrides) -> RunConfig:
    base = dict(
        num_aps=2,
        intervals_per_episode=60,
        stabilization_intervals=30,
        pretrain_episodes=2,
        epsilon_decay_episodes=2,
        episodes_per_epoch=1,
        max_epochs=2,
        validation_envs=2,
        eval_envs=3,
        replay_capacity_slots=200,
        patience_epochs=50,
        calibration_reference_envs=3,
        calibration_candidate_envs=2,
        calibration_max_attempts=3,
        master_seed=5,
    )
    base.update(overrides)
    cfg = dataclasses.replace(RunConfig(), **base)
    cfg.validate()
    return cfg


class TestScore:
    def test_reference_combination(self):
        assert score(20e6, 2e6) == 26e6

    def test_degenerate_components(self):
        assert score(13.0, 0.0) == 13.0
        assert score(0.0, 5.0) == 15.0

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            score(-1.0, 0.0)


class TestFifthPercentile:
    def test_interpolated(self):
        assert fifth_percentile(np.arange(1, 101)) == pytest.approx(5.95)

    def test_single_sample(self):
        assert fifth_percentile([3.5]) == 3.5

    def test_all_equal(self):
        assert fifth_percentile([2.0] * 17) == 2.0

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            fifth_percentile([])

    @given(st.lists(st.floats(0, 1e9, allow_nan=False), min_size=1, max_size=60))
    @settings(max_examples=100, deadline=None)
    def test_matches_numpy_linear(self, samples):
        assert fifth_percentile(samples) == pytest.approx(
            float(np.percentile(samples, 5.0)), rel=1e-12, abs=1e-9
        )


class TestRunEpisode:
    def test_eval_deterministic(self):
        cfg = tiny_cfg()
        a = run_episode(cfg, 99, TdmPolicy())
        b = run_episode(cfg, 99, TdmPolicy())
        assert np.array_equal(a.per_ue_avg_rate_bps, b.per_ue_avg_rate_bps)

    def test_single_link_full_reuse_closed_form(self):
        cfg = tiny_cfg(num_aps=1)
        result = run_episode(cfg, 17, FullReusePolicy(), trace=True)
        noise = noise_power_w(cfg.network())
        tx = dbm_to_watts(cfg.tx_power_dbm)
        expected = []
        for row in result.trace:
            if row.t < cfg.stabilization_intervals:
                continue
            sinr = tx * row.gains_linear[0, 0] / noise
            expected.append(cfg.bandwidth_hz * np.log2(1.0 + sinr))
        assert result.per_ue_avg_rate_bps[0] == pytest.approx(np.mean(expected), rel=1e-12)

    def test_tdm_activation_counts(self):
        cfg = tiny_cfg(num_aps=4, intervals_per_episode=400, stabilization_intervals=200)
        result = run_episode(cfg, 3, TdmPolicy(), trace=True)
        counts = np.zeros(4, dtype=int)
        for row in result.trace:
            assert row.activation.sum() == 1
            if row.t >= 200:
                counts += row.activation
        assert counts.tolist() == [50, 50, 50, 50]

    def test_trace_covers_every_interval(self):
        cfg = tiny_cfg()
        result = run_episode(cfg, 1, FullReusePolicy(), trace=True)
        assert [row.t for row in result.trace] == list(range(60))


class TestEvaluate:
    def test_single_env_single_ue(self):
        cfg = tiny_cfg(num_aps=1)
        metrics = evaluate(cfg, FullReusePolicy(), [42])
        assert metrics.avg_rate_bps == metrics.p5_rate_bps
        assert metrics.num_samples == 1

    def test_repeat_call_identical(self):
        cfg = tiny_cfg()
        seeds = [1, 2, 3]
        a = evaluate(cfg, TdmPolicy(), seeds)
        b = evaluate(cfg, TdmPolicy(), seeds)
        assert (a.avg_rate_bps, a.p5_rate_bps, a.score) == (b.avg_rate_bps, b.p5_rate_bps, b.score)

    def test_pools_one_sample_per_ue_per_env(self):
        cfg = tiny_cfg(num_aps=2)
        seeds = [1, 2, 3]
        metrics = evaluate(cfg, TdmPolicy(), seeds)
        assert metrics.num_samples == len(seeds) * cfg.num_aps
        samples = np.concatenate(
            [run_episode(cfg, s, TdmPolicy()).per_ue_avg_rate_bps for s in seeds]
        )
        assert metrics.avg_rate_bps == samples.mean()

    def test_exhaustive_beats_full_reuse(self):
        cfg = tiny_cfg(num_aps=4, intervals_per_episode=100, stabilization_intervals=50)
        seeds = list(range(20))
        exhaustive = evaluate(cfg, ExhaustivePolicy(), seeds)
        reuse = evaluate(cfg, FullReusePolicy(), seeds)
        assert exhaustive.score >= reuse.score

    def test_threads_match_serial(self):
        cfg = tiny_cfg()
        seeds = [7, 8, 9, 10]
        serial = evaluate(cfg, TdmPolicy(), seeds, threads=1)
        parallel = evaluate(cfg, TdmPolicy(), seeds, threads=2)
        assert (serial.avg_rate_bps, serial.p5_rate_bps) == (
            parallel.avg_rate_bps,
            parallel.p5_rate_bps,
        )

    def test_requires_seeds(self):
        with pytest.raises(ValueError):
            evaluate(tiny_cfg(), TdmPolicy(), [])


class TestTrain:
    def test_curve_bookkeeping(self, tmp_path):
        cfg = tiny_cfg(max_epochs=3)
        state = train(cfg, tmp_path)
        assert len(state.curve) == 3
        assert [row.epoch for row in state.curve] == [1, 2, 3]
        assert (tmp_path / "learning_curve.csv").exists()
        lines = (tmp_path / "learning_curve.csv").read_text().strip().splitlines()
        assert len(lines) == 4  # header + 3 epochs
        assert lines[0].startswith("epoch,avg_rate_bps,p5_rate_bps,score,full_reuse_")

    def test_checkpoints_strictly_improve(self, tmp_path):
        cfg = tiny_cfg(max_epochs=4)
        state = train(cfg, tmp_path)
        checkpoints = sorted((tmp_path / "checkpoints").glob("model_epoch_*.txt"))
        assert checkpoints, "at least the first epoch must checkpoint"
        scores = [load_policy(p).metadata["best_score"] for p in checkpoints]
        assert all(b > a for a, b in zip(scores, scores[1:]))
        best = load_policy(tmp_path / "model_best.txt")
        assert best.metadata["best_score"] == max(scores)
        assert best.metadata["best_score"] == state.best_score

    def test_best_score_matches_curve_running_max(self, tmp_path):
        cfg = tiny_cfg(max_epochs=3)
        state = train(cfg, tmp_path)
        assert state.best_score == max(row.metrics.score for row in state.curve)

    def test_deterministic_curves(self):
        cfg = tiny_cfg(max_epochs=2)
        a = train(cfg)
        b = train(cfg)
        for row_a, row_b in zip(a.curve, b.curve):
            assert row_a.metrics.score == row_b.metrics.score
            assert row_a.metrics.avg_rate_bps == row_b.metrics.avg_rate_bps
        for key in PARAM_KEYS:
            assert np.array_equal(
                a.best_policy.params[key], b.best_policy.params[key]
            )

    def test_patience_stops_early(self, tmp_path):
        cfg = tiny_cfg(max_epochs=30, patience_epochs=2)
        state = train(cfg, tmp_path)
        assert state.epochs_run <= state.best_epoch + 2 < 30


class TestEvaluateIsolation:
    def test_training_state_untouched(self):
        cfg = tiny_cfg()
        net = QNetwork.initialize(seed_stream(cfg.master_seed, "init"))
        trainer = DqnTrainer(net, cfg.trainer_config())
        ctx = TrainContext(
            buffer=ReplayBuffer(cfg.replay_capacity_slots),
            trainer=trainer,
            batch_slots=cfg.batch_slots,
            train_every=cfg.train_every_intervals,
            sample_rng=seed_stream(cfg.master_seed, "replay"),
            do_updates=True,
        )
        policy = EpsilonGreedyPolicy(net, seed_stream(cfg.master_seed, "explore"), 0.3)
        for seed in (1, 2):
            run_episode(cfg, seed, policy, train_ctx=ctx)

        def snapshot():
            parts = [net.params[k].tobytes() for k in PARAM_KEYS]
            parts += [trainer.target.params[k].tobytes() for k in PARAM_KEYS]
            parts += [trainer.optimizer.m[k].tobytes() for k in sorted(trainer.optimizer.m)]
            parts += [trainer.optimizer.v[k].tobytes() for k in sorted(trainer.optimizer.v)]
            parts.append(str((trainer.updates, trainer.syncs, ctx.slots_pushed)).encode())
            for slot in ctx.buffer.slots():
                parts += [slot.obs.tobytes(), slot.rewards.tobytes()]
            parts.append(policy.rng.bit_generator.state["state"]["state"].to_bytes(16, "little"))
            parts.append(ctx.sample_rng.bit_generator.state["state"]["state"].to_bytes(16, "little"))
            return b"".join(parts)

        before = snapshot()
        evaluate(cfg, GreedyPolicy(net), [11, 12, 13])
        assert snapshot() == before


class TestCalibration:
    def test_same_size_reuses_reference(self):
        cfg = tiny_cfg(calibration_reference_envs=3, calibration_candidate_envs=3)
        result = calibrate_validation_set(cfg)
        assert result.attempts == 0
        assert result.avg_rel_error == 0.0
        assert result.p5_rel_error == 0.0
        assert len(result.seeds) == 3
        assert result.accepted.avg_rate_bps == result.reference.avg_rate_bps

    def test_zero_tolerance_fails(self):
        cfg = tiny_cfg(calibration_tolerance=0.0)
        with pytest.raises(CalibrationError):
            calibrate_validation_set(cfg)

    def test_reproducible_from_master_seed(self):
        cfg = tiny_cfg(
            num_aps=2,
            calibration_reference_envs=6,
            calibration_candidate_envs=4,
            calibration_tolerance=0.5,
            calibration_max_attempts=20,
        )
        a = calibrate_validation_set(cfg)
        b = calibrate_validation_set(cfg)
        assert a.seeds == b.seeds
        assert a.attempts == b.attempts
