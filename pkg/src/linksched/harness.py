"""Episode orchestration: rollouts, training epochs, validation, calibration."""

from __future__ import annotations

import json
import warnings
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import baselines
from .agents import AgentPool, interval_rewards
from .config import RunConfig
from .dqn import (
    DivergenceError,
    DqnTrainer,
    QNetwork,
    ReplayBuffer,
    TransitionSlot,
    save_policy,
)
from .environment import (
    MeasurementRecord,
    init_channel,
    generate_topology,
    link_gains_linear,
    pattern_measurements,
)


class CalibrationError(RuntimeError):
    """Raised when no candidate validation set matches the reference metrics."""


def seed_stream(master_seed: int, label: str) -> np.random.Generator:
    """Independent, reproducible random stream named by ``label``."""
    return np.random.default_rng(
        np.random.SeedSequence([master_seed, zlib.crc32(label.encode("ascii"))])
    )


def draw_seeds(rng: np.random.Generator, count: int) -> list[int]:
    return [int(s) for s in rng.integers(0, 2**63, size=count)]


def score(avg_rate_bps: float, p5_rate_bps: float, avg_weight: float = 1.0, p5_weight: float = 3.0) -> float:
    """Model-selection score: average rate plus triple-weighted tail rate."""
    if avg_rate_bps < 0 or p5_rate_bps < 0:
        raise ValueError("rates must be >= 0")
    return avg_weight * avg_rate_bps + p5_weight * p5_rate_bps


def fifth_percentile(samples) -> float:
    """5th percentile with linear interpolation between order statistics."""
    samples = np.asarray(samples, dtype=float)
    if samples.size == 0:
        raise ValueError("fifth_percentile of an empty sample set")
    ordered = np.sort(samples)
    q = 0.05 * (len(ordered) - 1)
    lo = int(np.floor(q))
    hi = int(np.ceil(q))
    return float(ordered[lo] + (q - lo) * (ordered[hi] - ordered[lo]))


# ---------------------------------------------------------------------------
# Scheduling policies


class FullReusePolicy:
    name = "full_reuse"
    needs_observations = False

    def decide(self, t, num_aps, obs=None, gains_linear=None, weights=None, cfg=None):
        return baselines.full_reuse(num_aps)


class TdmPolicy:
    name = "tdm"
    needs_observations = False

    def decide(self, t, num_aps, obs=None, gains_linear=None, weights=None, cfg=None):
        return baselines.tdm(num_aps, t)


class ExhaustivePolicy:
    """Genie-aided bound: sees this interval's fading and exact weights."""

    name = "exhaustive"
    needs_observations = False

    def decide(self, t, num_aps, obs=None, gains_linear=None, weights=None, cfg=None):
        return baselines.exhaustive_search(gains_linear, weights, cfg)


class GreedyPolicy:
    """Deployed policy: per-agent argmax of the shared Q-network."""

    name = "dqn"
    needs_observations = True

    def __init__(self, net: QNetwork):
        self.net = net

    def decide(self, t, num_aps, obs=None, gains_linear=None, weights=None, cfg=None):
        return self.net.greedy_actions(obs).astype(bool)


class EpsilonGreedyPolicy:
    """Training-time policy; ``epsilon`` is reassigned every episode."""

    name = "dqn-train"
    needs_observations = True

    def __init__(self, net: QNetwork, rng: np.random.Generator, epsilon: float = 1.0):
        self.net = net
        self.rng = rng
        self.epsilon = epsilon

    def decide(self, t, num_aps, obs=None, gains_linear=None, weights=None, cfg=None):
        return self.net.act(obs, self.epsilon, self.rng).astype(bool)


BASELINE_POLICIES = {
    "full_reuse": FullReusePolicy,
    "tdm": TdmPolicy,
    "exhaustive": ExhaustivePolicy,
}


# ---------------------------------------------------------------------------
# Episodes


@dataclass
class TraceRow:
    """Per-interval record for offline analysis and oracle checks."""

    t: int
    activation: np.ndarray
    weights: np.ndarray  # weights in effect when the actions were taken
    gains_linear: np.ndarray
    realized_rate_bps: np.ndarray
    reward: np.ndarray


@dataclass
class EpisodeResult:
    seed: int
    per_ue_avg_rate_bps: np.ndarray  # averaged over the measurement window
    trace: list[TraceRow] | None = None


@dataclass
class TrainContext:
    """Replay and update machinery shared across training episodes."""

    buffer: ReplayBuffer
    trainer: DqnTrainer
    batch_slots: int
    train_every: int
    sample_rng: np.random.Generator
    do_updates: bool = False
    slots_pushed: int = 0

    def push(self, slot: TransitionSlot) -> None:
        self.buffer.push(slot)
        self.slots_pushed += 1
        if self.do_updates and self.slots_pushed % self.train_every == 0:
            self.trainer.train_step(self.buffer.sample_slots(self.batch_slots, self.sample_rng))


def run_episode(
    run_cfg: RunConfig,
    seed: int,
    policy,
    train_ctx: TrainContext | None = None,
    trace: bool = False,
) -> EpisodeResult:
    """Roll one environment realization for the configured interval count.

    Metrics (and, in training, replay slots) only cover intervals past the
    stabilization phase; the earlier intervals just warm up EMA rates and
    the delayed report pipeline.
    """
    net_cfg = run_cfg.network()
    rng_env = np.random.default_rng(seed)
    topology = generate_topology(net_cfg, rng_env)
    channel = init_channel(net_cfg, rng_env)
    n = net_cfg.num_aps
    pool = AgentPool(
        topology,
        net_cfg.bandwidth_hz,
        ema_beta=run_cfg.ema_beta,
        rate_floor_bps=run_cfg.rate_floor_bps,
        timing=run_cfg.timing(),
    )
    # long-term rates start from what full reuse would deliver at interval 0
    gains0 = link_gains_linear(topology, channel.power_gains(0))
    _, _, _, probe_rates = pattern_measurements(
        gains0, topology.association, np.ones((1, n), dtype=bool), net_cfg
    )
    pool.reset(probe_rates[0])

    intervals = run_cfg.intervals_per_episode
    window_start = run_cfg.stabilization_intervals
    window_len = intervals - window_start
    rate_sum = np.zeros(n)
    needs_obs = policy.needs_observations or train_ctx is not None
    pending: tuple[int, np.ndarray, np.ndarray, np.ndarray] | None = None
    rows: list[TraceRow] | None = [] if trace else None

    for t in range(intervals):
        obs = pool.observations(t) if needs_obs else None
        if train_ctx is not None and pending is not None:
            prev_t, prev_obs, prev_actions, prev_rewards = pending
            train_ctx.push(TransitionSlot(prev_t, prev_obs, prev_actions, prev_rewards, obs))
            pending = None
        gains = link_gains_linear(topology, channel.power_gains(t))
        activation = np.asarray(
            policy.decide(
                t, n, obs=obs, gains_linear=gains, weights=pool.weight, cfg=net_cfg
            ),
            dtype=bool,
        )
        desired, interference, sinr, rate = pattern_measurements(
            gains, topology.association, activation[None, :], net_cfg
        )
        record = MeasurementRecord(
            interval=t,
            activation=activation,
            desired_power_w=desired[0].copy(),
            interference_power_w=interference[0],
            sinr_linear=sinr[0],
            realized_rate_bps=rate[0],
        )
        all_off = not activation.any()
        rewards = interval_rewards(
            record.realized_rate_bps,
            pool.weight,
            activation,
            pool.pf_ratios(t) if all_off else None,
        )
        if rows is not None:
            rows.append(
                TraceRow(
                    t=t,
                    activation=activation.copy(),
                    weights=pool.weight.copy(),
                    gains_linear=gains,
                    realized_rate_bps=record.realized_rate_bps.copy(),
                    reward=rewards.copy(),
                )
            )
        if train_ctx is not None and t >= window_start:
            pending = (t, obs, activation.astype(int), rewards)
        pool.update(record, t)
        if t >= window_start:
            rate_sum += record.realized_rate_bps

    if train_ctx is not None and pending is not None:
        prev_t, prev_obs, prev_actions, prev_rewards = pending
        final_obs = pool.observations(intervals)
        train_ctx.push(TransitionSlot(prev_t, prev_obs, prev_actions, prev_rewards, final_obs))

    return EpisodeResult(seed=seed, per_ue_avg_rate_bps=rate_sum / window_len, trace=rows)


def _episode_task(args):
    run_cfg, seed, policy = args
    return run_episode(run_cfg, seed, policy)


def run_episodes(run_cfg: RunConfig, policy, seeds, threads: int = 1) -> list[EpisodeResult]:
    """Evaluation rollouts; processes are used only above one thread."""
    tasks = [(run_cfg, seed, policy) for seed in seeds]
    if threads <= 1 or len(tasks) <= 1:
        return [run_episode(run_cfg, seed, policy) for seed in seeds]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(_episode_task, tasks, chunksize=max(1, len(tasks) // (4 * threads))))


# ---------------------------------------------------------------------------
# Evaluation and training


@dataclass
class EvalMetrics:
    avg_rate_bps: float
    p5_rate_bps: float
    score: float
    num_samples: int

    def as_dict(self) -> dict:
        return {
            "avg_rate_bps": self.avg_rate_bps,
            "p5_rate_bps": self.p5_rate_bps,
            "score": self.score,
            "num_samples": self.num_samples,
        }


def pool_metrics(run_cfg: RunConfig, results: list[EpisodeResult]) -> EvalMetrics:
    samples = np.concatenate([r.per_ue_avg_rate_bps for r in results])
    avg = float(samples.mean())
    p5 = fifth_percentile(samples)
    if p5 > avg:
        warnings.warn("5th-percentile rate above the mean; heavily skewed sample pool")
    return EvalMetrics(
        avg_rate_bps=avg,
        p5_rate_bps=p5,
        score=score(avg, p5, run_cfg.score_avg_weight, run_cfg.score_p5_weight),
        num_samples=len(samples),
    )


def evaluate(run_cfg: RunConfig, policy, seeds, threads: int = 1) -> EvalMetrics:
    """Greedy/fixed-policy metrics over a seed set; repeatable bit-for-bit."""
    if len(seeds) == 0:
        raise ValueError("evaluate requires at least one environment seed")
    return pool_metrics(run_cfg, run_episodes(run_cfg, policy, seeds, threads))


@dataclass
class CurveRow:
    epoch: int
    metrics: EvalMetrics


@dataclass
class TrainRunState:
    epochs_run: int
    best_score: float
    best_epoch: int
    best_model_path: str | None
    best_policy: QNetwork | None
    curve: list[CurveRow] = field(default_factory=list)
    baseline_metrics: dict[str, EvalMetrics] = field(default_factory=dict)
    validation_seeds: list[int] = field(default_factory=list)


CURVE_BASELINES = ("full_reuse", "tdm", "exhaustive")


def write_learning_curve(path, curve: list[CurveRow], baseline_metrics: dict[str, EvalMetrics]) -> None:
    header = ["epoch", "avg_rate_bps", "p5_rate_bps", "score"]
    for name in CURVE_BASELINES:
        header += [f"{name}_avg_rate_bps", f"{name}_p5_rate_bps", f"{name}_score"]
    lines = [",".join(header)]
    for row in curve:
        cells = [
            str(row.epoch),
            repr(row.metrics.avg_rate_bps),
            repr(row.metrics.p5_rate_bps),
            repr(row.metrics.score),
        ]
        for name in CURVE_BASELINES:
            m = baseline_metrics[name]
            cells += [repr(m.avg_rate_bps), repr(m.p5_rate_bps), repr(m.score)]
        lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def validation_seed_set(run_cfg: RunConfig) -> list[int]:
    return draw_seeds(seed_stream(run_cfg.master_seed, "validation"), run_cfg.validation_envs)


def train(run_cfg: RunConfig, out_dir=None) -> TrainRunState:
    """Full training loop: pretraining, epochs, validation, checkpointing.

    Training rollouts always run in strict submission order; the configured
    thread count only spreads validation rollouts, which cannot influence
    the training trajectory.
    """
    run_cfg.validate()
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        (out / "checkpoints").mkdir(parents=True, exist_ok=True)

    net = QNetwork.initialize(seed_stream(run_cfg.master_seed, "init"))
    trainer = DqnTrainer(net, run_cfg.trainer_config())
    ctx = TrainContext(
        buffer=ReplayBuffer(run_cfg.replay_capacity_slots),
        trainer=trainer,
        batch_slots=run_cfg.batch_slots,
        train_every=run_cfg.train_every_intervals,
        sample_rng=seed_stream(run_cfg.master_seed, "replay"),
    )
    schedule = run_cfg.epsilon_schedule()
    behavior = EpsilonGreedyPolicy(net, seed_stream(run_cfg.master_seed, "explore"))
    episode_seeds = seed_stream(run_cfg.master_seed, "episodes")
    val_seeds = validation_seed_set(run_cfg)

    state = TrainRunState(
        epochs_run=0,
        best_score=-np.inf,
        best_epoch=0,
        best_model_path=None,
        best_policy=None,
        validation_seeds=val_seeds,
    )
    for name in CURVE_BASELINES:
        state.baseline_metrics[name] = evaluate(
            run_cfg, BASELINE_POLICIES[name](), val_seeds, run_cfg.threads
        )

    episode_index = 0
    try:
        for _ in range(run_cfg.pretrain_episodes):
            behavior.epsilon = schedule.value(episode_index)
            run_episode(run_cfg, draw_seeds(episode_seeds, 1)[0], behavior, train_ctx=ctx)
            episode_index += 1
        ctx.do_updates = True

        for epoch in range(1, run_cfg.max_epochs + 1):
            for _ in range(run_cfg.episodes_per_epoch):
                behavior.epsilon = schedule.value(episode_index)
                run_episode(run_cfg, draw_seeds(episode_seeds, 1)[0], behavior, train_ctx=ctx)
                episode_index += 1
            metrics = evaluate(run_cfg, GreedyPolicy(net), val_seeds, run_cfg.threads)
            state.curve.append(CurveRow(epoch=epoch, metrics=metrics))
            state.epochs_run = epoch
            if metrics.score > state.best_score:
                state.best_score = metrics.score
                state.best_epoch = epoch
                state.best_policy = net.copy()
                state.best_policy.metadata.update(epoch=epoch, best_score=metrics.score)
                if out is not None:
                    ckpt = out / "checkpoints" / f"model_epoch_{epoch:04d}.txt"
                    save_policy(state.best_policy, ckpt)
                    save_policy(state.best_policy, out / "model_best.txt")
                    state.best_model_path = str(out / "model_best.txt")
            if epoch - state.best_epoch >= run_cfg.patience_epochs:
                break
    except DivergenceError:
        if out is not None:
            dump = {
                "episode_index": episode_index,
                "epochs_run": state.epochs_run,
                "updates": trainer.updates,
                "last_loss": repr(trainer.last_loss),
                "best_score": state.best_score if np.isfinite(state.best_score) else None,
            }
            (out / "divergence_dump.json").write_text(json.dumps(dump, indent=2))
        raise

    if out is not None:
        write_learning_curve(out / "learning_curve.csv", state.curve, state.baseline_metrics)
    return state


# ---------------------------------------------------------------------------
# Validation-set calibration


@dataclass
class CalibrationResult:
    seeds: list[int]
    reference: EvalMetrics
    accepted: EvalMetrics
    attempts: int
    avg_rel_error: float
    p5_rel_error: float


def calibrate_validation_set(run_cfg: RunConfig, threads: int | None = None) -> CalibrationResult:
    """Find a small validation seed set matching the large-reference metrics.

    The round-robin baseline is measured over the reference environments;
    candidate sets are drawn until both the average and the 5th-percentile
    rate agree within the configured relative tolerance. A candidate of the
    same size as the reference reuses it outright (zero error).
    """
    run_cfg.validate()
    threads = run_cfg.threads if threads is None else threads
    if run_cfg.calibration_candidate_envs > run_cfg.calibration_reference_envs:
        raise ValueError("calibration candidate set cannot exceed the reference set")
    policy = TdmPolicy()
    ref_seeds = draw_seeds(
        seed_stream(run_cfg.master_seed, "calibration-reference"),
        run_cfg.calibration_reference_envs,
    )
    reference = evaluate(run_cfg, policy, ref_seeds, threads)
    if run_cfg.calibration_candidate_envs == run_cfg.calibration_reference_envs:
        return CalibrationResult(
            seeds=ref_seeds,
            reference=reference,
            accepted=reference,
            attempts=0,
            avg_rel_error=0.0,
            p5_rel_error=0.0,
        )
    candidate_rng = seed_stream(run_cfg.master_seed, "calibration-candidates")
    tol = run_cfg.calibration_tolerance
    for attempt in range(1, run_cfg.calibration_max_attempts + 1):
        seeds = draw_seeds(candidate_rng, run_cfg.calibration_candidate_envs)
        metrics = evaluate(run_cfg, policy, seeds, threads)
        avg_err = abs(metrics.avg_rate_bps - reference.avg_rate_bps) / reference.avg_rate_bps
        p5_err = abs(metrics.p5_rate_bps - reference.p5_rate_bps) / reference.p5_rate_bps
        if avg_err <= tol and p5_err <= tol:
            return CalibrationResult(
                seeds=seeds,
                reference=reference,
                accepted=metrics,
                attempts=attempt,
                avg_rel_error=avg_err,
                p5_rel_error=p5_err,
            )
    raise CalibrationError(
        f"no candidate set of {run_cfg.calibration_candidate_envs} environments matched "
        f"the reference within {tol:.3%} after {run_cfg.calibration_max_attempts} attempts"
    )
