"""Run configuration: one flat file of documented keys drives every command.

An empty file reproduces the reference setup (4 APs, 500 m square, 10 dBm,
10 MHz, 400-interval episodes, 2000 epochs of 50 episodes, 50 validation
environments). Unknown keys are rejected rather than ignored.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

from .agents import ReportTiming
from .dqn import EpsilonSchedule, TrainerConfig
from .environment import NetworkConfig


class ConfigError(ValueError):
    """Raised for unreadable, unknown, or out-of-range configuration."""


@dataclass
class RunConfig:
    # --- network realization / physical layer ---
    num_aps: int = 4
    area_side_m: float = 500.0
    min_ap_ap_dist_m: float = 35.0
    ue_drop_radius_m: float = 100.0
    min_ap_ue_dist_m: float = 10.0
    tx_power_dbm: float = 10.0
    noise_psd_dbm_hz: float = -174.0
    bandwidth_hz: float = 1e7
    shadowing_std_db: float = 7.0
    interval_duration_s: float = 1e-3
    doppler_hz: float = 10.0
    num_sinusoids: int = 8
    pl0_db: float = 38.46
    pathloss_alpha1: float = 2.0
    pathloss_alpha2: float = 4.0
    pathloss_breakpoint_m: float = 100.0
    pathloss_ref_dist_m: float = 1.0

    # --- agent state and report cadence ---
    ema_beta: float = 0.01
    rate_floor_bps: float = 1e3
    report_period: int = 10
    local_report_delay: int = 4
    remote_report_delay: int = 20

    # --- learning engine ---
    discount_gamma: float = 0.9
    learning_rate: float = 1e-3
    replay_capacity_slots: int = 10_000
    batch_slots: int = 64
    train_every_intervals: int = 20
    target_sync_every_updates: int = 100
    pretrain_episodes: int = 100
    epsilon_decay_episodes: int = 50
    final_epsilon: float = 0.01

    # --- episodes, epochs, metrics ---
    intervals_per_episode: int = 400
    stabilization_intervals: int = 200
    episodes_per_epoch: int = 50
    max_epochs: int = 2000
    validation_envs: int = 50
    eval_envs: int = 200
    score_avg_weight: float = 1.0
    score_p5_weight: float = 3.0
    patience_epochs: int = 200
    calibration_reference_envs: int = 1000
    calibration_candidate_envs: int = 50
    calibration_tolerance: float = 0.05
    calibration_max_attempts: int = 100

    # --- run plumbing ---
    master_seed: int = 1
    threads: int = 1
    output_dir: str = "runs"

    def network(self) -> NetworkConfig:
        return NetworkConfig(
            num_aps=self.num_aps,
            area_side_m=self.area_side_m,
            min_ap_ap_dist_m=self.min_ap_ap_dist_m,
            ue_drop_radius_m=self.ue_drop_radius_m,
            min_ap_ue_dist_m=self.min_ap_ue_dist_m,
            tx_power_dbm=self.tx_power_dbm,
            noise_psd_dbm_hz=self.noise_psd_dbm_hz,
            bandwidth_hz=self.bandwidth_hz,
            shadowing_std_db=self.shadowing_std_db,
            interval_duration_s=self.interval_duration_s,
            doppler_hz=self.doppler_hz,
            num_sinusoids=self.num_sinusoids,
            pl0_db=self.pl0_db,
            pathloss_alpha1=self.pathloss_alpha1,
            pathloss_alpha2=self.pathloss_alpha2,
            pathloss_breakpoint_m=self.pathloss_breakpoint_m,
            pathloss_ref_dist_m=self.pathloss_ref_dist_m,
        )

    def timing(self) -> ReportTiming:
        return ReportTiming(
            period=self.report_period,
            local_delay=self.local_report_delay,
            remote_delay=self.remote_report_delay,
        )

    def epsilon_schedule(self) -> EpsilonSchedule:
        return EpsilonSchedule(
            pretrain_episodes=self.pretrain_episodes,
            decay_episodes=self.epsilon_decay_episodes,
            final_epsilon=self.final_epsilon,
        )

    def trainer_config(self) -> TrainerConfig:
        return TrainerConfig(
            gamma=self.discount_gamma,
            learning_rate=self.learning_rate,
            batch_slots=self.batch_slots,
            target_sync_every_updates=self.target_sync_every_updates,
        )

    def validate(self) -> None:
        try:
            self.network().validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        positive_ints = (
            "report_period",
            "replay_capacity_slots",
            "batch_slots",
            "train_every_intervals",
            "target_sync_every_updates",
            "epsilon_decay_episodes",
            "intervals_per_episode",
            "episodes_per_epoch",
            "max_epochs",
            "validation_envs",
            "eval_envs",
            "patience_epochs",
            "calibration_reference_envs",
            "calibration_candidate_envs",
            "calibration_max_attempts",
            "threads",
        )
        for name in positive_ints:
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        for name in ("local_report_delay", "remote_report_delay", "pretrain_episodes", "stabilization_intervals"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0, got {getattr(self, name)}")
        if not 0.0 < self.ema_beta <= 1.0:
            raise ConfigError(f"ema_beta must be in (0, 1], got {self.ema_beta}")
        if self.rate_floor_bps <= 0:
            raise ConfigError(f"rate_floor_bps must be > 0, got {self.rate_floor_bps}")
        if not 0.0 <= self.discount_gamma < 1.0:
            raise ConfigError(f"discount_gamma must be in [0, 1), got {self.discount_gamma}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if not 0.0 < self.final_epsilon <= 1.0:
            raise ConfigError(f"final_epsilon must be in (0, 1], got {self.final_epsilon}")
        if self.stabilization_intervals >= self.intervals_per_episode:
            raise ConfigError(
                "stabilization_intervals must be < intervals_per_episode "
                f"({self.stabilization_intervals} >= {self.intervals_per_episode})"
            )
        if self.score_avg_weight < 0 or self.score_p5_weight < 0:
            raise ConfigError("score weights must be >= 0")
        if self.calibration_tolerance < 0:
            raise ConfigError(f"calibration_tolerance must be >= 0, got {self.calibration_tolerance}")
        if self.calibration_candidate_envs > self.calibration_reference_envs:
            raise ConfigError(
                "calibration_candidate_envs must be <= calibration_reference_envs "
                f"({self.calibration_candidate_envs} > {self.calibration_reference_envs})"
            )
        if self.master_seed < 0:
            raise ConfigError(f"master_seed must be >= 0, got {self.master_seed}")

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(RunConfig)}


def _cast(key: str, raw: str):
    kind = _FIELD_TYPES[key]
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"config key {key!r}: cannot parse {raw!r} as {kind}") from exc


def parse_config_text(text: str, source: str = "<config>") -> RunConfig:
    """Parse ``key = value`` lines; '#' starts a comment, blank lines ignored."""
    values: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line.strip()!r}")
        key, _, raw = body.partition("=")
        key = key.strip()
        raw = raw.strip()
        if key not in _FIELD_TYPES:
            raise ConfigError(f"{source}:{lineno}: unknown config key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate config key {key!r}")
        if not raw:
            raise ConfigError(f"{source}:{lineno}: empty value for key {key!r}")
        values[key] = _cast(key, raw)
    cfg = RunConfig(**values)
    cfg.validate()
    return cfg


def parse_config(path) -> RunConfig:
    """Load and validate a run configuration file."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    return parse_config_text(path.read_text(), source=str(path))
