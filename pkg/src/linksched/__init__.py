"""Multi-agent deep-Q link scheduling on a system-level wireless simulator."""

__version__ = "0.1.0"

from .agents import (
    OBS_DIM,
    OBS_LAYOUT_VERSION,
    AgentPool,
    ReportTiming,
    interval_rewards,
    neighbor_table,
)
from .baselines import exhaustive_search, full_reuse, tdm
from .config import ConfigError, RunConfig, parse_config, parse_config_text
from .dqn import (
    DivergenceError,
    DqnTrainer,
    EpsilonSchedule,
    ModelFormatError,
    ObservationLayoutError,
    QNetwork,
    ReplayBuffer,
    TrainerConfig,
    TransitionSlot,
    double_dqn_targets,
    load_policy,
    save_policy,
)
from .environment import (
    ChannelState,
    MeasurementRecord,
    NetworkConfig,
    PlacementError,
    Topology,
    generate_topology,
    init_channel,
    link_gains_linear,
    noise_power_w,
    path_loss_db,
    step_interval,
)
from .harness import (
    CalibrationError,
    EpisodeResult,
    EvalMetrics,
    EpsilonGreedyPolicy,
    ExhaustivePolicy,
    FullReusePolicy,
    GreedyPolicy,
    TdmPolicy,
    TrainRunState,
    calibrate_validation_set,
    evaluate,
    fifth_percentile,
    run_episode,
    score,
    seed_stream,
    train,
)

__all__ = [
    "AgentPool",
    "CalibrationError",
    "ChannelState",
    "ConfigError",
    "DivergenceError",
    "DqnTrainer",
    "EpisodeResult",
    "EpsilonGreedyPolicy",
    "EpsilonSchedule",
    "EvalMetrics",
    "ExhaustivePolicy",
    "FullReusePolicy",
    "GreedyPolicy",
    "MeasurementRecord",
    "ModelFormatError",
    "NetworkConfig",
    "OBS_DIM",
    "OBS_LAYOUT_VERSION",
    "ObservationLayoutError",
    "PlacementError",
    "QNetwork",
    "ReplayBuffer",
    "ReportTiming",
    "RunConfig",
    "TdmPolicy",
    "Topology",
    "TrainRunState",
    "TrainerConfig",
    "TransitionSlot",
    "calibrate_validation_set",
    "double_dqn_targets",
    "evaluate",
    "exhaustive_search",
    "fifth_percentile",
    "full_reuse",
    "generate_topology",
    "init_channel",
    "interval_rewards",
    "link_gains_linear",
    "load_policy",
    "neighbor_table",
    "noise_power_w",
    "parse_config",
    "parse_config_text",
    "path_loss_db",
    "run_episode",
    "save_policy",
    "score",
    "seed_stream",
    "step_interval",
    "tdm",
    "train",
]
