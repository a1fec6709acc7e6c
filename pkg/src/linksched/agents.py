"""Agent-side bookkeeping: rates, weights, delayed reports, observations.

Every AP hosts one agent. The trainer keeps this state centrally, but each
agent's observation is built only from what that agent could actually know:
its own delayed channel report plus older reports from a fixed set of
neighboring APs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .environment import MeasurementRecord, Topology, db_to_linear

OBS_LAYOUT_VERSION = "obs14-v1"
OBS_DIM = 14
NEIGHBOR_SLOTS = 6
SENTINEL = -1  # padding index for missing neighbors / missing reports

SINR_CLIP_DB = (-20.0, 60.0)
LOG_WEIGHT_CLIP = (-3.0, 3.0)
WEIGHT_SCALE = 1e6  # weights are ~1/bps; rescale into a log-friendly range


def normalization_constants() -> dict:
    """Normalization metadata stored alongside saved policies."""
    return {
        "sinr_clip_db": SINR_CLIP_DB,
        "log_weight_clip": LOG_WEIGHT_CLIP,
        "weight_scale": WEIGHT_SCALE,
    }


def normalize_sinr_db(sinr_db):
    lo, hi = SINR_CLIP_DB
    clipped = np.clip(sinr_db, lo, hi)
    return (clipped - (lo + hi) / 2.0) / ((hi - lo) / 2.0)


def normalize_weight(weight):
    lo, hi = LOG_WEIGHT_CLIP
    logw = np.log10(np.asarray(weight) * WEIGHT_SCALE)
    return np.clip(logw, lo, hi) / hi


def neighbor_table(topology: Topology, k: int = 3) -> np.ndarray:
    """Per-agent neighbor indices, shape (N, 2k), padded with SENTINEL.

    For agent i the first block holds the k APs with the strongest long-term
    gain into UE i (strongest interferers at the agent's own UE); the second
    block holds the k APs whose UE receives the strongest gain from AP i
    (victims of the agent's interference). The blocks are concatenated as-is:
    an AP prominent in both roles fills one slot per role, so every slot
    carries a real report whenever the network has at least k other APs.
    Keeping duplicates is what lets a policy trained on a small network see
    the same input distribution on a dense one (a sparse network would
    otherwise train some slots as constants and break on denser drops).
    """
    gain = topology.longterm_gain_db
    n = topology.num_aps
    table = np.full((n, 2 * k), SENTINEL, dtype=int)
    order = np.arange(n)
    for i in range(n):
        others = order[order != i]
        incoming = others[np.argsort(-gain[i, others], kind="stable")][:k]
        outgoing = others[np.argsort(-gain[others, i], kind="stable")][:k]
        table[i, : len(incoming)] = incoming
        table[i, k : k + len(outgoing)] = outgoing
    return table


@dataclass
class ReportTiming:
    """Cadence and latency of channel-quality reports.

    Reports are captured every ``period`` intervals (at t = 0, period, ...).
    An agent sees its own report ``local_delay`` intervals after capture and
    its neighbors' reports only after ``remote_delay`` intervals.
    """

    period: int = 10
    local_delay: int = 4
    remote_delay: int = 20

    def visible_capture(self, t: int, delay: int) -> int | None:
        """Capture time of the newest report visible at interval ``t``."""
        if t < delay:
            return None
        return self.period * ((t - delay) // self.period)

    def visible_local(self, t: int) -> int | None:
        return self.visible_capture(t, self.local_delay)

    def visible_remote(self, t: int) -> int | None:
        return self.visible_capture(t, self.remote_delay)


class AgentPool:
    """State of all agents for one episode.

    Tracks exponential-moving-average rates and their reciprocal weights,
    captures periodic (SINR, weight) snapshots, and serves observation
    vectors that respect the report delays.
    """

    def __init__(
        self,
        topology: Topology,
        bandwidth_hz: float,
        ema_beta: float = 0.01,
        rate_floor_bps: float = 1e3,
        timing: ReportTiming | None = None,
    ):
        if not 0.0 < ema_beta <= 1.0:
            raise ValueError("ema_beta must be in (0, 1]")
        if rate_floor_bps <= 0:
            raise ValueError("rate_floor_bps must be > 0")
        self.num_agents = topology.num_aps
        self.neighbors = neighbor_table(topology)
        self.bandwidth_hz = bandwidth_hz
        self.ema_beta = ema_beta
        self.rate_floor_bps = rate_floor_bps
        self.timing = timing or ReportTiming()
        self.ema_rate = np.full(self.num_agents, rate_floor_bps)
        self.weight = 1.0 / self.ema_rate
        self._snapshots: dict[int, tuple[np.ndarray, np.ndarray]] = {}
        self._obs_cache: tuple | None = None

    def reset(self, initial_rates_bps: np.ndarray) -> None:
        """Start an episode from the given long-term rate estimates."""
        self.ema_rate = np.maximum(self.rate_floor_bps, np.asarray(initial_rates_bps, dtype=float))
        self.weight = 1.0 / self.ema_rate
        self._snapshots.clear()
        self._obs_cache = None

    def update(self, record: MeasurementRecord, t: int) -> None:
        """Fold one interval's realized rates into the EMA, then report.

        The snapshot captured at a report interval carries the SINR measured
        in that interval and the weight already reflecting that interval's
        rate (the freshest value the UE could report).
        """
        beta = self.ema_beta
        self.ema_rate = np.maximum(
            self.rate_floor_bps,
            (1.0 - beta) * self.ema_rate + beta * record.realized_rate_bps,
        )
        self.weight = 1.0 / self.ema_rate
        if t % self.timing.period == 0:
            self._snapshots[t] = (record.sinr_db.copy(), self.weight.copy())

    def snapshot_at(self, t_capture: int | None):
        if t_capture is None:
            return None
        return self._snapshots.get(t_capture)

    def observations(self, t: int) -> np.ndarray:
        """Observation matrix (N, 14) for interval ``t``, entries in [-1, 1].

        Layout: [own SINR, own log-weight] then six neighbor slots of
        [SINR, log-weight]. Missing neighbors and not-yet-visible reports
        fill their slots with -1. The returned array is shared until the
        next report becomes visible; treat it as read-only.
        """
        visible = (self.timing.visible_local(t), self.timing.visible_remote(t))
        if self._obs_cache is not None and self._obs_cache[0] == visible:
            return self._obs_cache[1]
        n = self.num_agents
        obs = np.full((n, OBS_DIM), -1.0)
        local = self.snapshot_at(visible[0])
        if local is not None:
            sinr_db, weight = local
            obs[:, 0] = normalize_sinr_db(sinr_db)
            obs[:, 1] = normalize_weight(weight)
        remote = self.snapshot_at(visible[1])
        if remote is not None:
            sinr_db, weight = remote
            valid = self.neighbors >= 0
            idx = np.where(valid, self.neighbors, 0)
            obs[:, 2::2] = np.where(valid, normalize_sinr_db(sinr_db[idx]), -1.0)
            obs[:, 3::2] = np.where(valid, normalize_weight(weight[idx]), -1.0)
        self._obs_cache = (visible, obs)
        return obs

    def pf_ratios(self, t: int) -> np.ndarray:
        """Estimated instantaneous rate over EMA rate, per agent.

        Uses the newest locally visible SINR report; agents without a
        visible report yet estimate zero rate, hence a zero ratio.
        """
        local = self.snapshot_at(self.timing.visible_local(t))
        if local is None:
            return np.zeros(self.num_agents)
        sinr_linear = db_to_linear(local[0])
        est_rate = self.bandwidth_hz * np.log2(1.0 + sinr_linear)
        return est_rate / self.ema_rate


def interval_rewards(
    realized_rate_bps: np.ndarray,
    weights: np.ndarray,
    activation: np.ndarray,
    pf_ratios: np.ndarray | None = None,
) -> np.ndarray:
    """Per-agent rewards for one interval.

    If at least one AP transmitted, every agent receives the network-wide
    weighted sum-rate. If all stayed silent, the agent whose UE had the
    highest proportional-fair ratio is penalized with its negative ratio
    (ties to the lowest index) and the others receive zero; this makes an
    all-off interval strictly unattractive to whoever could serve best.
    ``pf_ratios`` is only consulted in the all-off case and may be omitted
    otherwise.
    """
    weights = np.asarray(weights, dtype=float)
    if weights.min() <= 0:
        raise ValueError("weights must be > 0")
    n = len(weights)
    activation = np.asarray(activation, dtype=bool)
    if activation.any():
        shared = float(np.dot(weights, realized_rate_bps))
        return np.full(n, shared)
    if pf_ratios is None:
        raise ValueError("pf_ratios are required when every AP is inactive")
    rewards = np.zeros(n)
    worst_served = int(np.argmax(pf_ratios))  # argmax takes the lowest index on ties
    rewards[worst_served] = -float(pf_ratios[worst_served])
    return rewards
