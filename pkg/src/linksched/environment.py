"""System-level downlink simulator: drops, channels, and per-interval rates.

One access point (AP) serves one user (UE). APs sharing the spectrum
interfere with each other, so the achievable rate of every UE depends on
which subset of APs transmits in a given scheduling interval.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SINR_FLOOR_LINEAR = 1e-12  # keeps dB conversion finite through deep fades


class PlacementError(RuntimeError):
    """Raised when a random drop cannot satisfy the distance constraints."""


@dataclass
class NetworkConfig:
    """Physical-layer and drop parameters for one network realization."""

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
    # dual-slope path loss: free-space-like up to the breakpoint, steeper beyond
    pl0_db: float = 38.46
    pathloss_alpha1: float = 2.0
    pathloss_alpha2: float = 4.0
    pathloss_breakpoint_m: float = 100.0
    pathloss_ref_dist_m: float = 1.0

    def validate(self) -> None:
        if self.num_aps < 1:
            raise ValueError("num_aps must be >= 1")
        for name in (
            "area_side_m",
            "min_ap_ap_dist_m",
            "ue_drop_radius_m",
            "min_ap_ue_dist_m",
            "bandwidth_hz",
            "interval_duration_s",
            "pathloss_breakpoint_m",
            "pathloss_ref_dist_m",
        ):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise ValueError(f"{name} must be finite and > 0, got {value!r}")
        for name in ("tx_power_dbm", "noise_psd_dbm_hz", "shadowing_std_db", "doppler_hz"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.shadowing_std_db < 0:
            raise ValueError("shadowing_std_db must be >= 0")
        if self.doppler_hz < 0:
            raise ValueError("doppler_hz must be >= 0")
        if self.num_sinusoids < 1:
            raise ValueError("num_sinusoids must be >= 1")
        if self.min_ap_ue_dist_m >= self.ue_drop_radius_m:
            raise ValueError("min_ap_ue_dist_m must be < ue_drop_radius_m")
        if self.pathloss_ref_dist_m > self.pathloss_breakpoint_m:
            raise ValueError("pathloss_ref_dist_m must be <= pathloss_breakpoint_m")


@dataclass
class Topology:
    """One drop: positions, serving assignment, and long-term link gains.

    ``longterm_gain_db[i, j]`` is the gain of the directed link AP j -> UE i
    (negative path loss plus shadowing, in dB), frozen for the episode.
    """

    ap_positions: np.ndarray  # (N, 2) meters
    ue_positions: np.ndarray  # (N, 2) meters
    association: np.ndarray  # (N,) serving AP index per UE
    longterm_gain_db: np.ndarray  # (N, N)

    @property
    def num_aps(self) -> int:
        return len(self.ap_positions)


@dataclass
class MeasurementRecord:
    """Per-UE physical measurements for one scheduling interval.

    Desired power and SINR are reference-signal measurements: they are
    reported even when the serving AP stayed silent, in which case only the
    realized rate is zero.
    """

    interval: int
    activation: np.ndarray  # (N,) bool
    desired_power_w: np.ndarray  # (N,)
    interference_power_w: np.ndarray  # (N,)
    sinr_linear: np.ndarray  # (N,)
    realized_rate_bps: np.ndarray  # (N,)

    @property
    def sinr_db(self) -> np.ndarray:
        return 10.0 * np.log10(np.maximum(self.sinr_linear, SINR_FLOOR_LINEAR))


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def db_to_linear(db):
    return 10.0 ** (np.asarray(db) / 10.0)


def path_loss_db(d, cfg: NetworkConfig):
    """Dual-slope path loss in dB at distance ``d`` meters (scalar or array)."""
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise ValueError("path loss is undefined for non-positive distance")
    ref = cfg.pathloss_ref_dist_m
    bp = cfg.pathloss_breakpoint_m
    near = cfg.pl0_db + 10.0 * cfg.pathloss_alpha1 * np.log10(np.maximum(d, ref) / ref)
    pl_bp = cfg.pl0_db + 10.0 * cfg.pathloss_alpha1 * np.log10(bp / ref)
    far = pl_bp + 10.0 * cfg.pathloss_alpha2 * np.log10(d / bp)
    out = np.where(d <= bp, near, far)
    return float(out) if out.ndim == 0 else out


def noise_power_w(cfg: NetworkConfig) -> float:
    """Thermal noise power over the configured bandwidth, in watts."""
    total_dbm = cfg.noise_psd_dbm_hz + 10.0 * np.log10(cfg.bandwidth_hz)
    return dbm_to_watts(total_dbm)


def draw_shadowing_db(rng: np.random.Generator, shape, std_db: float) -> np.ndarray:
    """I.i.d. log-normal shadowing (in dB) for a set of directed links."""
    return rng.normal(0.0, std_db, size=shape)


def _draw_ap_positions(cfg: NetworkConfig, rng: np.random.Generator, attempt_cap: int) -> np.ndarray:
    positions = np.empty((cfg.num_aps, 2))
    for i in range(cfg.num_aps):
        for _ in range(attempt_cap):
            candidate = rng.uniform(0.0, cfg.area_side_m, size=2)
            if i == 0 or np.all(
                np.linalg.norm(positions[:i] - candidate, axis=1) >= cfg.min_ap_ap_dist_m
            ):
                positions[i] = candidate
                break
        else:
            raise PlacementError(
                f"could not place AP {i} with spacing >= {cfg.min_ap_ap_dist_m} m "
                f"in a {cfg.area_side_m} m square after {attempt_cap} attempts"
            )
    return positions


def _draw_ue_in_annulus(cfg: NetworkConfig, rng: np.random.Generator, center: np.ndarray) -> np.ndarray:
    r_min, r_max = cfg.min_ap_ue_dist_m, cfg.ue_drop_radius_m
    # uniform over the annulus area, not over the radius
    radius = np.sqrt(rng.uniform(r_min**2, r_max**2))
    angle = rng.uniform(0.0, 2.0 * np.pi)
    return center + radius * np.array([np.cos(angle), np.sin(angle)])


def generate_topology(
    cfg: NetworkConfig,
    rng: np.random.Generator,
    *,
    ap_attempt_cap: int = 10_000,
    ue_attempt_cap: int = 1_000,
    topology_attempt_cap: int = 100,
) -> Topology:
    """Draw a random drop whose serving link is each UE's strongest link.

    APs are placed by rejection under the pairwise spacing constraint, then
    each UE is dropped in an annulus around its AP. If shadowing makes some
    other AP stronger than the dropping AP, that UE's position and its row
    of link shadowing are re-drawn; if that keeps failing, the whole drop is
    regenerated.
    """
    cfg.validate()
    n = cfg.num_aps
    for _ in range(topology_attempt_cap):
        ap_pos = _draw_ap_positions(cfg, rng, ap_attempt_cap)
        ue_pos = np.empty((n, 2))
        shadow = np.empty((n, n))
        ok = True
        for i in range(n):
            for _ in range(ue_attempt_cap):
                candidate = _draw_ue_in_annulus(cfg, rng, ap_pos[i])
                row_shadow = draw_shadowing_db(rng, n, cfg.shadowing_std_db)
                dists = np.linalg.norm(ap_pos - candidate, axis=1)
                gains = -path_loss_db(dists, cfg) + row_shadow
                if int(np.argmax(gains)) == i:
                    ue_pos[i] = candidate
                    shadow[i] = row_shadow
                    break
            else:
                ok = False
                break
        if not ok:
            continue
        dists = np.linalg.norm(ue_pos[:, None, :] - ap_pos[None, :, :], axis=2)
        gain_db = -path_loss_db(dists, cfg) + shadow
        return Topology(
            ap_positions=ap_pos,
            ue_positions=ue_pos,
            association=np.arange(n),
            longterm_gain_db=gain_db,
        )
    raise PlacementError(
        f"could not produce a drop whose strongest link is the serving link "
        f"after {topology_attempt_cap} regenerations"
    )


@dataclass
class ChannelState:
    """Sum-of-sinusoids flat Rayleigh fading for every directed link.

    Each link carries ``num_sinusoids`` unit phasors with random arrival
    angles and phases; the complex gain at interval t is their normalized
    sum. Deterministic in t given the drawn parameters.
    """

    doppler_shift_rad: np.ndarray  # (N, N, M) angular Doppler per sinusoid
    phase_rad: np.ndarray  # (N, N, M)
    interval_duration_s: float
    interval: int = field(default=0)

    @property
    def num_sinusoids(self) -> int:
        return self.phase_rad.shape[-1]

    def power_gains(self, t: int) -> np.ndarray:
        """|h|^2 per directed link at interval ``t`` (unit long-run mean)."""
        psi = self.doppler_shift_rad * (t * self.interval_duration_s) + self.phase_rad
        re = np.cos(psi).sum(axis=-1)
        im = np.sin(psi).sum(axis=-1)
        self.interval = t
        return (re * re + im * im) / self.num_sinusoids


def init_channel(cfg: NetworkConfig, rng: np.random.Generator) -> ChannelState:
    """Draw fresh fading oscillators for an episode."""
    n, m = cfg.num_aps, cfg.num_sinusoids
    theta = rng.uniform(0.0, 2.0 * np.pi, size=(n, n, m))
    phase = rng.uniform(0.0, 2.0 * np.pi, size=(n, n, m))
    omega = 2.0 * np.pi * cfg.doppler_hz * np.cos(theta)
    return ChannelState(
        doppler_shift_rad=omega,
        phase_rad=phase,
        interval_duration_s=cfg.interval_duration_s,
    )


def link_gains_linear(topology: Topology, fading_power: np.ndarray) -> np.ndarray:
    """Combined long-term gain and instantaneous fading, linear scale."""
    return db_to_linear(topology.longterm_gain_db) * fading_power


def pattern_measurements(
    gains_linear: np.ndarray,
    association: np.ndarray,
    patterns: np.ndarray,
    cfg: NetworkConfig,
):
    """Measurements for a batch of activation patterns on fixed link gains.

    ``patterns`` is (P, N) boolean. Returns (S, I, sinr, rate), each (P, N).
    The exhaustive-search baseline enumerates patterns through this exact
    code path, so its optimum is exactly comparable with any single
    pattern's measurement.
    """
    patterns = np.asarray(patterns, dtype=bool)
    if patterns.ndim == 1:
        patterns = patterns[None, :]
    n = len(association)
    if patterns.shape[1] != n:
        raise ValueError(f"activation length {patterns.shape[1]} != num_aps {n}")
    tx_w = dbm_to_watts(cfg.tx_power_dbm)
    noise_w = noise_power_w(cfg)
    rx_power = tx_w * gains_linear  # (N_ue, N_ap)
    serving = rx_power[np.arange(n), association]  # (N,)
    serving_active = patterns[:, association]  # (P, N)
    total = (patterns[:, None, :] * rx_power[None, :, :]).sum(axis=-1)  # (P, N)
    interference = total - serving_active * serving[None, :]
    sinr = serving[None, :] / (interference + noise_w)
    rate = serving_active * (cfg.bandwidth_hz * np.log2(1.0 + sinr))
    desired = np.broadcast_to(serving[None, :], sinr.shape)
    return desired, interference, sinr, rate


def step_interval(
    topology: Topology,
    channel: ChannelState,
    activation: np.ndarray,
    cfg: NetworkConfig,
    t: int | None = None,
) -> MeasurementRecord:
    """Simulate one scheduling interval under the given activation vector."""
    activation = np.asarray(activation, dtype=bool)
    if activation.shape != (topology.num_aps,):
        raise ValueError(
            f"activation length {activation.shape} != num_aps {topology.num_aps}"
        )
    if t is None:
        t = channel.interval
    fading = channel.power_gains(t)
    gains = link_gains_linear(topology, fading)
    desired, interference, sinr, rate = pattern_measurements(
        gains, topology.association, activation[None, :], cfg
    )
    return MeasurementRecord(
        interval=t,
        activation=activation,
        desired_power_w=desired[0].copy(),
        interference_power_w=interference[0],
        sinr_linear=sinr[0],
        realized_rate_bps=rate[0],
    )
