"""Reference schedulers: always-on, round-robin, and the genie-aided optimum."""

from __future__ import annotations

import numpy as np

from .environment import NetworkConfig, pattern_measurements

EXHAUSTIVE_MAX_APS = 20  # 2^N enumeration guard


def full_reuse(num_aps: int) -> np.ndarray:
    """All APs transmit every interval."""
    return np.ones(num_aps, dtype=bool)


def tdm(num_aps: int, t: int) -> np.ndarray:
    """Round robin: only AP (t mod N) transmits."""
    if t < 0:
        raise ValueError("t must be >= 0")
    pattern = np.zeros(num_aps, dtype=bool)
    pattern[t % num_aps] = True
    return pattern


def all_patterns(num_aps: int) -> np.ndarray:
    """Every activation pattern, ordered by binary encoding (AP i = bit i)."""
    codes = np.arange(2**num_aps)
    return ((codes[:, None] >> np.arange(num_aps)) & 1).astype(bool)


def exhaustive_search(
    gains_linear: np.ndarray,
    weights: np.ndarray,
    cfg: NetworkConfig,
    association: np.ndarray | None = None,
) -> np.ndarray:
    """Activation pattern maximizing this interval's weighted sum-rate.

    Enumerates all 2^N patterns through the same measurement code path the
    simulator uses, so the returned optimum is exactly (not just
    numerically) at least as good as any pattern evaluated elsewhere.
    Ties prefer more active APs, then the lowest binary encoding.
    """
    n = len(weights)
    if n > EXHAUSTIVE_MAX_APS:
        raise ValueError(f"exhaustive search capped at {EXHAUSTIVE_MAX_APS} APs, got {n}")
    if association is None:
        association = np.arange(n)
    patterns = all_patterns(n)
    _, _, _, rates = pattern_measurements(gains_linear, association, patterns, cfg)
    scores = rates @ np.asarray(weights, dtype=float)
    best = scores.max()
    tied = np.flatnonzero(scores == best)
    active_counts = patterns[tied].sum(axis=1)
    tied = tied[active_counts == active_counts.max()]
    return patterns[tied.min()].copy()
