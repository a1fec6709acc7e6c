"""Walk through the physical-layer pieces: path loss, shadowing, fading.

Run from the repository root:

    python demos/01_channel_model.py
"""

import numpy as np

from linksched import NetworkConfig, init_channel, noise_power_w, path_loss_db
from linksched.environment import draw_shadowing_db

cfg = NetworkConfig()

# --- dual-slope path loss -------------------------------------------------
# Free-space-like slope (20 dB/decade) out to the 100 m breakpoint, then a
# much steeper 40 dB/decade: distant interferers fade away quickly.
print("distance ->  path loss")
for d in (1, 10, 35, 100, 250, 500, 1000):
    print(f"  {d:5d} m -> {path_loss_db(float(d), cfg):7.2f} dB")

# Thermal noise over the full 10 MHz channel.
noise = noise_power_w(cfg)
print(f"\nnoise floor: {10 * np.log10(noise) + 30:.1f} dBm ({noise:.3e} W)")

# --- log-normal shadowing ---------------------------------------------------
draws = draw_shadowing_db(np.random.default_rng(1), 100_000, cfg.shadowing_std_db)
print(f"shadowing: std {draws.std():.3f} dB (configured {cfg.shadowing_std_db} dB), mean {draws.mean():+.4f} dB")

# --- sum-of-sinusoids Rayleigh fading ---------------------------------------
# Every directed link carries 8 unit phasors drifting at random Doppler
# shifts. The squared envelope has unit mean, so it reshapes the SINR from
# interval to interval without changing the long-term link budget.
cfg_fast = NetworkConfig()
cfg_fast.num_aps = 10
cfg_fast.doppler_hz = 100.0  # faster fading decorrelates the sample mean
channel = init_channel(cfg_fast, np.random.default_rng(2))
power = np.empty((2_000, 100))
for t in range(2_000):
    power[t] = channel.power_gains(t).ravel()
print(f"\nfading over {power.size:,} link-intervals:")
print(f"  mean |h|^2 = {power.mean():.4f}   (unit-power target 1.0)")
print(f"  mean |h|   = {np.sqrt(power).mean():.4f} (Rayleigh target {np.sqrt(np.pi / 4):.4f})")
print(f"  P(|h|^2 < 0.1) = {(power < 0.1).mean():.3f} (deep fades are routine)")

# The default 10 Hz Doppler at 1 ms intervals keeps fades coherent for tens
# of intervals, which is what makes 4-interval-old channel reports useful.
channel_slow = init_channel(NetworkConfig(), np.random.default_rng(3))
trace = np.array([channel_slow.power_gains(t)[0, 0] for t in range(60)])
print("\none link's |h|^2 across 60 consecutive intervals (10 Hz Doppler):")
print("  " + " ".join(f"{v:.2f}" for v in trace[::6]))
