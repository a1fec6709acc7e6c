"""Train the shared policy at toy scale and watch the learning curve.

This is a miniature of the full run (fewer episodes everywhere) so it
finishes in a couple of minutes; expect the policy to pull clear of full
reuse but not to reach its final quality. The full-scale recipe is
`linksched train` with the default configuration.

Run from the repository root:

    python demos/04_train_quicklook.py
"""

import dataclasses
from pathlib import Path

from linksched import RunConfig, train

out = Path("runs/demo-quicklook")
cfg = dataclasses.replace(
    RunConfig(),
    num_aps=4,
    pretrain_episodes=25,
    epsilon_decay_episodes=15,
    episodes_per_epoch=5,
    max_epochs=80,
    validation_envs=20,
    patience_epochs=80,
    master_seed=3,
)

state = train(cfg, out)

print("epoch  score(M)   avg(M)   p5(M)")
for row in state.curve[::4]:
    marker = " *" if row.epoch == state.best_epoch else ""
    print(
        f"{row.epoch:5d} {row.metrics.score / 1e6:9.2f} {row.metrics.avg_rate_bps / 1e6:8.2f} "
        f"{row.metrics.p5_rate_bps / 1e6:7.2f}{marker}"
    )

print("\nreference lines on the same validation environments:")
for name, m in state.baseline_metrics.items():
    print(f"  {name:>10}: score {m.score / 1e6:7.2f}  avg {m.avg_rate_bps / 1e6:7.2f}  p5 {m.p5_rate_bps / 1e6:6.2f}")

print(f"\nbest model (epoch {state.best_epoch}) saved to {state.best_model_path}")
print(f"learning curve CSV: {out / 'learning_curve.csv'}")
