"""Run a policy trained at one density on denser networks, unmodified.

The observation vector is fixed at 14 entries regardless of how many APs
exist (own report plus six neighbor slots), so a saved policy loads and
runs at any density. Point MODEL at a real checkpoint for meaningful
numbers; without one this script trains the quicklook model first.

Run from the repository root:

    python demos/05_density_generalization.py [path/to/model.txt]
"""

import dataclasses
import sys
from pathlib import Path

from linksched import RunConfig, evaluate, load_policy
from linksched.harness import FullReusePolicy, GreedyPolicy, TdmPolicy, draw_seeds, seed_stream

model_path = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("runs/demo-quicklook/model_best.txt")
if not model_path.exists():
    print(f"no model at {model_path}; run demos/04_train_quicklook.py first")
    raise SystemExit(1)

net = load_policy(model_path)
print(f"loaded {model_path} (trained {net.metadata['train_steps']} steps, epoch {net.metadata['epoch']})\n")

cfg = dataclasses.replace(RunConfig(), master_seed=13)
print(f"{'APs':>4} {'policy':>11} {'avg(M)':>8} {'p5(M)':>7} {'score(M)':>9}")
for density in (4, 6, 8, 10):
    density_cfg = dataclasses.replace(cfg, num_aps=density)
    seeds = draw_seeds(seed_stream(cfg.master_seed, f"demo-gen-{density}"), 30)
    for policy in (GreedyPolicy(net), FullReusePolicy(), TdmPolicy()):
        m = evaluate(density_cfg, policy, seeds)
        print(
            f"{density:>4} {policy.name:>11} {m.avg_rate_bps / 1e6:8.2f} "
            f"{m.p5_rate_bps / 1e6:7.2f} {m.score / 1e6:9.2f}"
        )
    print()
