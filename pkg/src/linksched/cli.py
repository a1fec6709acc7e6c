"""Command-line entry points: train, evaluate, baseline, calibrate.

Every command reads one flat config file, derives all randomness from the
master seed, and writes its outputs plus a checksummed run manifest into
the output directory.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import os
import sys
import time
from pathlib import Path

from . import __version__
from .config import ConfigError, RunConfig, parse_config
from .dqn import DivergenceError, ModelFormatError, ObservationLayoutError, load_policy
from .environment import PlacementError
from .harness import (
    BASELINE_POLICIES,
    CalibrationError,
    EvalMetrics,
    GreedyPolicy,
    calibrate_validation_set,
    draw_seeds,
    evaluate,
    seed_stream,
    train,
)


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _atomic_write_text(path: Path, text: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text, encoding="ascii")
    os.replace(tmp, path)


def write_manifest(out: Path, command: str, cfg: RunConfig, outputs: list[Path], started: float) -> Path:
    manifest = {
        "artifact": "linksched",
        "version": __version__,
        "command": command,
        "config": cfg.as_dict(),
        "started_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(started)),
        "finished_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "outputs": {str(p.relative_to(out)): _sha256(p) for p in outputs if p.is_file()},
    }
    path = out / "manifest.json"
    _atomic_write_text(path, json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _load_run_config(args) -> RunConfig:
    cfg = parse_config(args.config) if args.config else RunConfig()
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["master_seed"] = args.seed
    if getattr(args, "threads", None) is not None:
        overrides["threads"] = args.threads
    if getattr(args, "out", None) is not None:
        overrides["output_dir"] = args.out
    if overrides:
        cfg = dataclasses.replace(cfg, **overrides)
        cfg.validate()
    return cfg


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_eval_reports(out: Path, rows: list[dict]) -> list[Path]:
    header = ["policy", "num_aps", "avg_rate_bps", "sum_rate_bps", "p5_rate_bps", "score"]
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(str(row[k]) if k in ("policy", "num_aps") else repr(row[k]) for k in header))
    csv_path = out / "evaluation.csv"
    _atomic_write_text(csv_path, "\n".join(lines) + "\n")
    json_path = out / "evaluation.json"
    _atomic_write_text(json_path, json.dumps(rows, indent=2) + "\n")
    return [csv_path, json_path]


def _metrics_row(policy_name: str, num_aps: int, metrics: EvalMetrics) -> dict:
    return {
        "policy": policy_name,
        "num_aps": num_aps,
        "avg_rate_bps": metrics.avg_rate_bps,
        "sum_rate_bps": metrics.avg_rate_bps * num_aps,
        "p5_rate_bps": metrics.p5_rate_bps,
        "score": metrics.score,
    }


def cmd_train(args) -> int:
    cfg = _load_run_config(args)
    out = _out_dir(cfg)
    started = time.time()
    state = train(cfg, out)
    outputs = [out / "learning_curve.csv"]
    if state.best_model_path:
        outputs += [Path(state.best_model_path)]
        outputs += sorted((out / "checkpoints").glob("model_epoch_*.txt"))
    write_manifest(out, "train", cfg, outputs, started)
    print(
        f"trained {state.epochs_run} epochs; best score {state.best_score:.6g} "
        f"at epoch {state.best_epoch}; outputs in {out}"
    )
    return 0


def cmd_evaluate(args) -> int:
    cfg = _load_run_config(args)
    out = _out_dir(cfg)
    started = time.time()
    net = load_policy(args.model)
    densities = [int(tok) for tok in args.densities.split(",")] if args.densities else [cfg.num_aps]
    rows = []
    for density in densities:
        density_cfg = dataclasses.replace(cfg, num_aps=density)
        density_cfg.validate()
        seeds = draw_seeds(
            seed_stream(cfg.master_seed, f"eval-density-{density}"), cfg.eval_envs
        )
        policies = [GreedyPolicy(net)] + [cls() for cls in BASELINE_POLICIES.values()]
        for policy in policies:
            metrics = evaluate(density_cfg, policy, seeds, cfg.threads)
            rows.append(_metrics_row(policy.name, density, metrics))
            print(
                f"{policy.name:>10} N={density}: avg {metrics.avg_rate_bps:.4g} bps, "
                f"p5 {metrics.p5_rate_bps:.4g} bps, score {metrics.score:.6g}"
            )
    outputs = _write_eval_reports(out, rows)
    write_manifest(out, "evaluate", cfg, outputs, started)
    return 0


def cmd_baseline(args) -> int:
    cfg = _load_run_config(args)
    out = _out_dir(cfg)
    started = time.time()
    policy = BASELINE_POLICIES[args.name]()
    seeds = draw_seeds(
        seed_stream(cfg.master_seed, f"eval-density-{cfg.num_aps}"), cfg.eval_envs
    )
    metrics = evaluate(cfg, policy, seeds, cfg.threads)
    rows = [_metrics_row(policy.name, cfg.num_aps, metrics)]
    outputs = _write_eval_reports(out, rows)
    write_manifest(out, "baseline", cfg, outputs, started)
    print(
        f"{policy.name} on {len(seeds)} environments: avg {metrics.avg_rate_bps:.4g} bps, "
        f"p5 {metrics.p5_rate_bps:.4g} bps, score {metrics.score:.6g}"
    )
    return 0


def cmd_calibrate(args) -> int:
    cfg = _load_run_config(args)
    out = _out_dir(cfg)
    started = time.time()
    result = calibrate_validation_set(cfg)
    seeds_path = out / "validation_seeds.json"
    _atomic_write_text(seeds_path, json.dumps(result.seeds) + "\n")
    report = {
        "reference": result.reference.as_dict(),
        "accepted": result.accepted.as_dict(),
        "attempts": result.attempts,
        "avg_rel_error": result.avg_rel_error,
        "p5_rel_error": result.p5_rel_error,
        "tolerance": cfg.calibration_tolerance,
    }
    report_path = out / "calibration.json"
    _atomic_write_text(report_path, json.dumps(report, indent=2) + "\n")
    write_manifest(out, "calibrate", cfg, [seeds_path, report_path], started)
    print(
        f"accepted {len(result.seeds)} seeds after {result.attempts} attempt(s): "
        f"avg err {result.avg_rel_error:.3%}, p5 err {result.p5_rel_error:.3%}"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="linksched",
        description="Multi-agent deep-Q link scheduling simulator and trainer",
    )
    parser.add_argument("--version", action="version", version=f"linksched {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="run configuration file (defaults apply if omitted)")
        p.add_argument("--seed", type=int, help="override master_seed")
        p.add_argument("--out", help="override output_dir")
        p.add_argument("--threads", type=int, help="override threads (1 = strict order)")

    p_train = sub.add_parser("train", help="train the shared policy and emit a learning curve")
    common(p_train)
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("evaluate", help="evaluate a saved policy against the baselines")
    common(p_eval)
    p_eval.add_argument("--model", required=True, help="saved policy file")
    p_eval.add_argument("--densities", help="comma-separated AP counts, e.g. 4,6,8,10")
    p_eval.set_defaults(func=cmd_evaluate)

    p_base = sub.add_parser("baseline", help="evaluate one reference scheduler")
    p_base.add_argument("name", choices=sorted(BASELINE_POLICIES))
    common(p_base)
    p_base.set_defaults(func=cmd_baseline)

    p_cal = sub.add_parser("calibrate", help="select a representative validation seed set")
    common(p_cal)
    p_cal.set_defaults(func=cmd_calibrate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (
        ConfigError,
        ModelFormatError,
        ObservationLayoutError,
        PlacementError,
        CalibrationError,
        DivergenceError,
        FileNotFoundError,
        ValueError,
    ) as exc:
        print(f"linksched {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
