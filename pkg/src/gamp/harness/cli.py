"""Command-line entry point: clip generation, training, evaluation, policy
export, and frozen-policy rollouts."""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gamp", description="gated adversarial motion priors")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-clips", help="write the reference motion clips")
    g.add_argument("--config", default=None, help="YAML config file")
    g.add_argument("--out", required=True, help="output directory")

    t = sub.add_parser("train", help="run training")
    t.add_argument("--config", default=None, help="YAML config file")
    t.add_argument("--out", required=True, help="output directory")
    t.add_argument("--seed", type=int, default=None, help="override config seed")
    t.add_argument("--iters", type=int, default=None, help="override iteration count")
    t.add_argument("--single-thread", action="store_true",
                   help="pin numeric libraries to one thread")

    e = sub.add_parser("eval", help="evaluate a frozen policy")
    e.add_argument("--policy", required=True, help="frozen policy file")
    e.add_argument("--out", required=True, help="output directory")
    e.add_argument("--suite", default="full",
                   choices=["full", "sweep", "recovery", "continuity"])

    x = sub.add_parser("export", help="convert a checkpoint to a frozen policy")
    x.add_argument("--checkpoint", required=True)
    x.add_argument("--out", required=True, help="output policy path")

    r = sub.add_parser("rollout", help="run one frozen-policy scenario")
    r.add_argument("--policy", required=True)
    r.add_argument("--scenario", required=True)
    r.add_argument("--steps", type=int, required=True)
    r.add_argument("--trace", required=True, help="trace CSV path")
    return p


def _pin_threads() -> None:
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                "NUMEXPR_NUM_THREADS"):
        os.environ[var] = "1"


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if getattr(args, "single_thread", False):
        _pin_threads()  # must precede the numpy import below
    try:
        if args.command == "gen-clips":
            from ..clips import generate_getup_clip, generate_run_clip, generate_walk_clip, save_clip
            from .config import load_config

            cfg = load_config(args.config)
            out = Path(args.out)
            out.mkdir(parents=True, exist_ok=True)
            save_clip(generate_walk_clip(cfg.clips.walk, cfg.model), out / "walk.json")
            save_clip(generate_run_clip(cfg.clips.run, cfg.model), out / "run.json")
            for start in ("prone", "supine"):
                save_clip(
                    generate_getup_clip(start, cfg.clips.getup, cfg.model),
                    out / f"getup_{start}.json",
                )
            print(f"wrote 4 clips to {out}")

        elif args.command == "train":
            import dataclasses

            from .config import load_config
            from .train import train

            cfg = load_config(args.config)
            overrides = {}
            if args.seed is not None:
                overrides["seed"] = args.seed
            if args.single_thread:
                overrides["single_thread"] = True
            if overrides:
                cfg = dataclasses.replace(cfg, **overrides)
            path = train(cfg, args.out, iterations=args.iters,
                         log=lambda m: print(m, flush=True))
            print(f"frozen policy written to {path}")

        elif args.command == "eval":
            from .evaluate import evaluate
            from .frozen import load_frozen

            report = evaluate(load_frozen(args.policy), args.out, suite=args.suite)
            print(f"evaluation report written to {Path(args.out) / 'report.txt'}")
            if "mean_sweep_error" in report:
                print(f"mean sweep tracking error: {report['mean_sweep_error']:.4f} m/s")
            for mode in ("prone", "supine"):
                key = f"recovery_rate_{mode}"
                if key in report:
                    print(f"{mode} recovery rate: {report[key] * 100:.0f}%")

        elif args.command == "export":
            from .train import export_checkpoint

            export_checkpoint(args.checkpoint, args.out)
            print(f"frozen policy written to {args.out}")

        elif args.command == "rollout":
            from ..sim import BipedModel
            from .evaluate import SCENARIOS, rollout_frozen
            from .frozen import load_frozen

            if args.scenario not in SCENARIOS:
                raise ValueError(
                    f"unknown scenario {args.scenario!r}; choose from {sorted(SCENARIOS)}"
                )
            summary = rollout_frozen(
                load_frozen(args.policy), BipedModel(), SCENARIOS[args.scenario],
                args.steps, trace_path=args.trace,
            )
            print(
                f"{summary['scenario']}: steps={summary['steps']} "
                f"tracking_error={summary['mean_tracking_error']:.4f} "
                f"recovered={summary['recovered']} failed={summary['failed']}"
            )
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
