"""Command-line interface: single episodes, evaluation campaigns, model
training, and the environment server.
"""

from __future__ import annotations

import argparse
import json
import sys

from .env import EpisodeConfig, RewardConfig
from .errors import FwctlError
from .harness import (
    CampaignCell,
    actuation_fluctuation,
    evaluate_campaign,
    load_campaign_matrix,
    run_episode,
    tracking_rmse,
)
from .server import serve


def _episode_config(args) -> EpisodeConfig:
    return EpisodeConfig(
        steps=args.steps,
        difficulty=args.difficulty,
        severity=args.severity,
        wind_mode=args.wind_mode,
        reward=RewardConfig.named(args.reward),
        airframe=args.airframe,
        roll_only=args.roll_only,
    )


def _add_env_flags(p: argparse.ArgumentParser):
    p.add_argument("--severity", default="off",
                   choices=["off", "light", "moderate", "severe"])
    p.add_argument("--difficulty", default="nominal", choices=["nominal", "hard"])
    p.add_argument("--reward", default="base", choices=["base", "avp", "avp-ppo"])
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--wind-mode", default="eval", choices=["eval", "train"])
    p.add_argument("--airframe", default="x8")
    p.add_argument("--roll-only", action="store_true")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="fwctl",
                                     description="Fixed-wing attitude control toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one episode and write trajectory.csv")
    p_run.add_argument("--controller", default="pid",
                       help="pid | mppi-gt | mppi-learned:<checkpoint>")
    p_run.add_argument("--seed", type=int, default=0)
    p_run.add_argument("--out", default="trajectory.csv")
    _add_env_flags(p_run)

    p_camp = sub.add_parser("campaign", help="run an evaluation matrix")
    p_camp.add_argument("--matrix", required=True, help="INI matrix file")
    p_camp.add_argument("--seeds", type=int, default=5)
    p_camp.add_argument("--root-seed", type=int, default=0)
    p_camp.add_argument("--workers", type=int, default=1)
    p_camp.add_argument("--out", required=True, help="output directory")

    p_train = sub.add_parser("train-tdmpc", help="train the model-based agent")
    p_train.add_argument("--total-steps", type=int, default=50_000)
    p_train.add_argument("--seed-steps", type=int, default=10_000)
    p_train.add_argument("--seed", type=int, default=0)
    p_train.add_argument("--out", required=True, help="output directory")
    _add_env_flags(p_train)

    p_serve = sub.add_parser("serve", help="serve environments over TCP")
    p_serve.add_argument("--bind", default="127.0.0.1:7447")
    _add_env_flags(p_serve)
    p_serve.set_defaults(steps=2000)

    args = parser.parse_args(argv)
    try:
        return _dispatch(args)
    except FwctlError as exc:
        print(json.dumps({"error": type(exc).__name__, "detail": str(exc)}),
              file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        return 130


def _dispatch(args) -> int:
    if args.command == "run":
        log = run_episode(args.controller, _episode_config(args), args.seed)
        log.to_csv(args.out)
        print(json.dumps({
            "controller": args.controller, "seed": args.seed, "steps": len(log),
            "tracking_rmse": tracking_rmse(log),
            "actuation_fluctuation": actuation_fluctuation(log),
            "diverged": log.diverged, "out": args.out,
        }))
        return 0

    if args.command == "campaign":
        cells = load_campaign_matrix(args.matrix)
        report = evaluate_campaign(cells, args.seeds, root_seed=args.root_seed,
                                   out_dir=args.out, workers=args.workers)
        print(report.to_text())
        return 0

    if args.command == "train-tdmpc":
        from .learn import TrainConfig, train_tdmpc_lite
        cfg = TrainConfig(total_steps=args.total_steps, seed_steps=args.seed_steps,
                          out_dir=args.out)
        told, curves, info = train_tdmpc_lite(_episode_config(args), cfg, args.seed)
        print(json.dumps({"episodes": info["episodes"], "steps": info["steps"],
                          "aborted": info["aborted"],
                          "checkpoint": info.get("checkpoint"),
                          "final_return": curves[-1][1] if curves else None}))
        return 0 if not info["aborted"] else 3

    if args.command == "serve":
        serve(args.bind, _episode_config(args))
        return 0

    raise FwctlError(f"unknown command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
