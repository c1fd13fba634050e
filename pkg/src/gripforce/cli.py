"""Command line entry point: ``gripforce <subcommand> [options]``.

Exit codes: 0 success, 1 usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .agent.checkpoint import CheckpointError
from .agent.ppo import NonFiniteLoss, train
from .baseline import BaselinePolicy
from .config import ConfigError, ExperimentConfig, load_config
from .evaluation import (BaselineAgent, RandomPolicy, ZeroPolicy, aggregate, compare,
                         format_compare, load_policy, mean_return, read_records, rollout,
                         run_calibration, run_evaluation, write_calibration, write_compare,
                         write_summary, write_trajectory)
from .physics import InvalidInput

log = logging.getLogger("gripforce")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="experiment config file "
                        "(default: $GRIPFORCE_CONFIG, else built-in defaults)")
    common.add_argument("--seed", type=int, help="base seed (overrides randomization.seed)")
    common.add_argument("--out", metavar="DIR", help="output directory (overrides experiment.out_dir)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="gripforce", description="Grasp force control: simulation, "
                     "PPO training and evaluation.", parents=[common])
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    sub.add_parser("calibrate", parents=[common], help="slope table and closing trajectories")

    p = sub.add_parser("train", parents=[common], help="train a PPO policy")
    p.add_argument("--steps", type=int, help="total environment steps (overrides ppo.total_steps)")
    p.add_argument("--no-inductive-bias", action="store_true", help="train without action scaling")
    p.add_argument("--no-randomize", action="store_true", help="fixed κ and b2 during training")

    p = sub.add_parser("evaluate", parents=[common], help="evaluate a checkpoint over the κ grid")
    p.add_argument("--checkpoint", metavar="PATH", help="policy checkpoint (overrides experiment.checkpoint)")
    p.add_argument("--model-id", help="label stored with each trial")
    p.add_argument("--trials", type=int, help="trials per κ")
    p.add_argument("--workers", type=int, help="parallel worker processes")
    p.add_argument("--stochastic", action="store_true", help="sample actions instead of the mean")

    p = sub.add_parser("baseline-eval", parents=[common], help="evaluate the phase controller "
                       "(or a zero/random reference policy)")
    p.add_argument("--policy", choices=("baseline", "zero", "random"), default="baseline")
    p.add_argument("--trials", type=int, help="trials per κ")
    p.add_argument("--workers", type=int, help="parallel worker processes")

    p = sub.add_parser("rollout", parents=[common], help="one episode with a per-step CSV")
    p.add_argument("--checkpoint", metavar="PATH", help="policy checkpoint (default: baseline controller)")
    p.add_argument("--kappa", type=float, help="object stiffness factor (default: sampled)")
    p.add_argument("--stochastic", action="store_true")

    p = sub.add_parser("compare", parents=[common], help="summary table over evaluation CSVs")
    p.add_argument("csvs", nargs="+", metavar="CSV")
    return parser


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    exp = cfg.experiment
    if args.out is not None:
        exp = replace(exp, out_dir=args.out)
    cfg = replace(cfg, experiment=exp)
    if args.seed is not None:
        cfg = replace(cfg, randomization=replace(cfg.randomization, seed=args.seed))
    return cfg


def _out_dir(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.experiment.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    return out


def _checkpoint_path(args, cfg: ExperimentConfig) -> Path:
    path = args.checkpoint or cfg.experiment.checkpoint
    if not path:
        raise UsageError("no checkpoint given (use --checkpoint or experiment.checkpoint)")
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    return path


def _report(records, cfg, out: Path, stem: str) -> None:
    write_summary(out / f"{stem}_summary.csv", aggregate(records))
    print(format_compare(compare([records])))
    print(f"mean return {mean_return(records):.3f} over {len(records)} trials -> {out / (stem + '.csv')}")


def cmd_calibrate(args, cfg):
    out = _out_dir(cfg)
    report = run_calibration(cfg)
    slopes, traj = write_calibration(report, out)
    print(report.format())
    print(f"wrote {slopes} and {traj}")


def cmd_train(args, cfg):
    out = _out_dir(cfg)
    ppo = cfg.ppo if args.steps is None else replace(cfg.ppo, total_steps=args.steps)
    overrides = {}
    if args.no_inductive_bias:
        overrides["inductive_bias_enabled"] = False
    if args.no_randomize:
        overrides["randomize"] = False
    shift, scale = cfg.obs_standardization()

    def factory(seed):
        return cfg.make_env(seed=seed, training=True, **overrides)

    def progress(row):
        log.info("update %s  step %s  mean return %s", row["update"], row["step"],
                 row["mean_return_30"] or "-")

    seed = cfg.randomization.seed
    result = train(factory, ppo, out, seed=seed, obs_shift=shift, obs_scale=scale, progress=progress)
    print(f"trained {ppo.total_steps} steps; best running mean {result.best_mean:.3f}; "
          f"checkpoints in {out}")


def cmd_evaluate(args, cfg):
    path = _checkpoint_path(args, cfg)
    out = _out_dir(cfg)
    policy = load_policy(path, cfg, args.model_id, args.stochastic or cfg.experiment.stochastic)
    stem = f"eval_{policy.model_id}"
    records = run_evaluation(policy, cfg, trials=args.trials, workers=args.workers,
                             csv_path=out / f"{stem}.csv")
    _report(records, cfg, out, stem)


def cmd_baseline_eval(args, cfg):
    out = _out_dir(cfg)
    if args.policy == "baseline":
        policy = BaselineAgent(BaselinePolicy(cfg.baseline))
    elif args.policy == "zero":
        policy = ZeroPolicy(inductive_bias=cfg.env.inductive_bias_enabled)
    else:
        policy = RandomPolicy(inductive_bias=cfg.env.inductive_bias_enabled)
    stem = f"eval_{policy.model_id}"
    records = run_evaluation(policy, cfg, trials=args.trials, workers=args.workers,
                             csv_path=out / f"{stem}.csv")
    _report(records, cfg, out, stem)


def cmd_rollout(args, cfg):
    out = _out_dir(cfg)
    if args.checkpoint:
        policy = load_policy(_checkpoint_path(args, cfg), cfg, stochastic=args.stochastic)
    else:
        policy = BaselineAgent(BaselinePolicy(cfg.baseline))
    rows = rollout(policy, cfg, cfg.randomization.seed, args.kappa)
    path = out / f"rollout_{policy.model_id}_seed{cfg.randomization.seed}.csv"
    write_trajectory(path, rows)
    total = sum(r["r_total"] for r in rows)
    print(f"episode return {total:.3f} ({len(rows)} steps) -> {path}")


def cmd_compare(args, cfg):
    sets = []
    for name in args.csvs:
        path = Path(name)
        if not path.is_file():
            raise FileNotFoundError(f"evaluation CSV not found: {path}")
        sets.append(read_records(path))
    rows = compare(sets)
    out = _out_dir(cfg)
    write_compare(out / "compare.csv", rows)
    print(format_compare(rows))


COMMANDS = {
    "calibrate": cmd_calibrate, "train": cmd_train, "evaluate": cmd_evaluate,
    "baseline-eval": cmd_baseline_eval, "rollout": cmd_rollout, "compare": cmd_compare,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        COMMANDS[args.command](args, cfg)
    except UsageError as exc:
        print(f"gripforce {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, CheckpointError, InvalidInput, NonFiniteLoss, OSError, ValueError,
            RuntimeError) as exc:
        print(f"gripforce {args.command}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
