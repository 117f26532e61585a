"""Command-line entry point.

Subcommands: ``train``, ``eval``, ``gp-selftest`` and ``record``. Human
readable progress goes to standard error; the machine readable result of
every command is one JSON document on standard output.

Usage and configuration errors exit with 2, runtime failures with 1.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import agent as ag
from .config import TrainConfig
from .exceptions import ConfigError
from .harness import (Trainer, TrainingAborted, build_env, evaluate, record_trajectory,
                      run_summary, write_metrics_csv)
from .io import CheckpointError, load_checkpoint, save_checkpoint
from .selftest import run_selftest

log = logging.getLogger("sgddpg")

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2

# shorthand flags for the ablations, mapped onto dotted config keys
_SHORTHANDS = {"seed": "train.seed", "steps": "train.total_steps", "gp_mode": "gp.mode",
               "beta": "gp.beta", "init_trajectory": "init.trajectory"}


class UsageError(Exception):
    pass


def _emit(doc: dict):
    sys.stdout.write(json.dumps(doc, sort_keys=True) + "\n")
    sys.stdout.flush()


def _add_config_flags(p: argparse.ArgumentParser):
    group = p.add_argument_group("configuration keys (override --config)")
    for key, f in TrainConfig.key_fields().items():
        group.add_argument(f"--{key}", dest=f"cfg:{key}", default=None, metavar="V",
                           help=f"{f.metadata['help']} (default {f.default!r})")


def resolve_config(args) -> TrainConfig:
    """Merge the optional JSON config file with command-line overrides."""
    base = TrainConfig.from_json(args.config) if args.config else TrainConfig()
    flat = {}
    for attr, key in _SHORTHANDS.items():
        value = getattr(args, attr, None)
        if value is not None:
            flat[key] = value
    for name, value in vars(args).items():
        if name.startswith("cfg:") and value is not None:
            flat[name[4:]] = value
    if getattr(args, "vanilla", False):
        flat["train.vanilla"] = True
    cfg = TrainConfig.from_flat(flat, base)
    if cfg.init_trajectory is not None and not Path(cfg.init_trajectory).is_file():
        raise ConfigError(f"init trajectory {cfg.init_trajectory} does not exist")
    return cfg


# commands -----------------------------------------------------------------------

def cmd_train(args) -> int:
    cfg = resolve_config(args)
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "checkpoints").mkdir(exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create output directory {out}: {exc}") from None

    trainer = Trainer(cfg)
    log.info("training %s for %d steps (seed %d, %s)", cfg.env, cfg.total_steps, cfg.seed,
             "vanilla" if cfg.vanilla else f"gp {cfg.gp_mode}, beta {cfg.beta}")

    def on_record(rec):
        if rec.kind == "eval":
            log.info("step %6d  eval return %9.2f  catastrophes %d  gp %d", rec.step,
                     rec.eval_return, rec.cumulative_catastrophes, rec.gp_size)

    def checkpoint(tr):
        path = out / "checkpoints" / f"step_{tr.step:08d}.json"
        save_checkpoint(path, tr.nets, tr.gp_data, tr.hp, {"step": tr.step, "seed": cfg.seed})
        log.info("wrote %s", path)

    try:
        records = trainer.run(on_record=on_record, on_checkpoint=checkpoint,
                              checkpoint_interval=args.checkpoint_interval)
    except TrainingAborted as exc:
        log.error("%s", exc)
        return EXIT_FAILURE
    wall = records[-1].wall_seconds if records else 0.0
    write_metrics_csv(out / "metrics.csv", records)
    save_checkpoint(out / "final.json", trainer.nets, trainer.gp_data, trainer.hp,
                    {"step": trainer.step, "seed": cfg.seed})
    summary = run_summary(cfg, records, wall)
    (out / "summary.json").write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n")
    _emit(summary)
    return EXIT_OK


def cmd_eval(args) -> int:
    try:
        nets, _, _, meta = load_checkpoint(args.checkpoint)
    except CheckpointError as exc:
        raise UsageError(str(exc)) from None
    cfg = TrainConfig.from_json(args.config) if args.config else TrainConfig()
    ret, cats = evaluate(nets, args.episodes, np.random.default_rng(args.seed), build_env(cfg))
    _emit({"checkpoint": str(args.checkpoint), "episodes": args.episodes, "seed": args.seed,
           "mean_return": ret, "catastrophes": cats, "step": meta.get("step")})
    return EXIT_OK


def cmd_gp_selftest(args) -> int:
    results = run_selftest(trials=args.trials, seed=args.seed, inject_fault=args.inject_fault)
    for r in results:
        print(r.line(), file=sys.stderr)
    ok = all(r.passed for r in results)
    _emit({"passed": ok, "checks": [{"name": r.name, "value": r.value, "threshold": r.threshold,
                                     "passed": r.passed} for r in results]})
    return EXIT_OK if ok else EXIT_FAILURE


# scripted-controller settings for the two demonstration qualities
_QUALITY = {"high": dict(gain=1.0, noise=0.0), "low": dict(gain=0.6, noise=0.5)}


def cmd_record(args) -> int:
    out = Path(args.out)
    if not out.parent.is_dir():
        raise UsageError(f"cannot write {out}: parent directory does not exist")
    cfg = TrainConfig.from_json(args.config) if args.config else TrainConfig()
    env = build_env(cfg)
    if args.policy:
        try:
            nets, _, _, _ = load_checkpoint(args.policy)
        except CheckpointError as exc:
            raise UsageError(str(exc)) from None
        policy = lambda s: ag.policy(nets, s)
        noise = 0.0
    else:
        from .envs import swing_up_controller
        q = _QUALITY[args.quality]
        policy = lambda s: np.array([swing_up_controller(s, env.params, gain=q["gain"])])
        noise = q["noise"]
    try:
        total = record_trajectory(policy, args.steps, out, seed=args.seed, cfg=cfg,
                                  action_noise=noise)
    except OSError as exc:
        raise UsageError(f"cannot write {out}: {exc}") from None
    _emit({"path": str(out), "rows": args.steps, "return": total,
           "source": args.policy or f"scripted-{args.quality}"})
    return EXIT_OK


# parser -------------------------------------------------------------------------

def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sgddpg", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train an agent and write metrics, summary and checkpoints")
    p.add_argument("--config", help="JSON file of dotted config keys")
    p.add_argument("--out", default="runs/latest", help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--steps", type=int, help="total environment steps")
    p.add_argument("--gp-mode", choices=["online", "fixed"])
    p.add_argument("--beta", help="fixed:<value> or online:<delta>")
    p.add_argument("--vanilla", action="store_true", help="plain DDPG: no guard, GP or safety terms")
    p.add_argument("--init-trajectory", help="safe demonstration file for initialization")
    p.add_argument("--checkpoint-interval", type=int, default=0, metavar="STEPS",
                   help="write a checkpoint every STEPS steps (0 disables)")
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpointed policy")
    p.add_argument("checkpoint")
    p.add_argument("--episodes", type=_positive_int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", help="JSON config for the environment settings")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gp-selftest", help="numerical checks of the GP stack")
    p.add_argument("--trials", type=_positive_int, default=200,
                   help="functions sampled in the coverage check")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--inject-fault", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_gp_selftest)

    p = sub.add_parser("record", help="write a demonstration trajectory file")
    p.add_argument("--out", required=True)
    p.add_argument("--steps", type=_positive_int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--policy", help="checkpoint whose actor generates the rows")
    p.add_argument("--quality", choices=sorted(_QUALITY), default="high",
                   help="scripted controller variant when no --policy is given")
    p.add_argument("--config", help="JSON config for the environment settings")
    p.set_defaults(func=cmd_record)
    return parser


def _configure_logging(verbose: bool):
    # a handler bound to the current stderr, replaced on every call so repeated
    # in-process invocations do not stack handlers
    for h in list(log.handlers):
        log.removeHandler(h)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(message)s"))
    log.addHandler(handler)
    log.setLevel(logging.DEBUG if verbose else logging.INFO)
    log.propagate = False


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _configure_logging(args.verbose)
    try:
        return args.func(args)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # anything else is a runtime failure
        log.exception("unexpected failure: %s", exc)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
