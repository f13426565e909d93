"""Command-line entry point: ``msppo train | eval | verify``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, load_run_config
from .morphology import MorphologyError, load_morphology
from .numcore import CheckpointError, load_checkpoint, save_checkpoint
from .ppo import METRIC_COLUMNS, format_row, train
from .tasks import PairTask, QuadTask, symmetry_check
from .verify import LEVELS, run_suite

log = logging.getLogger("msppo")

EVAL_SEED_OFFSET = 10_000


def build_task(cfg: RunConfig):
    if cfg.env == "sympair":
        return PairTask(hidden=cfg.hidden, layers=cfg.layers, init_log_std=cfg.init_log_std)
    spec = load_morphology(cfg.morphology)
    return QuadTask(spec, cfg.H, cfg.gait, hidden=cfg.hidden, layers=cfg.layers, init_log_std=cfg.init_log_std)


def checkpoint_meta(cfg: RunConfig, iteration: int) -> str:
    return json.dumps(
        {"arch": cfg.arch, "env": cfg.env, "H": cfg.H, "hidden": cfg.hidden, "layers": cfg.layers, "iteration": iteration},
        sort_keys=True,
    )


def write_metrics(path: Path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRIC_COLUMNS)
        for row in rows:
            w.writerow(format_row(row))


def cmd_train(config_path) -> int:
    cfg = load_run_config(config_path)
    task = build_task(cfg)
    agent = task.build_agent(cfg.arch)
    out = cfg.output_dir()
    ckpt_dir = out / "checkpoints"
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    (out / "eval").mkdir(exist_ok=True)
    (out / "config.ini").write_text(cfg.to_ini())

    tc = cfg.trainer

    def save(it, params):
        save_checkpoint(ckpt_dir / f"iter_{it:05d}.ckpt", params, checkpoint_meta(cfg, it))

    def evaluator(params):
        return task.train_metrics(agent, params, tc.eval_episodes, tc.seed + EVAL_SEED_OFFSET)

    result = train(
        tc,
        task.make_env,
        agent,
        evaluator=evaluator,
        checkpoint_fn=save,
        check_fn=symmetry_check(task, agent, tc.seed),
    )
    save_checkpoint(ckpt_dir / "final.ckpt", result.params, checkpoint_meta(cfg, tc.iterations))
    write_metrics(out / "metrics.csv", result.rows)
    print(f"wrote {out / 'metrics.csv'} and {ckpt_dir / 'final.ckpt'}")
    return 0


def load_agent_params(task, cfg: RunConfig, ckpt_path):
    params, meta = load_checkpoint(ckpt_path)
    try:
        info = json.loads(meta) if meta else {}
    except json.JSONDecodeError:
        info = {}
    if info.get("arch", cfg.arch) != cfg.arch:
        raise CheckpointError(f"arch mismatch: checkpoint holds {info['arch']!r}, config asks for {cfg.arch!r}")
    agent = task.build_agent(cfg.arch)
    expected = agent.init(np.random.default_rng(0))
    if list(expected.keys()) != list(params.keys()):
        raise CheckpointError(f"arch mismatch: checkpoint parameters do not match a {cfg.arch} network")
    for name, value in expected.items():
        if value.shape != params[name].shape:
            raise CheckpointError(f"arch mismatch: {name} has shape {params[name].shape}, expected {value.shape}")
    return agent, params


def cmd_eval(checkpoint, config_path, mirrored: bool = False, episodes: int = 100) -> int:
    if episodes < 1:
        raise ConfigError("--episodes must be a positive integer")
    cfg = load_run_config(config_path)
    task = build_task(cfg)
    agent, params = load_agent_params(task, cfg, checkpoint)
    seed = cfg.seed + EVAL_SEED_OFFSET
    out = cfg.output_dir() / "eval"
    out.mkdir(parents=True, exist_ok=True)
    tag = "mirrored" if mirrored else "straight"
    if cfg.env == "sympair":
        ret = task.evaluate(agent, params, episodes, seed, mirrored)
        text = f"episodes: {episodes}\nReturn{'-O' if mirrored else ''}: {ret.mean():.4f} ± {ret.std():.4f}"
    else:
        report = task.evaluate(agent, params, episodes, seed, mirrored, record_episode=True)
        text = report.format()
        (out / f"episode_{tag}.csv").write_text(report.episode_log)
    (out / f"report_{tag}.txt").write_text(text + "\n")
    print(text)
    return 0


def cmd_verify(level: str = "fast") -> int:
    results = run_suite(level)
    for r in results:
        print(r.line())
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed ({level}, {LEVELS[level]} trials each)")
    return 1 if failed else 0


def _positive_int(text: str) -> int:
    try:
        n = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if n < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return n


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="msppo", description="Morphology-symmetric PPO on toy locomotion tasks.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log every training iteration")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("train", help="train a policy from a run config")
    p.add_argument("config")
    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("config")
    p.add_argument("--mirrored", action="store_true", help="evaluate under mirrored commands")
    p.add_argument("--episodes", type=_positive_int, default=100)
    p = sub.add_parser("verify", help="run the symmetry property suite")
    p.add_argument("--level", choices=sorted(LEVELS), default="fast")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.command == "train":
            return cmd_train(args.config)
        if args.command == "eval":
            return cmd_eval(args.checkpoint, args.config, args.mirrored, args.episodes)
        return cmd_verify(args.level)
    except (ConfigError, MorphologyError, CheckpointError, OSError) as exc:
        print(f"msppo: error: {exc}", file=sys.stderr)
        return 2
