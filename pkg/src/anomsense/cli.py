"""Command-line entry point: ``anomsense <subcommand> [flags]``.

Exit codes: 0 success, 1 invalid input (config, flags, files), 2 runtime failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import agent as ag
from .env import TrainingDataset, analytic_dependency_model, estimate_dependency_model, estimate_prior_beliefs
from .env import generate_training_data, stream_rng
from .experiment import PAPER_RHOS, PAPER_THRESHOLDS, SweepSpec, emit_results, measure_decision_latency, run_sweep
from .model import ConfigError, ExperimentConfig, load_config, validate_config
from .nn import load_checkpoint, save_checkpoint

log = logging.getLogger("anomsense")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _floats(text):
    return tuple(float(v) for v in text.split(","))


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg = cfg.with_(seed=args.seed)
    return validate_config(cfg)


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _dataset(args, cfg):
    if getattr(args, "data", None):
        data = TrainingDataset.load(args.data)
        if data.n != cfg.n_processes:
            raise ConfigError([f"data: {data.n} columns but n_processes is {cfg.n_processes}"])
        return data
    return generate_training_data(cfg.prior, cfg.training_samples, stream_rng(cfg.seed, "data"))


def cmd_gen_data(args):
    cfg = _config(args)
    data = generate_training_data(cfg.prior, args.samples or cfg.training_samples, stream_rng(cfg.seed, "data"))
    path = _out(args) / "data.txt"
    data.save(path)
    print(json.dumps({"path": str(path), "samples": data.sample_count, "n_processes": data.n}))


def cmd_inspect(args):
    cfg = _config(args)
    doc = {"config": cfg.to_dict(), "config_hash": cfg.config_hash()}
    if args.data:
        data = _dataset(args, cfg)
        doc["data"] = {"samples": data.sample_count, "prior_beliefs": estimate_prior_beliefs(data).tolist(),
                       "dependency": estimate_dependency_model(data).table.tolist()}
    else:
        doc["analytic_dependency"] = analytic_dependency_model(cfg.prior).table.tolist()
    if args.checkpoint:
        _, _, ck = load_checkpoint(args.checkpoint)
        doc["checkpoint"] = {"config_hash": ck["config_hash"], **{k: v for k, v in ck.get("extra", {}).items()
                                                                  if k != "rule"}}
    print(json.dumps(doc, indent=2))


def cmd_train(args):
    cfg = _config(args)
    if args.episodes is not None:
        cfg = validate_config(cfg.with_(training_episodes=args.episodes))
    if args.algorithm == "random":
        raise ConfigError(["algorithm: the random policy has nothing to train"])
    data = _dataset(args, cfg)
    out = _out(args)
    res = ag.train(cfg, data, args.algorithm)
    with open(out / "learning_curve.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("episode", "reward_sum", "stopping_time", "correct"))
        w.writerows((e, repr(r), k, int(c)) for e, r, k, c in res.curve)
    extra = {"algorithm": args.algorithm, "episodes": len(res.curve), "config": cfg.to_dict(),
             "rule": ag.rule_to_dict(res.rule)}
    save_checkpoint(out / "checkpoint.json", {"actor": res.ac.actor, "critic": res.ac.critic},
                    {"actor": res.ac.actor_opt, "critic": res.ac.critic_opt}, cfg.config_hash(), extra)
    print(json.dumps({"checkpoint": str(out / "checkpoint.json"), "curve": str(out / "learning_curve.csv")}))


def cmd_eval(args):
    if args.checkpoint:
        nets, _, ck = load_checkpoint(args.checkpoint)
        cfg = ExperimentConfig.from_dict(ck["extra"]["config"])
        if args.config:
            cfg = load_config(args.config)
        if args.seed is not None:
            cfg = cfg.with_(seed=args.seed)
        cfg = validate_config(cfg)
        rule = ag.rule_from_dict(ck["extra"]["rule"], cfg.channel)
        policy = ag.ActorPolicy(nets["actor"], args.mode)
        algorithm = ck["extra"]["algorithm"]
    elif args.algorithm == "random":
        cfg = _config(args)
        rule = ag.build_rule("random", cfg, _dataset(args, cfg))
        policy, algorithm = ag.RandomPolicy(rule.n), "random"
    else:
        raise ConfigError(["checkpoint: required unless --algorithm random"])
    traces = ag.evaluate(policy, rule, cfg, args.episodes)
    out = _out(args)
    with open(out / "eval_traces.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("episode", "stopping_time", "truncated", "correct", "reward_sum", "estimate", "ground_truth"))
        for i, t in enumerate(traces, 1):
            w.writerow((i, t.stopping_time, int(t.truncated), int(t.correct and not t.truncated), repr(t.reward_sum),
                        "".join(map(str, t.estimate.estimate)), "".join(map(str, t.ground_truth))))
    k = np.array([t.stopping_time for t in traces])
    acc = np.mean([t.correct and not t.truncated for t in traces])
    print(json.dumps({"algorithm": algorithm, "episodes": len(traces), "accuracy": float(acc),
                      "mean_stopping_time": float(k.mean()), "traces": str(out / "eval_traces.csv")}))


def cmd_sweep(args):
    started = datetime.now(timezone.utc).isoformat()
    cfg = _config(args)
    spec = SweepSpec(rho_grid=args.rhos, threshold_grid=args.thresholds,
                     algorithms=tuple(args.algorithm.split(",")) if args.algorithm else ag.ALGORITHMS,
                     episodes_per_cell=cfg.eval_episodes if args.episodes is None else args.episodes,
                     master_seed=cfg.seed, latency_decisions=args.latency).validate()
    failures = []
    results = run_sweep(spec, cfg, failures, on_cell=lambda c: log.info("%s", c))
    if not results:
        raise RuntimeError(f"every cell failed: {failures}")
    paths = emit_results(results, args.out, cfg, spec, started, failures)
    print(json.dumps({k: str(v) for k, v in paths.items()} | {"cells": len(results), "failures": len(failures)}))


def cmd_latency(args):
    cfg = _config(args)
    if args.n_processes:
        cfg = validate_config(cfg.with_(n_processes=args.n_processes))
    n = 10_000 if args.episodes is None else args.episodes
    algs = args.algorithm.split(",") if args.algorithm else ["proposed", "joint", "naive"]
    rows = []
    for alg in algs:
        st = measure_decision_latency(alg, cfg, n, seed=cfg.seed)
        rows.append({"algorithm": alg, "n_processes": cfg.n_processes, "mean_s": st.mean, "median_s": st.median,
                     "n_decisions": st.n_decisions})
    if args.out:
        (_out(args) / "latency.json").write_text(json.dumps(rows, indent=2) + "\n")
    print(json.dumps(rows, indent=2))


def build_parser():
    p = _Parser(prog="anomsense", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_required=True):
        sp.add_argument("--config", help="experiment config JSON (defaults to the built-in setup)")
        sp.add_argument("--seed", type=int, help="master seed, overrides the config")
        sp.add_argument("--out", required=out_required, help="output directory")
        return sp

    g = common(sub.add_parser("gen-data", help="sample a training dataset of process state vectors"))
    g.add_argument("--samples", type=int)
    i = common(sub.add_parser("inspect", help="validate a config and show the dependency model"), False)
    i.add_argument("--data")
    i.add_argument("--checkpoint")
    t = common(sub.add_parser("train", help="train an actor-critic policy"))
    t.add_argument("--algorithm", default="proposed", choices=("proposed", "joint", "naive"))
    t.add_argument("--episodes", type=int)
    t.add_argument("--data")
    e = common(sub.add_parser("eval", help="evaluate a checkpoint (or the random policy)"))
    e.add_argument("--checkpoint")
    e.add_argument("--algorithm", choices=("random",))
    e.add_argument("--episodes", type=int)
    e.add_argument("--mode", default="sample", choices=("sample", "greedy"))
    e.add_argument("--data")
    s = common(sub.add_parser("sweep", help="train and evaluate every (algorithm, rho, threshold) cell"))
    s.add_argument("--algorithm", help="comma-separated subset of " + ",".join(ag.ALGORITHMS))
    s.add_argument("--episodes", type=int, help="evaluation episodes per cell")
    s.add_argument("--rhos", type=_floats, default=PAPER_RHOS)
    s.add_argument("--thresholds", type=_floats, default=PAPER_THRESHOLDS)
    s.add_argument("--latency", type=int, default=0, help="decisions to time per cell (0 = skip)")
    lt = common(sub.add_parser("latency", help="time per-decision cost of each algorithm"), False)
    lt.add_argument("--algorithm", help="comma-separated algorithms")
    lt.add_argument("--episodes", type=int, help="number of timed decisions")
    lt.add_argument("--n-processes", type=int)
    return p


COMMANDS = {"gen-data": cmd_gen_data, "inspect": cmd_inspect, "train": cmd_train, "eval": cmd_eval,
            "sweep": cmd_sweep, "latency": cmd_latency}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args) or 0
    except (ValueError, UsageError, FileNotFoundError, TypeError, KeyError) as exc:
        # ConfigError and JSONDecodeError are ValueErrors
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        log.exception("run failed")
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
