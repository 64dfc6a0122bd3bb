"""Sweeps over (algorithm, rho, threshold) cells, latency timing and result files."""
from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, fields
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .agent import ALGORITHMS, ActorCritic, ActorPolicy, RandomPolicy, build_rule, evaluate, make_episode, train
from .env import generate_training_data, stream_rng
from .belief import should_stop
from .model import ConfigError, ExperimentConfig, validate_config

log = logging.getLogger(__name__)

CSV_COLUMNS = ("algorithm", "rho", "pi_upper", "accuracy", "mean_stopping_time", "stderr", "truncation_rate",
               "latency_s")

PAPER_RHOS = (0.0, 0.6, 1.0)
PAPER_THRESHOLDS = (0.7, 0.8, 0.9, 0.95)


@dataclass(frozen=True)
class SweepSpec:
    rho_grid: tuple = PAPER_RHOS
    threshold_grid: tuple = PAPER_THRESHOLDS
    algorithms: tuple = ALGORITHMS
    episodes_per_cell: int = 2000
    master_seed: int = 0
    # wall-clock timing makes rows machine dependent, so it is opt-in
    latency_decisions: int = 0

    def __post_init__(self):
        for name in ("rho_grid", "threshold_grid", "algorithms"):
            object.__setattr__(self, name, tuple(getattr(self, name)))

    def violations(self):
        out = []
        if not self.rho_grid:
            out.append("rho_grid: must be non-empty")
        out += [f"rho_grid: {r} outside [0, 1]" for r in self.rho_grid if not 0.0 <= r <= 1.0]
        if not self.threshold_grid:
            out.append("threshold_grid: must be non-empty")
        out += [f"threshold_grid: {t} outside (0.5, 1)" for t in self.threshold_grid if not 0.5 < t < 1.0]
        if not self.algorithms:
            out.append("algorithms: must be non-empty")
        out += [f"algorithms: unknown {a!r}" for a in self.algorithms if a not in ALGORITHMS]
        if self.episodes_per_cell < 1:
            out.append("episodes_per_cell: must be >= 1")
        if self.master_seed < 0:
            out.append("master_seed: must be non-negative")
        if self.latency_decisions < 0:
            out.append("latency_decisions: must be >= 0")
        return out

    def validate(self):
        if v := self.violations():
            raise ConfigError(v)
        return self

    def cells(self):
        return [(a, r, t) for a in self.algorithms for r in self.rho_grid for t in self.threshold_grid]


@dataclass(frozen=True)
class CellResult:
    algorithm: str
    rho: float
    pi_upper: float
    accuracy: float
    mean_stopping_time: float
    stderr: float
    truncation_rate: float
    latency_s: float = math.nan

    def row(self):
        return [self.algorithm] + [repr(float(getattr(self, c))) for c in CSV_COLUMNS[1:]]


@dataclass(frozen=True)
class LatencyStats:
    mean: float
    median: float
    n_decisions: int


def cell_seeds(master_seed: int):
    """(data rng, train seed, eval seed) shared by every cell of a sweep.

    Common random numbers: cells differ only in algorithm, rho and threshold, not
    in the uniforms behind data, training episodes or evaluation truths, so
    differences between cells are not swamped by seed-to-seed noise. Each cell
    remains a function of (config, master_seed) alone.
    """
    data = stream_rng(master_seed, "data")
    train_seed = int(stream_rng(master_seed, "train").integers(2**62))
    eval_seed = int(stream_rng(master_seed, "eval").integers(2**62))
    return data, train_seed, eval_seed


def summarize(algorithm, rho, pi_upper, traces, latency=math.nan) -> CellResult:
    k = np.array([t.stopping_time for t in traces], dtype=float)
    ok = np.array([t.correct and not t.truncated for t in traces])
    trunc = np.array([t.truncated for t in traces])
    se = float(k.std(ddof=1) / np.sqrt(k.size)) if k.size > 1 else 0.0
    return CellResult(algorithm, float(rho), float(pi_upper), float(ok.mean()), float(k.mean()), se,
                      float(trunc.mean()), float(latency))


def run_cell(config: ExperimentConfig, algorithm: str, rho: float, pi_upper: float, episodes: int,
             master_seed: int, latency_decisions: int = 0, return_policy=False):
    """Train (unless random) and evaluate one cell; depends only on its arguments."""
    cfg = validate_config(config.with_(correlation=rho, confidence_threshold=pi_upper))
    data_rng, train_seed, eval_seed = cell_seeds(master_seed)
    dataset = generate_training_data(cfg.prior, cfg.training_samples, data_rng)
    if algorithm == "random":
        rule = build_rule("random", cfg, dataset)
        policy = RandomPolicy(rule.n)
    else:
        res = train(cfg, dataset, algorithm, seed=train_seed)
        rule, policy = res.rule, ActorPolicy(res.ac.actor)
    traces = evaluate(policy, rule, cfg, episodes, seed=eval_seed)
    latency = math.nan
    if latency_decisions:
        latency = measure_decision_latency(algorithm, cfg, latency_decisions, policy=policy, rule=rule).mean
    result = summarize(algorithm, rho, pi_upper, traces, latency)
    return (result, policy, rule, traces) if return_policy else result


def run_sweep(spec: SweepSpec, config: ExperimentConfig, failures=None, on_cell=None):
    """All cells of ``spec``; a failing cell is logged, listed in ``failures`` and skipped."""
    spec.validate()
    validate_config(config)
    out = []
    for alg, rho, pi in spec.cells():
        try:
            cell = run_cell(config, alg, rho, pi, spec.episodes_per_cell, spec.master_seed, spec.latency_decisions)
        except Exception as exc:  # noqa: BLE001 - a broken cell must not end the sweep
            log.exception("cell %s rho=%s pi=%s failed", alg, rho, pi)
            if failures is not None:
                failures.append({"algorithm": alg, "rho": rho, "pi_upper": pi, "error": repr(exc)})
            continue
        out.append(cell)
        if on_cell:
            on_cell(cell)
    return out


def measure_decision_latency(algorithm: str, config: ExperimentConfig, n_decisions: int, warmup: int = 200,
                             seed: int = 0, policy=None, rule=None) -> LatencyStats:
    """Wall-clock seconds per decision: action selection, observation and belief update.

    Without ``policy``/``rule`` a freshly initialized actor is timed; the cost of a
    forward pass does not depend on the weights. Episodes restart when they stop.
    """
    if n_decisions < 1:
        raise ValueError("n_decisions must be >= 1")
    if rule is None:
        data = generate_training_data(config.prior, min(config.training_samples, 20_000), stream_rng(seed, "lat-data"))
        rule = build_rule(algorithm, config, data)
    if policy is None:
        if algorithm == "random":
            policy = RandomPolicy(rule.n)
        else:
            policy = ActorPolicy(ActorCritic(rule.feature_size, rule.n, config.agent, stream_rng(seed, "lat-init")).actor)
    rng = stream_rng(seed, "lat")
    threshold = config.agent.confidence_threshold
    episode = make_episode(config, rng)
    state = rule.initial()
    times = np.empty(n_decisions)
    clock = time.perf_counter
    for i in range(-warmup, n_decisions):
        t0 = clock()
        a = policy.choose(rule.features(state), rng)
        y = episode.observe(a + 1).value
        state = rule.update(state, a, y)
        t1 = clock()
        if i >= 0:
            times[i] = t1 - t0
        if should_stop(rule.marginals(state), threshold) or episode.time_index >= config.agent.max_episode_length:
            episode = make_episode(config, rng)
            state = rule.initial()
    return LatencyStats(float(times.mean()), float(np.median(times)), n_decisions)


def emit_results(results, out_dir, config: ExperimentConfig = None, spec: SweepSpec = None, started=None,
                 failures=()):
    """Write results.csv, results_long.csv and manifest.json; returns their paths."""
    results = list(results)
    if not results:
        raise ValueError("no results to emit")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"csv": out / "results.csv", "long": out / "results_long.csv", "manifest": out / "manifest.json"}
    with open(paths["csv"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        w.writerows(r.row() for r in results)
    with open(paths["long"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("algorithm", "rho", "pi_upper", "metric", "value"))
        for r in results:
            for c in CSV_COLUMNS[3:]:
                w.writerow((r.algorithm, repr(r.rho), repr(r.pi_upper), c, repr(float(getattr(r, c)))))
    now = datetime.now(timezone.utc).isoformat()
    manifest = {
        "artifact_version": __version__,
        "config_hash": config.config_hash() if config else None,
        "config": config.to_dict() if config else None,
        "master_seed": spec.master_seed if spec else None,
        "spec": asdict(spec) if spec else None,
        "cells": len(results),
        "failures": list(failures),
        "started": started or now,
        "finished": now,
    }
    paths["manifest"].write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return paths


def read_results(path):
    """Parse results.csv back into CellResult objects (floats round-trip exactly)."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    names = [f.name for f in fields(CellResult)]
    return [CellResult(r["algorithm"], *(float(r[c]) for c in names[1:])) for r in rows]
