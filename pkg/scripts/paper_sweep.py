"""Full sweep over the paper's grid: 4 algorithms x rho {0, 0.6, 1} x pi {0.7, 0.8, 0.9, 0.95}.

    python3 scripts/paper_sweep.py --out runs/sweep [--config configs/stable.json] [--episodes 2000]

Roughly an hour on one core (36 trained cells). Writes results.csv,
results_long.csv and manifest.json, then prints the stopping-time table.
"""
import argparse
import logging
from datetime import datetime, timezone
from pathlib import Path

from anomsense.experiment import PAPER_RHOS, PAPER_THRESHOLDS, SweepSpec, emit_results, run_sweep
from anomsense.model import load_config

ROOT = Path(__file__).resolve().parent.parent


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", required=True)
    ap.add_argument("--config", default=str(ROOT / "configs" / "stable.json"))
    ap.add_argument("--episodes", type=int, default=2000, help="evaluation episodes per cell")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--algorithms", default="proposed,joint,naive,random")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    cfg = load_config(args.config)
    spec = SweepSpec(PAPER_RHOS, PAPER_THRESHOLDS, tuple(args.algorithms.split(",")), args.episodes, args.seed)
    started = datetime.now(timezone.utc).isoformat()
    failures = []
    results = run_sweep(spec.validate(), cfg, failures, on_cell=lambda c: logging.info("%s", c))
    paths = emit_results(results, args.out, cfg, spec, started, failures)

    print(f"{'algorithm':>9} {'rho':>4} " + " ".join(f"pi={t:<5}" for t in PAPER_THRESHOLDS))
    for alg in spec.algorithms:
        for rho in PAPER_RHOS:
            row = {c.pi_upper: c for c in results if c.algorithm == alg and c.rho == rho}
            print(f"{alg:>9} {rho:>4} " + " ".join(
                f"{row[t].mean_stopping_time:5.1f}/{row[t].accuracy:.2f}" if t in row else "   failed"
                for t in PAPER_THRESHOLDS))
    print("K/accuracy per cell; files:", ", ".join(str(p) for p in paths.values()))


if __name__ == "__main__":
    main()
