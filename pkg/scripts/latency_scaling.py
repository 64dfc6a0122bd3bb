"""Per-decision latency of each belief tracker as the number of processes grows.

    python3 scripts/latency_scaling.py [--n 4,6,8,10,12] [--decisions 5000] [--out latency.csv]

The joint tracker's cost doubles with every added process; the pairwise
marginal tracker grows quadratically and the naive one linearly.
"""
import argparse
import csv
import sys

from anomsense.experiment import measure_decision_latency
from anomsense.model import ExperimentConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", default="4,6,8,10,12")
    ap.add_argument("--decisions", type=int, default=5000)
    ap.add_argument("--out")
    args = ap.parse_args()

    rows = []
    for n in (int(v) for v in args.n.split(",")):
        cfg = ExperimentConfig(n_processes=n, training_samples=20_000)
        for alg in ("proposed", "joint", "naive"):
            st = measure_decision_latency(alg, cfg, args.decisions, seed=n)
            rows.append((n, alg, st.median * 1e6, st.mean * 1e6))
            print(f"N={n:>2} {alg:>8}  median {st.median * 1e6:8.1f} us  mean {st.mean * 1e6:8.1f} us", flush=True)
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("n_processes", "algorithm", "median_us", "mean_us"))
            w.writerows(rows)
    return 0


if __name__ == "__main__":
    sys.exit(main())
