"""Compare TD targets at the stopping step: residual uncertainty vs zero.

    python3 scripts/terminal_value_ablation.py [--rho 1.0] [--seeds 1,2] [--episodes 5000]

With a zero terminal value, stopping forfeits all reward still to be earned, so
the learned policy tends to postpone the stop; bootstrapping to the residual
entropy keeps the undiscounted return fixed and makes speed pay.
"""
import argparse
from pathlib import Path

import numpy as np

from anomsense.agent import ActorPolicy, evaluate, train
from anomsense.env import generate_training_data, stream_rng
from anomsense.model import load_config

ROOT = Path(__file__).resolve().parent.parent


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=str(ROOT / "configs" / "stable.json"))
    ap.add_argument("--rho", type=float, default=1.0)
    ap.add_argument("--seeds", default="1,2")
    ap.add_argument("--episodes", type=int, default=5000)
    ap.add_argument("--eval", type=int, default=1000)
    args = ap.parse_args()

    base = load_config(args.config).with_(correlation=args.rho)
    data = generate_training_data(base.prior, base.training_samples, stream_rng(0, "data"))
    for mode in ("residual", "zero"):
        cfg = base.with_(terminal_value=mode)
        for seed in (int(s) for s in args.seeds.split(",")):
            res = train(cfg, data, "proposed", seed=seed, episodes=args.episodes)
            traces = evaluate(ActorPolicy(res.ac.actor), res.rule, cfg, args.eval, seed=99)
            k = np.array([t.stopping_time for t in traces])
            trunc = np.mean([t.truncated for t in traces])
            print(f"terminal={mode:>8} seed={seed}  K={k.mean():6.2f} +- {k.std(ddof=1) / np.sqrt(k.size):.2f}"
                  f"  truncated={trunc:.3f}", flush=True)


if __name__ == "__main__":
    main()
