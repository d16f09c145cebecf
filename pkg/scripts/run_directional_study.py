#!/usr/bin/env python3
"""Desk-scale concept-benefit study: hard concept model vs. concept-free
baseline, several seeds each, with the learning-rate and entropy schedules
compressed to the run length.

Full-scale training is out of reach on a desk machine; the claim checked
here is directional: the hard model's mean win rate should be at least the
baseline's, and its range-bit accuracy error should be small.
"""

import argparse
import json
from pathlib import Path

import numpy as np

from concept_marl.config import RunConfig, TrainerConfig
from concept_marl.studies import model_comparison


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--steps", type=int, default=500_000)
    parser.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    parser.add_argument("--out", default="runs/directional")
    parser.add_argument("--eval-episodes", type=int, default=100)
    parser.add_argument("--workers", type=int, default=None)
    args = parser.parse_args()

    rc = RunConfig()
    rc.trainer = TrainerConfig(
        total_steps=args.steps,
        schedule_horizon=args.steps,
        eval_every=10,
        eval_episodes=32,
        checkpoint_every=10,
    )
    results = model_comparison(
        rc,
        kinds=["hard", "base"],
        seeds=args.seeds,
        out_dir=args.out,
        eval_episodes=args.eval_episodes,
        workers=args.workers,
    )
    Path(args.out).mkdir(parents=True, exist_ok=True)
    (Path(args.out) / "results.json").write_text(json.dumps(results, indent=2))

    hard_wr = [r["win_rate"] for r in results["hard"]]
    base_wr = [r["win_rate"] for r in results["base"]]
    range_err = [r["concept_errors"]["range"][0] for r in results["hard"]]
    print(json.dumps(results, indent=2))
    print(f"hard mean WR {np.mean(hard_wr):.3f} (seeds: {hard_wr})")
    print(f"base mean WR {np.mean(base_wr):.3f} (seeds: {base_wr})")
    print(f"hard range accuracy error: {range_err}")
    ok = np.mean(hard_wr) >= np.mean(base_wr) and all(e < 0.10 for e in range_err)
    print("PASS" if ok else "FAIL")
    return 0 if ok else 1


if __name__ == "__main__":
    raise SystemExit(main())
