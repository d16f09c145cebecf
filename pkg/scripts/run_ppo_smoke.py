#!/usr/bin/env python3
"""Degenerate reward-identification smoke test for the PPO stack.

One agent, one rewarded action: the greedy policy must pick it with
probability > 0.95 within 50k transitions.
"""

import argparse
import json

from concept_marl.studies import bandit_smoke


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--steps", type=int, default=50_000)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    result = bandit_smoke(total_steps=args.steps, seed=args.seed)
    print(json.dumps(result, indent=2))
    ok = result["greedy_optimal_rate"] > 0.95
    print("PASS" if ok else "FAIL")
    return 0 if ok else 1


if __name__ == "__main__":
    raise SystemExit(main())
