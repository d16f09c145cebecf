#!/usr/bin/env python3
"""Intervention effects on a trained checkpoint.

Measures win rate with and without full oracle intervention, both in the
plain simulator and under the sim-to-real shift proxy, plus the
range-forcing behavioral probe (tag frequency under range = 0 / 1).
"""

import argparse
import json

from concept_marl.checkpoint import load_checkpoint
from concept_marl.config import DEFAULT_SHIFT, RunConfig
from concept_marl.eval_harness import behavioral_probe, evaluate, fisher_exact_greater


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--checkpoint", required=True)
    parser.add_argument("--episodes", type=int, default=200)
    parser.add_argument("--probe-episodes", type=int, default=1000)
    parser.add_argument("--seed", type=int, default=5000)
    args = parser.parse_args()

    policy, _, meta = load_checkpoint(args.checkpoint)
    rc = RunConfig.from_json(meta["run_config"])
    subset = set(policy.config.schema.names)

    out = {}
    for label, shift in (("plain", None), ("shift", DEFAULT_SHIFT)):
        plain = evaluate(policy, rc, args.episodes, shift=shift, seeds=[args.seed])
        intervened = evaluate(
            policy, rc, args.episodes, intervention_subset=subset, shift=shift,
            seeds=[args.seed],
        )
        p = fisher_exact_greater(
            intervened.wins,
            intervened.episodes - intervened.wins,
            plain.wins,
            plain.episodes - plain.wins,
        )
        out[label] = {
            "win_rate": plain.win_rate,
            "intervened_win_rate": intervened.win_rate,
            "fisher_p_greater": p,
        }
    out["force_range"] = behavioral_probe(
        policy, rc, probe="force_range", n_episodes=args.probe_episodes,
        seeds=[args.seed + 1],
    )["conditions"]
    print(json.dumps(out, indent=2))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
