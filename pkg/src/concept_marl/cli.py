"""Command-line interface: train / eval / serve / replay / ablate / probe."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint
from .config import DEFAULT_SHIFT, RunConfig, load_config


def _run_config(args, meta=None) -> RunConfig:
    if getattr(args, "config", None):
        return load_config(args.config)
    if meta is not None and meta.get("run_config"):
        return RunConfig.from_json(meta["run_config"])
    return RunConfig()


def _shift_from_arg(arg):
    if arg is None:
        return None
    if arg == "default":
        return DEFAULT_SHIFT
    return load_config(arg).shift


def cmd_train(args) -> int:
    from .trainer import train

    run_config = _run_config(args)
    summary = train(
        run_config,
        seed=args.seed,
        out_dir=args.out,
        resume=args.resume,
        log=lambda m: print(m, file=sys.stderr),
    )
    print(json.dumps({k: v for k, v in summary.items() if k != "history"}, indent=2))
    return 0


def cmd_eval(args) -> int:
    from .eval_harness import evaluate, episode_frames
    from .framelog import write_frames

    policy, _, meta = load_checkpoint(args.checkpoint)
    run_config = _run_config(args, meta)
    subset = None
    if args.intervene:
        if args.intervene == "all":
            subset = set(policy.config.schema.names)
        else:
            subset = set(args.intervene.split(","))
    shift = _shift_from_arg(args.shift)
    report = evaluate(
        policy,
        run_config,
        n_episodes=args.episodes,
        intervention_subset=subset,
        shift=shift,
        seeds=[int(s) for s in args.seeds.split(",")],
    )
    payload = report.to_json()
    if args.report:
        Path(args.report).write_text(json.dumps(payload, indent=2))
    print(json.dumps(payload, indent=2))
    if args.log:
        def frames():
            for k in range(args.log_episodes):
                seed = np.random.SeedSequence([int(args.seeds.split(",")[0]), k])
                yield from episode_frames(policy, run_config, seed, episode_id=k)

        import dataclasses

        schema = policy.config.schema
        header = {
            "v": 1,
            "schema": schema.to_json() if schema is not None else None,
            "env": dataclasses.asdict(run_config.env),
        }
        count = write_frames(args.log, frames(), header=header)
        print(f"wrote {count} records to {args.log}", file=sys.stderr)
    return 0


def cmd_serve(args) -> int:
    from .serve import LiveServer

    policy, _, meta = load_checkpoint(args.checkpoint)
    run_config = _run_config(args, meta)
    server = LiveServer(
        policy, run_config, bind=args.bind, seed=args.seed, rate=args.rate
    )
    print(f"serving on {server.host}:{server.port}", file=sys.stderr)
    server.serve_forever()
    return 0


def cmd_replay(args) -> int:
    from .serve import replay

    count = replay(args.log, bind=args.bind, speed=args.speed)
    print(f"replayed {count} frames", file=sys.stderr)
    return 0


def cmd_ablate(args) -> int:
    from .eval_harness import concept_ablation_run

    spec = json.loads(Path(args.spec).read_text())
    run_config = _run_config(args)
    if "trainer" in spec:
        merged = run_config.to_json()
        merged["trainer"].update(spec["trainer"])
        run_config = RunConfig.from_json(merged)
    rows = concept_ablation_run(
        run_config,
        [set(s) for s in spec["subsets"]],
        seed=spec.get("seed", 0),
        eval_episodes=spec.get("eval_episodes", 100),
        out_dir=args.out,
    )
    payload = {"version": 1, "rows": rows}
    if args.report:
        Path(args.report).write_text(json.dumps(payload, indent=2))
    print(json.dumps(payload, indent=2))
    return 0


def cmd_probe(args) -> int:
    from .eval_harness import behavioral_probe

    policy, _, meta = load_checkpoint(args.checkpoint)
    run_config = _run_config(args, meta)
    result = behavioral_probe(
        policy,
        run_config,
        probe=args.kind,
        n_episodes=args.episodes,
        seeds=[int(s) for s in args.seeds.split(",")],
        probe_arg=args.arg,
    )
    if args.report:
        Path(args.report).write_text(json.dumps(result, indent=2))
    print(json.dumps(result, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="concept-marl",
        description="Concept-bottleneck policies for a multi-agent tag game",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a policy")
    p.add_argument("--config", help="INI run config")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--resume", help="checkpoint to resume from")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--config", help="override the checkpoint's run config")
    p.add_argument("--episodes", type=int, default=100)
    p.add_argument("--intervene", help="'all' or comma-separated concept names")
    p.add_argument("--shift", help="'default' or a config file with a [shift] section")
    p.add_argument("--seeds", default="0", help="comma-separated evaluation seeds")
    p.add_argument("--report", help="write the report JSON here")
    p.add_argument("--log", help="write evaluation frame logs (NDJSON) here")
    p.add_argument("--log-episodes", type=int, default=1)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("serve", help="stream live episodes over TCP")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--config")
    p.add_argument("--bind", default="127.0.0.1:7787")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rate", type=float, default=10.0, help="steps per second")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("replay", help="re-emit a recorded frame log")
    p.add_argument("--log", required=True)
    p.add_argument("--bind", help="serve to a socket instead of stdout")
    p.add_argument("--speed", type=float, default=1.0)
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("ablate", help="train and evaluate concept-subset models")
    p.add_argument("--spec", required=True, help="JSON: {subsets: [[...]], ...}")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--report")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("probe", help="behavioral probes on a checkpoint")
    p.add_argument("--kind", required=True,
                   choices=["force_strategy", "force_range", "share_target"])
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--config")
    p.add_argument("--episodes", type=int, default=1000)
    p.add_argument("--seeds", default="0")
    p.add_argument("--arg", help="probe argument (e.g. shared target index)")
    p.add_argument("--report")
    p.set_defaults(func=cmd_probe)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
