"""Reusable experiment harnesses: multi-seed model comparisons and a
degenerate reward-identification smoke test for the PPO machinery.

These back the scripts in scripts/ and the acceptance suite.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import nn
from .checkpoint import load_checkpoint
from .config import RunConfig, TrainerConfig
from .losses import LossConfig
from .policy import ConceptPolicy, PolicyConfig, act
from .trainer import RolloutBuffer, Stream, train, train_phase


def _train_and_eval(args):
    """Worker: one full training run plus a held-out evaluation."""
    run_config_json, kind, seed, out_dir, eval_episodes, eval_seed = args
    from .eval_harness import evaluate

    rc = RunConfig.from_json(run_config_json)
    rc.policy.kind = kind
    summary = train(rc, seed=seed, out_dir=out_dir, log=lambda *_: None)
    policy, _, _ = load_checkpoint(summary["best_checkpoint"])
    report = evaluate(policy, rc, n_episodes=eval_episodes, seeds=[eval_seed])
    return {
        "kind": kind,
        "seed": seed,
        "win_rate": report.win_rate,
        "concept_errors": {k: list(v) for k, v in report.concept_errors.items()},
        "best_checkpoint": summary["best_checkpoint"],
        "last_checkpoint": summary["last_checkpoint"],
        "metrics_path": summary["metrics_path"],
    }


def model_comparison(
    run_config: RunConfig,
    kinds: list[str],
    seeds: list[int],
    out_dir: str | Path,
    eval_episodes: int = 100,
    eval_seed: int = 10_000,
    workers: int | None = None,
) -> dict[str, list[dict]]:
    """Train every (kind, seed) pair and evaluate each trained model.

    Runs fan out across processes; each run is internally deterministic,
    so the results do not depend on the degree of parallelism.
    """
    out_dir = Path(out_dir)
    jobs = []
    rc_json = run_config.to_json()
    for kind in kinds:
        for seed in seeds:
            jobs.append(
                (rc_json, kind, seed, str(out_dir / f"{kind}_s{seed}"), eval_episodes, eval_seed)
            )
    if workers is None:
        workers = min(len(jobs), os.cpu_count() or 1)
    results: dict[str, list[dict]] = {k: [] for k in kinds}
    if workers <= 1:
        outputs = [_train_and_eval(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outputs = list(pool.map(_train_and_eval, jobs))
    for row in outputs:
        results[row["kind"]].append(row)
    return results


# ---------------------------------------------------------------------------
# degenerate reward-identification arena ("which action pays?")


def bandit_smoke(
    total_steps: int = 50_000,
    seed: int = 0,
    target_action: int = 2,
    n_actions: int = 6,
    probe_states: int = 200,
) -> dict:
    """One agent, constant dynamics, reward 1 for one fixed action and 0
    otherwise. Exercises the full PPO path (rollout streams, GAE,
    sequence minibatches, whitening, Adam) on a problem with a known
    optimum; returns the greedy-selection rate of the rewarded action."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 0xBA2D1])))
    obs_dim = 4
    streams_per_phase = 25
    steps_per_stream = 40
    cfg = PolicyConfig(obs_dim=obs_dim, n_actions=n_actions, schema=None, k=8, hidden=16)
    policy = ConceptPolicy(cfg, seed=seed)
    adam = nn.AdamState.init(policy.params)
    rc = RunConfig()
    rc.trainer = TrainerConfig(
        n_envs=streams_per_phase,
        batch_size=streams_per_phase * steps_per_stream,
        minibatch_size=200,
        seq_len=20,
        epochs=4,
        total_steps=total_steps,
        lr_start=1e-3,
        lr_end=2e-4,
        entropy_start=0.05,
        entropy_end=0.005,
        schedule_horizon=total_steps,
    )
    rc.loss = LossConfig(gamma=0.9, lam=0.95)
    steps_done = 0
    while steps_done < total_steps:
        buffer = RolloutBuffer()
        obs = rng.normal(0.0, 0.5, size=(streams_per_phase, obs_dim))
        h, c = policy.initial_hidden(streams_per_phase)
        streams = [Stream() for _ in range(streams_per_phase)]
        for t in range(steps_per_stream):
            if t % rc.trainer.seq_len == 0:
                for i, s in enumerate(streams):
                    s.snapshots[t] = (h[i].copy(), c[i].copy())
            out = policy.step(obs, (h, c))
            actions, logps = act(out.action_logits, rng, mode="sample")
            rewards = (actions == target_action).astype(np.float64)
            for i, s in enumerate(streams):
                s.obs.append(obs[i].copy())
                s.actions.append(int(actions[i]))
                s.logps.append(float(logps[i]))
                s.values.append(float(out.value[i]))
                s.rewards.append(float(rewards[i]))
            h, c = out.hidden
        for s in streams:
            s.done = True
            buffer.streams.append(s)
        buffer.episodes += streams_per_phase
        lr = rc.trainer.lr_start + (rc.trainer.lr_end - rc.trainer.lr_start) * min(
            steps_done / rc.trainer.schedule_horizon, 1.0
        )
        ecoeff = rc.trainer.entropy_start + (
            rc.trainer.entropy_end - rc.trainer.entropy_start
        ) * min(steps_done / rc.trainer.schedule_horizon, 1.0)
        shuffle_rng = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence([seed, steps_done]))
        )
        train_phase(policy, adam, buffer, rc, lr, ecoeff, shuffle_rng)
        steps_done += buffer.size

    probe_obs = rng.normal(0.0, 0.5, size=(probe_states, obs_dim))
    out = policy.step(probe_obs, policy.initial_hidden(probe_states))
    greedy, _ = act(out.action_logits, None, mode="greedy")
    probs = np.exp(nn.log_softmax_rows(out.action_logits))[:, target_action]
    return {
        "steps": steps_done,
        "greedy_optimal_rate": float(np.mean(greedy == target_action)),
        "mean_optimal_prob": float(probs.mean()),
        "target_action": target_action,
    }
