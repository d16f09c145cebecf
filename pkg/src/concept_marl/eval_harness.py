"""Evaluation, ablation and behavioral probes.

``episode_frames`` is the single rollout path shared by offline evaluation
and the live server, so frames produced by either for the same checkpoint
and seed are bit-identical. Concept errors are always measured on the
pre-intervention predictions as produced at each step (interventions still
shape behavior downstream, which is the effect being measured).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .concepts import ConceptSchema
from .config import RunConfig, ShiftConfig
from .env import Action, Outcome, UsageError, observation_size, snapshot_state
from .episodes import Episode
from .metrics import (
    concept_error_metrics,
    fisher_exact_greater,
    fisher_exact_two_sided,
    mean_and_standard_error,
    normal_ci95,
)
from .policy import (
    ConceptPolicy,
    Intervention,
    act,
    apply_oracle_intervention,
)
from .strategies import StrategyKind

FRAME_VERSION = 1


@dataclass
class EvalReport:
    """Aggregated evaluation results."""

    win_rate: float
    win_rate_std: float
    wins: int
    episodes: int
    concept_errors: dict[str, tuple[float, float]]  # name -> (mean, stderr)
    intervention_subset: list[str] | None = None
    shift: dict | None = None
    per_seed_win_rates: list[float] = field(default_factory=list)
    config_fingerprint: str | None = None

    def to_json(self) -> dict:
        return {
            "version": 1,
            "win_rate": self.win_rate,
            "win_rate_std": self.win_rate_std,
            "wins": self.wins,
            "episodes": self.episodes,
            "concept_errors": {k: list(v) for k, v in self.concept_errors.items()},
            "intervention_subset": self.intervention_subset,
            "shift": self.shift,
            "per_seed_win_rates": self.per_seed_win_rates,
            "config_fingerprint": self.config_fingerprint,
        }


def episode_frames(
    policy,
    run_config: RunConfig,
    seed,
    mode: str = "greedy",
    intervention_subset: set[str] | None = None,
    fixed_intervention: Intervention | None = None,
    manual_interventions: dict[int, Intervention] | None = None,
    shift: ShiftConfig | None = None,
    act_rng: np.random.Generator | None = None,
    episode_id: int = 0,
):
    """Roll out one episode, yielding a JSON-ready frame per decision step.

    ``intervention_subset`` applies oracle values to the named concepts
    every step; ``fixed_intervention`` applies one constant intervention to
    every defender; ``manual_interventions`` is a live agent-to-intervention
    dict consulted each step (the server mutates it between steps). The
    frame carries both the raw (pre-intervention) and effective concept
    activations.
    """
    episode = Episode(run_config.env, run_config.attackers, seed, shift=shift)
    schema: ConceptSchema | None = policy.config.schema
    hidden = {}
    for agent in episode.active_defenders():
        hidden[agent] = policy.initial_hidden(1)
    while not episode.done:
        agents = episode.active_defenders()
        per_defender = {}
        defender_actions = {}
        if agents:
            obs_rows = [episode.defender_observation(a) for a in agents]
            h = np.concatenate([hidden[a][0] for a in agents], axis=0)
            c = np.concatenate([hidden[a][1] for a in agents], axis=0)
            interventions: list[Intervention | None] = [None] * len(agents)
            oracle_rows = []
            for i, agent in enumerate(agents):
                truth = episode.oracle_concepts(agent, schema) if schema is not None else None
                oracle_rows.append(truth)
                if schema is None:
                    continue
                if manual_interventions and agent in manual_interventions:
                    interventions[i] = manual_interventions[agent]
                elif fixed_intervention is not None:
                    interventions[i] = fixed_intervention
                elif intervention_subset:
                    interventions[i] = apply_oracle_intervention(
                        None, truth, intervention_subset, schema
                    )
            obs = np.stack(obs_rows)
            iv_arg = interventions if any(iv is not None for iv in interventions) else None
            out = policy.step(obs, (h, c), intervention=iv_arg)
            actions, _ = act(out.action_logits, act_rng, mode=mode)
            for i, agent in enumerate(agents):
                hidden[agent] = (out.hidden[0][i : i + 1], out.hidden[1][i : i + 1])
                defender_actions[agent] = Action(int(actions[i]))
                per_defender[agent] = {
                    "predicted": out.raw_concepts[i].tolist() if schema is not None else [],
                    "effective": out.concepts[i].tolist() if schema is not None else [],
                    "oracle": oracle_rows[i].tolist() if oracle_rows[i] is not None else [],
                    "intervention": interventions[i].to_json() if interventions[i] else None,
                    "value": float(out.value[i]),
                }
        t_before = episode.t
        pre_state = snapshot_state(episode.state)
        rewards, info = episode.step(defender_actions)
        for agent, block in per_defender.items():
            block["action"] = int(defender_actions[agent])
            block["reward"] = float(rewards[agent])
        frame = {
            "v": FRAME_VERSION,
            "episode": episode_id,
            "t": t_before,
            "schema": schema.fingerprint() if schema is not None else None,
            "strategy": int(episode.strategy),
            "state": pre_state,
            "defenders": {str(a): b for a, b in per_defender.items()},
            "events": {
                "tags": info.tags,
                "misses": info.misses,
                "newly_tagged": info.newly_tagged,
            },
            "active_interventions": {
                str(a): iv.to_json() for a, iv in (manual_interventions or {}).items()
            },
            "outcome": episode.state.outcome.value,
        }
        if episode.done:
            frame["final_state"] = snapshot_state(episode.state)
        yield frame


@dataclass
class EpisodeSummary:
    won: bool
    steps: int
    concept_errors: dict[str, float]
    tag_actions: int
    defender_steps: int
    mean_positions: np.ndarray | None = None  # (steps, 2) defender centroid


def run_episode_summary(
    policy,
    run_config: RunConfig,
    seed,
    intervention_subset=None,
    fixed_intervention=None,
    shift=None,
    mode="greedy",
    act_rng=None,
    track_positions=False,
) -> EpisodeSummary:
    """Consume episode_frames and reduce to evaluation statistics."""
    if mode == "sample" and act_rng is None:
        if not isinstance(seed, np.random.SeedSequence):
            seed = np.random.SeedSequence(seed)
        act_rng = np.random.Generator(np.random.PCG64(seed.spawn(1)[0]))
    schema = policy.config.schema
    preds, truths = [], []
    tag_actions = 0
    defender_steps = 0
    steps = 0
    won = False
    positions = [] if track_positions else None
    n = run_config.env.n_per_team
    for frame in episode_frames(
        policy,
        run_config,
        seed,
        mode=mode,
        intervention_subset=intervention_subset,
        fixed_intervention=fixed_intervention,
        shift=shift,
        act_rng=act_rng,
    ):
        steps = frame["t"] + 1
        for block in frame["defenders"].values():
            defender_steps += 1
            if block["action"] == int(Action.TAG):
                tag_actions += 1
            if schema is not None:
                preds.append(block["predicted"])
                truths.append(block["oracle"])
        if track_positions:
            ds = frame["state"]["agents"][n:]
            positions.append(np.mean([a["pos"] for a in ds], axis=0))
        won = frame["outcome"] == Outcome.DEFENDERS_WIN.value
    errors = {}
    if schema is not None and preds:
        errors = concept_error_metrics(np.asarray(preds), np.asarray(truths), schema)
    return EpisodeSummary(
        won=won,
        steps=steps,
        concept_errors=errors,
        tag_actions=tag_actions,
        defender_steps=defender_steps,
        mean_positions=np.asarray(positions) if track_positions else None,
    )


def _episode_seeds(seeds, n_episodes):
    """Distribute n_episodes across seeds; returns [(seed, [episode seeds])]."""
    seeds = list(seeds)
    base = n_episodes // len(seeds)
    extra = n_episodes % len(seeds)
    out = []
    for i, s in enumerate(seeds):
        count = base + (1 if i < extra else 0)
        out.append((s, [np.random.SeedSequence([int(s), k]) for k in range(count)]))
    return out


def evaluate(
    policy,
    run_config: RunConfig,
    n_episodes: int,
    intervention_subset: set[str] | None = None,
    shift: ShiftConfig | None = None,
    seeds=(0,),
    mode: str = "greedy",
) -> EvalReport:
    """Greedy-rollout evaluation with optional oracle interventions and
    sim-to-real shift. Concept errors are measured on pre-intervention
    predictions; the reported win rate is exactly wins / episodes."""
    if policy.config.schema is None and intervention_subset:
        raise UsageError("cannot intervene on a model without concepts")
    wins = 0
    episodes = 0
    per_seed_rates = []
    per_episode_errors: list[dict] = []
    for seed, ep_seeds in _episode_seeds(seeds, n_episodes):
        seed_wins = 0
        for ss in ep_seeds:
            summary = run_episode_summary(
                policy,
                run_config,
                ss,
                intervention_subset=intervention_subset,
                shift=shift,
                mode=mode,
            )
            episodes += 1
            seed_wins += int(summary.won)
            if summary.concept_errors:
                per_episode_errors.append(summary.concept_errors)
        wins += seed_wins
        if ep_seeds:
            per_seed_rates.append(seed_wins / len(ep_seeds))
    concept_errors = {}
    if per_episode_errors:
        for name in per_episode_errors[0]:
            concept_errors[name] = mean_and_standard_error(
                [e[name] for e in per_episode_errors]
            )
    return EvalReport(
        win_rate=wins / episodes if episodes else 0.0,
        win_rate_std=float(np.std(per_seed_rates)) if len(per_seed_rates) > 1 else 0.0,
        wins=wins,
        episodes=episodes,
        concept_errors=concept_errors,
        intervention_subset=sorted(intervention_subset) if intervention_subset else None,
        shift=None if shift is None else vars(shift).copy(),
        per_seed_win_rates=per_seed_rates,
        config_fingerprint=run_config.fingerprint(),
    )


def concept_ablation_run(
    run_config: RunConfig,
    concept_subsets: list[set[str]],
    seed: int = 0,
    eval_episodes: int = 100,
    out_dir=None,
) -> list[dict]:
    """Train one hard (k=0) model per concept subset at the configured
    budget and evaluate each; returns one row per subset."""
    from pathlib import Path

    from . import trainer as trainer_mod
    from .concepts import schema_from_subset
    from .policy import PolicyConfig

    rows = []
    out_dir = Path(out_dir) if out_dir else None
    for i, subset in enumerate(concept_subsets):
        schema = schema_from_subset(run_config.env.n_per_team, subset)
        cfg = PolicyConfig(
            obs_dim=observation_size(run_config.env.n_per_team),
            n_actions=len(Action),
            schema=schema,
            k=0,
            hidden=run_config.policy.hidden,
            whiten_t=run_config.whitening.t,
            whiten_momentum=run_config.whitening.momentum,
            whiten_eps=run_config.whitening.eps,
        )
        policy = ConceptPolicy(cfg, seed=seed)
        run_dir = (out_dir / f"subset_{i}") if out_dir else Path(f"ablation_subset_{i}")
        summary = trainer_mod.train(run_config, seed, run_dir, policy=policy)
        report = evaluate(policy, run_config, eval_episodes, seeds=[seed])
        rows.append(
            {
                "subset": sorted(subset),
                "j": schema.j,
                "win_rate": report.win_rate,
                "concept_errors": {k: list(v) for k, v in report.concept_errors.items()},
                "checkpoint": summary["last_checkpoint"],
            }
        )
    return rows


def _force_strategy_intervention(schema: ConceptSchema, kind: StrategyKind) -> Intervention:
    values = np.zeros(schema.j)
    sl = schema.slice_of("strategy")
    values[sl.start + [StrategyKind.LEFT, StrategyKind.RIGHT, StrategyKind.RANDOM].index(kind)] = 1.0
    mask = np.zeros(schema.j, dtype=bool)
    mask[sl] = True
    return Intervention(mask=mask, values=values, provenance="probe")


def _force_range_intervention(schema: ConceptSchema, bit: int) -> Intervention:
    values = np.zeros(schema.j)
    sl = schema.slice_of("range")
    values[sl] = float(bit)
    mask = np.zeros(schema.j, dtype=bool)
    mask[sl] = True
    return Intervention(mask=mask, values=values, provenance="probe")


def _share_target_intervention(schema: ConceptSchema, index: int) -> Intervention:
    values = np.zeros(schema.j)
    sl = schema.slice_of("target")
    n = (sl.stop - sl.start) // 2
    if not (0 <= index < n):
        raise UsageError(f"target index {index} out of range")
    for k in range(n):
        values[sl.start + 2 * k + (0 if k == index else 1)] = 1.0
    mask = np.zeros(schema.j, dtype=bool)
    mask[sl] = True
    return Intervention(mask=mask, values=values, provenance="probe")


def behavioral_probe(
    policy,
    run_config: RunConfig,
    probe: str,
    n_episodes: int,
    seeds=(0,),
    probe_arg=None,
    mode: str = "sample",
) -> dict:
    """Behavioral effect measurements under forced concept values.

    probe = "force_strategy": mean defender position trace per step for each
    forced strategy (and unforced). probe = "force_range": tag-action
    frequency under range forced to 0 / 1 / unforced. probe =
    "share_target": win rate when every defender is forced to one shared
    target index vs. unforced. All statistics carry 95% CIs.

    Actions are sampled by default (deterministically per episode seed) so
    frequencies reflect the policy's action distribution; pass
    mode="greedy" to probe the deterministic policy instead.
    """
    schema = policy.config.schema
    if schema is None:
        raise UsageError("behavioral probes require a concept model")
    if probe == "force_strategy" and "strategy" not in schema.offsets:
        raise UsageError("schema has no strategy concept")
    if probe == "force_range" and "range" not in schema.offsets:
        raise UsageError("schema has no range concept")
    if probe == "share_target" and "target" not in schema.offsets:
        raise UsageError("schema has no target concept")

    def run_condition(fixed_iv, track_positions=False):
        summaries = []
        for seed, ep_seeds in _episode_seeds(seeds, n_episodes):
            for ss in ep_seeds:
                summaries.append(
                    run_episode_summary(
                        policy,
                        run_config,
                        ss,
                        fixed_intervention=fixed_iv,
                        track_positions=track_positions,
                        mode=mode,
                    )
                )
        return summaries

    if probe == "force_strategy":
        conditions = {"none": None}
        for kind in (StrategyKind.LEFT, StrategyKind.RIGHT, StrategyKind.RANDOM):
            conditions[kind.name.lower()] = _force_strategy_intervention(schema, kind)
        out = {}
        for name, iv in conditions.items():
            summaries = run_condition(iv, track_positions=True)
            max_len = max(s.mean_positions.shape[0] for s in summaries)
            trace = np.full((max_len, 2), np.nan)
            for t in range(max_len):
                pts = [
                    s.mean_positions[t] for s in summaries if s.mean_positions.shape[0] > t
                ]
                trace[t] = np.mean(pts, axis=0)
            win_mean, win_lo, win_hi = normal_ci95([s.won for s in summaries])
            out[name] = {
                "trace": trace.tolist(),
                "win_rate": win_mean,
                "win_ci95": [win_lo, win_hi],
            }
        return {"probe": probe, "conditions": out}

    if probe == "force_range":
        out = {}
        for name, iv in (
            ("none", None),
            ("range0", _force_range_intervention(schema, 0)),
            ("range1", _force_range_intervention(schema, 1)),
        ):
            summaries = run_condition(iv)
            freqs = [
                s.tag_actions / s.defender_steps for s in summaries if s.defender_steps
            ]
            mean, lo, hi = normal_ci95(freqs)
            out[name] = {"tag_frequency": mean, "ci95": [lo, hi]}
        return {"probe": probe, "conditions": out}

    if probe == "share_target":
        index = int(probe_arg) if probe_arg is not None else 0
        out = {}
        for name, iv in (
            ("none", None),
            (f"shared_{index}", _share_target_intervention(schema, index)),
        ):
            summaries = run_condition(iv)
            mean, lo, hi = normal_ci95([s.won for s in summaries])
            out[name] = {"win_rate": mean, "ci95": [lo, hi], "episodes": len(summaries)}
        return {"probe": probe, "conditions": out}

    raise UsageError(f"unknown probe {probe!r}")


__all__ = [
    "EvalReport",
    "episode_frames",
    "run_episode_summary",
    "evaluate",
    "concept_ablation_run",
    "behavioral_probe",
    "fisher_exact_greater",
    "fisher_exact_two_sided",
]
