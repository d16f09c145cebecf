"""Centralized-training / decentralized-execution PPO loop.

Collection runs a pool of environments in lockstep: every active defender
acts through one shared policy snapshot (batched forward, running whitening
statistics), scripted attackers act through the strategies module, and
oracle concept vectors are recorded for every stored transition. Each
defender's transitions form a stream; streams end when the defender is
tagged, the episode ends, or the phase truncates them (bootstrapped).

All phase randomness derives from SeedSequence([seed, phase, ...]), and
environments reset at phase starts, so a checkpoint (parameters, optimizer
moments, whitening statistics, counters) makes save/resume bit-transparent.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import nn
from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig, TrainerConfig
from .env import Action, Outcome, observation_size
from .episodes import Episode
from .losses import (
    LossBreakdown,
    concept_loss,
    entropy_of_logits,
    gae_advantages,
    logprob_grad_logits,
    normalize_advantages,
    ppo_objective,
)
from .metrics import concept_error_metrics
from .policy import ConceptPolicy, act, preset_config

N_ACTIONS = len(Action)


def linear_schedule(start: float, end: float, horizon: int, step: int) -> float:
    """Piecewise-linear interpolation clamped at the endpoints."""
    frac = min(max(step / horizon, 0.0), 1.0)
    return start + (end - start) * frac


@dataclass
class Stream:
    """Transitions of one defender within one episode (one rollout stream)."""

    obs: list = field(default_factory=list)
    actions: list = field(default_factory=list)
    logps: list = field(default_factory=list)
    values: list = field(default_factory=list)
    rewards: list = field(default_factory=list)
    truths: list = field(default_factory=list)
    preds: list = field(default_factory=list)
    snapshots: dict = field(default_factory=dict)  # local step -> (h, c)
    done: bool = False
    bootstrap: float = 0.0

    def __len__(self) -> int:
        return len(self.actions)


@dataclass
class RolloutBuffer:
    """Finished streams of one collection phase."""

    streams: list[Stream] = field(default_factory=list)
    episodes: int = 0
    wins: int = 0

    @property
    def size(self) -> int:
        return sum(len(s) for s in self.streams)

    @property
    def win_rate(self) -> float:
        return self.wins / self.episodes if self.episodes else 0.0


class _EnvSlot:
    """One pooled environment plus its live per-defender bookkeeping."""

    def __init__(self, run_config: RunConfig, seed_root, phase: int, env_idx: int, hidden: int):
        self.run_config = run_config
        self.seed_root = seed_root
        self.phase = phase
        self.env_idx = env_idx
        self.hidden_dim = hidden
        self.reset_count = 0
        self._fresh_episode()

    def _fresh_episode(self):
        ss = np.random.SeedSequence(
            [self.seed_root, self.phase, self.env_idx, self.reset_count]
        )
        self.episode = Episode(self.run_config.env, self.run_config.attackers, ss)
        self.reset_count += 1
        self.hidden = {
            i: (np.zeros(self.hidden_dim), np.zeros(self.hidden_dim))
            for i in self.episode.active_defenders()
        }
        self.streams = {i: Stream() for i in self.episode.active_defenders()}
        self.local_step = {i: 0 for i in self.episode.active_defenders()}


def collect_rollouts(
    policy: ConceptPolicy,
    run_config: RunConfig,
    seed: int,
    phase: int,
) -> RolloutBuffer:
    """Fill a buffer with exactly ``batch_size`` transitions."""
    tc = run_config.trainer
    schema = policy.config.schema
    act_rng = np.random.Generator(
        np.random.PCG64(np.random.SeedSequence([seed, phase, 0xAC7]))
    )
    slots = [
        _EnvSlot(run_config, seed, phase, e, policy.config.hidden) for e in range(tc.n_envs)
    ]
    buffer = RolloutBuffer()
    total = 0
    finished: list[Stream] = []

    def finish_stream(stream: Stream, done: bool, bootstrap: float = 0.0):
        if len(stream) == 0:
            return
        stream.done = done
        stream.bootstrap = bootstrap
        finished.append(stream)

    while total < tc.batch_size:
        rows = []  # (slot, agent, stream)
        obs_rows = []
        h_rows, c_rows = [], []
        for slot in slots:
            for agent in slot.episode.active_defenders():
                obs = slot.episode.defender_observation(agent)
                rows.append((slot, agent, slot.streams[agent]))
                obs_rows.append(obs)
                h, c = slot.hidden[agent]
                h_rows.append(h)
                c_rows.append(c)
                if slot.local_step[agent] % tc.seq_len == 0:
                    slot.streams[agent].snapshots[slot.local_step[agent]] = (h.copy(), c.copy())
        actions = np.zeros(len(rows), dtype=np.int64)
        if rows:
            obs_batch = np.stack(obs_rows)
            out = policy.step(obs_batch, (np.stack(h_rows), np.stack(c_rows)))
            actions, logps = act(out.action_logits, act_rng, mode="sample")
            for r, (slot, agent, stream) in enumerate(rows):
                stream.obs.append(obs_rows[r])
                stream.actions.append(int(actions[r]))
                stream.logps.append(float(logps[r]))
                stream.values.append(float(out.value[r]))
                if schema is not None:
                    stream.truths.append(slot.episode.oracle_concepts(agent, schema))
                    stream.preds.append(out.concepts[r].copy())
                slot.hidden[agent] = (out.hidden[0][r], out.hidden[1][r])
                slot.local_step[agent] += 1
        for slot in slots:
            defender_actions = {
                agent: Action(int(actions[r]))
                for r, (s, agent, _) in enumerate(rows)
                if s is slot
            }
            rewards, info = slot.episode.step(defender_actions)
            for agent in defender_actions:
                slot.streams[agent].rewards.append(float(rewards[agent]))
            if slot.episode.done:
                buffer.episodes += 1
                if slot.episode.state.outcome is Outcome.DEFENDERS_WIN:
                    buffer.wins += 1
                for stream in slot.streams.values():
                    finish_stream(stream, done=True)
                slot._fresh_episode()
            else:
                for agent in list(slot.streams):
                    if slot.episode.state.agents[agent].tagged:
                        finish_stream(slot.streams.pop(agent), done=True)
                        slot.hidden.pop(agent)
                        slot.local_step.pop(agent)
        total = sum(len(s) for s in finished) + sum(
            len(st) for slot in slots for st in slot.streams.values()
        )

    # Trim the overshoot by dropping a suffix of the final wave's rows; a
    # trimmed stream bootstraps with the value of its first dropped
    # observation (the state right after its last kept action).
    overshoot = total - tc.batch_size
    for slot, agent, stream in reversed(rows):
        if overshoot == 0:
            break
        if len(stream) == 0:
            continue
        _trim_last(stream)
        overshoot -= 1
        if slot.streams.get(agent) is stream:
            finish_stream(slot.streams.pop(agent), done=False, bootstrap=stream.bootstrap)
            slot.hidden.pop(agent)
            slot.local_step.pop(agent)
    assert overshoot == 0

    # Bootstrap the remaining open streams with V(next observation).
    open_streams = []
    open_obs = []
    open_h, open_c = [], []
    for slot in slots:
        for agent, stream in slot.streams.items():
            if len(stream) == 0:
                continue
            open_streams.append(stream)
            open_obs.append(slot.episode.defender_observation(agent))
            h, c = slot.hidden[agent]
            open_h.append(h)
            open_c.append(c)
    if open_streams:
        out = policy.step(np.stack(open_obs), (np.stack(open_h), np.stack(open_c)))
        for r, stream in enumerate(open_streams):
            finish_stream(stream, done=False, bootstrap=float(out.value[r]))

    buffer.streams = [s for s in finished if len(s) > 0]
    assert buffer.size == tc.batch_size, (buffer.size, tc.batch_size)
    return buffer


def _trim_last(stream: Stream):
    stream.obs.pop()
    stream.actions.pop()
    stream.logps.pop()
    val = stream.values.pop()
    if stream.rewards and len(stream.rewards) > len(stream.actions):
        stream.rewards.pop()
    if stream.truths:
        stream.truths.pop()
        stream.preds.pop()
    stream.bootstrap = val
    stream.done = False


@dataclass
class SequenceUnit:
    """One (front-padded) training sequence."""

    obs: np.ndarray  # (seq_len, obs_dim) with leading zero padding
    mask: np.ndarray  # (seq_len,)
    actions: np.ndarray
    logp_old: np.ndarray
    advantages: np.ndarray
    returns: np.ndarray
    truths: np.ndarray | None
    h0: np.ndarray
    c0: np.ndarray


def build_sequences(buffer: RolloutBuffer, tc: TrainerConfig, loss_cfg, j: int) -> list[SequenceUnit]:
    """GAE per stream, then chop into front-padded fixed-length sequences."""
    units = []
    L = tc.seq_len
    for stream in buffer.streams:
        n = len(stream)
        rewards = np.asarray(stream.rewards)
        values = np.asarray(stream.values)
        dones = np.zeros(n, dtype=bool)
        dones[-1] = stream.done
        adv, ret = gae_advantages(
            rewards, values, dones, loss_cfg.gamma, loss_cfg.lam, stream.bootstrap
        )
        obs_arr = np.stack(stream.obs)
        truth_arr = np.stack(stream.truths) if stream.truths else None
        for start in range(0, n, L):
            end = min(start + L, n)
            real = end - start
            pad = L - real
            obs = np.zeros((L, obs_arr.shape[1]))
            obs[pad:] = obs_arr[start:end]
            mask = np.zeros(L)
            mask[pad:] = 1.0
            truths = None
            if truth_arr is not None:
                truths = np.zeros((L, j))
                truths[pad:] = truth_arr[start:end]
            h0, c0 = stream.snapshots[start]
            units.append(
                SequenceUnit(
                    obs=obs,
                    mask=mask,
                    actions=_padded(stream.actions, start, end, L, dtype=np.int64),
                    logp_old=_padded(stream.logps, start, end, L),
                    advantages=_padded(adv, start, end, L),
                    returns=_padded(ret, start, end, L),
                    truths=truths,
                    h0=h0,
                    c0=c0,
                )
            )
    return units


def _padded(seq, start, end, L, dtype=np.float64):
    out = np.zeros(L, dtype=dtype)
    out[L - (end - start):] = np.asarray(seq[start:end], dtype=dtype)
    return out


def train_phase(
    policy: ConceptPolicy,
    adam: nn.AdamState,
    buffer: RolloutBuffer,
    run_config: RunConfig,
    lr: float,
    entropy_coeff: float,
    shuffle_rng: np.random.Generator,
) -> dict:
    """Optimize over the buffer: sequence-aligned minibatches, train-mode
    whitening, clipped PPO + concept loss, Adam with the scheduled rate."""
    tc = run_config.trainer
    loss_cfg = run_config.loss
    schema = policy.config.schema
    j = policy.config.j
    units = build_sequences(buffer, tc, loss_cfg, j)
    seqs_per_mb = tc.minibatch_size // tc.seq_len
    n_minibatches = tc.batch_size // tc.minibatch_size
    agg: dict[str, float] = {}
    count = 0
    for _ in range(tc.epochs):
        order = shuffle_rng.permutation(len(units))
        for m in range(n_minibatches):
            chosen = order[m * seqs_per_mb : (m + 1) * seqs_per_mb]
            if len(chosen) < seqs_per_mb:
                break  # remainder sequences are dropped this epoch
            batch = [units[i] for i in chosen]
            breakdown = _minibatch_update(
                policy, adam, batch, loss_cfg, tc, lr, entropy_coeff
            )
            count += 1
            for k, v in breakdown.to_json().items():
                if k == "per_concept":
                    for name, val in v.items():
                        agg[f"concept/{name}"] = agg.get(f"concept/{name}", 0.0) + val
                else:
                    agg[k] = agg.get(k, 0.0) + v
    metrics = {k: v / max(count, 1) for k, v in agg.items()}
    metrics["minibatch_updates"] = count
    metrics["sequences"] = len(units)
    return metrics


def _minibatch_update(policy, adam, batch, loss_cfg, tc, lr, entropy_coeff) -> LossBreakdown:
    T = tc.seq_len
    B = len(batch)
    xs = np.stack([u.obs for u in batch], axis=1)  # (T, B, obs)
    mask = np.stack([u.mask for u in batch], axis=1)  # (T, B)
    h0 = np.stack([u.h0 for u in batch])
    c0 = np.stack([u.c0 for u in batch])
    flat_mask = mask.astype(bool)
    actions = np.stack([u.actions for u in batch], axis=1)[flat_mask]
    logp_old = np.stack([u.logp_old for u in batch], axis=1)[flat_mask]
    advantages = np.stack([u.advantages for u in batch], axis=1)[flat_mask]
    returns = np.stack([u.returns for u in batch], axis=1)[flat_mask]
    logits, values, concepts, cache = policy.forward_train(xs, h0, c0, mask)
    n_rows = len(actions)
    logp_rows = nn.log_softmax_rows(logits)
    logp_new = logp_rows[np.arange(n_rows), actions]
    entropy, g_ent = entropy_of_logits(logits)
    advantages = normalize_advantages(advantages)
    if policy.config.j > 0:
        truths = np.stack([u.truths for u in batch], axis=1)[flat_mask]
        c_total, per_concept, c_grad = concept_loss(
            concepts, truths, policy.config.schema, loss_cfg.focal_gamma
        )
        g_concepts = loss_cfg.concept_coeff * c_grad
    else:
        c_total, per_concept, g_concepts = 0.0, {}, None
    breakdown, g_logp, g_values = ppo_objective(
        logp_new,
        logp_old,
        advantages,
        values,
        returns,
        entropy,
        c_total,
        per_concept,
        loss_cfg,
        entropy_coeff,
    )
    g_logits = logprob_grad_logits(logits, actions, g_logp) - entropy_coeff * g_ent
    grads = policy.backward_train(cache, g_logits, g_values, g_concepts)
    nn.clip_grads(grads, tc.max_grad_norm)
    nn.adam_step(policy.params, grads, adam, lr)
    return breakdown


class PhaseAborted(Exception):
    """A numeric error aborted a train phase; state was rolled back."""

    def __init__(self, checkpoint_path, cause):
        super().__init__(f"phase aborted ({cause}); state rolled back to {checkpoint_path}")
        self.checkpoint_path = checkpoint_path


def make_policy(run_config: RunConfig, seed: int) -> ConceptPolicy:
    obs_dim = observation_size(run_config.env.n_per_team)
    cfg = preset_config(run_config.env.n_per_team, run_config.policy.kind, obs_dim, N_ACTIONS)
    cfg.hidden = run_config.policy.hidden
    cfg.whiten_t = run_config.whitening.t
    cfg.whiten_momentum = run_config.whitening.momentum
    cfg.whiten_eps = run_config.whitening.eps
    param_seed = np.random.SeedSequence([seed, 0x9A2A]).generate_state(1)[0]
    return ConceptPolicy(cfg, seed=int(param_seed))


def train(
    run_config: RunConfig,
    seed: int,
    out_dir: str | Path,
    resume: str | Path | None = None,
    policy: ConceptPolicy | None = None,
    log=print,
) -> dict:
    """Full training run; returns a summary with paths and final metrics.

    ``policy`` overrides the preset model (used by concept ablations);
    ``resume`` continues bit-identically from a checkpoint.
    """
    from .eval_harness import evaluate  # late import; eval needs no trainer

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tc = run_config.trainer
    if resume is not None:
        policy, adam, meta = load_checkpoint(resume)
        ts = meta["trainer_state"]
        saved = RunConfig.from_json(meta["run_config"])
        if saved.resume_fingerprint() != run_config.resume_fingerprint():
            raise ValueError("checkpoint config fingerprint does not match the run config")
        phase = ts["phase"]
        global_step = ts["global_step"]
        seed = ts["seed"]
        best_win_rate = ts.get("best_win_rate", -1.0)
    else:
        if policy is None:
            policy = make_policy(run_config, seed)
        adam = nn.AdamState.init(
            policy.params, beta1=tc.adam_beta1, beta2=tc.adam_beta2
        )
        phase = 0
        global_step = 0
        best_win_rate = -1.0

    metrics_path = out_dir / "metrics.ndjson"
    last_checkpoint = out_dir / "last.ckpt.npz"
    best_checkpoint = out_dir / "best.ckpt.npz"

    def trainer_state():
        return {
            "phase": phase,
            "global_step": global_step,
            "seed": seed,
            "best_win_rate": best_win_rate,
        }

    def save(path):
        save_checkpoint(path, policy, adam, run_config, trainer_state())

    history = []
    with open(metrics_path, "a") as metrics_file:
        while global_step < tc.total_steps:
            t0 = time.time()
            lr = linear_schedule(tc.lr_start, tc.lr_end, tc.schedule_horizon, global_step)
            ecoeff = linear_schedule(
                tc.entropy_start, tc.entropy_end, tc.schedule_horizon, global_step
            )
            shuffle_rng = np.random.Generator(
                np.random.PCG64(np.random.SeedSequence([seed, phase, 0x5F0F]))
            )
            try:
                buffer = collect_rollouts(policy, run_config, seed, phase)
                phase_metrics = train_phase(
                    policy, adam, buffer, run_config, lr, ecoeff, shuffle_rng
                )
            except nn.NumericError as err:
                save_path = last_checkpoint if last_checkpoint.exists() else None
                if save_path is not None:
                    policy, adam, _ = load_checkpoint(save_path)
                raise PhaseAborted(save_path, err) from err
            global_step += buffer.size
            phase += 1
            record = {
                "phase": phase,
                "global_step": global_step,
                "lr": lr,
                "entropy_coeff": ecoeff,
                "collect": {
                    "episodes": buffer.episodes,
                    "win_rate": buffer.win_rate,
                    "transitions": buffer.size,
                },
                "loss": phase_metrics,
                "seconds": round(time.time() - t0, 3),
            }
            if policy.config.j > 0:
                preds = np.concatenate([np.stack(s.preds) for s in buffer.streams if s.preds])
                truths = np.concatenate([np.stack(s.truths) for s in buffer.streams if s.truths])
                record["concept_errors"] = concept_error_metrics(
                    preds, truths, policy.config.schema
                )
            if tc.eval_every and phase % tc.eval_every == 0:
                report = evaluate(
                    policy,
                    run_config,
                    n_episodes=tc.eval_episodes,
                    seeds=[np.random.SeedSequence([seed, phase, 0xE7A1]).generate_state(1)[0]],
                )
                record["eval_win_rate"] = report.win_rate
                if report.win_rate >= best_win_rate:
                    best_win_rate = report.win_rate
                    save(best_checkpoint)
            line = json.dumps(record, sort_keys=True)
            metrics_file.write(line + "\n")
            metrics_file.flush()
            history.append(record)
            if tc.checkpoint_every and phase % tc.checkpoint_every == 0:
                save(last_checkpoint)
            log(
                f"phase {phase} step {global_step} "
                f"win_rate {buffer.win_rate:.3f} total {phase_metrics.get('total', 0.0):+.4f}"
            )
    save(last_checkpoint)
    if not best_checkpoint.exists():
        save(best_checkpoint)
    return {
        "phases": phase,
        "global_step": global_step,
        "last_checkpoint": str(last_checkpoint),
        "best_checkpoint": str(best_checkpoint),
        "metrics_path": str(metrics_path),
        "history": history,
    }
