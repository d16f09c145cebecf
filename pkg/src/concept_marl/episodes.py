"""One live episode: scripted attackers, per-defender target memories and
recurrent states, oracle concept evaluation, and the optional sim-to-real
shift proxy (scaled dynamics, observation noise, observation latency).

Shared by the trainer (sampled actions), the eval harness and the live
server (greedy actions, interventions), so their rollouts are identical
given identical seeds.
"""

from __future__ import annotations

from collections import deque
from dataclasses import replace

import numpy as np

from . import env as E
from .concepts import ConceptSchema, TargetMemory, init_target_memory, oracle_eval, update_target_memory
from .config import ShiftConfig
from .strategies import (
    AttackerConfig,
    attacker_act,
    sample_individual_policy,
    sample_team_strategy,
)


class Episode:
    """Seeded episode state machine stepped from outside with defender actions."""

    def __init__(
        self,
        arena: E.ArenaConfig,
        attackers: AttackerConfig,
        seed: int | np.random.SeedSequence,
        shift: ShiftConfig | None = None,
    ):
        self.arena = arena
        self.attackers_cfg = attackers
        self.shift = shift if shift is not None and not shift.is_identity else None
        if self.shift is not None:
            self.step_arena = replace(
                arena,
                accel_delta=arena.accel_delta * self.shift.accel_scale,
                rot_delta=arena.rot_delta * self.shift.rot_scale,
            )
        else:
            self.step_arena = arena
        ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        spawn_ss, strat_ss, attacker_ss, noise_ss = ss.spawn(4)
        self.state = E.reset(arena, spawn_ss)
        strat_rng = np.random.Generator(np.random.PCG64(strat_ss))
        self.strategy = sample_team_strategy(strat_rng, attackers.strategy_weights)
        self.attacker_rng = np.random.Generator(np.random.PCG64(attacker_ss))
        self.noise_rng = np.random.Generator(np.random.PCG64(noise_ss))
        self.attacker_policies = [
            sample_individual_policy(self.strategy, i, self.attacker_rng, attackers, arena)
            for i in range(arena.n_per_team)
        ]
        self.target_memory: dict[int, TargetMemory] = {
            i: init_target_memory(self.state, i) for i in E.defender_indices(arena)
        }
        self._obs_history: dict[int, deque] = {
            i: deque(maxlen=(self.shift.latency + 1) if self.shift else 1)
            for i in E.defender_indices(arena)
        }
        self.last_rewards = np.zeros(arena.n_agents)
        self.last_info: E.StepInfo | None = None
        self.last_actions: dict[int, E.Action] = {}

    @property
    def done(self) -> bool:
        return self.state.outcome is not E.Outcome.ONGOING

    @property
    def t(self) -> int:
        return self.state.t

    def active_defenders(self) -> list[int]:
        return [i for i in E.defender_indices(self.arena) if not self.state.agents[i].tagged]

    def defender_observation(self, agent: int) -> np.ndarray:
        """Current (possibly shifted) observation for one active defender."""
        obs = E.observe(self.state, agent, self.arena)
        if self.shift is None:
            return obs
        if self.shift.obs_noise > 0.0:
            obs = obs + self.noise_rng.normal(0.0, self.shift.obs_noise, size=obs.shape)
        hist = self._obs_history[agent]
        hist.append(obs)
        return hist[0]  # oldest entry within the latency window

    def oracle_concepts(self, agent: int, schema: ConceptSchema) -> np.ndarray:
        return oracle_eval(
            self.state, agent, schema, self.target_memory[agent], self.strategy, self.arena
        )

    def step(self, defender_actions: dict[int, E.Action]):
        """Advance one step; scripted attackers act automatically.

        Returns (rewards, StepInfo).
        """
        actions: dict[int, E.Action] = dict(defender_actions)
        for i in range(self.arena.n_per_team):
            if not self.state.agents[i].tagged:
                actions[i] = attacker_act(
                    self.attacker_policies[i],
                    self.state,
                    i,
                    self.attacker_rng,
                    self.step_arena,
                    self.attackers_cfg,
                )
        self.state, rewards, info = E.step(self.state, actions, self.step_arena)
        for i in E.defender_indices(self.arena):
            self.target_memory[i] = update_target_memory(self.target_memory[i], self.state, i)
        self.last_rewards = rewards
        self.last_info = info
        self.last_actions = actions
        return rewards, info
