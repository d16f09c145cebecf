"""Scripted attacker team strategies: left / right sweeps and random walks.

A team-level strategy kind is sampled once per episode; each attacker then
samples an individual waypoint path with Gaussian noise, so trajectories
vary between agents while preserving the side constraint.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .env import (
    Action,
    ArenaConfig,
    Team,
    UsageError,
    WorldState,
    defender_indices,
    tag_check,
)


class StrategyKind(IntEnum):
    LEFT = 0
    RIGHT = 1
    RANDOM = 2


MOVEMENT_ACTIONS = (
    Action.ACCEL_FORWARD,
    Action.ACCEL_BACKWARD,
    Action.ROTATE_LEFT,
    Action.ROTATE_RIGHT,
)

# Base sweep path for the LEFT strategy in units of half_extent; the RIGHT
# path is its x-mirror. The final waypoint is always the goal position.
_LEFT_BASE = ((-0.75, -0.35), (-0.8, 0.15), (-0.55, 0.55))
_SIDE_MARGIN = 0.05


@dataclass
class AttackerConfig:
    """Config section [attackers]."""

    noise_scale: float = 0.1
    n_waypoints: int = 3
    capture_radius: float = 0.25
    strategy_weights: tuple[float, float, float] = (1.0, 1.0, 1.0)


@dataclass
class AttackerPolicy:
    """One attacker's sampled policy: strategy kind plus a waypoint path.

    ``waypoint_index`` advances as waypoints are captured; RANDOM policies
    have no waypoints.
    """

    kind: StrategyKind
    waypoints: list[np.ndarray] = field(default_factory=list)
    noise_scale: float = 0.0
    stream_id: int = 0
    waypoint_index: int = 0


def sample_team_strategy(
    rng: np.random.Generator,
    weights: tuple[float, float, float] = (1.0, 1.0, 1.0),
) -> StrategyKind:
    """Sample the episode's team strategy (uniform by default)."""
    w = np.asarray(weights, dtype=np.float64)
    p = w / w.sum()
    return StrategyKind(int(rng.choice(3, p=p)))


def _base_waypoints(kind: StrategyKind, config: ArenaConfig) -> list[np.ndarray]:
    he = config.half_extent
    sign = -1.0 if kind == StrategyKind.LEFT else 1.0
    pts = [np.array([sign * abs(x) * he, y * he], dtype=np.float64) for x, y in _LEFT_BASE]
    return pts


def sample_individual_policy(
    kind: StrategyKind,
    agent: int,
    rng: np.random.Generator,
    attacker_config: AttackerConfig,
    arena: ArenaConfig,
) -> AttackerPolicy:
    """Sample one attacker's policy from the team strategy.

    LEFT/RIGHT paths perturb each intermediate waypoint with Gaussian noise
    of scale ``noise_scale``; the side constraint is preserved by clamping x
    away from the center line. The path always ends at the goal.
    """
    if kind == StrategyKind.RANDOM:
        return AttackerPolicy(kind=kind, noise_scale=attacker_config.noise_scale, stream_id=agent)
    he = arena.half_extent
    sign = -1.0 if kind == StrategyKind.LEFT else 1.0
    base = _base_waypoints(kind, arena)
    if attacker_config.n_waypoints != len(base):
        # Resample the sweep with n points interpolated along the base path.
        idx = np.linspace(0.0, len(base) - 1.0, attacker_config.n_waypoints)
        base = [
            base[int(math.floor(i))]
            + (i - math.floor(i)) * (base[min(int(math.floor(i)) + 1, len(base) - 1)] - base[int(math.floor(i))])
            for i in idx
        ]
    waypoints = []
    for wp in base:
        p = wp + rng.normal(0.0, attacker_config.noise_scale, size=2)
        if sign < 0:
            p[0] = min(p[0], -_SIDE_MARGIN * he)
        else:
            p[0] = max(p[0], _SIDE_MARGIN * he)
        p[0] = min(max(p[0], -he), he)
        p[1] = min(max(p[1], -he), he)
        waypoints.append(p)
    waypoints.append(np.array(arena.goal_position, dtype=np.float64))
    return AttackerPolicy(
        kind=kind,
        waypoints=waypoints,
        noise_scale=attacker_config.noise_scale,
        stream_id=agent,
    )


def _nearest_defender(state: WorldState, agent: int, config: ArenaConfig) -> int | None:
    a = state.agents[agent]
    best, best_d = None, math.inf
    for i in defender_indices(config):
        b = state.agents[i]
        if b.tagged:
            continue
        d = math.hypot(b.pos[0] - a.pos[0], b.pos[1] - a.pos[1])
        if d < best_d:
            best_d, best = d, i
    return best


def attacker_act(
    policy: AttackerPolicy,
    state: WorldState,
    agent: int,
    rng: np.random.Generator,
    arena: ArenaConfig,
    attacker_config: AttackerConfig | None = None,
) -> Action:
    """Action for one scripted attacker.

    Reflex: tag whenever the nearest defender is taggable. RANDOM policies
    otherwise pick uniformly among movement actions; waypoint policies run a
    proportional-heading controller (rotate toward the current waypoint when
    the bearing error exceeds one rotation step, else accelerate) and
    advance the waypoint inside the capture radius.
    """
    a = state.agents[agent]
    if a.team != Team.ATTACKER or a.tagged:
        raise UsageError("attacker_act requires an untagged attacker")
    nearest = _nearest_defender(state, agent, arena)
    if nearest is not None and tag_check(state, agent, nearest, arena):
        return Action.TAG
    if policy.kind == StrategyKind.RANDOM:
        return MOVEMENT_ACTIONS[int(rng.integers(len(MOVEMENT_ACTIONS)))]
    capture = attacker_config.capture_radius if attacker_config else 0.25
    while policy.waypoint_index < len(policy.waypoints) - 1:
        wp = policy.waypoints[policy.waypoint_index]
        if math.hypot(wp[0] - a.pos[0], wp[1] - a.pos[1]) <= capture:
            policy.waypoint_index += 1
        else:
            break
    wp = policy.waypoints[policy.waypoint_index]
    dx, dy = wp[0] - a.pos[0], wp[1] - a.pos[1]
    fwd = dx * a.hx + dy * a.hy
    lat = dy * a.hx - dx * a.hy
    err = math.atan2(lat, fwd)
    if abs(err) > arena.rot_delta:
        return Action.ROTATE_LEFT if err > 0 else Action.ROTATE_RIGHT
    return Action.ACCEL_FORWARD
