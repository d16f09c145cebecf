"""Deterministic, seedable tag-game simulator.

Two equally sized teams play on a square arena: attackers try to reach a
goal location, defenders try to tag them first. Tagging requires proximity
and facing. Kinematics are double-integrator-lite: acceleration along the
heading, per-step drag, speed clamp, position clamped to the arena.

Headings are stored internally as unit vectors so that mirroring the world
across the y-axis (negate x, negate heading-x, swap left/right rotations)
produces bit-exact mirrored trajectories.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum, IntEnum

import numpy as np

TWO_PI = 2.0 * math.pi


class UsageError(Exception):
    """Raised when an operation is called outside its contract."""


class ConfigError(Exception):
    """Raised for invalid configuration values."""


class Team(IntEnum):
    ATTACKER = 0
    DEFENDER = 1


class Action(IntEnum):
    ACCEL_FORWARD = 0
    ACCEL_BACKWARD = 1
    ROTATE_LEFT = 2
    ROTATE_RIGHT = 3
    TAG = 4
    NOOP = 5


N_ACTIONS = len(Action)


class Outcome(Enum):
    ONGOING = "ongoing"
    ATTACKERS_WIN = "attackers_win"
    DEFENDERS_WIN = "defenders_win"


def wrap_angle(a: float) -> float:
    """Wrap an angle to [-pi, pi)."""
    return (a + math.pi) % TWO_PI - math.pi


@dataclass
class ArenaConfig:
    """Static parameters of the arena, kinematics, tagging and rewards."""

    half_extent: float = 1.0
    goal_position: tuple[float, float] = (0.0, 0.8)
    goal_radius: float = 0.15
    max_steps: int = 128
    n_per_team: int = 2
    accel_delta: float = 0.01
    rot_delta: float = math.pi / 12.0
    max_speed: float = 0.05
    drag: float = 0.9
    tag_range: float = 0.8
    tag_half_angle: float = math.pi / 5.0
    tag_cooldown: int = 5
    defender_spawn_band: float = 0.3
    # Reward constants; the orientation term is r_ori_coeff * |bearing err| / pi.
    r_tag: float = 1.0
    r_win: float = 5.0
    r_tagged: float = 1.0
    r_lose: float = 5.0
    r_miss: float = 0.1
    r_ori_coeff: float = 0.05

    def __post_init__(self):
        if self.tag_range <= 0:
            raise ConfigError("tag_range must be positive")
        if not (0.0 < self.tag_half_angle < math.pi):
            raise ConfigError("tag_half_angle must be in (0, pi)")
        if self.max_steps <= 0:
            raise ConfigError("max_steps must be positive")
        if self.n_per_team < 1:
            raise ConfigError("n_per_team must be >= 1")
        if self.half_extent <= 0:
            raise ConfigError("half_extent must be positive")

    @property
    def n_agents(self) -> int:
        return 2 * self.n_per_team


@dataclass
class AgentState:
    """Pose, velocity and status of one agent.

    ``hx, hy`` hold the unit heading vector; ``heading`` derives the angle.
    """

    pos: np.ndarray
    vel: np.ndarray
    hx: float
    hy: float
    tagged: bool
    team: Team
    cooldown: int = 0

    @property
    def heading(self) -> float:
        h = math.atan2(self.hy, self.hx)
        return -math.pi if h == math.pi else h

    def copy(self) -> "AgentState":
        return AgentState(
            pos=self.pos.copy(),
            vel=self.vel.copy(),
            hx=self.hx,
            hy=self.hy,
            tagged=self.tagged,
            team=self.team,
            cooldown=self.cooldown,
        )


@dataclass
class WorldState:
    """Full simulator state: agents (attackers first), timestep, rng, outcome."""

    agents: list[AgentState]
    t: int
    rng: np.random.Generator
    outcome: Outcome = Outcome.ONGOING

    def canonical_bytes(self) -> bytes:
        """Byte-exact fingerprint of the simulation state (rng excluded)."""
        parts = [self.t.to_bytes(8, "big"), self.outcome.value.encode()]
        for a in self.agents:
            parts.append(a.pos.tobytes())
            parts.append(a.vel.tobytes())
            parts.append(np.float64(a.hx).tobytes())
            parts.append(np.float64(a.hy).tobytes())
            parts.append(bytes([a.tagged, int(a.team)]))
            parts.append(int(a.cooldown).to_bytes(4, "big"))
        return b"".join(parts)

    def copy(self) -> "WorldState":
        """Copy agent data; the rng generator is shared across the episode."""
        return WorldState(
            agents=[a.copy() for a in self.agents],
            t=self.t,
            rng=self.rng,
            outcome=self.outcome,
        )


@dataclass
class StepInfo:
    """Events recorded during one step."""

    tags: list[tuple[int, int]] = field(default_factory=list)  # (tagger, target)
    misses: list[int] = field(default_factory=list)
    newly_tagged: list[int] = field(default_factory=list)
    attackers_won: bool = False
    defenders_won: bool = False


def attacker_indices(config: ArenaConfig) -> range:
    return range(config.n_per_team)


def defender_indices(config: ArenaConfig) -> range:
    return range(config.n_per_team, 2 * config.n_per_team)


def reset(config: ArenaConfig, seed: int | np.random.SeedSequence) -> WorldState:
    """Spawn a fresh episode.

    Attackers spawn uniformly in the lower half of the arena; defenders in a
    band of width ``defender_spawn_band`` on the arena-center side of the
    goal. Identical seeds yield byte-identical states. ``seed`` may be an
    integer or a SeedSequence (for hierarchical seeding).
    """
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    rng = np.random.Generator(np.random.PCG64(seed))
    he = config.half_extent
    gx, gy = config.goal_position
    agents: list[AgentState] = []
    for _ in range(config.n_per_team):
        x = rng.uniform(-he, he)
        y = rng.uniform(-he, 0.0)
        theta = rng.uniform(-math.pi, math.pi)
        agents.append(
            AgentState(
                pos=np.array([x, y], dtype=np.float64),
                vel=np.zeros(2, dtype=np.float64),
                hx=math.cos(theta),
                hy=math.sin(theta),
                tagged=False,
                team=Team.ATTACKER,
            )
        )
    band = config.defender_spawn_band
    for _ in range(config.n_per_team):
        x = min(max(rng.uniform(gx - band, gx + band), -he), he)
        y = min(max(rng.uniform(gy - band, gy), -he), he)
        theta = rng.uniform(-math.pi, math.pi)
        agents.append(
            AgentState(
                pos=np.array([x, y], dtype=np.float64),
                vel=np.zeros(2, dtype=np.float64),
                hx=math.cos(theta),
                hy=math.sin(theta),
                tagged=False,
                team=Team.DEFENDER,
            )
        )
    return WorldState(agents=agents, t=0, rng=rng, outcome=Outcome.ONGOING)


def _bearing_to(agent: AgentState, other: AgentState) -> float:
    """Signed angle from ``agent``'s heading to the direction of ``other``."""
    dx = other.pos[0] - agent.pos[0]
    dy = other.pos[1] - agent.pos[1]
    fwd = dx * agent.hx + dy * agent.hy
    lat = dy * agent.hx - dx * agent.hy
    return math.atan2(lat, fwd)


def _abs_bearing_to(agent: AgentState, other: AgentState) -> float:
    """|bearing| computed mirror-symmetrically (abs applied to the lateral part)."""
    dx = other.pos[0] - agent.pos[0]
    dy = other.pos[1] - agent.pos[1]
    fwd = dx * agent.hx + dy * agent.hy
    lat = dy * agent.hx - dx * agent.hy
    return math.atan2(abs(lat), fwd)


def _distance(a: AgentState, b: AgentState) -> float:
    dx = b.pos[0] - a.pos[0]
    dy = b.pos[1] - a.pos[1]
    return math.sqrt(dx * dx + dy * dy)


def tag_check(
    state: WorldState,
    tagger: int,
    target: int,
    config: ArenaConfig,
    ignore_cooldown: bool = False,
) -> bool:
    """True iff ``tagger`` can tag ``target`` right now.

    Requires opposing teams, an untagged tagger, distance within
    ``tag_range``, bearing within ``tag_half_angle``, an untagged target and
    zero cooldown (unless ``ignore_cooldown``).
    """
    a = state.agents[tagger]
    b = state.agents[target]
    if a.team == b.team:
        raise UsageError("tag_check requires agents on opposing teams")
    if a.tagged:
        raise UsageError("tagger is tagged and out of play")
    if b.tagged:
        return False
    if not ignore_cooldown and a.cooldown > 0:
        return False
    if _distance(a, b) > config.tag_range:
        return False
    return _abs_bearing_to(a, b) <= config.tag_half_angle


def _eligible_tag_target(state: WorldState, tagger: int, config: ArenaConfig) -> int | None:
    """Nearest opposing agent the tagger can tag, or None."""
    a = state.agents[tagger]
    best = None
    best_d = math.inf
    for idx, b in enumerate(state.agents):
        if b.team == a.team:
            continue
        if not tag_check(state, tagger, idx, config):
            continue
        d = _distance(a, b)
        if d < best_d:
            best_d = d
            best = idx
    return best


def win_check(state: WorldState, config: ArenaConfig) -> Outcome:
    """Outcome of the current state; attacker goal-reach has priority."""
    gx, gy = config.goal_position
    for i in attacker_indices(config):
        a = state.agents[i]
        if a.tagged:
            continue
        dx = a.pos[0] - gx
        dy = a.pos[1] - gy
        if math.sqrt(dx * dx + dy * dy) <= config.goal_radius:
            return Outcome.ATTACKERS_WIN
    if all(state.agents[i].tagged for i in attacker_indices(config)):
        return Outcome.DEFENDERS_WIN
    if state.t >= config.max_steps:
        return Outcome.DEFENDERS_WIN
    return Outcome.ONGOING


def reward(
    prev: WorldState,
    next_state: WorldState,
    info: StepInfo,
    agent: int,
    config: ArenaConfig,
) -> float:
    """Per-step defender reward: event terms plus orientation shaping.

    Only defenders are trained; attackers receive no reward. The shaping
    term penalizes the absolute bearing error to the nearest active
    opponent in the post-step state.
    """
    a = next_state.agents[agent]
    if a.team != Team.DEFENDER:
        raise UsageError("reward is defined for defenders only")
    r = 0.0
    was_active = not prev.agents[agent].tagged
    if was_active and agent not in info.newly_tagged:
        nearest = None
        nearest_d = math.inf
        for idx in attacker_indices(config):
            b = next_state.agents[idx]
            if b.tagged:
                continue
            d = _distance(a, b)
            if d < nearest_d:
                nearest_d = d
                nearest = b
        if nearest is not None:
            r -= config.r_ori_coeff * abs(_abs_bearing_to(a, nearest)) / math.pi
    if agent in info.misses:
        r -= config.r_miss
    if agent in info.newly_tagged:
        r -= config.r_tagged
    for tagger, _ in info.tags:
        if tagger == agent:
            r += config.r_tag
    if info.attackers_won:
        r -= config.r_lose
    if info.defenders_won:
        r += config.r_win
    return r


def step(
    state: WorldState,
    actions: dict[int, Action] | list[Action],
    config: ArenaConfig,
) -> tuple[WorldState, np.ndarray, StepInfo]:
    """Advance the world one step.

    Per-agent order: cooldown decay, action (acceleration along the heading,
    rotation, or a tag attempt), speed clamp, position integration, arena
    clamp, then drag. Tag attempts resolve simultaneously afterwards, then
    the win check and rewards. Tagged agents' actions are ignored and their
    pose is frozen. Returns (next state, per-agent rewards, step info).
    """
    if state.outcome is not Outcome.ONGOING:
        raise UsageError("step called on a terminal state")
    if isinstance(actions, dict):
        act_of = lambda i: actions.get(i, Action.NOOP)  # noqa: E731
    else:
        act_of = lambda i: actions[i]  # noqa: E731

    cos_d = math.cos(config.rot_delta)
    sin_d = math.sin(config.rot_delta)
    nxt = WorldState(
        agents=[a.copy() for a in state.agents],
        t=state.t,
        rng=state.rng,
        outcome=state.outcome,
    )
    tag_attempts: list[int] = []
    for i, a in enumerate(nxt.agents):
        if a.tagged:
            continue
        if a.cooldown > 0:
            a.cooldown -= 1
        act = act_of(i)
        if act == Action.ACCEL_FORWARD:
            a.vel[0] += config.accel_delta * a.hx
            a.vel[1] += config.accel_delta * a.hy
        elif act == Action.ACCEL_BACKWARD:
            a.vel[0] -= config.accel_delta * a.hx
            a.vel[1] -= config.accel_delta * a.hy
        elif act == Action.ROTATE_LEFT:
            hx = a.hx * cos_d - a.hy * sin_d
            hy = a.hx * sin_d + a.hy * cos_d
            a.hx, a.hy = hx, hy
        elif act == Action.ROTATE_RIGHT:
            hx = a.hx * cos_d + a.hy * sin_d
            hy = -(a.hx * sin_d) + a.hy * cos_d
            a.hx, a.hy = hx, hy
        elif act == Action.TAG:
            tag_attempts.append(i)
        speed_sq = a.vel[0] * a.vel[0] + a.vel[1] * a.vel[1]
        if speed_sq > config.max_speed * config.max_speed:
            scale = config.max_speed / math.sqrt(speed_sq)
            a.vel[0] *= scale
            a.vel[1] *= scale
        a.pos[0] = min(max(a.pos[0] + a.vel[0], -config.half_extent), config.half_extent)
        a.pos[1] = min(max(a.pos[1] + a.vel[1], -config.half_extent), config.half_extent)
        # drag applies after integration: a NoOp step advances the position
        # by exactly the stored velocity
        a.vel[0] *= config.drag
        a.vel[1] *= config.drag

    # Simultaneous tag resolution against pre-resolution tagged flags:
    # mutual tags both land, and a tag this step never shields a teammate.
    # Only successful tags start the cooldown; misses are already
    # self-penalizing and must not couple into hidden state.
    info = StepInfo()
    for i in tag_attempts:
        target = _eligible_tag_target(nxt, i, config)
        if target is None:
            info.misses.append(i)
        else:
            info.tags.append((i, target))
            nxt.agents[i].cooldown = config.tag_cooldown
    for _, target in info.tags:
        if not nxt.agents[target].tagged:
            info.newly_tagged.append(target)
        nxt.agents[target].tagged = True
        nxt.agents[target].vel[:] = 0.0

    nxt.t = state.t + 1
    nxt.outcome = win_check(nxt, config)
    info.attackers_won = nxt.outcome is Outcome.ATTACKERS_WIN
    info.defenders_won = nxt.outcome is Outcome.DEFENDERS_WIN

    rewards = np.zeros(len(nxt.agents), dtype=np.float64)
    for i in defender_indices(config):
        rewards[i] = reward(state, nxt, info, i, config)
    return nxt, rewards, info


# Observation layout, per observing agent (all values float64):
#   [0:2]  own position / half_extent
#   [2:4]  own heading unit vector (cos, sin)
#   [4:6]  own velocity in the ego frame (forward, lateral)
# then, for every other agent in index order (6 features each):
#   [+0:+2] relative position in the ego frame / half_extent (forward, lateral)
#   [+2:+4] relative velocity in the ego frame
#   [+4]    relative heading, wrapped to [-pi, pi)
#   [+5]    tagged flag (0.0 or 1.0)

OWN_FEATURES = 6
PER_OTHER_FEATURES = 6


def observation_size(n_per_team: int) -> int:
    return OWN_FEATURES + PER_OTHER_FEATURES * (2 * n_per_team - 1)


def observe(state: WorldState, agent: int, config: ArenaConfig) -> np.ndarray:
    """Ego-frame feature vector for one agent (layout documented above)."""
    a = state.agents[agent]
    he = config.half_extent
    out = np.empty(observation_size(config.n_per_team), dtype=np.float64)
    out[0] = a.pos[0] / he
    out[1] = a.pos[1] / he
    out[2] = a.hx
    out[3] = a.hy
    out[4] = a.vel[0] * a.hx + a.vel[1] * a.hy
    out[5] = a.vel[1] * a.hx - a.vel[0] * a.hy
    o = OWN_FEATURES
    for idx, b in enumerate(state.agents):
        if idx == agent:
            continue
        dx = b.pos[0] - a.pos[0]
        dy = b.pos[1] - a.pos[1]
        out[o + 0] = (dx * a.hx + dy * a.hy) / he
        out[o + 1] = (dy * a.hx - dx * a.hy) / he
        dvx = b.vel[0] - a.vel[0]
        dvy = b.vel[1] - a.vel[1]
        out[o + 2] = dvx * a.hx + dvy * a.hy
        out[o + 3] = dvy * a.hx - dvx * a.hy
        out[o + 4] = wrap_angle(b.heading - a.heading)
        out[o + 5] = 1.0 if b.tagged else 0.0
        o += PER_OTHER_FEATURES
    return out


def snapshot_agent(a: AgentState) -> dict:
    """JSON-ready snapshot of one agent."""
    return {
        "pos": [a.pos[0], a.pos[1]],
        "vel": [a.vel[0], a.vel[1]],
        "heading": a.heading,
        "hx": a.hx,
        "hy": a.hy,
        "tagged": a.tagged,
        "team": "attacker" if a.team == Team.ATTACKER else "defender",
        "cooldown": a.cooldown,
    }


def snapshot_state(state: WorldState) -> dict:
    """JSON-ready snapshot of the world (rng excluded)."""
    return {
        "t": state.t,
        "outcome": state.outcome.value,
        "agents": [snapshot_agent(a) for a in state.agents],
    }
