"""Concept schema and the oracle producing ground-truth concept vectors.

Concepts, in schema order:
  range        one binary node per opponent: taggable now (distance and
               facing thresholds, cooldown ignored); trained as a continuous
               0/1 target, measured by thresholded accuracy
  strategy     one 3-way discrete group: the attacking team's strategy
  target       one 2-node (targeted / not-targeted) discrete group per
               opponent: which opponent this agent is pursuing
  orientation  one continuous node per opponent: signed relative bearing
  position     one continuous node per opponent: relative distance, scaled
               by the arena diagonal

Hard schemas carry all five concepts; soft schemas only the first three.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .env import ArenaConfig, UsageError, WorldState, tag_check, wrap_angle
from .strategies import StrategyKind


class ConceptKind(Enum):
    DISCRETE_GROUP = "discrete_group"
    CONTINUOUS = "continuous"


class SchemaMode(Enum):
    HARD = "hard"
    SOFT = "soft"


@dataclass(frozen=True)
class ConceptSpec:
    """Layout of one named concept."""

    name: str
    kind: ConceptKind
    multiplicity: int
    group_size: int = 1
    binary: bool = False  # continuous nodes with 0/1 targets, threshold accuracy

    def __post_init__(self):
        if self.kind == ConceptKind.DISCRETE_GROUP and self.group_size < 2:
            raise ValueError("discrete groups need group_size >= 2")

    @property
    def node_count(self) -> int:
        if self.kind == ConceptKind.DISCRETE_GROUP:
            return self.multiplicity * self.group_size
        return self.multiplicity


@dataclass(frozen=True)
class ConceptSchema:
    """Ordered concept specs with resolved index ranges."""

    specs: tuple[ConceptSpec, ...]
    mode: SchemaMode
    n_opponents: int
    offsets: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        o = 0
        offsets = {}
        for spec in self.specs:
            offsets[spec.name] = (o, o + spec.node_count)
            o += spec.node_count
        object.__setattr__(self, "offsets", offsets)

    @property
    def j(self) -> int:
        return sum(s.node_count for s in self.specs)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(s.name for s in self.specs)

    def slice_of(self, name: str) -> slice:
        start, end = self.offsets[name]
        return slice(start, end)

    def discrete_group_ranges(self) -> list[tuple[int, int]]:
        """Index ranges of every discrete group (for group-wise softmax)."""
        ranges = []
        for spec in self.specs:
            if spec.kind != ConceptKind.DISCRETE_GROUP:
                continue
            start, _ = self.offsets[spec.name]
            for m in range(spec.multiplicity):
                ranges.append((start + m * spec.group_size, start + (m + 1) * spec.group_size))
        return ranges

    def to_json(self) -> dict:
        return {
            "version": 1,
            "mode": self.mode.value,
            "n_opponents": self.n_opponents,
            "specs": [
                {
                    "name": s.name,
                    "kind": s.kind.value,
                    "multiplicity": s.multiplicity,
                    "group_size": s.group_size,
                    "binary": s.binary,
                }
                for s in self.specs
            ],
        }

    @staticmethod
    def from_json(data: dict) -> "ConceptSchema":
        specs = tuple(
            ConceptSpec(
                name=d["name"],
                kind=ConceptKind(d["kind"]),
                multiplicity=d["multiplicity"],
                group_size=d["group_size"],
                binary=d["binary"],
            )
            for d in data["specs"]
        )
        return ConceptSchema(
            specs=specs, mode=SchemaMode(data["mode"]), n_opponents=data["n_opponents"]
        )

    def fingerprint(self) -> str:
        return hashlib.sha256(
            json.dumps(self.to_json(), sort_keys=True).encode()
        ).hexdigest()[:16]


STRATEGY_ORDER = (StrategyKind.LEFT, StrategyKind.RIGHT, StrategyKind.RANDOM)
TARGETED, NOT_TARGETED = 0, 1  # node order inside each target pair


def build_schema(n_opponents: int, mode: SchemaMode) -> ConceptSchema:
    """Schema for a scenario with ``n_opponents`` agents on the other team."""
    if n_opponents < 1:
        raise ValueError("n_opponents must be >= 1")
    specs = [
        ConceptSpec("range", ConceptKind.CONTINUOUS, n_opponents, binary=True),
        ConceptSpec("strategy", ConceptKind.DISCRETE_GROUP, 1, group_size=3),
        ConceptSpec("target", ConceptKind.DISCRETE_GROUP, n_opponents, group_size=2),
    ]
    if mode == SchemaMode.HARD:
        specs.append(ConceptSpec("orientation", ConceptKind.CONTINUOUS, n_opponents))
        specs.append(ConceptSpec("position", ConceptKind.CONTINUOUS, n_opponents))
    return ConceptSchema(specs=tuple(specs), mode=mode, n_opponents=n_opponents)


def schema_from_subset(n_opponents: int, names: set[str] | list[str]) -> ConceptSchema:
    """Ablation schema: the hard schema restricted to the named concepts,
    preserving the canonical order."""
    full = build_schema(n_opponents, SchemaMode.HARD)
    unknown = set(names) - set(full.names)
    if unknown:
        raise ValueError(f"unknown concepts: {sorted(unknown)}")
    specs = tuple(s for s in full.specs if s.name in set(names))
    if not specs:
        raise ValueError("concept subset must not be empty")
    return ConceptSchema(specs=specs, mode=SchemaMode.HARD, n_opponents=n_opponents)


@dataclass
class ConceptVector:
    """Length-j values bound to their schema."""

    values: np.ndarray
    schema: ConceptSchema

    def __post_init__(self):
        if self.values.shape != (self.schema.j,):
            raise ValueError("concept vector length does not match schema")


@dataclass(frozen=True)
class TargetMemory:
    """Sticky pursuit target: one opponent index, or None when all are tagged."""

    target: int | None


def _opponent_indices(state: WorldState, agent: int) -> list[int]:
    team = state.agents[agent].team
    return [i for i, a in enumerate(state.agents) if a.team != team]


def _nearest_untagged_opponent(state: WorldState, agent: int) -> int | None:
    a = state.agents[agent]
    best, best_d = None, math.inf
    for rank, idx in enumerate(_opponent_indices(state, agent)):
        b = state.agents[idx]
        if b.tagged:
            continue
        d = math.hypot(b.pos[0] - a.pos[0], b.pos[1] - a.pos[1])
        if d < best_d:  # strict: ties resolve to the lowest index
            best_d, best = d, rank
    return best


def init_target_memory(state: WorldState, agent: int) -> TargetMemory:
    """Episode-start target: the closest untagged opponent."""
    return TargetMemory(target=_nearest_untagged_opponent(state, agent))


def update_target_memory(memory: TargetMemory, state: WorldState, agent: int) -> TargetMemory:
    """Re-select only when the current target has been tagged (or is unset)."""
    opponents = _opponent_indices(state, agent)
    if memory.target is not None and not state.agents[opponents[memory.target]].tagged:
        return memory
    return TargetMemory(target=_nearest_untagged_opponent(state, agent))


def oracle_eval(
    state: WorldState,
    agent: int,
    schema: ConceptSchema,
    memory: TargetMemory,
    strategy: StrategyKind,
    config: ArenaConfig,
) -> np.ndarray:
    """Ground-truth concept vector for one untagged defender."""
    a = state.agents[agent]
    if a.tagged:
        raise UsageError("oracle_eval requires an untagged agent")
    opponents = _opponent_indices(state, agent)
    if len(opponents) != schema.n_opponents:
        raise UsageError("schema opponent count does not match the state")
    v = np.zeros(schema.j, dtype=np.float64)
    names = schema.offsets

    if "range" in names:
        sl = schema.slice_of("range")
        for k, idx in enumerate(opponents):
            v[sl.start + k] = (
                1.0 if tag_check(state, agent, idx, config, ignore_cooldown=True) else 0.0
            )

    if "strategy" in names:
        sl = schema.slice_of("strategy")
        v[sl.start + STRATEGY_ORDER.index(strategy)] = 1.0

    if "target" in names:
        sl = schema.slice_of("target")
        for k in range(schema.n_opponents):
            pair = sl.start + 2 * k
            if memory.target == k:
                v[pair + TARGETED] = 1.0
            else:
                v[pair + NOT_TARGETED] = 1.0

    if "orientation" in names or "position" in names:
        diag = 2.0 * math.sqrt(2.0) * config.half_extent
        for k, idx in enumerate(opponents):
            b = state.agents[idx]
            dx = b.pos[0] - a.pos[0]
            dy = b.pos[1] - a.pos[1]
            fwd = dx * a.hx + dy * a.hy
            lat = dy * a.hx - dx * a.hy
            if "orientation" in names:
                v[schema.slice_of("orientation").start + k] = wrap_angle(math.atan2(lat, fwd))
            if "position" in names:
                v[schema.slice_of("position").start + k] = math.hypot(dx, dy) / diag
    return v
