"""Run configuration: dataclass sections, INI loading, fingerprinting.

A run config file uses INI sections named after the subsystems:

    [env]        arena, kinematics, tagging, rewards   (ArenaConfig)
    [attackers]  scripted opponent distribution        (AttackerConfig)
    [loss]       GAE / PPO / concept loss coefficients (LossConfig)
    [whitening]  t, momentum, eps
    [policy]     kind (hard | soft | base), hidden
    [trainer]    batch shapes, schedules, budgets      (TrainerConfig)
    [shift]      sim-to-real proxy perturbations       (ShiftConfig)

Every key defaults to the dataclass default; unknown keys are rejected.
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
from dataclasses import dataclass, field, fields
from pathlib import Path

from .env import ArenaConfig, ConfigError
from .losses import LossConfig
from .strategies import AttackerConfig


@dataclass
class WhiteningSection:
    t: int = 2
    momentum: float = 0.1
    eps: float = 1e-5


@dataclass
class PolicySection:
    kind: str = "hard"  # hard | soft | base
    hidden: int = 128


@dataclass
class TrainerConfig:
    """Config section [trainer]; names mirror the training hyperparameters."""

    n_envs: int = 32
    batch_size: int = 10240
    minibatch_size: int = 1600
    seq_len: int = 50
    epochs: int = 4
    total_steps: int = 200_000
    lr_start: float = 1e-3
    lr_end: float = 1e-4
    entropy_start: float = 0.1
    entropy_end: float = 0.01
    schedule_horizon: int = 10_000_000
    max_grad_norm: float = 10.0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    eval_every: int = 0  # phases between evaluations (0: off)
    eval_episodes: int = 32
    checkpoint_every: int = 0  # phases between periodic checkpoints (0: final only)

    def __post_init__(self):
        if self.minibatch_size % self.seq_len != 0:
            raise ConfigError("minibatch_size must be a multiple of seq_len")
        if self.batch_size < self.minibatch_size:
            raise ConfigError("batch_size must be at least minibatch_size")


@dataclass
class ShiftConfig:
    """Sim-to-real proxy: dynamics scaling, observation noise, latency."""

    accel_scale: float = 1.0
    rot_scale: float = 1.0
    obs_noise: float = 0.0
    latency: int = 0

    def __post_init__(self):
        if self.accel_scale <= 0 or self.rot_scale <= 0:
            raise ConfigError("shift scale factors must be positive")
        if self.obs_noise < 0 or self.latency < 0:
            raise ConfigError("obs_noise and latency must be non-negative")

    @property
    def is_identity(self) -> bool:
        return (
            self.accel_scale == 1.0
            and self.rot_scale == 1.0
            and self.obs_noise == 0.0
            and self.latency == 0
        )


# Calibrated so that concept predictions degrade toward the regime reported
# for real-robot transfer (large orientation/strategy errors); milder
# settings leave the policy's own predictions too good for corrections to
# matter.
DEFAULT_SHIFT = ShiftConfig(accel_scale=0.7, rot_scale=0.6, obs_noise=0.6, latency=5)


@dataclass
class RunConfig:
    env: ArenaConfig = field(default_factory=ArenaConfig)
    attackers: AttackerConfig = field(default_factory=AttackerConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    whitening: WhiteningSection = field(default_factory=WhiteningSection)
    policy: PolicySection = field(default_factory=PolicySection)
    trainer: TrainerConfig = field(default_factory=TrainerConfig)
    shift: ShiftConfig = field(default_factory=ShiftConfig)

    def to_json(self) -> dict:
        out = {}
        for f in fields(self):
            section = getattr(self, f.name)
            out[f.name] = dataclasses.asdict(section)
        return out

    def fingerprint(self) -> str:
        return hashlib.sha256(
            json.dumps(self.to_json(), sort_keys=True).encode()
        ).hexdigest()[:16]

    # budget and logging cadence may change across a resume; everything
    # else must match bit-for-bit
    _RESUME_NEUTRAL = ("total_steps", "eval_every", "eval_episodes", "checkpoint_every")

    def resume_fingerprint(self) -> str:
        data = self.to_json()
        for key in self._RESUME_NEUTRAL:
            data["trainer"].pop(key, None)
        return hashlib.sha256(
            json.dumps(data, sort_keys=True).encode()
        ).hexdigest()[:16]

    @staticmethod
    def from_json(data: dict) -> "RunConfig":
        kwargs = {}
        for f in fields(RunConfig):
            if f.name not in data:
                continue
            cls = _SECTION_TYPES[f.name]
            section = data[f.name]
            coerced = {
                k: tuple(v) if isinstance(v, list) else v for k, v in section.items()
            }
            kwargs[f.name] = cls(**coerced)
        return RunConfig(**kwargs)


_SECTION_TYPES = {
    "env": ArenaConfig,
    "attackers": AttackerConfig,
    "loss": LossConfig,
    "whitening": WhiteningSection,
    "policy": PolicySection,
    "trainer": TrainerConfig,
    "shift": ShiftConfig,
}


def _parse_value(raw: str, ftype):
    raw = raw.strip()
    if ftype is int:
        return int(raw)
    if ftype is float:
        return float(raw)
    if ftype is bool:
        return raw.lower() in ("1", "true", "yes", "on")
    if ftype is str:
        return raw
    # tuple-typed fields: comma-separated floats
    return tuple(float(tok) for tok in raw.split(","))


def load_config(path: str | Path) -> RunConfig:
    """Parse an INI run config; missing sections/keys fall back to defaults."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    read = parser.read(path)
    if not read:
        raise ConfigError(f"config file not found: {path}")
    kwargs = {}
    for name, cls in _SECTION_TYPES.items():
        if not parser.has_section(name):
            continue
        by_name = {f.name: f for f in fields(cls)}
        values = {}
        for key, raw in parser.items(name):
            if key not in by_name:
                raise ConfigError(f"unknown key [{name}] {key}")
            ftype = by_name[key].type
            if isinstance(ftype, str):  # from __future__ annotations
                ftype = {"int": int, "float": float, "bool": bool, "str": str}.get(ftype, tuple)
            values[key] = _parse_value(raw, ftype)
        kwargs[name] = cls(**values)
    return RunConfig(**kwargs)
