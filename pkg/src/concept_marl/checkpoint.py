"""Checkpoint archive: a flat named-tensor .npz plus a JSON metadata entry.

Array keys are namespaced (``param/``, ``adam_m/``, ``adam_v/``,
``whiten/``); everything scalar lives in the ``__meta__`` JSON string.
Saving and re-loading reproduces training bit-identically on the same
platform: parameters, optimizer moments, whitening statistics, schedule
position and the seeding key are all captured.
"""

from __future__ import annotations

import json
import tempfile
from pathlib import Path

import numpy as np

from .config import RunConfig
from .nn import AdamState
from .policy import ConceptPolicy, PolicyConfig

FORMAT_VERSION = 1


class CheckpointError(Exception):
    pass


def save_checkpoint(
    path: str | Path,
    policy: ConceptPolicy,
    adam: AdamState | None = None,
    run_config: RunConfig | None = None,
    trainer_state: dict | None = None,
) -> None:
    """Write an atomic checkpoint archive."""
    path = Path(path)
    arrays: dict[str, np.ndarray] = {}
    for k, v in policy.params.items():
        arrays[f"param/{k}"] = v
    arrays["whiten/running_mean"] = policy.whitening.running_mean
    arrays["whiten/running_whitener"] = policy.whitening.running_whitener
    meta = {
        "version": FORMAT_VERSION,
        "policy_config": policy.config.to_json(),
        "run_config": run_config.to_json() if run_config else None,
        "config_fingerprint": run_config.fingerprint() if run_config else None,
        "trainer_state": trainer_state or {},
        "adam": None,
    }
    if adam is not None:
        meta["adam"] = {"step": adam.step, "beta1": adam.beta1, "beta2": adam.beta2, "eps": adam.eps}
        for k, v in adam.m.items():
            arrays[f"adam_m/{k}"] = v
        for k, v in adam.v.items():
            arrays[f"adam_v/{k}"] = v
    path.parent.mkdir(parents=True, exist_ok=True)
    with tempfile.NamedTemporaryFile(dir=path.parent, suffix=".tmp", delete=False) as tmp:
        np.savez(tmp, __meta__=np.array(json.dumps(meta)), **arrays)
        tmp_path = Path(tmp.name)
    tmp_path.replace(path)


def load_checkpoint(path: str | Path) -> tuple[ConceptPolicy, AdamState | None, dict]:
    """Load a checkpoint; returns (policy, adam or None, metadata dict).

    The metadata dict carries ``run_config`` (raw JSON), ``trainer_state``
    and ``config_fingerprint``.
    """
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"no such checkpoint: {path}")
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["__meta__"]))
        if meta.get("version") != FORMAT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {meta.get('version')}")
        config = PolicyConfig.from_json(meta["policy_config"])
        policy = ConceptPolicy(config, seed=0)
        for k in policy.params:
            policy.params[k] = data[f"param/{k}"].copy()
        policy.whitening.running_mean = data["whiten/running_mean"].copy()
        policy.whitening.running_whitener = data["whiten/running_whitener"].copy()
        adam = None
        if meta["adam"] is not None:
            adam = AdamState(
                m={k: data[f"adam_m/{k}"].copy() for k in policy.params},
                v={k: data[f"adam_v/{k}"].copy() for k in policy.params},
                step=meta["adam"]["step"],
                beta1=meta["adam"]["beta1"],
                beta2=meta["adam"]["beta2"],
                eps=meta["adam"]["eps"],
            )
    return policy, adam, meta
