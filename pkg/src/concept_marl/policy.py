"""Concept policy model.

Architecture: observation -> two dense ReLU layers -> LSTM -> parallel
linear concept (j) and residual (k) heads -> whitening over the
concatenated j+k bottleneck -> group-wise softmax on discrete concept
slices -> policy and value heads (two dense ReLU layers each).

Interventions overwrite concept activations (softmax level for discrete
groups) after whitening and before the heads, so corrected values flow
into action selection. Hard models (k=0) act on concepts alone; the base
model (j=0) has no concept slice at all.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .concepts import ConceptSchema, SchemaMode, build_schema
from .env import UsageError
from .whitening import WhiteningState, iternorm_backward, iternorm_forward

RESIDUAL_BY_SCENARIO = {2: 23, 3: 52, 5: 78}
BASE_RESIDUAL = 128


@dataclass
class PolicyConfig:
    """Shapes and hyperparameters of one concept policy model."""

    obs_dim: int
    n_actions: int
    schema: ConceptSchema | None
    k: int
    hidden: int = 128
    whiten_t: int = 2
    whiten_momentum: float = 0.1
    whiten_eps: float = 1e-5

    @property
    def j(self) -> int:
        return self.schema.j if self.schema is not None else 0

    @property
    def bottleneck(self) -> int:
        return self.j + self.k

    @property
    def kind(self) -> str:
        if self.j == 0:
            return "base"
        return "hard" if self.k == 0 else "soft"

    def __post_init__(self):
        if self.j == 0 and self.k == 0:
            raise UsageError("bottleneck must be non-empty (j + k >= 1)")

    def to_json(self) -> dict:
        return {
            "obs_dim": self.obs_dim,
            "n_actions": self.n_actions,
            "schema": self.schema.to_json() if self.schema is not None else None,
            "k": self.k,
            "hidden": self.hidden,
            "whiten_t": self.whiten_t,
            "whiten_momentum": self.whiten_momentum,
            "whiten_eps": self.whiten_eps,
        }

    @staticmethod
    def from_json(data: dict) -> "PolicyConfig":
        schema = ConceptSchema.from_json(data["schema"]) if data["schema"] else None
        return PolicyConfig(
            obs_dim=data["obs_dim"],
            n_actions=data["n_actions"],
            schema=schema,
            k=data["k"],
            hidden=data["hidden"],
            whiten_t=data["whiten_t"],
            whiten_momentum=data["whiten_momentum"],
            whiten_eps=data["whiten_eps"],
        )


def preset_config(n_per_team: int, kind: str, obs_dim: int, n_actions: int) -> PolicyConfig:
    """Scenario presets: hard (k=0), soft (published residual sizes), base."""
    if kind == "hard":
        schema, k = build_schema(n_per_team, SchemaMode.HARD), 0
    elif kind == "soft":
        if n_per_team not in RESIDUAL_BY_SCENARIO:
            raise UsageError(f"no soft preset for {n_per_team}v{n_per_team}")
        schema, k = build_schema(n_per_team, SchemaMode.SOFT), RESIDUAL_BY_SCENARIO[n_per_team]
    elif kind == "base":
        schema, k = None, BASE_RESIDUAL
    else:
        raise UsageError(f"unknown model kind {kind!r}")
    return PolicyConfig(obs_dim=obs_dim, n_actions=n_actions, schema=schema, k=k)


@dataclass
class Intervention:
    """Concept overwrite: where ``mask`` is set, ``values`` replace the
    model's concept activations. Discrete groups must be masked whole."""

    mask: np.ndarray
    values: np.ndarray
    provenance: str = "manual"

    def validate(self, schema: ConceptSchema) -> None:
        if self.mask.shape != (schema.j,) or self.values.shape != (schema.j,):
            raise UsageError("intervention length does not match schema")
        for start, end in schema.discrete_group_ranges():
            group = self.mask[start:end]
            if group.any() and not group.all():
                raise UsageError("discrete groups must be intervened as whole groups")

    def apply(self, concepts: np.ndarray) -> np.ndarray:
        out = concepts.copy()
        out[..., self.mask] = self.values[self.mask]
        return out

    def to_json(self) -> dict:
        return {
            "mask": self.mask.astype(int).tolist(),
            "values": self.values.tolist(),
            "provenance": self.provenance,
        }

    @staticmethod
    def from_json(data: dict) -> "Intervention":
        return Intervention(
            mask=np.asarray(data["mask"], dtype=bool),
            values=np.asarray(data["values"], dtype=np.float64),
            provenance=data.get("provenance", "manual"),
        )


def apply_oracle_intervention(
    output_concepts: np.ndarray,
    truth: np.ndarray,
    subset: set[str] | list[str],
    schema: ConceptSchema,
) -> Intervention:
    """Intervention overwriting the named concepts with oracle truth."""
    mask = np.zeros(schema.j, dtype=bool)
    for name in subset:
        if name not in schema.offsets:
            raise UsageError(f"unknown concept {name!r}")
        mask[schema.slice_of(name)] = True
    iv = Intervention(mask=mask, values=truth.astype(np.float64).copy(), provenance="oracle")
    iv.validate(schema)
    return iv


@dataclass
class PolicyOutput:
    """Forward result for a batch of agents (one step).

    ``concepts`` are the effective activations that fed the heads (after
    any intervention); ``raw_concepts`` are the model's own predictions.
    """

    action_logits: np.ndarray
    value: np.ndarray
    concepts: np.ndarray
    raw_concepts: np.ndarray
    residual: np.ndarray
    hidden: tuple[np.ndarray, np.ndarray]


class ConceptPolicy:
    """Parameters plus whitening state; forward passes for acting
    (single step, running whitening statistics) and training (sequences,
    batch whitening statistics, full analytic backward)."""

    def __init__(self, config: PolicyConfig, seed: int = 0):
        self.config = config
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
        h = config.hidden
        p: dict[str, np.ndarray] = {}
        p["enc1_w"] = nn.fan_in_uniform((config.obs_dim, h), rng)
        p["enc1_b"] = np.zeros(h)
        p["enc2_w"] = nn.fan_in_uniform((h, h), rng)
        p["enc2_b"] = np.zeros(h)
        lstm = nn.lstm_init(h, h, rng)
        p["lstm_wx"], p["lstm_wh"], p["lstm_b"] = lstm["wx"], lstm["wh"], lstm["b"]
        if config.j > 0:
            p["concept_w"] = nn.fan_in_uniform((h, config.j), rng)
            p["concept_b"] = np.zeros(config.j)
        if config.k > 0:
            p["residual_w"] = nn.fan_in_uniform((h, config.k), rng)
            p["residual_b"] = np.zeros(config.k)
        for head in ("pol", "val"):
            p[f"{head}1_w"] = nn.fan_in_uniform((config.bottleneck, h), rng)
            p[f"{head}1_b"] = np.zeros(h)
            p[f"{head}2_w"] = nn.fan_in_uniform((h, h), rng)
            p[f"{head}2_b"] = np.zeros(h)
        p["pol3_w"] = nn.fan_in_uniform((h, config.n_actions), rng)
        p["pol3_b"] = np.zeros(config.n_actions)
        p["val3_w"] = nn.fan_in_uniform((h, 1), rng)
        p["val3_b"] = np.zeros(1)
        self.params = p
        self.whitening = WhiteningState(
            dim=config.bottleneck,
            T=config.whiten_t,
            momentum=config.whiten_momentum,
            eps=config.whiten_eps,
        )
        self._group_ranges = (
            config.schema.discrete_group_ranges() if config.schema is not None else []
        )

    # -- acting ------------------------------------------------------------

    def initial_hidden(self, batch: int) -> tuple[np.ndarray, np.ndarray]:
        h = self.config.hidden
        return np.zeros((batch, h)), np.zeros((batch, h))

    def _bottleneck_pre(self, core: np.ndarray) -> np.ndarray:
        parts = []
        if self.config.j > 0:
            parts.append(core @ self.params["concept_w"] + self.params["concept_b"])
        if self.config.k > 0:
            parts.append(core @ self.params["residual_w"] + self.params["residual_b"])
        return np.concatenate(parts, axis=-1)

    def step(
        self,
        obs: np.ndarray,
        hidden: tuple[np.ndarray, np.ndarray],
        intervention: "Intervention | list[Intervention | None] | None" = None,
        whiten_mode: str = "infer",
    ) -> PolicyOutput:
        """One decision step for a batch of agents.

        ``intervention`` may be one Intervention applied to every row or a
        per-row list (None entries leave that row untouched).
        """
        if obs.ndim != 2 or obs.shape[1] != self.config.obs_dim:
            raise UsageError(f"expected (b, {self.config.obs_dim}) observations, got {obs.shape}")
        j = self.config.j
        e1, _ = nn.fc_forward(obs, self.params["enc1_w"], self.params["enc1_b"], relu=True)
        e2, _ = nn.fc_forward(e1, self.params["enc2_w"], self.params["enc2_b"], relu=True)
        h, c, _ = nn.lstm_step_forward(
            e2, hidden[0], hidden[1], self.params["lstm_wx"], self.params["lstm_wh"], self.params["lstm_b"]
        )
        pre = self._bottleneck_pre(h)
        white, _, _ = iternorm_forward(pre, self.whitening, mode=whiten_mode)
        raw_concepts = white[:, :j]
        if self._group_ranges:
            raw_concepts, _ = nn.groupwise_softmax(raw_concepts, self._group_ranges)
        concepts = raw_concepts
        if intervention is not None:
            if self.config.schema is None:
                raise UsageError("cannot intervene on a model without concepts")
            if isinstance(intervention, Intervention):
                intervention.validate(self.config.schema)
                concepts = intervention.apply(raw_concepts)
            else:
                if len(intervention) != obs.shape[0]:
                    raise UsageError("one intervention entry per batch row required")
                concepts = raw_concepts.copy()
                for r, iv in enumerate(intervention):
                    if iv is None:
                        continue
                    iv.validate(self.config.schema)
                    concepts[r] = iv.apply(raw_concepts[r])
        z = np.concatenate([concepts, white[:, j:]], axis=-1)
        p1, _ = nn.fc_forward(z, self.params["pol1_w"], self.params["pol1_b"], relu=True)
        p2, _ = nn.fc_forward(p1, self.params["pol2_w"], self.params["pol2_b"], relu=True)
        logits, _ = nn.fc_forward(p2, self.params["pol3_w"], self.params["pol3_b"])
        v1, _ = nn.fc_forward(z, self.params["val1_w"], self.params["val1_b"], relu=True)
        v2, _ = nn.fc_forward(v1, self.params["val2_w"], self.params["val2_b"], relu=True)
        value, _ = nn.fc_forward(v2, self.params["val3_w"], self.params["val3_b"])
        return PolicyOutput(
            action_logits=logits,
            value=value[:, 0],
            concepts=concepts,
            raw_concepts=raw_concepts,
            residual=white[:, j:],
            hidden=(h, c),
        )

    # -- training ----------------------------------------------------------

    def forward_train(
        self,
        xs: np.ndarray,
        h0: np.ndarray,
        c0: np.ndarray,
        mask: np.ndarray,
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray, dict]:
        """Sequence forward with train-mode whitening over real rows.

        ``xs`` is (T, B, obs); ``mask`` (T, B) marks real (non-padded)
        steps. Heads and whitening statistics see only real rows. Returns
        (logits, values, concepts) for real rows in (t-major, then batch)
        order, plus the backward cache.
        """
        T, B, _ = xs.shape
        j = self.config.j
        flat = xs.reshape(T * B, -1)
        e1, c_e1 = nn.fc_forward(flat, self.params["enc1_w"], self.params["enc1_b"], relu=True)
        e2, c_e2 = nn.fc_forward(e1, self.params["enc2_w"], self.params["enc2_b"], relu=True)
        lstm_params = {"wx": self.params["lstm_wx"], "wh": self.params["lstm_wh"], "b": self.params["lstm_b"]}
        hs, _, _, lstm_caches = nn.lstm_seq_forward(
            e2.reshape(T, B, -1), h0, c0, lstm_params, mask=mask
        )
        rows = mask.reshape(-1).astype(bool)
        core = hs.reshape(T * B, -1)[rows]
        pre = self._bottleneck_pre(core)
        white, _, c_white = iternorm_forward(pre, self.whitening, mode="train")
        concepts = white[:, :j]
        c_soft = None
        if self._group_ranges:
            concepts, c_soft = nn.groupwise_softmax(concepts, self._group_ranges)
        z = np.concatenate([concepts, white[:, j:]], axis=-1)
        p1, c_p1 = nn.fc_forward(z, self.params["pol1_w"], self.params["pol1_b"], relu=True)
        p2, c_p2 = nn.fc_forward(p1, self.params["pol2_w"], self.params["pol2_b"], relu=True)
        logits, c_p3 = nn.fc_forward(p2, self.params["pol3_w"], self.params["pol3_b"])
        v1, c_v1 = nn.fc_forward(z, self.params["val1_w"], self.params["val1_b"], relu=True)
        v2, c_v2 = nn.fc_forward(v1, self.params["val2_w"], self.params["val2_b"], relu=True)
        values, c_v3 = nn.fc_forward(v2, self.params["val3_w"], self.params["val3_b"])
        cache = {
            "T": T,
            "B": B,
            "rows": rows,
            "core": core,
            "mask": mask,
            "c_e1": c_e1,
            "c_e2": c_e2,
            "lstm_caches": lstm_caches,
            "c_white": c_white,
            "c_soft": c_soft,
            "c_p1": c_p1,
            "c_p2": c_p2,
            "c_p3": c_p3,
            "c_v1": c_v1,
            "c_v2": c_v2,
            "c_v3": c_v3,
        }
        return logits, values[:, 0], concepts, cache

    def backward_train(
        self,
        cache: dict,
        g_logits: np.ndarray,
        g_values: np.ndarray,
        g_concepts: np.ndarray | None,
    ) -> dict[str, np.ndarray]:
        """Exact gradients of the scalar objective w.r.t. all parameters.

        ``g_concepts`` is the objective gradient at the post-softmax,
        post-whitening concept activations (None when j=0).
        """
        j = self.config.j
        grads: dict[str, np.ndarray] = {}
        gp2, grads["pol3_w"], grads["pol3_b"] = nn.fc_backward(cache["c_p3"], g_logits)
        gp1, grads["pol2_w"], grads["pol2_b"] = nn.fc_backward(cache["c_p2"], gp2)
        gz_pol, grads["pol1_w"], grads["pol1_b"] = nn.fc_backward(cache["c_p1"], gp1)
        gv2, grads["val3_w"], grads["val3_b"] = nn.fc_backward(cache["c_v3"], g_values[:, None])
        gv1, grads["val2_w"], grads["val2_b"] = nn.fc_backward(cache["c_v2"], gv2)
        gz_val, grads["val1_w"], grads["val1_b"] = nn.fc_backward(cache["c_v1"], gv1)
        gz = gz_pol + gz_val
        g_conc = gz[:, :j].copy()
        if g_concepts is not None:
            g_conc += g_concepts
        if cache["c_soft"] is not None:
            g_conc = nn.groupwise_softmax_backward(cache["c_soft"], g_conc)
        g_white = np.concatenate([g_conc, gz[:, j:]], axis=-1)
        g_pre = iternorm_backward(cache["c_white"], g_white)
        core = cache["core"]
        g_core = np.zeros_like(core)
        if j > 0:
            g_core += g_pre[:, :j] @ self.params["concept_w"].T
            grads["concept_w"] = core.T @ g_pre[:, :j]
            grads["concept_b"] = g_pre[:, :j].sum(axis=0)
        if self.config.k > 0:
            g_core += g_pre[:, j:] @ self.params["residual_w"].T
            grads["residual_w"] = core.T @ g_pre[:, j:]
            grads["residual_b"] = g_pre[:, j:].sum(axis=0)
        T, B = cache["T"], cache["B"]
        hidden = self.config.hidden
        ghs = np.zeros((T * B, hidden))
        ghs[cache["rows"]] = g_core
        lstm_params = {"wx": self.params["lstm_wx"], "wh": self.params["lstm_wh"], "b": self.params["lstm_b"]}
        gxs, _, _, lstm_grads = nn.lstm_seq_backward(
            cache["lstm_caches"], ghs.reshape(T, B, hidden), lstm_params, mask=cache["mask"]
        )
        grads["lstm_wx"] = lstm_grads["wx"]
        grads["lstm_wh"] = lstm_grads["wh"]
        grads["lstm_b"] = lstm_grads["b"]
        ge1, grads["enc2_w"], grads["enc2_b"] = nn.fc_backward(cache["c_e2"], gxs.reshape(T * B, -1))
        _, grads["enc1_w"], grads["enc1_b"] = nn.fc_backward(cache["c_e1"], ge1)
        return grads


# -- action selection -------------------------------------------------------


def act(
    logits: np.ndarray, rng: np.random.Generator | None, mode: str = "sample"
) -> tuple[np.ndarray, np.ndarray]:
    """Select actions for a batch of logit rows.

    Sample mode draws from the categorical softmax distribution; greedy
    takes the argmax (ties resolve to the lowest index, and adding a
    constant to all logits never changes the choice). Returns
    (actions, logprobs).
    """
    if not np.all(np.isfinite(logits)):
        raise nn.NumericError("non-finite action logits")
    logp = nn.log_softmax_rows(logits)
    if mode == "greedy":
        actions = logits.argmax(axis=-1)
    elif mode == "sample":
        probs = np.exp(logp)
        u = rng.random((logits.shape[0], 1))
        cum = np.cumsum(probs, axis=-1)
        actions = np.minimum((u > cum).sum(axis=-1), logits.shape[-1] - 1)
    else:
        raise UsageError(f"unknown act mode {mode!r}")
    chosen_logp = np.take_along_axis(logp, actions[:, None], axis=-1)[:, 0]
    return actions, chosen_logp
