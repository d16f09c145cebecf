"""Training objectives: focal + MSE concept loss, GAE, and the clipped
PPO surrogate with entropy bonus.

Everything here minimizes a scalar total; the policy-gradient term is the
negated surrogate, so minimizing the total maximizes the usual clipped
objective. Analytic gradient helpers are provided for the hand-written
backward pass.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .concepts import ConceptKind, ConceptSchema
from .env import UsageError
from .nn import NumericError, log_softmax_rows, softmax_rows

LOG_CLAMP = 1e-12


@dataclass
class LossConfig:
    """Config section [loss]."""

    gamma: float = 0.99
    lam: float = 0.95
    clip_eps: float = 0.2
    value_coeff: float = 0.5
    concept_coeff: float = 10.0
    focal_gamma: float = 2.0

    def __post_init__(self):
        if not (0.0 <= self.gamma <= 1.0 and 0.0 <= self.lam <= 1.0):
            raise UsageError("gamma and lambda must lie in [0, 1]")
        if self.clip_eps <= 0:
            raise UsageError("clip epsilon must be positive")


@dataclass
class LossBreakdown:
    """Scalar terms of one optimization step."""

    policy_loss: float
    value_loss: float
    entropy: float
    concept_loss: float
    per_concept: dict[str, float] = field(default_factory=dict)
    total: float = 0.0

    def to_json(self) -> dict:
        return {
            "policy_loss": self.policy_loss,
            "value_loss": self.value_loss,
            "entropy": self.entropy,
            "concept_loss": self.concept_loss,
            "per_concept": dict(self.per_concept),
            "total": self.total,
        }


def focal_loss(probs: np.ndarray, target: int, gamma_f: float) -> float:
    """-(1 - p_t)^gamma * log(p_t) for one simplex vector."""
    if not (0 <= target < probs.shape[-1]):
        raise UsageError("focal loss target out of range")
    p = max(float(probs[target]), LOG_CLAMP)
    return -((1.0 - p) ** gamma_f) * np.log(p)


def _focal_terms(p: np.ndarray, gamma_f: float) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized focal loss and d(loss)/dp for target probabilities p."""
    pc = np.maximum(p, LOG_CLAMP)
    one_minus = 1.0 - pc
    loss = -(one_minus**gamma_f) * np.log(pc)
    grad = -(one_minus**gamma_f) / pc
    if gamma_f != 0.0:
        grad = grad + gamma_f * one_minus ** (gamma_f - 1.0) * np.log(pc)
    return loss, grad


def concept_loss(
    predicted: np.ndarray,
    truth: np.ndarray,
    schema: ConceptSchema,
    gamma_f: float,
) -> tuple[float, dict[str, float], np.ndarray]:
    """Concept objective over a batch: focal loss per discrete group, squared
    error per continuous node, summed across concepts and averaged over the
    batch. Returns (total, per-concept breakdown, gradient at predictions).
    """
    if predicted.shape != truth.shape or predicted.shape[-1] != schema.j:
        raise UsageError("prediction/truth shapes do not match the schema")
    n = predicted.shape[0]
    grad = np.zeros_like(predicted)
    per: dict[str, float] = {}
    total = 0.0
    for spec in schema.specs:
        start, end = schema.offsets[spec.name]
        if spec.kind == ConceptKind.DISCRETE_GROUP:
            loss_c = 0.0
            for m in range(spec.multiplicity):
                s = start + m * spec.group_size
                e = s + spec.group_size
                targets = truth[:, s:e].argmax(axis=1)
                p_t = predicted[np.arange(n), s + targets]
                losses, grads = _focal_terms(p_t, gamma_f)
                loss_c += float(losses.mean())
                grad[np.arange(n), s + targets] += grads / n
        else:
            diff = predicted[:, start:end] - truth[:, start:end]
            loss_c = float((diff * diff).sum(axis=1).mean())
            grad[:, start:end] += 2.0 * diff / n
        per[spec.name] = loss_c
        total += loss_c
    return total, per, grad


def gae_advantages(
    rewards: np.ndarray,
    values: np.ndarray,
    dones: np.ndarray,
    gamma: float,
    lam: float,
    bootstrap_value: float = 0.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Generalized advantage estimation over one stream.

    ``dones[t]`` marks an episode end at step t: no bootstrapping across
    it. The final step bootstraps with ``bootstrap_value`` unless done.
    Returns (advantages, returns) with returns = advantages + values.
    """
    T = len(rewards)
    if not (len(values) == len(dones) == T):
        raise UsageError("rewards/values/dones length mismatch")
    adv = np.zeros(T)
    last = 0.0
    for t in range(T - 1, -1, -1):
        nonterminal = 0.0 if dones[t] else 1.0
        next_value = bootstrap_value if t == T - 1 else values[t + 1]
        delta = rewards[t] + gamma * next_value * nonterminal - values[t]
        last = delta + gamma * lam * nonterminal * last
        adv[t] = last
    return adv, adv + values


def normalize_advantages(adv: np.ndarray) -> np.ndarray:
    """Zero-mean unit-std normalization (used per minibatch)."""
    std = adv.std()
    return (adv - adv.mean()) / (std + 1e-8)


def entropy_of_logits(logits: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean categorical entropy and its gradient w.r.t. the logits."""
    p = softmax_rows(logits)
    logp = log_softmax_rows(logits)
    h_rows = -(p * logp).sum(axis=-1)
    n = logits.shape[0]
    g = -p * (logp + h_rows[:, None]) / n
    return float(h_rows.mean()), g


def logprob_grad_logits(logits: np.ndarray, actions: np.ndarray, g_logp: np.ndarray) -> np.ndarray:
    """Chain d(objective)/d(logp of chosen action) back to the logits."""
    p = softmax_rows(logits)
    g = -p * g_logp[:, None]
    g[np.arange(len(actions)), actions] += g_logp
    return g


def ppo_objective(
    logp_new: np.ndarray,
    logp_old: np.ndarray,
    advantages: np.ndarray,
    values_new: np.ndarray,
    returns: np.ndarray,
    entropy: float,
    concept_total: float,
    per_concept: dict[str, float],
    config: LossConfig,
    entropy_coeff: float,
) -> tuple[LossBreakdown, np.ndarray, np.ndarray]:
    """Clipped-surrogate PPO total (minimized) plus analytic gradients.

    Returns (breakdown, d/d logp_new, d/d values_new). The concept-loss
    gradient is produced by concept_loss and scaled by the caller with
    ``config.concept_coeff``.
    """
    for arr in (logp_new, logp_old, advantages, values_new, returns):
        if not np.all(np.isfinite(arr)):
            raise NumericError("non-finite input to the objective")
    n = len(logp_new)
    ratio = np.exp(logp_new - logp_old)
    clipped = np.clip(ratio, 1.0 - config.clip_eps, 1.0 + config.clip_eps)
    surrogate = np.minimum(ratio * advantages, clipped * advantages)
    policy_loss = -float(surrogate.mean())
    value_err = values_new - returns
    value_loss = float((value_err * value_err).mean())
    total = (
        policy_loss
        + config.value_coeff * value_loss
        - entropy_coeff * entropy
        + config.concept_coeff * concept_total
    )
    breakdown = LossBreakdown(
        policy_loss=policy_loss,
        value_loss=value_loss,
        entropy=entropy,
        concept_loss=concept_total,
        per_concept=per_concept,
        total=total,
    )
    unclipped_active = ratio * advantages <= clipped * advantages
    g_logp = np.where(unclipped_active, -advantages * ratio / n, 0.0)
    g_values = config.value_coeff * 2.0 * value_err / n
    return breakdown, g_logp, g_values
