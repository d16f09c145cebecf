"""Concept-error metrics and small statistics utilities.

Discrete concepts report an accuracy error (1 - accuracy); continuous
concepts report per-node mean squared error. Binary-flagged continuous
concepts (range bits) are thresholded at 0.5 and reported as accuracy
error, matching how they are trained (MSE to 0/1) and inspected.
"""

from __future__ import annotations

import math

import numpy as np

from .concepts import ConceptKind, ConceptSchema


def concept_error_metrics(
    preds: np.ndarray, truths: np.ndarray, schema: ConceptSchema
) -> dict[str, float]:
    """Point-estimate errors per named concept over a batch of rows."""
    out: dict[str, float] = {}
    for spec in schema.specs:
        start, end = schema.offsets[spec.name]
        p = preds[:, start:end]
        t = truths[:, start:end]
        if spec.kind == ConceptKind.DISCRETE_GROUP:
            if spec.multiplicity == 1:
                correct = p.argmax(axis=1) == t.argmax(axis=1)
            else:
                # one choice across groups: compare the argmax over each
                # group's first (positive-class) node
                gs = spec.group_size
                p_pos = p[:, ::gs] if gs > 1 else p
                t_pos = t[:, ::gs] if gs > 1 else t
                correct = p_pos.argmax(axis=1) == t_pos.argmax(axis=1)
            out[spec.name] = 1.0 - float(np.mean(correct))
        elif spec.binary:
            correct = (p > 0.5) == (t > 0.5)
            out[spec.name] = 1.0 - float(np.mean(correct))
        else:
            out[spec.name] = float(np.mean((p - t) ** 2))
    return out


def mean_and_standard_error(values) -> tuple[float, float]:
    """Sample mean and standard error of the mean."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        return 0.0, 0.0
    if arr.size == 1:
        return float(arr[0]), 0.0
    return float(arr.mean()), float(arr.std(ddof=1) / math.sqrt(arr.size))


def normal_ci95(values) -> tuple[float, float, float]:
    """(mean, lo, hi) 95% normal-approximation confidence interval."""
    mean, se = mean_and_standard_error(values)
    return mean, mean - 1.96 * se, mean + 1.96 * se


def fisher_exact_greater(a: int, b: int, c: int, d: int) -> float:
    """One-sided Fisher's exact test on the 2x2 table [[a, b], [c, d]].

    Returns P(X >= a) under the hypergeometric null with the table's
    margins: the probability that group 1 has at least ``a`` successes.
    """
    n1, n2 = a + b, c + d
    k = a + c
    n = n1 + n2
    lo = max(0, k - n2)
    hi = min(k, n1)
    if not (lo <= a <= hi):
        raise ValueError("inconsistent 2x2 table")
    denom = math.comb(n, k)
    p = 0.0
    for x in range(a, hi + 1):
        p += math.comb(n1, x) * math.comb(n2, k - x) / denom
    return min(p, 1.0)


def fisher_exact_two_sided(a: int, b: int, c: int, d: int) -> float:
    """Two-sided Fisher's exact test: sum of all tables with probability
    not exceeding the observed one."""
    n1, n2 = a + b, c + d
    k = a + c
    n = n1 + n2
    lo = max(0, k - n2)
    hi = min(k, n1)
    if not (lo <= a <= hi):
        raise ValueError("inconsistent 2x2 table")
    denom = math.comb(n, k)
    probs = {x: math.comb(n1, x) * math.comb(n2, k - x) / denom for x in range(lo, hi + 1)}
    observed = probs[a]
    return min(sum(p for p in probs.values() if p <= observed * (1.0 + 1e-12)), 1.0)
