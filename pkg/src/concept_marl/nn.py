"""Minimal differentiable core: dense layers, an LSTM cell, group-wise
softmax, initialization and Adam — all with hand-written exact backward
passes (no autodiff framework).

Arrays are numpy, batch-first: matrices are (batch, features), sequences
(time, batch, features). Float64 by default; every forward checks its
output for NaN/Inf and raises NumericError.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class NumericError(Exception):
    """Raised when a computation produces non-finite values."""


class ShapeError(Exception):
    """Raised on inconsistent operand shapes."""


def ensure_finite(arr: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"non-finite values in {what}")
    return arr


# ---------------------------------------------------------------------------
# initialization


def fan_in_uniform(shape: tuple[int, ...], rng: np.random.Generator) -> np.ndarray:
    """U(-1/sqrt(fan_in), 1/sqrt(fan_in)); fan_in is the first dimension."""
    limit = 1.0 / math.sqrt(shape[0])
    return rng.uniform(-limit, limit, size=shape)


def orthogonal(shape: tuple[int, int], rng: np.random.Generator, gain: float = 1.0) -> np.ndarray:
    """Orthogonal init via QR of a Gaussian matrix."""
    rows, cols = shape
    a = rng.normal(0.0, 1.0, size=(max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q *= np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return gain * q[:rows, :cols]


# ---------------------------------------------------------------------------
# dense layer


def fc_forward(
    x: np.ndarray, w: np.ndarray, b: np.ndarray, relu: bool = False
) -> tuple[np.ndarray, tuple]:
    """Affine map with optional ReLU. Returns (output, cache)."""
    if x.shape[-1] != w.shape[0] or w.shape[1] != b.shape[0]:
        raise ShapeError(f"fc shapes disagree: x{x.shape} w{w.shape} b{b.shape}")
    pre = x @ w + b
    y = np.maximum(pre, 0.0) if relu else pre
    ensure_finite(y, "fc output")
    return y, (x, w, pre if relu else None)


def fc_backward(cache: tuple, gy: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Exact gradients (grad_in, grad_w, grad_b)."""
    x, w, pre = cache
    if pre is not None:
        gy = gy * (pre > 0.0)
    gx = gy @ w.T
    gw = x.T @ gy
    gb = gy.sum(axis=0)
    return gx, gw, gb


# ---------------------------------------------------------------------------
# LSTM (gate order: input, forget, cell, output)


def lstm_init(input_dim: int, hidden_dim: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
    wx = fan_in_uniform((input_dim, 4 * hidden_dim), rng)
    wh = np.concatenate(
        [orthogonal((hidden_dim, hidden_dim), rng) for _ in range(4)], axis=1
    )
    b = np.zeros(4 * hidden_dim)
    return {"wx": wx, "wh": wh, "b": b}


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def lstm_step_forward(
    x: np.ndarray,
    h: np.ndarray,
    c: np.ndarray,
    wx: np.ndarray,
    wh: np.ndarray,
    b: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, tuple]:
    """One LSTM step for a batch. Returns (h', c', cache)."""
    hd = h.shape[-1]
    gates = x @ wx + h @ wh + b
    i = _sigmoid(gates[:, 0 * hd : 1 * hd])
    f = _sigmoid(gates[:, 1 * hd : 2 * hd])
    g = np.tanh(gates[:, 2 * hd : 3 * hd])
    o = _sigmoid(gates[:, 3 * hd : 4 * hd])
    c_new = f * c + i * g
    tc = np.tanh(c_new)
    h_new = o * tc
    ensure_finite(h_new, "lstm hidden")
    cache = (x, h, c, i, f, g, o, c_new, tc, wx, wh)
    return h_new, c_new, cache


def lstm_step_backward(
    cache: tuple, gh: np.ndarray, gc: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Backward one step: returns (gx, gh_prev, gc_prev, gwx, gwh, gb)."""
    x, h, c, i, f, g, o, c_new, tc, wx, wh = cache
    go = gh * tc
    gc_total = gc + gh * o * (1.0 - tc * tc)
    gf = gc_total * c
    gi = gc_total * g
    gg = gc_total * i
    gc_prev = gc_total * f
    d_i = gi * i * (1.0 - i)
    d_f = gf * f * (1.0 - f)
    d_g = gg * (1.0 - g * g)
    d_o = go * o * (1.0 - o)
    dgates = np.concatenate([d_i, d_f, d_g, d_o], axis=1)
    gx = dgates @ wx.T
    gh_prev = dgates @ wh.T
    gwx = x.T @ dgates
    gwh = h.T @ dgates
    gb = dgates.sum(axis=0)
    return gx, gh_prev, gc_prev, gwx, gwh, gb


def lstm_seq_forward(
    xs: np.ndarray,
    h0: np.ndarray,
    c0: np.ndarray,
    params: dict[str, np.ndarray],
    mask: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, list]:
    """Run a (T, B, in) sequence.

    ``mask`` (T, B) marks real steps; on masked-out steps the hidden state
    passes through unchanged, so front-padded sequences leave the carried
    state intact.
    """
    T, B, _ = xs.shape
    hd = h0.shape[-1]
    hs = np.empty((T, B, hd))
    h, c = h0, c0
    caches = []
    for t in range(T):
        h_new, c_new, cache = lstm_step_forward(xs[t], h, c, params["wx"], params["wh"], params["b"])
        if mask is not None:
            m = mask[t][:, None]
            h_new = m * h_new + (1.0 - m) * h
            c_new = m * c_new + (1.0 - m) * c
        hs[t] = h_new
        caches.append((cache, h, c))
        h, c = h_new, c_new
    return hs, h, c, caches


def lstm_seq_backward(
    caches: list,
    ghs: np.ndarray,
    params: dict[str, np.ndarray],
    mask: np.ndarray | None = None,
    gh_last: np.ndarray | None = None,
    gc_last: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, dict[str, np.ndarray]]:
    """BPTT over a sequence forwarded by lstm_seq_forward."""
    T = len(caches)
    B, hd = ghs.shape[1], ghs.shape[2]
    gxs = np.empty((T, B, caches[0][0][0].shape[-1]))
    grads = {k: np.zeros_like(v) for k, v in params.items()}
    gh = np.zeros((B, hd)) if gh_last is None else gh_last.copy()
    gc = np.zeros((B, hd)) if gc_last is None else gc_last.copy()
    for t in range(T - 1, -1, -1):
        cache, _, _ = caches[t]
        gh = gh + ghs[t]
        if mask is not None:
            m = mask[t][:, None]
            gh_through = (1.0 - m) * gh
            gc_through = (1.0 - m) * gc
            gh = m * gh
            gc = m * gc
        else:
            gh_through = 0.0
            gc_through = 0.0
        gx, gh_prev, gc_prev, gwx, gwh, gb = lstm_step_backward(cache, gh, gc)
        grads["wx"] += gwx
        grads["wh"] += gwh
        grads["b"] += gb
        gxs[t] = gx
        gh = gh_prev + gh_through
        gc = gc_prev + gc_through
    return gxs, gh, gc, grads


# ---------------------------------------------------------------------------
# softmax


def softmax_rows(x: np.ndarray) -> np.ndarray:
    z = x - x.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax_rows(x: np.ndarray) -> np.ndarray:
    z = x - x.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def _validate_group_ranges(dim: int, group_ranges: list[tuple[int, int]]) -> None:
    seen = np.zeros(dim, dtype=bool)
    for start, end in group_ranges:
        if not (0 <= start < end <= dim):
            raise ShapeError(f"group range ({start}, {end}) out of bounds for dim {dim}")
        if seen[start:end].any():
            raise ShapeError("overlapping group ranges")
        seen[start:end] = True


def groupwise_softmax(
    values: np.ndarray, group_ranges: list[tuple[int, int]]
) -> tuple[np.ndarray, tuple]:
    """Softmax applied independently inside each range; other entries pass
    through untouched. Returns (output, cache)."""
    _validate_group_ranges(values.shape[-1], group_ranges)
    out = values.copy()
    probs = []
    for start, end in group_ranges:
        p = softmax_rows(values[..., start:end])
        out[..., start:end] = p
        probs.append(p)
    return out, (group_ranges, probs)


def groupwise_softmax_backward(cache: tuple, gy: np.ndarray) -> np.ndarray:
    """Exact softmax Jacobian per group; identity elsewhere."""
    group_ranges, probs = cache
    gx = gy.copy()
    for (start, end), p in zip(group_ranges, probs):
        gslice = gy[..., start:end]
        dot = (gslice * p).sum(axis=-1, keepdims=True)
        gx[..., start:end] = p * (gslice - dot)
    return gx


# ---------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    """Bias-corrected Adam moments, keyed like the parameter dict."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @staticmethod
    def init(params: dict[str, np.ndarray], beta1: float = 0.9, beta2: float = 0.999) -> "AdamState":
        return AdamState(
            m={k: np.zeros_like(v) for k, v in params.items()},
            v={k: np.zeros_like(v) for k, v in params.items()},
            beta1=beta1,
            beta2=beta2,
        )


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    lr: float,
) -> tuple[dict[str, np.ndarray], AdamState]:
    """Standard bias-corrected Adam update, in place."""
    for k, g in grads.items():
        ensure_finite(g, f"gradient {k}")
        if g.shape != params[k].shape:
            raise ShapeError(f"gradient shape mismatch for {k}")
    state.step += 1
    b1c = 1.0 - state.beta1**state.step
    b2c = 1.0 - state.beta2**state.step
    for k, g in grads.items():
        m = state.m[k]
        v = state.v[k]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        params[k] -= lr * (m / b1c) / (np.sqrt(v / b2c) + state.eps)
    return params, state


def global_norm(grads: dict[str, np.ndarray]) -> float:
    return math.sqrt(sum(float((g * g).sum()) for g in grads.values()))


def clip_grads(grads: dict[str, np.ndarray], max_norm: float) -> dict[str, np.ndarray]:
    """Scale all gradients down to a global norm of max_norm if exceeded."""
    norm = global_norm(grads)
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return grads
