"""Iterative-normalization whitening over concept + residual activations.

Training mode whitens each batch with a Newton-iteration approximation of
the inverse square root of the (trace-normalized) batch covariance and
maintains running statistics; inference mode is the affine map through
those running statistics. ``exact_zca`` is the eigendecomposition reference
used as a test oracle only.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .nn import NumericError, ensure_finite


class UsageError(Exception):
    pass


@dataclass
class WhiteningState:
    """Running whitening statistics for one activation layout."""

    dim: int
    T: int = 2
    momentum: float = 0.1
    eps: float = 1e-5
    running_mean: np.ndarray = field(default=None)
    running_whitener: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.T < 0:
            raise UsageError("T must be >= 0")
        if self.running_mean is None:
            self.running_mean = np.zeros(self.dim)
        if self.running_whitener is None:
            self.running_whitener = np.eye(self.dim)

    def copy(self) -> "WhiteningState":
        return WhiteningState(
            dim=self.dim,
            T=self.T,
            momentum=self.momentum,
            eps=self.eps,
            running_mean=self.running_mean.copy(),
            running_whitener=self.running_whitener.copy(),
        )


def iternorm_forward(
    x: np.ndarray, state: WhiteningState, mode: str = "train"
) -> tuple[np.ndarray, WhiteningState, tuple | None]:
    """Whiten a (batch, dim) matrix.

    Train mode: center by the batch mean, run T Newton iterations
    P_t = (3 P_{t-1} - P_{t-1}^3 Sigma_N) / 2 on the trace-normalized
    covariance, whiten with P_T / sqrt(trace), and update running
    statistics in place. Infer mode: affine map through the running
    statistics; the state is untouched and no cache is produced.
    """
    if x.ndim != 2 or x.shape[1] != state.dim:
        raise UsageError(f"expected (b, {state.dim}) input, got {x.shape}")
    if mode == "infer":
        out = (x - state.running_mean) @ state.running_whitener
        ensure_finite(out, "whitened output")
        return out, state, None
    if mode != "train":
        raise UsageError(f"unknown mode {mode!r}")
    b = x.shape[0]
    if b < 2:
        raise UsageError("train-mode whitening needs a batch of at least 2")
    mu = x.mean(axis=0)
    xc = x - mu
    sigma = xc.T @ xc / b + state.eps * np.eye(state.dim)
    tr = np.trace(sigma)
    if not np.isfinite(tr) or tr <= 0.0:
        raise NumericError("covariance trace is not positive")
    sigma_n = sigma / tr
    ps = [np.eye(state.dim)]
    for _ in range(state.T):
        p = ps[-1]
        ps.append(0.5 * (3.0 * p - p @ p @ p @ sigma_n))
    whitener = ps[-1] / np.sqrt(tr)
    out = xc @ whitener
    ensure_finite(out, "whitened output")
    state.running_mean += state.momentum * (mu - state.running_mean)
    state.running_whitener += state.momentum * (whitener - state.running_whitener)
    cache = (xc, sigma, tr, sigma_n, ps, whitener, b)
    return out, state, cache


def iternorm_backward(cache: tuple, grad_out: np.ndarray) -> np.ndarray:
    """Exact gradient through a train-mode forward (running stats are
    treated as non-differentiable)."""
    if cache is None:
        raise UsageError("backward requires a train-mode cache")
    xc, sigma, tr, sigma_n, ps, whitener, b = cache
    d = xc.shape[1]

    g_xc = grad_out @ whitener.T
    g_w = xc.T @ grad_out

    sqrt_tr = np.sqrt(tr)
    g_p = g_w / sqrt_tr
    g_tr = -0.5 * float((g_w * ps[-1]).sum()) / (tr * sqrt_tr)

    g_sigma_n = np.zeros((d, d))
    for t in range(len(ps) - 1, 0, -1):
        a = ps[t - 1]
        a2 = a @ a
        a2s = a2 @ sigma_n
        as_ = a @ sigma_n
        g_sigma_n -= 0.5 * (a2 @ a).T @ g_p
        g_p = 1.5 * g_p - 0.5 * (g_p @ a2s.T + a.T @ g_p @ as_.T + a2.T @ g_p @ sigma_n.T)

    g_sigma = g_sigma_n / tr
    g_tr -= float((g_sigma_n * sigma).sum()) / (tr * tr)
    g_sigma = g_sigma + g_tr * np.eye(d)

    g_xc += xc @ (g_sigma + g_sigma.T) / b
    grad_in = g_xc - g_xc.mean(axis=0)
    return grad_in


def exact_zca(x: np.ndarray, eps: float = 0.0) -> np.ndarray:
    """Eigendecomposition ZCA: Xc @ (D Lambda^{-1/2} D^T). Test oracle."""
    mu = x.mean(axis=0)
    xc = x - mu
    sigma = xc.T @ xc / x.shape[0] + eps * np.eye(x.shape[1])
    lam, d = np.linalg.eigh(sigma)
    if np.any(lam <= 0.0):
        raise NumericError("covariance not positive definite after ridge")
    wz = (d * (1.0 / np.sqrt(lam))) @ d.T
    return xc @ wz
