import math

import numpy as np
import pytest

from concept_marl.nn import NumericError
from concept_marl.whitening import (
    UsageError,
    WhiteningState,
    exact_zca,
    iternorm_backward,
    iternorm_forward,
)

from gradcheck import finite_difference, relative_error


def _correlated_batch(rng, b, dim, cond=8.0):
    """Batch with correlated columns and bounded covariance conditioning.

    The Newton iteration amplifies rounding noise once converged, at a rate
    growing with the covariance condition number, so the many-iteration
    oracle tests keep the spectrum ratio moderate (the training operating
    point T=2 is unaffected by this).
    """
    spectrum = np.geomspace(1.0, cond, dim)
    q = np.linalg.qr(rng.normal(size=(dim, dim)))[0]
    mix = q @ np.diag(np.sqrt(spectrum)) @ q.T
    return rng.normal(size=(b, dim)) @ mix + rng.normal(size=dim)


def _cov(x):
    xc = x - x.mean(axis=0)
    return xc.T @ xc / x.shape[0]


def test_exact_zca_closed_form_diagonal():
    # columns with sample covariance diag(4, 9): whitener is diag(1/2, 1/3)
    x = np.array(
        [[math.sqrt(8), 0.0], [-math.sqrt(8), 0.0], [0.0, math.sqrt(18)], [0.0, -math.sqrt(18)]]
    )
    np.testing.assert_allclose(_cov(x), np.diag([4.0, 9.0]), atol=1e-12)
    out = exact_zca(x)
    np.testing.assert_allclose(out, x @ np.diag([0.5, 1.0 / 3.0]), atol=1e-12)


def test_exact_zca_whitens_any_batch():
    rng = np.random.default_rng(0)
    for _ in range(5):
        x = _correlated_batch(rng, 256, 6)
        out = exact_zca(x)
        np.testing.assert_allclose(_cov(out), np.eye(6), atol=1e-8)


def test_exact_zca_rotation_equivariance():
    rng = np.random.default_rng(1)
    x = _correlated_batch(rng, 128, 5)
    q = np.linalg.qr(rng.normal(size=(5, 5)))[0]
    np.testing.assert_allclose(exact_zca(x @ q), exact_zca(x) @ q, atol=1e-8)


def test_exact_zca_rejects_degenerate_covariance():
    x = np.zeros((8, 3))
    with pytest.raises(NumericError):
        exact_zca(x)


def test_iternorm_identity_covariance_is_identity_map():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(4096, 6))
    x = exact_zca(x)  # exactly unit covariance, zero mean
    state = WhiteningState(dim=6, T=20, eps=0.0)
    out, _, _ = iternorm_forward(x, state, mode="train")
    np.testing.assert_allclose(_cov(out), np.eye(6), atol=1e-6)
    np.testing.assert_allclose(out, x, atol=1e-6)


@pytest.mark.parametrize("dim", [4, 8, 16])
def test_iternorm_t20_matches_exact_zca(dim):
    rng = np.random.default_rng(dim)
    for _ in range(5):
        x = _correlated_batch(rng, 512, dim)
        state = WhiteningState(dim=dim, T=20, eps=1e-5)
        out, _, _ = iternorm_forward(x, state, mode="train")
        expected = exact_zca(x, eps=1e-5)
        assert np.abs(_cov(out) - np.eye(dim)).max() < 1e-3
        np.testing.assert_allclose(out, expected, atol=1e-3)


def test_iternorm_t2_partially_decorrelates():
    rng = np.random.default_rng(3)
    x = _correlated_batch(rng, 512, 8)
    state = WhiteningState(dim=8, T=2)
    out, _, _ = iternorm_forward(x, state, mode="train")
    cin, cout = _cov(x), _cov(out)
    off = ~np.eye(8, dtype=bool)
    assert np.abs(cout[off]).mean() < np.abs(cin[off]).mean()
    # but full whiteness is not required at T=2
    assert np.abs(cout - np.eye(8)).max() > 1e-3


def test_iternorm_monotone_decorrelation_in_t():
    rng = np.random.default_rng(4)
    for trial in range(5):
        x = _correlated_batch(rng, 256, 6)
        dists = []
        for T in (0, 1, 2, 4, 8, 16):
            state = WhiteningState(dim=6, T=T)
            out, _, _ = iternorm_forward(x, state, mode="train")
            dists.append(np.linalg.norm(_cov(out) - np.eye(6)))
        for a, b in zip(dists, dists[1:]):
            assert b <= a + 1e-9


def test_iternorm_dim1_standardizes():
    rng = np.random.default_rng(5)
    x = rng.normal(3.0, 2.5, size=(64, 1))
    state = WhiteningState(dim=1, T=2, eps=0.0)
    out, _, _ = iternorm_forward(x, state, mode="train")
    expected = (x - x.mean()) / x.std()
    np.testing.assert_allclose(out, expected, atol=1e-10)


def test_iternorm_train_updates_running_stats_and_infer_uses_them():
    rng = np.random.default_rng(6)
    state = WhiteningState(dim=4, T=2, momentum=0.1)
    x = _correlated_batch(rng, 256, 4)
    out_train, state, _ = iternorm_forward(x, state, mode="train")
    assert np.abs(out_train.mean(axis=0)).max() < 1e-8  # centered in train mode
    mean_before = state.running_mean.copy()
    w_before = state.running_whitener.copy()
    y = _correlated_batch(rng, 8, 4)
    out_infer, state, cache = iternorm_forward(y, state, mode="infer")
    assert cache is None
    np.testing.assert_array_equal(state.running_mean, mean_before)
    np.testing.assert_array_equal(state.running_whitener, w_before)
    np.testing.assert_allclose(out_infer, (y - mean_before) @ w_before, atol=1e-12)


def test_iternorm_infer_is_linear_in_input():
    rng = np.random.default_rng(7)
    state = WhiteningState(dim=3, T=2)
    iternorm_forward(_correlated_batch(rng, 128, 3), state, mode="train")
    a = rng.normal(size=(5, 3))
    b = rng.normal(size=(5, 3))
    oa, _, _ = iternorm_forward(a, state, mode="infer")
    ob, _, _ = iternorm_forward(b, state, mode="infer")
    oab, _, _ = iternorm_forward(0.5 * (a + b), state, mode="infer")
    np.testing.assert_allclose(oab, 0.5 * (oa + ob), atol=1e-12)


def test_iternorm_whitener_is_symmetric():
    rng = np.random.default_rng(8)
    state = WhiteningState(dim=6, T=4)
    for _ in range(10):
        iternorm_forward(_correlated_batch(rng, 128, 6), state, mode="train")
    w = state.running_whitener
    assert np.abs(w - w.T).max() < 1e-8


def test_iternorm_usage_errors():
    state = WhiteningState(dim=3)
    with pytest.raises(UsageError):
        iternorm_forward(np.zeros((1, 3)), state, mode="train")
    with pytest.raises(UsageError):
        iternorm_forward(np.zeros((4, 2)), state, mode="train")
    with pytest.raises(UsageError):
        iternorm_forward(np.zeros((4, 3)), state, mode="sideways")
    with pytest.raises(UsageError):
        iternorm_backward(None, np.zeros((4, 3)))


def test_iternorm_backward_zero_grad():
    rng = np.random.default_rng(9)
    x = _correlated_batch(rng, 16, 5)
    state = WhiteningState(dim=5, T=2)
    _, _, cache = iternorm_forward(x, state, mode="train")
    g = iternorm_backward(cache, np.zeros((16, 5)))
    np.testing.assert_array_equal(g, np.zeros((16, 5)))


def test_iternorm_backward_matches_finite_differences():
    rng = np.random.default_rng(10)
    x = _correlated_batch(rng, 16, 5)
    gy = rng.normal(size=(16, 5))

    def loss(v):
        state = WhiteningState(dim=5, T=2)
        out, _, _ = iternorm_forward(v, state, mode="train")
        return float((out * gy).sum())

    state = WhiteningState(dim=5, T=2)
    _, _, cache = iternorm_forward(x, state, mode="train")
    gx = iternorm_backward(cache, gy)
    assert relative_error(gx, finite_difference(loss, x.copy())) < 1e-4


def test_iternorm_backward_near_identity_for_white_input():
    # For already-white input the whitener is ~I and grad_in ~ grad_out up
    # to the exact gradient's batch-statistics term, which decays as
    # 1/sqrt(b) (the finite-difference test above certifies it is not an
    # implementation artifact).
    rng = np.random.default_rng(11)
    devs = {}
    for b in (2048, 32768):
        x = exact_zca(rng.normal(size=(b, 4)))
        state = WhiteningState(dim=4, T=20, eps=0.0)
        _, _, cache = iternorm_forward(x, state, mode="train")
        np.testing.assert_allclose(cache[5], np.eye(4), atol=1e-10)  # whitener ~ I
        gy = rng.normal(size=(b, 4))
        gx = iternorm_backward(cache, gy)
        devs[b] = np.linalg.norm(gx - gy) / np.linalg.norm(gy)
    assert devs[2048] < 5e-2
    assert devs[32768] < devs[2048] / 2.0  # statistics term vanishes with b
