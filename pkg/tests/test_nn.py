import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as strat

from concept_marl import nn

from gradcheck import finite_difference, relative_error


def test_fc_identity_weights_pass_through():
    x = np.random.default_rng(0).normal(size=(4, 5))
    y, _ = nn.fc_forward(x, np.eye(5), np.zeros(5))
    np.testing.assert_array_equal(y, x)


def test_fc_relu_all_negative_is_zero():
    x = -np.ones((3, 4))
    w = np.eye(4)
    y, cache = nn.fc_forward(x, w, np.zeros(4), relu=True)
    assert (y == 0.0).all()
    gx, gw, gb = nn.fc_backward(cache, np.ones_like(y))
    assert (gx == 0.0).all()


def test_fc_shape_mismatch_raises():
    with pytest.raises(nn.ShapeError):
        nn.fc_forward(np.zeros((2, 3)), np.zeros((4, 5)), np.zeros(5))


def test_fc_nonfinite_raises():
    x = np.array([[np.inf, 1.0]])
    with pytest.raises(nn.NumericError):
        nn.fc_forward(x, np.ones((2, 2)), np.zeros(2))


@pytest.mark.parametrize("relu", [False, True])
def test_fc_gradients_match_finite_differences(relu):
    rng = np.random.default_rng(1)
    for _ in range(10):
        x = rng.normal(size=(8, 8))
        w = rng.normal(size=(8, 8))
        b = rng.normal(size=8)
        gy = rng.normal(size=(8, 8))

        def loss(x=x, w=w, b=b):
            y, _ = nn.fc_forward(x, w, b, relu=relu)
            return float((y * gy).sum())

        _, cache = nn.fc_forward(x, w, b, relu=relu)
        gx, gw, gb = nn.fc_backward(cache, gy)
        assert relative_error(gx, finite_difference(lambda v: loss(x=v), x.copy())) < 1e-6
        assert relative_error(gw, finite_difference(lambda v: loss(w=v), w.copy())) < 1e-6
        assert relative_error(gb, finite_difference(lambda v: loss(b=v), b.copy())) < 1e-6


def test_lstm_zero_weights_zero_outputs():
    B, D, H = 3, 4, 5
    params = {"wx": np.zeros((D, 4 * H)), "wh": np.zeros((H, 4 * H)), "b": np.zeros(4 * H)}
    x = np.random.default_rng(0).normal(size=(B, D))
    h, c, _ = nn.lstm_step_forward(x, np.zeros((B, H)), np.zeros((B, H)), **params)
    assert (h == 0.0).all() and (c == 0.0).all()


def test_lstm_carried_hidden_equals_sequence():
    rng = np.random.default_rng(2)
    D, H, B = 3, 4, 2
    params = nn.lstm_init(D, H, rng)
    xs = rng.normal(size=(2, B, D))
    h0, c0 = np.zeros((B, H)), np.zeros((B, H))
    # two single steps with carried state
    h1, c1, _ = nn.lstm_step_forward(xs[0], h0, c0, params["wx"], params["wh"], params["b"])
    h2, c2, _ = nn.lstm_step_forward(xs[1], h1, c1, params["wx"], params["wh"], params["b"])
    # one length-2 sequence
    hs, hT, cT, _ = nn.lstm_seq_forward(xs, h0, c0, params)
    np.testing.assert_allclose(hs[1], h2, atol=1e-12)
    np.testing.assert_allclose(hT, h2, atol=1e-12)
    np.testing.assert_allclose(cT, c2, atol=1e-12)


def test_lstm_mask_passes_state_through():
    rng = np.random.default_rng(3)
    D, H, B, T = 3, 4, 2, 5
    params = nn.lstm_init(D, H, rng)
    xs = rng.normal(size=(T, B, D))
    h0 = rng.normal(size=(B, H))
    c0 = rng.normal(size=(B, H))
    mask = np.array([[0, 0], [0, 1], [1, 1], [1, 1], [1, 1]], dtype=np.float64)
    hs, hT, cT, _ = nn.lstm_seq_forward(xs, h0, c0, params, mask=mask)
    # batch 0 is padded for two steps: its state is untouched there
    np.testing.assert_array_equal(hs[0][0], h0[0])
    np.testing.assert_array_equal(hs[1][0], h0[0])
    # an unpadded run over just the real steps gives the same result
    hs_real, hT_real, _, _ = nn.lstm_seq_forward(xs[2:, :1], h0[:1], c0[:1], params)
    np.testing.assert_allclose(hT[0], hT_real[0], atol=1e-12)


def test_lstm_gradients_match_finite_differences():
    rng = np.random.default_rng(4)
    D, H, B, T = 3, 4, 2, 4
    params = nn.lstm_init(D, H, rng)
    xs = rng.normal(size=(T, B, D))
    h0 = rng.normal(size=(B, H))
    c0 = rng.normal(size=(B, H))
    gy = rng.normal(size=(T, B, H))
    mask = np.ones((T, B))
    mask[0, 0] = 0.0
    mask[3, 1] = 0.0

    def loss(xs=xs, h0=h0, wx=None, wh=None, b=None):
        p = dict(params)
        if wx is not None:
            p["wx"] = wx
        if wh is not None:
            p["wh"] = wh
        if b is not None:
            p["b"] = b
        hs, _, _, _ = nn.lstm_seq_forward(xs, h0, c0, p, mask=mask)
        return float((hs * gy).sum())

    hs, _, _, caches = nn.lstm_seq_forward(xs, h0, c0, params, mask=mask)
    gxs, gh0, gc0, grads = nn.lstm_seq_backward(caches, gy, params, mask=mask)
    assert relative_error(gxs, finite_difference(lambda v: loss(xs=v), xs.copy())) < 1e-5
    assert relative_error(gh0, finite_difference(lambda v: loss(h0=v), h0.copy())) < 1e-5
    assert relative_error(grads["wx"], finite_difference(lambda v: loss(wx=v), params["wx"].copy())) < 1e-5
    assert relative_error(grads["wh"], finite_difference(lambda v: loss(wh=v), params["wh"].copy())) < 1e-5
    assert relative_error(grads["b"], finite_difference(lambda v: loss(b=v), params["b"].copy())) < 1e-5


def test_groupwise_softmax_uniform_on_zeros():
    x = np.zeros((2, 5))
    y, _ = nn.groupwise_softmax(x, [(0, 3)])
    np.testing.assert_allclose(y[:, :3], 1.0 / 3.0)
    np.testing.assert_array_equal(y[:, 3:], 0.0)


def test_groupwise_softmax_leaves_outside_entries():
    rng = np.random.default_rng(5)
    x = rng.normal(size=(4, 7))
    y, _ = nn.groupwise_softmax(x, [(1, 4), (5, 7)])
    np.testing.assert_array_equal(y[:, 0], x[:, 0])
    np.testing.assert_array_equal(y[:, 4], x[:, 4])


def test_groupwise_softmax_overlap_rejected():
    with pytest.raises(nn.ShapeError):
        nn.groupwise_softmax(np.zeros((1, 6)), [(0, 3), (2, 5)])
    with pytest.raises(nn.ShapeError):
        nn.groupwise_softmax(np.zeros((1, 6)), [(4, 8)])


@settings(max_examples=50, deadline=None)
@given(
    logits=strat.lists(strat.floats(-30, 30), min_size=6, max_size=6),
    shift=strat.floats(-20, 20),
)
def test_groupwise_softmax_simplex_and_shift_invariance(logits, shift):
    x = np.array([logits])
    ranges = [(0, 3), (3, 6)]
    y, _ = nn.groupwise_softmax(x, ranges)
    for s, e in ranges:
        assert y[0, s:e].sum() == pytest.approx(1.0, abs=1e-12)
        assert (y[0, s:e] >= 0).all()
    shifted = x.copy()
    shifted[0, 0:3] += shift
    y2, _ = nn.groupwise_softmax(shifted, ranges)
    np.testing.assert_allclose(y2, y, atol=1e-9)


def test_groupwise_softmax_backward_matches_finite_differences():
    rng = np.random.default_rng(6)
    x = rng.normal(size=(5, 8))
    gy = rng.normal(size=(5, 8))
    ranges = [(0, 3), (4, 6)]

    def loss(v):
        y, _ = nn.groupwise_softmax(v, ranges)
        return float((y * gy).sum())

    y, cache = nn.groupwise_softmax(x, ranges)
    gx = nn.groupwise_softmax_backward(cache, gy)
    assert relative_error(gx, finite_difference(loss, x.copy())) < 1e-6


def test_adam_zero_gradient_keeps_params():
    params = {"w": np.ones((3, 3))}
    state = nn.AdamState.init(params)
    nn.adam_step(params, {"w": np.zeros((3, 3))}, state, lr=0.1)
    np.testing.assert_array_equal(params["w"], np.ones((3, 3)))


def test_adam_first_step_magnitude_is_lr():
    params = {"w": np.zeros(4)}
    state = nn.AdamState.init(params)
    g = np.array([0.5, -2.0, 1.0, 3.0])
    nn.adam_step(params, {"w": g.copy()}, state, lr=1e-2)
    # bias-corrected first step: lr * g / (|g| + eps') ~ lr * sign(g)
    np.testing.assert_allclose(np.abs(params["w"]), 1e-2, rtol=1e-6)
    np.testing.assert_array_equal(np.sign(params["w"]), -np.sign(g))


def test_adam_nonfinite_gradient_raises():
    params = {"w": np.zeros(2)}
    state = nn.AdamState.init(params)
    with pytest.raises(nn.NumericError):
        nn.adam_step(params, {"w": np.array([np.nan, 0.0])}, state, lr=1e-2)


def test_adam_minimizes_quadratic_bowl():
    rng = np.random.default_rng(7)
    target = rng.normal(size=6)
    params = {"w": np.zeros(6)}
    state = nn.AdamState.init(params)
    start = float(((params["w"] - target) ** 2).sum())
    losses = []
    for _ in range(500):
        g = 2.0 * (params["w"] - target)
        nn.adam_step(params, {"w": g}, state, lr=1e-2)
        losses.append(float(((params["w"] - target) ** 2).sum()))
    assert losses[-1] < 1e-4 * start
    # monotone after warmup
    tail = losses[50:]
    assert all(b <= a + 1e-12 for a, b in zip(tail, tail[1:]))


def test_orthogonal_init_is_orthonormal():
    rng = np.random.default_rng(8)
    q = nn.orthogonal((6, 6), rng)
    np.testing.assert_allclose(q @ q.T, np.eye(6), atol=1e-10)


def test_clip_grads_scales_to_max_norm():
    g = {"a": np.array([3.0, 4.0])}
    nn.clip_grads(g, 1.0)
    assert nn.global_norm(g) == pytest.approx(1.0)
    g2 = {"a": np.array([0.3, 0.4])}
    nn.clip_grads(g2, 1.0)
    np.testing.assert_array_equal(g2["a"], [0.3, 0.4])
