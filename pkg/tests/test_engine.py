import numpy as np
import pytest
import scipy.signal

from uwenhance import engine as eng
from uwenhance.errors import DimensionError, DomainError, UsageError

from helpers import gradcheck, max_rel_err, numeric_grad

rng = np.random.default_rng(1234)


def rand(*shape):
    return rng.uniform(-1.0, 1.0, size=shape)


# ---------------------------------------------------------------------------
# conv2d
# ---------------------------------------------------------------------------

def test_conv2d_haar_ll_example():
    x = np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(1, 1, 2, 2)
    w = 0.5 * np.ones((1, 1, 2, 2))
    out = eng.conv2d(eng.as_tensor(x), eng.as_tensor(w), stride=2, padding=0)
    assert out.shape == (1, 1, 1, 1)
    assert abs(out.item() - 5.0) < 1e-6


def test_conv2d_identity_kernel():
    x = rand(2, 3, 5, 5)
    w = np.zeros((3, 3, 1, 1))
    for c in range(3):
        w[c, c, 0, 0] = 1.0
    out = eng.conv2d(eng.as_tensor(x), eng.as_tensor(w), eng.as_tensor(np.zeros(3)))
    np.testing.assert_allclose(out.data, x, atol=1e-6)


def test_conv2d_matches_scipy_oracle():
    # independent route: per channel-pair scipy cross-correlation
    x = rand(2, 3, 7, 6)
    w = rand(4, 3, 3, 3)
    pad = 1
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    expect = np.zeros((2, 4, 7, 6))
    for n in range(2):
        for o in range(4):
            for c in range(3):
                expect[n, o] += scipy.signal.correlate2d(xp[n, c], w[o, c], mode="valid")
    got = eng.conv2d(eng.as_tensor(x), eng.as_tensor(w), padding=pad).data
    np.testing.assert_allclose(got, expect, rtol=1e-6, atol=1e-9)


def test_conv2d_strided_matches_scipy_oracle():
    x = rand(1, 2, 9, 9)
    w = rand(3, 2, 4, 4)
    full = np.zeros((1, 3, 8, 8))
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    for o in range(3):
        for c in range(2):
            full[0, o] += scipy.signal.correlate2d(xp[0, c], w[o, c], mode="valid")
    expect = full[:, :, ::2, ::2]
    got = eng.conv2d(eng.as_tensor(x), eng.as_tensor(w), stride=2, padding=1).data
    np.testing.assert_allclose(got, expect, rtol=1e-6, atol=1e-9)


def test_conv2d_gradcheck():
    x = rand(1, 3, 6, 6)
    w = rand(2, 3, 3, 3)
    b = rand(2)
    probe = rand(1, 2, 6, 6)

    def build(xt, wt, bt):
        out = eng.conv2d(xt, wt, bt, stride=1, padding=1)
        return eng.reduce_mean(eng.mul(out, eng.as_tensor(probe)))

    gradcheck(build, [x, w, b])


def test_conv2d_strided_gradcheck():
    x = rand(2, 2, 7, 7)
    w = rand(3, 2, 4, 4)
    b = rand(3)
    probe = rand(2, 3, 3, 3)

    def build(xt, wt, bt):
        out = eng.conv2d(xt, wt, bt, stride=2, padding=1)
        return eng.reduce_mean(eng.mul(out, eng.as_tensor(probe)))

    gradcheck(build, [x, w, b])


def test_conv2d_shape_errors():
    x = eng.as_tensor(rand(1, 3, 4, 4))
    w = eng.as_tensor(rand(2, 4, 3, 3))
    with pytest.raises(DimensionError, match="channel axis"):
        eng.conv2d(x, w)
    with pytest.raises(DomainError):
        eng.conv2d(x, eng.as_tensor(rand(2, 3, 6, 6)))  # kernel larger than input


# ---------------------------------------------------------------------------
# conv_transpose2d
# ---------------------------------------------------------------------------

def test_conv_transpose_single_pixel_spread():
    c = 1.7
    x = np.full((1, 1, 1, 1), c)
    k = rand(1, 1, 2, 2)
    out = eng.conv_transpose2d(eng.as_tensor(x), eng.as_tensor(k), stride=2).data
    np.testing.assert_allclose(out, c * k[:, :1], rtol=1e-7)


@pytest.mark.parametrize("stride,padding,k", [(1, 0, 3), (2, 0, 2), (2, 1, 4)])
def test_conv_transpose_is_exact_adjoint(stride, padding, k):
    x = rand(2, 3, 8, 8)
    w = rand(4, 3, k, k)
    y_shape = eng.conv2d(eng.as_tensor(x), eng.as_tensor(w),
                         stride=stride, padding=padding).shape
    y = rand(*y_shape)
    lhs = np.sum(eng.conv2d(eng.as_tensor(x), eng.as_tensor(w),
                            stride=stride, padding=padding).data * y)
    rhs = np.sum(x * eng.conv_transpose2d(eng.as_tensor(y), eng.as_tensor(w),
                                          stride=stride, padding=padding).data)
    assert abs(lhs - rhs) / max(abs(lhs), 1e-12) < 1e-5


def test_conv_transpose_gradcheck():
    x = rand(1, 2, 3, 3)
    w = rand(2, 3, 4, 4)
    b = rand(3)
    probe = rand(1, 3, 6, 6)

    def build(xt, wt, bt):
        out = eng.conv_transpose2d(xt, wt, bt, stride=2, padding=1)
        return eng.reduce_mean(eng.mul(out, eng.as_tensor(probe)))

    gradcheck(build, [x, w, b])


# ---------------------------------------------------------------------------
# activations and elementwise ops
# ---------------------------------------------------------------------------

def test_relu_values_and_idempotence():
    x = eng.as_tensor(np.array([-1.0, 0.0, 2.0]))
    out = eng.relu(x)
    np.testing.assert_array_equal(out.data, [0.0, 0.0, 2.0])
    np.testing.assert_array_equal(eng.relu(out).data, out.data)


def test_relu_gradcheck_away_from_zero():
    x = rand(4, 5)
    x[np.abs(x) < 0.05] = 0.5  # keep probes away from the kink
    gradcheck(lambda t: eng.reduce_mean(eng.relu(t)), [x])


def test_leaky_relu_gradcheck():
    x = rand(4, 5)
    x[np.abs(x) < 0.05] = -0.5
    gradcheck(lambda t: eng.reduce_mean(eng.leaky_relu(t, 0.2)), [x])


def test_mean_and_abs_trivial():
    assert eng.reduce_mean(eng.as_tensor([1.0, 2.0, 3.0])).item() == pytest.approx(2.0)
    x = eng.as_tensor(np.array([0.5, 2.0]), requires_grad=True)
    eng.reduce_sum(eng.abs_(x)).backward()
    np.testing.assert_array_equal(x.grad, [1.0, 1.0])


def test_composite_expression_gradcheck():
    x = np.abs(rand(3, 4)) + 0.5
    y = np.abs(rand(3, 4)) + 0.5

    def build(xt, yt):
        z = eng.div(eng.mul(eng.exp_(eng.mul(xt, 0.3)), yt),
                    eng.add(eng.square(xt), 1.0))
        z = eng.add(eng.sqrt_(z), eng.pow_scalar(yt, 1.5))
        return eng.reduce_mean(z)

    gradcheck(build, [x, y])


def test_sigmoid_and_clamp01_gradcheck():
    x = rand(3, 3) * 3
    gradcheck(lambda t: eng.reduce_mean(eng.sigmoid(t)), [x])
    y = rand(3, 3) * 0.4 + 0.5  # interior of [0, 1]
    gradcheck(lambda t: eng.reduce_mean(eng.clamp01(t)), [y])


def test_clamp01_range():
    x = eng.as_tensor(np.array([-0.5, 0.3, 1.7]))
    np.testing.assert_array_equal(eng.clamp01(x).data, [0.0, 0.3, 1.0])


def test_elementwise_shape_mismatch():
    with pytest.raises(DimensionError, match="shapes"):
        eng.add(eng.as_tensor(rand(2, 3)), eng.as_tensor(rand(3, 2)))


# ---------------------------------------------------------------------------
# shape ops
# ---------------------------------------------------------------------------

def test_concat_channels_shapes():
    ts = [eng.as_tensor(rand(1, 3, 4, 4)) for _ in range(3)]
    out = eng.concat_channels(ts)
    assert out.shape == (1, 9, 4, 4)
    single = eng.concat_channels([ts[0]])
    np.testing.assert_array_equal(single.data, ts[0].data)


def test_concat_channels_gradcheck_slices_back():
    a, b = rand(1, 2, 3, 3), rand(1, 1, 3, 3)
    probe = rand(1, 3, 3, 3)

    def build(at, bt):
        out = eng.concat_channels([at, bt])
        return eng.reduce_mean(eng.mul(out, eng.as_tensor(probe)))

    gradcheck(build, [a, b])


def test_concat_channels_spatial_mismatch():
    with pytest.raises(DimensionError, match="spatial"):
        eng.concat_channels([eng.as_tensor(rand(1, 2, 4, 4)),
                             eng.as_tensor(rand(1, 2, 4, 5))])


def test_slice_reshape_crop_pad_gradchecks():
    x = rand(2, 4, 5, 5)
    probe = rand(2, 2, 5, 5)
    gradcheck(lambda t: eng.reduce_mean(
        eng.mul(eng.slice_channels(t, 1, 3), eng.as_tensor(probe))), [x])
    gradcheck(lambda t: eng.reduce_mean(
        eng.square(eng.reshape(t, (2, 100)))), [x])
    probe2 = rand(2, 4, 3, 2)
    gradcheck(lambda t: eng.reduce_mean(
        eng.mul(eng.crop2d(t, 1, 2, 3, 2), eng.as_tensor(probe2))), [x])
    for mode in ("zero", "reflect"):
        probe3 = rand(2, 4, 9, 8)
        gradcheck(lambda t, m=mode, p=probe3: eng.reduce_mean(
            eng.mul(eng.pad2d(t, (2, 2, 1, 2), mode=m), eng.as_tensor(p))), [x])


def test_avg_pool2_values_and_gradcheck():
    x = rand(1, 2, 5, 6)
    out = eng.avg_pool2(eng.as_tensor(x))
    assert out.shape == (1, 2, 2, 3)
    assert out.data[0, 0, 0, 0] == pytest.approx(x[0, 0, :2, :2].mean(), rel=1e-6)
    probe = rand(1, 2, 2, 3)
    gradcheck(lambda t: eng.reduce_mean(
        eng.mul(eng.avg_pool2(t), eng.as_tensor(probe))), [x])


def test_sep_filter2d_matches_scipy_and_gradcheck():
    x = rand(1, 2, 9, 9)
    k = np.array([0.25, 0.5, 0.25])
    out = eng.sep_filter2d(eng.as_tensor(x), k).data
    k2d = np.outer(k, k)
    for c in range(2):
        expect = scipy.signal.correlate2d(x[0, c], k2d, mode="valid")
        np.testing.assert_allclose(out[0, c], expect, rtol=1e-6, atol=1e-9)
    probe = rand(1, 2, 7, 7)
    gradcheck(lambda t: eng.reduce_mean(
        eng.mul(eng.sep_filter2d(t, k), eng.as_tensor(probe))), [x])


# ---------------------------------------------------------------------------
# backward bookkeeping
# ---------------------------------------------------------------------------

def test_backward_linear_case():
    xv = np.array([1.0, 2.0, 3.0, 4.0])
    w = eng.as_tensor(np.ones(4), requires_grad=True)
    loss = eng.reduce_mean(eng.mul(w, eng.as_tensor(xv)))
    loss.backward()
    np.testing.assert_allclose(w.grad, xv / 4.0, rtol=1e-6)


def test_backward_repeated_calls_accumulate():
    w = eng.as_tensor(np.array([2.0, 3.0]), requires_grad=True)
    loss = eng.reduce_sum(eng.square(w))
    loss.backward(retain_graph=True)
    first = w.grad.copy()
    loss.backward()
    np.testing.assert_allclose(w.grad, 2.0 * first, rtol=1e-6)


@pytest.mark.parametrize("k", [2, 3])
def test_backward_kfold_reuse_accumulates(k):
    w = eng.as_tensor(np.array([1.5]), requires_grad=True)
    total = eng.mul(w, 1.0)
    for _ in range(k - 1):
        total = eng.add(total, eng.mul(w, 1.0))
    eng.reduce_sum(total).backward()
    np.testing.assert_allclose(w.grad, [float(k)], rtol=1e-6)


def test_backward_non_scalar_raises():
    w = eng.as_tensor(rand(2, 2), requires_grad=True)
    with pytest.raises(UsageError, match="scalar"):
        eng.backward(eng.square(w))


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------

def _param(vals):
    p = eng.Parameter("p", np.asarray(vals, dtype=np.float64))
    return p


def test_rmsprop_zero_grad_keeps_params():
    p = _param([1.0, -2.0])
    p.t.grad = np.zeros(2)
    eng.rmsprop_step([p], lr=0.1)
    np.testing.assert_array_equal(p.data, [1.0, -2.0])


def test_rmsprop_single_step_closed_form():
    p = _param([0.0])
    p.t.grad = np.array([1.0])
    eng.rmsprop_step([p], lr=0.01, smoothing=0.9, eps=1e-8)
    expected = -0.01 * 1.0 / (np.sqrt(0.1) + 1e-8)
    assert p.data[0] == pytest.approx(expected, rel=1e-9)
    assert p.t.grad is None


def test_rmsprop_lr_zero_is_identity():
    p = _param([0.3, -0.7])
    p.t.grad = np.array([5.0, -1.0])
    eng.rmsprop_step([p], lr=0.0)
    np.testing.assert_array_equal(p.data, [0.3, -0.7])


def test_rmsprop_quadratic_descends_monotonically():
    p = _param([1.0])
    prev = float("inf")
    for _ in range(100):
        loss = eng.reduce_sum(eng.square(p.t))
        val = loss.item()
        assert val <= prev + 1e-12
        prev = val
        loss.backward()
        eng.rmsprop_step([p], lr=1e-3)


def test_rmsprop_missing_grad_raises():
    p = _param([1.0])
    with pytest.raises(UsageError, match="no gradient"):
        eng.rmsprop_step([p], lr=0.1)


def test_clamp_params():
    p = _param([0.005, -0.002])
    eng.clamp_params([p], -0.01, 0.01)
    np.testing.assert_array_equal(p.data, [0.005, -0.002])
    q = _param([0.5, -0.3])
    eng.clamp_params([q], -0.01, 0.01)
    np.testing.assert_array_equal(q.data, [0.01, -0.01])
    eng.clamp_params([q], -0.01, 0.01)  # idempotent
    np.testing.assert_array_equal(q.data, [0.01, -0.01])
    with pytest.raises(UsageError):
        eng.clamp_params([q], 1.0, -1.0)


def test_gradcheck_harness_catches_wrong_gradient():
    # sanity check on the harness itself: a wrong vjp must be detected
    def f(x):
        return float(np.sum(x ** 3))

    x = rand(3)
    num = numeric_grad(f, x)
    wrong = 2.0 * x ** 2
    assert max_rel_err(wrong, num) > 1e-2
