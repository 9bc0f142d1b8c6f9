import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vlasov_lrmf.convmf.layers import (
    ACTIVATIONS,
    Activation,
    Conv2D,
    Flatten,
    Linear,
    ShapeError,
    conv2d_backward,
    conv2d_forward,
    conv_output_size,
)


def naive_conv(x, w, b, stride, padding, dilation):
    """Six nested loops over batch, output pixel, kernel tap and channels."""
    bsz, h, wd, c = x.shape
    k, _, _, co = w.shape
    xp = np.zeros((bsz, h + 2 * padding, wd + 2 * padding, c))
    xp[:, padding : padding + h, padding : padding + wd] = x
    ho = (h + 2 * padding - dilation * (k - 1) - 1) // stride + 1
    wo = (wd + 2 * padding - dilation * (k - 1) - 1) // stride + 1
    out = np.zeros((bsz, ho, wo, co))
    for n in range(bsz):
        for i in range(ho):
            for j in range(wo):
                for di in range(k):
                    for dj in range(k):
                        for ci in range(c):
                            out[n, i, j] += xp[n, i * stride + di * dilation, j * stride + dj * dilation, ci] * w[di, dj, ci]
    return out + b


def test_output_size_formula():
    assert conv_output_size(64, 5, 1, 3, 1) == 66
    assert conv_output_size(66, 3, 1, 0, 1) == 64
    assert conv_output_size(10, 3, 2, 1, 2) == 4


def test_identity_kernel_returns_input(rng):
    x = rng.standard_normal((2, 7, 9, 1))
    w = np.zeros((5, 5, 1, 1))
    w[2, 2] = 1.0
    np.testing.assert_array_equal(conv2d_forward(x, w, np.zeros(1), padding=2), x)


def test_ones_kernel_on_constant_input():
    out = conv2d_forward(np.ones((1, 6, 6, 1)), np.ones((3, 3, 1, 1)), np.zeros(1))
    np.testing.assert_allclose(out, 9.0)


@pytest.mark.parametrize("c_in", [1, 2, 5])
@pytest.mark.parametrize("stride, padding, dilation", [(1, 0, 1), (1, 3, 1), (2, 1, 1), (3, 2, 2), (1, 1, 2)])
def test_forward_matches_naive_oracle(c_in, stride, padding, dilation, rng):
    x = rng.standard_normal((2, 11, 13, c_in))
    w = rng.standard_normal((3, 3, c_in, 4))
    b = rng.standard_normal(4)
    np.testing.assert_allclose(
        conv2d_forward(x, w, b, stride, padding, dilation), naive_conv(x, w, b, stride, padding, dilation), atol=1e-12
    )


def test_single_image_input(rng):
    x = rng.standard_normal((6, 6, 2))
    w = rng.standard_normal((3, 3, 2, 3))
    out = conv2d_forward(x, w, np.zeros(3))
    assert out.shape == (4, 4, 3)


def test_kernel_larger_than_padded_input():
    with pytest.raises(ShapeError, match="larger than padded input"):
        conv2d_forward(np.ones((1, 3, 3, 1)), np.ones((5, 5, 1, 1)), np.zeros(1))


def test_channel_mismatch():
    with pytest.raises(ShapeError):
        conv2d_forward(np.ones((1, 5, 5, 2)), np.ones((3, 3, 1, 1)), np.zeros(1))


@settings(max_examples=30, deadline=None)
@given(
    st.integers(1, 5), st.integers(1, 3), st.integers(0, 3), st.integers(1, 2), st.sampled_from([1, 3, 5]),
    st.integers(0, 2**31 - 1),
)
def test_conv_backward_is_adjoint_of_forward(c_in, stride, padding, dilation, k, seed):
    # <g, conv(x)> is linear in x and w, so its gradients are exact adjoints
    r = np.random.default_rng(seed)
    h, w_ = 12, 10
    if dilation * (k - 1) + 1 > min(h, w_) + 2 * padding:
        return
    x = r.standard_normal((2, h, w_, c_in))
    w = r.standard_normal((k, k, c_in, 3))
    out = conv2d_forward(x, w, np.zeros(3), stride, padding, dilation)
    g = r.standard_normal(out.shape)
    dx, dw, db = conv2d_backward(g, x, w, stride, padding, dilation)
    dx_dir, dw_dir = r.standard_normal(x.shape), r.standard_normal(w.shape)
    lin_x = np.sum(g * conv2d_forward(dx_dir, w, np.zeros(3), stride, padding, dilation))
    lin_w = np.sum(g * conv2d_forward(x, dw_dir, np.zeros(3), stride, padding, dilation))
    assert np.sum(dx * dx_dir) == pytest.approx(lin_x, rel=1e-10, abs=1e-10)
    assert np.sum(dw * dw_dir) == pytest.approx(lin_w, rel=1e-10, abs=1e-10)
    np.testing.assert_allclose(db, g.sum(axis=(0, 1, 2)))


def test_conv_backward_can_skip_input_gradient(rng):
    x = rng.standard_normal((1, 6, 6, 1))
    w = rng.standard_normal((3, 3, 1, 2))
    dx, dw, _ = conv2d_backward(np.ones((1, 4, 4, 2)), x, w, 1, 0, 1, need_input_grad=False)
    assert dx is None and dw.shape == w.shape


def test_linear_weight_gradient_is_outer_product(rng):
    layer = Linear("fc", 4, 3)
    params = {"fc.weight": rng.standard_normal((4, 3)), "fc.bias": rng.standard_normal(3)}
    x = rng.standard_normal((1, 4))
    _, cache = layer.forward(params, x)
    g = rng.standard_normal((1, 3))
    dx, grads = layer.backward(params, g, cache)
    np.testing.assert_allclose(grads["fc.weight"], np.outer(x[0], g[0]))
    np.testing.assert_allclose(grads["fc.bias"], g[0])
    np.testing.assert_allclose(dx, g @ params["fc.weight"].T)


@pytest.mark.parametrize("name", sorted(ACTIVATIONS))
def test_activation_derivative_matches_difference_quotient(name):
    act = Activation(name)
    z = np.linspace(-3, 3, 61)
    z = z[np.abs(z) > 1e-3]  # stay off the kink of the relu family
    h = 1e-6
    num = (act.forward({}, z + h)[0] - act.forward({}, z - h)[0]) / (2 * h)
    _, cache = act.forward({}, z)
    ana, _ = act.backward({}, np.ones_like(z), cache)
    np.testing.assert_allclose(ana, num, rtol=1e-7, atol=1e-9)


def test_unknown_activation():
    with pytest.raises(ValueError, match="unknown activation"):
        Activation("swish")


def test_flatten_round_trip(rng):
    x = rng.standard_normal((2, 3, 4, 5))
    out, shape = Flatten().forward({}, x)
    assert out.shape == (2, 60)
    back, _ = Flatten().backward({}, out, shape)
    np.testing.assert_array_equal(back, x)


def test_conv_layer_shapes():
    conv = Conv2D("c", 1, 8, 5, padding=3)
    assert conv.output_shape(64, 128) == (66, 130, 8)
    assert conv.param_shapes() == {"c.weight": (5, 5, 1, 8), "c.bias": (8,)}
    assert conv.fan_in() == 25
