"""Layers with explicit forward and backward passes.

Tensors are channels-last: images are ``(batch, height, width, channels)`` and
dense activations ``(batch, features)``. Each ``forward`` returns the output
and a cache; ``backward`` consumes the cache and the upstream gradient and
returns the input gradient plus a dict of parameter gradients.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LEAKY_SLOPE = 0.01


class ShapeError(ValueError):
    pass


# ----------------------------------------------------------------------------
# activations

def _tanh(z):
    y = np.tanh(z)
    return y, y


def _tanh_grad(g, y):
    return g * (1.0 - y * y)


def _sigmoid(z):
    y = 0.5 * (1.0 + np.tanh(0.5 * z))
    return y, y


def _sigmoid_grad(g, y):
    return g * y * (1.0 - y)


def _relu(z):
    return np.maximum(z, 0.0), z


def _relu_grad(g, z):
    return g * (z > 0)


def _leaky_relu(z):
    return np.where(z > 0, z, LEAKY_SLOPE * z), z


def _leaky_relu_grad(g, z):
    return g * np.where(z > 0, 1.0, LEAKY_SLOPE)


ACTIVATIONS = {
    "tanh": (_tanh, _tanh_grad),
    "sigmoid": (_sigmoid, _sigmoid_grad),
    "relu": (_relu, _relu_grad),
    "leaky_relu": (_leaky_relu, _leaky_relu_grad),
}


class Activation:
    def __init__(self, name: str):
        if name not in ACTIVATIONS:
            raise ValueError(f"unknown activation {name!r}; choose from {sorted(ACTIVATIONS)}")
        self.name = name
        self._fwd, self._bwd = ACTIVATIONS[name]

    def forward(self, params, x):
        return self._fwd(x)

    def backward(self, params, g, cache):
        return self._bwd(g, cache), {}

    def param_shapes(self):
        return {}


# ----------------------------------------------------------------------------
# convolution

def conv_output_size(size: int, kernel: int, stride: int, padding: int, dilation: int) -> int:
    return (size + 2 * padding - dilation * (kernel - 1) - 1) // stride + 1


def _windows(xp, k: int, stride: int, dilation: int, ho: int, wo: int):
    """Strided view (B, ho, wo, k, k, C) of every receptive field of ``xp``."""
    b, hp, wp, c = xp.shape
    sb, sh, sw, sc = xp.strides
    return np.lib.stride_tricks.as_strided(
        xp,
        shape=(b, ho, wo, k, k, c),
        strides=(sb, sh * stride, sw * stride, sh * dilation, sw * dilation, sc),
        writeable=False,
    )


# below this many input channels im2col beats per-tap accumulation
_TAP_MIN_CHANNELS = 4


def _tap_slices(i, j, stride, dilation, ho, wo):
    r0, c0 = i * dilation, j * dilation
    return slice(r0, r0 + stride * (ho - 1) + 1, stride), slice(c0, c0 + stride * (wo - 1) + 1, stride)


def conv2d_forward(x, weight, bias, stride: int = 1, padding: int = 0, dilation: int = 1):
    """Cross-correlation of ``x`` (B, H, W, C) with ``weight`` (k, k, C, C_out).

    A 3-D ``x`` is treated as a single image. Few input channels: one matrix
    product over unrolled receptive fields (im2col). Otherwise the k*k kernel
    taps are accumulated one strided view at a time, which avoids the copy.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 3:
        return conv2d_forward(x[None], weight, bias, stride, padding, dilation)[0]
    b, h, w, c = x.shape
    k = weight.shape[0]
    if weight.shape[2] != c:
        raise ShapeError(f"kernel expects {weight.shape[2]} channels, input has {c}")
    span = dilation * (k - 1) + 1
    if span > h + 2 * padding or span > w + 2 * padding:
        raise ShapeError(f"kernel span {span} larger than padded input {h + 2 * padding}x{w + 2 * padding}")
    ho = conv_output_size(h, k, stride, padding, dilation)
    wo = conv_output_size(w, k, stride, padding, dilation)
    xp = np.pad(x, ((0, 0), (padding, padding), (padding, padding), (0, 0))) if padding else x
    if c < _TAP_MIN_CHANNELS:
        cols = _windows(xp, k, stride, dilation, ho, wo).reshape(b * ho * wo, k * k * c)
        out = cols @ weight.reshape(k * k * c, -1)
        out += bias
        return out.reshape(b, ho, wo, -1)
    out = np.empty((b, ho, wo, weight.shape[3]))
    out[...] = bias
    for i in range(k):
        for j in range(k):
            rs, cs = _tap_slices(i, j, stride, dilation, ho, wo)
            out += xp[:, rs, cs, :] @ weight[i, j]
    return out


def conv2d_backward(g, x, weight, stride: int, padding: int, dilation: int, need_input_grad: bool = True):
    """Gradients of :func:`conv2d_forward` w.r.t. input, weight and bias.

    The input gradient is ``None`` when ``need_input_grad`` is false.
    """
    b, h, w, c = x.shape
    k = weight.shape[0]
    _, ho, wo, c_out = g.shape
    xp = np.pad(x, ((0, 0), (padding, padding), (padding, padding), (0, 0))) if padding else x
    g2 = g.reshape(-1, c_out)
    cols = _windows(xp, k, stride, dilation, ho, wo).reshape(-1, k * k * c)
    dweight = (cols.T @ g2).reshape(weight.shape)
    dbias = g2.sum(axis=0)
    if not need_input_grad:
        return None, dweight, dbias
    if stride == 1:
        # full correlation of the upstream gradient with the flipped kernel
        span = dilation * (k - 1)
        flipped = weight[::-1, ::-1].transpose(0, 1, 3, 2)
        dxp = conv2d_forward(g, flipped, np.zeros(c), 1, span, dilation)
        return dxp[:, padding : padding + h, padding : padding + w, :], dweight, dbias
    dcols = (g2 @ weight.reshape(k * k * c, c_out).T).reshape(b, ho, wo, k, k, c)
    dxp = np.zeros_like(xp)
    for i in range(k):
        for j in range(k):
            rs, cs = _tap_slices(i, j, stride, dilation, ho, wo)
            dxp[:, rs, cs, :] += dcols[:, :, :, i, j, :]
    dx = dxp[:, padding : padding + h, padding : padding + w, :] if padding else dxp
    return dx, dweight, dbias


@dataclass
class Conv2D:
    name: str
    in_channels: int
    out_channels: int
    kernel: int
    stride: int = 1
    padding: int = 0
    dilation: int = 1
    # the first layer's input is the data itself, which needs no gradient
    need_input_grad: bool = True

    def param_shapes(self):
        return {
            f"{self.name}.weight": (self.kernel, self.kernel, self.in_channels, self.out_channels),
            f"{self.name}.bias": (self.out_channels,),
        }

    def fan_in(self) -> int:
        return self.kernel * self.kernel * self.in_channels

    def output_shape(self, h: int, w: int) -> tuple[int, int, int]:
        return (
            conv_output_size(h, self.kernel, self.stride, self.padding, self.dilation),
            conv_output_size(w, self.kernel, self.stride, self.padding, self.dilation),
            self.out_channels,
        )

    def forward(self, params, x):
        out = conv2d_forward(
            x, params[f"{self.name}.weight"], params[f"{self.name}.bias"], self.stride, self.padding, self.dilation
        )
        return out, x

    def backward(self, params, g, x):
        dx, dw, db = conv2d_backward(
            g, x, params[f"{self.name}.weight"], self.stride, self.padding, self.dilation, self.need_input_grad
        )
        return dx, {f"{self.name}.weight": dw, f"{self.name}.bias": db}


# ----------------------------------------------------------------------------
# dense

@dataclass
class Linear:
    name: str
    in_features: int
    out_features: int

    def param_shapes(self):
        return {
            f"{self.name}.weight": (self.in_features, self.out_features),
            f"{self.name}.bias": (self.out_features,),
        }

    def fan_in(self) -> int:
        return self.in_features

    def forward(self, params, x):
        return x @ params[f"{self.name}.weight"] + params[f"{self.name}.bias"], x

    def backward(self, params, g, x):
        grads = {f"{self.name}.weight": x.T @ g, f"{self.name}.bias": g.sum(axis=0)}
        return g @ params[f"{self.name}.weight"].T, grads


class Flatten:
    def param_shapes(self):
        return {}

    def forward(self, params, x):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, params, g, shape):
        return g.reshape(shape), {}
