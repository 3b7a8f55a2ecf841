"""Differentiable operations on :class:`~densepath.tensor.Tensor`.

Image tensors use N×C×H×W layout throughout.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ShapeError
from .tensor import Tensor

BCE_EPS = 1e-7


def _pair(v):
    if isinstance(v, (tuple, list)):
        if len(v) != 2:
            raise ValueError(f"expected an int or a pair, got {v!r}")
        return int(v[0]), int(v[1])
    return int(v), int(v)


def _require_4d(x, what):
    if x.ndim != 4:
        raise ShapeError(f"{what} expects an N×C×H×W tensor, got shape {x.shape}")


@dataclass
class ConvParams:
    kernel: Tensor
    bias: Tensor | None = None
    stride: tuple = (1, 1)
    padding: tuple = (0, 0)

    def __post_init__(self):
        self.stride = _pair(self.stride)
        self.padding = _pair(self.padding)
        if min(self.stride) < 1:
            raise ValueError(f"stride must be positive, got {self.stride}")
        if min(self.padding) < 0:
            raise ValueError(f"padding must be non-negative, got {self.padding}")


@dataclass
class BatchNormParams:
    gamma: Tensor
    beta: Tensor
    running_mean: np.ndarray = None
    running_var: np.ndarray = None
    eps: float = 1e-5
    momentum: float = 0.1
    training: bool = True

    def __post_init__(self):
        c = self.gamma.shape[0]
        dt = self.gamma.dtype
        if self.running_mean is None:
            self.running_mean = np.zeros(c, dtype=dt)
        if self.running_var is None:
            self.running_var = np.ones(c, dtype=dt)
        if not 0.0 < self.momentum < 1.0:
            raise ValueError(f"momentum must lie in (0, 1), got {self.momentum}")
        if self.eps <= 0:
            raise ValueError(f"eps must be positive, got {self.eps}")


def conv_output_extent(size, kernel, stride, pad):
    """Output extent of a strided, padded window sweep; None if it does not fit."""
    span = size + 2 * pad - kernel
    if span < 0:
        return None
    return span // stride + 1


def conv2d(x, params):
    """Cross-correlate ``x`` with ``params.kernel`` (no flip), plus bias."""
    _require_4d(x, "conv2d")
    w = params.kernel
    if w.ndim != 4:
        raise ShapeError(f"conv2d kernel must be OutC×InC×Kh×Kw, got {w.shape}")
    if x.shape[1] != w.shape[1]:
        raise ShapeError(
            f"conv2d channel mismatch: input {x.shape} has {x.shape[1]} channels, "
            f"kernel {w.shape} expects {w.shape[1]}"
        )
    (sh, sw), (ph, pw) = params.stride, params.padding
    for axis, k, s, p in ((2, w.shape[2], sh, ph), (3, w.shape[3], sw, pw)):
        span = x.shape[axis] + 2 * p - k
        if span < 0 or span % s:
            raise ShapeError(
                f"conv2d output extent is not a positive integer: input {x.shape}, "
                f"kernel {w.shape}, stride {params.stride}, padding {params.padding}"
            )
    xd, wd = x.data, w.data
    y, ctx = kernels.conv2d_forward(xd, wd, sh, sw, ph, pw)
    parents = [x, w]
    if params.bias is not None:
        b = params.bias
        if b.shape != (w.shape[0],):
            raise ShapeError(f"conv2d bias shape {b.shape} does not match kernel {w.shape}")
        y = y + b.data.reshape(1, -1, 1, 1)
        parents.append(b)

    def back(g):
        need_x, need_w = x.requires_grad, w.requires_grad
        gx = gw = None
        if need_x or need_w:
            gx, gw = kernels.conv2d_backward(xd, wd, g, sh, sw, ph, pw, ctx)
        out = [gx if need_x else None, gw if need_w else None]
        if len(parents) == 3:
            out.append(g.sum(axis=(0, 2, 3)))
        return out

    return Tensor._from_op(y, parents, back, "conv2d")


def batch_norm2d(x, params):
    """Per-channel batch normalisation.

    Training mode normalises with biased batch statistics and folds them into
    the running estimates (unbiased variance); inference uses the running
    estimates only.
    """
    _require_4d(x, "batch_norm2d")
    n, c, h, w = x.shape
    if params.gamma.shape != (c,) or params.beta.shape != (c,):
        raise ShapeError(
            f"batch_norm2d parameters of shape {params.gamma.shape} do not match input {x.shape}"
        )
    m = n * h * w
    if m == 0:
        raise ShapeError(f"batch_norm2d got an empty channel plane, input {x.shape}")
    xd = x.data
    gamma = params.gamma.data.reshape(1, c, 1, 1)
    beta = params.beta.data.reshape(1, c, 1, 1)
    if params.training:
        if m < 2:
            raise ShapeError(
                f"batch_norm2d in training mode needs at least 2 values per channel, input {x.shape}"
            )
        mean = xd.mean(axis=(0, 2, 3))
        var = xd.var(axis=(0, 2, 3))
        mom = params.momentum
        params.running_mean[...] = (1 - mom) * params.running_mean + mom * mean
        params.running_var[...] = (1 - mom) * params.running_var + mom * var * (m / (m - 1))
    else:
        mean, var = params.running_mean, params.running_var
    inv_std = 1.0 / np.sqrt(var + params.eps)
    xhat = (xd - mean.reshape(1, c, 1, 1)) * inv_std.reshape(1, c, 1, 1)
    y = gamma * xhat + beta
    training = params.training

    def back(g):
        gbeta = g.sum(axis=(0, 2, 3))
        ggamma = (g * xhat).sum(axis=(0, 2, 3))
        gxhat = g * gamma
        if training:
            mean_g = gxhat.mean(axis=(0, 2, 3), keepdims=True)
            mean_gx = (gxhat * xhat).mean(axis=(0, 2, 3), keepdims=True)
            gx = (gxhat - mean_g - xhat * mean_gx) * inv_std.reshape(1, c, 1, 1)
        else:
            gx = gxhat * inv_std.reshape(1, c, 1, 1)
        return gx, ggamma, gbeta

    return Tensor._from_op(y, (x, params.gamma, params.beta), back, "batch_norm2d")


def relu(x):
    xd = x.data
    mask = xd > 0

    def back(g):
        return (g * mask,)

    return Tensor._from_op(np.where(mask, xd, 0.0).astype(xd.dtype, copy=False), (x,), back, "relu")


def pool2d(x, kind, window, stride=None, padding=0):
    """Max or average pooling. Max ties go to the first element in row-major
    window order; average pooling divides by the full window size."""
    _require_4d(x, "pool2d")
    kh, kw = _pair(window)
    sh, sw = _pair(stride if stride is not None else window)
    ph, pw = _pair(padding)
    oh = conv_output_extent(x.shape[2], kh, sh, ph)
    ow = conv_output_extent(x.shape[3], kw, sw, pw)
    if oh is None or ow is None or oh < 1 or ow < 1:
        raise ShapeError(
            f"pool2d window {(kh, kw)} does not fit padded input {x.shape} (padding {(ph, pw)})"
        )
    if (kind == "max" and (ph >= kh or pw >= kw)):
        raise ShapeError(f"max pooling padding {(ph, pw)} must be smaller than window {(kh, kw)}")
    shape = x.shape
    if kind == "max":
        y, idx = kernels.maxpool2d_forward(x.data, kh, kw, sh, sw, ph, pw)

        def back(g):
            return (kernels.maxpool2d_backward(np.ascontiguousarray(g), idx, shape),)

    elif kind in ("avg", "average", "mean"):
        y = kernels.avgpool2d_forward(x.data, kh, kw, sh, sw, ph, pw)

        def back(g):
            return (kernels.avgpool2d_backward(np.ascontiguousarray(g), shape, kh, kw, sh, sw, ph, pw),)

    else:
        raise ValueError(f"unknown pooling kind {kind!r}; expected 'max' or 'average'")
    return Tensor._from_op(y, (x,), back, f"{kind}pool2d")


def global_avg_pool(x):
    """Average each channel plane: N×C×H×W -> N×C."""
    _require_4d(x, "global_avg_pool")
    n, c, h, w = x.shape

    def back(g):
        return (np.broadcast_to(g[:, :, None, None] / (h * w), x.shape).copy(),)

    return Tensor._from_op(x.data.mean(axis=(2, 3)), (x,), back, "global_avg_pool")


def linear(x, weight, bias):
    """Affine map N×F @ F×G + G."""
    if x.ndim != 2 or weight.ndim != 2 or x.shape[1] != weight.shape[0]:
        raise ShapeError(f"linear shape mismatch: input {x.shape}, weight {weight.shape}")
    if bias.shape != (weight.shape[1],):
        raise ShapeError(f"linear bias shape {bias.shape} does not match weight {weight.shape}")
    xd, wd = x.data, weight.data

    def back(g):
        return g @ wd.T, xd.T @ g, g.sum(axis=0)

    return Tensor._from_op(xd @ wd + bias.data, (x, weight, bias), back, "linear")


def concat_channels(inputs):
    """Concatenate along the channel axis, in argument order."""
    inputs = list(inputs)
    if not inputs:
        raise ShapeError("concat_channels needs at least one input")
    ref = inputs[0]
    _require_4d(ref, "concat_channels")
    for i, t in enumerate(inputs[1:], start=1):
        if t.ndim != 4 or t.shape[0] != ref.shape[0] or t.shape[2:] != ref.shape[2:]:
            raise ShapeError(
                f"concat_channels input {i} has shape {t.shape}, incompatible with input 0 {ref.shape}"
            )
    offsets = np.cumsum([0] + [t.shape[1] for t in inputs])

    def back(g):
        return [g[:, offsets[i]:offsets[i + 1]] for i in range(len(inputs))]

    data = np.concatenate([t.data for t in inputs], axis=1)
    return Tensor._from_op(data, inputs, back, "concat_channels")


def _stable_sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def sigmoid(x):
    s = _stable_sigmoid(np.asarray(x.data))

    def back(g):
        return (g * s * (1.0 - s),)

    return Tensor._from_op(s, (x,), back, "sigmoid")


def bce_loss(scores, labels):
    """Mean binary cross-entropy of probabilities against 0/1 labels.

    Probabilities are clamped to ``[1e-7, 1 - 1e-7]`` before the log; the
    clamp passes no gradient where it is active.
    """
    y = labels.data if isinstance(labels, Tensor) else np.asarray(labels)
    if scores.shape != y.shape:
        raise ShapeError(f"bce_loss scores {scores.shape} and labels {y.shape} differ in shape")
    bad = ~np.isin(y, (0, 1))
    if bad.any():
        i = int(np.flatnonzero(bad.reshape(-1))[0])
        raise ValueError(f"bce_loss label at index {i} is {y.reshape(-1)[i]!r}, expected 0 or 1")
    y = y.astype(scores.dtype)
    p = scores.data
    pc = np.clip(p, BCE_EPS, 1.0 - BCE_EPS)
    n = p.size
    loss = -(y * np.log(pc) + (1.0 - y) * np.log(1.0 - pc)).mean()
    inside = (p >= BCE_EPS) & (p <= 1.0 - BCE_EPS)

    def back(g):
        d = (-(y / pc) + (1.0 - y) / (1.0 - pc)) / n
        return (g * d * inside,)

    return Tensor._from_op(np.asarray(loss, dtype=scores.dtype), (scores,), back, "bce_loss")


__all__ = [
    "BatchNormParams",
    "ConvParams",
    "batch_norm2d",
    "bce_loss",
    "concat_channels",
    "conv2d",
    "conv_output_extent",
    "global_avg_pool",
    "linear",
    "pool2d",
    "relu",
    "sigmoid",
]
