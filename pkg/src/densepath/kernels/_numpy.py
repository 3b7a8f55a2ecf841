"""Pure-numpy convolution and pooling kernels.

All arrays are N×C×H×W. Padding is symmetric zero padding (``-inf`` for max
pooling). Convolution is cross-correlation, no kernel flip.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _windows(xp, kh, kw, sh, sw):
    # N, C, OH, OW, Kh, Kw view into the padded input
    return sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::sh, ::sw]


def _pad(x, ph, pw, value=0.0):
    if ph == 0 and pw == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)), constant_values=value)


def conv2d_forward(x, w, sh, sw, ph, pw):
    """Return the output and a context for :func:`conv2d_backward` (unused here)."""
    kh, kw = w.shape[2], w.shape[3]
    win = _windows(_pad(x, ph, pw), kh, kw, sh, sw)
    y = np.tensordot(win, w, axes=([1, 4, 5], [1, 2, 3]))
    return np.ascontiguousarray(y.transpose(0, 3, 1, 2)), None


def conv2d_backward(x, w, gy, sh, sw, ph, pw, cols=None):
    n, c, h, wd = x.shape
    kh, kw = w.shape[2], w.shape[3]
    oh, ow = gy.shape[2], gy.shape[3]
    win = _windows(_pad(x, ph, pw), kh, kw, sh, sw)
    gw = np.tensordot(gy, win, axes=([0, 2, 3], [0, 2, 3]))
    # N, OH, OW, C, Kh, Kw
    gcols = np.tensordot(gy, w, axes=([1], [0]))
    gxp = np.zeros((n, c, h + 2 * ph, wd + 2 * pw), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            gxp[:, :, i:i + sh * oh:sh, j:j + sw * ow:sw] += gcols[..., i, j].transpose(0, 3, 1, 2)
    gx = gxp[:, :, ph:ph + h, pw:pw + wd]
    return np.ascontiguousarray(gx), np.ascontiguousarray(gw)


def maxpool2d_forward(x, kh, kw, sh, sw, ph, pw):
    """Return pooled values and, per output, the flat in-plane index of the
    winning input element (first occurrence in row-major window order)."""
    n, c, h, wd = x.shape
    win = _windows(_pad(x, ph, pw, -np.inf), kh, kw, sh, sw)
    oh, ow = win.shape[2], win.shape[3]
    flat = win.reshape(n, c, oh, ow, kh * kw)
    arg = np.argmax(flat, axis=-1)
    y = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]
    di, dj = np.divmod(arg, kw)
    rows = np.arange(oh)[:, None] * sh - ph + di
    cols = np.arange(ow)[None, :] * sw - pw + dj
    return np.ascontiguousarray(y), (rows * wd + cols).astype(np.int64)


def maxpool2d_backward(gy, idx, x_shape):
    n, c, h, wd = x_shape
    gx = np.zeros((n * c, h * wd), dtype=gy.dtype)
    plane = np.repeat(np.arange(n * c), idx[0, 0].size)
    np.add.at(gx, (plane, idx.reshape(-1)), gy.reshape(-1))
    return gx.reshape(x_shape)


def avgpool2d_forward(x, kh, kw, sh, sw, ph, pw):
    win = _windows(_pad(x, ph, pw), kh, kw, sh, sw)
    return np.ascontiguousarray(win.sum(axis=(4, 5)) / (kh * kw))


def avgpool2d_backward(gy, x_shape, kh, kw, sh, sw, ph, pw):
    n, c, h, wd = x_shape
    oh, ow = gy.shape[2], gy.shape[3]
    share = gy / (kh * kw)
    gxp = np.zeros((n, c, h + 2 * ph, wd + 2 * pw), dtype=gy.dtype)
    for i in range(kh):
        for j in range(kw):
            gxp[:, :, i:i + sh * oh:sh, j:j + sw * ow:sw] += share
    return np.ascontiguousarray(gxp[:, :, ph:ph + h, pw:pw + wd])
