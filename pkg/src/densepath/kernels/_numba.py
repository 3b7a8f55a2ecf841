"""Numba-jitted kernels, signature-compatible with :mod:`._numpy`.

Convolution goes through an explicit im2col / col2im pair; the two GEMMs stay
on BLAS via ``np.dot``. Loops run serially so reductions have a fixed order.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def _im2col(x, kh, kw, sh, sw, ph, pw, oh, ow):
    n, c, h, wd = x.shape
    cols = np.zeros((n * oh * ow, c * kh * kw), dtype=x.dtype)
    for b in range(n):
        for oi in range(oh):
            for oj in range(ow):
                r = (b * oh + oi) * ow + oj
                for ch in range(c):
                    for i in range(kh):
                        hi = oi * sh - ph + i
                        if hi < 0 or hi >= h:
                            continue
                        for j in range(kw):
                            wj = oj * sw - pw + j
                            if wj < 0 or wj >= wd:
                                continue
                            cols[r, (ch * kh + i) * kw + j] = x[b, ch, hi, wj]
    return cols


@njit(cache=True)
def _col2im(gcols, n, c, h, wd, kh, kw, sh, sw, ph, pw, oh, ow):
    gx = np.zeros((n, c, h, wd), dtype=gcols.dtype)
    for b in range(n):
        for oi in range(oh):
            for oj in range(ow):
                r = (b * oh + oi) * ow + oj
                for ch in range(c):
                    for i in range(kh):
                        hi = oi * sh - ph + i
                        if hi < 0 or hi >= h:
                            continue
                        for j in range(kw):
                            wj = oj * sw - pw + j
                            if wj < 0 or wj >= wd:
                                continue
                            gx[b, ch, hi, wj] += gcols[r, (ch * kh + i) * kw + j]
    return gx


def _out_extent(x, w, sh, sw, ph, pw):
    oh = (x.shape[2] + 2 * ph - w.shape[2]) // sh + 1
    ow = (x.shape[3] + 2 * pw - w.shape[3]) // sw + 1
    return oh, ow


def conv2d_forward(x, w, sh, sw, ph, pw):
    """Return the output and the im2col matrix (reused by the backward pass)."""
    n = x.shape[0]
    oc, _, kh, kw = w.shape
    oh, ow = _out_extent(x, w, sh, sw, ph, pw)
    cols = _im2col(np.ascontiguousarray(x), kh, kw, sh, sw, ph, pw, oh, ow)
    y = np.dot(cols, w.reshape(oc, -1).T)
    return np.ascontiguousarray(y.reshape(n, oh, ow, oc).transpose(0, 3, 1, 2)), cols


def conv2d_backward(x, w, gy, sh, sw, ph, pw, cols=None):
    n, c, h, wd = x.shape
    oc, _, kh, kw = w.shape
    oh, ow = gy.shape[2], gy.shape[3]
    if cols is None:
        cols = _im2col(np.ascontiguousarray(x), kh, kw, sh, sw, ph, pw, oh, ow)
    gmat = np.ascontiguousarray(gy.transpose(0, 2, 3, 1)).reshape(-1, oc)
    gw = np.dot(gmat.T, cols).reshape(w.shape)
    gcols = np.dot(gmat, w.reshape(oc, -1))
    gx = _col2im(gcols, n, c, h, wd, kh, kw, sh, sw, ph, pw, oh, ow)
    return gx, gw


@njit(cache=True)
def _maxpool_fwd(x, kh, kw, sh, sw, ph, pw, oh, ow):
    n, c, h, wd = x.shape
    y = np.empty((n, c, oh, ow), dtype=x.dtype)
    idx = np.empty((n, c, oh, ow), dtype=np.int64)
    for b in range(n):
        for ch in range(c):
            for oi in range(oh):
                for oj in range(ow):
                    best = -np.inf
                    where = -1
                    for i in range(kh):
                        hi = oi * sh - ph + i
                        for j in range(kw):
                            wj = oj * sw - pw + j
                            if hi < 0 or hi >= h or wj < 0 or wj >= wd:
                                v = -np.inf
                            else:
                                v = x[b, ch, hi, wj]
                            # strict '>' keeps the first maximum
                            if where == -1 or v > best:
                                best = v
                                where = hi * wd + wj
                    y[b, ch, oi, oj] = best
                    idx[b, ch, oi, oj] = where
    return y, idx


@njit(cache=True)
def _maxpool_bwd(gy, idx, n, c, h, wd):
    gx = np.zeros((n, c, h * wd), dtype=gy.dtype)
    oh, ow = gy.shape[2], gy.shape[3]
    for b in range(n):
        for ch in range(c):
            for oi in range(oh):
                for oj in range(ow):
                    gx[b, ch, idx[b, ch, oi, oj]] += gy[b, ch, oi, oj]
    return gx.reshape(n, c, h, wd)


@njit(cache=True)
def _avgpool_fwd(x, kh, kw, sh, sw, ph, pw, oh, ow):
    n, c, h, wd = x.shape
    y = np.zeros((n, c, oh, ow), dtype=x.dtype)
    for b in range(n):
        for ch in range(c):
            for oi in range(oh):
                for oj in range(ow):
                    acc = 0.0
                    for i in range(kh):
                        hi = oi * sh - ph + i
                        if hi < 0 or hi >= h:
                            continue
                        for j in range(kw):
                            wj = oj * sw - pw + j
                            if wj < 0 or wj >= wd:
                                continue
                            acc += x[b, ch, hi, wj]
                    y[b, ch, oi, oj] = acc / (kh * kw)
    return y


@njit(cache=True)
def _avgpool_bwd(gy, n, c, h, wd, kh, kw, sh, sw, ph, pw):
    gx = np.zeros((n, c, h, wd), dtype=gy.dtype)
    oh, ow = gy.shape[2], gy.shape[3]
    for b in range(n):
        for ch in range(c):
            for oi in range(oh):
                for oj in range(ow):
                    share = gy[b, ch, oi, oj] / (kh * kw)
                    for i in range(kh):
                        hi = oi * sh - ph + i
                        if hi < 0 or hi >= h:
                            continue
                        for j in range(kw):
                            wj = oj * sw - pw + j
                            if wj < 0 or wj >= wd:
                                continue
                            gx[b, ch, hi, wj] += share
    return gx


def maxpool2d_forward(x, kh, kw, sh, sw, ph, pw):
    oh = (x.shape[2] + 2 * ph - kh) // sh + 1
    ow = (x.shape[3] + 2 * pw - kw) // sw + 1
    return _maxpool_fwd(np.ascontiguousarray(x), kh, kw, sh, sw, ph, pw, oh, ow)


def maxpool2d_backward(gy, idx, x_shape):
    n, c, h, wd = x_shape
    return _maxpool_bwd(np.ascontiguousarray(gy), idx, n, c, h, wd)


def avgpool2d_forward(x, kh, kw, sh, sw, ph, pw):
    oh = (x.shape[2] + 2 * ph - kh) // sh + 1
    ow = (x.shape[3] + 2 * pw - kw) // sw + 1
    return _avgpool_fwd(np.ascontiguousarray(x), kh, kw, sh, sw, ph, pw, oh, ow)


def avgpool2d_backward(gy, x_shape, kh, kw, sh, sw, ph, pw):
    n, c, h, wd = x_shape
    return _avgpool_bwd(np.ascontiguousarray(gy), n, c, h, wd, kh, kw, sh, sw, ph, pw)
