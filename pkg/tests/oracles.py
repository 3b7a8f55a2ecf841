"""Independent reference implementations used as test oracles.

None of these touch the package's kernels or its backward pass.
"""

import math

import numpy as np


def conv2d_loops(x, w, stride=(1, 1), padding=(0, 0)):
    """Direct summation over every output element and receptive-field tap."""
    n, c, h, wd = x.shape
    oc, _, kh, kw = w.shape
    sh, sw = stride
    ph, pw = padding
    oh = (h + 2 * ph - kh) // sh + 1
    ow = (wd + 2 * pw - kw) // sw + 1
    xl, wl = x.tolist(), w.tolist()
    y = [[[[0.0] * ow for _ in range(oh)] for _ in range(oc)] for _ in range(n)]
    for b in range(n):
        for o in range(oc):
            for i in range(oh):
                for j in range(ow):
                    acc = 0.0
                    for ci in range(c):
                        for ki in range(kh):
                            hi = i * sh - ph + ki
                            if hi < 0 or hi >= h:
                                continue
                            for kj in range(kw):
                                wj = j * sw - pw + kj
                                if wj < 0 or wj >= wd:
                                    continue
                                acc += xl[b][ci][hi][wj] * wl[o][ci][ki][kj]
                    y[b][o][i][j] = acc
    return np.array(y, dtype=np.float64).reshape(n, oc, oh, ow)


def conv2d_grads_loops(x, w, gy, stride=(1, 1), padding=(0, 0)):
    """Input and kernel gradients by scattering every product back."""
    n, c, h, wd = x.shape
    oc, _, kh, kw = w.shape
    sh, sw = stride
    ph, pw = padding
    oh, ow = gy.shape[2], gy.shape[3]
    xl, wl, gl = x.tolist(), w.tolist(), gy.tolist()
    gx = np.zeros(x.shape).tolist()
    gw = np.zeros(w.shape).tolist()
    for b in range(n):
        for o in range(oc):
            for i in range(oh):
                for j in range(ow):
                    g = gl[b][o][i][j]
                    for ci in range(c):
                        for ki in range(kh):
                            hi = i * sh - ph + ki
                            if hi < 0 or hi >= h:
                                continue
                            for kj in range(kw):
                                wj = j * sw - pw + kj
                                if wj < 0 or wj >= wd:
                                    continue
                                gx[b][ci][hi][wj] += g * wl[o][ci][ki][kj]
                                gw[o][ci][ki][kj] += g * xl[b][ci][hi][wj]
    return np.array(gx).reshape(x.shape), np.array(gw).reshape(w.shape)


def pool_scan(x, kind, window, stride):
    """Brute-force window scan; max gradient goes to the first maximum."""
    n, c, h, wd = x.shape
    kh, kw = window
    sh, sw = stride
    oh, ow = (h - kh) // sh + 1, (wd - kw) // sw + 1
    y = np.zeros((n, c, oh, ow))
    route = np.zeros((n, c, oh, ow, 2), dtype=int)
    for b in range(n):
        for ch in range(c):
            for i in range(oh):
                for j in range(ow):
                    vals = [(x[b, ch, i * sh + a, j * sw + d], i * sh + a, j * sw + d)
                            for a in range(kh) for d in range(kw)]
                    if kind == "max":
                        best = vals[0]
                        for v in vals[1:]:
                            if v[0] > best[0]:
                                best = v
                        y[b, ch, i, j] = best[0]
                        route[b, ch, i, j] = best[1:]
                    else:
                        y[b, ch, i, j] = sum(v[0] for v in vals) / len(vals)
    return y, route


def bn_scalar(values, gamma=1.0, beta=0.0, eps=1e-5):
    m = sum(values) / len(values)
    var = sum((v - m) ** 2 for v in values) / len(values)
    return [gamma * (v - m) / math.sqrt(var + eps) + beta for v in values]


def bce_scalar(ps, ys, eps=1e-7):
    total = 0.0
    for p, y in zip(ps, ys):
        p = min(max(p, eps), 1 - eps)
        total += -(y * math.log(p) + (1 - y) * math.log(1 - p))
    return total / len(ps)


def adam_scalar(p, grad, steps, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """Scalar Adam trajectory. ``grad(p, t)`` gives the gradient at step t (1-based)."""
    m = v = 0.0
    traj = []
    for t in range(1, steps + 1):
        g = grad(p, t)
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        mhat = m / (1 - beta1 ** t)
        vhat = v / (1 - beta2 ** t)
        p = p - lr * mhat / (math.sqrt(vhat) + eps)
        traj.append(p)
    return traj


def auc_pairwise(scores, labels):
    """Mann-Whitney: fraction of (pos, neg) pairs ranked correctly, ties 1/2."""
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    wins = 0.0
    for a in pos:
        for b in neg:
            wins += 1.0 if a > b else 0.5 if a == b else 0.0
    return wins / (len(pos) * len(neg))


def roc_sweep(scores, labels):
    """Confusion-matrix sweep at every distinct threshold, highest first."""
    npos = sum(labels)
    nneg = len(labels) - npos
    pts = [(0.0, 0.0)]
    for t in sorted(set(scores), reverse=True):
        tp = sum(1 for s, y in zip(scores, labels) if s >= t and y == 1)
        fp = sum(1 for s, y in zip(scores, labels) if s >= t and y == 0)
        pts.append((fp / nneg, tp / npos))
    return pts


def numeric_grad(f, x, h=1e-5, index=None):
    """Central differences of scalar ``f()`` w.r.t. array ``x`` (perturbed in place).

    ``index`` limits the check to the given flat indices.
    """
    flat = x.reshape(-1)
    idx = range(flat.size) if index is None else index
    out = {}
    for i in idx:
        orig = flat[i]
        flat[i] = orig + h
        fp = f()
        flat[i] = orig - h
        fm = f()
        flat[i] = orig
        out[i] = (fp - fm) / (2 * h)
    return out


def grad_mismatches(analytic, numeric, rtol=1e-4, atol=1e-7):
    """Indices where the analytic and numeric derivatives disagree."""
    a = analytic.reshape(-1)
    bad = []
    for i, n in numeric.items():
        diff = abs(a[i] - n)
        if diff <= atol:
            continue
        if diff / max(abs(a[i]), abs(n)) > rtol:
            bad.append((i, a[i], n))
    return bad
