"""Time the numpy and numba kernel backends on model-sized shapes.

    python benchmarks/bench_kernels.py [--repeat 20]
"""
import argparse
import timeit

import numpy as np

from densepath import kernels

CASES = [
    # (label, x shape, w shape, stride, pad)
    ("conv 3x3, 32ch @32x32", (32, 32, 32, 32), (16, 32, 3, 3), 1, 1),
    ("conv 1x1, 64ch @16x16", (32, 64, 16, 16), (32, 64, 1, 1), 1, 0),
    ("conv 7x7 stem @96x96", (8, 3, 96, 96), (64, 3, 7, 7), 1, 3),
]
POOLS = [
    ("maxpool 3/2 @96x96", (8, 64, 96, 96), (3, 3, 2, 2, 1, 1)),
    ("avgpool 2/2 @32x32", (32, 64, 32, 32), (2, 2, 2, 2, 0, 0)),
]


def bench(fn, repeat):
    fn()  # warm-up; also triggers numba compilation
    return min(timeit.repeat(fn, number=1, repeat=repeat)) * 1e3


def run(name, repeat, r):
    k = kernels.load(name)
    rows = []
    for label, xs, ws, s, p in CASES:
        x, w = r.normal(size=xs), r.normal(size=ws)
        y, ctx = k.conv2d_forward(x, w, s, s, p, p)
        gy = r.normal(size=y.shape)
        rows.append((label + " fwd", bench(lambda: k.conv2d_forward(x, w, s, s, p, p), repeat)))
        rows.append((label + " bwd", bench(lambda: k.conv2d_backward(x, w, gy, s, s, p, p, ctx), repeat)))
    for label, xs, args in POOLS:
        x = r.normal(size=xs)
        y, idx = k.maxpool2d_forward(x, *args)
        gy = r.normal(size=y.shape)
        if label.startswith("max"):
            rows.append((label + " fwd", bench(lambda: k.maxpool2d_forward(x, *args), repeat)))
            rows.append((label + " bwd", bench(lambda: k.maxpool2d_backward(gy, idx, x.shape), repeat)))
        else:
            rows.append((label + " fwd", bench(lambda: k.avgpool2d_forward(x, *args), repeat)))
            rows.append((label + " bwd", bench(lambda: k.avgpool2d_backward(gy, x.shape, *args), repeat)))
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=10)
    args = ap.parse_args()
    names = [n for n in kernels.BACKENDS if n != "numba" or kernels.numba_available()]
    results = {n: run(n, args.repeat, np.random.default_rng(0)) for n in names}
    print(f"{'kernel':34s}" + "".join(f"{n + ' ms':>12s}" for n in names)
          + ("  numba gain" if len(names) == 2 else ""))
    for i, (label, _) in enumerate(results[names[0]]):
        t = [results[n][i][1] for n in names]
        line = f"{label:34s}" + "".join(f"{v:12.2f}" for v in t)
        if len(t) == 2:
            line += f"{t[1] / t[0]:11.2f}x"
        print(line)


if __name__ == "__main__":
    main()
