"""End-to-end acceptance criteria, one test per criterion.

Run alone with ``pytest -m acceptance``; each test prints a PASS/FAIL line and
the lines are repeated in the terminal summary.
"""
import itertools
import subprocess
import sys
import time

import numpy as np
import pytest

from densepath import architectures as A
from densepath import checkpoint as C
from densepath import data as D
from densepath import harness as H
from densepath import kernels
from densepath import metrics as M
from densepath.optim import AdamHyper, AdamState, adam_step
from densepath.tensor import Tensor, backward, zero_grads

from convsweep import run_sweep
from gradcases import OP_CASES, check_case, model_grad_case
from oracles import adam_scalar, auc_pairwise
from test_architectures import block, layer
from verdicts import verdict

pytestmark = pytest.mark.acceptance

SEEDS = range(20)


def test_gradient_suite():
    t0 = time.perf_counter()
    bad = []
    for name, make in OP_CASES.items():
        for seed in SEEDS:
            if check_case(make, seed):
                bad.append((name, seed))
    model_checked = 0
    for seed in SEEDS:
        mism, n = model_grad_case(seed)
        model_checked += n
        if mism:
            bad.append(("tiny model", seed))
    dt = time.perf_counter() - t0
    verdict("gradient suite", not bad and dt < 120,
            f"{len(OP_CASES)} ops x {len(SEEDS)} seeds, {model_checked} model coords, "
            f"{dt:.1f}s, failures={bad[:5]}")


def test_convolution_oracle():
    backends = list(kernels.BACKENDS) if kernels.numba_available() else ["numpy"]
    prev = kernels.backend
    t0 = time.perf_counter()
    report = []
    try:
        for name in backends:
            kernels.set_backend(name)
            n_int, f_int = run_sweep(integer_valued=True)
            n_flt, f_flt = run_sweep(integer_valued=False, seed=1)
            report.append((name, n_int, len(f_int), n_flt, len(f_flt)))
    finally:
        kernels.set_backend(prev)
    dt = time.perf_counter() - t0
    ok = all(fi == 0 and ff == 0 for _, _, fi, _, ff in report) and dt < 60
    verdict("convolution oracle", ok, f"{report}, {dt:.1f}s")


def _auc_cases():
    # n <= 5: every label vector against every score vector on a 3-level grid
    for n in range(2, 6):
        for y in itertools.product((0, 1), repeat=n):
            for s in itertools.product((0.25, 0.5, 0.75), repeat=n):
                yield s, y
    # 6 <= n <= 12: every label vector, with tie-heavy and tie-free scores
    r = np.random.default_rng(0)
    for n in range(6, 13):
        for y in itertools.product((0, 1), repeat=n):
            yield tuple(r.integers(0, 4, n) / 4), y
            yield tuple(r.permutation(n) / n), y


def test_auc_oracle():
    worst, exhaustive = 0.0, 0
    for s, y in _auc_cases():
        if 0 < sum(y) < len(y):
            worst = max(worst, abs(M.auc(s, y) - auc_pairwise(s, y)))
            exhaustive += 1
    r = np.random.default_rng(1)
    random_cases = 0
    while random_cases < 1000:
        n = int(r.integers(2, 200))
        y = r.integers(0, 2, n)
        if not 0 < y.sum() < n:
            continue
        s = r.uniform(size=n) if random_cases % 2 else np.round(r.uniform(size=n), 1)
        worst = max(worst, abs(M.auc(s, y) - auc_pairwise(s.tolist(), y.tolist())))
        random_cases += 1
    verdict("AUC oracle", worst <= 1e-12,
            f"{exhaustive} exhaustive + {random_cases} random cases, max |diff| = {worst:.2e}")


def test_dense_block_structure():
    r = np.random.default_rng(2)
    bad = []
    for i in range(100):
        c0, k, n = int(r.integers(1, 7)), int(r.integers(1, 5)), int(r.integers(1, 5))
        x = r.normal(size=(2, c0, 3, 3))
        layers = block(r, c0, k, n)
        full = A.dense_block_forward(Tensor(x), layers).data
        if full.shape[1] != c0 + n * k or A.DenseBlockSpec(n, k, c0).out_channels != c0 + n * k:
            bad.append((i, "channels"))
            continue
        # later layers must not touch earlier channels: zero layer j, compare the prefix
        j = int(r.integers(1, n + 1))
        zeroed = list(layers)
        zeroed[j - 1] = layer(r, c0 + (j - 1) * k, k, zero=True)
        out = A.dense_block_forward(Tensor(x), zeroed).data
        lo = c0 + (j - 1) * k
        if not (np.array_equal(out[:, :lo], full[:, :lo]) and not out[:, lo:lo + k].any()
                and np.array_equal(full[:, :c0], x)):
            bad.append((i, "pass-through"))
    verdict("dense block structure", not bad, f"100 random specs, failures={bad[:5]}")


def test_residual_identity():
    r = np.random.default_rng(3)
    ok = True
    for c in (1, 3, 8):
        for training in (True, False):
            x = r.normal(size=(2, c, 5, 5))
            y = A.residual_block_forward(Tensor(x), layer(r, c, c, zero=True, training=training))
            ok &= y.data.tobytes() == x.tobytes()
    verdict("residual zero-weight identity", ok, "bit-exact over 6 configurations")


def test_adam_lockstep():
    r = np.random.default_rng(4)
    shape = (4, 5)
    gs = r.normal(size=(100,) + shape) * r.uniform(1e-3, 10, size=(100, 1, 1))
    init = r.normal(size=shape)
    p = {"w": Tensor(init.copy())}
    s, h = AdamState(), AdamHyper(lr=1e-2)
    worst = 0.0
    refs = {idx: adam_scalar(init[idx], lambda _p, t, idx=idx: gs[t - 1][idx], 100, 1e-2)
            for idx in np.ndindex(shape)}
    for t in range(100):
        adam_step(p, {"w": gs[t]}, s, h)
        for idx in np.ndindex(shape):
            worst = max(worst, abs(p["w"].data[idx] - refs[idx][t]))

    q = {"p": Tensor(np.array([0.0]), requires_grad=True)}
    s, h = AdamState(), AdamHyper(lr=0.1)
    for _ in range(100):
        x = q["p"]
        backward(((x - 3.0) * (x - 3.0)).sum())
        adam_step(q, {"p": x.grad}, s, h)
        zero_grads(q)
    dist = abs(q["p"].data[0] - 3.0)
    verdict("Adam lockstep", worst <= 1e-12 and dist < 0.5,
            f"max per-element diff {worst:.2e} over 100 steps, |p - 3| = {dist:.3f}")


def test_overfit():
    t0 = time.perf_counter()
    ds = D.synthetic_dataset(32, size=32, seed=0)
    model = A.build_model(A.preset("tiny"), seed=0)
    cfg = H.TrainConfig(preset="tiny", epochs=200, batch_size=32, lr=1e-3, seed=0)
    result = H.fit(model, ds, cfg)
    losses = result.loss_log.losses("train")
    rep = H.evaluate(result.model, ds)
    smoothed = losses[-20:].mean()
    dt = time.perf_counter() - t0
    ok = (len(losses) <= 200 and losses[-1] < 0.05 and rep.accuracy == 1.0
          and smoothed < 0.5 * losses[0] and dt < 300)
    verdict("overfit", ok,
            f"{len(losses)} batches, loss {losses[0]:.3f} -> {losses[-1]:.4f}, "
            f"last-20 mean {smoothed:.4f}, accuracy {rep.accuracy}, {dt:.0f}s")


def test_tta_contracts():
    ds = D.synthetic_dataset(10, size=16, seed=5)
    model = A.build_model(A.preset("tiny"), seed=5)
    model.eval()
    plain = H.predict_scores(model, ds)
    single = [H.predict_scores(model, ds.subset([i]))[0] for i in range(len(ds))]
    std = D.AugmentSpec.standard()
    one_view = [H.tta_predict(model, s.image, std, n_views=1, seed=9) for s in ds]
    ident = [H.tta_predict(model, s.image, D.AugmentSpec.identity(), n_views=8, seed=9) for s in ds]
    ev = H.evaluate(model, ds)
    ev1 = H.evaluate_tta(model, ds, std, n_views=1, seed=9)
    evi = H.evaluate_tta(model, ds, D.AugmentSpec.identity(), n_views=8, seed=9)
    a = H.evaluate_tta(model, ds, std, n_views=8, seed=9)
    b = H.evaluate_tta(model, ds, std, n_views=8, seed=9)
    ok = (one_view == single and ident == single
          and np.array_equal(ev1.scores, ev.scores) and np.array_equal(evi.scores, ev.scores)
          and np.array_equal(a.scores, b.scores)
          and np.array_equal(plain, ev.scores))
    verdict("TTA contracts", ok, "n_views=1 and identity spec equal plain scores; repeat runs identical")


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("accept")
    D.write_corpus(D.synthetic_dataset(24, size=16, seed=6), root / "img", root / "labels.csv")
    return root


def _cfg(corpus, out, **kw):
    base = dict(preset="tiny", epochs=4, batch_size=4, lr=1e-3, seed=11, augment=True,
                data_dir=str(corpus / "img"), labels=str(corpus / "labels.csv"),
                out=str(out / "m.ckpt"), loss_log=str(out / "loss.csv"))
    base.update(kw)
    return H.TrainConfig(**base)


def test_persistence(corpus, tmp_path):
    straight_dir, part_dir = tmp_path / "straight", tmp_path / "part"
    straight_dir.mkdir()
    part_dir.mkdir()
    straight, straight_log = H.train(_cfg(corpus, straight_dir))
    H.train(_cfg(corpus, part_dir, max_batches=7))  # stops mid-epoch
    resumed, resumed_log = H.train(_cfg(corpus, part_dir, resume=str(part_dir / "m.ckpt"),
                                        loss_log=str(part_dir / "loss2.csv")))

    first = (straight_dir / "m.ckpt").read_bytes()
    C.save_checkpoint(C.load_checkpoint(straight_dir / "m.ckpt"), tmp_path / "again.ckpt")
    round_trip = (tmp_path / "again.ckpt").read_bytes() == first

    part_rows = H.LossLog()
    with open(part_dir / "loss.csv") as fh:
        next(fh)
        for line in fh:
            b, split_name, loss = line.strip().split(",")
            part_rows.append(b, split_name, float(loss))
    trajectory = part_rows.rows + resumed_log.rows == straight_log.rows
    same_state = ((tmp_path / "part" / "m.ckpt").read_bytes() == first)
    verdict("persistence", round_trip and trajectory and same_state,
            f"round trip {round_trip}, loss trajectory {trajectory}, final checkpoint bytes {same_state}")


def test_cli_determinism(corpus, tmp_path):
    logs = []
    for run in ("a", "b"):
        out = tmp_path / run
        out.mkdir()
        cmd = [sys.executable, "-m", "densepath", "train", "--data", str(corpus / "img"),
               "--labels", str(corpus / "labels.csv"), "--preset", "tiny", "--epochs", "2",
               "--batch-size", "4", "--lr", "0.001", "--seed", "5", "--augment", "on",
               "--out", str(out / "m.ckpt"), "--loss-log", str(out / "loss.csv")]
        subprocess.run(cmd, check=True, capture_output=True)
        logs.append((out / "loss.csv").read_bytes())
    verdict("determinism", logs[0] == logs[1] and len(logs[0].splitlines()) > 1,
            f"two train invocations, {len(logs[0].splitlines()) - 1} loss rows each")
