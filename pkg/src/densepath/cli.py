"""Command-line entry point: ``densepath {train,eval,predict}``."""

import argparse
import logging
import sys

import numpy as np

from . import metrics
from .architectures import PRESETS
from .checkpoint import load_checkpoint
from .data import AugmentSpec, load_dataset, read_png
from .errors import DensePathError
from .harness import DEFAULT_VIEWS, TrainConfig, evaluate, evaluate_tta, train, tta_predict


def _on_off(v):
    if v not in ("on", "off"):
        raise argparse.ArgumentTypeError(f"expected 'on' or 'off', got {v!r}")
    return v == "on"


def _positive(v):
    n = int(v)
    if n < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {v}")
    return n


def _non_negative(v):
    n = int(v)
    if n < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {v}")
    return n


def build_parser():
    p = argparse.ArgumentParser(prog="densepath", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a model and write a checkpoint and loss log")
    t.add_argument("--data", required=True, help="directory of <id>.png images")
    t.add_argument("--labels", required=True, help="CSV manifest with header id,label")
    t.add_argument("--preset", choices=PRESETS, default="tiny")
    t.add_argument("--epochs", type=_non_negative, default=1)
    t.add_argument("--batch-size", type=_positive, default=64)
    t.add_argument("--lr", type=float, default=1e-4)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--augment", type=_on_off, default=False, metavar="{on,off}")
    t.add_argument("--out", required=True, help="checkpoint path")
    t.add_argument("--loss-log", required=True, help="loss log CSV path")
    t.add_argument("--max-batches", type=_positive, default=None,
                   help="stop after this many cumulative batches")
    t.add_argument("--resume", default=None, help="continue from this checkpoint")
    t.add_argument("--dtype", choices=("float64", "float32"), default="float64")

    e = sub.add_parser("eval", help="score a labelled dataset")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--labels", required=True)
    e.add_argument("--report", required=True, help="metrics CSV (model,auc_roc,accuracy,n)")
    e.add_argument("--roc", required=True, help="ROC curve CSV (fpr,tpr)")
    _tta_args(e)

    r = sub.add_parser("predict", help="score one PNG image")
    r.add_argument("--checkpoint", required=True)
    r.add_argument("--image", required=True)
    _tta_args(r)
    return p


def _tta_args(p):
    p.add_argument("--tta", action="store_true", help="average over augmented views")
    p.add_argument("--views", type=_positive, default=DEFAULT_VIEWS)
    p.add_argument("--seed", type=int, default=0)


def _cmd_train(a):
    cfg = TrainConfig(
        preset=a.preset, epochs=a.epochs, batch_size=a.batch_size, lr=a.lr, seed=a.seed,
        augment=a.augment, data_dir=a.data, labels=a.labels, out=a.out, loss_log=a.loss_log,
        max_batches=a.max_batches, resume=a.resume, dtype=a.dtype,
    )
    ck, loss_log = train(cfg)
    print(f"trained {ck.batches_done} batches; checkpoint={a.out} loss_log={a.loss_log}")


def _cmd_eval(a):
    model = load_checkpoint(a.checkpoint).to_model(training=False)
    ds = load_dataset(a.data, a.labels)
    if a.tta:
        rep = evaluate_tta(model, ds, AugmentSpec.standard(), a.views, a.seed)
        name = f"{model.spec.name}(TTA)"
    else:
        rep = evaluate(model, ds)
        name = model.spec.name
    metrics.write_report_csv(a.report, [(name, rep)])
    metrics.write_roc_csv(a.roc, rep.curve)
    auc = "absent" if rep.auc_roc is None else f"{rep.auc_roc:.6f}"
    print(f"model={name} auc_roc={auc} accuracy={rep.accuracy:.6f} n={rep.n_samples}")


def _cmd_predict(a):
    model = load_checkpoint(a.checkpoint).to_model(training=False)
    img = read_png(a.image)
    if a.tta:
        score = tta_predict(model, img, AugmentSpec.standard(), a.views, a.seed)
    else:
        score = float(model(img[None].astype(model.dtype)).data[0])
    print(f"score={score!r}")


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handler = {"train": _cmd_train, "eval": _cmd_eval, "predict": _cmd_predict}[args.command]
    try:
        handler(args)
    except (DensePathError, ValueError, FloatingPointError, OSError) as exc:
        print(f"densepath: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
