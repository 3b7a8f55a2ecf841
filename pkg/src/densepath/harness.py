"""Training loop, evaluation (plain and test-time augmented) and loss logging."""

import csv
import dataclasses
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import metrics
from .architectures import build_model, preset
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .data import AugmentSpec, augment, batches, load_dataset, num_batches, split
from .errors import CheckpointError, TrainingError
from .functional import bce_loss
from .optim import AdamHyper, AdamState, adam_step
from .tensor import Tensor, backward, no_grad, zero_grads

log = logging.getLogger(__name__)

DEFAULT_VIEWS = 8


@dataclass
class TrainConfig:
    preset: str = "tiny"
    epochs: int = 1
    batch_size: int = 64
    lr: float = 1e-4
    seed: int = 0
    augment: bool = False
    data_dir: str | None = None
    labels: str | None = None
    out: str | None = None
    loss_log: str | None = None
    train_fraction: float = 0.8
    validate_every: int = 1  # epochs between validation passes
    max_batches: int | None = None  # stop after this many cumulative batches
    resume: str | None = None
    dtype: str = "float64"

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.validate_every < 1:
            raise ValueError(f"validate_every must be >= 1, got {self.validate_every}")
        if self.dtype not in ("float64", "float32"):
            raise ValueError(f"dtype must be float64 or float32, got {self.dtype!r}")


@dataclass
class LossLog:
    rows: list = field(default_factory=list)

    def append(self, batch_index, split_name, loss):
        self.rows.append((int(batch_index), split_name, float(loss)))

    def losses(self, split_name="train"):
        return np.array([r[2] for r in self.rows if r[1] == split_name])

    def __len__(self):
        return len(self.rows)

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["batch_index", "split", "loss"])
            for b, s, l in self.rows:
                w.writerow([b, s, repr(l)])


@dataclass
class TrainResult:
    model: object
    adam: AdamState
    hyper: AdamHyper
    loss_log: LossLog
    epoch: int
    batch_in_epoch: int
    batches_done: int

    def checkpoint(self, seed, config=None):
        return Checkpoint.from_model(
            self.model, self.adam, self.hyper,
            epoch=self.epoch, batch_in_epoch=self.batch_in_epoch,
            batches_done=self.batches_done, seed=seed, config=config or {},
        )


def _score_batch(model, x):
    with no_grad():
        out = model(x)
    return np.asarray(out.data if isinstance(out, Tensor) else out, dtype=np.float64).reshape(-1)


class _inference:
    """Temporarily switch a model (if it has modes) to inference."""

    def __init__(self, model):
        self.model = model
        self.prev = getattr(model, "training", None)

    def __enter__(self):
        if self.prev is not None:
            self.model.training = False
        return self.model

    def __exit__(self, *exc):
        if self.prev is not None:
            self.model.training = self.prev


def predict_scores(model, dataset, batch_size=64):
    """Inference-mode scores for every sample, in dataset order."""
    out = []
    with _inference(model):
        for x, _ in batches(dataset, batch_size, shuffle=False, dtype=_model_dtype(model)):
            out.append(_score_batch(model, x))
    return np.concatenate(out) if out else np.zeros(0)


def _model_dtype(model):
    return getattr(model, "dtype", np.float64)


def validation_loss(model, dataset, batch_size=64):
    scores = predict_scores(model, dataset, batch_size)
    return bce_loss(Tensor(scores), Tensor(dataset.labels.astype(np.float64))).item()


def fit(model, train_set, config, val_set=None, adam=None, cursor=(0, 0, 0)):
    """Run the optimisation loop from ``cursor = (epoch, batch_in_epoch, batches_done)``.

    Per batch: forward in training mode, BCE, backward, Adam step, clear
    grads. Validation loss over ``val_set`` is logged after every
    ``config.validate_every``-th epoch.
    """
    dtype = np.dtype(config.dtype)
    hyper = AdamHyper(lr=config.lr)
    adam = adam if adam is not None else AdamState()
    loss_log = LossLog()
    epoch, start, done = cursor
    nb = num_batches(len(train_set), config.batch_size)
    aug = AugmentSpec.standard() if config.augment else None
    stopped = False
    while epoch < config.epochs and nb > 0:
        model.train()
        for b, (x, y) in enumerate(
            batches(train_set, config.batch_size, shuffle=True, seed=config.seed,
                    augment_spec=aug, epoch=epoch, start=start, dtype=dtype),
            start=start,
        ):
            loss = bce_loss(model(x), y)
            lv = loss.item()
            if not math.isfinite(lv):
                raise TrainingError(f"non-finite training loss {lv} at batch {done + 1}")
            backward(loss)
            grads = {n: p.grad for n, p in model.params.items() if p.grad is not None}
            adam_step(model.params, grads, adam, hyper)
            zero_grads(model.params)
            done += 1
            loss_log.append(done, "train", lv)
            log.debug("epoch %d batch %d loss %.6f", epoch, b, lv)
            start = b + 1
            if config.max_batches is not None and done >= config.max_batches:
                stopped = True
                break
        if start >= nb:
            if val_set is not None and len(val_set) and (epoch + 1) % config.validate_every == 0:
                vl = validation_loss(model, val_set, config.batch_size)
                loss_log.append(done, "validation", vl)
                log.info("epoch %d: validation loss %.6f after %d batches", epoch, vl, done)
            epoch, start = epoch + 1, 0
        if stopped:
            break
    model.train()
    return TrainResult(model, adam, hyper, loss_log, epoch, start, done)


def train(config):
    """Load data, split 8:2, train (or resume) and write checkpoint + loss log.

    Returns ``(checkpoint, loss_log)``.
    """
    dataset = load_dataset(config.data_dir, config.labels)
    train_set, held_out = split(dataset, config.train_fraction, config.seed)
    log.info("dataset: %d samples (%d train / %d held-out)", len(dataset), len(train_set), len(held_out))
    if config.resume:
        ck = load_checkpoint(config.resume)
        if ck.spec.name != config.preset:
            raise CheckpointError(
                f"checkpoint holds preset {ck.spec.name!r}, config asks for {config.preset!r}"
            )
        model = ck.to_model(training=True)
        adam = ck.adam_state()
        cursor = (ck.epoch, ck.batch_in_epoch, ck.batches_done)
    else:
        model = build_model(preset(config.preset), config.seed, np.dtype(config.dtype))
        adam, cursor = None, (0, 0, 0)
    result = fit(model, train_set, config, held_out, adam, cursor)
    ck = result.checkpoint(config.seed, _config_record(config))
    if config.out:
        save_checkpoint(ck, config.out)
    if config.loss_log:
        try:
            result.loss_log.to_csv(config.loss_log)
        except OSError as exc:
            raise TrainingError(f"cannot write loss log {config.loss_log}: {exc.strerror}") from exc
    return ck, result.loss_log


def _config_record(config):
    d = dataclasses.asdict(config)
    for k in ("data_dir", "labels", "out", "loss_log", "resume"):
        d.pop(k)
    return d


# evaluation


def evaluate(model, dataset, batch_size=64, threshold=0.5):
    """Inference-mode metrics over ``dataset`` (no augmentation)."""
    scores = predict_scores(model, dataset, batch_size)
    return metrics.report(scores, dataset.labels, threshold)


def _view_seed(seed, view, index=None):
    key = [int(seed), int(view)] if index is None else [int(seed), int(index), int(view)]
    return np.random.SeedSequence(key)


def _mean(scores):
    # shifted mean: exact when every view agrees
    base = scores[0]
    return base + np.sum(scores - base, axis=0) / len(scores)


def tta_views(image, spec, n_views, seed, index=None):
    """The raw image followed by ``n_views - 1`` seeded augmented views."""
    if n_views < 1:
        raise ValueError(f"n_views must be >= 1, got {n_views}")
    image = np.asarray(image)
    return [image] + [augment(image, spec, _view_seed(seed, k, index)) for k in range(1, n_views)]


def tta_predict(model, image, spec, n_views=DEFAULT_VIEWS, seed=0):
    """Mean inference score over the raw image and its augmented views."""
    image = np.asarray(image.data if isinstance(image, Tensor) else image)
    dtype = _model_dtype(model)
    with _inference(model):
        scores = np.array([
            _score_batch(model, Tensor(v[None].astype(dtype, copy=False)))[0]
            for v in tta_views(image, spec, n_views, seed)
        ])
    return float(_mean(scores))


def evaluate_tta(model, dataset, spec, n_views=DEFAULT_VIEWS, seed=0, batch_size=64, threshold=0.5):
    """Like :func:`evaluate`, scoring each sample as the mean over TTA views.

    View 0 of every sample is the raw image, scored in the same batches as
    :func:`evaluate` uses.
    """
    if n_views < 1:
        raise ValueError(f"n_views must be >= 1, got {n_views}")
    dtype = _model_dtype(model)
    per_view = []
    with _inference(model):
        for k in range(n_views):
            out = []
            for b0 in range(0, len(dataset), batch_size):
                idx = range(b0, min(b0 + batch_size, len(dataset)))
                imgs = [
                    dataset[i].image if k == 0 else augment(dataset[i].image, spec, _view_seed(seed, k, i))
                    for i in idx
                ]
                out.append(_score_batch(model, Tensor(np.stack(imgs).astype(dtype, copy=False))))
            per_view.append(np.concatenate(out) if out else np.zeros(0))
    scores = _mean(np.stack(per_view))
    return metrics.report(scores, dataset.labels, threshold)
