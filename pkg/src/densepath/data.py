"""Patch-image datasets: loading, splitting, augmentation and batching.

On-disk layout: a CSV manifest with header ``id,label`` and one 8-bit RGB PNG
per id at ``<image_dir>/<id>.png``. Pixels are scaled to [0, 1].
"""

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

from .errors import DataError
from .tensor import Tensor


@dataclass(frozen=True)
class Sample:
    id: str
    image: np.ndarray  # 3×H×W, values in [0, 1]
    label: int


@dataclass
class Dataset:
    samples: list
    source: str | None = None
    class_counts: dict = field(init=False)

    def __post_init__(self):
        self.samples = list(self.samples)
        seen = set()
        for i, s in enumerate(self.samples):
            if s.id in seen:
                raise DataError(f"duplicate sample id {s.id!r} at position {i}")
            if s.label not in (0, 1):
                raise DataError(f"sample {s.id!r} has label {s.label!r}, expected 0 or 1")
            seen.add(s.id)
        labels = self.labels
        self.class_counts = {0: int((labels == 0).sum()), 1: int((labels == 1).sum())}

    def __len__(self):
        return len(self.samples)

    def __getitem__(self, i):
        return self.samples[i]

    @property
    def labels(self):
        return np.array([s.label for s in self.samples], dtype=np.int64)

    @property
    def ids(self):
        return [s.id for s in self.samples]

    def subset(self, indices):
        return Dataset([self.samples[i] for i in indices], self.source)


def read_png(path):
    """Read an 8-bit RGB PNG as a 3×H×W float64 array in [0, 1]."""
    try:
        with Image.open(path) as im:
            if im.format != "PNG":
                raise DataError(f"{path}: not a PNG file ({im.format})")
            if im.mode not in ("RGB", "RGBA", "L", "P"):
                raise DataError(f"{path}: unsupported PNG mode {im.mode}")
            arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
    except DataError:
        raise
    except (OSError, ValueError) as exc:
        raise DataError(f"{path}: unreadable PNG ({exc})") from exc
    return arr.transpose(2, 0, 1).astype(np.float64) / 255.0


def write_png(path, image):
    """Write a 3×H×W array in [0, 1] as an 8-bit RGB PNG."""
    arr = np.clip(np.rint(np.asarray(image) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(arr.transpose(1, 2, 0), mode="RGB").save(path, format="PNG")


def load_dataset(image_dir, labels_manifest):
    """Load every manifest row in order. Errors carry the 1-based CSV line number."""
    image_dir = Path(image_dir)
    manifest = Path(labels_manifest)
    try:
        fh = open(manifest, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"{manifest}: cannot open manifest ({exc.strerror})") from exc
    samples, seen = [], {}
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["id", "label"]:
            raise DataError(f"{manifest}: line 1: header must be exactly 'id,label', got {header!r}")
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise DataError(f"{manifest}: line {line}: expected 2 columns, got {len(row)}")
            sid, raw = row[0].strip(), row[1].strip()
            if raw not in ("0", "1"):
                raise DataError(f"{manifest}: line {line}: label {raw!r} is not 0 or 1")
            if sid in seen:
                raise DataError(f"{manifest}: line {line}: duplicate id {sid!r} (first at line {seen[sid]})")
            seen[sid] = line
            path = image_dir / f"{sid}.png"
            if not path.is_file():
                raise DataError(f"{manifest}: line {line}: missing image {path}")
            try:
                img = read_png(path)
            except DataError as exc:
                raise DataError(f"{manifest}: line {line}: {exc}") from exc
            samples.append(Sample(sid, img, int(raw)))
    return Dataset(samples, str(manifest))


def split(dataset, train_fraction=0.8, seed=0):
    """Seeded shuffle, then cut at ``round(train_fraction * n)``."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    n = len(dataset)
    if n == 0:
        raise DataError("cannot split an empty dataset")
    order = np.random.default_rng(seed).permutation(n)
    cut = int(round(train_fraction * n))
    return dataset.subset(order[:cut]), dataset.subset(order[cut:])


# augmentation


@dataclass(frozen=True)
class AugmentSpec:
    """Per-transform probabilities. Transforms apply in the order
    resize, rotate90, crop, horizontal flip, vertical flip."""

    horizontal_flip: float = 0.0
    vertical_flip: float = 0.0
    rotate90: float = 0.0
    random_resize: float = 0.0
    random_crop: float = 0.0
    scale_range: tuple = (0.9, 1.1)
    crop_pad: int = 4

    def __post_init__(self):
        for name in ("horizontal_flip", "vertical_flip", "rotate90", "random_resize", "random_crop"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} probability must lie in [0, 1], got {p}")

    @classmethod
    def identity(cls):
        return cls()

    @classmethod
    def standard(cls):
        return cls(0.5, 0.5, 0.5, 0.5, 0.5)

    @classmethod
    def flips_only(cls):
        return cls(horizontal_flip=0.5, vertical_flip=0.5)


def hflip(img):
    return img[:, :, ::-1]


def vflip(img):
    return img[:, ::-1, :]


def rotate90(img, k=1):
    """Rotate each channel plane by k quarter turns counter-clockwise."""
    return np.rot90(img, k, axes=(1, 2))


def _center_fit(img, h, w):
    """Center-crop or edge-pad a C×h'×w' image to C×h×w."""
    _, ih, iw = img.shape
    if ih >= h:
        top = (ih - h) // 2
        img = img[:, top:top + h]
    else:
        extra = h - ih
        img = np.pad(img, ((0, 0), (extra // 2, extra - extra // 2), (0, 0)), mode="edge")
    if iw >= w:
        left = (iw - w) // 2
        img = img[:, :, left:left + w]
    else:
        extra = w - iw
        img = np.pad(img, ((0, 0), (0, 0), (extra // 2, extra - extra // 2)), mode="edge")
    return img


def resize_jitter(img, scale):
    """Bilinear rescale by ``scale`` then center crop/pad back to the input size."""
    c, h, w = img.shape
    nh, nw = max(1, int(round(h * scale))), max(1, int(round(w * scale)))
    zoomed = ndimage.zoom(img, (1, nh / h, nw / w), order=1, mode="nearest", grid_mode=True)
    return np.clip(_center_fit(zoomed, h, w), 0.0, 1.0)


def pad_crop(img, pad, top, left):
    """Zero-pad by ``pad`` on every side and cut the original size at (top, left)."""
    c, h, w = img.shape
    padded = np.pad(img, ((0, 0), (pad, pad), (pad, pad)))
    return padded[:, top:top + h, left:left + w]


def augment(image, spec, rng_seed):
    """Return a randomly transformed copy of a 3×H×W image.

    Every random draw happens regardless of which transforms fire, so the
    stream position depends only on the seed.
    """
    img = np.asarray(image)
    if img.ndim != 3:
        raise DataError(f"augment expects a C×H×W image, got shape {img.shape}")
    rng = np.random.default_rng(rng_seed)
    u = rng.random(5)
    scale = rng.uniform(*spec.scale_range)
    k = int(rng.integers(1, 4))
    top, left = rng.integers(0, 2 * spec.crop_pad + 1, size=2)

    out = img
    if u[0] < spec.random_resize:
        out = resize_jitter(out, scale)
    if u[1] < spec.rotate90:
        if out.shape[1] != out.shape[2] and k % 2:
            k = 2
        out = rotate90(out, k)
    if u[2] < spec.random_crop:
        out = pad_crop(out, spec.crop_pad, int(top), int(left))
    if u[3] < spec.horizontal_flip:
        out = hflip(out)
    if u[4] < spec.vertical_flip:
        out = vflip(out)
    if out is img:
        return img.copy()
    return np.ascontiguousarray(out, dtype=img.dtype)


def sample_seed(seed, epoch, index):
    """Per-sample augmentation seed derived from (run seed, epoch, sample index)."""
    return np.random.SeedSequence([int(seed), int(epoch), int(index)])


def epoch_order(n, seed, epoch, shuffle=True):
    if not shuffle:
        return np.arange(n)
    return np.random.default_rng([int(seed), int(epoch), 0x5EED]).permutation(n)


def batches(dataset, batch_size=64, shuffle=False, seed=0, augment_spec=None, epoch=0,
            start=0, dtype=np.float64):
    """Yield ``(images B×3×H×W, labels B)`` tensors for one epoch.

    The last partial batch is kept. ``start`` skips the first ``start``
    batches (used when resuming mid-epoch).
    """
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    n = len(dataset)
    order = epoch_order(n, seed, epoch, shuffle)
    for b0 in range(start * batch_size, n, batch_size):
        idx = order[b0:b0 + batch_size]
        imgs = []
        for i in idx:
            img = dataset.samples[i].image
            if augment_spec is not None:
                img = augment(img, augment_spec, sample_seed(seed, epoch, i))
            imgs.append(img)
        x = np.stack(imgs).astype(dtype, copy=False)
        y = np.array([dataset.samples[i].label for i in idx], dtype=dtype)
        yield Tensor(x), Tensor(y)


def num_batches(n, batch_size):
    return -(-n // batch_size)


def synthetic_dataset(n, size=32, seed=0):
    """Linearly separable toy patches: label-1 images are brighter on average.

    Label-0 pixels are uniform on [0, 0.5), label-1 pixels on [0.5, 1);
    labels alternate 0, 1, 0, ...
    """
    r = np.random.default_rng(seed)
    samples = []
    for i in range(n):
        y = i % 2
        img = r.uniform(0.0, 0.5, size=(3, size, size)) + 0.5 * y
        samples.append(Sample(f"syn{i:05d}", np.clip(img, 0.0, 1.0), y))
    return Dataset(samples, None)


def write_corpus(dataset, image_dir, manifest):
    """Write ``dataset`` as PNGs plus an ``id,label`` manifest."""
    image_dir = Path(image_dir)
    image_dir.mkdir(parents=True, exist_ok=True)
    with open(manifest, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "label"])
        for s in dataset.samples:
            write_png(image_dir / f"{s.id}.png", s.image)
            w.writerow([s.id, s.label])
