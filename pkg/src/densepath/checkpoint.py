"""Binary checkpoint container.

Layout (little-endian)::

    offset 0   b"DNCP"
    offset 4   uint32 format version
    offset 8   uint64 manifest length L
    offset 16  manifest: UTF-8 JSON, keys sorted
               {"meta": {...}, "tensors": [{"name", "dtype", "shape", "offset", "nbytes"}, ...]}
    offset 16+L  raw tensor payloads; each record's offset is relative to here

Tensor names carry a section prefix: ``param/``, ``buffer/``, ``adam.m/``,
``adam.v/``.
"""

import json
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .architectures import Model, ModelSpec
from .errors import CheckpointError
from .optim import AdamHyper, AdamState
from .tensor import Tensor

MAGIC = b"DNCP"
VERSION = 1
_PREFIX = struct.Struct("<4sIQ")
_DTYPES = {"f8": np.dtype("<f8"), "f4": np.dtype("<f4"), "i8": np.dtype("<i8")}


@dataclass
class Checkpoint:
    spec: ModelSpec
    params: dict
    buffers: dict
    adam: AdamState = field(default_factory=AdamState)
    hyper: AdamHyper = field(default_factory=AdamHyper)
    # epoch / batch-in-epoch cursor and cumulative batch count; the
    # training RNG streams are derived from (seed, epoch, index) so the
    # cursor fully determines where they resume
    epoch: int = 0
    batch_in_epoch: int = 0
    batches_done: int = 0
    seed: int = 0
    config: dict = field(default_factory=dict)

    @classmethod
    def from_model(cls, model, adam=None, hyper=None, **kw):
        return cls(
            model.spec,
            {n: p.data.copy() for n, p in model.params.items()},
            {n: b.copy() for n, b in model.buffers.items()},
            adam if adam is not None else AdamState(),
            hyper if hyper is not None else AdamHyper(),
            **kw,
        )

    def to_model(self, training=False):
        params = {n: Tensor(a.copy(), requires_grad=True) for n, a in self.params.items()}
        buffers = {n: a.copy() for n, a in self.buffers.items()}
        return Model(self.spec, params, buffers, training=training)

    def adam_state(self):
        return AdamState(
            self.adam.t,
            {n: a.copy() for n, a in self.adam.m.items()},
            {n: a.copy() for n, a in self.adam.v.items()},
        )


def _tag(arr):
    kind = {np.dtype("float64"): "f8", np.dtype("float32"): "f4", np.dtype("int64"): "i8"}
    try:
        return kind[arr.dtype.newbyteorder("=")]
    except KeyError:
        raise CheckpointError(f"unsupported tensor dtype {arr.dtype}") from None


def to_bytes(ck):
    sections = [("param", ck.params), ("buffer", ck.buffers), ("adam.m", ck.adam.m), ("adam.v", ck.adam.v)]
    records, payloads, offset = [], [], 0
    for prefix, tensors in sections:
        for name, arr in tensors.items():
            arr = np.asarray(arr)
            tag = _tag(arr)
            raw = np.ascontiguousarray(arr, dtype=_DTYPES[tag]).tobytes()
            records.append({"name": f"{prefix}/{name}", "dtype": tag, "shape": list(arr.shape),
                            "offset": offset, "nbytes": len(raw)})
            payloads.append(raw)
            offset += len(raw)
    h = ck.hyper
    meta = {
        "spec": ck.spec.to_dict(),
        "adam": {"t": ck.adam.t, "lr": h.lr, "beta1": h.beta1, "beta2": h.beta2, "eps": h.eps},
        "cursor": {"epoch": ck.epoch, "batch_in_epoch": ck.batch_in_epoch, "batches_done": ck.batches_done},
        "seed": ck.seed,
        "config": ck.config,
    }
    manifest = json.dumps({"meta": meta, "tensors": records}, sort_keys=True,
                          separators=(",", ":")).encode("utf-8")
    return _PREFIX.pack(MAGIC, VERSION, len(manifest)) + manifest + b"".join(payloads)


def from_bytes(buf):
    if len(buf) < _PREFIX.size:
        raise CheckpointError(f"truncated checkpoint: {len(buf)} bytes, header needs {_PREFIX.size} (offset 0)")
    magic, version, mlen = _PREFIX.unpack_from(buf, 0)
    if magic != MAGIC:
        raise CheckpointError(f"bad magic {magic!r} at offset 0, expected {MAGIC!r}")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version} at offset 4")
    start = _PREFIX.size
    if start + mlen > len(buf):
        raise CheckpointError(f"truncated manifest at offset {start}: need {mlen} bytes, have {len(buf) - start}")
    try:
        manifest = json.loads(buf[start:start + mlen].decode("utf-8"))
        meta, records = manifest["meta"], manifest["tensors"]
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise CheckpointError(f"corrupt manifest at offset {start}: {exc}") from exc
    base = start + mlen
    sections = {"param": {}, "buffer": {}, "adam.m": {}, "adam.v": {}}
    end = base
    for rec in records:
        prefix, _, name = rec["name"].partition("/")
        if prefix not in sections or rec["dtype"] not in _DTYPES:
            raise CheckpointError(f"bad tensor record {rec['name']!r} in manifest at offset {start}")
        dt = _DTYPES[rec["dtype"]]
        lo = base + rec["offset"]
        hi = lo + rec["nbytes"]
        if hi > len(buf):
            raise CheckpointError(f"truncated payload for {rec['name']!r} at offset {lo}: file ends at {len(buf)}")
        count = int(np.prod(rec["shape"], dtype=np.int64))
        if count * dt.itemsize != rec["nbytes"]:
            raise CheckpointError(f"size mismatch for {rec['name']!r} at offset {lo}")
        arr = np.frombuffer(buf, dtype=dt, count=count, offset=lo).reshape(rec["shape"])
        sections[prefix][name] = arr.astype(dt.newbyteorder("="))
        end = max(end, hi)
    if end != len(buf):
        raise CheckpointError(f"{len(buf) - end} trailing bytes after offset {end}")
    a, cur = meta["adam"], meta["cursor"]
    return Checkpoint(
        spec=ModelSpec.from_dict(meta["spec"]),
        params=sections["param"],
        buffers=sections["buffer"],
        adam=AdamState(int(a["t"]), sections["adam.m"], sections["adam.v"]),
        hyper=AdamHyper(a["lr"], a["beta1"], a["beta2"], a["eps"]),
        epoch=int(cur["epoch"]),
        batch_in_epoch=int(cur["batch_in_epoch"]),
        batches_done=int(cur["batches_done"]),
        seed=int(meta["seed"]),
        config=meta.get("config", {}),
    )


def save_checkpoint(ck, path):
    data = to_bytes(ck)
    tmp = f"{path}.tmp"
    try:
        with open(tmp, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except OSError as exc:
        raise CheckpointError(f"cannot write checkpoint {path}: {exc.strerror}") from exc


def load_checkpoint(path):
    try:
        with open(path, "rb") as fh:
            buf = fh.read()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc.strerror}") from exc
    return from_bytes(buf)
