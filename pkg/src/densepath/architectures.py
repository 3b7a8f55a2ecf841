"""Dense blocks, transitions, the residual baseline block and model assembly.

Parameter names (the checkpoint contract)::

    stem.conv.weight
    stem.bn.gamma / stem.bn.beta
    block{i}.layer{j}.bn.gamma / .bn.beta / .conv.weight     (i, j from 1)
    trans{i}.bn.gamma / .bn.beta / .conv.weight
    head.linear.weight / head.linear.bias

Batch-norm running statistics live next to them as buffers named
``<prefix>.bn.running_mean`` and ``<prefix>.bn.running_var``.
"""

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from . import functional as F
from .errors import ShapeError, SpecError
from .tensor import Tensor


@dataclass(frozen=True)
class DenseBlockSpec:
    num_layers: int
    growth_rate: int
    in_channels: int

    @property
    def out_channels(self):
        return self.in_channels + self.num_layers * self.growth_rate


@dataclass(frozen=True)
class TransitionSpec:
    in_channels: int
    compression: float = 0.5

    @property
    def out_channels(self):
        return int(math.floor(self.compression * self.in_channels))


@dataclass(frozen=True)
class StemSpec:
    in_channels: int = 3
    out_channels: int = 8
    kernel: int = 3
    stride: int = 1
    padding: int = 1
    # (window, stride, padding) of a max pool after conv-bn-relu, or None
    pool: tuple | None = None


@dataclass(frozen=True)
class ModelSpec:
    name: str
    stem: StemSpec
    stages: tuple  # DenseBlockSpec and TransitionSpec, alternating, block first and last
    input_size: int = 32

    @property
    def feature_channels(self):
        return self.stages[-1].out_channels if self.stages else self.stem.out_channels

    def to_dict(self):
        stages = []
        for s in self.stages:
            kind = "block" if isinstance(s, DenseBlockSpec) else "transition"
            stages.append({"kind": kind, **dataclasses.asdict(s)})
        stem = dataclasses.asdict(self.stem)
        stem["pool"] = list(self.stem.pool) if self.stem.pool else None
        return {"name": self.name, "input_size": self.input_size, "stem": stem, "stages": stages}

    @classmethod
    def from_dict(cls, d):
        stem = dict(d["stem"])
        stem["pool"] = tuple(stem["pool"]) if stem.get("pool") else None
        stages = []
        for s in d["stages"]:
            s = dict(s)
            kind = s.pop("kind")
            stages.append(DenseBlockSpec(**s) if kind == "block" else TransitionSpec(**s))
        return cls(name=d["name"], stem=StemSpec(**stem), stages=tuple(stages),
                   input_size=int(d["input_size"]))


def densenet_spec(name, block_sizes, growth_rate, stem, compression=0.5, input_size=32):
    """Chain block and transition specs so channel counts line up."""
    stages = []
    c = stem.out_channels
    for i, n in enumerate(block_sizes):
        block = DenseBlockSpec(n, growth_rate, c)
        stages.append(block)
        c = block.out_channels
        if i < len(block_sizes) - 1:
            trans = TransitionSpec(c, compression)
            stages.append(trans)
            c = trans.out_channels
    return ModelSpec(name, stem, tuple(stages), input_size)


PRESETS = ("tiny", "densenet201-like")


def preset(name):
    if name == "tiny":
        return densenet_spec("tiny", (2, 2), 4, StemSpec(3, 8, 3, 1, 1, None), 0.5, input_size=32)
    if name == "densenet201-like":
        # stride-1 stem conv; the 2x reduction happens in the pool (see README)
        stem = StemSpec(3, 64, 7, 1, 3, (3, 2, 1))
        return densenet_spec("densenet201-like", (6, 12, 48, 32), 32, stem, 0.5, input_size=96)
    raise SpecError(f"unknown preset {name!r}; expected one of {PRESETS}")


def validate_spec(spec):
    """Reject a spec whose channel counts do not chain, naming the first bad stage."""
    s = spec.stem
    if min(s.in_channels, s.out_channels, s.kernel, s.stride) < 1 or s.padding < 0:
        raise SpecError(f"stage 'stem': invalid stem {s}")
    if not spec.stages:
        raise SpecError("stage 'block1': model needs at least one dense block")
    c = s.out_channels
    nb = nt = 0
    for idx, st in enumerate(spec.stages):
        want_block = idx % 2 == 0
        if isinstance(st, DenseBlockSpec):
            nb += 1
            label = f"block{nb}"
            if not want_block:
                raise SpecError(f"stage '{label}': expected a transition between dense blocks")
            if st.num_layers < 0 or st.growth_rate < 1:
                raise SpecError(f"stage '{label}': need num_layers >= 0 and growth_rate >= 1, got {st}")
        elif isinstance(st, TransitionSpec):
            nt += 1
            label = f"trans{nt}"
            if want_block:
                raise SpecError(f"stage '{label}': expected a dense block here")
            if not 0.0 < st.compression <= 1.0:
                raise SpecError(f"stage '{label}': compression must lie in (0, 1], got {st.compression}")
            if st.out_channels < 1:
                raise SpecError(f"stage '{label}': compression leaves no channels")
        else:
            raise SpecError(f"stage {idx}: unknown stage type {type(st).__name__}")
        if st.in_channels != c:
            raise SpecError(f"stage '{label}': expects {st.in_channels} input channels, previous stage gives {c}")
        c = st.out_channels
    if isinstance(spec.stages[-1], TransitionSpec):
        raise SpecError(f"stage 'trans{nt}': model must end with a dense block")


def stage_extents(spec, h, w):
    """Spatial extents after every stage; ShapeError names the stage that underflows."""
    s = spec.stem
    out = []
    for axis, size in (("height", h), ("width", w)):
        span = size + 2 * s.padding - s.kernel
        if span < 0 or span % s.stride:
            raise ShapeError(f"stage 'stem.conv': input {axis} {size} gives a non-integral or empty output")
    h = (h + 2 * s.padding - s.kernel) // s.stride + 1
    w = (w + 2 * s.padding - s.kernel) // s.stride + 1
    out.append(("stem.conv", h, w))
    if s.pool:
        k, st, p = s.pool
        h = F.conv_output_extent(h, k, st, p)
        w = F.conv_output_extent(w, k, st, p)
        if h is None or w is None or h < 1 or w < 1:
            raise ShapeError("stage 'stem.pool': spatial extent underflow")
        out.append(("stem.pool", h, w))
    nb = nt = 0
    for st in spec.stages:
        if isinstance(st, DenseBlockSpec):
            nb += 1
            out.append((f"block{nb}", h, w))
        else:
            nt += 1
            if h < 2 or w < 2:
                raise ShapeError(f"stage 'trans{nt}': needs spatial extents >= 2, got {h}x{w}")
            h, w = h // 2, w // 2
            out.append((f"trans{nt}", h, w))
    return out


# layer-level parameter bundles and forwards


@dataclass
class DenseLayerParams:
    bn: F.BatchNormParams
    conv: F.ConvParams


@dataclass
class TransitionParams:
    bn: F.BatchNormParams
    conv: F.ConvParams


def _mode(bn, training):
    if training is None or training == bn.training:
        return bn
    return dataclasses.replace(bn, training=training)


def composite(x, p, training=None):
    """BN -> ReLU -> conv, the per-layer transform shared by dense and residual layers."""
    bn = _mode(p.bn, training)
    if x.shape[1] != bn.gamma.shape[0]:
        raise ShapeError(f"layer expects {bn.gamma.shape[0]} input channels, got input {x.shape}")
    return F.conv2d(F.relu(F.batch_norm2d(x, bn)), p.conv)


def dense_layer_forward(x, p, training=None):
    """One dense layer: N×C×H×W -> N×k×H×W with k = conv output channels."""
    return composite(x, p, training)


def dense_block_forward(x0, layers, training=None):
    """Feed each layer the concatenation of the block input and every earlier
    layer's output; return the concatenation of all of them."""
    if not layers:
        return x0
    k = layers[0].conv.kernel.shape[0]
    c0 = x0.shape[1]
    feats = [x0]
    for l, p in enumerate(layers, start=1):
        want = c0 + (l - 1) * k
        got = p.bn.gamma.shape[0]
        if got != want or p.conv.kernel.shape[1] != want or p.conv.kernel.shape[0] != k:
            raise ShapeError(
                f"dense layer {l} expects {got} input channels and emits "
                f"{p.conv.kernel.shape[0]}; block needs {want} in, {k} out"
            )
        inp = feats[0] if l == 1 else F.concat_channels(feats)
        feats.append(dense_layer_forward(inp, p, training))
    return F.concat_channels(feats)


def transition_forward(x, p, training=None):
    """BN -> ReLU -> 1×1 conv -> 2×2 average pool, stride 2."""
    if x.ndim != 4 or x.shape[2] < 2 or x.shape[3] < 2:
        raise ShapeError(f"transition needs spatial extents >= 2, got input {x.shape}")
    return F.pool2d(composite(x, p, training), "average", 2, 2)


def residual_block_forward(x, p, training=None):
    """Identity-shortcut residual block: H(x) + x with H = BN -> ReLU -> 3×3 conv."""
    if p.conv.kernel.shape[0] != x.shape[1]:
        raise ShapeError(
            f"residual block emits {p.conv.kernel.shape[0]} channels but input {x.shape} has "
            f"{x.shape[1]}; projection shortcuts are not supported"
        )
    return composite(x, p, training) + x


# model


class Model:
    """Instantiated :class:`ModelSpec`: ordered parameters plus BN buffers."""

    def __init__(self, spec, params, buffers, training=True):
        self.spec = spec
        self.params = params
        self.buffers = buffers
        self.training = training

    def train(self):
        self.training = True
        return self

    def eval(self):
        self.training = False
        return self

    @property
    def dtype(self):
        return next(iter(self.params.values())).dtype

    def num_parameters(self):
        return sum(p.data.size for p in self.params.values())

    def _bn(self, prefix):
        return F.BatchNormParams(
            self.params[f"{prefix}.gamma"],
            self.params[f"{prefix}.beta"],
            self.buffers[f"{prefix}.running_mean"],
            self.buffers[f"{prefix}.running_var"],
            training=self.training,
        )

    def _conv(self, prefix, stride=1, padding=0):
        return F.ConvParams(self.params[f"{prefix}.weight"], None, stride, padding)

    def dense_layer(self, i, j):
        pre = f"block{i}.layer{j}"
        return DenseLayerParams(self._bn(f"{pre}.bn"), self._conv(f"{pre}.conv", 1, 1))

    def transition(self, i):
        return TransitionParams(self._bn(f"trans{i}.bn"), self._conv(f"trans{i}.conv"))

    def features(self, x):
        """Everything before the head: N×3×H×W -> N×C×h×w."""
        spec = self.spec
        stage_extents(spec, x.shape[2], x.shape[3])
        s = spec.stem
        x = F.conv2d(x, self._conv("stem.conv", s.stride, s.padding))
        x = F.relu(F.batch_norm2d(x, self._bn("stem.bn")))
        if s.pool:
            k, st, p = s.pool
            x = F.pool2d(x, "max", k, st, p)
        nb = nt = 0
        for stage in spec.stages:
            if isinstance(stage, DenseBlockSpec):
                nb += 1
                layers = [self.dense_layer(nb, j) for j in range(1, stage.num_layers + 1)]
                x = dense_block_forward(x, layers)
            else:
                nt += 1
                x = transition_forward(x, self.transition(nt))
        return x

    def forward(self, batch):
        """Score a batch N×3×H×W; returns N probabilities."""
        if not isinstance(batch, Tensor):
            batch = Tensor(np.asarray(batch, dtype=self.dtype))
        if batch.ndim != 4 or batch.shape[1] != self.spec.stem.in_channels:
            raise ShapeError(
                f"model expects N×{self.spec.stem.in_channels}×H×W input, got {batch.shape}"
            )
        pooled = F.global_avg_pool(self.features(batch))
        logits = F.linear(pooled, self.params["head.linear.weight"], self.params["head.linear.bias"])
        return F.sigmoid(logits.reshape(batch.shape[0]))

    __call__ = forward


def model_forward(model, batch):
    return model.forward(batch)


def parameter_shapes(spec):
    """Ordered (name, shape) for every trainable parameter of ``spec``."""
    s = spec.stem
    shapes = [
        ("stem.conv.weight", (s.out_channels, s.in_channels, s.kernel, s.kernel)),
        ("stem.bn.gamma", (s.out_channels,)),
        ("stem.bn.beta", (s.out_channels,)),
    ]
    nb = nt = 0
    for st in spec.stages:
        if isinstance(st, DenseBlockSpec):
            nb += 1
            for j in range(1, st.num_layers + 1):
                c = st.in_channels + (j - 1) * st.growth_rate
                pre = f"block{nb}.layer{j}"
                shapes += [
                    (f"{pre}.bn.gamma", (c,)),
                    (f"{pre}.bn.beta", (c,)),
                    (f"{pre}.conv.weight", (st.growth_rate, c, 3, 3)),
                ]
        else:
            nt += 1
            shapes += [
                (f"trans{nt}.bn.gamma", (st.in_channels,)),
                (f"trans{nt}.bn.beta", (st.in_channels,)),
                (f"trans{nt}.conv.weight", (st.out_channels, st.in_channels, 1, 1)),
            ]
    c = spec.feature_channels
    shapes += [("head.linear.weight", (c, 1)), ("head.linear.bias", (1,))]
    return shapes


def build_model(spec, seed=0, dtype=np.float64):
    """Instantiate ``spec`` with deterministic He-uniform weights.

    Conv and linear weights draw from U(-sqrt(6/fan_in), sqrt(6/fan_in)) in
    parameter-name order; BN gamma = 1, beta = 0, biases = 0.
    """
    validate_spec(spec)
    rng = np.random.default_rng(seed)
    params, buffers = {}, {}
    for name, shape in parameter_shapes(spec):
        if name.endswith(".weight"):
            fan_in = int(np.prod(shape[1:])) if len(shape) == 4 else shape[0]
            bound = math.sqrt(6.0 / fan_in)
            data = rng.uniform(-bound, bound, size=shape)
        elif name.endswith(".gamma"):
            data = np.ones(shape)
        else:
            data = np.zeros(shape)
        params[name] = Tensor(data.astype(dtype), requires_grad=True)
        if name.endswith(".bn.gamma"):
            pre = name[: -len(".gamma")]
            buffers[f"{pre}.running_mean"] = np.zeros(shape, dtype=dtype)
            buffers[f"{pre}.running_var"] = np.ones(shape, dtype=dtype)
    return Model(spec, params, buffers, training=True)
