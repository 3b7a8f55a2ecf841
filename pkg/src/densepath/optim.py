"""Adam with bias correction."""

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError
from .tensor import zero_grads  # noqa: F401  (re-exported)


@dataclass(frozen=True)
class AdamHyper:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        for name in ("beta1", "beta2"):
            b = getattr(self, name)
            if not 0.0 <= b < 1.0:
                raise ValueError(f"{name} must lie in [0, 1), got {b}")
        if not self.eps > 0:
            raise ValueError(f"eps must be positive, got {self.eps}")


@dataclass
class AdamState:
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params, grads, state, hyper):
    """Apply one Adam update in place.

    ``params`` maps names to tensors (or arrays); ``grads`` maps the same names
    to arrays. Names without a gradient entry are left alone but their moments
    are still created. Returns ``(params, state)``.
    """
    for name, g in grads.items():
        if name not in params:
            raise ShapeError(f"gradient for unknown parameter {name!r}")
        p = params[name]
        shape = p.shape
        if np.shape(g) != shape:
            raise ShapeError(f"gradient for {name!r} has shape {np.shape(g)}, parameter has {shape}")
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for parameter {name!r}")

    state.t += 1
    t = state.t
    b1, b2 = hyper.beta1, hyper.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for name, p in params.items():
        arr = p.data if hasattr(p, "data") and not isinstance(p, np.ndarray) else p
        if name not in state.m:
            state.m[name] = np.zeros_like(arr)
            state.v[name] = np.zeros_like(arr)
        g = grads.get(name)
        if g is None:
            continue
        g = np.asarray(g, dtype=arr.dtype)
        m, v = state.m[name], state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        arr -= hyper.lr * (m / c1) / (np.sqrt(v / c2) + hyper.eps)
    return params, state


class Adam:
    """Binds parameters, hyper-parameters and state for the training loop."""

    def __init__(self, params, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8, state=None):
        self.params = params
        self.hyper = AdamHyper(lr, beta1, beta2, eps)
        self.state = state if state is not None else AdamState()

    def step(self):
        grads = {n: p.grad for n, p in self.params.items() if p.grad is not None}
        adam_step(self.params, grads, self.state, self.hyper)

    def zero_grad(self):
        zero_grads(self.params)
