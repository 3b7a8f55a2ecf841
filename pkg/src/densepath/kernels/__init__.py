"""Hot convolution/pooling kernels with a selectable backend.

``DENSEPATH_BACKEND`` picks the implementation at import time:

* ``numba`` -- jitted loops (default when numba imports),
* ``numpy`` -- vectorised pure-numpy fallback.

:func:`set_backend` switches at runtime; both backends share one signature set.
"""

import importlib
import os

_FUNCS = (
    "conv2d_forward",
    "conv2d_backward",
    "maxpool2d_forward",
    "maxpool2d_backward",
    "avgpool2d_forward",
    "avgpool2d_backward",
)

BACKENDS = ("numba", "numpy")


def numba_available():
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


def load(name):
    """Return the kernel module for backend ``name``."""
    if name not in BACKENDS:
        raise ValueError(f"unknown kernel backend {name!r}; expected one of {BACKENDS}")
    return importlib.import_module(f"{__name__}._{name}")


def set_backend(name):
    global backend
    mod = load(name)
    for f in _FUNCS:
        globals()[f] = getattr(mod, f)
    backend = name


def _default():
    name = os.environ.get("DENSEPATH_BACKEND", "").strip().lower()
    if name:
        return name
    return "numba" if numba_available() else "numpy"


backend = None
set_backend(_default())
