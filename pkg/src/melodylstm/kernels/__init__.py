"""Backend selection for the LSTM layer kernels.

Two interchangeable implementations of the same forward/backward contract:

* ``fused``: Cython + BLAS extension, built at install time when a C
  compiler is present.
* ``reference``: pure numpy, always available.

The default is the fused backend when importable, falling back to the
reference one.  ``MELODYLSTM_KERNELS=reference|fused|auto`` overrides the
choice at import time; ``set_backend`` overrides it at runtime.
"""
from __future__ import annotations

import os

import numpy as np

from . import reference

try:
    from . import _fused
except ImportError:
    _fused = None

_BACKENDS = {"reference": reference}
if _fused is not None:
    _BACKENDS["fused"] = _fused


def available_backends() -> list[str]:
    return sorted(_BACKENDS)


def _pick(name: str):
    if name == "auto":
        return _BACKENDS.get("fused", reference)
    try:
        return _BACKENDS[name]
    except KeyError:
        raise ValueError(
            f"unknown kernel backend {name!r}; available: {available_backends()}"
        ) from None


_active = _pick(os.environ.get("MELODYLSTM_KERNELS", "auto"))


def get_backend() -> str:
    for name, mod in _BACKENDS.items():
        if mod is _active:
            return name
    raise AssertionError("active backend not registered")


def set_backend(name: str) -> None:
    global _active
    _active = _pick(name)


def _for(arr) -> object:
    # the fused kernel is double-only; other dtypes run on the numpy backend
    if arr.dtype == np.float64:
        return _active
    return reference


def lstm_forward(xp, w_h):
    return _for(xp).lstm_forward(xp, w_h)


def lstm_backward(dhout, gates, cells, tanhc, hout, w_h):
    return _for(gates).lstm_backward(dhout, gates, cells, tanhc, hout, w_h)
