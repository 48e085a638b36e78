"""Spatial kernels (convolution, pooling) with two interchangeable backends.

The numba backend is used when numba imports and ``NNLRP_NUMBA`` is not set
to ``0``; otherwise the pure-numpy path is used.  Both backends share one
contract, checked against each other in the test suite.
"""
import os

import numpy as np

from . import _numpy

_wanted = os.environ.get("NNLRP_NUMBA", "1").strip().lower() not in ("0", "false", "no", "off")


def _load_numba():
    try:
        import importlib
        return importlib.import_module(f"{__name__}._numba")
    except ImportError:  # pragma: no cover - numba missing
        return None


_jit = _load_numba() if _wanted else None

BACKEND = "numba" if _jit is not None else "numpy"
_impl = _jit if _jit is not None else _numpy

BACKENDS = {"numpy": _numpy}
if _jit is not None:
    BACKENDS["numba"] = _jit


def load_backend(name):
    """Kernel module for ``name`` ("numpy" or "numba"), importing on demand."""
    if name == "numpy":
        return _numpy
    if name == "numba":
        mod = BACKENDS.get("numba") or _load_numba()
        if mod is None:
            raise ImportError("numba backend unavailable")
        BACKENDS["numba"] = mod
        return mod
    raise ValueError(f"unknown backend {name!r}")


def set_backend(name):
    """Switch the active backend process-wide; returns the previous name."""
    global _impl, BACKEND
    mod = load_backend(name)
    previous = BACKEND
    _impl, BACKEND = mod, name
    return previous


def _f64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def conv2d(x, w, stride=1, pad=0):
    return _impl.conv2d(_f64(x), _f64(w), int(stride), int(pad))


def conv2d_transpose(g, w, height, width, stride=1, pad=0):
    return _impl.conv2d_transpose(_f64(g), _f64(w), int(height), int(width), int(stride), int(pad))


def conv2d_weight_grad(x, g, kh, kw, stride=1, pad=0):
    return _impl.conv2d_weight_grad(_f64(x), _f64(g), int(kh), int(kw), int(stride), int(pad))


def maxpool2d(x, k, stride):
    return _impl.maxpool2d(_f64(x), int(k), int(stride))


def maxpool2d_scatter(g, argmax, height, width):
    return _impl.maxpool2d_scatter(_f64(g), np.ascontiguousarray(argmax, dtype=np.int64),
                                   int(height), int(width))


def window_sum(x, k, stride):
    return _impl.window_sum(_f64(x), int(k), int(stride))


def window_spread(s, k, stride, height, width):
    return _impl.window_spread(_f64(s), int(k), int(stride), int(height), int(width))


__all__ = [
    "BACKEND", "BACKENDS", "load_backend", "set_backend", "conv2d", "conv2d_transpose", "conv2d_weight_grad",
    "maxpool2d", "maxpool2d_scatter", "window_sum", "window_spread",
]
