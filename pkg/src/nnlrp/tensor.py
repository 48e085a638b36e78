"""Dense float64 tensors.

A tensor here is simply a C-contiguous ``numpy.ndarray`` of dtype float64.
The helpers below add the few checked operations the engine relies on.
"""
import numpy as np

OPS = ("add", "sub", "mul", "div")


class ShapeError(ValueError):
    """Operand shapes are incompatible."""

    def __init__(self, message, *shapes):
        super().__init__(message)
        self.shapes = shapes


def as_tensor(data, shape=None):
    """Coerce ``data`` to a float64 tensor, optionally reshaping row-major."""
    arr = np.array(data, dtype=np.float64, order="C")
    if shape is not None:
        shape = tuple(int(s) for s in shape)
        if any(s < 1 for s in shape):
            raise ShapeError(f"extents must be positive, got {shape}", shape)
        if arr.size != int(np.prod(shape)):
            raise ShapeError(f"{arr.size} values cannot fill shape {shape}", arr.shape, shape)
        arr = arr.reshape(shape)
    return arr


def signed_stabilizer(z, eps):
    """``eps`` carrying the sign of ``z``; exact zeros count as positive."""
    return np.where(z >= 0, eps, -eps)


def elementwise(op, a, b, eps=None):
    """Apply ``op`` to equal-shape tensors.

    ``op="div"`` requires ``eps``: each denominator is shifted away from zero
    by a sign-matched ``eps`` before dividing.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}", a.shape, b.shape)
    if op == "add":
        return a + b
    if op == "sub":
        return a - b
    if op == "mul":
        return a * b
    if op == "div":
        if eps is None or eps == 0:
            raise ValueError("div needs a nonzero stabilizer eps")
        return a / (b + signed_stabilizer(b, abs(eps)))
    raise ValueError(f"unknown op {op!r}; expected one of {OPS}")


def reduce_sum(a, axes=None):
    """Sum over ``axes`` (all axes when None); reduced axes are dropped."""
    a = np.asarray(a, dtype=np.float64)
    if axes is None:
        axes = tuple(range(a.ndim))
    axes = tuple(sorted(set(int(ax) for ax in axes)))
    for ax in axes:
        if not -a.ndim <= ax < a.ndim:
            raise ShapeError(f"axis {ax} invalid for shape {a.shape}", a.shape)
    return np.sum(a, axis=axes)
