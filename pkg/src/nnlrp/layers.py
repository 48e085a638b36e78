"""Layer kinds of the feed-forward graph.

Every layer knows its output shape, its forward map and its vector-Jacobian
product.  Parameters are stored as float64 holding float32-representable
values, so any network can be written to a model file and read back
bit-exactly.
"""
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K

KINDS = ("Convolution", "InnerProduct", "ReLU", "MaxPool", "AvgPool", "Flatten", "Concat", "Softmax")


class LayerError(ValueError):
    """Inconsistent layer parameters or input shapes."""


def _param(a):
    arr = np.asarray(a, dtype=np.float32).astype(np.float64)
    arr.setflags(write=False)
    return arr


def _pos_int(value, name, minimum=1):
    value = int(value)
    if value < minimum:
        raise LayerError(f"{name} must be >= {minimum}, got {value}")
    return value


class Layer:
    kind = "?"
    arity = 1
    parameterized = False

    def output_shape(self, in_shapes):
        raise NotImplementedError

    def forward(self, *xs):
        raise NotImplementedError

    def backward(self, xs, y, g):
        """Gradient of the inputs given the output gradient ``g``."""
        raise NotImplementedError

    def params(self):
        return {}

    def config(self):
        return {}

    def _single(self, in_shapes):
        if len(in_shapes) != 1:
            raise LayerError(f"{self.kind} takes one input, got {len(in_shapes)}")
        return tuple(in_shapes[0])


@dataclass(eq=False)
class Convolution(Layer):
    weight: np.ndarray
    bias: np.ndarray = None
    stride: int = 1
    padding: int = 0

    kind = "Convolution"
    parameterized = True

    def __post_init__(self):
        self.weight = _param(self.weight)
        if self.weight.ndim != 4:
            raise LayerError(f"convolution weight must be (out, in, kh, kw), got {self.weight.shape}")
        if self.bias is None:
            self.bias = np.zeros(self.weight.shape[0])
        self.bias = _param(self.bias)
        if self.bias.shape != (self.weight.shape[0],):
            raise LayerError(f"bias shape {self.bias.shape} != ({self.weight.shape[0]},)")
        self.stride = _pos_int(self.stride, "stride")
        self.padding = _pos_int(self.padding, "padding", 0)

    out_channels = property(lambda self: self.weight.shape[0])
    in_channels = property(lambda self: self.weight.shape[1])
    kernel = property(lambda self: self.weight.shape[2:])

    def output_shape(self, in_shapes):
        shape = self._single(in_shapes)
        if len(shape) != 3:
            raise LayerError(f"convolution expects (C, H, W) input, got {shape}")
        c, h, w = shape
        if c != self.in_channels:
            raise LayerError(f"convolution expects {self.in_channels} channels, got {c}")
        kh, kw = self.kernel
        ho = (h + 2 * self.padding - kh) // self.stride + 1
        wo = (w + 2 * self.padding - kw) // self.stride + 1
        if ho < 1 or wo < 1:
            raise LayerError(f"kernel {kh}x{kw} does not fit padded input {h}x{w}")
        return (self.out_channels, ho, wo)

    def linear(self, x, weight=None):
        """Bias-free linear part, optionally with a substitute weight."""
        w = self.weight if weight is None else weight
        return K.conv2d(x, w, self.stride, self.padding)

    def linear_t(self, s, in_shape, weight=None):
        w = self.weight if weight is None else weight
        return K.conv2d_transpose(s, w, in_shape[1], in_shape[2], self.stride, self.padding)

    def forward(self, x):
        return self.linear(x) + self.bias[:, None, None]

    def backward(self, xs, y, g):
        return (self.linear_t(g, xs[0].shape),)

    def param_grads(self, xs, g):
        kh, kw = self.kernel
        dw = K.conv2d_weight_grad(xs[0], g, kh, kw, self.stride, self.padding)
        return {"weight": dw, "bias": g.sum(axis=(1, 2))}

    def params(self):
        return {"weight": self.weight, "bias": self.bias}

    def config(self):
        kh, kw = self.kernel
        return {"in_channels": self.in_channels, "out_channels": self.out_channels,
                "kernel": [kh, kw], "stride": self.stride, "padding": self.padding}


@dataclass(eq=False)
class InnerProduct(Layer):
    weight: np.ndarray  # (in, out)
    bias: np.ndarray = None

    kind = "InnerProduct"
    parameterized = True

    def __post_init__(self):
        self.weight = _param(self.weight)
        if self.weight.ndim != 2:
            raise LayerError(f"inner product weight must be (in, out), got {self.weight.shape}")
        if self.bias is None:
            self.bias = np.zeros(self.weight.shape[1])
        self.bias = _param(self.bias)
        if self.bias.shape != (self.weight.shape[1],):
            raise LayerError(f"bias shape {self.bias.shape} != ({self.weight.shape[1]},)")

    in_features = property(lambda self: self.weight.shape[0])
    out_features = property(lambda self: self.weight.shape[1])

    def output_shape(self, in_shapes):
        shape = self._single(in_shapes)
        if shape != (self.in_features,):
            raise LayerError(f"inner product expects ({self.in_features},) input, got {shape}")
        return (self.out_features,)

    def linear(self, x, weight=None):
        return x @ (self.weight if weight is None else weight)

    def linear_t(self, s, in_shape, weight=None):
        return (self.weight if weight is None else weight) @ s

    def forward(self, x):
        return x @ self.weight + self.bias

    def backward(self, xs, y, g):
        return (self.weight @ g,)

    def param_grads(self, xs, g):
        return {"weight": np.outer(xs[0], g), "bias": g.copy()}

    def params(self):
        return {"weight": self.weight, "bias": self.bias}

    def config(self):
        return {"in_features": self.in_features, "out_features": self.out_features}


class ReLU(Layer):
    kind = "ReLU"

    def output_shape(self, in_shapes):
        return self._single(in_shapes)

    def forward(self, x):
        return np.maximum(x, 0.0)

    def backward(self, xs, y, g):
        # subgradient 0 at exactly 0
        return (np.where(xs[0] > 0, g, 0.0),)


@dataclass(eq=False)
class _Pool(Layer):
    window: int = 2
    stride: int = None

    def __post_init__(self):
        self.window = _pos_int(self.window, "window")
        self.stride = _pos_int(self.window if self.stride is None else self.stride, "stride")

    def output_shape(self, in_shapes):
        shape = self._single(in_shapes)
        if len(shape) != 3:
            raise LayerError(f"{self.kind} expects (C, H, W) input, got {shape}")
        c, h, w = shape
        if h < self.window or w < self.window:
            raise LayerError(f"{self.kind} window {self.window} larger than input {h}x{w}")
        return (c, (h - self.window) // self.stride + 1, (w - self.window) // self.stride + 1)

    def config(self):
        return {"window": self.window, "stride": self.stride}


class MaxPool(_Pool):
    kind = "MaxPool"

    def forward(self, x):
        return K.maxpool2d(x, self.window, self.stride)[0]

    def argmax(self, x):
        """Flat (row-major, per channel) index of each window's winner."""
        return K.maxpool2d(x, self.window, self.stride)[1]

    def backward(self, xs, y, g):
        x = xs[0]
        return (K.maxpool2d_scatter(g, self.argmax(x), x.shape[1], x.shape[2]),)


class AvgPool(_Pool):
    kind = "AvgPool"

    def forward(self, x):
        return K.window_sum(x, self.window, self.stride) / (self.window * self.window)

    def backward(self, xs, y, g):
        x = xs[0]
        s = g / (self.window * self.window)
        return (K.window_spread(s, self.window, self.stride, x.shape[1], x.shape[2]),)


class Flatten(Layer):
    kind = "Flatten"

    def output_shape(self, in_shapes):
        return (int(np.prod(self._single(in_shapes))),)

    def forward(self, x):
        return x.reshape(-1).copy()

    def backward(self, xs, y, g):
        return (g.reshape(xs[0].shape),)


@dataclass(eq=False)
class Concat(Layer):
    axis: int = 0
    arity: int = field(default=2)

    kind = "Concat"

    def __post_init__(self):
        self.axis = _pos_int(self.axis, "axis", 0)
        self.arity = _pos_int(self.arity, "arity", 1)

    def output_shape(self, in_shapes):
        if len(in_shapes) != self.arity:
            raise LayerError(f"Concat declared {self.arity} inputs, got {len(in_shapes)}")
        first = tuple(in_shapes[0])
        if self.axis >= len(first):
            raise LayerError(f"Concat axis {self.axis} invalid for {first}")
        total = 0
        for shape in in_shapes:
            shape = tuple(shape)
            rest = shape[:self.axis] + shape[self.axis + 1:]
            if len(shape) != len(first) or rest != first[:self.axis] + first[self.axis + 1:]:
                raise LayerError(f"Concat inputs disagree off-axis: {first} vs {shape}")
            total += shape[self.axis]
        return first[:self.axis] + (total,) + first[self.axis + 1:]

    def forward(self, *xs):
        return np.concatenate(xs, axis=self.axis)

    def split(self, xs, g):
        bounds = np.cumsum([x.shape[self.axis] for x in xs])[:-1]
        return tuple(part.copy() for part in np.split(g, bounds, axis=self.axis))

    def backward(self, xs, y, g):
        return self.split(xs, g)

    def config(self):
        return {"axis": self.axis, "arity": self.arity}


class Softmax(Layer):
    kind = "Softmax"

    def output_shape(self, in_shapes):
        shape = self._single(in_shapes)
        if len(shape) != 1:
            raise LayerError(f"Softmax expects a vector, got {shape}")
        return shape

    def forward(self, x):
        e = np.exp(x - x.max())
        return e / e.sum()

    def backward(self, xs, y, g):
        return (y * (g - np.dot(g, y)),)


LAYER_TYPES = {cls.kind: cls for cls in
               (Convolution, InnerProduct, ReLU, MaxPool, AvgPool, Flatten, Concat, Softmax)}
