"""Seeded random networks and synthetic datasets for tests and demos."""
import numpy as np

from .graph import INPUT, NetworkGraph, Node
from .layers import AvgPool, Concat, Convolution, Flatten, InnerProduct, MaxPool, ReLU, Softmax


def _w(rng, shape, fan_in):
    return rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=shape)


def random_network(rng, input_shape=(3, 8, 8), n_classes=3, depth=None, bias=False,
                   branch=None, softmax=False):
    """Random ReLU network with ``depth`` parameterized layers (2..5).

    Convolutions (3x3, padding 0 or 1) come first, optionally followed by a
    max or average pool, then inner products.  With ``branch`` a two-way
    inception-style split joined by Concat is inserted after the first
    convolution.
    """
    depth = int(rng.integers(2, 6)) if depth is None else depth
    n_conv = int(rng.integers(1, depth)) if depth > 1 else 0
    n_ip = depth - n_conv
    branch = bool(rng.random() < 0.3) if branch is None else branch
    c, h, w = input_shape
    nodes, prev, shape = [], INPUT, (c, h, w)

    def add(name, layer, inputs=None):
        nonlocal prev
        nodes.append(Node(name, layer, tuple(inputs or (prev,))))
        prev = name

    def b(n):
        return rng.normal(0.0, 0.1, size=n) if bias else None

    for i in range(n_conv):
        out_c = int(rng.integers(6, 9))
        pad = 1 if shape[1] < 5 or rng.random() < 0.5 else 0
        layer = Convolution(_w(rng, (out_c, shape[0], 3, 3), 9 * shape[0]), b(out_c), 1, pad)
        add(f"conv{i}", layer)
        add(f"relu_c{i}", ReLU())
        shape = layer.output_shape([shape])
        if i == 0 and branch:
            stem = prev
            k = int(rng.integers(3, 5))
            left = Convolution(_w(rng, (k, shape[0], 3, 3), 9 * shape[0]), b(k), 1, 1)
            right = Convolution(_w(rng, (k, shape[0], 5, 5), 25 * shape[0]), b(k), 1, 2)
            add("branch_a", left, (stem,))
            add("relu_a", ReLU())
            add("branch_b", right, (stem,))
            add("relu_b", ReLU())
            add("concat", Concat(0, 2), ("relu_a", "relu_b"))
            shape = (2 * k, shape[1], shape[2])
        if shape[1] >= 4 and rng.random() < 0.6:
            pool = MaxPool(2, 2) if rng.random() < 0.5 else AvgPool(2, 2)
            add(f"pool{i}", pool)
            shape = pool.output_shape([shape])
    if nodes:
        add("flatten", Flatten())
    n = int(np.prod(shape))
    for i in range(n_ip):
        last = i == n_ip - 1
        out = n_classes if last else int(rng.integers(32, 49))
        add(f"fc{i}", InnerProduct(_w(rng, (n, out), n), b(out)))
        if not last:
            add(f"relu_f{i}", ReLU())
        n = out
    if softmax:
        add("prob", Softmax())
    return NetworkGraph(input_shape, nodes)


def random_mlp(rng, sizes, bias=False):
    layers = []
    for i, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        layers.append(InnerProduct(_w(rng, (n_in, n_out), n_in),
                                   rng.normal(0, 0.1, n_out) if bias else None))
        if i < len(sizes) - 2:
            layers.append(ReLU())
    return NetworkGraph.chain((sizes[0],), layers)


def blobs(seed, n=200, separation=4.0):
    """Two Gaussian blobs in 2-D, labels 0/1."""
    rng = np.random.default_rng(seed)
    y = np.arange(n) % 2
    centers = np.array([[-separation / 2, 0.0], [separation / 2, 0.0]])
    x = centers[y] + rng.normal(0.0, 0.5, size=(n, 2))
    return [(x[i], int(y[i])) for i in range(n)]



def bright_quadrant(seed, n=200, size=8, contrast=0.8):
    """8x8 single-channel images; class 0 has a bright top-left quadrant,
    class 1 a bright bottom-right one, over a dim noisy background."""
    rng = np.random.default_rng(seed)
    half = size // 2
    quads = {0: (slice(0, half), slice(0, half)), 1: (slice(half, size), slice(half, size))}
    out = []
    for i in range(n):
        label = i % 2
        img = rng.uniform(0.0, 0.2, size=(1, size, size))
        rows, cols = quads[label]
        img[0, rows, cols] += contrast
        out.append((img, label))
    return out


def quadrant_network(seed, size=8):
    rng = np.random.default_rng(seed)
    layers = [
        Convolution(_w(rng, (4, 1, 3, 3), 9), np.zeros(4), 1, 1),
        ReLU(),
        MaxPool(2, 2),
        Flatten(),
        InnerProduct(_w(rng, (4 * (size // 2) ** 2, 2), 4 * (size // 2) ** 2), np.zeros(2)),
        Softmax(),
    ]
    names = ["conv0", "relu0", "pool0", "flatten", "fc0", "prob"]
    return NetworkGraph.chain((1, size, size), layers, names)


def linear_network(weights, bias=None):
    """f(x) = sum_p w_p x_p (+ b) over a (C, H, W) input, one output per row
    of ``weights`` reshaped to the input."""
    weights = np.asarray(weights, dtype=np.float64)
    if weights.ndim == 3:
        weights = weights[None]
    shape = weights.shape[1:]
    ip = InnerProduct(weights.reshape(weights.shape[0], -1).T, bias)
    return NetworkGraph.chain(shape, [Flatten(), ip], ["flatten", "fc0"])
