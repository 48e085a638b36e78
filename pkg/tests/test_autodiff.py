import numpy as np
import pytest

from nnlrp.autodiff import TargetError, TrainingError, accuracy, backprop, input_gradient, train_toy
from nnlrp.fixtures import blobs, linear_network, random_mlp, random_network
from nnlrp.graph import NetworkGraph, forward
from nnlrp.layers import (AvgPool, Concat, Convolution, Flatten, InnerProduct, MaxPool, ReLU,
                          Softmax)
from oracles import finite_difference, kink_free


def kink_free_point(net, rng, tries=200):
    for _ in range(tries):
        x = rng.normal(size=net.input_shape)
        if kink_free(net, forward(net, x)):
            return x
    pytest.skip("no kink-free point found")


def rel_err(a, b):
    return np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-12)


def test_linear_gradient_is_weight(rng):
    w = rng.normal(size=(2, 3, 3))
    net = linear_network(w)
    g = input_gradient(net, rng.normal(size=(2, 3, 3)), 0)
    assert np.array_equal(g, net.nodes["fc0"].layer.weight[:, 0].reshape(2, 3, 3))


def test_dead_relu_blocks_gradient():
    net = NetworkGraph.chain((2,), [ReLU(), InnerProduct([[1.0], [1.0]])])
    np.testing.assert_array_equal(input_gradient(net, np.array([-1.0, 2.0]), 0), [0.0, 1.0])


def test_target_out_of_range():
    net = NetworkGraph.chain((2,), [InnerProduct(np.ones((2, 2)))])
    with pytest.raises(TargetError):
        input_gradient(net, np.zeros(2), 2)


def test_bias_free_linear_gradient_independent_of_x(rng):
    net = NetworkGraph.chain((4,), [InnerProduct(rng.normal(size=(4, 3)))])
    g1 = input_gradient(net, rng.normal(size=4), 1)
    g2 = input_gradient(net, 10 * rng.normal(size=4), 1)
    assert np.array_equal(g1, g2)


def single(layer, shape, rng):
    out = layer.output_shape([shape])
    n = int(np.prod(out))
    layers = [layer] + ([Flatten()] if len(out) > 1 else []) + [InnerProduct(rng.normal(size=(n, 2)))]
    return NetworkGraph.chain(shape, layers)


LAYERS = {
    "conv": lambda rng: (Convolution(rng.normal(size=(3, 2, 3, 3)), rng.normal(size=3), 2, 1), (2, 6, 6)),
    "inner": lambda rng: (InnerProduct(rng.normal(size=(5, 4)), rng.normal(size=4)), (5,)),
    "relu": lambda rng: (ReLU(), (6,)),
    "maxpool": lambda rng: (MaxPool(2, 1), (2, 4, 4)),
    "avgpool": lambda rng: (AvgPool(3, 2), (2, 7, 7)),
    "flatten": lambda rng: (Flatten(), (2, 3, 3)),
    "softmax": lambda rng: (Softmax(), (4,)),
}


@pytest.mark.parametrize("kind", sorted(LAYERS))
def test_layer_gradient_matches_finite_differences(kind, backend):
    rng = np.random.default_rng(7)
    layer, shape = LAYERS[kind](rng)
    net = single(layer, shape, rng)
    x = kink_free_point(net, rng)
    for t in range(2):
        fd = finite_difference(lambda v: forward(net, v).logits[t], x)
        assert rel_err(input_gradient(net, x, t), fd) < 1e-4


def test_concat_gradient(rng):
    from nnlrp.graph import Node
    nodes = [Node("a", Convolution(rng.normal(size=(2, 1, 3, 3)), None, 1, 1)),
             Node("b", Convolution(rng.normal(size=(1, 1, 1, 1)), None, 1, 0)),
             Node("cat", Concat(0, 2), ("a", "b")), Node("r", ReLU(), ("cat",)),
             Node("f", Flatten(), ("r",)), Node("fc", InnerProduct(rng.normal(size=(48, 2))), ("f",))]
    net = NetworkGraph((1, 4, 4), nodes)
    x = kink_free_point(net, rng)
    fd = finite_difference(lambda v: forward(net, v).logits[1], x)
    assert rel_err(input_gradient(net, x, 1), fd) < 1e-4


@pytest.mark.parametrize("seed", range(6))
def test_composed_gradient(seed):
    rng = np.random.default_rng(100 + seed)
    net = random_network(rng, bias=True, softmax=True)
    x = kink_free_point(net, rng)
    fd = finite_difference(lambda v: forward(net, v).logits[0], x)
    assert rel_err(input_gradient(net, x, 0), fd) < 1e-4


def test_parameter_gradients(rng):
    net = random_mlp(rng, [3, 5, 2], bias=True)
    x = kink_free_point(net, rng)
    trace = forward(net, x)
    tape = backprop(net, trace, net.sink, np.array([1.0, 0.0]), with_params=True)
    w = np.array(net.nodes["innerproduct0"].layer.weight)

    def f(wv):
        other = net.replace_params({"innerproduct0": {"weight": wv}})
        return forward(other, x).output[0]

    # float32 rounding of perturbed weights forces a coarse step
    fd = finite_difference(f, w, h=1e-2)
    assert rel_err(tape.param_grads["innerproduct0"]["weight"], fd) < 1e-3


def brute_force_separable(data, steps=3600):
    """Search directions and thresholds for a perfect linear split."""
    x = np.array([p for p, _ in data])
    y = np.array([c for _, c in data])
    for theta in np.linspace(0, np.pi, steps, endpoint=False):
        proj = x @ np.array([np.cos(theta), np.sin(theta)])
        for sign in (1, -1):
            p = sign * proj
            if p[y == 1].min() > p[y == 0].max():
                return True
    return False


def blob_net():
    return NetworkGraph.chain((2,), [InnerProduct(np.zeros((2, 2))), Softmax()])


def test_train_linearly_separable():
    data = blobs(0)
    assert brute_force_separable(data)
    net, log = train_toy(blob_net(), data, epochs=200, learning_rate=0.05, seed=0, batch_size=20)
    assert accuracy(net, data) >= 0.99
    assert len(log) == 200 and log[-1].loss < log[0].loss


def test_zero_learning_rate_keeps_parameters(rng):
    start = NetworkGraph.chain((2,), [InnerProduct(rng.normal(size=(2, 2))), Softmax()])
    net, _ = train_toy(start, blobs(1, n=20), epochs=3, learning_rate=0.0, seed=0)
    assert np.array_equal(net.nodes["innerproduct0"].layer.weight, start.nodes["innerproduct0"].layer.weight)


def test_training_deterministic():
    data = blobs(2, n=40)
    a, _ = train_toy(blob_net(), data, epochs=5, learning_rate=0.1, seed=9)
    b, _ = train_toy(blob_net(), data, epochs=5, learning_rate=0.1, seed=9)
    assert a.nodes["innerproduct0"].layer.weight.tobytes() == b.nodes["innerproduct0"].layer.weight.tobytes()


def test_training_needs_softmax():
    with pytest.raises(ValueError):
        train_toy(NetworkGraph.chain((2,), [InnerProduct(np.zeros((2, 2)))]), blobs(0, 4), 1, 0.1, 0)


def test_divergence_aborts():
    data = [(np.array([1e30, 1e30]), 0), (np.array([-1e30, 1e30]), 1)]
    with pytest.raises(TrainingError), np.errstate(all="ignore"):
        train_toy(blob_net(), data, epochs=5, learning_rate=1e10, seed=0)
