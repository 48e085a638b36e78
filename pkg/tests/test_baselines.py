import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nnlrp.autodiff import input_gradient
from nnlrp.baselines import OcclusionConfig, occlusion_map, sensitivity_map
from nnlrp.fixtures import linear_network, random_network
from nnlrp.graph import NetworkGraph, forward
from nnlrp.layers import Flatten, InnerProduct, ReLU
from oracles import finite_difference, kink_free


def test_occlusion_linear_closed_form(rng):
    w = rng.normal(size=(1, 4, 5))
    x = rng.normal(size=(1, 4, 5))
    net = linear_network(w)
    got = occlusion_map(net, x, 0, OcclusionConfig(1, 1, 1, 0.0))
    wq = net.nodes["fc0"].layer.weight[:, 0].reshape(1, 4, 5)
    np.testing.assert_allclose(got, (wq * x)[0], rtol=1e-12, atol=1e-14)


def test_occlusion_constant_network(rng):
    net = NetworkGraph.chain((2, 5, 5), [Flatten(), InnerProduct(np.zeros((50, 1)), [3.0])])
    assert np.all(occlusion_map(net, rng.normal(size=(2, 5, 5)), 0, OcclusionConfig(2, 3, 2)) == 0)


def test_occlusion_against_enumeration(rng):
    net = random_network(np.random.default_rng(5), input_shape=(1, 6, 6), n_classes=2, bias=True)
    x = rng.normal(size=(1, 6, 6))
    cfg = OcclusionConfig(2, 2, 2, 0.5)
    base = forward(net, x).logits[1]
    want = np.zeros((6, 6))
    for top in (0, 2, 4):
        for left in (0, 2, 4):
            occ = x.copy()
            occ[:, top:top + 2, left:left + 2] = 0.5
            want[top:top + 2, left:left + 2] = base - forward(net, occ).logits[1]
    np.testing.assert_allclose(occlusion_map(net, x, 1, cfg), want, rtol=0, atol=0)


def test_occlusion_overlaps_are_averaged(rng):
    net = linear_network(np.ones((1, 1, 3)))
    x = np.array([[[1.0, 2.0, 4.0]]])
    got = occlusion_map(net, x, 0, OcclusionConfig(1, 2, 1))
    # patches cover (0,1) and (1,2): drops 3 and 6
    np.testing.assert_allclose(got, [[3.0, 4.5, 6.0]])


def test_occlusion_patch_too_large(rng):
    net = linear_network(np.ones((1, 3, 3)))
    with pytest.raises(ValueError):
        occlusion_map(net, np.ones((1, 3, 3)), 0, OcclusionConfig(4, 1))


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 4), st.integers(1, 4), st.integers(0, 1000))
def test_unit_patch_touches_every_pixel_once(h, w, seed):
    # each pixel's value is the drop of exactly one occlusion
    rng = np.random.default_rng(seed)
    wts = rng.normal(size=(1, h, w))
    net = linear_network(wts)
    x = rng.normal(size=(1, h, w))
    got = occlusion_map(net, x, 0, OcclusionConfig(1, 1, 1))
    base = forward(net, x).logits[0]
    for i in range(h):
        for j in range(w):
            occ = x.copy()
            occ[0, i, j] = 0.0
            assert got[i, j] == base - forward(net, occ).logits[0]


def test_sensitivity_linear(rng):
    w = rng.normal(size=(3, 4, 4))
    net = linear_network(w)
    wq = net.nodes["fc0"].layer.weight[:, 0].reshape(3, 4, 4)
    assert np.array_equal(sensitivity_map(net, rng.normal(size=(3, 4, 4)), 0), np.abs(wq).sum(axis=0))


def test_sensitivity_dead_relu_region():
    net = NetworkGraph.chain((1, 2, 2), [ReLU(), Flatten(), InnerProduct(np.ones((4, 1)))])
    x = np.array([[[-1.0, 2.0], [3.0, -0.5]]])
    np.testing.assert_array_equal(sensitivity_map(net, x, 0), [[0, 1], [1, 0]])


@pytest.mark.parametrize("seed", range(4))
def test_sensitivity_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    net = random_network(rng, bias=True)
    for _ in range(100):
        x = rng.normal(size=net.input_shape)
        if kink_free(net, forward(net, x)):
            break
    fd = np.abs(finite_difference(lambda v: forward(net, v).logits[0], x)).sum(axis=0)
    got = sensitivity_map(net, x, 0)
    assert np.max(np.abs(got - fd)) / np.max(fd) < 1e-4
    assert np.all(got >= 0)
    assert np.array_equal(got, np.abs(input_gradient(net, x, 0)).sum(axis=0))
