import numpy as np
import pytest

from nnlrp.fixtures import random_network
from nnlrp.graph import NetworkGraph, forward
from nnlrp.layers import Convolution, Flatten, InnerProduct
from nnlrp.oversample import CropError, predict_oversampled, resize_bilinear


def constant_net(shape, c):
    n = int(np.prod(shape))
    return NetworkGraph.chain(shape, [Flatten(), InnerProduct(np.zeros((n, 2)), [c, -c])])


def test_constant_network_exact():
    net = constant_net((1, 6, 6), 0.375)
    res = predict_oversampled(net, np.random.default_rng(0).normal(size=(1, 9, 9)), None)
    assert res.mean.tolist() == [0.375, -0.375]
    assert res.crops.shape == (10, 2)
    res = predict_oversampled(net, np.ones((1, 8, 8)), 0.875)
    assert res.mean.tolist() == [0.375, -0.375]


def test_external_average(rng):
    net = random_network(np.random.default_rng(2), input_shape=(3, 6, 6), n_classes=2, depth=3,
                         bias=True, softmax=True)
    image = rng.normal(size=(3, 8, 8))
    res = predict_oversampled(net, image, crop_fraction=0.75)  # 0.75 * 8 = 6: no resize
    outs = []
    for mirror in (False, True):
        for top, left in ((0, 0), (0, 2), (2, 0), (2, 2), (1, 1)):
            crop = image[:, top:top + 6, left:left + 6]
            outs.append(forward(net, crop[:, :, ::-1] if mirror else crop).output)
    np.testing.assert_allclose(res.crops, np.array(outs), rtol=0, atol=0)
    np.testing.assert_allclose(res.mean, sum(outs) / 10, rtol=0, atol=1e-12)
    assert res.emitted == "probabilities"


def test_mirror_symmetry(rng):
    # symmetric image and a net whose kernel is symmetric left-right
    half = rng.normal(size=(1, 8, 4))
    image = np.concatenate([half, half[:, :, ::-1]], axis=2)
    k = rng.normal(size=(2, 1, 3, 2))
    w = np.concatenate([k, k[:, :, :, :1]], axis=3)
    w[:, :, :, 2] = w[:, :, :, 0]
    conv = Convolution(w, None, 1, 1)
    net = NetworkGraph.chain((1, 6, 6), [conv, Flatten(), InnerProduct(np.ones((72, 1)))])
    res = predict_oversampled(net, image, None)
    # mirrored center crop equals the center crop of a symmetric image
    np.testing.assert_allclose(res.crops[4], res.crops[9], rtol=1e-12)
    np.testing.assert_allclose(res.crops[0], res.crops[6], rtol=1e-12)


def test_crop_larger_than_image():
    net = constant_net((1, 6, 6), 1.0)
    with pytest.raises(CropError):
        predict_oversampled(net, np.zeros((1, 5, 5)), None)


def test_resize_identity_and_constant():
    img = np.arange(16.0).reshape(1, 4, 4)
    np.testing.assert_array_equal(resize_bilinear(img, 4, 4), img)
    out = resize_bilinear(np.full((2, 3, 5), 2.5), 7, 4)
    assert out.shape == (2, 7, 4) and np.all(out == 2.5)
