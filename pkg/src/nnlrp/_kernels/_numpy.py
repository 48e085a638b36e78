"""Pure-numpy versions of the spatial kernels.

All arrays are channel-major ``(C, H, W)`` float64.  Padding is implicit
zero padding; transposed kernels drop whatever lands on padding.
"""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _out_extent(n, k, stride, pad):
    return (n + 2 * pad - k) // stride + 1


def _patches(x, kh, kw, stride, pad):
    if pad:
        x = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    win = sliding_window_view(x, (kh, kw), axis=(1, 2))
    return win[:, ::stride, ::stride]  # (C, Ho, Wo, kh, kw)


def conv2d(x, w, stride, pad):
    kh, kw = w.shape[2:]
    p = _patches(x, kh, kw, stride, pad)
    return np.einsum("chwuv,ocuv->ohw", p, w, optimize=True)


def conv2d_transpose(g, w, height, width, stride, pad):
    out_c, in_c, kh, kw = w.shape
    ho, wo = g.shape[1:]
    buf = np.zeros((in_c, height + 2 * pad, width + 2 * pad))
    for u in range(kh):
        for v in range(kw):
            contrib = np.einsum("oc,ohw->chw", w[:, :, u, v], g)
            buf[:, u:u + stride * ho:stride, v:v + stride * wo:stride] += contrib
    return buf[:, pad:pad + height, pad:pad + width].copy()


def conv2d_weight_grad(x, g, kh, kw, stride, pad):
    p = _patches(x, kh, kw, stride, pad)
    return np.einsum("chwuv,ohw->ocuv", p, g, optimize=True)


def maxpool2d(x, k, stride):
    c, h, w = x.shape
    win = sliding_window_view(x, (k, k), axis=(1, 2))[:, ::stride, ::stride]
    ho, wo = win.shape[1:3]
    flat = win.reshape(c, ho, wo, k * k)
    local = np.argmax(flat, axis=-1)  # first maximum: lowest flat index
    out = np.take_along_axis(flat, local[..., None], axis=-1)[..., 0]
    rows = np.arange(ho)[:, None] * stride + local // k
    cols = np.arange(wo)[None, :] * stride + local % k
    return out.copy(), (rows * w + cols).astype(np.int64)


def maxpool2d_scatter(g, argmax, height, width):
    c = g.shape[0]
    out = np.zeros((c, height * width))
    for ch in range(c):
        np.add.at(out[ch], argmax[ch].ravel(), g[ch].ravel())
    return out.reshape(c, height, width)


def window_sum(x, k, stride):
    win = sliding_window_view(x, (k, k), axis=(1, 2))[:, ::stride, ::stride]
    return win.sum(axis=(-2, -1))


def window_spread(s, k, stride, height, width):
    c, ho, wo = s.shape
    out = np.zeros((c, height, width))
    for u in range(k):
        for v in range(k):
            out[:, u:u + stride * ho:stride, v:v + stride * wo:stride] += s
    return out
