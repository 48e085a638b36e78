"""numba versions of the spatial kernels; same contracts as ``_numpy``."""
import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def _col_range(j_count, offset, stride, width):
    # output columns j with 0 <= j*stride + offset < width
    lo = 0
    if offset < 0:
        lo = (-offset + stride - 1) // stride
    hi = j_count
    last = (width - 1 - offset)
    if last < 0:
        return 0, 0
    hi = min(hi, last // stride + 1)
    return lo, max(lo, hi)


@njit(cache=True, nogil=True)
def im2col(x, kh, kw, stride, pad):
    """Patch matrix of shape (c*kh*kw, ho*wo); padding reads as zero."""
    c_in, h, wd = x.shape
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (wd + 2 * pad - kw) // stride + 1
    cols = np.zeros((c_in * kh * kw, ho * wo))
    for c in range(c_in):
        for u in range(kh):
            for v in range(kw):
                r = (c * kh + u) * kw + v
                j0, j1 = _col_range(wo, v - pad, stride, wd)
                for i in range(ho):
                    y = i * stride - pad + u
                    if y < 0 or y >= h:
                        continue
                    base = i * wo
                    for j in range(j0, j1):
                        cols[r, base + j] = x[c, y, j * stride - pad + v]
    return cols


@njit(cache=True, nogil=True)
def col2im(cols, c_in, height, width, kh, kw, stride, pad):
    """Adjoint of :func:`im2col`: scatter-add patches back onto the image."""
    ho = (height + 2 * pad - kh) // stride + 1
    wo = (width + 2 * pad - kw) // stride + 1
    out = np.zeros((c_in, height, width))
    for c in range(c_in):
        for u in range(kh):
            for v in range(kw):
                r = (c * kh + u) * kw + v
                j0, j1 = _col_range(wo, v - pad, stride, width)
                for i in range(ho):
                    y = i * stride - pad + u
                    if y < 0 or y >= height:
                        continue
                    base = i * wo
                    for j in range(j0, j1):
                        out[c, y, j * stride - pad + v] += cols[r, base + j]
    return out


# The GEMMs stay in numpy (BLAS); numba's own np.dot would pull in scipy.
def conv2d(x, w, stride, pad):
    c_out, c_in, kh, kw = w.shape
    ho = (x.shape[1] + 2 * pad - kh) // stride + 1
    wo = (x.shape[2] + 2 * pad - kw) // stride + 1
    cols = im2col(x, kh, kw, stride, pad)
    return (w.reshape(c_out, -1) @ cols).reshape(c_out, ho, wo)


def conv2d_transpose(g, w, height, width, stride, pad):
    c_out, c_in, kh, kw = w.shape
    cols = w.reshape(c_out, -1).T @ g.reshape(c_out, -1)
    return col2im(np.ascontiguousarray(cols), c_in, height, width, kh, kw, stride, pad)


def conv2d_weight_grad(x, g, kh, kw, stride, pad):
    c_out = g.shape[0]
    cols = im2col(x, kh, kw, stride, pad)
    return (g.reshape(c_out, -1) @ cols.T).reshape(c_out, x.shape[0], kh, kw)


@njit(cache=True, nogil=True)
def maxpool2d(x, k, stride):
    c_n, h, wd = x.shape
    ho = (h - k) // stride + 1
    wo = (wd - k) // stride + 1
    out = np.empty((c_n, ho, wo))
    arg = np.empty((c_n, ho, wo), dtype=np.int64)
    for c in range(c_n):
        for i in range(ho):
            for j in range(wo):
                y0 = i * stride
                x0 = j * stride
                best = x[c, y0, x0]
                best_idx = y0 * wd + x0
                for u in range(k):
                    for v in range(k):
                        val = x[c, y0 + u, x0 + v]
                        if val > best:
                            best = val
                            best_idx = (y0 + u) * wd + x0 + v
                out[c, i, j] = best
                arg[c, i, j] = best_idx
    return out, arg


@njit(cache=True, nogil=True)
def maxpool2d_scatter(g, argmax, height, width):
    c_n, ho, wo = g.shape
    out = np.zeros((c_n, height, width))
    for c in range(c_n):
        for i in range(ho):
            for j in range(wo):
                idx = argmax[c, i, j]
                out[c, idx // width, idx % width] += g[c, i, j]
    return out


@njit(cache=True, nogil=True)
def window_sum(x, k, stride):
    c_n, h, wd = x.shape
    ho = (h - k) // stride + 1
    wo = (wd - k) // stride + 1
    out = np.zeros((c_n, ho, wo))
    for c in range(c_n):
        for i in range(ho):
            for j in range(wo):
                acc = 0.0
                for u in range(k):
                    for v in range(k):
                        acc += x[c, i * stride + u, j * stride + v]
                out[c, i, j] = acc
    return out


@njit(cache=True, nogil=True)
def window_spread(s, k, stride, height, width):
    c_n, ho, wo = s.shape
    out = np.zeros((c_n, height, width))
    for c in range(c_n):
        for i in range(ho):
            for j in range(wo):
                sv = s[c, i, j]
                for u in range(k):
                    for v in range(k):
                        out[c, i * stride + u, j * stride + v] += sv
    return out
