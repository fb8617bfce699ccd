"""Differentiable network operations: convolution, pooling, heads, softmax.

Convolutions are cross-correlations computed by unfolding the padded input
into a column matrix (one row per output position) and a single GEMM.
2D and 3D variants share the same N-d code path.
"""

import itertools
import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ShapeError
from .tensor import Tensor, as_tensor, make_result


def _triple(v, n):
    if isinstance(v, int):
        return (v,) * n
    v = tuple(int(x) for x in v)
    if len(v) != n:
        raise ShapeError(f"expected {n} values, got {v}")
    return v


def _window_slices(offset, stride, out):
    """Slices selecting, for one kernel offset, the input positions it touches."""
    return tuple(slice(o, o + s * (n - 1) + 1, s) for o, s, n in zip(offset, stride, out))


def _conv(op, x, w, b, stride, padding, nsp):
    x, w = as_tensor(x), as_tensor(w)
    b = as_tensor(b) if b is not None else Tensor(np.zeros(w.shape[0]))
    if x.ndim != nsp + 2 or w.ndim != nsp + 2:
        raise ShapeError(f"{op}: input {x.shape} and kernel {w.shape} must both have rank {nsp + 2}")
    n, cin = x.shape[:2]
    cout, wcin = w.shape[:2]
    if cin != wcin:
        raise ShapeError(f"{op}: input {x.shape} has {cin} channels, kernel {w.shape} expects {wcin}")
    if b.shape != (cout,):
        raise ShapeError(f"{op}: bias {b.shape} does not match kernel {w.shape}")
    stride = _triple(stride, nsp)
    padding = _triple(padding, nsp)
    ksize = w.shape[2:]
    for d, k, p in zip(x.shape[2:], ksize, padding):
        if k > d + 2 * p:
            raise ShapeError(f"{op}: kernel {w.shape} larger than padded input {x.shape}")

    # Work channels-last internally: the unfold copy and the col2im scatter
    # both touch contiguous channel runs that way.
    xs = x.shape[2:]
    padded_shape = (n,) + tuple(d + 2 * p for d, p in zip(xs, padding)) + (cin,)
    inner = tuple(slice(p, p + d) for p, d in zip(padding, xs))
    xd = np.zeros(padded_shape)
    xd[(slice(None),) + inner] = np.moveaxis(x.data, 1, -1)
    spatial = tuple(range(1, 1 + nsp))
    win = sliding_window_view(xd, ksize, axis=spatial)
    win = win[(slice(None),) + tuple(slice(None, None, s) for s in stride)]
    out_sp = win.shape[1:1 + nsp]
    # [N, *out, C, *k] -> [N, *out, *k, C]
    perm = (0,) + spatial + tuple(range(2 + nsp, 2 + 2 * nsp)) + (1 + nsp,)
    cols = np.ascontiguousarray(win.transpose(perm)).reshape(n * math.prod(out_sp), -1)
    wperm = (0,) + tuple(range(2, 2 + nsp)) + (1,)
    wmat = np.ascontiguousarray(w.data.transpose(wperm)).reshape(cout, -1)
    out = cols @ wmat.T
    out += b.data
    out = np.ascontiguousarray(np.moveaxis(out.reshape((n,) + out_sp + (cout,)), -1, 1))

    def bw(g):
        gm = np.moveaxis(g, 1, -1).reshape(-1, cout)
        gw = None
        if w.requires_grad:
            gw = np.moveaxis((gm.T @ cols).reshape((cout,) + ksize + (cin,)), -1, 1)
        gb = gm.sum(axis=0) if b.requires_grad else None
        gx = None
        if x.requires_grad:
            gcols = (gm @ wmat).reshape((n,) + out_sp + ksize + (cin,))
            gxp = np.zeros(padded_shape)
            lead = (slice(None),) * (1 + nsp)
            for offset in itertools.product(*(range(k) for k in ksize)):
                gxp[(slice(None),) + _window_slices(offset, stride, out_sp)] += gcols[lead + offset]
            gx = np.ascontiguousarray(np.moveaxis(gxp[(slice(None),) + inner], -1, 1))
        return gx, gw, gb

    return make_result(op, out, (x, w, b), bw)


def conv3d(x, kernel, bias=None, stride=1, padding=0) -> Tensor:
    """3D cross-correlation: [N,Cin,T,H,W] * [Cout,Cin,kt,kh,kw] -> [N,Cout,T',H',W']."""
    return _conv("conv3d", x, kernel, bias, stride, padding, 3)


def conv2d(x, kernel, bias=None, stride=1, padding=0) -> Tensor:
    """2D cross-correlation: [N,Cin,H,W] * [Cout,Cin,kh,kw] -> [N,Cout,H',W']."""
    return _conv("conv2d", x, kernel, bias, stride, padding, 2)


def _pool(op, x, mode, window, stride, nsp):
    x = as_tensor(x)
    if x.ndim != nsp + 2:
        raise ShapeError(f"{op}: expected rank {nsp + 2} input, got {x.shape}")
    window = _triple(window, nsp)
    stride = _triple(stride if stride is not None else window, nsp)
    for d, k in zip(x.shape[2:], window):
        if k > d:
            raise ShapeError(f"{op}: window {window} larger than input {x.shape}")
    spatial = tuple(range(2, 2 + nsp))
    win = sliding_window_view(x.data, window, axis=spatial)
    win = win[(slice(None), slice(None)) + tuple(slice(None, None, s) for s in stride)]
    out_sp = win.shape[2:2 + nsp]
    wsize = math.prod(window)
    shape = x.shape
    lead = (slice(None), slice(None))

    if mode == "mean":
        out = win.mean(axis=tuple(range(2 + nsp, 2 + 2 * nsp)))

        def bw(g):
            gx = np.zeros(shape)
            share = g / wsize
            for offset in itertools.product(*(range(k) for k in window)):
                gx[lead + _window_slices(offset, stride, out_sp)] += share
            return (gx,)

    elif mode == "max":
        flat = win.reshape(win.shape[:2 + nsp] + (wsize,))
        arg = flat.argmax(axis=-1)  # first maximum in scan order
        out = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]

        def bw(g):
            gx = np.zeros(shape)
            for j, offset in enumerate(itertools.product(*(range(k) for k in window))):
                gx[lead + _window_slices(offset, stride, out_sp)] += np.where(arg == j, g, 0.0)
            return (gx,)

    else:
        raise ValueError(f"{op}: unknown mode {mode!r}")
    return make_result(op, np.ascontiguousarray(out), (x,), bw)


def pool3d(x, mode="max", window=2, stride=None) -> Tensor:
    """Windowed max/mean over (T, H, W); stride defaults to the window."""
    return _pool("pool3d", x, mode, window, stride, 3)


def pool2d(x, mode="max", window=2, stride=None) -> Tensor:
    return _pool("pool2d", x, mode, window, stride, 2)


def global_avg_pool(x) -> Tensor:
    """Mean over every axis after the first two: [N,C,...] -> [N,C]."""
    x = as_tensor(x)
    if x.ndim < 3:
        raise ShapeError(f"global_avg_pool needs spatial axes, got {x.shape}")
    shape = x.shape
    count = math.prod(shape[2:])
    axes = tuple(range(2, x.ndim))

    def bw(g):
        return (np.broadcast_to((g / count).reshape(g.shape + (1,) * len(axes)), shape).copy(),)

    return make_result("global_avg_pool", x.data.mean(axis=axes), (x,), bw)


def linear(x, weight, bias=None) -> Tensor:
    """x @ weight.T + bias for x [N,D], weight [O,D]."""
    x, weight = as_tensor(x), as_tensor(weight)
    bias = as_tensor(bias) if bias is not None else Tensor(np.zeros(weight.shape[0]))
    if x.ndim != 2 or weight.ndim != 2 or x.shape[1] != weight.shape[1]:
        raise ShapeError(f"linear: input {x.shape} incompatible with weight {weight.shape}")
    if bias.shape != (weight.shape[0],):
        raise ShapeError(f"linear: bias {bias.shape} incompatible with weight {weight.shape}")
    xd, wd = x.data, weight.data

    def bw(g):
        return (
            g @ wd if x.requires_grad else None,
            g.T @ xd if weight.requires_grad else None,
            g.sum(axis=0) if bias.requires_grad else None,
        )

    return make_result("linear", xd @ wd.T + bias.data, (x, weight, bias), bw)


def relu(x) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0
    return make_result("relu", np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def softmax(logits) -> Tensor:
    """Row-wise softmax over the last axis, computed with a max shift."""
    z = as_tensor(logits)
    e = np.exp(z.data - z.data.max(axis=-1, keepdims=True))
    s = e / e.sum(axis=-1, keepdims=True)

    def bw(g):
        return (s * (g - (g * s).sum(axis=-1, keepdims=True)),)

    return make_result("softmax", s, (z,), bw)
