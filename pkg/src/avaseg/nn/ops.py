"""Differentiable layers: convolution, batch norm, pooling, upsampling,
activations, dropout, channel concat.

conv2d is im2col plus one GEMM. The column buffer is rebuilt in the
backward pass instead of cached, and work is chunked over the batch axis
so the buffer stays within a fixed byte budget.
"""

from __future__ import annotations

import numpy as np

from ..errors import DimensionError
from .tensor import Tensor, make_node

_COL_BYTES_CAP = 256 * 1024 * 1024


def _im2col(xp: np.ndarray, kh: int, kw: int, out_h: int, out_w: int) -> np.ndarray:
    """(n, C, Hp, Wp) padded input -> (n*out_h*out_w, C*kh*kw) copy."""
    n, c = xp.shape[:2]
    s = xp.strides
    win = np.lib.stride_tricks.as_strided(
        xp, (n, c, kh, kw, out_h, out_w), (s[0], s[1], s[2], s[3], s[2], s[3]))
    return win.transpose(0, 4, 5, 1, 2, 3).reshape(n * out_h * out_w, c * kh * kw)


def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """Same-padded stride-1 cross-correlation; kernel (Cout, Cin, kh, kw)."""
    n, cin, h, wd = x.shape
    cout, cin_w, kh, kw = w.shape
    if cin != cin_w:
        raise DimensionError(f"conv2d channel mismatch: input {cin}, kernel {cin_w}")
    if kh % 2 == 0 or kw % 2 == 0:
        raise DimensionError("conv2d requires odd kernel sizes for same padding")
    ph, pw = kh // 2, kw // 2
    dt = x.data.dtype
    wmat = w.data.reshape(cout, cin * kh * kw)

    per_sample = h * wd * cin * kh * kw * x.data.itemsize
    chunk = max(1, min(n, _COL_BYTES_CAP // max(per_sample, 1)))

    out = np.empty((n, cout, h, wd), dtype=dt)
    for i0 in range(0, n, chunk):
        i1 = min(n, i0 + chunk)
        xp = np.pad(x.data[i0:i1], ((0, 0), (0, 0), (ph, ph), (pw, pw)))
        cols = _im2col(xp, kh, kw, h, wd)
        o = cols @ wmat.T
        out[i0:i1] = o.reshape(i1 - i0, h, wd, cout).transpose(0, 3, 1, 2)
    if b is not None:
        out += b.data.reshape(1, cout, 1, 1)

    def bw(g):
        gmatful = g.transpose(0, 2, 3, 1)
        if b is not None and b.requires_grad:
            b.accumulate(g.sum(axis=(0, 2, 3)))
        need_x = x.requires_grad
        need_w = w.requires_grad
        if not (need_x or need_w):
            return
        gw = np.zeros_like(w.data) if need_w else None
        gx = np.zeros((n, cin, h + 2 * ph, wd + 2 * pw), dtype=dt) if need_x else None
        for i0 in range(0, n, chunk):
            i1 = min(n, i0 + chunk)
            gmat = gmatful[i0:i1].reshape((i1 - i0) * h * wd, cout)
            if need_w:
                xp = np.pad(x.data[i0:i1], ((0, 0), (0, 0), (ph, ph), (pw, pw)))
                cols = _im2col(xp, kh, kw, h, wd)
                gw += (gmat.T @ cols).reshape(w.shape)
            if need_x:
                gcols = gmat @ wmat
                gc = gcols.reshape(i1 - i0, h, wd, cin, kh, kw).transpose(0, 3, 4, 5, 1, 2)
                for r in range(kh):
                    for cq in range(kw):
                        gx[i0:i1, :, r:r + h, cq:cq + wd] += gc[:, :, r, cq]
        if need_w:
            w.accumulate(gw)
        if need_x:
            x.accumulate(gx[:, :, ph:ph + h, pw:pw + wd] if (ph or pw) else gx)

    return make_node(out, (x, w) + ((b,) if b is not None else ()), bw)


class BatchNormState:
    """Running statistics and step bookkeeping for one batchnorm layer."""

    def __init__(self, channels: int, momentum: float = 0.9, eps: float = 1e-5):
        # f32 so a save/load round trip through the weight file is lossless
        self.running_mean = np.zeros(channels, dtype=np.float32)
        self.running_var = np.ones(channels, dtype=np.float32)
        self.momentum = momentum
        self.eps = eps

    def state_arrays(self) -> dict:
        return {"running_mean": self.running_mean, "running_var": self.running_var}


def batchnorm2d(x: Tensor, gamma: Tensor, beta: Tensor, state: BatchNormState,
                training: bool) -> Tensor:
    """Per-channel normalization; batch stats in training, running stats in eval."""
    dt = x.data.dtype
    eps = dt.type(state.eps)
    if training:
        mean = x.data.mean(axis=(0, 2, 3))
        var = x.data.var(axis=(0, 2, 3))
        m = state.momentum
        state.running_mean = (
            m * state.running_mean + (1.0 - m) * mean).astype(np.float32)
        state.running_var = (
            m * state.running_var + (1.0 - m) * var).astype(np.float32)
    else:
        mean = state.running_mean.astype(dt)
        var = state.running_var.astype(dt)
    ivstd = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mean.reshape(1, -1, 1, 1)) * ivstd.reshape(1, -1, 1, 1)
    out = gamma.data.reshape(1, -1, 1, 1) * xhat + beta.data.reshape(1, -1, 1, 1)

    def bw(g):
        if gamma.requires_grad:
            gamma.accumulate((g * xhat).sum(axis=(0, 2, 3)))
        if beta.requires_grad:
            beta.accumulate(g.sum(axis=(0, 2, 3)))
        if not x.requires_grad:
            return
        iv = ivstd.reshape(1, -1, 1, 1)
        gxhat = g * gamma.data.reshape(1, -1, 1, 1)
        if training:
            nm = g.shape[0] * g.shape[2] * g.shape[3]
            sum_gxhat = gxhat.sum(axis=(0, 2, 3), keepdims=True)
            sum_gxhat_xhat = (gxhat * xhat).sum(axis=(0, 2, 3), keepdims=True)
            gx = (iv / nm) * (nm * gxhat - sum_gxhat - xhat * sum_gxhat_xhat)
        else:
            gx = gxhat * iv
        x.accumulate(gx.astype(dt, copy=False))

    return make_node(out.astype(dt, copy=False), (x, gamma, beta), bw)


def maxpool2x(x: Tensor) -> Tensor:
    """2x2 stride-2 max; gradient routed to the first max per window."""
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise DimensionError(f"maxpool2x needs even spatial dims, got {h}x{w}")
    h2, w2 = h // 2, w // 2
    blocks = x.data.reshape(n, c, h2, 2, w2, 2).transpose(0, 1, 2, 4, 3, 5)
    flat = blocks.reshape(n, c, h2, w2, 4)
    idx = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, idx[..., np.newaxis], axis=-1)[..., 0]

    def bw(g):
        gflat = np.zeros((n, c, h2, w2, 4), dtype=x.data.dtype)
        np.put_along_axis(gflat, idx[..., np.newaxis], g[..., np.newaxis], axis=-1)
        gx = gflat.reshape(n, c, h2, w2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h, w)
        x.accumulate(gx)

    return make_node(np.ascontiguousarray(out), (x,), bw)


_interp_cache: dict = {}


def _interp_matrix(size: int, dtype) -> np.ndarray:
    """Row-stochastic (2*size, size) matrix for 1D x2 bilinear upsampling.

    Sample centers follow the align_corners=False convention:
    src(i) = (i + 0.5)/2 - 0.5, clamped to the valid index range.
    """
    key = (size, np.dtype(dtype).str)
    m = _interp_cache.get(key)
    if m is not None:
        return m
    m = np.zeros((2 * size, size), dtype=dtype)
    for i in range(2 * size):
        src = (i + 0.5) / 2.0 - 0.5
        i0 = int(np.floor(src))
        t = src - i0
        j0 = min(max(i0, 0), size - 1)
        j1 = min(max(i0 + 1, 0), size - 1)
        m[i, j0] += 1.0 - t
        m[i, j1] += t
    m.setflags(write=False)
    _interp_cache[key] = m
    return m


def bilinear_upsample2x(x: Tensor) -> Tensor:
    """Bilinear x2 upsampling (align_corners=False) as two 1D interpolations."""
    n, c, h, w = x.shape
    dt = x.data.dtype
    my = _interp_matrix(h, dt)
    mx = _interp_matrix(w, dt)
    out = my @ x.data @ mx.T

    def bw(g):
        x.accumulate(my.T @ g @ mx)

    return make_node(np.ascontiguousarray(out), (x,), bw)


def relu(x: Tensor) -> Tensor:
    out = np.maximum(x.data, 0)

    def bw(g):
        x.accumulate(g * (x.data > 0))

    return make_node(out, (x,), bw)


def sigmoid(x: Tensor) -> Tensor:
    d = x.data
    out = np.empty_like(d)
    pos = d >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-d[pos]))
    ex = np.exp(d[~pos])
    out[~pos] = ex / (1.0 + ex)

    def bw(g):
        x.accumulate(g * out * (1.0 - out))

    return make_node(out, (x,), bw)


def dropout(x: Tensor, rate: float, rng: np.random.Generator, training: bool) -> Tensor:
    """Inverted dropout; identity in eval mode or at rate 0."""
    if not 0.0 <= rate < 1.0:
        raise DimensionError(f"dropout rate must be in [0,1), got {rate}")
    if not training or rate == 0.0:
        def bw_id(g):
            x.accumulate(g)
        return make_node(x.data, (x,), bw_id)
    keep = (rng.random(x.shape) >= rate).astype(x.data.dtype) / x.data.dtype.type(1.0 - rate)
    out = x.data * keep

    def bw(g):
        x.accumulate(g * keep)

    return make_node(out, (x,), bw)


def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    if a.shape[0] != b.shape[0] or a.shape[2:] != b.shape[2:]:
        raise DimensionError(f"concat shapes differ: {a.shape} vs {b.shape}")
    ca = a.shape[1]
    out = np.concatenate([a.data, b.data], axis=1)

    def bw(g):
        if a.requires_grad:
            a.accumulate(g[:, :ca])
        if b.requires_grad:
            b.accumulate(g[:, ca:])

    return make_node(out, (a, b), bw)
