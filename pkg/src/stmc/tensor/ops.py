"""Differentiable primitives over :class:`Tensor`.

Every op computes its forward value with numpy and attaches a closure that
maps the output gradient to one gradient per parent (``None`` for parents
that do not need one). Convolutions run through im2col so the heavy lifting
lands in a single BLAS matmul.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .core import ShapeError, Tensor, as_tensor, note_branch


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _lift(a, like: Tensor | None = None) -> Tensor:
    if isinstance(a, Tensor):
        return a
    dtype = like.dtype if like is not None else np.float32
    return Tensor(np.asarray(a, dtype=dtype))


# ---------------------------------------------------------------------------
# elementwise arithmetic
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a = _lift(a, b if isinstance(b, Tensor) else None)
    b = _lift(b, a)
    out = a.data + b.data

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return Tensor.from_op(out, (a, b), bw, "add")


def sub(a, b) -> Tensor:
    a = _lift(a, b if isinstance(b, Tensor) else None)
    b = _lift(b, a)
    out = a.data - b.data

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return Tensor.from_op(out, (a, b), bw, "sub")


def mul(a, b) -> Tensor:
    a = _lift(a, b if isinstance(b, Tensor) else None)
    b = _lift(b, a)
    out = a.data * b.data

    def bw(g):
        ga = _unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return Tensor.from_op(out, (a, b), bw, "mul")


def div(a, b) -> Tensor:
    a = _lift(a, b if isinstance(b, Tensor) else None)
    b = _lift(b, a)
    out = a.data / b.data

    def bw(g):
        ga = _unbroadcast(g / b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(-g * a.data / (b.data * b.data), b.shape) if b.requires_grad else None
        return ga, gb

    return Tensor.from_op(out, (a, b), bw, "div")


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return Tensor.from_op(out, (x,), lambda g: (g * out,), "exp")


def log(x: Tensor) -> Tensor:
    out = np.log(x.data)
    return Tensor.from_op(out, (x,), lambda g: (g / x.data,), "log")


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    note_branch("relu", mask)
    out = np.where(mask, x.data, 0).astype(x.dtype, copy=False)
    return Tensor.from_op(out, (x,), lambda g: (g * mask,), "relu")


def sigmoid(x: Tensor) -> Tensor:
    out = 0.5 * (np.tanh(0.5 * x.data) + 1.0)
    return Tensor.from_op(out.astype(x.dtype, copy=False), (x,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)
    return Tensor.from_op(out, (x,), lambda g: (g * (1.0 - out * out),), "tanh")


def smooth_l1(x: Tensor) -> Tensor:
    """0.5 x^2 inside |x| < 1, |x| - 0.5 outside."""
    ax = np.abs(x.data)
    inside = ax < 1
    note_branch("smooth_l1", inside)
    out = np.where(inside, 0.5 * x.data * x.data, ax - 0.5).astype(x.dtype, copy=False)

    def bw(g):
        return (g * np.where(inside, x.data, np.sign(x.data)),)

    return Tensor.from_op(out, (x,), bw, "smooth_l1")


# ---------------------------------------------------------------------------
# reductions and shape plumbing
# ---------------------------------------------------------------------------

def sum(x: Tensor, axis=None) -> Tensor:  # noqa: A001 - mirrors numpy naming
    out = np.asarray(x.data.sum(axis=axis))

    def bw(g):
        if axis is None:
            return (np.broadcast_to(g, x.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), x.shape).copy(),)

    return Tensor.from_op(out, (x,), bw, "sum")


def mean(x: Tensor, axis=None) -> Tensor:
    n = x.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return mul(sum(x, axis), 1.0 / float(n))


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    out = x.data.reshape(shape)
    return Tensor.from_op(out, (x,), lambda g: (g.reshape(x.shape),), "reshape")


def transpose(x: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    return Tensor.from_op(x.data.transpose(axes), (x,), lambda g: (g.transpose(inv),), "transpose")


def _is_fancy(index) -> bool:
    items = index if isinstance(index, tuple) else (index,)
    return any(isinstance(i, (list, np.ndarray)) for i in items)


def getitem(x: Tensor, index) -> Tensor:
    out = x.data[index]
    fancy = _is_fancy(index)

    def bw(g):
        gx = np.zeros_like(x.data)
        if fancy:
            np.add.at(gx, index, g)
        else:
            gx[index] += g
        return (gx,)

    return Tensor.from_op(np.array(out, copy=True) if np.isscalar(out) else out, (x,), bw, "getitem")


def concat(parts: Sequence[Tensor], axis: int = -1) -> Tensor:
    """Join along ``axis``; the backward splits the gradient back by segment."""
    if not parts:
        raise ShapeError("concat needs at least one part")
    parts = [as_tensor(p) for p in parts]
    nd = parts[0].ndim
    ax = axis % nd
    ref = parts[0].shape
    for p in parts[1:]:
        if p.ndim != nd or any(p.shape[d] != ref[d] for d in range(nd) if d != ax):
            raise ShapeError(f"concat: extents {p.shape} incompatible with {ref} outside axis {ax}")
    out = np.concatenate([p.data for p in parts], axis=ax)
    bounds = np.cumsum([p.shape[ax] for p in parts])[:-1]

    def bw(g):
        return tuple(np.split(g, bounds, axis=ax))

    return Tensor.from_op(out, parts, bw, "concat")


def concat_channels(parts: Sequence[Tensor]) -> Tensor:
    """Concatenate along the channel (trailing) extent."""
    return concat(parts, axis=-1)


def split(x: Tensor, widths: Sequence[int], axis: int = -1) -> list:
    offsets = np.concatenate([[0], np.cumsum(widths)])
    if offsets[-1] != x.shape[axis]:
        raise ShapeError(f"split widths {list(widths)} do not sum to extent {x.shape[axis]}")
    ax = axis % x.ndim
    out = []
    for lo, hi in zip(offsets[:-1], offsets[1:]):
        idx = [slice(None)] * x.ndim
        idx[ax] = slice(int(lo), int(hi))
        out.append(getitem(x, tuple(idx)))
    return out


def stack(parts: Sequence[Tensor], axis: int = 0) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    out = np.stack([p.data for p in parts], axis=axis)

    def bw(g):
        return tuple(np.moveaxis(g, axis, 0))

    return Tensor.from_op(out, parts, bw, "stack")


# ---------------------------------------------------------------------------
# linear maps
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """``a[..., n, k] @ b[k, m]``."""
    a, b = as_tensor(a), as_tensor(b)
    if b.ndim != 2 or a.shape[-1] != b.shape[0]:
        raise ShapeError(f"matmul: {a.shape} @ {b.shape}")
    out = a.data @ b.data

    def bw(g):
        ga = g @ b.data.T if a.requires_grad else None
        gb = None
        if b.requires_grad:
            gb = a.data.reshape(-1, a.shape[-1]).T @ g.reshape(-1, b.shape[1])
        return ga, gb

    return Tensor.from_op(out, (a, b), bw, "matmul")


def dense(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Affine map over the trailing extent: ``x @ weight.T + bias``."""
    if x.shape[-1] != weight.shape[1]:
        raise ShapeError(f"dense: input trailing extent {x.shape[-1]} != weight C_in {weight.shape[1]}")
    out = x.data @ weight.data.T
    if bias is not None:
        out = out + bias.data
    parents = (x, weight) if bias is None else (x, weight, bias)

    def bw(g):
        g2 = g.reshape(-1, g.shape[-1])
        gx = g @ weight.data if x.requires_grad else None
        gw = g2.T @ x.data.reshape(-1, x.shape[-1]) if weight.requires_grad else None
        if bias is None:
            return gx, gw
        return gx, gw, g2.sum(axis=0)

    return Tensor.from_op(out, parents, bw, "dense")


# ---------------------------------------------------------------------------
# softmax family
# ---------------------------------------------------------------------------

def row_softmax(x: Tensor, axis: int = -1) -> Tensor:
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return Tensor.from_op(out, (x,), bw, "softmax")


softmax = row_softmax


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    z = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    out = z - lse

    def bw(g):
        return (g - np.exp(out) * g.sum(axis=axis, keepdims=True),)

    return Tensor.from_op(out, (x,), bw, "log_softmax")


def layer_norm(x: Tensor, eps: float = 1e-5) -> Tensor:
    """Standardize each row over its last axis (zero mean, unit variance); no learned scale or shift."""
    d = x.data - x.data.mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt((d * d).mean(axis=-1, keepdims=True) + eps)
    out = d * inv

    def bw(g):
        return (inv * (g - g.mean(axis=-1, keepdims=True) - out * (g * out).mean(axis=-1, keepdims=True)),)

    return Tensor.from_op(out, (x,), bw, "layer_norm")


# ---------------------------------------------------------------------------
# 2-D convolution family (NCHW; a missing batch axis is added and removed)
# ---------------------------------------------------------------------------

def _batched(x: Tensor, rank: int):
    if x.ndim == rank:
        return x.data, False
    if x.ndim == rank - 1:
        return x.data[None], True
    raise ShapeError(f"expected rank {rank - 1} or {rank}, got shape {x.shape}")


def conv_output_size(n: int, k: int, stride: int, padding: int) -> int:
    return (n + 2 * padding - k) // stride + 1


def _im2col(xp: np.ndarray, k: int, stride: int, ho: int, wo: int) -> np.ndarray:
    """Channel-major patch matrix ``[k*k*C, N*Ho*Wo]``; row order is (di, dj, c)."""
    n, c = xp.shape[:2]
    cols = np.empty((k, k, c, n, ho, wo), dtype=xp.dtype)
    for i in range(k):
        for j in range(k):
            cols[i, j] = xp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride].transpose(1, 0, 2, 3)
    return cols.reshape(k * k * c, n * ho * wo)


def _col2im(dcols: np.ndarray, shape: tuple, k: int, stride: int, ho: int, wo: int) -> np.ndarray:
    n, c, hp, wp = shape
    d = dcols.reshape(k, k, c, n, ho, wo)
    out = np.zeros(shape, dtype=dcols.dtype)
    for i in range(k):
        for j in range(k):
            out[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += d[i, j].transpose(1, 0, 2, 3)
    return out


def _kernel_matrix(kernel: np.ndarray) -> np.ndarray:
    """``[C_out, C_in, k, k]`` -> ``[C_out, k*k*C_in]`` matching the (di, dj, c) patch order."""
    cout, cin, k, _ = kernel.shape
    return kernel.transpose(0, 2, 3, 1).reshape(cout, k * k * cin)


def conv2d(x: Tensor, kernel: Tensor, bias: Tensor | None = None, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation of ``x[(N,)C_in,H,W]`` with ``kernel[C_out,C_in,k,k]``."""
    xd, squeeze = _batched(x, 4)
    cout, cin, kh, kw = kernel.shape
    if kh != kw:
        raise ShapeError(f"conv2d: square kernels only, got {kh}x{kw}")
    if xd.shape[1] != cin:
        raise ShapeError(f"conv2d: input has {xd.shape[1]} channels but kernel expects {cin}")
    if stride < 1:
        raise ShapeError("conv2d: stride must be >= 1")
    k = kh
    n, _, h, w = xd.shape
    if k > h + 2 * padding or k > w + 2 * padding:
        raise ShapeError(f"conv2d: kernel {k} larger than padded input {h}x{w} (pad {padding})")
    ho, wo = conv_output_size(h, k, stride, padding), conv_output_size(w, k, stride, padding)
    xp = np.pad(xd, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else xd
    cols = _im2col(xp, k, stride, ho, wo)
    wm = _kernel_matrix(kernel.data)
    out = wm @ cols
    if bias is not None:
        out += bias.data[:, None]
    out = np.ascontiguousarray(out.reshape(cout, n, ho, wo).transpose(1, 0, 2, 3))
    parents = (x, kernel) if bias is None else (x, kernel, bias)

    def bw(g):
        gm = np.ascontiguousarray(g.reshape(n, cout, ho, wo).transpose(1, 0, 2, 3)).reshape(cout, -1)
        gk = None
        if kernel.requires_grad:
            gk = (gm @ cols.T).reshape(cout, k, k, cin).transpose(0, 3, 1, 2)
        gx = None
        if x.requires_grad:
            dxp = _col2im(wm.T @ gm, xp.shape, k, stride, ho, wo)
            if padding:
                dxp = dxp[:, :, padding:padding + h, padding:padding + w]
            gx = dxp[0] if squeeze else dxp
        if bias is None:
            return gx, gk
        return gx, gk, gm.sum(axis=1)

    return Tensor.from_op(out[0] if squeeze else out, parents, bw, "conv2d")


def conv_transpose2d(x: Tensor, kernel: Tensor, bias: Tensor | None = None, stride: int = 2,
                     padding: int = 1, output_padding: int = 0) -> Tensor:
    """Transposed convolution with ``kernel[C_in,C_out,k,k]`` (adjoint of :func:`conv2d`)."""
    xd, squeeze = _batched(x, 4)
    cin, cout, k, _ = kernel.shape
    if xd.shape[1] != cin:
        raise ShapeError(f"conv_transpose2d: input has {xd.shape[1]} channels but kernel expects {cin}")
    n, _, h, w = xd.shape
    s, p = stride, padding
    hf, wf = (h - 1) * s + k + output_padding, (w - 1) * s + k + output_padding
    ho, wo = (h - 1) * s - 2 * p + k + output_padding, (w - 1) * s - 2 * p + k + output_padding
    xm = np.ascontiguousarray(xd.transpose(1, 0, 2, 3)).reshape(cin, -1)       # [C_in, N*H*W]
    wr = kernel.data.transpose(2, 3, 1, 0).reshape(k * k * cout, cin)         # rows in (di, dj, c_out) order
    full = _col2im(wr @ xm, (n, cout, hf, wf), k, s, h, w)
    out = full[:, :, p:p + ho, p:p + wo]
    if bias is not None:
        out = out + bias.data[:, None, None]
    out = np.ascontiguousarray(out)
    parents = (x, kernel) if bias is None else (x, kernel, bias)

    def bw(g):
        g4 = g.reshape(n, cout, ho, wo)
        gfull = np.zeros((n, cout, hf, wf), dtype=g.dtype)
        gfull[:, :, p:p + ho, p:p + wo] = g4
        dcols = _im2col(gfull, k, s, h, w)                                      # [k*k*C_out, N*H*W]
        gx = gk = None
        if x.requires_grad:
            gx = (wr.T @ dcols).reshape(cin, n, h, w).transpose(1, 0, 2, 3)
            gx = np.ascontiguousarray(gx[0] if squeeze else gx)
        if kernel.requires_grad:
            gk = (dcols @ xm.T).reshape(k, k, cout, cin).transpose(3, 2, 0, 1)
        if bias is None:
            return gx, gk
        return gx, gk, g4.sum(axis=(0, 2, 3))

    return Tensor.from_op(out[0] if squeeze else out, parents, bw, "conv_transpose2d")


def maxpool2d(x: Tensor) -> Tensor:
    """2x2 / stride-2 spatial max pooling; trailing odd rows/columns are dropped, ties go to the earliest cell."""
    xd, squeeze = _batched(x, 4)
    n, c, h, w = xd.shape
    ho, wo = h // 2, w // 2
    if ho < 1 or wo < 1:
        raise ShapeError(f"maxpool2d: map {h}x{w} too small")
    cells = [(di, dj) for di in (0, 1) for dj in (0, 1)]
    views = [xd[:, :, di:2 * ho:2, dj:2 * wo:2] for di, dj in cells]
    out = views[0].copy()
    idx = np.zeros(out.shape, dtype=np.int8)
    for q in (1, 2, 3):
        better = views[q] > out
        np.copyto(out, views[q], where=better)
        idx[better] = q
    note_branch("maxpool2d", idx)

    def bw(g):
        g4 = g.reshape(n, c, ho, wo)
        gx = np.zeros_like(xd)
        for q, (di, dj) in enumerate(cells):
            gx[:, :, di:2 * ho:2, dj:2 * wo:2] = np.where(idx == q, g4, 0)
        return (gx[0] if squeeze else gx,)

    return Tensor.from_op(out[0] if squeeze else out, (x,), bw, "maxpool2d")


def global_avg_pool2d(x: Tensor) -> Tensor:
    """Spatial mean over the two trailing extents: ``[..., C, H, W] -> [..., C]``."""
    h, w = x.shape[-2:]
    out = x.data.mean(axis=(-2, -1))

    def bw(g):
        return (np.broadcast_to(g[..., None, None] / (h * w), x.shape).astype(x.dtype),)

    return Tensor.from_op(out, (x,), bw, "global_avg_pool2d")


def crop_patches(x: Tensor, starts: np.ndarray, size: tuple) -> Tensor:
    """Copy one ``size`` window per frame from ``x[N,C,H,W]``; top-left corners in ``starts[N,2]``.

    The gradient reaches ``x`` on the copied cells only; the corners are
    integers and carry no gradient.
    """
    n, c, h, w = x.shape
    ph, pw = size
    starts = np.asarray(starts, dtype=np.int64).reshape(n, 2)
    if ph > h or pw > w:
        raise ShapeError(f"crop {ph}x{pw} larger than map {h}x{w}")
    if (starts < 0).any() or (starts[:, 0] + ph > h).any() or (starts[:, 1] + pw > w).any():
        raise ShapeError("crop window crosses the map border")
    note_branch("crop", starts)
    ni = np.arange(n)[:, None, None]
    ri = starts[:, 0, None, None] + np.arange(ph)[None, :, None]
    ci = starts[:, 1, None, None] + np.arange(pw)[None, None, :]
    out = np.ascontiguousarray(x.data[ni, :, ri, ci].transpose(0, 3, 1, 2))

    def bw(g):
        gx = np.zeros_like(x.data)
        gx[ni, :, ri, ci] += g.transpose(0, 2, 3, 1)
        return (gx,)

    return Tensor.from_op(out, (x,), bw, "crop_patches")


# ---------------------------------------------------------------------------
# temporal (1-D) family over [T, C] sequences
# ---------------------------------------------------------------------------

def temporal_conv1d(x: Tensor, kernel: Tensor, bias: Tensor | None = None) -> Tensor:
    """Same-length temporal convolution of ``x[T,C_in]`` with ``kernel[C_out,C_in,k]`` (k odd)."""
    cout, cin, k = kernel.shape
    if k % 2 == 0:
        raise ShapeError(f"temporal_conv1d: kernel size must be odd, got {k}")
    if x.ndim != 2 or x.shape[1] != cin:
        raise ShapeError(f"temporal_conv1d: input {x.shape} vs kernel C_in {cin}")
    t = x.shape[0]
    pad = (k - 1) // 2
    xp = np.pad(x.data, ((pad, pad), (0, 0))) if pad else x.data
    cols = sliding_window_view(xp, k, axis=0).reshape(t, cin * k)
    wm = kernel.data.reshape(cout, -1)
    out = cols @ wm.T
    if bias is not None:
        out += bias.data
    parents = (x, kernel) if bias is None else (x, kernel, bias)

    def bw(g):
        gk = (g.T @ cols).reshape(kernel.shape) if kernel.requires_grad else None
        gx = None
        if x.requires_grad:
            dcols = (g @ wm).reshape(t, cin, k)
            dxp = np.zeros_like(xp)
            for i in range(k):
                dxp[i:i + t] += dcols[:, :, i]
            gx = dxp[pad:pad + t]
        if bias is None:
            return gx, gk
        return gx, gk, g.sum(axis=0)

    return Tensor.from_op(out, parents, bw, "temporal_conv1d")


def temporal_maxpool(x: Tensor) -> Tensor:
    """Kernel-2 / stride-2 max over time; an odd trailing frame is dropped, ties go to the earlier frame."""
    if x.ndim != 2:
        raise ShapeError(f"temporal_maxpool expects [T, C], got {x.shape}")
    t, c = x.shape
    if t < 2:
        raise ShapeError(f"temporal_maxpool needs T >= 2, got T={t}")
    t2 = t // 2
    win = x.data[:2 * t2].reshape(t2, 2, c)
    idx = win.argmax(axis=1)
    note_branch("temporal_maxpool", idx.astype(np.int8))
    out = np.take_along_axis(win, idx[:, None, :], axis=1)[:, 0, :]

    def bw(g):
        gw = np.zeros((t2, 2, c), dtype=g.dtype)
        np.put_along_axis(gw, idx[:, None, :], g[:, None, :], axis=1)
        gx = np.zeros_like(x.data)
        gx[:2 * t2] = gw.reshape(2 * t2, c)
        return (gx,)

    return Tensor.from_op(out, (x,), bw, "temporal_maxpool")


# ---------------------------------------------------------------------------
# keypoint heads
# ---------------------------------------------------------------------------

def spatial_softmax(h: Tensor) -> Tensor:
    """Softmax over the two trailing (spatial) extents of ``h[..., H, W]``."""
    lead, (hh, ww) = h.shape[:-2], h.shape[-2:]
    flat = reshape(h, lead + (hh * ww,))
    return reshape(row_softmax(flat, axis=-1), h.shape)


def _centered_expectation(marginal: np.ndarray) -> np.ndarray:
    """``sum_i m_i * i/(n-1)`` written as ``0.5 + sum_{i<n/2} c_i (m_i - m_{n-1-i})``.

    Mirror cells are differenced before weighting, so symmetric marginals
    (e.g. a uniform map) land on exactly 0.5.
    """
    n = marginal.shape[-1]
    half = n // 2
    c = ((2 * np.arange(half) - (n - 1)) / (2 * (n - 1))).astype(marginal.dtype)
    diff = marginal[..., :half] - marginal[..., ::-1][..., :half]
    return 0.5 + (diff * c).sum(axis=-1)


def soft_argmax(p: Tensor) -> Tensor:
    """Expected normalized coordinates of probability maps ``p[..., H, W]`` -> ``[..., 2]``.

    Component 0 is the expectation of ``i/(H-1)`` over the first spatial axis,
    component 1 of ``j/(W-1)`` over the second.
    """
    hh, ww = p.shape[-2:]
    if hh < 2 or ww < 2:
        raise ShapeError(f"soft_argmax needs maps of at least 2x2, got {hh}x{ww}")
    gi = (np.arange(hh) / (hh - 1)).astype(p.dtype)
    gj = (np.arange(ww) / (ww - 1)).astype(p.dtype)
    xi = _centered_expectation(p.data.sum(axis=-1))
    yj = _centered_expectation(p.data.sum(axis=-2))
    out = np.stack([xi, yj], axis=-1)

    def bw(g):
        return (g[..., 0, None, None] * gi[:, None] + g[..., 1, None, None] * gj[None, :],)

    return Tensor.from_op(out, (p,), bw, "soft_argmax")
