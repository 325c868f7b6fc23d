"""Differentiable primitives.

Images are channel-last: ``(..., H, W, C)``. Everything before the last three
axes of a convolution input is a batch axis.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from ..errors import ShapeError
from .tensor import Tensor, as_tensor, emit

CONV_MODES = ("same", "down", "up")


def add(a: Tensor, b) -> Tensor:
    b = as_tensor(b, dtype=a.dtype)
    if a.dims != b.dims:
        raise ShapeError(f"add: dims {a.dims} and {b.dims} differ")
    return emit("add", a.data + b.data, (a, b), lambda g: (g, g))


def sub(a: Tensor, b) -> Tensor:
    b = as_tensor(b, dtype=a.dtype)
    if a.dims != b.dims:
        raise ShapeError(f"sub: dims {a.dims} and {b.dims} differ")
    return emit("sub", a.data - b.data, (a, b), lambda g: (g, -g))


def scale(x: Tensor, c: float) -> Tensor:
    c = x.dtype.type(c)
    return emit("scale", x.data * c, (x,), lambda g: (g * c,))


def total(x: Tensor) -> Tensor:
    """Sum of all elements as a scalar."""
    shape = x.dims
    return emit("sum", np.sum(x.data), (x,), lambda g: (np.broadcast_to(g, shape).astype(x.dtype),))


def vdot(x: Tensor, w: np.ndarray) -> Tensor:
    """Scalar ``sum(x * w)`` against a constant weight array."""
    w = np.asarray(w, dtype=x.dtype)
    if w.shape != x.dims:
        raise ShapeError(f"vdot: weight dims {w.shape} != {x.dims}")
    return emit("vdot", np.sum(x.data * w), (x,), lambda g: (g * w,))


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = tuple(tensors)
    sizes = [t.data.shape[axis] for t in tensors]
    cuts = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, cuts, axis=axis))

    return emit("concat", np.concatenate([t.data for t in tensors], axis=axis), tensors, backward)


def silu(x: Tensor) -> Tensor:
    sig = 0.5 * (1.0 + np.tanh(0.5 * x.data))
    out = x.data * sig

    def backward(g):
        return (g * (sig * (1.0 + x.data * (1.0 - sig))),)

    return emit("silu", out, (x,), backward)


def l1_loss(pred: Tensor, target) -> Tensor:
    """Mean absolute difference over all elements."""
    target = as_tensor(target, dtype=pred.dtype)
    if pred.dims != target.dims:
        raise ShapeError(f"l1_loss: dims {pred.dims} and {target.dims} differ")
    diff = pred.data - target.data
    n = diff.size

    def backward(g):
        s = np.sign(diff) * (g / n)
        return s, -s

    return emit("l1", np.mean(np.abs(diff)), (pred, target), backward)


def linear(x: Tensor, forward: Callable, adjoint: Callable, op: str = "linear") -> Tensor:
    """Apply a linear map whose gradient is given by its adjoint."""
    out = np.asarray(forward(x.data), dtype=x.dtype)
    return emit(op, out, (x,), lambda g: (np.asarray(adjoint(g), dtype=x.dtype),))


# -- convolution -------------------------------------------------------------


def _out_extent(n: int, stride: int) -> int:
    return (n - 1) // stride + 1


def _im2col(x: np.ndarray, stride: int) -> np.ndarray:
    """Rows of 3x3 patches, zero padding 1; x is (N, H, W, C)."""
    n, h, w, c = x.shape
    ho, wo = _out_extent(h, stride), _out_extent(w, stride)
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    cols = np.empty((n, ho, wo, 3, 3, c), dtype=x.dtype)
    for i in range(3):
        for j in range(3):
            cols[:, :, :, i, j, :] = xp[:, i:i + stride * (ho - 1) + 1:stride,
                                        j:j + stride * (wo - 1) + 1:stride, :]
    return cols.reshape(n * ho * wo, 9 * c)


def _col2im(gcols: np.ndarray, in_shape: tuple, stride: int) -> np.ndarray:
    """Transpose of ``_im2col``: scatter-add patch rows back onto the grid."""
    n, h, w, c = in_shape
    ho, wo = _out_extent(h, stride), _out_extent(w, stride)
    gcols = gcols.reshape(n, ho, wo, 3, 3, c)
    gp = np.zeros((n, h + 2, w + 2, c), dtype=gcols.dtype)
    for i in range(3):
        for j in range(3):
            gp[:, i:i + stride * (ho - 1) + 1:stride,
               j:j + stride * (wo - 1) + 1:stride, :] += gcols[:, :, :, i, j, :]
    return gp[:, 1:-1, 1:-1, :]


def _down(x: np.ndarray, kmat: np.ndarray, stride: int) -> np.ndarray:
    n, h, w, _ = x.shape
    out = _im2col(x, stride) @ kmat
    return out.reshape(n, _out_extent(h, stride), _out_extent(w, stride), kmat.shape[1])


def _down_T(g: np.ndarray, kmat: np.ndarray, in_shape: tuple, stride: int) -> np.ndarray:
    gcols = g.reshape(-1, g.shape[-1]) @ kmat.T
    return _col2im(gcols, in_shape, stride)


def conv2d(x: Tensor, kernel: Tensor, bias: Tensor | None = None,
           stride: int = 1, mode: str = "same") -> Tensor:
    """3x3 convolution with zero padding 1.

    ``kernel`` is ``3 x 3 x Cin x Cout`` in every mode. ``same`` keeps the
    extent, ``down`` strides by ``stride`` (output ceil(H/stride)) and ``up``
    is the exact transpose of ``down``: ``up(y; K)`` equals the adjoint of
    ``down(.; K')`` with ``K'`` the channel-swapped kernel, giving an
    ``H*stride x W*stride`` output.
    """
    if mode not in CONV_MODES:
        raise ValueError(f"unknown conv mode {mode!r}")
    if not isinstance(stride, (int, np.integer)) or stride <= 0:
        raise ValueError(f"stride must be a positive int, got {stride!r}")
    if mode == "same" and stride != 1:
        raise ValueError("mode='same' requires stride=1")
    if kernel.dims[:2] != (3, 3) or kernel.ndim != 4:
        raise ShapeError(f"kernel must be 3x3xCinxCout, got {kernel.dims}")
    if x.ndim < 3:
        raise ShapeError(f"conv2d input must be (..., H, W, C), got {x.dims}")
    cin, cout = kernel.dims[2], kernel.dims[3]
    if x.dims[-1] != cin:
        raise ShapeError(f"input has {x.dims[-1]} channels, kernel expects {cin}")
    if bias is not None and bias.dims != (cout,):
        raise ShapeError(f"bias must have dims ({cout},), got {bias.dims}")

    lead = x.dims[:-3]
    xd = x.data.reshape((-1,) + x.dims[-3:])
    n, h, w, _ = xd.shape
    kd = kernel.data

    if mode == "up":
        kmat = kd.transpose(0, 1, 3, 2).reshape(9 * cout, cin)
        big = (n, h * stride, w * stride, cout)
        out = _down_T(xd, kmat, big, stride)
    else:
        kmat = kd.reshape(9 * cin, cout)
        out = _down(xd, kmat, stride)
    if bias is not None:
        out += bias.data
    out_shape = lead + out.shape[1:]

    inputs = (x, kernel) if bias is None else (x, kernel, bias)

    def backward(g):
        g4 = g.reshape((n,) + g.shape[-3:])
        gx = gk = gb = None
        if mode == "up":
            if x.requires_grad:
                gx = _down(g4, kmat, stride).reshape(x.dims)
            if kernel.requires_grad:
                gkm = _im2col(g4, stride).T @ xd.reshape(-1, cin)
                gk = gkm.reshape(3, 3, cout, cin).transpose(0, 1, 3, 2)
        else:
            if x.requires_grad:
                gx = _down_T(g4, kmat, xd.shape, stride).reshape(x.dims)
            if kernel.requires_grad:
                gkm = _im2col(xd, stride).T @ g4.reshape(-1, cout)
                gk = gkm.reshape(3, 3, cin, cout)
        if bias is not None and bias.requires_grad:
            gb = g4.reshape(-1, cout).sum(axis=0)
        return (gx, gk) if bias is None else (gx, gk, gb)

    return emit(f"conv2d_{mode}", out.reshape(out_shape), inputs, backward)
