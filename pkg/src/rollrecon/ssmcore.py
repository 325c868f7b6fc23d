"""Compressed state-space block: space-to-depth, sweep scan and a dense linear recurrence.

The recurrence ``h[n] = A h[n-1] + B z[n]``, ``zbar[n] = C h[n]`` (``h[-1] = 0``)
runs independently over every channel with shared ``A, B, C``. Two
evaluators are provided: a plain loop and a work-efficient parallel prefix
over affine maps ``(M, b)`` composed as ``(M2, b2) o (M1, b1) = (M2 M1, M2 b1 + b2)``.
Gradients go back through a second recurrence in reversed time with ``A^T``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .tensorgrad import Tensor, add, emit, linear

SCAN_ORDERS = ("raster", "serpentine")
SCAN_METHODS = ("seq", "par")


@dataclass
class SSMParams:
    A: Tensor  # D x D
    B: Tensor  # D x 1
    C: Tensor  # 1 x D

    @property
    def state_dim(self) -> int:
        return self.A.dims[0]


def init_ssm_params(state_dim: int, rng: np.random.Generator, dtype=np.float32) -> SSMParams:
    """Diagonal stable ``A`` (entries in [0.5, 0.99]); ``B``, ``C`` ~ N(0, 1/sqrt(D))."""
    if state_dim < 1:
        raise ValueError(f"state dimension must be >= 1, got {state_dim}")
    d = state_dim
    a = np.diag(rng.uniform(0.5, 0.99, d))
    b = rng.normal(0.0, 1.0 / np.sqrt(d), (d, 1))
    c = rng.normal(0.0, 1.0 / np.sqrt(d), (1, d))
    return SSMParams(*(Tensor(m.astype(dtype), requires_grad=True) for m in (a, b, c)))


@dataclass(frozen=True)
class ScanLayout:
    """Grid of ``height x width`` cells with ``channels`` features, read in ``order``."""

    height: int
    width: int
    channels: int
    order: str = "raster"

    def __post_init__(self):
        if self.order not in SCAN_ORDERS:
            raise ValueError(f"unknown scan order {self.order!r}")

    @property
    def length(self) -> int:
        return self.height * self.width

    @classmethod
    def for_grid(cls, grid_dims: tuple, order: str = "raster") -> "ScanLayout":
        h, w, c = grid_dims[-3:]
        return cls(h, w, c, order)


# -- permutations --------------------------------------------------------------


def _permute(x, fwd, inv, op: str):
    if isinstance(x, Tensor):
        return linear(x, fwd, inv, op=op)
    return fwd(np.asarray(x))


def _s2d(a: np.ndarray, j: int) -> np.ndarray:
    *lead, h, w, c = a.shape
    a = a.reshape(*lead, h // j, j, w // j, j, c)
    n = len(lead)
    # (w1, v1, w2, v2, c) -> (w1, w2, c, v1, v2): channel index c*J^2 + v1*J + v2
    a = a.transpose(*range(n), n, n + 2, n + 4, n + 1, n + 3)
    return np.ascontiguousarray(a).reshape(*lead, h // j, w // j, c * j * j)


def _d2s(a: np.ndarray, j: int) -> np.ndarray:
    *lead, h, w, cc = a.shape
    c = cc // (j * j)
    n = len(lead)
    a = a.reshape(*lead, h, w, c, j, j)
    a = a.transpose(*range(n), n, n + 3, n + 1, n + 4, n + 2)
    return np.ascontiguousarray(a).reshape(*lead, h * j, w * j, c)


def space_to_depth(d, j: int):
    """Tile ``j x j`` pixel patches into channels: ``H x W x C -> H/j x W/j x C j^2``."""
    h, w = d.shape[-3], d.shape[-2]
    if j < 1 or h % j or w % j:
        raise ValueError(f"compression factor {j} must divide the grid {h}x{w}")
    return _permute(d, lambda a: _s2d(a, j), lambda a: _d2s(a, j), "space_to_depth")


def depth_to_space(g, j: int):
    """Inverse of :func:`space_to_depth`."""
    if j < 1 or g.shape[-1] % (j * j):
        raise ValueError(f"channel count {g.shape[-1]} is not divisible by {j}^2")
    return _permute(g, lambda a: _d2s(a, j), lambda a: _s2d(a, j), "depth_to_space")


def _serpentine_rows(a: np.ndarray, row_axis: int, col_axis: int) -> np.ndarray:
    a = a.copy()
    idx = [slice(None)] * a.ndim
    idx[row_axis] = slice(1, None, 2)
    a[tuple(idx)] = np.flip(a[tuple(idx)], axis=col_axis)
    return a


def _flatten(a: np.ndarray, order: str) -> np.ndarray:
    *lead, h, w, c = a.shape
    if order == "serpentine":
        a = _serpentine_rows(a, a.ndim - 3, a.ndim - 2)
    return a.reshape(*lead, h * w, c)


def _unflatten(s: np.ndarray, h: int, w: int, order: str) -> np.ndarray:
    *lead, _, c = s.shape
    a = s.reshape(*lead, h, w, c)
    if order == "serpentine":
        a = _serpentine_rows(a, a.ndim - 3, a.ndim - 2)
    return a


def sweep_flatten(grid, layout: ScanLayout | None = None):
    """Read a ``(..., h, w, c)`` grid into a ``(..., h*w, c)`` sequence."""
    if layout is None:
        layout = ScanLayout.for_grid(grid.shape)
    if tuple(grid.shape[-3:]) != (layout.height, layout.width, layout.channels):
        raise ShapeError(f"grid {grid.shape} does not match layout {layout}")
    h, w, order = layout.height, layout.width, layout.order
    return _permute(grid, lambda a: _flatten(a, order), lambda a: _unflatten(a, h, w, order),
                    "sweep_flatten")


def sweep_unflatten(seq, layout: ScanLayout):
    if tuple(seq.shape[-2:]) != (layout.length, layout.channels):
        raise ShapeError(f"sequence {seq.shape} does not match layout {layout}")
    h, w, order = layout.height, layout.width, layout.order
    return _permute(seq, lambda a: _unflatten(a, h, w, order), lambda a: _flatten(a, order),
                    "sweep_unflatten")


# -- linear recurrence -----------------------------------------------------------


def recurrence_seq(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``h[n] = a h[n-1] + b[n]`` with ``h[-1] = 0``; ``b`` is ``(n, D, K)``."""
    h = np.empty_like(b)
    h[0] = b[0]
    for i in range(1, b.shape[0]):
        np.matmul(a, h[i - 1], out=h[i])
        h[i] += b[i]
    return h


def _prefix(ms: np.ndarray, b: np.ndarray) -> np.ndarray:
    n = b.shape[0]
    if n == 1:
        return b.copy()
    half = n // 2
    m0, m1 = ms[0:2 * half:2], ms[1:2 * half:2]
    pm = m1 @ m0
    pb = m1 @ b[0:2 * half:2] + b[1:2 * half:2]
    if n % 2:
        pm = np.concatenate([pm, ms[-1:]])
        pb = np.concatenate([pb, b[-1:]])
    ph = _prefix(pm, pb)
    h = np.empty_like(b)
    h[1:2 * half:2] = ph[:half]
    h[0] = b[0]
    if half > 1:
        h[2:2 * half:2] = ms[2:2 * half:2] @ h[1:2 * half - 1:2] + b[2:2 * half:2]
    if n % 2:
        h[-1] = ph[-1]
    return h


def recurrence_par(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Same result as :func:`recurrence_seq` via a pairwise prefix tree.

    Adjacent elements are composed pairwise, the half-length problem is
    solved recursively, and even positions are filled in from their odd
    predecessors. The tree depends only on the sequence length.
    """
    ms = np.broadcast_to(a, (b.shape[0],) + a.shape)
    return _prefix(ms, b)


_RECURRENCES = {"seq": recurrence_seq, "par": recurrence_par}


def _channels_first(x: np.ndarray) -> np.ndarray:
    """``(N, n, C)`` -> ``(n, N*C)``."""
    n_batch, n, c = x.shape
    return np.ascontiguousarray(x.transpose(1, 0, 2)).reshape(n, n_batch * c)


def ssm_scan(z: Tensor, p: SSMParams, method: str = "par") -> Tensor:
    """Apply the shared-parameter recurrence to every channel of ``(..., n, C)``."""
    if method not in _RECURRENCES:
        raise ValueError(f"unknown scan method {method!r}")
    run = _RECURRENCES[method]
    dims = z.dims
    n, c = dims[-2:]
    a, bvec, cvec = p.A.data, p.B.data[:, 0], p.C.data[0]
    zz = _channels_first(z.data.reshape(-1, n, c))
    h = run(a, bvec[None, :, None] * zz[:, None, :])
    out = np.einsum("d,ldk->lk", cvec, h)

    def restore(lk: np.ndarray) -> np.ndarray:
        return lk.reshape(n, -1, c).transpose(1, 0, 2).reshape(dims)

    def to_lk(g: np.ndarray) -> np.ndarray:
        return _channels_first(g.reshape(-1, n, c))

    def backward(g):
        gg = to_lk(g)
        gh = run(a.T, (cvec[None, :, None] * gg[:, None, :])[::-1])[::-1]
        d = a.shape[0]
        gz = restore(np.einsum("d,ldk->lk", bvec, gh)) if z.requires_grad else None
        ga = gb = gc = None
        if p.A.requires_grad:
            if n > 1:
                left = gh[1:].transpose(1, 0, 2).reshape(d, -1)
                right = h[:-1].transpose(1, 0, 2).reshape(d, -1)
                ga = left @ right.T
            else:
                ga = np.zeros_like(a)
        if p.B.requires_grad:
            gb = np.einsum("ldk,lk->d", gh, zz)[:, None]
        if p.C.requires_grad:
            gc = np.einsum("lk,ldk->d", gg, h)[None, :]
        return gz, ga, gb, gc

    return emit(f"ssm_scan_{method}", restore(out), (z, p.A, p.B, p.C), backward)


def ssm_scan_seq(z: Tensor, p: SSMParams) -> Tensor:
    return ssm_scan(z, p, "seq")


def ssm_scan_par(z: Tensor, p: SSMParams) -> Tensor:
    return ssm_scan(z, p, "par")


def compressed_ssm_block(d: Tensor, p: SSMParams, j: int, order: str = "raster",
                         method: str = "par") -> Tensor:
    """``d + depth_to_space(unflatten(scan(flatten(space_to_depth(d)))))``."""
    grid = space_to_depth(d, j)
    layout = ScanLayout.for_grid(grid.dims, order)
    seq = ssm_scan(sweep_flatten(grid, layout), p, method)
    return add(d, depth_to_space(sweep_unflatten(seq, layout), j))
