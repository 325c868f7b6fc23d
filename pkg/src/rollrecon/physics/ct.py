"""Parallel-beam CT: ray-sampled Radon transform, its transpose, and FBP."""

from __future__ import annotations

import math

import numpy as np
import scipy.sparse as sp

from ..tensorgrad import Tensor
from .base import ImagingOperator, normalized


def _centered(n: int) -> np.ndarray:
    return np.arange(n) - (n - 1) / 2.0


def radon_matrix(size: int, angles: np.ndarray, n_det: int) -> sp.csr_matrix:
    """Sparse ``(n_views * n_det) x size**2`` line-integral matrix.

    Each ray is sampled at unit steps over the detector-length chord; a sample
    contributes its bilinear interpolation weights to the four neighbouring
    pixels. Samples outside the grid contribute nothing.
    """
    s = _centered(n_det)
    t = _centered(n_det)
    det_idx = np.broadcast_to(np.arange(n_det)[:, None], (n_det, n_det))
    rows, cols, vals = [], [], []
    for v, theta in enumerate(angles):
        c, si = math.cos(theta), math.sin(theta)
        col = s[:, None] * c - t[None, :] * si + (size - 1) / 2.0
        row = s[:, None] * si + t[None, :] * c + (size - 1) / 2.0
        c0, r0 = np.floor(col), np.floor(row)
        fc, fr = col - c0, row - r0
        c0, r0 = c0.astype(np.int64), r0.astype(np.int64)
        for dr, dc, w in ((0, 0, (1 - fr) * (1 - fc)), (0, 1, (1 - fr) * fc),
                          (1, 0, fr * (1 - fc)), (1, 1, fr * fc)):
            rr, cc = r0 + dr, c0 + dc
            ok = (rr >= 0) & (rr < size) & (cc >= 0) & (cc < size) & (w != 0)
            rows.append(v * n_det + det_idx[ok])
            cols.append(rr[ok] * size + cc[ok])
            vals.append(w[ok])
    shape = (len(angles) * n_det, size * size)
    mat = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                        shape=shape)
    return mat.tocsr()


def backprojection_matrix(size: int, angles: np.ndarray, n_det: int) -> sp.csr_matrix:
    """Sparse ``size**2 x (n_views * n_det)`` pixel-driven linear-interpolation backprojector."""
    y, x = np.meshgrid(_centered(size), _centered(size), indexing="ij")
    x, y = x.ravel(), y.ravel()
    pix = np.arange(size * size)
    rows, cols, vals = [], [], []
    for v, theta in enumerate(angles):
        pos = x * math.cos(theta) + y * math.sin(theta) + (n_det - 1) / 2.0
        j0 = np.floor(pos)
        f = pos - j0
        j0 = j0.astype(np.int64)
        for dj, w in ((0, 1 - f), (1, f)):
            jj = j0 + dj
            ok = (jj >= 0) & (jj < n_det) & (w != 0)
            rows.append(pix[ok])
            cols.append(v * n_det + jj[ok])
            vals.append(w[ok])
    shape = (size * size, len(angles) * n_det)
    mat = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                        shape=shape)
    return mat.tocsr()


def ramlak_response(n_det: int) -> np.ndarray:
    """Real frequency response of the band-limited ramp filter on the padded grid."""
    npad = 1 << max(1, math.ceil(math.log2(2 * n_det)))
    n = np.concatenate([np.arange(0, npad // 2 + 1), np.arange(-npad // 2 + 1, 0)])
    h = np.zeros(npad)
    h[0] = 0.25
    odd = n % 2 == 1
    h[odd] = -1.0 / (np.pi * n[odd]) ** 2
    return np.fft.rfft(h).real


def full_angles(n_views_full: int) -> np.ndarray:
    return np.arange(n_views_full) * (np.pi / n_views_full)


class CTOperator(ImagingOperator):
    """Radon transform of ``(..., n, n, 1)`` images onto ``(..., n_views, n_det)`` sinograms."""

    modality = "ct"
    channels = 1

    def __init__(self, size: int, views: np.ndarray, n_views_full: int,
                 n_det: int | None = None, scale: float = 1.0):
        super().__init__(scale)
        self.size = int(size)
        self.views = np.asarray(views, dtype=np.int64)
        self.n_views_full = int(n_views_full)
        self.n_det = int(n_det) if n_det is not None else int(math.ceil(math.sqrt(2.0) * size))
        self.angles = full_angles(self.n_views_full)[self.views]
        self.matrix = radon_matrix(self.size, self.angles, self.n_det)
        self._matrix32 = self.matrix.astype(np.float32)
        self._bp = None

    @property
    def n_views(self) -> int:
        return len(self.views)

    def image_shape(self) -> tuple:
        return (self.size, self.size, 1)

    def measurement_shape(self) -> tuple:
        return (self.n_views, self.n_det)

    def _mat(self, dtype):
        return self._matrix32 if dtype == np.float32 else self.matrix

    def _forward(self, x: np.ndarray) -> np.ndarray:
        lead = x.shape[:-3]
        flat = x.reshape(-1, self.size * self.size)
        out = (self._mat(x.dtype) @ flat.T).T
        return np.ascontiguousarray(out).reshape(lead + self.measurement_shape())

    def _adjoint(self, y: np.ndarray) -> np.ndarray:
        lead = y.shape[:-2]
        flat = y.reshape(-1, self.n_views * self.n_det)
        out = (self._mat(y.dtype).T @ flat.T).T
        return np.ascontiguousarray(out).reshape(lead + self.image_shape())

    def backprojector(self) -> sp.csr_matrix:
        if self._bp is None:
            self._bp = backprojection_matrix(self.size, self.angles, self.n_det)
        return self._bp

    def describe(self) -> dict:
        return {"modality": "ct", "size": self.size, "views": self.views.tolist(),
                "n_views_full": self.n_views_full, "n_det": self.n_det, "scale": self.scale}


def ct_operator(size: int, views, n_views_full: int, n_det: int | None = None) -> CTOperator:
    """Build a CT operator normalized to unit spectral norm."""
    return normalized(CTOperator(size, views, n_views_full, n_det))


def _check_ct(op):
    if op.modality != "ct":
        raise ValueError(f"expected a CT operator, got {op.modality!r}")


def _as_image(x):
    return x[..., None] if x.ndim == 2 else x


def radon_forward(x, op: CTOperator):
    _check_ct(op)
    if isinstance(x, Tensor):
        return op.forward(x)
    x = _as_image(np.asarray(x))
    if x.shape[-3] != x.shape[-2]:
        raise ValueError(f"Radon transform needs a square image, got {x.shape}")
    return op.apply(x)


def radon_adjoint(sinogram, op: CTOperator):
    _check_ct(op)
    if isinstance(sinogram, Tensor):
        return op.adjoint(sinogram)
    return op.apply_adjoint(np.asarray(sinogram))


def fbp(sinogram: np.ndarray, op: CTOperator) -> np.ndarray:
    """Filtered backprojection of a normalized sinogram back to image units.

    Rows are ramp filtered (Ram-Lak, zero padded to the next power of two of
    twice the detector count) and backprojected with weight pi / n_views.
    """
    _check_ct(op)
    if op.n_views < 2:
        raise ValueError("filtered backprojection needs at least two views")
    sino = np.asarray(sinogram)
    op._check(sino, op.measurement_shape(), "sinogram")
    p = sino.astype(np.float64) * op.scale
    resp = ramlak_response(op.n_det)
    npad = 2 * (len(resp) - 1)
    q = np.fft.irfft(np.fft.rfft(p, n=npad, axis=-1) * resp, n=npad, axis=-1)[..., :op.n_det]
    lead = sino.shape[:-2]
    flat = q.reshape(-1, op.n_views * op.n_det)
    img = (op.backprojector() @ flat.T).T * (np.pi / op.n_views)
    return img.reshape(lead + op.image_shape()).astype(sino.dtype)
