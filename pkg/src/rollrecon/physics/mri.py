"""Cartesian multi-coil MRI: masked, coil-weighted orthonormal Fourier sampling."""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError
from ..tensorgrad import Tensor
from .base import ImagingOperator, normalized

_AXES = (-2, -1)


def _is_pow2(n: int) -> bool:
    return n > 0 and n & (n - 1) == 0


def to_complex(x: np.ndarray) -> np.ndarray:
    return x[..., 0] + 1j * x[..., 1]


def to_planes(z: np.ndarray, dtype) -> np.ndarray:
    out = np.empty(z.shape + (2,), dtype=dtype)
    out[..., 0] = z.real
    out[..., 1] = z.imag
    return out


def fft2c(z: np.ndarray) -> np.ndarray:
    """Centered orthonormal 2-D FFT over the last two axes."""
    return np.fft.fftshift(np.fft.fft2(np.fft.ifftshift(z, axes=_AXES), norm="ortho"), axes=_AXES)


def ifft2c(k: np.ndarray) -> np.ndarray:
    return np.fft.fftshift(np.fft.ifft2(np.fft.ifftshift(k, axes=_AXES), norm="ortho"), axes=_AXES)


class MRIOperator(ImagingOperator):
    """``A = P F C / scale`` on ``(..., H, W, 2)`` images.

    Measurements are ``(..., n_coils, H, W, 2)`` with unsampled entries zero.
    """

    modality = "mri"
    channels = 2

    def __init__(self, mask: np.ndarray, coils: np.ndarray, scale: float = 1.0):
        super().__init__(scale)
        mask = np.asarray(mask, dtype=bool)
        coils = np.asarray(coils, dtype=np.complex128)
        if coils.ndim == 2:
            coils = coils[None]
        h, w = mask.shape
        if not (_is_pow2(h) and _is_pow2(w)):
            raise ValueError(f"MRI grid must have power-of-two extents, got {h}x{w}")
        if coils.shape[1:] != mask.shape:
            raise ShapeError(f"coil maps {coils.shape} do not match mask {mask.shape}")
        self.mask = mask
        self.coils = coils
        self._coils64 = coils.astype(np.complex64)

    @property
    def n_coils(self) -> int:
        return self.coils.shape[0]

    def image_shape(self) -> tuple:
        return self.mask.shape + (2,)

    def measurement_shape(self) -> tuple:
        return (self.n_coils,) + self.mask.shape + (2,)

    def _maps(self, dtype):
        return self._coils64 if dtype == np.float32 else self.coils

    def _forward(self, x: np.ndarray) -> np.ndarray:
        c = self._maps(x.dtype)
        k = fft2c(to_complex(x)[..., None, :, :] * c)
        return to_planes(k * self.mask, x.dtype)

    def _adjoint(self, y: np.ndarray) -> np.ndarray:
        c = self._maps(y.dtype)
        z = ifft2c(to_complex(y) * self.mask)
        return to_planes(np.sum(z * np.conj(c), axis=-3), y.dtype)

    def describe(self) -> dict:
        return {"modality": "mri", "n_coils": self.n_coils, "size": list(self.mask.shape),
                "scale": self.scale}


def mri_operator(mask: np.ndarray, coils: np.ndarray) -> MRIOperator:
    """Build an MRI operator normalized to unit spectral norm."""
    return normalized(MRIOperator(mask, coils))


def mri_forward(x, op: MRIOperator):
    """Masked multi-coil k-space of ``x``; differentiable when given a Tensor."""
    if op.modality != "mri":
        raise ValueError(f"expected an MRI operator, got {op.modality!r}")
    return op.forward(x) if isinstance(x, Tensor) else op.apply(x)


def mri_adjoint(y, op: MRIOperator):
    if op.modality != "mri":
        raise ValueError(f"expected an MRI operator, got {op.modality!r}")
    return op.adjoint(y) if isinstance(y, Tensor) else op.apply_adjoint(y)
