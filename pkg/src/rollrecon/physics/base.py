"""Operator interface shared by the MRI and CT models."""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError
from ..tensorgrad import Tensor, add, as_tensor, linear, sub

POWER_ITERATIONS = 30


class ImagingOperator:
    """Linear measurement model scaled by ``1 / scale``.

    Subclasses implement the unnormalized ``_forward`` / ``_adjoint`` on
    numpy arrays; ``scale`` is the spectral-norm estimate used so that the
    normalized operator has unit norm.
    """

    modality: str = ""
    channels: int = 0

    def __init__(self, scale: float = 1.0):
        self.scale = float(scale)

    # numpy level -----------------------------------------------------------
    def image_shape(self) -> tuple:
        raise NotImplementedError

    def measurement_shape(self) -> tuple:
        raise NotImplementedError

    def _forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _adjoint(self, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def apply(self, x: np.ndarray) -> np.ndarray:
        self._check(x, self.image_shape(), "image")
        return self._forward(x) / x.dtype.type(self.scale)

    def apply_adjoint(self, y: np.ndarray) -> np.ndarray:
        self._check(y, self.measurement_shape(), "measurement")
        return self._adjoint(y) / y.dtype.type(self.scale)

    @staticmethod
    def _check(a: np.ndarray, tail: tuple, what: str) -> None:
        if a.shape[a.ndim - len(tail):] != tail:
            raise ShapeError(f"{what} dims {a.shape} do not end with {tail}")

    # differentiable level ---------------------------------------------------
    def forward(self, x: Tensor) -> Tensor:
        return linear(x, self.apply, self.apply_adjoint, op=f"{self.modality}_forward")

    def adjoint(self, y: Tensor) -> Tensor:
        return linear(y, self.apply_adjoint, self.apply, op=f"{self.modality}_adjoint")

    def describe(self) -> dict:
        raise NotImplementedError


def power_iter_norm(op: ImagingOperator, iterations: int = POWER_ITERATIONS, seed: int = 0) -> float:
    """Spectral norm estimate of ``op`` from power iteration on ``A^H A``."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(op.image_shape())
    x /= np.linalg.norm(x)
    rayleigh = 0.0
    for _ in range(iterations):
        z = op.apply_adjoint(op.apply(x))
        rayleigh = float(np.vdot(x, z))
        nz = np.linalg.norm(z)
        if nz == 0.0:
            raise ValueError("operator maps the probe vector to zero; norm is degenerate")
        x = z / nz
    if not rayleigh > 0.0:
        raise ValueError("operator norm estimate is not positive")
    return float(np.sqrt(rayleigh))


def normalized(op: ImagingOperator) -> ImagingOperator:
    """Rescale ``op`` in place to unit estimated spectral norm and return it."""
    op.scale = 1.0
    op.scale = power_iter_norm(op)
    return op


def dc_step(u: Tensor, y, op: ImagingOperator) -> Tensor:
    """Residual data-consistency correction ``u + A^H (y - A u)``."""
    if u.dims[-1] != op.channels:
        raise ValueError(f"{op.modality} operator expects {op.channels}-channel images, got {u.dims}")
    y = as_tensor(y, dtype=u.dtype)
    residual = sub(y, op.forward(u))
    return add(u, op.adjoint(residual))
