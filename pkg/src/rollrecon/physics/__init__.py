"""Imaging operators, sampling patterns, synthetic data and linear baselines."""

import numpy as np

from ..tensorgrad import Tensor
from .base import ImagingOperator, dc_step, normalized, power_iter_norm
from .ct import CTOperator, ct_operator, fbp, radon_adjoint, radon_forward
from .mri import MRIOperator, fft2c, ifft2c, mri_adjoint, mri_forward, mri_operator
from .phantom import gen_coils, gen_phantom
from .sampling import make_vd_mask, subsample_views


def linear_recon(y, op: ImagingOperator) -> np.ndarray:
    """Zero-filled adjoint reconstruction for MRI, filtered backprojection for CT."""
    if isinstance(y, Tensor):
        y = y.data
    y = np.asarray(y)
    if op.modality == "mri":
        return op.apply_adjoint(y)
    return fbp(y, op)


__all__ = [
    "CTOperator", "ImagingOperator", "MRIOperator", "ct_operator", "dc_step", "fbp", "fft2c",
    "gen_coils", "gen_phantom", "ifft2c", "linear_recon", "make_vd_mask", "mri_adjoint",
    "mri_forward", "mri_operator", "normalized", "power_iter_norm", "radon_adjoint",
    "radon_forward", "subsample_views",
]
