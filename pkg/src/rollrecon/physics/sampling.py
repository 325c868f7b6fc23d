"""Undersampling patterns: variable-density Cartesian masks and sparse CT views."""

from __future__ import annotations

import math

import numpy as np

DEFAULT_CALIB = 16


def make_vd_mask(height: int, width: int, rate: float, calib: int = DEFAULT_CALIB,
                 seed: int = 0) -> np.ndarray:
    """Boolean k-space mask (centered, DC at ``[H//2, W//2]``).

    A ``calib x calib`` block around DC is always sampled. The remaining
    ``round(H*W/rate) - calib**2`` locations are drawn without replacement
    with probability proportional to ``exp(-|k|^2 / (2 sigma^2))``,
    ``sigma = 0.25 * min(H, W)``.
    """
    if rate < 1:
        raise ValueError(f"rate must be >= 1, got {rate}")
    if calib < 0 or calib > min(height, width):
        raise ValueError(f"calibration block {calib} does not fit a {height}x{width} grid")
    budget = int(math.floor(height * width / rate + 0.5))
    if calib * calib > budget:
        raise ValueError(f"calibration block needs {calib * calib} samples, budget is {budget}")

    mask = np.zeros((height, width), dtype=bool)
    r0, c0 = height // 2 - calib // 2, width // 2 - calib // 2
    mask[r0:r0 + calib, c0:c0 + calib] = True

    ky = np.arange(height) - height // 2
    kx = np.arange(width) - width // 2
    sigma = 0.25 * min(height, width)
    density = np.exp(-(ky[:, None] ** 2 + kx[None, :] ** 2) / (2.0 * sigma ** 2))
    candidates = np.flatnonzero(~mask.ravel())
    n_draw = budget - calib * calib
    if n_draw > 0:
        p = density.ravel()[candidates]
        rng = np.random.default_rng(seed)
        picked = rng.choice(candidates.size, size=n_draw, replace=False, p=p / p.sum())
        mask.ravel()[candidates[picked]] = True
    return mask


def subsample_views(n_full: int, rate: float) -> np.ndarray:
    """Uniformly spaced view indices ``round(i * rate)`` for ``i < floor(n_full / rate)``."""
    if rate < 1:
        raise ValueError(f"rate must be >= 1, got {rate}")
    if rate > n_full:
        raise ValueError(f"rate {rate} exceeds the number of views {n_full}")
    count = int(math.floor(n_full / rate))
    idx = np.floor(np.arange(count) * rate + 0.5).astype(np.int64)
    return np.minimum(idx, n_full - 1)
