"""Image quality metrics on magnitude images."""

from __future__ import annotations

import numpy as np
from scipy.signal import fftconvolve

PSNR_CAP = 99.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def magnitude(img: np.ndarray) -> np.ndarray:
    """``H x W`` display image: |x| for two-plane complex images, squeezed for one channel."""
    a = np.asarray(img, dtype=np.float64)
    if a.ndim == 3 and a.shape[-1] == 2:
        return np.hypot(a[..., 0], a[..., 1])
    if a.ndim == 3 and a.shape[-1] == 1:
        return a[..., 0]
    if a.ndim == 2:
        return a
    raise ValueError(f"expected an H x W, H x W x 1 or H x W x 2 image, got {a.shape}")


def _pair(recon, ref) -> tuple[np.ndarray, np.ndarray]:
    if np.shape(recon) != np.shape(ref):
        raise ValueError(f"shape mismatch: {np.shape(recon)} vs {np.shape(ref)}")
    return magnitude(recon), magnitude(ref)


def psnr(recon, ref) -> float:
    """``10 log10(peak^2 / MSE)`` with ``peak = max |ref|``; identical images give 99 dB."""
    a, b = _pair(recon, ref)
    peak = float(np.max(np.abs(b)))
    if peak == 0.0:
        raise ValueError("reference image has zero peak")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return float(min(PSNR_CAP, 10.0 * np.log10(peak * peak / mse)))


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    r = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(r ** 2) / (2.0 * sigma ** 2))
    w = np.outer(g, g)
    return w / w.sum()


def ssim_map(recon, ref) -> np.ndarray:
    """Local SSIM over every fully contained window position."""
    a, b = _pair(recon, ref)
    if min(a.shape) < SSIM_WINDOW:
        raise ValueError(f"image {a.shape} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")
    peak = float(np.max(np.abs(b)))
    if peak == 0.0:
        raise ValueError("reference image has zero peak")
    c1 = (SSIM_K1 * peak) ** 2
    c2 = (SSIM_K2 * peak) ** 2
    w = gaussian_window()

    def filt(z):
        # symmetric window, so convolution equals correlation
        return fftconvolve(z, w, mode="valid")

    mu_a, mu_b = filt(a), filt(b)
    var_a = filt(a * a) - mu_a ** 2
    var_b = filt(b * b) - mu_b ** 2
    cov = filt(a * b) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)
    return num / den


def ssim(recon, ref) -> float:
    return float(np.clip(np.mean(ssim_map(recon, ref)), -1.0, 1.0))
