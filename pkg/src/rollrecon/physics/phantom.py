"""Synthetic jittered Shepp-Logan phantoms and analytic coil sensitivities."""

from __future__ import annotations

import numpy as np

# modified Shepp-Logan: intensity, semi-axis a, semi-axis b, x0, y0, angle (deg)
SHEPP_LOGAN = np.array([
    [1.0, 0.6900, 0.9200, 0.00, 0.0000, 0.0],
    [-0.8, 0.6624, 0.8740, 0.00, -0.0184, 0.0],
    [-0.2, 0.1100, 0.3100, 0.22, 0.0000, -18.0],
    [-0.2, 0.1600, 0.4100, -0.22, 0.0000, 18.0],
    [0.1, 0.2100, 0.2500, 0.00, 0.3500, 0.0],
    [0.1, 0.0460, 0.0460, 0.00, 0.1000, 0.0],
    [0.1, 0.0460, 0.0460, 0.00, -0.1000, 0.0],
    [0.1, 0.0460, 0.0230, -0.08, -0.6050, 0.0],
    [0.1, 0.0230, 0.0230, 0.00, -0.6060, 0.0],
    [0.1, 0.0230, 0.0460, 0.06, -0.6050, 0.0],
])

_FOV = 0.9  # shrink so the jittered outer ellipse stays inside the grid
_SUPERSAMPLE = 4


def _render(ellipses: np.ndarray, height: int, width: int) -> np.ndarray:
    ss = _SUPERSAMPLE
    ys = (np.arange(height * ss) + 0.5) / (height * ss) * 2.0 - 1.0
    xs = (np.arange(width * ss) + 0.5) / (width * ss) * 2.0 - 1.0
    y, x = np.meshgrid(-ys, xs, indexing="ij")
    img = np.zeros_like(x)
    for amp, a, b, x0, y0, ang in ellipses:
        t = np.deg2rad(ang)
        dx, dy = x - x0 * _FOV, y - y0 * _FOV
        u = dx * np.cos(t) + dy * np.sin(t)
        v = -dx * np.sin(t) + dy * np.cos(t)
        img[(u / (a * _FOV)) ** 2 + (v / (b * _FOV)) ** 2 <= 1.0] += amp
    return img.reshape(height, ss, width, ss).mean(axis=(1, 3))


def gen_phantom(height: int, width: int, seed: int, kind: str = "mri") -> np.ndarray:
    """Jittered phantom: ``H x W x 2`` (real, imag) for MRI, ``H x W x 1`` for CT.

    Per sample, ellipse centers move by up to +-5% of the half field of view,
    semi-axes and intensities scale by up to +-10%. Magnitude lies in [0, 1].
    MRI phantoms carry a smooth quadratic phase bounded by pi/2.
    """
    if height != width or height & (height - 1):
        raise ValueError(f"phantom must be square with power-of-two side, got {height}x{width}")
    if kind not in ("mri", "ct"):
        raise ValueError(f"unknown phantom kind {kind!r}")
    rng = np.random.default_rng(seed)
    ell = SHEPP_LOGAN.copy()
    n = len(ell)
    ell[:, 0] *= 1.0 + rng.uniform(-0.1, 0.1, n)
    ell[:, 1:3] *= 1.0 + rng.uniform(-0.1, 0.1, (n, 2))
    ell[:, 3:5] += rng.uniform(-0.05, 0.05, (n, 2))
    mag = np.clip(_render(ell, height, width), 0.0, 1.0)
    if kind == "ct":
        return mag[..., None]

    y, x = np.meshgrid(np.linspace(-1, 1, height), np.linspace(-1, 1, width), indexing="ij")
    basis = np.stack([np.ones_like(x), x, y, x * y, x * x, y * y])
    poly = np.tensordot(rng.normal(size=6), basis, axes=1)
    phase = poly * (rng.uniform(0.5, 1.0) * (np.pi / 2) / np.max(np.abs(poly)))
    return np.stack([mag * np.cos(phase), mag * np.sin(phase)], axis=-1)


def gen_coils(height: int, width: int, n_coils: int) -> np.ndarray:
    """Complex ``n_coils x H x W`` sensitivities with sum of |c|^2 equal to one.

    Each coil has a broad Gaussian magnitude centered on the image border
    (equally spaced in angle) and a smooth linear phase.
    """
    if n_coils < 1:
        raise ValueError(f"need at least one coil, got {n_coils}")
    y, x = np.meshgrid(np.arange(height) - (height - 1) / 2,
                       np.arange(width) - (width - 1) / 2, indexing="ij")
    radius = 0.5 * max(height, width)
    sigma = 0.6 * max(height, width)
    maps = []
    for i in range(n_coils):
        ang = 2.0 * np.pi * i / n_coils
        cx, cy = radius * np.cos(ang), radius * np.sin(ang)
        mag = np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / (2.0 * sigma ** 2))
        phase = ang + 0.5 * np.pi * (x * np.cos(ang) + y * np.sin(ang)) / max(height, width)
        maps.append(mag * np.exp(1j * phase))
    maps = np.stack(maps)
    return maps / np.sqrt(np.sum(np.abs(maps) ** 2, axis=0))
