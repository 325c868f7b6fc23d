import numpy as np
import pytest

from rollrecon.metrics import PSNR_CAP, magnitude, psnr, ssim


def direct_ssim(a, b, peak, size=11, sigma=1.5):
    """Window-by-window SSIM with explicit weighted sums."""
    r = np.arange(size) - (size - 1) / 2
    g = np.exp(-(r ** 2) / (2 * sigma ** 2))
    w = np.outer(g, g)
    w /= w.sum()
    c1, c2 = (0.01 * peak) ** 2, (0.03 * peak) ** 2
    vals = []
    for i in range(a.shape[0] - size + 1):
        for j in range(a.shape[1] - size + 1):
            pa, pb = a[i:i + size, j:j + size], b[i:i + size, j:j + size]
            ma, mb = np.sum(w * pa), np.sum(w * pb)
            va = np.sum(w * (pa - ma) ** 2)
            vb = np.sum(w * (pb - mb) ** 2)
            cov = np.sum(w * (pa - ma) * (pb - mb))
            vals.append((2 * ma * mb + c1) * (2 * cov + c2)
                        / ((ma ** 2 + mb ** 2 + c1) * (va + vb + c2)))
    return float(np.mean(vals))


def test_psnr_identical_and_analytic(rng):
    ref = rng.uniform(0, 1, (16, 16))
    ref[0, 0] = 1.0
    assert psnr(ref, ref) == PSNR_CAP
    noisy = ref + 0.1 * rng.choice([-1.0, 1.0], ref.shape)
    assert psnr(noisy, ref) == pytest.approx(20.0, abs=1e-12)


def test_psnr_uses_magnitude_for_complex_planes(rng):
    z = rng.standard_normal((8, 8, 2))
    rot = np.stack([-z[..., 1], z[..., 0]], -1)  # multiply by i: same magnitude
    assert psnr(rot, z) == PSNR_CAP
    np.testing.assert_allclose(magnitude(z), np.abs(z[..., 0] + 1j * z[..., 1]))


def test_metrics_decrease_with_noise(rng):
    ref = rng.uniform(0, 1, (32, 32))
    noise = rng.standard_normal(ref.shape)
    p = [psnr(ref + s * noise, ref) for s in (0.01, 0.05, 0.2)]
    q = [ssim(ref + s * noise, ref) for s in (0.01, 0.05, 0.2)]
    assert p[0] > p[1] > p[2]
    assert 1.0 > q[0] > q[1] > q[2]
    assert ssim(ref, ref) == pytest.approx(1.0)


def test_ssim_anticorrelated(rng):
    # zero mean inside every window, so only the covariance term carries sign
    i, j = np.indices((20, 20))
    ref = np.where((i + j) % 2 == 0, 1.0, -1.0) * rng.uniform(0.5, 1.0)
    assert ssim(-ref, ref) < 0


@pytest.mark.parametrize("seed", range(4))
def test_ssim_matches_direct_summation(seed):
    rng = np.random.default_rng(seed)
    ref = rng.uniform(0, 1, (24, 20))
    rec = ref + rng.normal(0, 0.1 * (seed + 1), ref.shape)
    assert abs(ssim(rec, ref) - direct_ssim(rec, ref, ref.max())) < 1e-6


def test_metric_errors():
    with pytest.raises(ValueError):
        psnr(np.ones((4, 4)), np.zeros((4, 4)))
    with pytest.raises(ValueError):
        ssim(np.ones((8, 8)), np.ones((8, 8)))
    with pytest.raises(ValueError):
        psnr(np.ones((4, 4)), np.ones((4, 5)))
