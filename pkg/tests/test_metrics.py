"""Tests for circle-masked PSNR/SSIM, including naive recomputation oracles."""
import numpy as np
import pytest

from noisier2inverse.geometry import inscribed_circle_mask
from noisier2inverse.metrics import MetricReport, psnr, ssim


def _naive_psnr(recon, clean, data_range=None):
    width = clean.shape[0]
    total = 0.0
    count = 0
    lo, hi = float("inf"), float("-inf")
    c = (width - 1) / 2.0
    r2 = (width / 2.0) ** 2
    for i in range(width):
        for j in range(width):
            if (i - c) ** 2 + (j - c) ** 2 <= r2:
                total += (recon[i, j] - clean[i, j]) ** 2
                count += 1
                lo = min(lo, clean[i, j])
                hi = max(hi, clean[i, j])
    if data_range is None:
        data_range = hi - lo
    mse = total / count
    if mse == 0.0:
        return float("inf")
    return 10.0 * np.log10(data_range**2 / mse)


def _naive_ssim(a, b, data_range=None):
    """Windowed SSIM recomputed with explicit loops.

    Conventions mirrored: both images are zeroed outside the inscribed
    circle first, an 11x11 unit-sum Gaussian window (sigma 1.5) slides with
    zero padding, and the resulting map is averaged over the circle.
    """
    width = a.shape[0]
    mask = inscribed_circle_mask(width)
    if data_range is None:
        data_range = float(b[mask].max() - b[mask].min())
    a = np.where(mask, a, 0.0)
    b = np.where(mask, b, 0.0)
    idx = np.arange(-5, 6)
    win = np.exp(-(idx[:, None] ** 2 + idx[None, :] ** 2) / (2 * 1.5**2))
    win /= win.sum()
    c1 = (0.01 * data_range) ** 2
    c2 = (0.03 * data_range) ** 2
    total = 0.0
    count = 0
    for i in range(width):
        for j in range(width):
            if not mask[i, j]:
                continue
            mu_a = mu_b = ea2 = eb2 = eab = 0.0
            for u in range(-5, 6):
                for v in range(-5, 6):
                    ii, jj = i + u, j + v
                    if 0 <= ii < width and 0 <= jj < width:
                        va, vb = a[ii, jj], b[ii, jj]
                    else:
                        va = vb = 0.0
                    w = win[u + 5, v + 5]
                    mu_a += w * va
                    mu_b += w * vb
                    ea2 += w * va * va
                    eb2 += w * vb * vb
                    eab += w * va * vb
            var_a = ea2 - mu_a**2
            var_b = eb2 - mu_b**2
            cov = eab - mu_a * mu_b
            num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
            den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
            total += num / den
            count += 1
    return total / count


class TestPSNR:
    def test_identical_images_return_infinity(self):
        x = np.random.default_rng(0).random((16, 16))
        assert psnr(x, x) == float("inf")

    def test_uniform_offset_closed_form(self):
        # clean spans [0, 1]; recon = clean + 0.1 -> MSE 0.01 -> 20 dB.
        g = np.linspace(0.0, 1.0, 32)
        clean = np.outer(g, np.ones(32))
        recon = clean + 0.1
        np.testing.assert_allclose(psnr(recon, clean), 20.0, atol=1e-10)

    def test_constant_shift_of_identical_pair(self):
        g = np.linspace(0.0, 1.0, 24)
        clean = np.outer(g, g) / g.max()
        clean /= clean.max()
        inside = clean[inscribed_circle_mask(24)]
        rng = inside.max() - inside.min()
        for c in (0.05, 0.2):
            expected = 10.0 * np.log10(rng**2 / c**2)
            np.testing.assert_allclose(psnr(clean + c, clean), expected,
                                       atol=1e-10)

    def test_matches_naive_recomputation(self):
        rng = np.random.default_rng(3)
        clean = rng.random((17, 17))
        recon = clean + 0.1 * rng.standard_normal((17, 17))
        np.testing.assert_allclose(psnr(recon, clean),
                                   _naive_psnr(recon, clean), atol=1e-10)
        np.testing.assert_allclose(psnr(recon, clean, data_range=2.5),
                                   _naive_psnr(recon, clean, 2.5),
                                   atol=1e-10)

    def test_outside_circle_ignored(self):
        rng = np.random.default_rng(4)
        clean = rng.random((20, 20))
        recon = clean + 0.05 * rng.standard_normal((20, 20))
        base = psnr(recon, clean, data_range=1.0)
        mask = inscribed_circle_mask(20)
        vandal = recon.copy()
        vandal[~mask] = 1e6
        assert psnr(vandal, clean, data_range=1.0) == base

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            psnr(np.zeros((4, 4)), np.zeros((5, 5)))


class TestSSIM:
    def test_identical_images_give_one(self):
        x = np.random.default_rng(1).random((24, 24))
        np.testing.assert_allclose(ssim(x, x), 1.0, atol=1e-12)

    def test_anticorrelated_checkerboard_is_negative(self):
        i, j = np.meshgrid(np.arange(32), np.arange(32), indexing="ij")
        clean = np.where((i + j) % 2 == 0, 1.0, -1.0)
        assert ssim(-clean, clean, data_range=2.0) < 0.0

    def test_matches_naive_recomputation(self):
        rng = np.random.default_rng(2)
        clean = rng.random((16, 16))
        recon = clean + 0.2 * rng.standard_normal((16, 16))
        np.testing.assert_allclose(ssim(recon, clean),
                                   _naive_ssim(recon, clean), atol=1e-8)

    def test_symmetry(self):
        rng = np.random.default_rng(5)
        a = rng.random((16, 16))
        b = rng.random((16, 16))
        np.testing.assert_allclose(ssim(a, b, data_range=1.0),
                                   ssim(b, a, data_range=1.0), atol=1e-12)

    def test_outside_circle_ignored(self):
        rng = np.random.default_rng(6)
        clean = rng.random((20, 20))
        recon = clean + 0.1 * rng.standard_normal((20, 20))
        base = ssim(recon, clean, data_range=1.0)
        mask = inscribed_circle_mask(20)
        vandal_r = recon.copy()
        vandal_r[~mask] = -50.0
        vandal_c = clean.copy()
        vandal_c[~mask] = 99.0
        assert ssim(vandal_r, vandal_c, data_range=1.0) == base

    def test_bounded_above_by_one(self):
        rng = np.random.default_rng(7)
        for _ in range(5):
            a = rng.random((16, 16))
            b = rng.random((16, 16))
            assert ssim(a, b, data_range=1.0) <= 1.0


class TestMetricReport:
    def test_mean_and_std(self):
        report = MetricReport(psnr_values=[20.0, 22.0, 24.0],
                              ssim_values=[0.5, 0.7, 0.9])
        np.testing.assert_allclose(report.psnr_mean, 22.0)
        np.testing.assert_allclose(report.ssim_mean, 0.7)
        np.testing.assert_allclose(report.psnr_std, np.std([20.0, 22.0, 24.0]))

    def test_from_pairs(self):
        rng = np.random.default_rng(8)
        clean = rng.random((16, 16))
        report = MetricReport.from_pairs([clean + 0.1, clean + 0.2],
                                         [clean, clean])
        assert len(report.psnr_values) == 2
        assert report.psnr_values[0] > report.psnr_values[1]

    def test_infinite_sentinel_propagates(self):
        x = np.random.default_rng(9).random((12, 12))
        report = MetricReport.from_pairs([x], [x])
        assert report.psnr_values[0] == float("inf")
        np.testing.assert_allclose(report.ssim_values[0], 1.0, atol=1e-12)
