"""Reference-based reconstruction quality metrics, restricted to the circle.

Only pixels inside the circle inscribed in the image square participate:
parallel-beam data determines the image there, and corner pixels would
otherwise dominate the error terms.  For SSIM both images are zero-masked
outside the circle before windowing, so values outside the circle can never
leak into the score.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.signal import convolve2d

from .geometry import ImageGrid, inscribed_circle_mask


def _as_values(img) -> np.ndarray:
    if isinstance(img, ImageGrid):
        return img.values
    return np.asarray(img)


def _resolve_range(clean: np.ndarray, data_range: Optional[float]) -> float:
    if data_range is None:
        data_range = float(clean.max() - clean.min())
    if data_range <= 0:
        raise ValueError("data_range must be positive "
                         "(constant clean image needs an explicit range)")
    return data_range


def psnr(recon, clean, data_range: Optional[float] = None) -> float:
    """Peak signal-to-noise ratio in dB over the inscribed circle.

    data_range defaults to max - min of the clean image inside the circle.
    Identical images return +inf.
    """
    r = _as_values(recon).astype(np.float64)
    c = _as_values(clean).astype(np.float64)
    if r.shape != c.shape:
        raise ValueError(f"shape mismatch: {r.shape} vs {c.shape}")
    mask = inscribed_circle_mask(c.shape[0])
    rng = _resolve_range(c[mask], data_range)
    mse = float(np.mean((r[mask] - c[mask]) ** 2))
    if mse == 0.0:
        return np.inf
    return 10.0 * np.log10(rng ** 2 / mse)


# standard 11x11 Gaussian window with sigma 1.5, unit sum
_SSIM_WINDOW_SIZE = 11
_SSIM_SIGMA = 1.5


def _ssim_window() -> np.ndarray:
    half = _SSIM_WINDOW_SIZE // 2
    idx = np.arange(-half, half + 1, dtype=np.float64)
    prof = np.exp(-(idx ** 2) / (2.0 * _SSIM_SIGMA ** 2))
    win = prof[:, None] * prof[None, :]
    return win / win.sum()


def ssim(recon, clean, data_range: Optional[float] = None) -> float:
    """Mean structural similarity over the inscribed circle.

    Gaussian window (11x11, sigma 1.5), stabilizers C1=(0.01 L)^2 and
    C2=(0.03 L)^2 with L the data range.  Windows are zero-padded at the
    image border.
    """
    r = _as_values(recon).astype(np.float64)
    c = _as_values(clean).astype(np.float64)
    if r.shape != c.shape:
        raise ValueError(f"shape mismatch: {r.shape} vs {c.shape}")
    mask = inscribed_circle_mask(c.shape[0])
    rng = _resolve_range(c[mask], data_range)
    r = np.where(mask, r, 0.0)
    c = np.where(mask, c, 0.0)

    win = _ssim_window()
    c1 = (0.01 * rng) ** 2
    c2 = (0.03 * rng) ** 2

    def smooth(a):
        return convolve2d(a, win, mode="same", boundary="fill")

    mu_r = smooth(r)
    mu_c = smooth(c)
    var_r = smooth(r * r) - mu_r ** 2
    var_c = smooth(c * c) - mu_c ** 2
    cov = smooth(r * c) - mu_r * mu_c

    num = (2 * mu_r * mu_c + c1) * (2 * cov + c2)
    den = (mu_r ** 2 + mu_c ** 2 + c1) * (var_r + var_c + c2)
    ssim_map = num / den
    return float(np.mean(ssim_map[mask]))


@dataclass(frozen=True)
class MetricReport:
    """Per-sample PSNR/SSIM values with their mean and standard deviation."""

    psnr_values: np.ndarray
    ssim_values: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.psnr_values, dtype=np.float64)
        s = np.asarray(self.ssim_values, dtype=np.float64)
        if p.shape != s.shape or p.ndim != 1:
            raise ValueError("per-sample metric arrays must be 1D, same length")
        object.__setattr__(self, "psnr_values", p)
        object.__setattr__(self, "ssim_values", s)

    @property
    def psnr_mean(self) -> float:
        return float(np.mean(self.psnr_values))

    @property
    def psnr_std(self) -> float:
        return float(np.std(self.psnr_values))

    @property
    def ssim_mean(self) -> float:
        return float(np.mean(self.ssim_values))

    @property
    def ssim_std(self) -> float:
        return float(np.std(self.ssim_values))

    @staticmethod
    def from_pairs(recons: Sequence, cleans: Sequence,
                   data_range: Optional[float] = None) -> "MetricReport":
        if len(recons) != len(cleans):
            raise ValueError("recon/clean counts differ")
        ps = [psnr(r, c, data_range) for r, c in zip(recons, cleans)]
        ss = [ssim(r, c, data_range) for r, c in zip(recons, cleans)]
        return MetricReport(np.array(ps), np.array(ss))
