"""Spatially correlated sinogram noise: Gaussian-filtered white noise.

A noise field is drawn as i.i.d. zero-mean Gaussian white noise with standard
deviation ``delta`` and then 2D-convolved (zero-padded) with a unit-sum
Gaussian kernel of bandwidth ``sigma``.  Because the kernel has unit sum, the
per-pixel variance of the filtered field is ``delta**2 * sum(kernel**2)``,
which is below ``delta**2``; tests pin this closed form.

Randomness is organized in streams: a stream is addressed by (seed, sample
index, iteration index), and the same address always reproduces the same
field bitwise.  The measurement noise of sample t lives at iteration 0; the
per-iteration training noise uses iteration >= 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy.signal import convolve2d

# iteration index reserved for evaluation-time noise draws, far outside any
# reachable training iteration count
ITER_EVAL = 2 ** 31


@dataclass(frozen=True)
class NoiseSpec:
    """Parameters of the correlated-noise generator.

    delta : standard deviation of the underlying white noise
    sigma : Gaussian kernel bandwidth, in sinogram samples
    kernel_radius : truncation radius in samples (default ceil(3*sigma))
    seed : base seed for all streams derived from this spec
    """

    delta: float
    sigma: float
    kernel_radius: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.delta < 0:
            raise ValueError("delta must be >= 0")
        if self.sigma <= 0:
            raise ValueError("sigma must be > 0")
        if self.kernel_radius == 0:
            object.__setattr__(self, "kernel_radius", math.ceil(3 * self.sigma))
        if self.kernel_radius < 1:
            raise ValueError("kernel_radius must be >= 1")

    def kernel(self) -> np.ndarray:
        return gaussian_kernel(self.sigma, self.kernel_radius)

    def pixel_std(self) -> float:
        """Closed-form standard deviation of one filtered-noise pixel."""
        k = self.kernel()
        return self.delta * float(np.sqrt(np.sum(k * k)))


@dataclass(frozen=True)
class RngStream:
    """Addressable random stream: (seed, (sample index, iteration index))."""

    seed: int
    stream_id: Tuple[int, int]

    def generator(self) -> np.random.Generator:
        t, i = self.stream_id
        return np.random.default_rng(np.random.SeedSequence((self.seed, t, i)))


def gaussian_kernel(sigma: float, radius: int) -> np.ndarray:
    """Unit-sum 2D Gaussian kernel on a (2*radius+1)^2 grid."""
    if sigma <= 0:
        raise ValueError("sigma must be > 0")
    if radius < 1:
        raise ValueError("radius must be >= 1")
    idx = np.arange(-radius, radius + 1, dtype=np.float64)
    prof = np.exp(-(idx ** 2) / (2.0 * sigma ** 2))
    kernel = prof[:, None] * prof[None, :]
    return kernel / kernel.sum()


def sample_correlated_noise(spec: NoiseSpec, shape: Tuple[int, int],
                            stream: RngStream) -> np.ndarray:
    """One correlated noise field of the given shape, reproducible per stream."""
    rng = stream.generator()
    white = spec.delta * rng.standard_normal(shape)
    if spec.delta == 0:
        return np.zeros(shape)
    return convolve2d(white, spec.kernel(), mode="same", boundary="fill")


def measurement_noise(spec: NoiseSpec, shape: Tuple[int, int],
                      sample_id: int) -> np.ndarray:
    """The fixed per-sample measurement noise xi_t (stream (t, 0))."""
    return sample_correlated_noise(spec, shape, RngStream(spec.seed, (sample_id, 0)))


def iteration_noise(spec: NoiseSpec, shape: Tuple[int, int],
                    sample_id: int, iteration: int) -> np.ndarray:
    """Training/evaluation noise eta_t at a given iteration (>= 1)."""
    if iteration < 1:
        raise ValueError("iteration noise starts at iteration 1; "
                         "iteration 0 is the measurement noise stream")
    return sample_correlated_noise(spec, shape,
                                   RngStream(spec.seed, (sample_id, iteration)))


def noise_for_geometry(spec: NoiseSpec, geom, sample_id: int,
                       iteration: int) -> np.ndarray:
    """Noise field for an acquisition, shape (acquired angles, detectors).

    The field is always synthesized on the full angle grid and then
    row-selected, so a sparse acquisition sees exactly the corresponding rows
    of the dense acquisition's noise.
    """
    full_shape = (geom.num_angles, geom.num_detectors)
    field = sample_correlated_noise(spec, full_shape,
                                    RngStream(spec.seed, (sample_id, iteration)))
    if geom.angle_subset is not None:
        field = field[np.asarray(geom.angle_subset, dtype=int)]
    return field


def convolution_matrix_2d(kernel: np.ndarray, shape: Tuple[int, int]) -> np.ndarray:
    """Dense matrix of the zero-padded 2D convolution on a small grid.

    Row-major vectorization; column p is the kernel response to a unit
    impulse at pixel p.  Intended for closed-form checks on tiny shapes.
    """
    h, w = shape
    cols = []
    for i in range(h):
        for j in range(w):
            e = np.zeros(shape)
            e[i, j] = 1.0
            cols.append(convolve2d(e, kernel, mode="same", boundary="fill").ravel())
    return np.stack(cols, axis=1)
