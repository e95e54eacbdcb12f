"""Domain containers for images, scan geometries and sinograms.

Conventions used throughout the package:

* Images are square, indexed ``values[row, col]``; the physical x axis points
  along increasing columns, the y axis along decreasing rows, with the origin
  at the image centre.
* A projection angle ``theta`` measures the detector axis direction
  ``n = (cos theta, sin theta)``; rays travel along ``(-sin theta, cos theta)``.
* Sinograms are indexed ``values[angle, detector]``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Tuple

import numpy as np


def _require_finite(arr: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{what} contains NaN or Inf values")


@dataclass(frozen=True)
class ImageGrid:
    """A square pixel image (the reconstruction-domain object).

    Parameters
    ----------
    values : ndarray, shape (width, width)
        Unitless attenuation values.
    pixel_size : float
        Side length of one pixel in physical length units.
    """

    values: np.ndarray
    pixel_size: float = 1.0

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError(f"image must be square 2D, got shape {v.shape}")
        if v.shape[0] < 2:
            raise ValueError("image width must be >= 2")
        if self.pixel_size <= 0:
            raise ValueError("pixel_size must be positive")
        _require_finite(v, "image")
        object.__setattr__(self, "values", v)

    @property
    def width(self) -> int:
        return self.values.shape[0]


def default_num_detectors(width: int) -> int:
    """Detector count covering the image diagonal, rounded up to even."""
    n = int(np.ceil(np.sqrt(2.0) * width))
    return n + (n % 2)


@dataclass(frozen=True)
class ScanGeometry:
    """Parallel-beam acquisition: equidistant angles on [0, pi).

    ``angle_subset`` restricts the acquisition to a subset of the full angle
    grid (sparse-data mode); the resulting sinogram rows are exactly the
    selected rows of the full sinogram.
    """

    num_angles: int
    num_detectors: int
    detector_spacing: float = 1.0
    angle_subset: Optional[Tuple[int, ...]] = None

    def __post_init__(self):
        if self.num_angles < 1:
            raise ValueError("num_angles must be >= 1")
        if self.num_detectors < 2:
            raise ValueError("num_detectors must be >= 2")
        if self.detector_spacing <= 0:
            raise ValueError("detector_spacing must be positive")
        if self.angle_subset is not None:
            sub = tuple(int(k) for k in self.angle_subset)
            if len(sub) == 0:
                raise ValueError("angle_subset must not be empty")
            if any(k < 0 or k >= self.num_angles for k in sub):
                raise ValueError("angle_subset indices out of range")
            if any(b <= a for a, b in zip(sub, sub[1:])):
                raise ValueError("angle_subset must be strictly increasing")
            object.__setattr__(self, "angle_subset", sub)

    @property
    def angle_indices(self) -> np.ndarray:
        if self.angle_subset is None:
            return np.arange(self.num_angles)
        return np.asarray(self.angle_subset, dtype=int)

    @property
    def angles(self) -> np.ndarray:
        """Angles actually acquired, in radians."""
        return self.angle_indices * (np.pi / self.num_angles)

    @property
    def num_rows(self) -> int:
        """Number of sinogram rows (= acquired angles)."""
        return len(self.angle_indices)

    def covers(self, image: ImageGrid) -> bool:
        """Detector row spans the image diagonal."""
        det_extent = self.num_detectors * self.detector_spacing
        return det_extent >= np.sqrt(2.0) * image.width * image.pixel_size

    def subset(self, indices) -> "ScanGeometry":
        """Geometry restricted to the given angle indices of the full grid."""
        return replace(self, angle_subset=tuple(int(k) for k in indices))

    @staticmethod
    def for_image(width: int, num_angles: int, pixel_size: float = 1.0,
                  angle_subset: Optional[Tuple[int, ...]] = None) -> "ScanGeometry":
        return ScanGeometry(
            num_angles=num_angles,
            num_detectors=default_num_detectors(width),
            detector_spacing=pixel_size,
            angle_subset=angle_subset,
        )


@dataclass(frozen=True)
class Sinogram:
    """Measurement-domain array of line integrals, shape (angles, detectors)."""

    geometry: ScanGeometry
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values)
        expected = (self.geometry.num_rows, self.geometry.num_detectors)
        if v.shape != expected:
            raise ValueError(
                f"sinogram shape {v.shape} does not match geometry {expected}")
        _require_finite(v, "sinogram")
        object.__setattr__(self, "values", v)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.values.shape


@dataclass(frozen=True)
class GradField:
    """Forward differences of a sinogram along the angle and detector axes."""

    d_angle: np.ndarray
    d_detector: np.ndarray

    def __post_init__(self):
        da = np.asarray(self.d_angle)
        dd = np.asarray(self.d_detector)
        if da.shape != dd.shape:
            raise ValueError("gradient components must share one shape")
        object.__setattr__(self, "d_angle", da)
        object.__setattr__(self, "d_detector", dd)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.d_angle.shape


def inscribed_circle_mask(width: int) -> np.ndarray:
    """Boolean mask of pixels inside the circle inscribed in the square."""
    c = (width - 1) / 2.0
    i = np.arange(width)
    dist2 = (i[:, None] - c) ** 2 + (i[None, :] - c) ** 2
    return dist2 <= (width / 2.0) ** 2
