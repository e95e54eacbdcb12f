"""Built-in synthetic phantoms: no external dataset needed for tests/demos.

All generators map pixel centers to the square [-1, 1]^2 and fill analytic
shapes, so the same phantom definition renders at any resolution.
"""

from __future__ import annotations

from typing import List, Sequence, Tuple

import numpy as np

from .geometry import ImageGrid


def _grid(width: int) -> Tuple[np.ndarray, np.ndarray]:
    c = (width - 1) / 2.0
    coords = (np.arange(width) - c) * (2.0 / width)
    x = coords[None, :]
    y = -coords[:, None]
    return x, y


def _add_ellipse(img: np.ndarray, x, y, value: float, cx: float, cy: float,
                 a: float, b: float, phi_deg: float = 0.0) -> None:
    phi = np.deg2rad(phi_deg)
    xr = (x - cx) * np.cos(phi) + (y - cy) * np.sin(phi)
    yr = -(x - cx) * np.sin(phi) + (y - cy) * np.cos(phi)
    img[(xr / a) ** 2 + (yr / b) ** 2 <= 1.0] += value


# modified Shepp-Logan ellipse table: value, a, b, cx, cy, rotation (deg)
_SHEPP_LOGAN = [
    (1.00, 0.6900, 0.9200, 0.00, 0.0000, 0.0),
    (-0.80, 0.6624, 0.8740, 0.00, -0.0184, 0.0),
    (-0.20, 0.1100, 0.3100, 0.22, 0.0000, -18.0),
    (-0.20, 0.1600, 0.4100, -0.22, 0.0000, 18.0),
    (0.10, 0.2100, 0.2500, 0.00, 0.3500, 0.0),
    (0.10, 0.0460, 0.0460, 0.00, 0.1000, 0.0),
    (0.10, 0.0460, 0.0460, 0.00, -0.1000, 0.0),
    (0.10, 0.0460, 0.0230, -0.08, -0.6050, 0.0),
    (0.10, 0.0230, 0.0230, 0.00, -0.6060, 0.0),
    (0.10, 0.0230, 0.0460, 0.06, -0.6050, 0.0),
]


def shepp_logan(width: int) -> ImageGrid:
    """The classic head phantom (modified intensities), values in [0, 1]."""
    img = np.zeros((width, width))
    x, y = _grid(width)
    for value, a, b, cx, cy, phi in _SHEPP_LOGAN:
        _add_ellipse(img, x, y, value, cx, cy, a, b, phi)
    return ImageGrid(np.clip(img, 0.0, 1.0))


def disk_phantom(width: int, radius: float = 0.6, value: float = 1.0) -> ImageGrid:
    """Centered disk; radius in [-1, 1] coordinates."""
    img = np.zeros((width, width))
    x, y = _grid(width)
    img[x ** 2 + y ** 2 <= radius ** 2] = value
    return ImageGrid(img)


def random_phantom(width: int, index: int, seed: int = 0) -> ImageGrid:
    """One reproducible random nut-like phantom: shell, flesh, and inclusions.

    A fixed (seed, index) pair always renders the same phantom.  Values land
    in [0, 1].
    """
    rng = np.random.default_rng(np.random.SeedSequence((seed, index, 0x9E)))
    img = np.zeros((width, width))
    x, y = _grid(width)

    # outer shell and interior
    r_out = rng.uniform(0.78, 0.9)
    shell = rng.uniform(0.08, 0.14)
    ecc = rng.uniform(0.85, 1.0)
    rot = rng.uniform(0, 180)
    _add_ellipse(img, x, y, 0.95, 0.0, 0.0, r_out, r_out * ecc, rot)
    _add_ellipse(img, x, y, -0.55, 0.0, 0.0, r_out - shell,
                 (r_out - shell) * ecc, rot)

    # internal structure: a handful of soft ellipses
    for _ in range(rng.integers(4, 9)):
        a = rng.uniform(0.06, 0.3)
        b = rng.uniform(0.06, 0.3)
        rad = rng.uniform(0.0, max(r_out - shell - max(a, b), 0.05))
        ang = rng.uniform(0, 2 * np.pi)
        _add_ellipse(img, x, y, rng.uniform(-0.3, 0.45),
                     rad * np.cos(ang), rad * np.sin(ang),
                     a, b, rng.uniform(0, 180))

    # a few small dense spots
    for _ in range(rng.integers(1, 4)):
        r = rng.uniform(0.02, 0.06)
        rad = rng.uniform(0.0, r_out - shell - r)
        ang = rng.uniform(0, 2 * np.pi)
        _add_ellipse(img, x, y, rng.uniform(0.25, 0.5),
                     rad * np.cos(ang), rad * np.sin(ang), r, r)

    return ImageGrid(np.clip(img, 0.0, 1.0))


def phantom_set(count: int, width: int, seed: int = 0) -> List[ImageGrid]:
    """A reproducible dataset of random phantoms."""
    return [random_phantom(width, i, seed) for i in range(count)]
