"""Image and array file I/O.

In: 8/16-bit grayscale images (PNG, PGM; anything Pillow decodes is accepted
and converted to grayscale).  Out: 32-bit portable float maps (PFM) for exact
reconstruction dumps, 8-bit PNG previews, and CSV tables.
"""

from __future__ import annotations

import warnings
from pathlib import Path
from typing import List, Sequence

import numpy as np
from PIL import Image

from .geometry import ImageGrid


def load_image(path) -> np.ndarray:
    """Decode one image file to a float array scaled to [0, 1]."""
    with Image.open(path) as img:
        if img.mode in ("I;16", "I;16B", "I;16L"):
            arr = np.asarray(img, dtype=np.float64) / 65535.0
        elif img.mode == "I":
            arr = np.asarray(img, dtype=np.float64)
            peak = arr.max()
            arr = arr / (65535.0 if peak > 255 else 255.0)
        else:
            arr = np.asarray(img.convert("L"), dtype=np.float64) / 255.0
    return arr


def bilinear_resize(values: np.ndarray, out_size: int) -> np.ndarray:
    """Bilinear resampling with half-pixel-aligned centers.

    An exact 2x downsize averages each 2x2 block, which the tests pin.
    """
    h, w = values.shape

    def axis_coords(n_in, n_out):
        src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        src = np.clip(src, 0, n_in - 1)
        lo = np.floor(src).astype(int)
        hi = np.minimum(lo + 1, n_in - 1)
        frac = src - lo
        return lo, hi, frac

    rlo, rhi, rfrac = axis_coords(h, out_size)
    clo, chi, cfrac = axis_coords(w, out_size)
    top = values[rlo][:, clo] * (1 - cfrac) + values[rlo][:, chi] * cfrac
    bot = values[rhi][:, clo] * (1 - cfrac) + values[rhi][:, chi] * cfrac
    return top * (1 - rfrac[:, None]) + bot * rfrac[:, None]


def ingest_dataset(path, image_size: int) -> List[ImageGrid]:
    """Load a directory of grayscale images in deterministic filename order.

    Unreadable files are skipped with a warning; an empty result is an error.
    """
    root = Path(path)
    if not root.is_dir():
        raise FileNotFoundError(f"dataset directory not found: {root}")
    images = []
    for entry in sorted(root.iterdir()):
        if not entry.is_file():
            continue
        try:
            arr = load_image(entry)
        except Exception as exc:
            warnings.warn(f"skipping unreadable image {entry.name}: {exc}")
            continue
        if arr.shape != (image_size, image_size):
            arr = bilinear_resize(arr, image_size)
        images.append(ImageGrid(arr))
    if not images:
        raise ValueError(f"no readable images in {root}")
    return images


# ---------------------------------------------------------------------------
# portable float maps (grayscale "Pf"), little endian via negative scale

def save_pfm(path, values: np.ndarray) -> None:
    arr = np.asarray(values, dtype="<f4")
    if arr.ndim != 2:
        raise ValueError("PFM output expects a 2D array")
    h, w = arr.shape
    with open(path, "wb") as fh:
        fh.write(f"Pf\n{w} {h}\n-1.0\n".encode("ascii"))
        fh.write(arr[::-1].tobytes())  # PFM stores rows bottom to top


def load_pfm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        if fh.readline().strip() != b"Pf":
            raise ValueError(f"not a grayscale PFM: {path}")
        w, h = (int(v) for v in fh.readline().split())
        scale = float(fh.readline())
        data = np.frombuffer(fh.read(), dtype="<f4" if scale < 0 else ">f4",
                             count=h * w)
    return data.reshape(h, w)[::-1].astype(np.float32)


def save_png(path, values: np.ndarray) -> None:
    """8-bit preview; values are clipped to [0, 1]."""
    arr = np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0)
    Image.fromarray((arr * 255.0 + 0.5).astype(np.uint8), mode="L").save(path)


def write_csv(path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    """Plain deterministic CSV: repr for floats so round-trips are exact."""
    def fmt(v):
        if isinstance(v, float):
            return repr(v)
        return str(v)

    lines = [",".join(header)]
    lines += [",".join(fmt(v) for v in row) for row in rows]
    Path(path).write_text("\n".join(lines) + "\n")
