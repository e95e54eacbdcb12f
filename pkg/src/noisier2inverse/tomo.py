"""Parallel-beam Radon transform, its exact adjoint, FBP, and sinogram gradients.

The projector is assembled once per (image grid, scan geometry) pair as a
sparse matrix using Joseph-style linear interpolation: each ray steps along
the image axis closest to its direction and splits its path length between
the two pixels straddling the crossing point.  Building ``A`` explicitly
makes the adjoint an exact transpose by construction, which the training
losses rely on.

All operations are pure functions; matrices are cached per geometry and
reused across calls (including float32 copies for the training fast path).
"""

from __future__ import annotations

from typing import Dict, Optional, Tuple

import numpy as np
import scipy.sparse as sp

from .geometry import GradField, ImageGrid, ScanGeometry, Sinogram


def _build_matrix(width: int, pixel_size: float, num_angles: int,
                  num_detectors: int, detector_spacing: float) -> sp.csr_matrix:
    """Assemble the full-angle-grid system matrix, shape (angles*dets, width^2).

    Row ``k * num_detectors + m`` integrates along the ray with angle
    ``theta_k = k*pi/num_angles`` and detector offset
    ``s_m = (m - (num_detectors-1)/2) * detector_spacing``.
    """
    h = pixel_size
    c = (width - 1) / 2.0
    dets = (np.arange(num_detectors) - (num_detectors - 1) / 2.0) * detector_spacing
    centers = (np.arange(width) - c) * h  # physical coordinate per row/col index

    rows_acc = []
    cols_acc = []
    vals_acc = []
    for k in range(num_angles):
        theta = k * np.pi / num_angles
        ct, st = np.cos(theta), np.sin(theta)
        row_base = k * num_detectors * np.ones(num_detectors, dtype=np.int64)
        ray_rows = (row_base + np.arange(num_detectors))[:, None]  # (D, 1)
        if abs(ct) >= abs(st):
            # Ray is closer to vertical in index space: step over image rows i,
            # interpolate between the two columns at each row crossing.
            y = -centers  # y coordinate of row i is (c - i) * h
            x_cross = (dets[:, None] - y[None, :] * st) / ct  # (D, W)
            jf = x_cross / h + c
            weight = h / abs(ct)
            idx0 = np.floor(jf).astype(np.int64)
            w1 = jf - idx0
            i_grid = np.broadcast_to(np.arange(width)[None, :], jf.shape)
            col0 = i_grid * width + idx0
            col1 = i_grid * width + idx0 + 1
        else:
            # Step over image columns j, interpolate between rows.
            x = centers
            y_cross = (dets[:, None] - x[None, :] * ct) / st  # (D, W)
            i_f = c - y_cross / h
            weight = h / abs(st)
            idx0 = np.floor(i_f).astype(np.int64)
            w1 = i_f - idx0
            j_grid = np.broadcast_to(np.arange(width)[None, :], i_f.shape)
            col0 = idx0 * width + j_grid
            col1 = (idx0 + 1) * width + j_grid
        w0 = 1.0 - w1
        rays = np.broadcast_to(ray_rows, idx0.shape)
        ok0 = (idx0 >= 0) & (idx0 <= width - 1)
        ok1 = (idx0 >= -1) & (idx0 <= width - 2)
        rows_acc.append(rays[ok0])
        cols_acc.append(col0[ok0])
        vals_acc.append(w0[ok0] * weight)
        rows_acc.append(rays[ok1])
        cols_acc.append(col1[ok1])
        vals_acc.append(w1[ok1] * weight)

    rows = np.concatenate(rows_acc)
    cols = np.concatenate(cols_acc)
    vals = np.concatenate(vals_acc)
    mat = sp.coo_matrix((vals, (rows, cols)),
                        shape=(num_angles * num_detectors, width * width))
    mat = mat.tocsr()
    mat.eliminate_zeros()
    return mat


class Projector:
    """Cached sparse operators for one image grid / scan geometry pairing."""

    def __init__(self, width: int, pixel_size: float, geom: ScanGeometry):
        if not geom.covers(ImageGrid(np.zeros((width, width)), pixel_size)):
            raise ValueError(
                "detector row does not cover the image diagonal; "
                "increase num_detectors or detector_spacing")
        self.width = width
        self.pixel_size = pixel_size
        self.num_angles = geom.num_angles
        self.num_detectors = geom.num_detectors
        self.detector_spacing = geom.detector_spacing
        self.matrix = _build_matrix(width, pixel_size, geom.num_angles,
                                    geom.num_detectors, geom.detector_spacing)
        # keyed by angle_subset tuple (None = full grid) and dtype charcode
        self._fwd: Dict[Tuple, sp.csr_matrix] = {}
        self._adj: Dict[Tuple, sp.csr_matrix] = {}
        self._filters: Dict[int, np.ndarray] = {}

    def _rows_for(self, subset: Optional[Tuple[int, ...]]) -> np.ndarray:
        idx = np.arange(self.num_angles) if subset is None else np.asarray(subset)
        return (idx[:, None] * self.num_detectors
                + np.arange(self.num_detectors)[None, :]).ravel()

    def forward_matrix(self, subset: Optional[Tuple[int, ...]],
                       dtype=np.float64) -> sp.csr_matrix:
        key = (subset, np.dtype(dtype).char)
        if key not in self._fwd:
            mat = self.matrix if subset is None else self.matrix[self._rows_for(subset)]
            self._fwd[key] = mat.astype(dtype, copy=False)
        return self._fwd[key]

    def adjoint_matrix(self, subset: Optional[Tuple[int, ...]],
                       dtype=np.float64) -> sp.csr_matrix:
        key = (subset, np.dtype(dtype).char)
        if key not in self._adj:
            self._adj[key] = self.forward_matrix(subset, dtype).T.tocsr()
        return self._adj[key]

    def apply(self, values: np.ndarray, subset: Optional[Tuple[int, ...]]) -> np.ndarray:
        """A @ x for a (W, W) image or a (..., W, W) batch."""
        dtype = np.float32 if values.dtype == np.float32 else np.float64
        mat = self.forward_matrix(subset, dtype)
        lead = values.shape[:-2]
        flat = values.reshape(-1, self.width * self.width).astype(dtype, copy=False)
        out = (mat @ flat.T).T
        n_rows = len(subset) if subset is not None else self.num_angles
        return out.reshape(lead + (n_rows, self.num_detectors))

    def apply_adjoint(self, values: np.ndarray,
                      subset: Optional[Tuple[int, ...]]) -> np.ndarray:
        """A^T @ u for a (rows, D) sinogram or a (..., rows, D) batch."""
        dtype = np.float32 if values.dtype == np.float32 else np.float64
        mat = self.adjoint_matrix(subset, dtype)
        lead = values.shape[:-2]
        flat = values.reshape(-1, values.shape[-2] * values.shape[-1])
        flat = flat.astype(dtype, copy=False)
        out = (mat @ flat.T).T
        return out.reshape(lead + (self.width, self.width))

    def ramp_filter(self, dtype=np.float64) -> Tuple[int, np.ndarray]:
        """Zero-padding length and rfft-domain Ram-Lak response |frequency|."""
        pad = 1
        while pad < 2 * self.num_detectors:
            pad *= 2
        if pad not in self._filters:
            freqs = np.fft.rfftfreq(pad, d=self.detector_spacing)
            self._filters[pad] = np.abs(freqs)
        return pad, self._filters[pad].astype(dtype, copy=False)

    def filter_sinogram(self, values: np.ndarray) -> np.ndarray:
        """Per-angle ramp filtering along the detector axis (any batch shape)."""
        pad, ramp = self.ramp_filter()
        spec = np.fft.rfft(values, n=pad, axis=-1)
        filtered = np.fft.irfft(spec * ramp, n=pad, axis=-1)
        out = filtered[..., :self.num_detectors]
        return out.astype(values.dtype, copy=False)

    def fbp_values(self, values: np.ndarray,
                   subset: Optional[Tuple[int, ...]]) -> np.ndarray:
        """Filtered backprojection of raw sinogram values (batched)."""
        n_rows = values.shape[-2]
        filtered = self.filter_sinogram(values)
        back = self.apply_adjoint(filtered, subset)
        scale = (np.pi / n_rows) * self.detector_spacing / self.pixel_size ** 2
        return back * np.asarray(scale, dtype=back.dtype)


_CACHE: Dict[Tuple, Projector] = {}


def get_projector(width: int, geom: ScanGeometry, pixel_size: float = 1.0) -> Projector:
    key = (width, float(pixel_size), geom.num_angles, geom.num_detectors,
           float(geom.detector_spacing))
    if key not in _CACHE:
        _CACHE[key] = Projector(width, pixel_size, geom)
    return _CACHE[key]


def radon_forward(image: ImageGrid, geom: ScanGeometry) -> Sinogram:
    """Line integrals of the image along every acquired ray."""
    proj = get_projector(image.width, geom, image.pixel_size)
    vals = proj.apply(image.values, geom.angle_subset)
    return Sinogram(geometry=geom, values=vals)


def radon_adjoint(sino: Sinogram, width: int, pixel_size: float = 1.0) -> ImageGrid:
    """Exact transpose of radon_forward for the same discretization."""
    proj = get_projector(width, sino.geometry, pixel_size)
    vals = proj.apply_adjoint(sino.values, sino.geometry.angle_subset)
    return ImageGrid(values=vals, pixel_size=pixel_size)


def fbp(sino: Sinogram, width: int, pixel_size: float = 1.0) -> ImageGrid:
    """Filtered backprojection: ramp filter per angle, adjoint, normalization.

    The Ram-Lak response is applied in the frequency domain after zero-padding
    each detector row to the next power of two >= 2*num_detectors.  The
    angular normalization treats the acquired angles as an equispaced cover
    of the half circle, so sparse subsets reconstruct at their own scale.
    """
    proj = get_projector(width, sino.geometry, pixel_size)
    vals = proj.fbp_values(sino.values, sino.geometry.angle_subset)
    return ImageGrid(values=vals, pixel_size=pixel_size)


def grad_forward(sino: Sinogram) -> GradField:
    """Forward differences along angle and detector axes, last difference 0."""
    v = sino.values
    d_angle = np.zeros_like(v)
    d_angle[:-1, :] = v[1:, :] - v[:-1, :]
    d_det = np.zeros_like(v)
    d_det[:, :-1] = v[:, 1:] - v[:, :-1]
    return GradField(d_angle=d_angle, d_detector=d_det)


def grad_adjoint(g: GradField, geometry: ScanGeometry) -> Sinogram:
    """Transpose of grad_forward (a negative divergence on the sinogram grid)."""
    out = grad_values_adjoint(g.d_angle, g.d_detector)
    return Sinogram(geometry=geometry, values=out)


def grad_values_forward(v: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """grad_forward on raw arrays with arbitrary leading batch axes."""
    d_angle = np.zeros_like(v)
    d_angle[..., :-1, :] = v[..., 1:, :] - v[..., :-1, :]
    d_det = np.zeros_like(v)
    d_det[..., :, :-1] = v[..., :, 1:] - v[..., :, :-1]
    return d_angle, d_det


def grad_values_adjoint(d_angle: np.ndarray, d_det: np.ndarray) -> np.ndarray:
    """Transpose of grad_values_forward, batched."""
    out = np.zeros_like(d_angle)
    # adjoint of forward difference with zeroed last entry, along axis -2
    out[..., 0, :] -= d_angle[..., 0, :]
    out[..., 1:, :] += d_angle[..., :-1, :]
    out[..., 1:-1, :] -= d_angle[..., 1:-1, :]
    # and along axis -1
    out[..., :, 0] -= d_det[..., :, 0]
    out[..., :, 1:] += d_det[..., :, :-1]
    out[..., :, 1:-1] -= d_det[..., :, 1:-1]
    return out
