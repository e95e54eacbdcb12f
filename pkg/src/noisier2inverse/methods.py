"""Self-supervised reconstruction methods and their theory checks.

Three trainable methods operate on noisy sinograms y_t = A x_t + xi_t with
spatially correlated xi:

* NN2I: doubles the noise (z_t = y_t + eta_t, eta fresh each iteration) and
  fits ``W[A f(B(z_t))] = W(2 y_t - z_t)`` in the measurement domain, where
  B is filtered backprojection and W is identity or the sinogram gradient.
* NN2N: the one-step measurement-consistency variant, fitting
  ``A f(B(z_t)) = y_t``.
* N2I: the angle-splitting baseline, trained in the reconstruction domain on
  FBPs of complementary angle subsets.

Training never sees clean images; ``x_clean`` on a TrainingSample exists only
for evaluation and checkpoint selection.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import autodiff as ad
from .geometry import ImageGrid, ScanGeometry, Sinogram
from .metrics import psnr
from .network import (NetConfig, OptimState, ParamVector, adam_step,
                      init_params, loss_grad, net_apply_batch,
                      network_closure)
from .noise import (ITER_EVAL, NoiseSpec, RngStream, convolution_matrix_2d,
                    noise_for_geometry, sample_correlated_noise)
from .tomo import get_projector

METHODS = ("NN2I", "NN2N", "N2I")
WEIGHTINGS = ("identity", "gradient")
INFERENCE_INPUTS = ("y", "z")


@dataclass(frozen=True)
class TrainingSample:
    """One measurement: fixed noisy sinogram plus held-back clean image.

    The clean image is evaluation-only; the training path must not read it.
    """

    sample_id: int
    y: Sinogram
    x_clean: Optional[ImageGrid] = None


@dataclass(frozen=True)
class MethodSpec:
    """Which method to train and how to run its inference."""

    method: str = "NN2I"
    weighting: str = "identity"
    inference_input: str = "y"
    n2i_splits: int = 4
    literal_extrapolation: bool = False

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if self.weighting not in WEIGHTINGS:
            raise ValueError(f"unknown weighting {self.weighting!r}")
        if self.inference_input not in INFERENCE_INPUTS:
            raise ValueError(f"unknown inference input {self.inference_input!r}")
        if self.weighting == "gradient" and self.method != "NN2I":
            raise ValueError("gradient weighting applies to NN2I only")
        if self.n2i_splits < 2:
            raise ValueError("n2i_splits must be >= 2")

    @property
    def family(self) -> str:
        """Trained-model name, e.g. NN2Is for gradient-weighted NN2I."""
        if self.method == "N2I":
            return "N2I"
        return self.method + ("s" if self.weighting == "gradient" else "")

    @property
    def label(self) -> str:
        """Display name, e.g. NN2Is[y] for gradient-weighted NN2I on y."""
        if self.method == "N2I":
            return "N2I"
        return f"{self.family}[{self.inference_input}]"


def parse_method_label(label: str) -> MethodSpec:
    """Parse display labels like NN2Is[y], NN2N[z], NN2I, or N2I."""
    import re
    s = label.strip()
    if s == "N2I":
        return MethodSpec(method="N2I")
    m = re.fullmatch(r"(NN2I|NN2N)(s?)(?:\[([yz])\])?", s)
    if m is None:
        raise ValueError(f"cannot parse method label {label!r}")
    method, grad, inp = m.groups()
    if grad and method != "NN2I":
        raise ValueError("gradient weighting applies to NN2I only")
    return MethodSpec(method=method,
                      weighting="gradient" if grad else "identity",
                      inference_input=inp or "y")


@dataclass
class TrainState:
    """Trainer output: final weights plus the checkpoint/loss history."""

    params: ParamVector
    optim: OptimState
    epoch: int
    checkpoint_log: List[Tuple[int, ParamVector]]
    loss_curve: List[Tuple[int, float, float]]  # (epoch, loss, wall seconds)


# ---------------------------------------------------------------------------
# loss construction

def _stack_batch(batch: Sequence[TrainingSample]) -> np.ndarray:
    return np.stack([s.y.values for s in batch])


def _nn_batch_arrays(batch, noise: NoiseSpec, iteration: int, width: int,
                     pixel_size: float, dtype):
    """Shared preprocessing: draw eta, form z, FBP it, build 2y-z and y."""
    geom = batch[0].y.geometry
    proj = get_projector(width, geom, pixel_size)
    ys = _stack_batch(batch).astype(dtype)
    etas = np.stack([noise_for_geometry(noise, geom, s.sample_id, iteration)
                     for s in batch]).astype(dtype)
    z = ys + etas
    inputs = proj.fbp_values(z, geom.angle_subset)
    return proj, geom, ys, z, inputs


def _nn_closure(inputs: np.ndarray, targets: np.ndarray, weighting: str,
                net_cfg: NetConfig, proj, subset):
    run = network_closure(net_cfg, inputs)

    def closure(leaves: Dict[str, ad.Node]) -> ad.Node:
        recon = run(leaves)
        pred = ad.radon_batch(recon, proj, subset)
        diff = ad.sub(pred, targets)
        if weighting == "gradient":
            diff = ad.grad2d_batch(diff)
        return ad.sum_squares(diff)

    return closure


def nn2i_closure(params: ParamVector, batch, noise: NoiseSpec, weighting: str,
                 iteration: int, net_cfg: NetConfig, width: int,
                 pixel_size: float = 1.0):
    """Loss closure for the doubled-noise method: target is 2y - z."""
    dtype = params.values.dtype
    proj, geom, ys, z, inputs = _nn_batch_arrays(batch, noise, iteration,
                                                 width, pixel_size, dtype)
    targets = 2.0 * ys - z
    return _nn_closure(inputs, targets, weighting, net_cfg, proj,
                       geom.angle_subset)


def nn2n_closure(params: ParamVector, batch, noise: NoiseSpec, iteration: int,
                 net_cfg: NetConfig, width: int, pixel_size: float = 1.0):
    """Loss closure for the one-step measurement-consistency method."""
    dtype = params.values.dtype
    proj, geom, ys, z, inputs = _nn_batch_arrays(batch, noise, iteration,
                                                 width, pixel_size, dtype)
    return _nn_closure(inputs, ys, "identity", net_cfg, proj,
                       geom.angle_subset)


def _eval_closure(params: ParamVector, closure) -> float:
    leaves = {name: ad.Node(arr) for name, arr in params.arrays().items()}
    return float(closure(leaves).value)


def nn2i_loss(params: ParamVector, batch, noise: NoiseSpec, weighting: str,
              iteration: int, net_cfg: NetConfig, width: int,
              pixel_size: float = 1.0) -> float:
    """Batch value of sum_t ||W[A f(B(z_t))] - W(2 y_t - z_t)||^2."""
    return _eval_closure(params, nn2i_closure(params, batch, noise, weighting,
                                              iteration, net_cfg, width,
                                              pixel_size))


def nn2n_loss(params: ParamVector, batch, noise: NoiseSpec, iteration: int,
              net_cfg: NetConfig, width: int, pixel_size: float = 1.0) -> float:
    """Batch value of sum_t ||A f(B(z_t)) - y_t||^2."""
    return _eval_closure(params, nn2n_closure(params, batch, noise, iteration,
                                              net_cfg, width, pixel_size))


# ---------------------------------------------------------------------------
# angle-splitting baseline

def _split_subsets(geom: ScanGeometry, k: int) -> List[Tuple[int, ...]]:
    indices = geom.angle_indices
    if len(indices) % k != 0:
        raise ValueError(f"{len(indices)} acquired angles not divisible by "
                         f"{k} splits")
    return [tuple(int(a) for a in indices[j::k]) for j in range(k)]


def _split_fbps(sample: TrainingSample, k: int, width: int,
                pixel_size: float, dtype=np.float64) -> np.ndarray:
    """FBP of each interleaved angle subset, stacked (k, width, width)."""
    geom = sample.y.geometry
    proj = get_projector(width, geom, pixel_size)
    subsets = _split_subsets(geom, k)
    out = []
    for j, sub in enumerate(subsets):
        rows = sample.y.values[j::k].astype(dtype)
        out.append(proj.fbp_values(rows, sub))
    return np.stack(out)


def n2i_train_pair(sample: TrainingSample, splits: int, draw: int, width: int,
                   pixel_size: float = 1.0) -> Tuple[ImageGrid, ImageGrid]:
    """Input/target pair of the X:1 strategy for one held-out split index.

    Input is the mean FBP of the other splits' angles; target is the FBP of
    the held-out split.  Both are reconstruction-domain images.
    """
    if not 0 <= draw < splits:
        raise ValueError("draw index out of range")
    fbps = _split_fbps(sample, splits, width, pixel_size)
    target = fbps[draw]
    inp = (fbps.sum(axis=0) - target) / (splits - 1)
    return (ImageGrid(inp, pixel_size), ImageGrid(target, pixel_size))


def _n2i_closure(inputs: np.ndarray, targets: np.ndarray, net_cfg: NetConfig):
    run = network_closure(net_cfg, inputs)

    def closure(leaves: Dict[str, ad.Node]) -> ad.Node:
        return ad.sum_squares(ad.sub(run(leaves), targets))

    return closure


# ---------------------------------------------------------------------------
# training loop

def train(samples: Sequence[TrainingSample], method: MethodSpec,
          noise: NoiseSpec, net_cfg: NetConfig, width: int, epochs: int,
          lr: float = 5e-5, batch_size: int = 4, seed: int = 0,
          pixel_size: float = 1.0, checkpoint_every: int = 50) -> TrainState:
    """Fit the method's network; returns weights plus checkpoint history.

    One epoch is one pass over the samples in fixed order (no shuffling;
    the per-iteration noise redraw provides the stochasticity).  The batch
    loss is a sum, not a mean.  Checkpoints are stored every
    ``checkpoint_every`` epochs, which must divide ``epochs``.
    """
    if len(samples) == 0:
        raise ValueError("no training samples")
    if epochs < 0:
        raise ValueError("epochs must be >= 0")
    if epochs > 0 and epochs % checkpoint_every != 0:
        raise ValueError(f"checkpoint cadence {checkpoint_every} does not "
                         f"divide {epochs} epochs")
    geom = samples[0].y.geometry
    if method.method == "N2I":
        _split_subsets(geom, method.n2i_splits)  # validate before any work

    params = init_params(net_cfg, seed, dtype=np.float32)
    optim = OptimState.fresh(params.values.size, lr)
    state = TrainState(params=params, optim=optim, epoch=0,
                       checkpoint_log=[], loss_curve=[])
    if epochs == 0:
        state.checkpoint_log.append((0, params))
        return state

    if method.method == "N2I":
        fbp_stacks = [_split_fbps(s, method.n2i_splits, width, pixel_size,
                                  dtype=np.float32) for s in samples]

    start = time.perf_counter()
    iteration = 1
    for epoch in range(1, epochs + 1):
        epoch_loss = 0.0
        for lo in range(0, len(samples), batch_size):
            batch = samples[lo:lo + batch_size]
            if method.method == "NN2I":
                closure = nn2i_closure(state.params, batch, noise,
                                       method.weighting, iteration, net_cfg,
                                       width, pixel_size)
            elif method.method == "NN2N":
                closure = nn2n_closure(state.params, batch, noise, iteration,
                                       net_cfg, width, pixel_size)
            else:
                k = method.n2i_splits
                inputs, targets = [], []
                for pos, s in enumerate(batch, start=lo):
                    stack = fbp_stacks[pos]
                    draw = (epoch + s.sample_id) % k
                    targets.append(stack[draw])
                    inputs.append((stack.sum(axis=0) - stack[draw]) / (k - 1))
                closure = _n2i_closure(np.stack(inputs), np.stack(targets),
                                       net_cfg)
            loss, grad = loss_grad(state.params, closure)
            if not np.isfinite(loss):
                raise FloatingPointError(
                    f"non-finite loss {loss} at epoch {epoch}, iteration "
                    f"{iteration} ({method.label})")
            state.optim, state.params = adam_step(state.optim, state.params,
                                                  grad)
            epoch_loss += loss
            iteration += 1
        state.epoch = epoch
        state.loss_curve.append((epoch, epoch_loss,
                                 time.perf_counter() - start))
        if epoch % checkpoint_every == 0:
            state.checkpoint_log.append((epoch, state.params))
    return state


# ---------------------------------------------------------------------------
# inference and checkpoint selection

def infer(params: ParamVector, method: MethodSpec, y: Sinogram,
          noise: NoiseSpec, net_cfg: NetConfig, width: int,
          pixel_size: float = 1.0,
          stream: Optional[RngStream] = None) -> ImageGrid:
    """Reconstruct one measurement with a trained network.

    z-input variants redraw their extra noise from ``stream`` (deterministic
    per sample when the caller derives it from the sample id).
    """
    geom = y.geometry
    proj = get_projector(width, geom, pixel_size)
    dtype = params.values.dtype

    def net(images: np.ndarray) -> np.ndarray:
        return net_apply_batch(params, images.astype(dtype), net_cfg)

    if method.method == "N2I":
        k = method.n2i_splits
        sample = TrainingSample(sample_id=0, y=y)
        fbps = _split_fbps(sample, k, width, pixel_size, dtype=dtype)
        total = fbps.sum(axis=0)
        inputs = np.stack([(total - fbps[j]) / (k - 1) for j in range(k)])
        return ImageGrid(net(inputs).mean(axis=0).astype(np.float64),
                         pixel_size)

    if method.inference_input == "z":
        if stream is None:
            raise ValueError("z-input inference needs a noise stream")
        eta = sample_correlated_noise(noise, (geom.num_angles,
                                              geom.num_detectors), stream)
        if geom.angle_subset is not None:
            eta = eta[np.asarray(geom.angle_subset, dtype=int)]
        base = y.values + eta
    else:
        base = y.values
    u = proj.fbp_values(base.astype(dtype), geom.angle_subset)
    out = net(u[None])[0]
    if method.method == "NN2N" and method.inference_input == "z":
        if method.literal_extrapolation:
            out = 2.0 * (out - u)
        else:
            out = 2.0 * out - u
    return ImageGrid(out.astype(np.float64), pixel_size)


def eval_stream(noise: NoiseSpec, sample_id: int) -> RngStream:
    """The reserved evaluation-time noise stream for a sample."""
    return RngStream(noise.seed, (sample_id, ITER_EVAL))


def _mean_val_psnr(params: ParamVector, method: MethodSpec,
                   val_samples: Sequence[TrainingSample], noise: NoiseSpec,
                   net_cfg: NetConfig, width: int, pixel_size: float) -> float:
    vals = []
    for s in val_samples:
        recon = infer(params, method, s.y, noise, net_cfg, width, pixel_size,
                      stream=eval_stream(noise, s.sample_id))
        vals.append(psnr(recon, s.x_clean))
    return float(np.mean(vals))


def select_checkpoint(state: TrainState, mode: str,
                      val_samples: Sequence[TrainingSample] = (),
                      method: Optional[MethodSpec] = None,
                      noise: Optional[NoiseSpec] = None,
                      net_cfg: Optional[NetConfig] = None,
                      width: Optional[int] = None,
                      pixel_size: float = 1.0) -> Tuple[int, ParamVector]:
    """Pick weights by stopping rule: final epoch, or best validation PSNR.

    Returns (epoch, params).  Oracle mode scans the checkpoint log and needs
    validation samples that still carry their clean images.
    """
    if mode == "last_epoch":
        return state.epoch, state.params
    if mode != "psnr_oracle":
        raise ValueError(f"unknown stopping mode {mode!r}")
    if not val_samples:
        raise ValueError("psnr_oracle needs validation samples")
    if any(s.x_clean is None for s in val_samples):
        raise ValueError("psnr_oracle needs clean images on validation samples")
    if not state.checkpoint_log:
        raise ValueError("no checkpoints recorded")
    scores = [_mean_val_psnr(params, method, val_samples, noise, net_cfg,
                             width, pixel_size)
              for _, params in state.checkpoint_log]
    best = int(np.argmax(scores))
    return state.checkpoint_log[best]


# ---------------------------------------------------------------------------
# theory checks on linear models

@dataclass(frozen=True)
class Theorem1Report:
    supervised_minimizer: np.ndarray
    surrogate_minimizer: np.ndarray
    distance: float


def _toeplitz_kernel_matrix(m: int, sigma: float, radius: int) -> np.ndarray:
    """1D zero-padded Gaussian convolution as an m x m matrix."""
    prof = np.exp(-np.arange(-radius, radius + 1) ** 2 / (2 * sigma ** 2))
    prof = prof / prof.sum()
    mat = np.zeros((m, m))
    for i in range(m):
        for j in range(m):
            if abs(i - j) <= radius:
                mat[i, j] = prof[i - j + radius]
    return mat


def _lstsq_minimizer(g: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """argmin_F ||G F U - V||_F via pseudo-inverses (regularized if needed)."""
    if (np.linalg.matrix_rank(g) < g.shape[1]
            or np.linalg.matrix_rank(u) < u.shape[0]):
        warnings.warn("rank-deficient normal equations; using pseudo-inverse",
                      RuntimeWarning)
    return np.linalg.pinv(g) @ v @ np.linalg.pinv(u)


def check_theorem1_linear(dim_n: int = 4, dim_m: int = 4, num_mc: int = 10 ** 5,
                          seed: int = 0, weight: Optional[np.ndarray] = None,
                          noise_scale: float = 1.0) -> Theorem1Report:
    """Compare the supervised and surrogate least-squares minimizers.

    On a linear model class f(u) = F u, both empirical objectives
    ``||W A F B(Z) - W A X||^2`` and ``||W A F B(Z) - W (2Y - Z)||^2``
    have closed-form minimizers; their population versions coincide, so the
    empirical minimizers approach each other at the Monte-Carlo rate.  A is a
    random orthogonal matrix (a well-conditioned generic instance) and B its
    transpose; X is white Gaussian; the noises are 1D-correlated Gaussian
    fields of the same distribution.
    """
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0x7431)))
    a = np.linalg.qr(rng.standard_normal((dim_m, dim_n)))[0]
    b_sharp = a.T
    w = np.eye(dim_m) if weight is None else np.asarray(weight, dtype=np.float64)
    if w.shape[-1] != dim_m:
        raise ValueError("weight matrix must act on measurement vectors")
    mix = _toeplitz_kernel_matrix(dim_m, sigma=1.0, radius=3)

    x = rng.standard_normal((dim_n, num_mc))
    xi = noise_scale * (mix @ rng.standard_normal((dim_m, num_mc)))
    eta = noise_scale * (mix @ rng.standard_normal((dim_m, num_mc)))
    ax = a @ x
    y = ax + xi
    z = y + eta

    g = w @ a
    u = b_sharp @ z
    f_sup = _lstsq_minimizer(g, u, w @ ax)
    f_sur = _lstsq_minimizer(g, u, w @ (2.0 * y - z))
    dist = float(np.linalg.norm(f_sup - f_sur, 2))
    return Theorem1Report(supervised_minimizer=f_sup,
                          surrogate_minimizer=f_sur, distance=dist)


@dataclass(frozen=True)
class ConditionalIdentityReport:
    binned_residual: float
    max_unconditional_zscore: float
    field_std: float
    bin_counts: np.ndarray
    num_draws: int


def check_conditional_identity(noise: NoiseSpec, num_mc: int = 10 ** 5,
                               seed: int = 0, width: int = 8,
                               num_angles: int = 6, num_bins: int = 10,
                               chunk: int = 50_000) -> ConditionalIdentityReport:
    """Monte-Carlo check that AX - (2Y - Z) has conditional mean zero.

    Draws (X, Xi, Eta) on a tiny scan geometry, forms Y = AX + Xi and
    Z = Y + Eta, and bins the residual field AX - (2Y - Z) by the value of
    the central sinogram pixel of Z.  Reports the largest binned mean,
    normalized by the residual field's standard deviation, plus the
    unconditional per-pixel z-scores.  Deterministic for a fixed seed; two
    passes redraw identical chunks (pass one fixes the bin edges).
    """
    geom = ScanGeometry.for_image(width, num_angles)
    proj = get_projector(width, geom)
    a = proj.matrix.toarray()
    m = geom.num_angles * geom.num_detectors
    n = width * width
    cmat = convolution_matrix_2d(noise.kernel(),
                                 (geom.num_angles, geom.num_detectors))
    pix = (geom.num_angles // 2) * geom.num_detectors + geom.num_detectors // 2

    def draw(c: int, count: int):
        rx = np.random.default_rng(np.random.SeedSequence((seed, c, 0)))
        rxi = np.random.default_rng(np.random.SeedSequence((seed, c, 1)))
        reta = np.random.default_rng(np.random.SeedSequence((seed, c, 2)))
        x = rx.standard_normal((count, n))
        xi = noise.delta * rxi.standard_normal((count, m)) @ cmat.T
        eta = noise.delta * reta.standard_normal((count, m)) @ cmat.T
        ax = x @ a.T
        y = ax + xi
        z = y + eta
        return ax - (2.0 * y - z), z[:, pix]

    chunks = [(c, min(chunk, num_mc - c * chunk))
              for c in range((num_mc + chunk - 1) // chunk)]

    z_pix = np.empty(num_mc)
    total = np.zeros(m)
    total_sq = np.zeros(m)
    offset = 0
    for c, count in chunks:
        field, zp = draw(c, count)
        z_pix[offset:offset + count] = zp
        total += field.sum(axis=0)
        total_sq += (field ** 2).sum(axis=0)
        offset += count

    mean = total / num_mc
    var = np.maximum(total_sq / num_mc - mean ** 2, 0.0)
    se = np.sqrt(var / num_mc)
    with np.errstate(divide="ignore", invalid="ignore"):
        z_scores = np.where(se > 0, np.abs(mean) / se, 0.0)
    field_std = float(np.sqrt(var.mean()))

    edges = np.quantile(z_pix, np.linspace(0.0, 1.0, num_bins + 1))
    bin_sums = np.zeros((num_bins, m))
    bin_counts = np.zeros(num_bins, dtype=np.int64)
    for c, count in chunks:
        field, zp = draw(c, count)
        bins = np.clip(np.digitize(zp, edges[1:-1]), 0, num_bins - 1)
        for b in range(num_bins):
            sel = bins == b
            if sel.any():
                bin_sums[b] += field[sel].sum(axis=0)
                bin_counts[b] += int(sel.sum())

    residual = 0.0
    for b in range(num_bins):
        if bin_counts[b] == 0:
            warnings.warn(f"empty conditioning bin {b}; skipped", RuntimeWarning)
            continue
        if field_std == 0.0:
            continue
        residual = max(residual,
                       float(np.max(np.abs(bin_sums[b] / bin_counts[b]))
                             / field_std))
    return ConditionalIdentityReport(binned_residual=residual,
                                     max_unconditional_zscore=float(z_scores.max()),
                                     field_std=field_std,
                                     bin_counts=bin_counts,
                                     num_draws=num_mc)
