"""End-to-end experiment orchestration.

One experiment = ingest (or generate) clean images, synthesize fixed noisy
measurements, train the configured method, select checkpoints per stopping
rule, evaluate every inference variant on the test split, and persist a fully
reproducible record: every emitted number is re-derivable from (config, seed).

Outputs per run directory:
    run_record.json   structured summary (config snapshot, curves, metrics)
    metrics.csv       long format: run_id, method, stopping, inference,
                      sample_id, psnr, ssim
    loss_curve.csv    epoch, loss, wall_seconds
    params_<stopping>.ckpt            selected weights per stopping rule
    recon_<stopping>_<inference>_<id>.pfm/.png   test reconstructions
"""

from __future__ import annotations

import dataclasses
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .config import (ExperimentConfig, load_config, save_config,
                     split_dataset, to_dict, validate)
from .dataio import ingest_dataset, save_pfm, save_png, write_csv
from .geometry import ImageGrid, ScanGeometry, Sinogram
from .metrics import psnr, ssim
from .methods import (MethodSpec, TrainState, TrainingSample, eval_stream,
                      infer, select_checkpoint, train)
from .network import load_params, save_params
from .noise import NoiseSpec, noise_for_geometry
from .phantoms import phantom_set
from .tomo import radon_forward

_LIMITER = None


def _limit_blas_threads():
    """Best-effort cap on BLAS threads inside worker processes."""
    global _LIMITER
    try:
        from threadpoolctl import threadpool_limits
        _LIMITER = threadpool_limits(limits=1)
    except Exception:
        pass


class StageError(RuntimeError):
    """An experiment stage failed; .stage names it."""

    def __init__(self, stage: str, original: Exception):
        super().__init__(f"stage {stage!r} failed: {original}")
        self.stage = stage


@dataclass
class RunRecord:
    run_id: str
    config: dict
    loss_curve: List[Tuple[int, float, float]]
    checkpoint_epochs: List[int]
    selected_epochs: Dict[str, int]
    metrics: Dict[str, Dict[str, dict]]
    wall_seconds: float
    error: Optional[str] = None

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def get_dataset(cfg: ExperimentConfig) -> List[ImageGrid]:
    if cfg.dataset.kind == "builtin":
        return phantom_set(cfg.dataset.count, cfg.image_size, cfg.dataset.seed)
    return ingest_dataset(cfg.dataset.path, cfg.image_size)


def synthesize(images: Sequence[ImageGrid], geom: ScanGeometry,
               noise: NoiseSpec, start_id: int = 0) -> List[TrainingSample]:
    """Fixed noisy measurements y_t = A x_t + xi_t, one stream per sample."""
    samples = []
    for i, image in enumerate(images):
        t = start_id + i
        clean = radon_forward(image, geom)
        xi = noise_for_geometry(noise, geom, t, 0)
        y = Sinogram(geometry=geom, values=clean.values + xi)
        samples.append(TrainingSample(sample_id=t, y=y, x_clean=image))
    return samples


def _inference_variants(method: MethodSpec) -> Tuple[str, ...]:
    return ("avg",) if method.method == "N2I" else ("y", "z")


def _infer_variant(params, method: MethodSpec, sample: TrainingSample,
                   noise: NoiseSpec, cfg: ExperimentConfig, variant: str):
    spec = method if variant == "avg" else replace(method,
                                                   inference_input=variant)
    return infer(params, spec, sample.y, noise, cfg.net, cfg.image_size,
                 stream=eval_stream(noise, sample.sample_id))


def _evaluate(params, method: MethodSpec, samples, noise: NoiseSpec,
              cfg: ExperimentConfig, variant: str) -> dict:
    psnrs, ssims, ids, recons = [], [], [], []
    for s in samples:
        recon = _infer_variant(params, method, s, noise, cfg, variant)
        psnrs.append(psnr(recon, s.x_clean))
        ssims.append(ssim(recon, s.x_clean))
        ids.append(s.sample_id)
        recons.append(recon)
    return {"sample_ids": ids, "psnr": [float(v) for v in psnrs],
            "ssim": [float(v) for v in ssims],
            "psnr_mean": float(np.mean(psnrs)), "ssim_mean": float(np.mean(ssims)),
            "psnr_std": float(np.std(psnrs)), "ssim_std": float(np.std(ssims)),
            "_recons": recons}


def _metrics_rows(record: RunRecord, family: str) -> List[tuple]:
    rows = []
    for stopping, by_variant in sorted(record.metrics.items()):
        for variant, m in sorted(by_variant.items()):
            for sid, p, s in zip(m["sample_ids"], m["psnr"], m["ssim"]):
                rows.append((record.run_id, family, stopping, variant,
                             sid, p, s))
    return rows


METRICS_HEADER = ("run_id", "method", "stopping", "inference", "sample_id",
                  "psnr", "ssim")


def _persist(out: Path, cfg: ExperimentConfig, record: RunRecord,
             selected: Dict[str, tuple],
             recon_dumps: Dict[tuple, ImageGrid]) -> None:
    out.mkdir(parents=True, exist_ok=True)
    save_config(out / "config.json", cfg)
    (out / "run_record.json").write_text(
        json.dumps(record.to_dict(), indent=2, sort_keys=True) + "\n")
    if record.loss_curve:
        write_csv(out / "loss_curve.csv", ("epoch", "loss", "wall_seconds"),
                  record.loss_curve)
    if record.metrics:
        write_csv(out / "metrics.csv", METRICS_HEADER,
                  _metrics_rows(record, cfg.method.family))
    for stopping, (epoch, params) in selected.items():
        save_params(out / f"params_{stopping}.ckpt", params, cfg.net)
    for (stopping, variant, sid), recon in recon_dumps.items():
        stem = f"recon_{stopping}_{variant}_{sid:03d}"
        save_pfm(out / f"{stem}.pfm", recon.values)
        save_png(out / f"{stem}.png", recon.values)


def run_experiment(cfg: ExperimentConfig, keep_recons: bool = True,
                   evaluate: bool = True) -> RunRecord:
    """Execute one full experiment; see module docstring for outputs.

    ``evaluate=False`` stops after checkpoint selection (training-only run);
    metrics can be filled in later with evaluate_run.
    """
    t0 = time.perf_counter()
    record = RunRecord(run_id=cfg.run_id(), config=to_dict(cfg),
                       loss_curve=[], checkpoint_epochs=[],
                       selected_epochs={}, metrics={}, wall_seconds=0.0)
    out = Path(cfg.output_dir)
    selected: Dict[str, tuple] = {}
    recon_dumps: Dict[tuple, ImageGrid] = {}
    state: Optional[TrainState] = None
    stage = "validate"
    try:
        validate(cfg)

        stage = "ingest"
        images = get_dataset(cfg)

        stage = "synthesize"
        geom = cfg.geometry()
        noise = cfg.noise_spec()
        samples = synthesize(images, geom, noise)
        train_s, val_s, test_s = split_dataset(samples, cfg.split)

        stage = "train"
        state = train(train_s, cfg.method, noise, cfg.net, cfg.image_size,
                      cfg.epochs, lr=cfg.lr, batch_size=cfg.batch_size,
                      seed=cfg.seed, checkpoint_every=cfg.checkpoint_every)
        record.loss_curve = list(state.loss_curve)
        record.checkpoint_epochs = [e for e, _ in state.checkpoint_log]

        stage = "select"
        for mode in cfg.stopping_modes():
            epoch, params = select_checkpoint(
                state, mode, val_samples=val_s, method=cfg.method,
                noise=noise, net_cfg=cfg.net, width=cfg.image_size)
            selected[mode] = (epoch, params)
            record.selected_epochs[mode] = epoch

        if evaluate:
            stage = "evaluate"
            for mode, (epoch, params) in selected.items():
                record.metrics[mode] = {}
                for variant in _inference_variants(cfg.method):
                    result = _evaluate(params, cfg.method, test_s, noise, cfg,
                                       variant)
                    recons = result.pop("_recons")
                    record.metrics[mode][variant] = result
                    if keep_recons:
                        for s, recon in zip(test_s, recons):
                            recon_dumps[(mode, variant, s.sample_id)] = recon

        stage = "persist"
        record.wall_seconds = time.perf_counter() - t0
        _persist(out, cfg, record, selected, recon_dumps)
    except Exception as exc:
        record.error = f"{stage}: {exc}"
        record.wall_seconds = time.perf_counter() - t0
        try:
            _persist(out, cfg, record, selected, recon_dumps)
        except Exception:
            pass
        raise StageError(stage, exc) from exc
    return record


def _load_run(run_dir, stopping_modes: Optional[Sequence[str]] = None):
    """Shared loader: config, per-stopping params, and rebuilt test samples."""
    run_dir = Path(run_dir)
    cfg = load_config(run_dir / "config.json")
    if stopping_modes is None:
        stopping_modes = cfg.stopping_modes()
    loaded = {}
    for mode in stopping_modes:
        ckpt = run_dir / f"params_{mode}.ckpt"
        if not ckpt.exists():
            raise FileNotFoundError(f"no checkpoint for stopping {mode!r} "
                                    f"in {run_dir}")
        params, net_cfg = load_params(ckpt)
        if net_cfg != cfg.net:
            raise ValueError("checkpoint architecture disagrees with config")
        loaded[mode] = params
    images = get_dataset(cfg)
    noise = cfg.noise_spec()
    samples = synthesize(images, cfg.geometry(), noise)
    _, _, test_s = split_dataset(samples, cfg.split)
    return run_dir, cfg, noise, loaded, test_s


def evaluate_run(run_dir, stopping_modes: Optional[Sequence[str]] = None) -> dict:
    """Compute test metrics for an already-trained run directory."""
    run_dir, cfg, noise, loaded, test_s = _load_run(run_dir, stopping_modes)
    metrics: Dict[str, Dict[str, dict]] = {}
    for mode, params in loaded.items():
        metrics[mode] = {}
        for variant in _inference_variants(cfg.method):
            result = _evaluate(params, cfg.method, test_s, noise, cfg, variant)
            result.pop("_recons")
            metrics[mode][variant] = result
    record_path = run_dir / "run_record.json"
    record = RunRecord(**_strip(json.loads(record_path.read_text()))) \
        if record_path.exists() else RunRecord(
            run_id=cfg.run_id(), config=to_dict(cfg), loss_curve=[],
            checkpoint_epochs=[], selected_epochs={}, metrics={},
            wall_seconds=0.0)
    record.metrics = metrics
    record_path.write_text(json.dumps(record.to_dict(), indent=2,
                                      sort_keys=True) + "\n")
    write_csv(run_dir / "metrics.csv", METRICS_HEADER,
              _metrics_rows(record, cfg.method.family))
    return metrics


def infer_run(run_dir, stopping_modes: Optional[Sequence[str]] = None) -> List[Path]:
    """Dump test reconstructions for an already-trained run directory."""
    run_dir, cfg, noise, loaded, test_s = _load_run(run_dir, stopping_modes)
    written = []
    for mode, params in loaded.items():
        for variant in _inference_variants(cfg.method):
            for s in test_s:
                recon = _infer_variant(params, cfg.method, s, noise, cfg,
                                       variant)
                stem = f"recon_{mode}_{variant}_{s.sample_id:03d}"
                save_pfm(run_dir / f"{stem}.pfm", recon.values)
                save_png(run_dir / f"{stem}.png", recon.values)
                written.append(run_dir / f"{stem}.pfm")
    return written


# ---------------------------------------------------------------------------
# robustness sweep

def robustness_sweep(run_dir, sigma_list: Sequence[float],
                     stopping: str = "last_epoch") -> List[dict]:
    """Evaluate a trained run on test noise with different bandwidths.

    The measurement streams are unchanged, so the entry at the training
    bandwidth reproduces the run's own test metrics exactly.
    """
    run_dir = Path(run_dir)
    cfg = load_config(run_dir / "config.json")
    ckpt = run_dir / f"params_{stopping}.ckpt"
    if not ckpt.exists():
        raise FileNotFoundError(f"no checkpoint for stopping {stopping!r} "
                                f"in {run_dir}")
    params, net_cfg = load_params(ckpt)
    if net_cfg != cfg.net:
        raise ValueError("checkpoint architecture disagrees with config")

    images = get_dataset(cfg)
    geom = cfg.geometry()
    base_noise = cfg.noise_spec()
    n = len(images)
    split = cfg.split
    n_val = int(round(split.val * n))
    n_test = int(round(split.test * n))
    first_test = n - n_test

    rows = []
    for sigma in sigma_list:
        noise = NoiseSpec(delta=base_noise.delta, sigma=float(sigma),
                          kernel_radius=cfg.noise.kernel_radius,
                          seed=base_noise.seed)
        test_s = synthesize(images[first_test:], geom, noise,
                            start_id=first_test)
        variant = ("avg" if cfg.method.method == "N2I"
                   else cfg.method.inference_input)
        result = _evaluate(params, cfg.method, test_s, noise, cfg, variant)
        result.pop("_recons")
        rows.append({"sigma": float(sigma), "psnr_mean": result["psnr_mean"],
                     "psnr_std": result["psnr_std"],
                     "ssim_mean": result["ssim_mean"],
                     "ssim_std": result["ssim_std"],
                     "n": len(result["sample_ids"])})
    write_csv(run_dir / "sweep.csv",
              ("sigma", "psnr_mean", "psnr_std", "ssim_mean", "ssim_std", "n"),
              [(r["sigma"], r["psnr_mean"], r["psnr_std"], r["ssim_mean"],
                r["ssim_std"], r["n"]) for r in rows])
    return rows


# ---------------------------------------------------------------------------
# method comparison

def default_method_specs() -> List[MethodSpec]:
    """The seven standard variants."""
    return [
        MethodSpec(method="NN2I", weighting="gradient", inference_input="y"),
        MethodSpec(method="NN2I", weighting="gradient", inference_input="z"),
        MethodSpec(method="NN2I", weighting="identity", inference_input="y"),
        MethodSpec(method="NN2I", weighting="identity", inference_input="z"),
        MethodSpec(method="NN2N", inference_input="y"),
        MethodSpec(method="NN2N", inference_input="z"),
        MethodSpec(method="N2I"),
    ]


def _compare_worker(cfg_dict: dict) -> dict:
    from .config import from_dict
    cfg = from_dict(cfg_dict)
    return run_experiment(cfg).to_dict()


def resolve_workers(requested: Optional[int], n_tasks: int) -> int:
    if requested is None:
        env = os.environ.get("N2I_THREADS", "")
        requested = int(env) if env.isdigit() and int(env) > 0 else None
    if requested is None:
        requested = min(4, os.cpu_count() or 1)
    return max(1, min(requested, n_tasks))


def compare_methods(cfg_base: ExperimentConfig, methods: Sequence[MethodSpec],
                    workers: Optional[int] = None) -> List[RunRecord]:
    """Run several methods on bitwise-identical data; emit one long CSV.

    Training variants that share weights (same method/weighting, different
    inference input) are deduplicated into a single run, since every run
    already evaluates all of its inference variants.
    """
    seen = set()
    train_specs: List[MethodSpec] = []
    for m in methods:
        key = (m.method, m.weighting, m.n2i_splits, m.literal_extrapolation)
        if key not in seen:
            seen.add(key)
            train_specs.append(m)

    base_out = Path(cfg_base.output_dir)
    cfgs = [replace(cfg_base, method=m,
                    output_dir=str(base_out / m.family))
            for m in train_specs]
    for cfg in cfgs:
        validate(cfg)

    n_workers = resolve_workers(workers, len(cfgs))
    if n_workers == 1:
        records = [run_experiment(cfg) for cfg in cfgs]
    else:
        with ProcessPoolExecutor(max_workers=n_workers,
                                 initializer=_limit_blas_threads) as pool:
            futures = [pool.submit(_compare_worker, to_dict(cfg))
                       for cfg in cfgs]
            records = [RunRecord(**_strip(f.result())) for f in futures]

    rows = []
    for cfg, record in zip(cfgs, records):
        rows.extend(_metrics_rows(record, cfg.method.family))
    base_out.mkdir(parents=True, exist_ok=True)
    write_csv(base_out / "metrics.csv", METRICS_HEADER, rows)
    return records


def _strip(record_dict: dict) -> dict:
    allowed = {f.name for f in dataclasses.fields(RunRecord)}
    return {k: v for k, v in record_dict.items() if k in allowed}
