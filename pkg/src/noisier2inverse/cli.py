"""Command-line entry point.

Subcommands:
    synthesize    generate/load the dataset and dump noisy sinograms
    train         train the configured method (checkpoints + loss curve)
    infer         dump test reconstructions from a trained run
    evaluate      compute test metrics for a trained run
    compare       run several methods on identical data, one combined CSV
    sweep         evaluate a trained run across noise bandwidths
    theory-check  run the linear-model and conditional-mean checks

All experiment subcommands take --config <json> plus field overrides.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from . import config as config_mod
from . import harness
from .dataio import save_pfm, save_png, write_csv
from .methods import (check_conditional_identity, check_theorem1_linear,
                      parse_method_label)
from .noise import NoiseSpec


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="experiment config JSON")
    p.add_argument("--sigma", type=float, help="override noise bandwidth")
    p.add_argument("--delta", type=float, help="override noise level")
    p.add_argument("--angles", type=int, help="override projection count")
    p.add_argument("--epochs", type=int, help="override training epochs")
    p.add_argument("--seed", type=int, help="override experiment seed")
    p.add_argument("--method", type=str,
                   help="override method label, e.g. NN2Is[y], NN2N[z], N2I")
    p.add_argument("--stopping", type=str,
                   choices=("last_epoch", "psnr_oracle", "both"),
                   help="override stopping rule")
    p.add_argument("--out", type=Path, help="override output directory")


def _load_cfg(args) -> config_mod.ExperimentConfig:
    cfg = (config_mod.load_config(args.config) if args.config
           else config_mod.ExperimentConfig())
    updates = {}
    if args.sigma is not None:
        updates["noise"] = dataclasses.replace(cfg.noise, sigma=args.sigma)
    if args.delta is not None:
        noise = updates.get("noise", cfg.noise)
        updates["noise"] = dataclasses.replace(noise, delta=args.delta)
    if args.angles is not None:
        updates["num_angles"] = args.angles
    if args.epochs is not None:
        updates["epochs"] = args.epochs
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.method is not None:
        updates["method"] = parse_method_label(args.method)
    if args.stopping is not None:
        updates["stopping"] = args.stopping
    if args.out is not None:
        updates["output_dir"] = str(args.out)
    cfg = dataclasses.replace(cfg, **updates)
    config_mod.validate(cfg)
    return cfg


def _cmd_synthesize(args) -> int:
    cfg = _load_cfg(args)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    images = harness.get_dataset(cfg)
    samples = harness.synthesize(images, cfg.geometry(), cfg.noise_spec())
    train_s, val_s, test_s = config_mod.split_dataset(samples, cfg.split)
    roles = {s.sample_id: role
             for role, part in (("train", train_s), ("val", val_s),
                                ("test", test_s))
             for s in part}
    for s in samples:
        save_pfm(out / f"sinogram_{s.sample_id:03d}.pfm", s.y.values)
        save_pfm(out / f"clean_{s.sample_id:03d}.pfm", s.x_clean.values)
    manifest = {"run_id": cfg.run_id(), "config": config_mod.to_dict(cfg),
                "samples": [{"sample_id": s.sample_id,
                             "role": roles[s.sample_id]} for s in samples]}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2,
                                                  sort_keys=True) + "\n")
    print(f"wrote {len(samples)} sinogram/clean pairs to {out}")
    return 0


def _cmd_train(args) -> int:
    cfg = _load_cfg(args)
    record = harness.run_experiment(cfg, evaluate=False)
    print(f"trained {cfg.method.label}: {record.checkpoint_epochs[-1]} epochs, "
          f"{record.wall_seconds:.1f}s, outputs in {cfg.output_dir}")
    return 0


def _cmd_infer(args) -> int:
    written = harness.infer_run(args.run, _modes(args))
    print(f"wrote {len(written)} reconstructions to {args.run}")
    return 0


def _cmd_evaluate(args) -> int:
    metrics = harness.evaluate_run(args.run, _modes(args))
    for mode, by_variant in sorted(metrics.items()):
        for variant, m in sorted(by_variant.items()):
            print(f"{mode:12s} [{variant}]  psnr {m['psnr_mean']:.2f}"
                  f" +- {m['psnr_std']:.2f}   ssim {m['ssim_mean']:.4f}")
    return 0


def _modes(args):
    return None if args.stopping in (None, "both") else (args.stopping,)


def _cmd_compare(args) -> int:
    cfg = _load_cfg(args)
    if args.methods == "all":
        specs = harness.default_method_specs()
    else:
        specs = [parse_method_label(s) for s in args.methods.split(",")]
    records = harness.compare_methods(cfg, specs, workers=args.workers)
    print(f"compared {len(records)} trained models; combined metrics in "
          f"{Path(cfg.output_dir) / 'metrics.csv'}")
    return 0


def _cmd_sweep(args) -> int:
    sigmas = [float(s) for s in args.sigmas.split(",")]
    stopping = args.stopping or "last_epoch"
    if stopping == "both":
        stopping = "last_epoch"
    rows = harness.robustness_sweep(args.run, sigmas, stopping=stopping)
    for r in rows:
        print(f"sigma {r['sigma']:4.1f}  psnr {r['psnr_mean']:.2f}"
              f" +- {r['psnr_std']:.2f}   ssim {r['ssim_mean']:.4f}")
    return 0


def _cmd_theory_check(args) -> int:
    report = check_theorem1_linear(num_mc=args.num_mc, seed=args.seed or 0)
    noise = NoiseSpec(delta=1.0, sigma=2.0, seed=args.seed or 0)
    cond = check_conditional_identity(noise, num_mc=args.num_mc,
                                      seed=args.seed or 0)
    print(f"linear-model minimizer distance: {report.distance:.3e}")
    print(f"conditional-mean binned residual: {cond.binned_residual:.3e}"
          f"  (max |z|: {cond.max_unconditional_zscore:.2f})")
    if args.out:
        payload = {"minimizer_distance": report.distance,
                   "binned_residual": cond.binned_residual,
                   "max_unconditional_zscore": cond.max_unconditional_zscore,
                   "num_mc": args.num_mc}
        Path(args.out).write_text(json.dumps(payload, indent=2) + "\n")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="n2i",
        description="Self-supervised CT reconstruction under correlated noise")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, fn in (("synthesize", _cmd_synthesize), ("train", _cmd_train),
                     ("compare", _cmd_compare)):
        p = sub.add_parser(name)
        _add_common(p)
        if name == "compare":
            p.add_argument("--methods", default="all",
                           help='comma-separated labels or "all"')
            p.add_argument("--workers", type=int,
                           help="parallel runs (default: N2I_THREADS or 4)")
        p.set_defaults(fn=fn)

    for name, fn in (("infer", _cmd_infer), ("evaluate", _cmd_evaluate)):
        p = sub.add_parser(name)
        p.add_argument("--run", type=Path, required=True,
                       help="trained run directory")
        p.add_argument("--stopping", type=str,
                       choices=("last_epoch", "psnr_oracle", "both"))
        p.set_defaults(fn=fn)

    p = sub.add_parser("sweep")
    p.add_argument("--run", type=Path, required=True)
    p.add_argument("--sigmas", type=str, default="1,2,3,4,5,6")
    p.add_argument("--stopping", type=str,
                   choices=("last_epoch", "psnr_oracle", "both"))
    p.set_defaults(fn=_cmd_sweep)

    p = sub.add_parser("theory-check")
    p.add_argument("--num-mc", type=int, default=10 ** 5)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", type=Path)
    p.set_defaults(fn=_cmd_theory_check)

    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, FileNotFoundError, harness.StageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
