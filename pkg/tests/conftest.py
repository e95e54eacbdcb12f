"""Shared fixtures: the trained-method comparison grids.

The ordering, inference-variant, stopping-gap and reproducibility checks in
test_acceptance.py all read from the same two grids of experiment runs (full
angles and sparse angles), so those runs are trained once per session here.

The profile below is the desk-scale acceptance configuration.  Its noise
level is calibrated so the measurement noise dominates the reconstruction
error budget (see the FBP baselines in test_acceptance.py), and the epoch
budget is long enough that training a network against a fixed noisy target
visibly overfits while resampled-noise training does not.
"""
import time
from dataclasses import replace

import pytest

from noisier2inverse.config import (
    DatasetConfig,
    ExperimentConfig,
    NoiseConfig,
)
from noisier2inverse.harness import run_experiment
from noisier2inverse.methods import MethodSpec
from noisier2inverse.network import NetConfig

# Desk-scale acceptance profile: 24 built-in phantoms split 16/4/4, 64x64
# images, 128 angles.  delta is the white-noise amplitude before kernel
# smoothing; sigma the smoothing kernel width in detector bins.
ACCEPT_WIDTH = 64
ACCEPT_ANGLES = 128
ACCEPT_COUNT = 24
ACCEPT_DELTA = 20.0
ACCEPT_SIGMA = 2.0
ACCEPT_EPOCHS = 1000
ACCEPT_LR = 1e-3
ACCEPT_CADENCE = 50
ACCEPT_SEEDS = (0, 1, 2)
SPARSE_ANGLES = 32
# Stopping rule under which the method-ordering and inference-variant
# comparisons are read: each model at its validation-selected checkpoint
# (models are compared at their best, and the stopping-gap test separately
# bounds how far the final epoch sits below that selection).
ACCEPT_STOPPING = "psnr_oracle"
# Trained-grid wall-clock budgets, normalized to this host: the target is
# 30 min on 4 CPU cores, i.e. 120 core-minutes, and this box has one core.
GRID_BUDGET_SECONDS = 120 * 60


def acceptance_config(output_dir, method: MethodSpec, seed: int,
                      sparse: bool = False) -> ExperimentConfig:
    return ExperimentConfig(
        dataset=DatasetConfig(kind="builtin", count=ACCEPT_COUNT, seed=0),
        image_size=ACCEPT_WIDTH,
        num_angles=ACCEPT_ANGLES,
        sparse_angles=SPARSE_ANGLES if sparse else None,
        noise=NoiseConfig(delta=ACCEPT_DELTA, sigma=ACCEPT_SIGMA),
        method=method,
        net=NetConfig(),
        epochs=ACCEPT_EPOCHS,
        lr=ACCEPT_LR,
        batch_size=4,
        seed=seed,
        stopping="both",
        checkpoint_every=ACCEPT_CADENCE,
        output_dir=str(output_dir),
    )


def _train_grid(root, methods, sparse):
    records = {}
    t0 = time.perf_counter()
    for method in methods:
        for seed in ACCEPT_SEEDS:
            out = root / f"{method.family}_seed{seed}"
            cfg = acceptance_config(out, method, seed, sparse=sparse)
            records[(method.family, seed)] = (cfg, run_experiment(cfg))
    return records, time.perf_counter() - t0


@pytest.fixture(scope="session")
def full_data_runs(tmp_path_factory):
    """3 methods x 3 seeds on the full angle grid: (cfg, record) per cell."""
    root = tmp_path_factory.mktemp("accept_full")
    return _train_grid(root, (MethodSpec("NN2I"), MethodSpec("NN2N"),
                              MethodSpec("N2I")), sparse=False)


@pytest.fixture(scope="session")
def sparse_data_runs(tmp_path_factory):
    """2 methods x 3 seeds on the sparse angle subset."""
    root = tmp_path_factory.mktemp("accept_sparse")
    return _train_grid(root, (MethodSpec("NN2I"), MethodSpec("NN2N")),
                       sparse=True)
