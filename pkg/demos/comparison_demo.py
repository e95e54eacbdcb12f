"""Train three self-supervised methods on identical data and compare.

The doubled-noise method (NN2I), the fixed-target baseline (NN2N), and the
angle-splitting baseline (N2I) share the same phantoms, measurement noise,
and training budget; the combined long-format metrics.csv is what the
larger experiment grids build on.  Takes a few minutes on one CPU core.
"""
import csv
import pathlib
from collections import defaultdict

import numpy as np

from noisier2inverse.config import (DatasetConfig, ExperimentConfig,
                                    NoiseConfig)
from noisier2inverse.harness import compare_methods
from noisier2inverse.methods import parse_method_label

OUT = pathlib.Path(__file__).parent / "out" / "comparison"

cfg = ExperimentConfig(
    dataset=DatasetConfig(kind="builtin", count=12, seed=0),
    image_size=32,
    num_angles=64,
    noise=NoiseConfig(delta=12.0, sigma=2.0),
    epochs=300,
    lr=3e-4,
    batch_size=4,
    seed=0,
    stopping="both",
    checkpoint_every=50,
    output_dir=str(OUT),
)

specs = [parse_method_label(s) for s in ("NN2I[y]", "NN2N[y]", "N2I")]
print("training", ", ".join(s.label for s in specs), "on identical data")
records = compare_methods(cfg, specs, workers=1)
print(f"trained {len(records)} models\n")

table = defaultdict(list)
with open(OUT / "metrics.csv", newline="") as fh:
    for row in csv.DictReader(fh):
        table[(row["method"], row["stopping"], row["inference"])].append(
            float(row["psnr"]))

print(f"{'model':8s} {'stopping':13s} {'inference':9s} {'psnr':>7s}")
for (method, stopping, inference), vals in sorted(table.items()):
    print(f"{method:8s} {stopping:13s} {inference:9s} "
          f"{np.mean(vals):7.2f}")
print(f"\ncombined table: {OUT / 'metrics.csv'}")
print(f"per-method runs: {[p.name for p in sorted(OUT.iterdir()) if p.is_dir()]}")
