"""Experiment configuration: one strict, round-trippable JSON tree.

Unknown keys are errors (catches typos before a long run); missing keys take
defaults.  ``to_dict``/``from_dict`` round-trip losslessly.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple

from .geometry import ImageGrid, ScanGeometry
from .methods import MethodSpec
from .network import NetConfig
from .noise import NoiseSpec


@dataclass(frozen=True)
class DatasetConfig:
    kind: str = "builtin"          # "builtin" or "directory"
    count: int = 24                # builtin: number of generated phantoms
    seed: int = 0                  # builtin: generator seed (fixed per dataset)
    path: Optional[str] = None     # directory: image folder


@dataclass(frozen=True)
class SplitConfig:
    train: float = 0.7
    val: float = 0.15
    test: float = 0.15


@dataclass(frozen=True)
class NoiseConfig:
    delta: float = 1.0
    sigma: float = 2.0
    kernel_radius: int = 0         # 0 = ceil(3*sigma)
    seed: Optional[int] = None     # None = inherit the experiment seed


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    split: SplitConfig = field(default_factory=SplitConfig)
    image_size: int = 64
    num_angles: int = 128
    sparse_angles: Optional[int] = None
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    method: MethodSpec = field(default_factory=MethodSpec)
    net: NetConfig = field(default_factory=NetConfig)
    epochs: int = 300
    lr: float = 5e-5
    batch_size: int = 4
    seed: int = 0
    stopping: str = "both"         # last_epoch | psnr_oracle | both
    checkpoint_every: int = 50
    output_dir: str = "runs/run"

    def stopping_modes(self) -> Tuple[str, ...]:
        if self.stopping == "both":
            return ("last_epoch", "psnr_oracle")
        return (self.stopping,)

    def geometry(self) -> ScanGeometry:
        subset = None
        if self.sparse_angles is not None:
            step = self.num_angles // self.sparse_angles
            subset = tuple(range(0, self.num_angles, step))
        return ScanGeometry.for_image(self.image_size, self.num_angles,
                                      angle_subset=subset)

    def noise_spec(self) -> NoiseSpec:
        seed = self.noise.seed if self.noise.seed is not None else self.seed
        return NoiseSpec(delta=self.noise.delta, sigma=self.noise.sigma,
                         kernel_radius=self.noise.kernel_radius, seed=seed)

    def run_id(self) -> str:
        """Hash of everything that influences the numbers.

        The output directory is excluded so the same experiment written to
        two locations carries the same identity.
        """
        payload = to_dict(self)
        payload.pop("output_dir", None)
        blob = json.dumps(payload, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]


def validate(cfg: ExperimentConfig) -> None:
    """Reject inconsistent configurations before any work starts."""
    if cfg.dataset.kind not in ("builtin", "directory"):
        raise ValueError(f"unknown dataset kind {cfg.dataset.kind!r}")
    if cfg.dataset.kind == "directory" and not cfg.dataset.path:
        raise ValueError("directory dataset needs a path")
    if cfg.dataset.kind == "builtin" and cfg.dataset.count < 3:
        raise ValueError("builtin dataset needs at least 3 phantoms")
    total = cfg.split.train + cfg.split.val + cfg.split.test
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"split fractions sum to {total}, expected 1")
    if cfg.image_size % (2 ** cfg.net.depth) != 0:
        raise ValueError(f"image_size {cfg.image_size} must be divisible by "
                         f"2^depth = {2 ** cfg.net.depth}")
    if cfg.num_angles < 1:
        raise ValueError("num_angles must be >= 1")
    if cfg.sparse_angles is not None:
        if not 0 < cfg.sparse_angles < cfg.num_angles:
            raise ValueError("sparse_angles must lie in (0, num_angles)")
        if cfg.num_angles % cfg.sparse_angles != 0:
            raise ValueError("sparse_angles must divide num_angles")
    if cfg.method.method == "N2I":
        acquired = (cfg.sparse_angles if cfg.sparse_angles is not None
                    else cfg.num_angles)
        if acquired % cfg.method.n2i_splits != 0:
            raise ValueError(f"{acquired} acquired angles not divisible by "
                             f"{cfg.method.n2i_splits} splits")
    if cfg.epochs < 0:
        raise ValueError("epochs must be >= 0")
    if cfg.epochs > 0 and cfg.epochs % cfg.checkpoint_every != 0:
        raise ValueError("checkpoint_every must divide epochs")
    if cfg.lr <= 0 or cfg.batch_size < 1:
        raise ValueError("lr must be positive and batch_size >= 1")
    if cfg.stopping not in ("last_epoch", "psnr_oracle", "both"):
        raise ValueError(f"unknown stopping mode {cfg.stopping!r}")
    if cfg.noise.delta < 0 or cfg.noise.sigma <= 0:
        raise ValueError("noise needs delta >= 0 and sigma > 0")


def to_dict(cfg: ExperimentConfig) -> dict:
    return dataclasses.asdict(cfg)


def _build(cls, data: dict):
    if not isinstance(data, dict):
        raise ValueError(f"expected a mapping for {cls.__name__}, got {data!r}")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return cls(**data)


_NESTED = {"dataset": DatasetConfig, "split": SplitConfig, "noise": NoiseConfig,
           "method": MethodSpec, "net": NetConfig}


def from_dict(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ValueError("config root must be a mapping")
    fields = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = set(data) - fields
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    kwargs = {}
    for name, value in data.items():
        if name in _NESTED:
            kwargs[name] = _build(_NESTED[name], value)
        else:
            kwargs[name] = value
    cfg = ExperimentConfig(**kwargs)
    validate(cfg)
    return cfg


def load_config(path) -> ExperimentConfig:
    return from_dict(json.loads(Path(path).read_text()))


def save_config(path, cfg: ExperimentConfig) -> None:
    Path(path).write_text(json.dumps(to_dict(cfg), indent=2, sort_keys=True)
                          + "\n")


def split_dataset(images: List[ImageGrid], split: SplitConfig):
    """Deterministic split by position: validation and test tails round up."""
    n = len(images)
    n_val = int(round(split.val * n))
    n_test = int(round(split.test * n))
    n_train = n - n_val - n_test
    if min(n_train, n_val, n_test) < 1:
        raise ValueError(f"split of {n} images leaves an empty subset "
                         f"({n_train}/{n_val}/{n_test})")
    return (images[:n_train], images[n_train:n_train + n_val],
            images[n_train + n_val:])


def paper_preset() -> ExperimentConfig:
    """Full-scale protocol (not exercised by the test suite)."""
    return ExperimentConfig(
        dataset=DatasetConfig(kind="directory", count=0, path="data/walnuts"),
        image_size=336, num_angles=512,
        noise=NoiseConfig(delta=5.0, sigma=2.0),
        net=NetConfig(depth=4, base_channels=64),
        epochs=9000, checkpoint_every=100, output_dir="runs/paper")
