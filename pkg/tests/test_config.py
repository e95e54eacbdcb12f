"""Tests for experiment configuration, serialization, and dataset splits."""
import dataclasses

import numpy as np
import pytest

from noisier2inverse.config import (
    DatasetConfig,
    ExperimentConfig,
    NoiseConfig,
    SplitConfig,
    from_dict,
    load_config,
    paper_preset,
    save_config,
    split_dataset,
    to_dict,
    validate,
)
from noisier2inverse.geometry import ImageGrid
from noisier2inverse.methods import MethodSpec
from noisier2inverse.network import NetConfig


def _images(n, width=8):
    rng = np.random.default_rng(0)
    return [ImageGrid(rng.random((width, width)), 1.0) for _ in range(n)]


class TestDefaults:
    def test_desk_defaults_are_valid(self):
        cfg = ExperimentConfig()
        validate(cfg)
        assert cfg.image_size in (64, 128)
        assert cfg.num_angles == 128
        assert cfg.lr == 5e-5
        assert cfg.batch_size == 4
        assert 300 <= cfg.epochs <= 2000
        assert cfg.noise.delta > 0

    def test_paper_preset_dimensions(self):
        cfg = paper_preset()
        assert cfg.image_size == 336
        assert cfg.num_angles == 512
        assert cfg.epochs == 9000
        assert (cfg.net.depth, cfg.net.base_channels) == (4, 64)
        assert cfg.noise.delta == 5.0
        assert cfg.noise.sigma == 2.0


class TestSerialization:
    def test_round_trip_is_lossless(self):
        cfg = ExperimentConfig(
            image_size=64, num_angles=32, sparse_angles=8,
            noise=NoiseConfig(delta=3.5, sigma=2.5, kernel_radius=4, seed=7),
            method=MethodSpec("NN2I", weighting="gradient",
                              inference_input="z"),
            net=NetConfig(depth=2, base_channels=8),
            epochs=400, lr=1e-4, batch_size=2, seed=3,
            stopping="psnr_oracle", checkpoint_every=100,
            output_dir="runs/custom")
        back = from_dict(to_dict(cfg))
        assert back == cfg
        assert back.run_id() == cfg.run_id()

    def test_file_round_trip(self, tmp_path):
        cfg = ExperimentConfig(epochs=350, checkpoint_every=70)
        p = tmp_path / "cfg.json"
        save_config(p, cfg)
        assert load_config(p) == cfg

    def test_unknown_top_level_key_rejected(self):
        data = to_dict(ExperimentConfig())
        data["unexpected"] = 1
        with pytest.raises(ValueError):
            from_dict(data)

    def test_unknown_nested_key_rejected(self):
        data = to_dict(ExperimentConfig())
        data["noise"]["amplitude"] = 2.0
        with pytest.raises(ValueError):
            from_dict(data)

    def test_run_id_is_stable_and_sensitive(self):
        a = ExperimentConfig()
        b = ExperimentConfig()
        assert a.run_id() == b.run_id()
        assert len(a.run_id()) == 12
        int(a.run_id(), 16)
        c = dataclasses.replace(a, seed=99)
        assert c.run_id() != a.run_id()


class TestValidation:
    def test_split_fractions_must_sum_to_one(self):
        cfg = ExperimentConfig(split=SplitConfig(train=0.5, val=0.2,
                                                 test=0.2))
        with pytest.raises(ValueError):
            validate(cfg)

    def test_image_size_must_match_net_depth(self):
        cfg = ExperimentConfig(image_size=68)  # 68 % 8 != 0
        with pytest.raises(ValueError):
            validate(cfg)

    def test_sparse_angles_must_divide_full_set(self):
        cfg = ExperimentConfig(sparse_angles=33)
        with pytest.raises(ValueError):
            validate(cfg)
        ok = ExperimentConfig(sparse_angles=32)
        validate(ok)
        geom = ok.geometry()
        assert geom.num_rows == 32
        assert list(geom.angle_indices) == list(range(0, 128, 4))

    def test_n2i_splits_must_divide_acquired_angles(self):
        cfg = ExperimentConfig(method=MethodSpec("N2I", n2i_splits=5))
        with pytest.raises(ValueError):
            validate(cfg)

    def test_checkpoint_cadence_must_divide_epochs(self):
        cfg = ExperimentConfig(epochs=300, checkpoint_every=77)
        with pytest.raises(ValueError):
            validate(cfg)

    def test_stopping_mode_names(self):
        assert ExperimentConfig(stopping="both").stopping_modes() == (
            "last_epoch", "psnr_oracle")
        assert ExperimentConfig(
            stopping="last_epoch").stopping_modes() == ("last_epoch",)
        with pytest.raises(ValueError):
            validate(ExperimentConfig(stopping="late"))

    def test_directory_dataset_requires_path(self):
        cfg = ExperimentConfig(dataset=DatasetConfig(kind="directory",
                                                     path=None))
        with pytest.raises(ValueError):
            validate(cfg)


class TestNoiseSeedInheritance:
    def test_unset_noise_seed_inherits_experiment_seed(self):
        cfg = ExperimentConfig(seed=17)
        assert cfg.noise_spec().seed == 17

    def test_explicit_noise_seed_wins(self):
        cfg = ExperimentConfig(seed=17,
                               noise=NoiseConfig(delta=1.0, sigma=2.0,
                                                 seed=5))
        assert cfg.noise_spec().seed == 5


class TestSplitDataset:
    def test_default_24_gives_16_4_4(self):
        tr, va, te = split_dataset(_images(24), SplitConfig())
        assert (len(tr), len(va), len(te)) == (16, 4, 4)

    def test_order_preserved_without_overlap(self):
        imgs = _images(10)
        tr, va, te = split_dataset(imgs, SplitConfig())
        joined = tr + va + te
        assert len(joined) == 10
        for a, b in zip(joined, imgs):
            assert a is b

    def test_tiny_dataset_with_empty_subset_rejected(self):
        with pytest.raises(ValueError):
            split_dataset(_images(2), SplitConfig())
