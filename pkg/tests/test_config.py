import pytest
import yaml

from chimeramix import config
from chimeramix.errors import ConfigError


def tiny_cfg(**overrides):
    user = {"dataset": {"format": "synthetic"}}
    user.update(overrides)
    return config.resolve_config(user, "tiny-ci")


class TestResolve:
    def test_defaults_plus_preset(self):
        cfg = tiny_cfg()
        assert cfg["dataset"]["format"] == "synthetic"
        assert cfg["generator"]["epochs"] == 25
        assert cfg["classifier"]["arch"] == "tiny"
        # untouched defaults survive the merge
        assert cfg["generator"]["betas"] == [0.5, 0.999]
        assert cfg["mask"]["sigma"] == 0.8

    def test_user_overrides_preset(self):
        cfg = tiny_cfg(generator={"epochs": 3})
        assert cfg["generator"]["epochs"] == 3
        assert cfg["generator"]["lr0"] == 0.001  # rest of preset intact

    def test_unknown_key_names_path(self):
        with pytest.raises(ConfigError, match="generator.learning_rate"):
            tiny_cfg(generator={"learning_rate": 0.1})

    def test_unknown_preset(self):
        with pytest.raises(ConfigError, match="unknown preset"):
            config.resolve_config({"dataset": {"format": "synthetic"}}, "huge")

    def test_preset_key_in_user_config(self):
        cfg = config.resolve_config({"preset": "tiny-ci", "dataset": {"format": "synthetic"}})
        assert cfg["classifier"]["arch"] == "tiny"

    def test_missing_format_rejected(self):
        with pytest.raises(ConfigError, match="dataset.format"):
            config.resolve_config({})

    def test_full_scale_presets_resolve(self):
        for preset in ("cifair-small", "stl-large"):
            cfg = config.resolve_config(
                {"dataset": {"format": "cifar-binary", "path": "/tmp/x.bin"}}, preset
            )
            config.validate_config(cfg)
        stl = config.resolve_config(
            {"dataset": {"format": "image-folder", "path": "/tmp/d"}}, "stl-large"
        )
        assert stl["classifier"]["lr0"] == 0.0074
        assert stl["mask"]["scale"] == 400.0


class TestValidation:
    def test_bad_format(self):
        with pytest.raises(ConfigError, match="dataset.format"):
            config.resolve_config({"dataset": {"format": "imagenet"}})

    def test_path_required(self):
        with pytest.raises(ConfigError, match="dataset.path"):
            config.resolve_config({"dataset": {"format": "cifar-binary"}})

    def test_replace_prob_range(self):
        with pytest.raises(ConfigError, match="replace_prob"):
            tiny_cfg(classifier={"replace_prob": 1.5})

    def test_mask_source(self):
        with pytest.raises(ConfigError, match="mask.source"):
            tiny_cfg(mask={"source": "perlin"})

    def test_mix_block_range(self):
        with pytest.raises(ConfigError, match="mix_after_block"):
            tiny_cfg(generator={"mix_after_block": 9})


class TestFileRoundTrip:
    def test_save_load(self, tmp_path):
        cfg = tiny_cfg()
        path = tmp_path / "run.yaml"
        config.save_config(cfg, path)
        loaded = config.load_config(path)
        assert loaded == cfg

    def test_load_with_preset_key(self, tmp_path):
        path = tmp_path / "run.yaml"
        path.write_text(yaml.safe_dump({"preset": "tiny-ci", "dataset": {"format": "synthetic"}}))
        cfg = config.load_config(path)
        assert cfg["generator"]["base_channels"] == 8

    def test_empty_file_fails_validation(self, tmp_path):
        path = tmp_path / "empty.yaml"
        path.write_text("")
        with pytest.raises(ConfigError):
            config.load_config(path)


class TestBuilders:
    def test_gen_train_config(self):
        cfg = tiny_cfg()
        gt = config.gen_train_config_from(cfg)
        assert gt.epochs == 25
        assert gt.lr_milestones == (15, 20)
        assert gt.generator.input_size == (16, 16)
        assert gt.discriminator.block_channels == (8, 16)
        assert gt.loss_weights.alpha_rec == 1000.0
        assert gt.felz.scale == 0.5 and gt.felz.min_size == 4

    def test_cls_train_config(self):
        ct = config.cls_train_config_from(tiny_cfg())
        assert ct.arch == "tiny"
        assert ct.replace_prob == 0.5
        assert ct.momentum == 0.9

    def test_channels_threaded_through(self):
        gc = config.generator_config_from(tiny_cfg(), channels=1)
        assert gc.channels == 1


class TestDatasetLoading:
    def test_synthetic_train_and_test_split(self):
        cfg = tiny_cfg()
        train = config.load_train_dataset(cfg)
        test = config.load_test_dataset(cfg)
        assert len(train) == 15  # 3 classes x 5 per class
        assert len(test) == 150  # 3 classes x 50 test samples
        # different seeds: train and test are disjoint draws
        assert not (train.images[0] == test.images[0]).all()

    def test_split_seed_changes_data(self):
        a = config.load_train_dataset(tiny_cfg())
        b = config.load_train_dataset(tiny_cfg(seeds={"split": 7}))
        assert not (a.images == b.images).all()

    def test_cifar_binary_subsampled(self, tmp_path):
        import numpy as np

        from chimeramix import data

        rng = np.random.default_rng(0)
        full = data.LabeledImageDataset(
            rng.random((40, 32, 32, 3)).astype(np.float32),
            np.repeat(np.arange(4), 10).astype(np.int64),
            4,
            "tmp",
        )
        path = tmp_path / "train.bin"
        data.write_cifar_binary(full, path)
        cfg = config.resolve_config(
            {
                "dataset": {
                    "format": "cifar-binary",
                    "path": str(path),
                    "class_count": 4,
                    "samples_per_class": 3,
                }
            }
        )
        ds = config.load_train_dataset(cfg)
        assert len(ds) == 12
