"""Run configuration: YAML files, presets, validation, and builders for the
training/eval config objects.

Configs are plain nested dicts so they round-trip losslessly through YAML.
Validation errors name the offending key path (e.g. "generator.lr0").
"""

from __future__ import annotations

import copy

import yaml

from . import data as data_mod
from .errors import ConfigError
from .losses import LossWeights
from .model import DiscriminatorConfig, GeneratorConfig
from .segmentation import FelzParams
from .training import ClsTrainConfig, GenTrainConfig

# Every appendix hyperparameter maps to exactly one key below.
DEFAULT_CONFIG = {
    "dataset": {
        "format": None,  # "cifar-binary" | "image-folder" | "synthetic"
        "path": None,
        "test_path": None,
        "class_count": 10,
        "samples_per_class": 5,
        "synthetic": {"classes": 3, "image_size": 16, "test_samples_per_class": 50, "noise": 0.15},
    },
    "generator": {
        "epochs": 200,
        "optimizer": "adamw",
        "betas": [0.5, 0.999],
        "lr0": 0.0002,
        "lr_schedule": "step",
        "lr_milestones": [60, 120, 160],
        "lr_factor": 0.2,
        "weight_decay": 0.0005,
        "batch_size": 64,
        "pre_upsample": False,
        "input_size": [32, 32],
        "repetition_base": 500,
        "n_res_blocks": 4,
        "mix_after_block": 2,
        "base_channels": 64,
        "upsample_mode": "resize",
        "alpha_rec": 1000.0,
        "alpha_per": 1.0,
        "alpha_disc": 1.0,
        "perceptual_levels": 3,
        "checkpoint_every": 0,
    },
    "discriminator": {
        "block_channels": [64, 128, 256, 512],
        "kernel": 4,
        "stride": 1,
        "padding": 0,
        "norm_first_block": False,
        "leaky_slope": 0.2,
    },
    "classifier": {
        "arch": "wrn-16-8",
        "epochs": 200,
        "lr_schedule": "cosine",
        "momentum": 0.9,
        "batch_size": 10,
        "lr0": 0.0046,
        "weight_decay": 0.0053,
        "repetition_base": 500,
        "replace_prob": 0.5,
        "per_sample_replace": False,
    },
    "mask": {
        "source": "grid",
        "grid_size": 4,
        "scale": 60.0,
        "min_size": 60,
        "sigma": 0.8,
        "connectivity": 8,
        "per_region": False,
    },
    "eval": {
        "fid_samples": 100,
        "extractor_dim": 64,
        "extractor_size": 32,
        "extractor_seed": 0,
        "extractor_weights": None,
    },
    "seeds": {"split": 0, "init": 0, "train": 0},
    "output_dir": None,
}

PRESETS = {
    # full-scale settings for 32x32 datasets (ciFAIR-style)
    "cifair-small": {
        "generator": {"pre_upsample": True, "input_size": [64, 64], "batch_size": 64},
        "classifier": {"arch": "wrn-16-8", "batch_size": 10, "lr0": 0.0046, "weight_decay": 0.0053},
        "mask": {"scale": 60.0, "min_size": 60},
    },
    # full-scale settings for 96x96 datasets (STL-style)
    "stl-large": {
        "generator": {
            "batch_size": 8,
            "input_size": [96, 96],
            "repetition_base": 120,
        },
        "classifier": {
            "arch": "resnet-50",
            "batch_size": 16,
            "lr0": 0.0074,
            "weight_decay": 0.00041,
            "repetition_base": 120,
        },
        "mask": {"scale": 400.0, "min_size": 400},
    },
    # CI-scale profile: synthetic data, tiny models, few epochs
    "tiny-ci": {
        "dataset": {"format": "synthetic", "samples_per_class": 5, "class_count": 3},
        "generator": {
            "epochs": 25,
            "batch_size": 8,
            "lr0": 0.001,
            "lr_milestones": [15, 20],
            "input_size": [16, 16],
            "base_channels": 8,
            "repetition_base": 20,
        },
        "discriminator": {"block_channels": [8, 16]},
        "classifier": {
            "arch": "tiny",
            "epochs": 30,
            "batch_size": 8,
            "lr0": 0.01,
            "weight_decay": 0.0005,
            "repetition_base": 20,
        },
        "mask": {"grid_size": 4, "scale": 0.5, "min_size": 4},
        "eval": {"fid_samples": 32, "extractor_size": 16},
    },
}


def _deep_merge(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"{where}: unknown configuration key")
        if isinstance(base[key], dict) and isinstance(value, dict):
            out[key] = _deep_merge(base[key], value, where)
        else:
            out[key] = copy.deepcopy(value)
    return out


def resolve_config(user_config: dict | None = None, preset: str | None = None) -> dict:
    """Merge defaults <- preset <- user config and validate."""
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"preset: unknown preset '{preset}' (choose from {sorted(PRESETS)})")
        cfg = _deep_merge(cfg, PRESETS[preset])
    if user_config:
        if not isinstance(user_config, dict):
            raise ConfigError("config root must be a mapping")
        preset_key = user_config.pop("preset", None)
        if preset_key is not None and preset is None:
            return resolve_config(user_config, preset_key)
        cfg = _deep_merge(cfg, user_config)
    validate_config(cfg)
    return cfg


def load_config(path, preset: str | None = None) -> dict:
    with open(path) as fh:
        user = yaml.safe_load(fh) or {}
    return resolve_config(user, preset)


def save_config(cfg: dict, path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(cfg, fh, sort_keys=True)


def validate_config(cfg: dict) -> None:
    ds = cfg["dataset"]
    if ds["format"] is None:
        raise ConfigError("dataset.format: required key is missing")
    if ds["format"] not in ("cifar-binary", "image-folder", "synthetic"):
        raise ConfigError(f"dataset.format: unknown format '{ds['format']}'")
    if ds["format"] != "synthetic" and not ds["path"]:
        raise ConfigError("dataset.path: required for non-synthetic datasets")
    if ds["samples_per_class"] < 1:
        raise ConfigError("dataset.samples_per_class: must be >= 1")
    if cfg["generator"]["epochs"] < 1:
        raise ConfigError("generator.epochs: must be >= 1")
    if cfg["generator"]["lr0"] <= 0:
        raise ConfigError("generator.lr0: must be > 0")
    if not 0 <= cfg["generator"]["mix_after_block"] <= cfg["generator"]["n_res_blocks"]:
        raise ConfigError("generator.mix_after_block: must be in [0, n_res_blocks]")
    if cfg["mask"]["source"] not in ("grid", "segmentation"):
        raise ConfigError(f"mask.source: must be 'grid' or 'segmentation', got '{cfg['mask']['source']}'")
    if cfg["mask"]["grid_size"] < 1:
        raise ConfigError("mask.grid_size: must be >= 1")
    if not 0 <= cfg["classifier"]["replace_prob"] <= 1:
        raise ConfigError("classifier.replace_prob: must be in [0, 1]")


def felz_params_from(cfg: dict) -> FelzParams:
    mask = cfg["mask"]
    return FelzParams(mask["scale"], mask["min_size"], mask["sigma"], mask["connectivity"])


def generator_config_from(cfg: dict, channels: int = 3) -> GeneratorConfig:
    g = cfg["generator"]
    return GeneratorConfig(
        n_res_blocks=g["n_res_blocks"],
        mix_after_block=g["mix_after_block"],
        base_channels=g["base_channels"],
        input_size=tuple(g["input_size"]),
        channels=channels,
        upsample_mode=g["upsample_mode"],
    )


def discriminator_config_from(cfg: dict, channels: int = 3) -> DiscriminatorConfig:
    d = cfg["discriminator"]
    return DiscriminatorConfig(
        block_channels=tuple(d["block_channels"]),
        kernel=d["kernel"],
        stride=d["stride"],
        padding=d["padding"],
        channels=channels,
        norm_first_block=d["norm_first_block"],
        leaky_slope=d["leaky_slope"],
    )


def gen_train_config_from(cfg: dict, channels: int = 3) -> GenTrainConfig:
    g = cfg["generator"]
    return GenTrainConfig(
        epochs=g["epochs"],
        lr0=g["lr0"],
        betas=tuple(g["betas"]),
        weight_decay=g["weight_decay"],
        lr_milestones=tuple(g["lr_milestones"]),
        lr_factor=g["lr_factor"],
        batch_size=g["batch_size"],
        pre_upsample=g["pre_upsample"],
        repetition_base=g["repetition_base"],
        mask_source=cfg["mask"]["source"],
        grid_size=cfg["mask"]["grid_size"],
        felz=felz_params_from(cfg),
        seg_per_region=cfg["mask"]["per_region"],
        loss_weights=LossWeights(g["alpha_rec"], g["alpha_per"], g["alpha_disc"]),
        perceptual_levels=g["perceptual_levels"],
        generator=generator_config_from(cfg, channels),
        discriminator=discriminator_config_from(cfg, channels),
        checkpoint_every=g["checkpoint_every"],
    )


def cls_train_config_from(cfg: dict) -> ClsTrainConfig:
    c = cfg["classifier"]
    return ClsTrainConfig(
        epochs=c["epochs"],
        momentum=c["momentum"],
        batch_size=c["batch_size"],
        lr0=c["lr0"],
        weight_decay=c["weight_decay"],
        repetition_base=c["repetition_base"],
        replace_prob=c["replace_prob"],
        arch=c["arch"],
        per_sample_replace=c["per_sample_replace"],
    )


def load_train_dataset(cfg: dict) -> data_mod.LabeledImageDataset:
    """Load and per-class subsample the training dataset named by the config."""
    ds_cfg = cfg["dataset"]
    seed_split = cfg["seeds"]["split"]
    if ds_cfg["format"] == "synthetic":
        syn = ds_cfg["synthetic"]
        return data_mod.make_synthetic_dataset(
            ds_cfg["samples_per_class"],
            syn["classes"],
            syn["image_size"],
            seed=seed_split,
            noise=syn["noise"],
            name="synthetic-train",
        )
    if ds_cfg["format"] == "cifar-binary":
        full = data_mod.load_cifar_binary(ds_cfg["path"], ds_cfg["class_count"])
    else:
        full = data_mod.load_image_folder(ds_cfg["path"])
    return data_mod.subsample_per_class(full, ds_cfg["samples_per_class"], seed_split)


def load_test_dataset(cfg: dict) -> data_mod.LabeledImageDataset:
    ds_cfg = cfg["dataset"]
    if ds_cfg["format"] == "synthetic":
        syn = ds_cfg["synthetic"]
        return data_mod.make_synthetic_dataset(
            syn["test_samples_per_class"],
            syn["classes"],
            syn["image_size"],
            seed=cfg["seeds"]["split"] + 10_000,
            noise=syn["noise"],
            name="synthetic-test",
        )
    path = ds_cfg["test_path"] or ds_cfg["path"]
    if ds_cfg["format"] == "cifar-binary":
        return data_mod.load_cifar_binary(path, ds_cfg["class_count"])
    return data_mod.load_image_folder(path)
