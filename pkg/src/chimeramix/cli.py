"""Command-line entry point tying config files to the pipeline stages.

Exit codes: 0 on success, 2 for configuration errors, 3 when training
diverges.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np
import yaml
from filelock import FileLock, Timeout
from PIL import Image

from . import config as config_mod
from . import data as data_mod
from . import evaluation, training
from .training import ClsTrainConfig
from .classifiers import build_classifier
from .errors import ChimeraMixError, ConfigError, TrainingDiverged
from .masks import MaskSampler
from .model import load_checkpoint, load_generator_checkpoint, save_checkpoint
from .segmentation import felzenszwalb_segment


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="chimeramix")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="YAML run config")
        p.add_argument("--preset", choices=sorted(config_mod.PRESETS), help="named preset")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed-split", type=int, help="dataset split seed")
        p.add_argument("--seed-train", type=int, help="training seed")
        p.add_argument("--samples-per-class", type=int)
        p.add_argument("--mask", choices=["grid", "seg"], help="mixing mask source")

    p = sub.add_parser("train-generator", help="train the mixing generator")
    add_common(p)

    p = sub.add_parser("train-classifier", help="train a classifier with generated augmentation")
    add_common(p)
    p.add_argument("--generator", help="generator checkpoint for augmentation")
    p.add_argument("--ablation", choices=["grid", "seg"], help="direct pixel mixing, no generator")
    p.add_argument("--baseline", action="store_true", help="no augmentation (replace_prob=0)")

    p = sub.add_parser("sample", help="write a PNG grid of parents and generated compositions")
    add_common(p)
    p.add_argument("--generator", required=True)
    p.add_argument("-n", type=int, default=8, help="number of rows")
    p.add_argument("--per-row", type=int, default=3, help="generated samples per row")

    p = sub.add_parser("fid", help="Frechet distance of generated samples to a reference set")
    add_common(p)
    p.add_argument("--generator", help="generator checkpoint")
    p.add_argument("--dataset-a", help="first dataset path (instead of a checkpoint)")
    p.add_argument("--dataset-b", help="second dataset path")

    p = sub.add_parser("eval", help="accuracy of a classifier checkpoint on the test set")
    add_common(p)
    p.add_argument("--classifier", required=True)

    p = sub.add_parser("segment-preview", help="write color-coded segmentation overlays")
    add_common(p)
    return parser


def _resolved_config(args) -> dict:
    user = {}
    if args.config:
        if not os.path.exists(args.config):
            raise ConfigError(f"config: file not found: {args.config}")
        with open(args.config) as fh:
            user = yaml.safe_load(fh) or {}
    overrides = {}
    if args.seed_split is not None:
        overrides.setdefault("seeds", {})["split"] = args.seed_split
    if args.seed_train is not None:
        overrides.setdefault("seeds", {})["train"] = args.seed_train
    if args.samples_per_class is not None:
        overrides.setdefault("dataset", {})["samples_per_class"] = args.samples_per_class
    if args.mask is not None:
        overrides.setdefault("mask", {})["source"] = (
            "segmentation" if args.mask == "seg" else "grid"
        )
    if getattr(args, "out", None):
        overrides["output_dir"] = args.out
    cfg = config_mod.resolve_config(user, args.preset)
    for section, values in overrides.items():
        if isinstance(values, dict):
            cfg[section].update(values)
        else:
            cfg[section] = values
    config_mod.validate_config(cfg)
    return cfg


def _prepare_out(cfg: dict):
    out = cfg.get("output_dir")
    if not out:
        raise ConfigError("output_dir: required (set in config or pass --out)")
    os.makedirs(out, exist_ok=True)
    lock = FileLock(os.path.join(out, ".chimeramix.lock"))
    try:
        lock.acquire(timeout=1)
    except Timeout:
        raise ConfigError(f"output_dir: {out} is locked by another run")
    config_mod.save_config(cfg, os.path.join(out, "config_resolved.yaml"))
    return out, lock


def cmd_train_generator(args) -> int:
    cfg = _resolved_config(args)
    out, lock = _prepare_out(cfg)
    with lock:
        train_ds = config_mod.load_train_dataset(cfg)
        gen_cfg = config_mod.gen_train_config_from(cfg, train_ds.image_shape[2])
        training.train_generator(train_ds, gen_cfg, cfg["seeds"]["train"], out_dir=out)
    print(f"wrote {os.path.join(out, 'generator.ckpt')}")
    return 0


def _mask_sampler_for(cfg: dict, generator, ds) -> MaskSampler:
    gen_cfg = config_mod.gen_train_config_from(cfg, ds.image_shape[2])
    gen_cfg.generator = generator.config
    return training.build_mask_sampler(gen_cfg, ds)


def cmd_train_classifier(args) -> int:
    cfg = _resolved_config(args)
    if args.baseline:
        cfg["classifier"]["replace_prob"] = 0.0
    if args.ablation:
        cfg["mask"]["source"] = "segmentation" if args.ablation == "seg" else "grid"
    out, lock = _prepare_out(cfg)
    with lock:
        train_ds = config_mod.load_train_dataset(cfg)
        test_ds = config_mod.load_test_dataset(cfg)
        cls_cfg = config_mod.cls_train_config_from(cfg)
        generator = None
        sampler = None
        pixel_ablation = False
        if args.baseline:
            pass
        elif args.ablation:
            pixel_ablation = True
            gen_cfg = config_mod.gen_train_config_from(cfg, train_ds.image_shape[2])
            sampler = training.build_mask_sampler(gen_cfg, train_ds)
        else:
            if not args.generator:
                raise ConfigError(
                    "generator: a checkpoint is required unless --baseline or --ablation is given"
                )
            generator = load_generator_checkpoint(args.generator)
            sampler = _mask_sampler_for(cfg, generator, train_ds)
        model, rows, best = training.train_classifier(
            train_ds,
            test_ds,
            cls_cfg,
            cfg["seeds"]["train"],
            generator=generator,
            mask_sampler=sampler,
            pixel_ablation=pixel_ablation,
            out_dir=out,
        )
        save_checkpoint(
            os.path.join(out, "classifier.ckpt"),
            model,
            cls_cfg,
            "classifier",
            extra={"class_count": train_ds.class_count, "channels": train_ds.image_shape[2]},
        )
        report = {
            "final_accuracy": rows[-1]["acc"],
            "best_accuracy": best,
            "epochs": len(rows),
        }
        with open(os.path.join(out, "accuracy_report.yaml"), "w") as fh:
            yaml.safe_dump(report, fh)
    print(f"final accuracy {rows[-1]['acc']:.4f} (best {best:.4f})")
    return 0


def cmd_sample(args) -> int:
    cfg = _resolved_config(args)
    out, lock = _prepare_out(cfg)
    with lock:
        if args.n > 0:
            generator = load_generator_checkpoint(args.generator)
            ds = config_mod.load_train_dataset(cfg)
            sampler = _mask_sampler_for(cfg, generator, ds)
            rng = np.random.default_rng(cfg["seeds"]["train"])
            rows = []
            for _ in range(args.n):
                pair = data_mod.sample_same_class_pairs(ds, 1, rng)
                chimeras = [
                    evaluation.generate_chimeras(generator, ds, sampler, 1, rng)[0]
                    for _ in range(args.per_row)
                ]
                rows.append(np.concatenate([pair.first[0], pair.second[0], *chimeras], axis=1))
            grid = (np.concatenate(rows, axis=0) * 255).astype(np.uint8)
            Image.fromarray(grid).save(os.path.join(out, "samples.png"))
    return 0


def cmd_fid(args) -> int:
    cfg = _resolved_config(args)
    ev = cfg["eval"]
    if ev["extractor_weights"]:
        extractor = evaluation.load_linear_extractor(ev["extractor_weights"])
    else:
        extractor = evaluation.RandomProjectionExtractor(
            ev["extractor_dim"], ev["extractor_size"], ev["extractor_seed"]
        )
    if args.dataset_a and args.dataset_b:
        stats = []
        for path in (args.dataset_a, args.dataset_b):
            if os.path.isdir(path):
                ds = data_mod.load_image_folder(path)
            else:
                ds = data_mod.load_cifar_binary(path, cfg["dataset"]["class_count"])
            stats.append(evaluation.activation_stats(extractor.extract(ds.images)))
        value = evaluation.fid(stats[0], stats[1])
        manifest = {
            "fid": value,
            "extractor": extractor.identifier,
            "dataset_a": args.dataset_a,
            "dataset_b": args.dataset_b,
        }
    elif args.generator:
        generator = load_generator_checkpoint(args.generator)
        ds = config_mod.load_train_dataset(cfg)
        sampler = _mask_sampler_for(cfg, generator, ds)
        value, manifest = evaluation.fid_report(
            generator, ds, extractor, ev["fid_samples"], sampler, cfg["seeds"]["train"]
        )
    else:
        raise ConfigError("fid: pass either --generator or both --dataset-a and --dataset-b")
    if getattr(args, "out", None):
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "fid_manifest.yaml"), "w") as fh:
            yaml.safe_dump(manifest, fh)
    print(f"fid {value:.6f}")
    return 0


def cmd_eval(args) -> int:
    cfg = _resolved_config(args)
    test_ds = config_mod.load_test_dataset(cfg)
    import pickle

    # the checkpoint's own config echo is authoritative here: evaluation must
    # not depend on the training flags of the current run config
    with open(args.classifier, "rb") as fh:
        payload = pickle.load(fh)
    extra = payload["extra"]
    cls_cfg = ClsTrainConfig(**payload["config"])
    model = build_classifier(cls_cfg.arch, extra["class_count"], extra["channels"])
    load_checkpoint(args.classifier, model, cls_cfg, "classifier")
    acc = evaluation.evaluate_accuracy(model, test_ds)
    print(f"accuracy {acc:.4f}")
    return 0


def cmd_segment_preview(args) -> int:
    cfg = _resolved_config(args)
    out, lock = _prepare_out(cfg)
    with lock:
        ds = config_mod.load_train_dataset(cfg)
        params = config_mod.felz_params_from(cfg)
        rng = np.random.default_rng(0)
        for i, img in enumerate(ds.images):
            seg = felzenszwalb_segment(img, params)
            colors = rng.random((seg.region_count, 3))
            overlay = 0.5 * img + 0.5 * colors[seg.labels]
            Image.fromarray((overlay * 255).astype(np.uint8)).save(
                os.path.join(out, f"segment_{i:04d}.png")
            )
    print(f"wrote {len(ds)} previews to {out}")
    return 0


_COMMANDS = {
    "train-generator": cmd_train_generator,
    "train-classifier": cmd_train_classifier,
    "sample": cmd_sample,
    "fid": cmd_fid,
    "eval": cmd_eval,
    "segment-preview": cmd_segment_preview,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except TrainingDiverged as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return 3
    except ChimeraMixError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
