"""Training loops: alternating generator/discriminator optimization and
classifier training with stochastic whole-batch replacement by generated
compositions.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F

from . import data as data_mod
from .classifiers import build_classifier
from .errors import TrainingDiverged
from .evaluation import evaluate_accuracy, pixel_mix
from .losses import (
    LossWeights,
    generator_total_loss,
    lsgan_d_loss,
    lsgan_g_loss,
    perceptual_loss,
    reconstruction_loss,
)
from .masks import MaskSampler
from .model import (
    DiscriminatorConfig,
    GeneratorConfig,
    MixingGenerator,
    PatchDiscriminator,
    from_model_range,
    mix_features,
    save_checkpoint,
    to_model_range,
)
from .segmentation import FelzParams, SegmentationCache

GENERATOR_CSV_COLUMNS = ["epoch", "lr", "l_rec", "l_per", "l_gdisc", "l_ddisc"]
CLASSIFIER_CSV_COLUMNS = ["epoch", "lr", "loss", "acc"]


def step_lr(epoch: int, lr0: float, milestones=(60, 120, 160), factor: float = 0.2) -> float:
    """Stepwise decay: lr0 * factor^(milestones passed)."""
    passed = sum(1 for m in milestones if m <= epoch)
    return lr0 * factor ** passed


def cosine_lr(epoch: int, total_epochs: int, lr0: float) -> float:
    """Cosine annealing from lr0 at epoch 0 to 0 at total_epochs."""
    if not 0 <= epoch <= total_epochs:
        raise ValueError(f"epoch {epoch} outside [0, {total_epochs}]")
    return lr0 * 0.5 * (1.0 + math.cos(math.pi * epoch / total_epochs))


@dataclass
class GenTrainConfig:
    epochs: int = 200
    lr0: float = 2e-4
    betas: tuple[float, float] = (0.5, 0.999)
    weight_decay: float = 5e-4
    lr_milestones: tuple[int, ...] = (60, 120, 160)
    lr_factor: float = 0.2
    batch_size: int = 64
    pre_upsample: bool = False  # 32x32 -> 64x64 before the generator
    repetition_base: int = 500
    mask_source: str = "grid"
    grid_size: int = 4
    felz: FelzParams = field(default_factory=FelzParams)
    seg_per_region: bool = False
    loss_weights: LossWeights = field(default_factory=LossWeights)
    perceptual_levels: int = 3
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    discriminator: DiscriminatorConfig = field(default_factory=DiscriminatorConfig)
    checkpoint_every: int = 0  # 0: final checkpoint only

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.lr0 <= 0:
            raise ValueError("lr0 must be > 0")


@dataclass
class ClsTrainConfig:
    epochs: int = 200
    momentum: float = 0.9
    batch_size: int = 10
    lr0: float = 0.0046
    weight_decay: float = 0.0053
    repetition_base: int = 500
    replace_prob: float = 0.5
    arch: str = "wrn-16-8"
    per_sample_replace: bool = False  # variant: replace samples independently

    def __post_init__(self):
        if not 0.0 <= self.replace_prob <= 1.0:
            raise ValueError("replace_prob must be in [0, 1]")


def _check_finite(name: str, value: torch.Tensor, epoch: int) -> None:
    if not torch.isfinite(value):
        raise TrainingDiverged(f"{name} became non-finite at epoch {epoch}")


def build_mask_sampler(cfg: GenTrainConfig, ds: data_mod.LabeledImageDataset) -> MaskSampler:
    """Mask sampler at the generator's feature resolution; segmentations are
    precomputed over the dataset once."""
    feat_h, feat_w = cfg.generator.feature_size
    cache = None
    if cfg.mask_source == "segmentation":
        cache = SegmentationCache(cfg.felz)
        cache.populate(ds.images)
    return MaskSampler(
        cfg.mask_source, feat_h, feat_w, cfg.grid_size, cache, cfg.seg_per_region
    )


def _resize(batch: torch.Tensor, size: tuple[int, int]) -> torch.Tensor:
    if tuple(batch.shape[-2:]) == tuple(size):
        return batch
    return F.interpolate(batch, size=size, mode="bilinear", align_corners=False)


def write_metrics_csv(rows: list[dict], columns: list[str], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})


def epoch_iterations(n_samples: int, repetition: int, batch_size: int) -> int:
    return math.ceil(n_samples * repetition / batch_size)


def train_generator(
    ds: data_mod.LabeledImageDataset,
    cfg: GenTrainConfig,
    seed: int,
    out_dir: str | None = None,
    mask_sampler: MaskSampler | None = None,
):
    """Alternating D/G optimization; returns (generator, discriminator,
    metric rows). One D update then one G update per iteration."""
    if len(ds) == 0:
        raise ValueError("dataset is empty")
    torch.manual_seed(seed)
    rng = np.random.default_rng(seed)

    generator = MixingGenerator(cfg.generator)
    discriminator = PatchDiscriminator(cfg.discriminator)
    opt_g = torch.optim.AdamW(
        generator.parameters(), lr=cfg.lr0, betas=cfg.betas, weight_decay=cfg.weight_decay
    )
    opt_d = torch.optim.AdamW(
        discriminator.parameters(), lr=cfg.lr0, betas=cfg.betas, weight_decay=cfg.weight_decay
    )
    if mask_sampler is None:
        mask_sampler = build_mask_sampler(cfg, ds)

    samples_per_class = len(ds) // ds.class_count
    repetition = data_mod.repetition_factor(max(1, samples_per_class), cfg.repetition_base)
    gen_size = cfg.generator.input_size

    rows = []
    for epoch in range(cfg.epochs):
        lr = step_lr(epoch, cfg.lr0, cfg.lr_milestones, cfg.lr_factor)
        for group in (*opt_g.param_groups, *opt_d.param_groups):
            group["lr"] = lr

        sums = dict.fromkeys(("l_rec", "l_per", "l_gdisc", "l_ddisc"), 0.0)
        batches = 0
        for pair in data_mod.iter_pair_batches(ds, cfg.batch_size, repetition, rng):
            masks = np.stack(
                [mask_sampler.sample(img, rng).values for img in pair.first]
            )[:, None, :, :]
            x1 = _resize(to_model_range(pair.first), gen_size)
            x2 = _resize(to_model_range(pair.second), gen_size)

            e1 = generator.encode(x1)
            e2 = generator.encode(x2)
            x_mix = generator.decode(mix_features(e1, e2, masks))
            xhat1 = generator.decode(e1)
            xhat2 = generator.decode(e2)

            # discriminator step (generated mixes detached)
            opt_d.zero_grad()
            real_scores = discriminator(torch.cat([x1, x2]))
            fake_scores_d = discriminator(x_mix.detach())
            l_ddisc = lsgan_d_loss(real_scores, fake_scores_d)
            _check_finite("discriminator loss", l_ddisc, epoch)
            l_ddisc.backward()
            opt_d.step()

            # generator step against the updated discriminator
            opt_g.zero_grad()
            l_rec = reconstruction_loss(xhat1, x1, xhat2, x2)
            l_per = perceptual_loss(xhat1, x1, cfg.perceptual_levels) + perceptual_loss(
                xhat2, x2, cfg.perceptual_levels
            )
            l_gdisc = lsgan_g_loss(discriminator(x_mix))
            total = generator_total_loss(l_rec, l_per, l_gdisc, cfg.loss_weights)
            _check_finite("generator loss", total, epoch)
            total.backward()
            opt_g.step()

            for key, value in (
                ("l_rec", l_rec),
                ("l_per", l_per),
                ("l_gdisc", l_gdisc),
                ("l_ddisc", l_ddisc),
            ):
                sums[key] += float(value.detach())
            batches += 1

        rows.append(
            {"epoch": epoch, "lr": lr, **{k: sums[k] / batches for k in sums}}
        )
        if out_dir and cfg.checkpoint_every and (epoch + 1) % cfg.checkpoint_every == 0:
            save_checkpoint(
                os.path.join(out_dir, f"generator-epoch{epoch + 1}.ckpt"),
                generator,
                cfg.generator,
                "generator",
            )

    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        save_checkpoint(
            os.path.join(out_dir, "generator.ckpt"), generator, cfg.generator, "generator"
        )
        save_checkpoint(
            os.path.join(out_dir, "discriminator.ckpt"),
            discriminator,
            cfg.discriminator,
            "discriminator",
        )
        write_metrics_csv(rows, GENERATOR_CSV_COLUMNS, os.path.join(out_dir, "generator_metrics.csv"))
    return generator, discriminator, rows


def augment_batch(
    images: np.ndarray,
    labels: np.ndarray,
    ds: data_mod.LabeledImageDataset,
    rng: np.random.Generator,
    p: float,
    generator: MixingGenerator | None = None,
    mask_sampler: MaskSampler | None = None,
    pixel_space: bool = False,
    per_sample: bool = False,
) -> np.ndarray:
    """With probability p replace the whole batch by same-class compositions
    (labels are unchanged: mixing is within-class). ``per_sample`` switches
    to independent per-sample replacement."""
    if p > 0 and not pixel_space and generator is None:
        raise ValueError("batch replacement requested but no generator was provided")
    if p > 0 and mask_sampler is None:
        raise ValueError("batch replacement requested but no mask sampler was provided")

    if per_sample:
        replace = rng.random(len(images)) < p
    else:
        replace = np.full(len(images), rng.random() < p)
    if not replace.any():
        return images

    by_class = ds.class_indices()
    partners = np.stack(
        [ds.images[by_class[int(lab)][rng.integers(len(by_class[int(lab)]))]] for lab in labels]
    )
    masks = [mask_sampler.sample(img, rng) for img in images]

    if pixel_space:
        mixed = np.stack(
            [pixel_mix(images[i], partners[i], masks[i]) for i in range(len(images))]
        )
    else:
        native = images.shape[1:3]
        gen_size = generator.config.input_size
        with torch.no_grad():
            generator.eval()
            x1 = _resize(to_model_range(images), gen_size)
            x2 = _resize(to_model_range(partners), gen_size)
            mask_arr = np.stack([m.values for m in masks])[:, None, :, :]
            fake = generator(x1, x2, mask_arr)
            mixed = from_model_range(_resize(fake, native))
    return np.where(replace[:, None, None, None], mixed, images)


def train_classifier(
    train_ds: data_mod.LabeledImageDataset,
    test_ds: data_mod.LabeledImageDataset,
    cfg: ClsTrainConfig,
    seed: int,
    generator: MixingGenerator | None = None,
    mask_sampler: MaskSampler | None = None,
    pixel_ablation: bool = False,
    out_dir: str | None = None,
):
    """SGD + cosine annealing classifier training with stochastic batch
    replacement. With replace_prob=0 this is exactly the plain baseline
    trainer (the replacement coin is still drawn, keeping rng streams
    aligned across variants)."""
    torch.manual_seed(seed)
    rng = np.random.default_rng(seed)

    model = build_classifier(cfg.arch, train_ds.class_count, train_ds.image_shape[2])
    optimizer = torch.optim.SGD(
        model.parameters(), lr=cfg.lr0, momentum=cfg.momentum, weight_decay=cfg.weight_decay
    )
    samples_per_class = len(train_ds) // train_ds.class_count
    repetition = data_mod.repetition_factor(max(1, samples_per_class), cfg.repetition_base)

    rows = []
    best_acc = 0.0
    for epoch in range(cfg.epochs):
        lr = cosine_lr(epoch, cfg.epochs, cfg.lr0)
        for group in optimizer.param_groups:
            group["lr"] = lr

        model.train()
        indices = np.tile(np.arange(len(train_ds)), repetition)
        rng.shuffle(indices)
        epoch_loss = 0.0
        batches = 0
        for start in range(0, len(indices), cfg.batch_size):
            idx = indices[start : start + cfg.batch_size]
            images = train_ds.images[idx]
            labels = train_ds.labels[idx]
            images = augment_batch(
                images,
                labels,
                train_ds,
                rng,
                cfg.replace_prob,
                generator=generator,
                mask_sampler=mask_sampler,
                pixel_space=pixel_ablation,
                per_sample=cfg.per_sample_replace,
            )
            optimizer.zero_grad()
            logits = model(to_model_range(images))
            loss = F.cross_entropy(logits, torch.from_numpy(labels))
            _check_finite("classifier loss", loss, epoch)
            loss.backward()
            optimizer.step()
            epoch_loss += float(loss.detach())
            batches += 1

        acc = evaluate_accuracy(model, test_ds)
        best_acc = max(best_acc, acc)
        rows.append({"epoch": epoch, "lr": lr, "loss": epoch_loss / batches, "acc": acc})

    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        write_metrics_csv(rows, CLASSIFIER_CSV_COLUMNS, os.path.join(out_dir, "classifier_metrics.csv"))
    return model, rows, best_acc
