"""Dataset containers, loaders, and the small-data sampling protocol.

Images are stored as float32 arrays of shape (N, H, W, C) with intensities
in [0, 1]. Conversion to the model's [-1, 1] range happens at the model
boundary, not here.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .errors import DatasetError

CIFAR_RECORD_BYTES = 3073  # 1 label byte + 3 * 32 * 32 pixel bytes


@dataclass
class LabeledImageDataset:
    """Images with class labels and deterministic ordering."""

    images: np.ndarray  # (N, H, W, C), float32 in [0, 1]
    labels: np.ndarray  # (N,), int64 in [0, class_count)
    class_count: int
    name: str = "dataset"

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if len(self.images) != len(self.labels):
            raise DatasetError(
                f"images ({len(self.images)}) and labels ({len(self.labels)}) differ in length"
            )
        if len(self.images) < 1:
            raise DatasetError("dataset must contain at least one sample")
        if self.images.ndim != 4:
            raise DatasetError(f"images must be (N, H, W, C), got shape {self.images.shape}")
        if self.labels.min() < 0 or self.labels.max() >= self.class_count:
            bad = int(np.argmax((self.labels < 0) | (self.labels >= self.class_count)))
            raise DatasetError(
                f"label {int(self.labels[bad])} at index {bad} outside [0, {self.class_count})"
            )

    def __len__(self) -> int:
        return len(self.images)

    @property
    def image_shape(self) -> tuple[int, int, int]:
        return tuple(self.images.shape[1:])

    def class_indices(self) -> list[np.ndarray]:
        """Per-class sample indices, in dataset order."""
        return [np.flatnonzero(self.labels == k) for k in range(self.class_count)]


@dataclass
class PairBatch:
    """Batch of same-class image pairs sharing one label per index."""

    first: np.ndarray
    second: np.ndarray
    label: np.ndarray

    def __post_init__(self):
        if not (len(self.first) == len(self.second) == len(self.label)):
            raise DatasetError("pair batch components differ in length")

    def __len__(self) -> int:
        return len(self.label)


def load_cifar_binary(path, class_count: int = 10, name: str | None = None) -> LabeledImageDataset:
    """Read a CIFAR-style binary file (3073-byte records, 3 channel planes)."""
    raw = np.fromfile(path, dtype=np.uint8)
    if len(raw) == 0 or len(raw) % CIFAR_RECORD_BYTES != 0:
        raise DatasetError(
            f"{path}: file length {len(raw)} is not a positive multiple of the "
            f"{CIFAR_RECORD_BYTES}-byte record size (1 label byte + 3072 pixel bytes)"
        )
    records = raw.reshape(-1, CIFAR_RECORD_BYTES)
    labels = records[:, 0].astype(np.int64)
    bad = np.flatnonzero(labels >= class_count)
    if len(bad):
        raise DatasetError(
            f"{path}: label byte {int(labels[bad[0]])} at record {int(bad[0])} "
            f"outside [0, {class_count})"
        )
    # channel planes (C, 32, 32) row-major -> (32, 32, C)
    pixels = records[:, 1:].reshape(-1, 3, 32, 32).transpose(0, 2, 3, 1)
    images = pixels.astype(np.float32) / 255.0
    return LabeledImageDataset(images, labels, class_count, name or os.path.basename(str(path)))


def write_cifar_binary(ds: LabeledImageDataset, path) -> None:
    """Inverse of :func:`load_cifar_binary`; used for round-trip checks."""
    h, w, c = ds.image_shape
    if (h, w, c) != (32, 32, 3):
        raise DatasetError(f"CIFAR binary requires 32x32x3 images, got {h}x{w}x{c}")
    pixels = np.rint(ds.images * 255.0).astype(np.uint8).transpose(0, 3, 1, 2)
    records = np.concatenate(
        [ds.labels.astype(np.uint8)[:, None], pixels.reshape(len(ds), -1)], axis=1
    )
    records.tofile(path)


def load_image_folder(path, name: str | None = None) -> LabeledImageDataset:
    """Load a directory of per-class subdirectories of PNG images.

    Class labels follow lexicographic subdirectory order.
    """
    class_dirs = sorted(
        d for d in os.listdir(path) if os.path.isdir(os.path.join(path, d))
    )
    if not class_dirs:
        raise DatasetError(f"{path}: no class subdirectories found")
    images, labels = [], []
    shape = None
    for label, class_dir in enumerate(class_dirs):
        files = sorted(
            f
            for f in os.listdir(os.path.join(path, class_dir))
            if f.lower().endswith(".png")
        )
        if not files:
            raise DatasetError(f"{path}: class directory '{class_dir}' contains no images")
        for fname in files:
            fpath = os.path.join(path, class_dir, fname)
            arr = np.asarray(Image.open(fpath).convert("RGB"), dtype=np.float32) / 255.0
            if shape is None:
                shape = arr.shape
            elif arr.shape != shape:
                raise DatasetError(
                    f"{fpath}: image size {arr.shape[:2]} differs from {shape[:2]}"
                )
            images.append(arr)
            labels.append(label)
    return LabeledImageDataset(
        np.stack(images), np.array(labels), len(class_dirs), name or os.path.basename(str(path))
    )


def subsample_per_class(
    ds: LabeledImageDataset, n: int, seed: int
) -> LabeledImageDataset:
    """Uniform per-class subsample without replacement; deterministic per seed."""
    indices = subsample_indices(ds, n, seed)
    return LabeledImageDataset(
        ds.images[indices], ds.labels[indices], ds.class_count, f"{ds.name}-{n}pc"
    )


def subsample_indices(ds: LabeledImageDataset, n: int, seed: int) -> np.ndarray:
    """Indices behind :func:`subsample_per_class`, sorted for stable order."""
    rng = np.random.default_rng(seed)
    chosen = []
    for k, idx in enumerate(ds.class_indices()):
        if len(idx) < n:
            raise DatasetError(f"class {k} has only {len(idx)} samples, need {n}")
        chosen.append(rng.choice(idx, size=n, replace=False))
    return np.sort(np.concatenate(chosen))


def write_manifest(indices: np.ndarray, labels: np.ndarray, path) -> None:
    """Write a split manifest, one "index<TAB>label" line per sample."""
    with open(path, "w") as fh:
        for i, lab in zip(indices, labels):
            fh.write(f"{int(i)}\t{int(lab)}\n")


def read_manifest(path) -> tuple[np.ndarray, np.ndarray]:
    indices, labels = [], []
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            i, lab = line.split("\t")
            indices.append(int(i))
            labels.append(int(lab))
    return np.array(indices, dtype=np.int64), np.array(labels, dtype=np.int64)


def repetition_factor(samples_per_class: int, base: int) -> int:
    """How many times to traverse the dataset per epoch, clamped to >= 1."""
    if samples_per_class < 1 or base < 1:
        raise ValueError("samples_per_class and base must be >= 1")
    return max(1, base // samples_per_class)


def sample_partner_indices(
    ds: LabeledImageDataset,
    anchor_indices: np.ndarray,
    rng: np.random.Generator,
    class_indices: list[np.ndarray] | None = None,
) -> np.ndarray:
    """For each anchor, a uniform same-class partner index (may equal the anchor)."""
    by_class = class_indices if class_indices is not None else ds.class_indices()
    partners = np.empty(len(anchor_indices), dtype=np.int64)
    for i, a in enumerate(anchor_indices):
        pool = by_class[int(ds.labels[a])]
        partners[i] = pool[rng.integers(len(pool))]
    return partners


def sample_same_class_pairs(
    ds: LabeledImageDataset, batch: int, rng: np.random.Generator
) -> PairBatch:
    """Draw a batch of uniform anchors, each paired with a same-class partner."""
    if len(ds) == 0:
        raise DatasetError("cannot sample pairs from an empty dataset")
    anchors = rng.integers(len(ds), size=batch)
    partners = sample_partner_indices(ds, anchors, rng)
    return PairBatch(ds.images[anchors], ds.images[partners], ds.labels[anchors])


def iter_pair_batches(
    ds: LabeledImageDataset,
    batch: int,
    repetition: int,
    rng: np.random.Generator,
):
    """Yield pair batches covering the repeated, shuffled dataset once.

    Every image appears exactly ``repetition`` times as an anchor; partners
    are fresh uniform same-class draws.
    """
    by_class = ds.class_indices()
    anchors = np.tile(np.arange(len(ds)), repetition)
    rng.shuffle(anchors)
    for start in range(0, len(anchors), batch):
        a = anchors[start : start + batch]
        p = sample_partner_indices(ds, a, rng, by_class)
        yield PairBatch(ds.images[a], ds.images[p], ds.labels[a])


def make_synthetic_dataset(
    samples_per_class: int,
    class_count: int = 3,
    image_size: int = 16,
    seed: int = 0,
    noise: float = 0.15,
    name: str = "synthetic",
) -> LabeledImageDataset:
    """Structured synthetic dataset for desk-scale experiments.

    The class is carried by spatial structure (horizontal band, vertical
    band, square blob, cross, frame); each sample's base hue, structure
    position, and brightness are nuisance factors. With few samples per
    class a classifier can latch onto spurious hue/position correlations,
    which same-class mixing is designed to break.
    """
    rng = np.random.default_rng(seed)
    if class_count > 5:
        raise DatasetError("synthetic dataset supports at most 5 classes")
    images, labels = [], []
    s = image_size
    thick = max(2, s // 5)
    for k in range(class_count):
        for _ in range(samples_per_class):
            img = np.ones((s, s, 3), dtype=np.float32) * rng.uniform(0.2, 0.6, size=3)
            bright = rng.uniform(0.35, 0.6)
            row = int(rng.integers(0, s - thick))
            col = int(rng.integers(0, s - thick))
            if k == 0:  # horizontal band
                img[row : row + thick, :, :] += bright
            elif k == 1:  # vertical band
                img[:, col : col + thick, :] += bright
            elif k == 2:  # square blob
                side = 2 * thick
                r = min(row, s - side)
                c = min(col, s - side)
                img[r : r + side, c : c + side, :] += bright
            elif k == 3:  # cross
                img[row : row + thick, :, :] += bright
                img[:, col : col + thick, :] += bright
            else:  # frame
                img[:thick, :, :] += bright
                img[-thick:, :, :] += bright
                img[:, :thick, :] += bright
                img[:, -thick:, :] += bright
            img += rng.normal(0.0, noise, size=img.shape)
            images.append(np.clip(img, 0.0, 1.0))
            labels.append(k)
    return LabeledImageDataset(
        np.stack(images).astype(np.float32), np.array(labels), class_count, name
    )
