"""Sample-quality and accuracy evaluation: Frechet distance between
Gaussian fits of feature activations, top-1 accuracy, and the direct
pixel-space mixing used by the ablation baselines.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from . import data as data_mod

from .masks import MaskSampler, MixMask, upsample_mask_to_image
from .model import MixingGenerator, from_model_range, to_model_range


@dataclass
class ActivationStats:
    """Gaussian fit (mean, covariance) of feature activations."""

    mu: np.ndarray
    sigma: np.ndarray
    n: int

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=np.float64)
        self.sigma = np.asarray(self.sigma, dtype=np.float64)
        if self.n < 2:
            raise ValueError("need at least 2 samples for covariance")


def activation_stats(features: np.ndarray) -> ActivationStats:
    """Sample mean and unbiased covariance of an (N, d) feature matrix."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or len(features) < 2:
        raise ValueError(f"need an (N>=2, d) feature matrix, got shape {features.shape}")
    mu = features.mean(axis=0)
    centered = features - mu
    sigma = centered.T @ centered / (len(features) - 1)
    return ActivationStats(mu, sigma, len(features))


def _sqrtm_psd(mat: np.ndarray) -> np.ndarray:
    """Matrix square root via symmetric eigendecomposition, eigenvalues
    clamped at zero (sample covariances can be slightly indefinite)."""
    sym = (mat + mat.T) / 2.0
    eigvals, eigvecs = np.linalg.eigh(sym)
    return (eigvecs * np.sqrt(np.clip(eigvals, 0.0, None))) @ eigvecs.T


def fid(a: ActivationStats, b: ActivationStats) -> float:
    """||mu_a - mu_b||^2 + tr(S_a + S_b - 2 (S_a^{1/2} S_b S_a^{1/2})^{1/2})."""
    if a.mu.shape != b.mu.shape:
        raise ValueError(f"dimension mismatch: {a.mu.shape} vs {b.mu.shape}")
    for stats in (a, b):
        if not (np.isfinite(stats.mu).all() and np.isfinite(stats.sigma).all()):
            raise ValueError("non-finite activation statistics")
    diff = a.mu - b.mu
    root_a = _sqrtm_psd(a.sigma)
    cross = _sqrtm_psd(root_a @ b.sigma @ root_a)
    value = diff @ diff + np.trace(a.sigma + b.sigma - 2.0 * cross)
    return max(0.0, float(value))


def pixel_mix(x1: np.ndarray, x2: np.ndarray, mask: MixMask) -> np.ndarray:
    """Mix two images directly in pixel space under the nearest-upsampled mask."""
    if x1.shape != x2.shape:
        raise ValueError(f"image shapes differ: {x1.shape} vs {x2.shape}")
    full = upsample_mask_to_image(mask, x1.shape[0], x1.shape[1])
    return np.where(full[:, :, None].astype(bool), x1, x2)


@torch.no_grad()
def evaluate_accuracy(model, ds: data_mod.LabeledImageDataset, batch_size: int = 256) -> float:
    """Top-1 accuracy of a classifier on a dataset."""
    model.eval()
    correct = 0
    for start in range(0, len(ds), batch_size):
        batch = to_model_range(ds.images[start : start + batch_size])
        preds = model(batch).argmax(dim=1).cpu().numpy()
        correct += int((preds == ds.labels[start : start + batch_size]).sum())
    return correct / len(ds)


class RandomProjectionExtractor:
    """Deterministic feature extractor: resize, fixed random projection, tanh.

    Stands in for a pretrained backbone so the Frechet-distance math is
    testable without external weights; real extractor weights can be loaded
    with :func:`load_linear_extractor`.
    """

    def __init__(self, dim: int = 64, input_size: int = 32, seed: int = 0, channels: int = 3):
        self.dim = dim
        self.input_size = input_size
        rng = np.random.default_rng(seed)
        flat = input_size * input_size * channels
        self.weight = rng.normal(0.0, 1.0 / np.sqrt(flat), size=(flat, dim))
        self.bias = rng.normal(0.0, 0.1, size=dim)
        self.identifier = f"random-projection-d{dim}-s{input_size}-seed{seed}"

    def _resize(self, images: np.ndarray) -> np.ndarray:
        t = torch.from_numpy(images.astype(np.float32)).permute(0, 3, 1, 2)
        # bilinear with antialiasing, recorded in the manifest via identifier
        t = F.interpolate(t, size=(self.input_size, self.input_size), mode="bilinear", antialias=True)
        return t.permute(0, 2, 3, 1).numpy()

    def extract(self, images: np.ndarray) -> np.ndarray:
        if images.shape[1:3] != (self.input_size, self.input_size):
            images = self._resize(images)
        flat = images.reshape(len(images), -1).astype(np.float64)
        return np.tanh(flat @ self.weight + self.bias)


class LinearExtractor:
    """Extractor backed by externally supplied projection weights."""

    def __init__(self, weight: np.ndarray, bias: np.ndarray, input_size: int, identifier: str):
        self.weight = np.asarray(weight, dtype=np.float64)
        self.bias = np.asarray(bias, dtype=np.float64)
        self.input_size = input_size
        self.identifier = identifier
        self.dim = self.weight.shape[1]

    _resize = RandomProjectionExtractor._resize
    extract = RandomProjectionExtractor.extract


def load_linear_extractor(path) -> LinearExtractor:
    """Load extractor weights saved as an .npz with weight/bias/input_size."""
    payload = np.load(path, allow_pickle=False)
    return LinearExtractor(
        payload["weight"],
        payload["bias"],
        int(payload["input_size"]),
        f"linear-extractor:{path}",
    )


def generate_chimeras(
    generator: MixingGenerator,
    ds: data_mod.LabeledImageDataset,
    mask_sampler: MaskSampler,
    n_samples: int,
    rng: np.random.Generator,
    batch_size: int = 64,
) -> np.ndarray:
    """Sample same-class pairs and masks and produce generated compositions
    at the dataset's native resolution."""
    gen_h, gen_w = generator.config.input_size
    native_h, native_w = ds.image_shape[:2]
    out = []
    generator.eval()
    with torch.no_grad():
        remaining = n_samples
        while remaining > 0:
            batch = data_mod.sample_same_class_pairs(ds, min(batch_size, remaining), rng)
            masks = np.stack([mask_sampler.sample(img, rng).values for img in batch.first])
            x1 = to_model_range(batch.first)
            x2 = to_model_range(batch.second)
            if (native_h, native_w) != (gen_h, gen_w):
                x1 = F.interpolate(x1, size=(gen_h, gen_w), mode="bilinear", align_corners=False)
                x2 = F.interpolate(x2, size=(gen_h, gen_w), mode="bilinear", align_corners=False)
            fake = generator(x1, x2, masks[:, None, :, :])
            if (native_h, native_w) != (gen_h, gen_w):
                fake = F.interpolate(fake, size=(native_h, native_w), mode="bilinear", align_corners=False)
            out.append(from_model_range(fake))
            remaining -= len(batch)
    return np.concatenate(out)[:n_samples]


def fid_report(
    generator: MixingGenerator,
    reference_ds: data_mod.LabeledImageDataset,
    extractor,
    n_samples: int,
    mask_sampler: MaskSampler,
    seed: int = 0,
) -> tuple[float, dict]:
    """FID between generated chimeras and a reference dataset, plus a
    manifest recording everything needed to reproduce the number."""
    if n_samples < 2:
        raise ValueError("n_samples must be >= 2")
    rng = np.random.default_rng(seed)
    generated = generate_chimeras(generator, reference_ds, mask_sampler, n_samples, rng)
    stats_gen = activation_stats(extractor.extract(generated))
    stats_ref = activation_stats(extractor.extract(reference_ds.images))
    value = fid(stats_gen, stats_ref)
    manifest = {
        "fid": value,
        "seed": seed,
        "extractor": extractor.identifier,
        "n_generated": int(n_samples),
        "n_reference": len(reference_ds),
        "mask_source": mask_sampler.source,
        "resize_filter": "bilinear-antialias",
    }
    return value, manifest
