"""Binary mixing masks at feature resolution.

A mask entry of 1 selects the first parent's feature vector at that
location, 0 selects the second parent's (the convention used throughout
the generator).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .segmentation import SegmentationMap


@dataclass
class MixMask:
    """Binary H'xW' mask plus a tag recording how it was produced."""

    values: np.ndarray  # (H', W'), uint8 in {0, 1}
    source: str  # "grid" | "segmentation" | "constant"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.uint8)
        if not np.isin(self.values, (0, 1)).all():
            raise ValueError("mask entries must be 0 or 1")

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def complement(self) -> "MixMask":
        return MixMask(1 - self.values, self.source)


def _nearest_upsample(bits: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Nearest-neighbor upsample so the output is piecewise constant on blocks."""
    g_h, g_w = bits.shape
    rows = (np.arange(out_h) * g_h) // out_h
    cols = (np.arange(out_w) * g_w) // out_w
    return bits[np.ix_(rows, cols)]


def sample_grid_mask(
    grid_size: int, feat_h: int, feat_w: int, rng: np.random.Generator, p: float = 0.5
) -> MixMask:
    """Bernoulli(p) bits on a grid_size x grid_size grid, nearest-upsampled."""
    if not 1 <= grid_size <= min(feat_h, feat_w):
        raise ValueError(
            f"grid size {grid_size} must be in [1, {min(feat_h, feat_w)}] for a "
            f"{feat_h}x{feat_w} feature map"
        )
    bits = (rng.random((grid_size, grid_size)) < p).astype(np.uint8)
    return MixMask(_nearest_upsample(bits, feat_h, feat_w), "grid")


def grid_block_partition(grid_size: int, feat_h: int, feat_w: int):
    """Block index of each feature cell under the grid mask's partition."""
    rows = (np.arange(feat_h) * grid_size) // feat_h
    cols = (np.arange(feat_w) * grid_size) // feat_w
    return rows[:, None] * grid_size + cols[None, :]


def downsample_binary(full: np.ndarray, feat_h: int, feat_w: int) -> np.ndarray:
    """Area-average a full-resolution binary mask per feature cell, then
    threshold at 0.5 with ties going to 1."""
    h, w = full.shape
    row_edges = (np.arange(feat_h + 1) * h) // feat_h
    col_edges = (np.arange(feat_w + 1) * w) // feat_w
    out = np.zeros((feat_h, feat_w), dtype=np.uint8)
    full = full.astype(np.float64)
    for i in range(feat_h):
        for j in range(feat_w):
            cell = full[row_edges[i] : row_edges[i + 1], col_edges[j] : col_edges[j + 1]]
            out[i, j] = 1 if cell.mean() >= 0.5 else 0
    return out


def sample_seg_mask(
    segmap: SegmentationMap,
    feat_h: int,
    feat_w: int,
    rng: np.random.Generator,
    per_region: bool = False,
) -> MixMask:
    """Mask from a segmentation: one uniformly chosen region by default, or
    an independent Bernoulli(0.5) bit per region when per_region is set.

    The full-resolution region mask is downsampled by area averaging; a
    region too small to win any feature cell yields an all-zero mask, which
    is kept (it degenerates to a pure reconstruction of the second parent).
    """
    if per_region:
        bits = (rng.random(segmap.region_count) < 0.5).astype(np.uint8)
        full = bits[segmap.labels]
    else:
        region = int(rng.integers(segmap.region_count))
        full = segmap.region_mask(region)
    return MixMask(downsample_binary(full, feat_h, feat_w), "segmentation")


def constant_mask(value: int, feat_h: int, feat_w: int) -> MixMask:
    """All-ones (first parent passes) or all-zeros (second parent passes)."""
    if value not in (0, 1):
        raise ValueError("constant mask value must be 0 or 1")
    return MixMask(np.full((feat_h, feat_w), value, dtype=np.uint8), "constant")


def upsample_mask_to_image(mask: MixMask, image_h: int, image_w: int) -> np.ndarray:
    """Nearest-neighbor upsample of a feature-resolution mask to pixel space."""
    return _nearest_upsample(mask.values, image_h, image_w)


class MaskSampler:
    """Draws mixing masks at a fixed feature resolution.

    Grid masks need only the feature size; segmentation masks are derived
    from the first parent image via a (cached) segmentation.
    """

    def __init__(
        self,
        source: str,
        feat_h: int,
        feat_w: int,
        grid_size: int = 4,
        seg_cache=None,
        per_region: bool = False,
    ):
        if source not in ("grid", "segmentation", "constant"):
            raise ValueError(f"unknown mask source '{source}'")
        if source == "segmentation" and seg_cache is None:
            raise ValueError("segmentation mask source requires a segmentation cache")
        self.source = source
        self.feat_h = feat_h
        self.feat_w = feat_w
        self.grid_size = grid_size
        self.seg_cache = seg_cache
        self.per_region = per_region

    def sample(self, image: np.ndarray, rng: np.random.Generator) -> MixMask:
        if self.source == "grid":
            return sample_grid_mask(self.grid_size, self.feat_h, self.feat_w, rng)
        if self.source == "segmentation":
            segmap = self.seg_cache.get(image)
            return sample_seg_mask(segmap, self.feat_h, self.feat_w, rng, self.per_region)
        return constant_mask(1, self.feat_h, self.feat_w)
