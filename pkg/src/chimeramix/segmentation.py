"""Graph-based image segmentation (Felzenszwalb-Huttenlocher style).

Pixels form a grid graph whose edge weights are Euclidean distances between
Gaussian-smoothed color vectors. Components merge greedily in ascending
edge-weight order when the connecting edge is no heavier than each
component's internal variation plus scale/|C|; a second pass absorbs
components below the minimum size.
"""

from __future__ import annotations

import hashlib
import pickle
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import DatasetError

CACHE_MAGIC = b"CMSEG"
CACHE_VERSION = 1


@dataclass
class FelzParams:
    """Segmentation hyperparameters: merge threshold, minimum region size,
    Gaussian pre-smoothing, and grid connectivity (4 or 8)."""

    scale: float = 60.0
    min_size: int = 60
    sigma: float = 0.8
    connectivity: int = 8

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError("scale must be > 0")
        if self.min_size < 1:
            raise ValueError("min_size must be >= 1")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if self.connectivity not in (4, 8):
            raise ValueError("connectivity must be 4 or 8")


@dataclass
class SegmentationMap:
    """Per-pixel region labels, dense in [0, region_count)."""

    labels: np.ndarray  # (H, W), int32
    region_count: int

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int32)
        present = np.unique(self.labels)
        if len(present) != self.region_count or present[0] != 0 or present[-1] != self.region_count - 1:
            raise DatasetError("segmentation labels must be dense 0..region_count-1")

    def region_mask(self, label: int) -> np.ndarray:
        return (self.labels == label).astype(np.uint8)

    def region_sizes(self) -> np.ndarray:
        return np.bincount(self.labels.ravel(), minlength=self.region_count)


class _UnionFind:
    """Array-based disjoint sets with path compression and union by size."""

    def __init__(self, n: int):
        self.parent = np.arange(n, dtype=np.int64)
        self.size = np.ones(n, dtype=np.int64)

    def find(self, x: int) -> int:
        root = x
        parent = self.parent
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    def union(self, a: int, b: int) -> int:
        if self.size[a] < self.size[b]:
            a, b = b, a
        self.parent[b] = a
        self.size[a] += self.size[b]
        return a


def _grid_edges(h: int, w: int, smoothed: np.ndarray, connectivity: int):
    """Edge list (u, v, weight) of the pixel grid; weights are color distances."""
    flat = smoothed.reshape(h * w, -1)
    idx = np.arange(h * w).reshape(h, w)
    offsets = [(0, 1), (1, 0)]
    if connectivity == 8:
        offsets += [(1, 1), (1, -1)]
    us, vs = [], []
    for dy, dx in offsets:
        ys, ye = (0, h - dy)
        xs, xe = (max(0, -dx), min(w, w - dx))
        u = idx[ys:ye, xs:xe].ravel()
        v = idx[ys + dy : ye + dy, xs + dx : xe + dx].ravel()
        us.append(u)
        vs.append(v)
    u = np.concatenate(us)
    v = np.concatenate(vs)
    w_ = np.sqrt(((flat[u] - flat[v]) ** 2).sum(axis=1))
    return u, v, w_


def felzenszwalb_segment(image: np.ndarray, params: FelzParams) -> SegmentationMap:
    """Segment an (H, W, C) image with intensities in [0, 1]."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 2:
        image = image[:, :, None]
    if image.ndim != 3:
        raise DatasetError(f"expected (H, W, C) image, got shape {image.shape}")
    h, w, c = image.shape

    if params.sigma > 0:
        smoothed = np.stack(
            [ndimage.gaussian_filter(image[:, :, ch], params.sigma, mode="reflect") for ch in range(c)],
            axis=-1,
        )
    else:
        smoothed = image

    u, v, weights = _grid_edges(h, w, smoothed, params.connectivity)
    order = np.argsort(weights, kind="stable")
    u, v, weights = u[order], v[order], weights[order]

    n = h * w
    uf = _UnionFind(n)
    # merge threshold per component root: Int(C) + scale / |C|
    threshold = np.full(n, params.scale, dtype=np.float64)
    for i in range(len(weights)):
        ra, rb = uf.find(u[i]), uf.find(v[i])
        if ra == rb:
            continue
        wt = weights[i]
        if wt <= threshold[ra] and wt <= threshold[rb]:
            root = uf.union(ra, rb)
            threshold[root] = wt + params.scale / uf.size[root]

    # absorb undersized components along their cheapest edges
    if params.min_size > 1:
        for i in range(len(weights)):
            ra, rb = uf.find(u[i]), uf.find(v[i])
            if ra != rb and (uf.size[ra] < params.min_size or uf.size[rb] < params.min_size):
                uf.union(ra, rb)

    roots = np.array([uf.find(i) for i in range(n)], dtype=np.int64)
    _, dense = np.unique(roots, return_inverse=True)
    # relabel by first occurrence for deterministic, order-stable labels
    first_seen = {}
    remap = np.empty(dense.max() + 1, dtype=np.int32)
    next_label = 0
    for d in dense:
        if d not in first_seen:
            first_seen[d] = next_label
            remap[d] = next_label
            next_label += 1
    labels = remap[dense].reshape(h, w)
    return SegmentationMap(labels, next_label)


def image_hash(image: np.ndarray) -> bytes:
    """Content hash used as the segmentation cache key."""
    arr = np.ascontiguousarray(np.asarray(image, dtype=np.float32))
    digest = hashlib.sha256()
    digest.update(str(arr.shape).encode())
    digest.update(arr.tobytes())
    return digest.digest()


class SegmentationCache:
    """Precomputed segmentations keyed by (image hash, params).

    File layout: magic, version, params echo, then per-entry hash + label
    array. Loading rejects files whose params differ from the requested ones.
    """

    def __init__(self, params: FelzParams):
        self.params = params
        self._entries: dict[bytes, SegmentationMap] = {}

    def __len__(self) -> int:
        return len(self._entries)

    def get(self, image: np.ndarray) -> SegmentationMap:
        key = image_hash(image)
        if key not in self._entries:
            self._entries[key] = felzenszwalb_segment(image, self.params)
        return self._entries[key]

    def populate(self, images: np.ndarray) -> None:
        for img in images:
            self.get(img)

    def save(self, path) -> None:
        payload = {
            "magic": CACHE_MAGIC,
            "version": CACHE_VERSION,
            "params": (self.params.scale, self.params.min_size, self.params.sigma, self.params.connectivity),
            "entries": {
                key: (seg.labels, seg.region_count) for key, seg in self._entries.items()
            },
        }
        with open(path, "wb") as fh:
            pickle.dump(payload, fh)

    @classmethod
    def load(cls, path, params: FelzParams) -> "SegmentationCache":
        with open(path, "rb") as fh:
            payload = pickle.load(fh)
        if payload.get("magic") != CACHE_MAGIC:
            raise DatasetError(f"{path}: not a segmentation cache file")
        if payload.get("version") != CACHE_VERSION:
            raise DatasetError(f"{path}: unsupported cache version {payload.get('version')}")
        stored = payload["params"]
        expected = (params.scale, params.min_size, params.sigma, params.connectivity)
        if tuple(stored) != expected:
            raise DatasetError(
                f"{path}: cache params {stored} do not match requested {expected}"
            )
        cache = cls(params)
        cache._entries = {
            key: SegmentationMap(labels, count)
            for key, (labels, count) in payload["entries"].items()
        }
        return cache
