"""Graph-based superpixel clustering and the entity-density map.

The clustering is the classic union-find merge over an 8-connected grid
graph sorted by color-distance edge weight, with per-component threshold
Int(C) + k/|C| and a final min-size merge pass.  Edge weights are computed
on 0..255-scaled colors so the conventional scale parameter values apply.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter

from .masks import BinaryMask, MaskError


@dataclass(frozen=True)
class Region:
    area: int
    centroid: tuple[float, float]
    mean_color: tuple[float, float, float]


@dataclass(frozen=True)
class SuperpixelMap:
    labels: np.ndarray  # int raster, values 0..K-1
    regions: tuple[Region, ...]

    @property
    def num_regions(self) -> int:
        return len(self.regions)

    @property
    def shape(self) -> tuple[int, int]:
        return self.labels.shape


@dataclass(frozen=True)
class DensityMap:
    values: np.ndarray  # real raster in [0,1], piecewise constant per superpixel


class _UnionFind:
    __slots__ = ("parent", "size")

    def __init__(self, n: int):
        self.parent = np.arange(n, dtype=np.int64)
        self.size = np.ones(n, dtype=np.int64)

    def find(self, x: int) -> int:
        parent = self.parent
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:  # path compression
            parent[x], x = root, parent[x]
        return root

    def join(self, a: int, b: int) -> int:
        if self.size[a] < self.size[b]:
            a, b = b, a
        self.parent[b] = a
        self.size[a] += self.size[b]
        return a


def _grid_edges(h: int, w: int) -> tuple[np.ndarray, np.ndarray]:
    """Endpoint index arrays for the 8-connected grid graph, in a fixed
    construction order (right, down, down-right, down-left)."""
    idx = np.arange(h * w).reshape(h, w)
    pairs = []
    pairs.append((idx[:, :-1].ravel(), idx[:, 1:].ravel()))
    pairs.append((idx[:-1, :].ravel(), idx[1:, :].ravel()))
    pairs.append((idx[:-1, :-1].ravel(), idx[1:, 1:].ravel()))
    pairs.append((idx[:-1, 1:].ravel(), idx[1:, :-1].ravel()))
    a = np.concatenate([p[0] for p in pairs])
    b = np.concatenate([p[1] for p in pairs])
    return a, b


def felzenszwalb(image: np.ndarray, scale_k: float = 200.0, sigma: float = 0.8,
                 min_size: int = 100) -> SuperpixelMap:
    """Segment an H×W×3 image (values in [0,1]) into superpixels."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3 or image.shape[2] != 3:
        raise MaskError(f"expected H×W×3 image, got shape {image.shape}")
    h, w = image.shape[:2]
    if h < 2 or w < 2:
        raise MaskError("image too small to segment")
    if scale_k <= 0 or sigma < 0 or min_size < 1:
        raise MaskError("invalid clustering parameters")

    smoothed = image * 255.0
    if sigma > 0:
        smoothed = gaussian_filter(smoothed, sigma=(sigma, sigma, 0))

    ea, eb = _grid_edges(h, w)
    flat = smoothed.reshape(-1, 3)
    weights = np.sqrt(((flat[ea] - flat[eb]) ** 2).sum(axis=1))
    # stable sort keeps construction-index tie order, so results are
    # deterministic across runs
    order = np.argsort(weights, kind="stable")

    uf = _UnionFind(h * w)
    threshold = np.full(h * w, scale_k, dtype=np.float64)
    find, join = uf.find, uf.join
    for e in order:
        ra, rb = find(int(ea[e])), find(int(eb[e]))
        if ra == rb:
            continue
        wgt = weights[e]
        if wgt <= threshold[ra] and wgt <= threshold[rb]:
            root = join(ra, rb)
            threshold[root] = wgt + scale_k / uf.size[root]

    # merge undersized components into their nearest-edge neighbor
    for e in order:
        ra, rb = find(int(ea[e])), find(int(eb[e]))
        if ra != rb and (uf.size[ra] < min_size or uf.size[rb] < min_size):
            join(ra, rb)

    roots = np.fromiter((find(i) for i in range(h * w)), dtype=np.int64, count=h * w)
    _, first_idx, inverse = np.unique(roots, return_index=True, return_inverse=True)
    # np.unique sorts by root id; renumber in first-pixel order
    remap = np.empty(first_idx.size, dtype=np.int64)
    remap[np.argsort(first_idx, kind="stable")] = np.arange(first_idx.size)
    labels = remap[inverse].reshape(h, w)

    regions = _region_stats(labels, image)
    return SuperpixelMap(labels, regions)


def _region_stats(labels: np.ndarray, image: np.ndarray) -> tuple[Region, ...]:
    h, w = labels.shape
    k = int(labels.max()) + 1
    flat = labels.ravel()
    areas = np.bincount(flat, minlength=k)
    rows, cols = np.indices((h, w))
    crow = np.bincount(flat, weights=rows.ravel(), minlength=k) / areas
    ccol = np.bincount(flat, weights=cols.ravel(), minlength=k) / areas
    colors = [np.bincount(flat, weights=image[..., c].ravel(), minlength=k) / areas
              for c in range(3)]
    return tuple(
        Region(int(areas[i]), (float(crow[i]), float(ccol[i])),
               (float(colors[0][i]), float(colors[1][i]), float(colors[2][i])))
        for i in range(k)
    )


def density_map(sp: SuperpixelMap) -> DensityMap:
    """Per-superpixel density weight w = 1 / (1 + A/Ā), painted per pixel.

    Small superpixels (relative to the mean area) get values closer to 1,
    marking visually dense regions.
    """
    areas = np.array([r.area for r in sp.regions], dtype=np.float64)
    mean_area = areas.mean()
    weights = 1.0 / (1.0 + areas / mean_area)
    return DensityMap(weights[sp.labels])


def mask_density(d: DensityMap, mask: BinaryMask) -> float:
    """Mean density value over the mask's foreground pixels."""
    if d.values.shape != mask.shape:
        raise MaskError("density/mask dimension mismatch")
    if mask.area == 0:
        raise MaskError("density of empty mask")
    return float(d.values[mask.dense].mean())


def default_felz_params(height: int, width: int,
                        scale_k: float = 200.0, sigma: float = 0.8,
                        min_size: int = 100) -> tuple[float, float, int]:
    """Scale min_size below 512 px on the short side."""
    short = min(height, width)
    if short < 512:
        min_size = max(1, round(min_size * short / 512))
    return scale_k, sigma, min_size
