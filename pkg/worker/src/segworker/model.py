"""Training-free point-promptable segmenter.

Segmentation is color region growing around the prompt pixel at three
tolerance levels; looser tolerances grow strictly larger regions, which
gives the required object >= part >= subpart area ordering for free.
Everything is a pure function of the image bytes, so repeated calls are
bit-identical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from PIL import Image
from scipy import ndimage
from scipy.ndimage import gaussian_filter

# color-distance tolerances for the object/part/subpart levels
LEVEL_TOLERANCES = (0.30, 0.15, 0.06)
LEVEL_NAMES = ("object", "part", "subpart")
FEATURE_STRIDE = 8

_STRUCT_8 = np.ones((3, 3), dtype=bool)


def encode_runs(bitmap: np.ndarray) -> list[int]:
    """Row-major alternating background/foreground runs, first run is
    background (possibly 0)."""
    flat = np.asarray(bitmap, dtype=bool).ravel()
    change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate(([0], change, [flat.size]))
    runs = np.diff(bounds).tolist()
    if flat[0]:
        runs = [0] + runs
    return [int(r) for r in runs]


def decode_runs(height: int, width: int, runs: list[int]) -> np.ndarray:
    values = np.arange(len(runs)) % 2 == 1
    flat = np.repeat(values, np.asarray(runs, dtype=np.int64))
    if flat.size != height * width:
        raise ValueError("run sum does not match raster size")
    return flat.reshape(height, width)


@dataclass(frozen=True)
class LevelMask:
    level: str
    bitmap: np.ndarray
    score: float

    def record(self, height: int, width: int) -> dict:
        return {"level": self.level,
                "rle": {"size": [height, width],
                        "counts": encode_runs(self.bitmap)},
                "score": self.score}


class RegionSegmenter:
    def __init__(self, image_path):
        with Image.open(image_path) as im:
            rgb = im.convert("RGB")
            self.width, self.height = rgb.size
            raw = np.asarray(rgb, dtype=np.float64) / 255.0
        # mild smoothing so 1-px compression artifacts do not split regions
        self.image = gaussian_filter(raw, sigma=(0.5, 0.5, 0))
        self.raw = raw

    def segment_point(self, row: float, col: float) -> list[LevelMask]:
        r, c = int(math.floor(row)), int(math.floor(col))
        if not (0 <= r < self.height and 0 <= c < self.width):
            raise ValueError(f"point ({row}, {col}) outside image")
        seed_color = self.image[r, c]
        dist = np.sqrt(((self.image - seed_color) ** 2).sum(axis=2))
        out = []
        for name, tol in zip(LEVEL_NAMES, LEVEL_TOLERANCES):
            similar = dist < tol
            labels, _ = ndimage.label(similar, structure=_STRUCT_8)
            region = labels == labels[r, c]
            out.append(LevelMask(name, region, _compactness(region)))
        return out

    def embed(self) -> np.ndarray:
        """Mean-color patch features at stride 8, shaped (3, gh, gw)."""
        h, w = self.height, self.width
        gh, gw = math.ceil(h / FEATURE_STRIDE), math.ceil(w / FEATURE_STRIDE)
        data = np.zeros((3, gh, gw), dtype=np.float32)
        for i in range(gh):
            for j in range(gw):
                patch = self.raw[i * FEATURE_STRIDE:(i + 1) * FEATURE_STRIDE,
                                 j * FEATURE_STRIDE:(j + 1) * FEATURE_STRIDE]
                data[:, i, j] = patch.reshape(-1, 3).mean(axis=0)
        return data


def _compactness(bitmap: np.ndarray) -> float:
    """Area over bounding-box area: a cheap, deterministic confidence
    proxy in (0, 1]."""
    rows = np.flatnonzero(bitmap.any(axis=1))
    cols = np.flatnonzero(bitmap.any(axis=0))
    box = (rows[-1] - rows[0] + 1) * (cols[-1] - cols[0] + 1)
    return round(float(bitmap.sum() / box), 6)


def grid_points(height: int, width: int, n: int) -> list[tuple[float, float]]:
    """Cell-center n-per-side grid in row-major order."""
    return [((i + 0.5) * height / n, (j + 0.5) * width / n)
            for i in range(n) for j in range(n)]
