"""Deterministic overlays: entity masks tinted over the image, plus a label
raster PNG with a fixed golden-ratio palette."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

from .masks import EntityMap, MaskError
from .superpixels import SuperpixelMap


def palette_color(index: int) -> tuple[float, float, float]:
    hue = (index * 0.618033988749895) % 1.0
    return _hsv(hue, 0.95, 1.0)


def _hsv(h: float, s: float, v: float) -> tuple[float, float, float]:
    i = int(h * 6) % 6
    f = h * 6 - int(h * 6)
    p, q, t = v * (1 - s), v * (1 - s * f), v * (1 - s * (1 - f))
    return [(v, t, p), (q, v, p), (p, v, t), (p, q, v), (t, p, v), (v, p, q)][i]


def overlay(entity_map: EntityMap, image: np.ndarray,
            alpha: float = 0.5) -> np.ndarray:
    """0.5-alpha color wash per mask with a solid boundary stroke."""
    if image.shape[:2] != (entity_map.height, entity_map.width):
        raise MaskError("image/entity-map size mismatch")
    out = np.array(image, dtype=np.float64)
    for idx, sm in enumerate(entity_map.masks):
        color = np.array(palette_color(idx))
        dense = sm.mask.dense
        out[dense] = (1 - alpha) * out[dense] + alpha * color
        boundary = dense & ~ndimage.binary_erosion(dense)
        out[boundary] = color
    return np.clip(out, 0.0, 1.0)


def label_image(entity_map: EntityMap) -> np.ndarray:
    out = np.zeros((entity_map.height, entity_map.width, 3), dtype=np.float64)
    for idx, sm in enumerate(entity_map.masks):
        out[sm.mask.dense] = palette_color(idx)
    return out


def superpixel_image(sp: SuperpixelMap) -> np.ndarray:
    out = np.zeros((*sp.shape, 3), dtype=np.float64)
    for label in range(sp.num_regions):
        out[sp.labels == label] = palette_color(label)
    return out


def save_png(raster: np.ndarray, path) -> Path:
    path = Path(path)
    data = (np.clip(raster, 0, 1) * 255).round().astype(np.uint8)
    Image.fromarray(data).save(path)
    return path
