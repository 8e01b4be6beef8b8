"""Synthetic oracle provider: answers prompts from a known scene.

Confidence scores are the IoU of the emitted mask against the noiseless
truth (plus optional score noise), so score-based selection downstream is
exercised honestly.  All randomness derives from the scene's noise seed;
identical inputs produce bit-identical outputs.
"""

from __future__ import annotations

import math
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage

from ..masks import BinaryMask, ScoredMask
from . import FeatureGrid, MaskTriple, PointPrompt, SegmenterProvider, sorted_triple
from .scenes import SceneSpec, entity_parts, render_scene

FEATURE_STRIDE = 8


class OracleProvider(SegmenterProvider):
    single_flight = False  # pure given the seed

    def __init__(self, scene: SceneSpec):
        self.scene = scene
        self._image, self._labels = render_scene(scene)
        self._entity_masks = [np.asarray(self._labels == i)
                              for i in range(len(scene.entities))]
        self._parts = [entity_parts(m, e.n_parts)
                       for m, e in zip(self._entity_masks, scene.entities)]
        self._jitter_cache: dict[tuple, np.ndarray] = {}
        self._mask_cache: dict[tuple, ScoredMask] = {}

    @property
    def height(self) -> int:
        return self.scene.height

    @property
    def width(self) -> int:
        return self.scene.width

    def image(self) -> np.ndarray:
        return np.array(self._image)

    # -- segmentation -----------------------------------------------------

    def segment(self, prompts: Sequence[PointPrompt]) -> list[MaskTriple]:
        self.check_bounds(prompts)
        return [self._answer(p) for p in prompts]

    def _answer(self, prompt: PointPrompt) -> MaskTriple:
        r, c = int(math.floor(prompt.row)), int(math.floor(prompt.col))
        entity = int(self._labels[r, c])
        if entity < 0:
            empty = ScoredMask(BinaryMask.empty(self.height, self.width), 0.0)
            return sorted_triple(prompt.id, [empty, empty, empty])

        parts = self._parts[entity]
        part_idx = next(i for i, p in enumerate(parts) if p[r, c])
        subpart, quad_key = self._subpart(parts[part_idx], r, c)
        truth = {
            "object": self._entity_masks[entity],
            "part": parts[part_idx],
            "subpart": subpart,
        }
        keys = {
            "object": (entity, "object", 0, 0),
            "part": (entity, "part", part_idx, 0),
            "subpart": (entity, "subpart", part_idx, quad_key),
        }
        noise = self.scene.noise
        emitted = {
            level: self._perturb(truth[level], keys[level])
            for level in ("object", "part", "subpart")
        }
        if noise.dropout_prob > 0:
            rng = np.random.default_rng(
                np.random.SeedSequence([noise.seed, 0xD0, prompt.id]))
            if rng.random() < noise.dropout_prob:
                # simulate under-segmentation: object collapses to the part
                emitted["object"] = emitted["part"]
                keys["object"] = keys["part"]
                truth = dict(truth, object=truth["part"])
        masks = []
        for li, level in enumerate(("object", "part", "subpart")):
            scored = self._scored(emitted[level], truth[level], keys[level], (r, c))
            score = scored.score
            if noise.score_noise_std > 0:
                rng = np.random.default_rng(
                    np.random.SeedSequence([noise.seed, 0x5C, prompt.id, li]))
                score = float(np.clip(score + rng.normal(0.0, noise.score_noise_std),
                                      0.0, 1.0))
            masks.append(ScoredMask(scored.mask, score))
        return sorted_triple(prompt.id, masks)

    def _scored(self, emitted: np.ndarray, truth: np.ndarray, key: tuple,
                point: tuple[int, int]) -> ScoredMask:
        """Encode and score an emitted mask, caching per (entity, level, part)."""
        cached = self._mask_cache.get(key)
        if cached is not None and cached.mask.dense[point]:
            return cached
        if not emitted[point]:  # emitted masks always contain their prompt
            emitted = np.array(emitted)
            emitted[point] = True
            return ScoredMask(BinaryMask.from_dense(emitted),
                              _bitmap_iou(emitted, truth))
        sm = ScoredMask(BinaryMask.from_dense(emitted), _bitmap_iou(emitted, truth))
        self._mask_cache.setdefault(key, sm)
        return sm

    def _subpart(self, part: np.ndarray, r: int, c: int) -> tuple[np.ndarray, int]:
        """Quadrant of the part (split at its centroid) containing the point.
        Returns (bitmap, quadrant index) for caching."""
        rows, cols = np.nonzero(part)
        cr, cc = rows.mean(), cols.mean()
        rr, cc_grid = np.indices(part.shape, sparse=True)
        rsel = rr <= cr if r <= cr else rr > cr
        csel = cc_grid <= cc if c <= cc else cc_grid > cc
        quad = part & rsel & csel
        quad_key = 2 * int(r <= cr) + int(c <= cc)
        return (quad, quad_key) if quad.any() else (part, 4)

    def _perturb(self, truth: np.ndarray, key: tuple) -> np.ndarray:
        jit = self.scene.noise.boundary_jitter_px
        if jit == 0:
            return truth
        if key not in self._jitter_cache:
            rng = np.random.default_rng(
                np.random.SeedSequence([self.scene.noise.seed, 0x1A,
                                        *_key_ints(key)]))
            dr = int(rng.integers(-jit, jit + 1))
            dc = int(rng.integers(-jit, jit + 1))
            out = _shift(truth, dr, dc)
            mode = rng.integers(0, 3)
            if mode == 1:
                out = ndimage.binary_dilation(out)
            elif mode == 2:
                eroded = ndimage.binary_erosion(out)
                if eroded.any():
                    out = eroded
            self._jitter_cache[key] = out
        return self._jitter_cache[key]

    # -- features ---------------------------------------------------------

    def embed(self) -> Optional[FeatureGrid]:
        return mean_color_grid(self._image, FEATURE_STRIDE)


def mean_color_grid(image: np.ndarray, stride: int) -> FeatureGrid:
    """Mean-color patch features: C=3 at the given stride (edge patches padded
    by truncation)."""
    h, w = image.shape[:2]
    gh, gw = math.ceil(h / stride), math.ceil(w / stride)
    data = np.zeros((3, gh, gw), dtype=np.float32)
    for i in range(gh):
        for j in range(gw):
            patch = image[i * stride:(i + 1) * stride, j * stride:(j + 1) * stride]
            data[:, i, j] = patch.reshape(-1, 3).mean(axis=0)
    return FeatureGrid(3, gh, gw, data)


def _bitmap_iou(a: np.ndarray, b: np.ndarray) -> float:
    inter = np.count_nonzero(a & b)
    union = np.count_nonzero(a | b)
    return inter / union if union else 0.0


def _shift(bitmap: np.ndarray, dr: int, dc: int) -> np.ndarray:
    out = np.zeros_like(bitmap)
    h, w = bitmap.shape
    rs, re = max(0, dr), min(h, h + dr)
    cs, ce = max(0, dc), min(w, w + dc)
    out[rs:re, cs:ce] = bitmap[rs - dr:re - dr, cs - dc:ce - dc]
    return out if out.any() else bitmap


def _key_ints(key: tuple) -> list[int]:
    levels = {"object": 0, "part": 1, "subpart": 2}
    out = []
    for k in key:
        out.append(levels[k] if isinstance(k, str) else int(k))
    return out
