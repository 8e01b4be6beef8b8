"""Synthetic scenes: disjoint colored shapes with part decompositions.

Scenes are the ground-truth substrate for the oracle provider and the
evaluation harness: every entity mask is known exactly, so pipeline
behavior can be verified without a trained segmenter.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from ..masks import BinaryMask, EntityMap, MaskError, ScoredMask

SHAPES = ("rectangle", "ellipse", "l_polyomino")


@dataclass(frozen=True)
class NoiseSpec:
    boundary_jitter_px: int = 0
    score_noise_std: float = 0.0
    dropout_prob: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.boundary_jitter_px < 0 or self.score_noise_std < 0:
            raise ValueError("negative noise parameter")
        if not 0.0 <= self.dropout_prob < 1.0:
            raise ValueError("dropout_prob must be in [0,1)")

    def is_noiseless(self) -> bool:
        return (self.boundary_jitter_px == 0 and self.score_noise_std == 0.0
                and self.dropout_prob == 0.0)


@dataclass(frozen=True)
class EntitySpec:
    shape: str  # rectangle | ellipse | l_polyomino
    origin: tuple[int, int]  # (row, col) of bbox top-left
    size: tuple[int, int]  # (height, width) of bbox
    color: tuple[float, float, float]
    n_parts: int = 1

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise ValueError(f"unknown shape {self.shape!r}")
        if not 1 <= self.n_parts <= 4:
            raise ValueError("n_parts must be in 1..4")


@dataclass(frozen=True)
class SceneSpec:
    height: int
    width: int
    entities: tuple[EntitySpec, ...]
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    background: tuple[float, float, float] = (0.55, 0.55, 0.55)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "SceneSpec":
        raw = json.loads(text)
        entities = tuple(
            EntitySpec(e["shape"], tuple(e["origin"]), tuple(e["size"]),
                       tuple(e["color"]), e.get("n_parts", 1))
            for e in raw["entities"])
        noise = NoiseSpec(**raw.get("noise", {}))
        return cls(raw["height"], raw["width"], entities, noise,
                   tuple(raw.get("background", (0.55, 0.55, 0.55))))


def entity_bitmap(spec: EntitySpec, height: int, width: int) -> np.ndarray:
    r0, c0 = spec.origin
    h, w = spec.size
    if r0 < 0 or c0 < 0 or r0 + h > height or c0 + w > width or h < 2 or w < 2:
        raise MaskError(f"entity bbox out of canvas: {spec}")
    out = np.zeros((height, width), dtype=bool)
    if spec.shape == "rectangle":
        out[r0:r0 + h, c0:c0 + w] = True
    elif spec.shape == "ellipse":
        rr, cc = np.mgrid[0:height, 0:width]
        cy, cx = r0 + (h - 1) / 2, c0 + (w - 1) / 2
        out = ((rr - cy) / (h / 2)) ** 2 + ((cc - cx) / (w / 2)) ** 2 <= 1.0
    else:  # L: bbox minus its top-right quadrant
        out[r0:r0 + h, c0:c0 + w] = True
        out[r0:r0 + h // 2, c0 + w // 2:c0 + w] = False
    return out


def entity_parts(bitmap: np.ndarray, n_parts: int) -> list[np.ndarray]:
    """Partition a shape into column bands of roughly equal foreground area."""
    total = int(bitmap.sum())
    n_parts = max(1, min(n_parts, total))
    col_counts = bitmap.sum(axis=0)
    cum = np.cumsum(col_counts)
    cuts = [0]
    for i in range(1, n_parts):
        target = total * i / n_parts
        cuts.append(int(np.searchsorted(cum, target) + 1))
    cuts.append(bitmap.shape[1])
    parts = []
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        band = np.zeros_like(bitmap)
        band[:, lo:hi] = bitmap[:, lo:hi]
        if band.any():
            parts.append(band)
    # degenerate cuts can drop a band; absorb anything left over into the last
    covered = np.zeros_like(bitmap)
    for p in parts:
        covered |= p
    rest = bitmap & ~covered
    if rest.any():
        parts[-1] = parts[-1] | rest
    return parts


# parts of one entity are rendered in distinct shades of its color, so
# superpixel clustering resolves intra-entity structure
_PART_SHADES = (1.0, 0.82, 1.18, 0.7)


def render_scene(scene: SceneSpec) -> tuple[np.ndarray, np.ndarray]:
    """Render (image, entity_label_map); label -1 is background."""
    h, w = scene.height, scene.width
    image = np.empty((h, w, 3), dtype=np.float64)
    image[:] = scene.background
    label = np.full((h, w), -1, dtype=np.int32)
    occupied = np.zeros((h, w), dtype=bool)
    for i, e in enumerate(scene.entities):
        bm = entity_bitmap(e, h, w)
        if (bm & occupied).any():
            raise MaskError(f"entities overlap at index {i}")
        occupied |= bm
        label[bm] = i
        for pi, part in enumerate(entity_parts(bm, e.n_parts)):
            shade = np.clip(np.array(e.color) * _PART_SHADES[pi % 4], 0.0, 1.0)
            image[part] = shade
    return image, label


def ground_truth(scene: SceneSpec) -> EntityMap:
    """Noiseless per-entity masks, all scored 1.0."""
    _, label = render_scene(scene)
    masks = [ScoredMask(BinaryMask.from_dense(label == i), 1.0, "object", None)
             for i in range(len(scene.entities))]
    return EntityMap.build(masks, scene.height, scene.width)


# deterministic palette of well-separated hues for generated scenes
def _palette_color(i: int) -> tuple[float, float, float]:
    hue = (i * 0.381966) % 1.0  # golden-ratio rotation
    return _hsv_to_rgb(hue, 0.85, 0.9)


def _hsv_to_rgb(h: float, s: float, v: float) -> tuple[float, float, float]:
    i = int(h * 6) % 6
    f = h * 6 - int(h * 6)
    p, q, t = v * (1 - s), v * (1 - s * f), v * (1 - s * (1 - f))
    rgb = [(v, t, p), (q, v, p), (p, v, t), (p, q, v), (t, p, v), (v, p, q)][i]
    return tuple(round(c, 4) for c in rgb)


def random_scene(seed: int, height: int = 96, width: int = 96,
                 n_entities: tuple[int, int] = (3, 6),
                 entity_size: tuple[int, int] = (16, 34),
                 noise: NoiseSpec | None = None,
                 margin: int = 3) -> SceneSpec:
    """Seeded random scene of disjoint shapes with distinct colors."""
    rng = np.random.default_rng(np.random.SeedSequence([0x5CE2E, seed]))
    target = int(rng.integers(n_entities[0], n_entities[1] + 1))
    entities: list[EntitySpec] = []
    boxes: list[tuple[int, int, int, int]] = []
    attempts = 0
    while len(entities) < target and attempts < 400:
        attempts += 1
        small = len(entities) == target - 1  # one small entity per scene
        lo, hi = (9, 13) if small else entity_size
        eh = int(rng.integers(lo, hi + 1))
        ew = int(rng.integers(lo, hi + 1))
        if eh >= height - 2 or ew >= width - 2:
            continue
        r0 = int(rng.integers(1, height - eh))
        c0 = int(rng.integers(1, width - ew))
        box = (r0 - margin, c0 - margin, r0 + eh + margin, c0 + ew + margin)
        if any(not (box[2] <= b[0] or b[2] <= box[0] or box[3] <= b[1] or b[3] <= box[1])
               for b in boxes):
            continue
        shape = SHAPES[int(rng.integers(0, len(SHAPES)))]
        n_parts = int(rng.integers(2, 5))
        entities.append(EntitySpec(shape, (r0, c0), (eh, ew),
                                   _palette_color(len(entities)), n_parts))
        boxes.append(box)
    spec_noise = noise if noise is not None else NoiseSpec(seed=seed)
    if noise is not None and noise.seed == 0:
        spec_noise = NoiseSpec(noise.boundary_jitter_px, noise.score_noise_std,
                               noise.dropout_prob, seed)
    return SceneSpec(height, width, tuple(entities), spec_noise)
