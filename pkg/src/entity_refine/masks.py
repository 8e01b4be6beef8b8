"""Run-length-encoded binary masks and the set/geometry algebra built on them.

Run convention: row-major pixel order, alternating background/foreground
counts, first count is background (may be 0).  This is the interchange
convention used by every file format in the project, so it must stay
bit-exact.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage


class MaskError(ValueError):
    """Raised for dimension mismatches and corrupt run encodings."""


@dataclass(frozen=True)
class Box:
    row_min: int
    col_min: int
    row_max: int
    col_max: int

    def __post_init__(self):
        if self.row_min > self.row_max or self.col_min > self.col_max:
            raise MaskError(f"degenerate box {self}")

    def intersects(self, other: "Box") -> bool:
        return not (
            self.row_max < other.row_min
            or other.row_max < self.row_min
            or self.col_max < other.col_min
            or other.col_max < self.col_min
        )


@dataclass(frozen=True)
class BinaryMask:
    """Immutable RLE binary mask with cached area and bounding box."""

    height: int
    width: int
    runs: tuple[int, ...]
    area: int
    bbox: Optional[Box]

    @classmethod
    def from_dense(cls, bitmap) -> "BinaryMask":
        bitmap = np.asarray(bitmap, dtype=bool)
        if bitmap.ndim != 2 or bitmap.size == 0:
            raise MaskError(f"expected non-empty 2-D raster, got shape {bitmap.shape}")
        h, w = bitmap.shape
        flat = bitmap.ravel()
        change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
        bounds = np.concatenate(([0], change, [flat.size]))
        runs = np.diff(bounds).tolist()
        if flat[0]:
            runs = [0] + runs
        area = int(bitmap.sum())
        bbox = None
        if area:
            rows = np.flatnonzero(bitmap.any(axis=1))
            cols = np.flatnonzero(bitmap.any(axis=0))
            bbox = Box(int(rows[0]), int(cols[0]), int(rows[-1]), int(cols[-1]))
        m = cls(h, w, tuple(runs), area, bbox)
        m.__dict__["dense"] = bitmap
        return m

    @classmethod
    def from_runs(cls, height: int, width: int, runs: Sequence[int]) -> "BinaryMask":
        runs = [int(r) for r in runs]
        if height <= 0 or width <= 0:
            raise MaskError("zero-sized raster")
        if any(r < 0 for r in runs):
            raise MaskError("negative run length")
        if sum(runs) != height * width:
            raise MaskError(f"run sum {sum(runs)} != {height * width}")
        if any(r == 0 for r in runs[1:]):
            raise MaskError("zero-length interior run")
        dense = _runs_to_dense(height, width, runs)
        return cls.from_dense(dense)

    @classmethod
    def empty(cls, height: int, width: int) -> "BinaryMask":
        return cls.from_dense(np.zeros((height, width), dtype=bool))

    @cached_property
    def dense(self) -> np.ndarray:
        arr = _runs_to_dense(self.height, self.width, self.runs)
        arr.setflags(write=False)
        return arr

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    def is_empty(self) -> bool:
        return self.area == 0

    # -- interchange ------------------------------------------------------

    def to_rle(self) -> dict:
        return {"size": [self.height, self.width], "counts": list(self.runs)}

    @classmethod
    def from_rle(cls, record: dict) -> "BinaryMask":
        try:
            h, w = record["size"]
            counts = record["counts"]
        except (KeyError, TypeError, ValueError) as exc:
            raise MaskError(f"malformed RLE record: {exc}") from exc
        return cls.from_runs(int(h), int(w), counts)


def _runs_to_dense(height: int, width: int, runs: Sequence[int]) -> np.ndarray:
    n = len(runs)
    values = np.arange(n) % 2 == 1  # runs alternate bg/fg, first is bg
    flat = np.repeat(values, np.asarray(runs, dtype=np.int64))
    if flat.size != height * width:
        raise MaskError("run sum does not match raster size")
    return flat.reshape(height, width)


def encode(bitmap) -> BinaryMask:
    """Encode a 2-D boolean raster as a canonical RLE mask."""
    return BinaryMask.from_dense(bitmap)


def decode(mask: BinaryMask) -> np.ndarray:
    """Exact inverse of :func:`encode`."""
    return np.array(mask.dense)


def _check_dims(a: BinaryMask, b: BinaryMask) -> None:
    if a.shape != b.shape:
        raise MaskError(f"dimension mismatch: {a.shape} vs {b.shape}")


def iou(a: BinaryMask, b: BinaryMask) -> float:
    """|a∩b| / |a∪b|; 0.0 when both masks are empty."""
    _check_dims(a, b)
    if a.area == 0 and b.area == 0:
        return 0.0
    if a.bbox is None or b.bbox is None or not a.bbox.intersects(b.bbox):
        inter = 0
    else:
        inter = int(np.count_nonzero(a.dense & b.dense))
    union = a.area + b.area - inter
    return inter / union


def intersect(a: BinaryMask, b: BinaryMask) -> BinaryMask:
    _check_dims(a, b)
    if a.bbox is None or b.bbox is None or not a.bbox.intersects(b.bbox):
        return BinaryMask.empty(a.height, a.width)
    return BinaryMask.from_dense(a.dense & b.dense)


def union(a: BinaryMask, b: BinaryMask) -> BinaryMask:
    _check_dims(a, b)
    return BinaryMask.from_dense(a.dense | b.dense)


def subtract(a: BinaryMask, b: BinaryMask) -> BinaryMask:
    _check_dims(a, b)
    if a.bbox is None or b.bbox is None or not a.bbox.intersects(b.bbox):
        return a
    return BinaryMask.from_dense(a.dense & ~b.dense)


def centroid(mask: BinaryMask) -> tuple[float, float]:
    """Arithmetic mean of foreground pixel coordinates."""
    if mask.area == 0:
        raise MaskError("centroid of empty mask")
    rows, cols = np.nonzero(mask.dense)
    return float(rows.mean()), float(cols.mean())


_STRUCT_4 = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)
_STRUCT_8 = np.ones((3, 3), dtype=bool)


def connected_components(mask: BinaryMask, connectivity: int = 4) -> list[BinaryMask]:
    """Foreground components ordered by (row_min, col_min) of their bbox."""
    if connectivity not in (4, 8):
        raise MaskError(f"connectivity must be 4 or 8, got {connectivity}")
    if mask.area == 0:
        return []
    struct = _STRUCT_4 if connectivity == 4 else _STRUCT_8
    labels, n = ndimage.label(mask.dense, structure=struct)
    comps = [BinaryMask.from_dense(labels == i) for i in range(1, n + 1)]
    comps.sort(key=lambda m: (m.bbox.row_min, m.bbox.col_min))
    return comps


LEVELS = ("object", "part", "subpart", "best")


@dataclass(frozen=True)
class ScoredMask:
    mask: BinaryMask
    score: float
    level: str = "object"
    prompt_id: Optional[int] = None

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise MaskError(f"score {self.score} outside [0,1]")
        if self.level not in LEVELS:
            raise MaskError(f"unknown level {self.level!r}")


def _nms_order_key(i: int, sm: ScoredMask):
    pid = sm.prompt_id if sm.prompt_id is not None else np.inf
    return (-sm.score, pid, i)


def nms(masks: Sequence[ScoredMask], iou_threshold: float) -> list[ScoredMask]:
    """Greedy suppression: keep a mask iff IoU <= threshold against every
    already-kept mask.  Order: score desc, prompt_id asc, input index asc."""
    order = sorted(range(len(masks)), key=lambda i: _nms_order_key(i, masks[i]))
    kept: list[ScoredMask] = []
    for i in order:
        cand = masks[i]
        if all(iou(cand.mask, k.mask) <= iou_threshold for k in kept):
            kept.append(cand)
    return kept


@dataclass(frozen=True)
class EntityMap:
    """Ordered set of scored masks; the pipeline output.

    Built with require_disjoint=True for pipeline stages whose contract
    guarantees disjointness; ablation pass-throughs may overlap.
    """

    masks: tuple[ScoredMask, ...]
    height: int
    width: int

    @classmethod
    def build(cls, masks: Sequence[ScoredMask], height: int, width: int,
              require_disjoint: bool = True) -> "EntityMap":
        masks = tuple(m for m in masks if not m.mask.is_empty())
        for m in masks:
            if m.mask.shape != (height, width):
                raise MaskError("entity mask dimension mismatch")
        if require_disjoint:
            cover = np.zeros((height, width), dtype=np.int32)
            for m in masks:
                cover += m.mask.dense
            if cover.max(initial=0) > 1:
                raise MaskError("entity masks overlap")
        return cls(masks, height, width)

    def union_dense(self) -> np.ndarray:
        out = np.zeros((self.height, self.width), dtype=bool)
        for m in self.masks:
            out |= m.mask.dense
        return out

    def covered_area(self) -> int:
        return int(self.union_dense().sum())

    def __len__(self) -> int:
        return len(self.masks)
