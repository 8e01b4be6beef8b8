"""Precomputed-directory provider: record a segmenter's answers, replay later.

Directory layout:
  image.png                       the input image
  meta.json                       {"height": H, "width": W, "grids": [...]}
  masks_<n>.ndjson                one record per prompt of the n-per-side grid
  features.bin (optional)         uint32 LE header (C, h, w) + float32 LE data

Replay answers arbitrary points with the nearest recorded prompt within a
radius of H/64 and raises PromptMiss beyond it.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from PIL import Image

from ..masks import BinaryMask, ScoredMask
from . import (BackendError, FeatureGrid, MaskTriple, PointPrompt,
               SegmenterProvider, grid_prompts, sorted_triple)


class PromptMiss(BackendError):
    """No recorded prompt within the match radius."""


def triple_to_record(triple: MaskTriple, point: tuple[float, float]) -> dict:
    return {
        "prompt_id": triple.prompt_id,
        "point": [point[0], point[1]],
        "levels": [
            {"level": sm.level, "rle": sm.mask.to_rle(), "score": sm.score}
            for sm in triple.levels
        ],
    }


def record_to_masks(record: dict) -> list[ScoredMask]:
    return [ScoredMask(BinaryMask.from_rle(lv["rle"]), float(lv["score"]), lv["level"])
            for lv in record["levels"]]


def write_features(path: Path, grid: FeatureGrid) -> None:
    with open(path, "wb") as f:
        f.write(struct.pack("<III", grid.channels, grid.height, grid.width))
        f.write(grid.data.astype("<f4").tobytes())


def read_features(path: Path) -> FeatureGrid:
    raw = path.read_bytes()
    c, h, w = struct.unpack_from("<III", raw, 0)
    data = np.frombuffer(raw, dtype="<f4", offset=12)
    if data.size != c * h * w:
        raise BackendError(f"features.bin payload length {data.size} != {c * h * w}")
    return FeatureGrid(c, h, w, data.reshape(c, h, w).copy())


def record_provider(provider: SegmenterProvider, out_dir, grids: Sequence[int] = (32, 64)) -> Path:
    """Export a provider's grid answers (and features) to a directory."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    img = (np.clip(provider.image(), 0, 1) * 255).round().astype(np.uint8)
    Image.fromarray(img).save(out / "image.png")
    (out / "meta.json").write_text(json.dumps(
        {"height": provider.height, "width": provider.width, "grids": list(grids)}))
    for n in grids:
        prompts = grid_prompts(provider.height, provider.width, n)
        triples = provider.segment(prompts)
        with open(out / f"masks_{n}.ndjson", "w") as f:
            for p, t in zip(prompts, triples):
                f.write(json.dumps(triple_to_record(t, (p.row, p.col))) + "\n")
    features = provider.embed()
    if features is not None:
        write_features(out / "features.bin", features)
    return out


class PrecomputedProvider(SegmenterProvider):
    single_flight = False

    def __init__(self, directory):
        self.dir = Path(directory)
        meta = json.loads((self.dir / "meta.json").read_text())
        self._height = int(meta["height"])
        self._width = int(meta["width"])
        self.grids = list(meta["grids"])
        self._points: list[tuple[float, float]] = []
        self._records: list[dict] = []
        for n in self.grids:
            path = self.dir / f"masks_{n}.ndjson"
            for line in path.read_text().splitlines():
                rec = json.loads(line)
                self._points.append((float(rec["point"][0]), float(rec["point"][1])))
                self._records.append(rec)
        self._point_arr = np.array(self._points) if self._points else np.zeros((0, 2))
        self.match_radius = self._height / 64
        self._triple_cache: dict[int, list[ScoredMask]] = {}

    @property
    def height(self) -> int:
        return self._height

    @property
    def width(self) -> int:
        return self._width

    def image(self) -> np.ndarray:
        arr = np.asarray(Image.open(self.dir / "image.png").convert("RGB"))
        return arr.astype(np.float64) / 255.0

    def segment(self, prompts: Sequence[PointPrompt]) -> list[MaskTriple]:
        self.check_bounds(prompts)
        out = []
        for p in prompts:
            idx = self._nearest(p)
            if idx is None:
                raise PromptMiss(
                    f"no recorded prompt within {self.match_radius:.2f} px of "
                    f"({p.row:.1f}, {p.col:.1f})", prompt_id=p.id)
            if idx not in self._triple_cache:
                self._triple_cache[idx] = record_to_masks(self._records[idx])
            out.append(sorted_triple(p.id, self._triple_cache[idx]))
        return out

    def _nearest(self, p: PointPrompt) -> Optional[int]:
        if not len(self._point_arr):
            return None
        d2 = ((self._point_arr - np.array([p.row, p.col])) ** 2).sum(axis=1)
        idx = int(d2.argmin())
        return idx if d2[idx] <= self.match_radius ** 2 else None

    def embed(self) -> Optional[FeatureGrid]:
        path = self.dir / "features.bin"
        return read_features(path) if path.exists() else None
