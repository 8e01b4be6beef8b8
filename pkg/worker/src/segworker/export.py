"""Batch exporter: run the segmenter over point grids and write the
precomputed-directory layout the host pipeline replays.

Layout:
  image.png         the input image (re-encoded as PNG)
  meta.json         {"height": H, "width": W, "grids": [...]}
  masks_<n>.ndjson  one record per prompt of the n-per-side grid
  features.bin      uint32 LE header (C, h, w) + float32 LE data
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image

from .model import RegionSegmenter, grid_points


def export_directory(image_path, out_dir, grids: Sequence[int]) -> Path:
    if not grids:
        raise ValueError("at least one grid size is required")
    seg = RegionSegmenter(image_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    img = (np.clip(seg.raw, 0, 1) * 255).round().astype(np.uint8)
    Image.fromarray(img).save(out / "image.png")
    (out / "meta.json").write_text(json.dumps(
        {"height": seg.height, "width": seg.width, "grids": list(grids)}))
    for n in grids:
        points = grid_points(seg.height, seg.width, n)
        with open(out / f"masks_{n}.ndjson", "w") as f:
            for pid, (row, col) in enumerate(points):
                levels = seg.segment_point(row, col)
                record = {
                    "prompt_id": pid,
                    "point": [row, col],
                    "levels": [lv.record(seg.height, seg.width)
                               for lv in levels],
                }
                f.write(json.dumps(record) + "\n")
    data = seg.embed().astype("<f4")
    with open(out / "features.bin", "wb") as f:
        f.write(struct.pack("<III", *data.shape))
        f.write(data.tobytes())
    return out
