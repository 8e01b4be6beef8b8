"""External-process provider: drives a segmenter worker over stdin/stdout.

The wire format is one JSON record per line.  Exactly one request is in
flight at a time and every response must echo the request id.
"""

from __future__ import annotations

import base64
import json
import shlex
import subprocess
import threading
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from PIL import Image

from . import (BackendError, FeatureGrid, MaskTriple, PointPrompt,
               SegmenterProvider, sorted_triple)
from .precomputed import record_to_masks


class ExternalProvider(SegmenterProvider):
    single_flight = True  # strict request-id ordering over one pipe

    def __init__(self, command: str | Sequence[str], image_path):
        argv = shlex.split(command) if isinstance(command, str) else list(command)
        self.image_path = Path(image_path)
        if not self.image_path.exists():
            raise BackendError(f"image not found: {self.image_path}")
        try:
            self.proc = subprocess.Popen(
                argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                text=True, bufsize=1)
        except OSError as exc:
            raise BackendError(f"cannot start worker {argv!r}: {exc}") from exc
        self._lock = threading.Lock()
        self._next_id = 0
        reply = self._request({"op": "init", "image_path": str(self.image_path)})
        if not reply.get("ok"):
            raise BackendError(f"init failed: {reply}")
        self._height = int(reply["height"])
        self._width = int(reply["width"])

    def _request(self, payload: dict) -> dict:
        with self._lock:
            rid = self._next_id
            self._next_id += 1
            payload = {"id": rid, **payload}
            if self.proc.poll() is not None:
                raise BackendError("worker exited")
            try:
                self.proc.stdin.write(json.dumps(payload) + "\n")
                self.proc.stdin.flush()
                line = self.proc.stdout.readline()
            except (BrokenPipeError, OSError) as exc:
                raise BackendError(f"worker pipe failure: {exc}") from exc
            if not line:
                raise BackendError("worker closed its output stream")
            try:
                reply = json.loads(line)
            except json.JSONDecodeError as exc:
                raise BackendError(f"malformed worker reply: {line!r}") from exc
            if reply.get("id") != rid:
                raise BackendError(
                    f"response id {reply.get('id')} does not match request {rid}")
            if "error" in reply:
                raise BackendError(f"worker error: {reply['error']}")
            return reply

    @property
    def height(self) -> int:
        return self._height

    @property
    def width(self) -> int:
        return self._width

    def image(self) -> np.ndarray:
        arr = np.asarray(Image.open(self.image_path).convert("RGB"))
        return arr.astype(np.float64) / 255.0

    def segment(self, prompts: Sequence[PointPrompt]) -> list[MaskTriple]:
        self.check_bounds(prompts)
        if not prompts:
            return []
        reply = self._request(
            {"op": "segment", "points": [[p.row, p.col] for p in prompts]})
        results = reply.get("results")
        if results is None or len(results) != len(prompts):
            raise BackendError("segment reply missing or misaligned results")
        return [sorted_triple(p.id, record_to_masks(rec))
                for p, rec in zip(prompts, results)]

    def embed(self) -> Optional[FeatureGrid]:
        reply = self._request({"op": "embed"})
        feat = reply.get("features")
        if feat is None:
            return None
        data = np.frombuffer(base64.b64decode(feat["data_b64"]), dtype="<f4")
        c, h, w = int(feat["c"]), int(feat["h"]), int(feat["w"])
        if data.size != c * h * w:
            raise BackendError("feature payload length mismatch")
        return FeatureGrid(c, h, w, data.reshape(c, h, w).copy())

    def close(self) -> None:
        if self.proc.poll() is None:
            try:
                self.proc.stdin.close()
            except OSError:
                pass
            try:
                self.proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self.proc.kill()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
