"""Request loop for the line-delimited JSON wire protocol.

Requests carry an integer id echoed in every reply.  One request is in
flight at a time; malformed or unknown requests produce an error record
and the loop continues.
"""

from __future__ import annotations

import base64
import json
import sys

from .model import RegionSegmenter


def handle_request(req: dict, state: dict) -> dict:
    rid = req.get("id")
    if not isinstance(rid, int):
        return {"id": None, "error": "request id missing or not an integer"}
    op = req.get("op")
    try:
        if op == "init":
            seg = RegionSegmenter(req["image_path"])
            state["segmenter"] = seg
            return {"id": rid, "ok": True,
                    "height": seg.height, "width": seg.width}
        seg = state.get("segmenter")
        if seg is None:
            return {"id": rid, "error": "init must come first"}
        if op == "segment":
            results = []
            for pid, (row, col) in enumerate(req["points"]):
                levels = seg.segment_point(float(row), float(col))
                results.append({
                    "prompt_id": pid,
                    "levels": [lv.record(seg.height, seg.width)
                               for lv in levels],
                })
            return {"id": rid, "results": results}
        if op == "embed":
            data = seg.embed()
            return {"id": rid, "features": {
                "c": 3, "h": data.shape[1], "w": data.shape[2],
                "data_b64": base64.b64encode(
                    data.astype("<f4").tobytes()).decode("ascii")}}
        return {"id": rid, "error": f"unknown op {op!r}"}
    except (KeyError, TypeError, ValueError, OSError) as exc:
        return {"id": rid, "error": f"{type(exc).__name__}: {exc}"}


def serve(stdin=None, stdout=None) -> int:
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    state: dict = {}
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        try:
            req = json.loads(line)
        except json.JSONDecodeError as exc:
            reply = {"id": None, "error": f"malformed request: {exc}"}
        else:
            reply = handle_request(req, state)
        stdout.write(json.dumps(reply) + "\n")
        stdout.flush()
    return 0
