"""Minimal external worker used by the provider tests.

Speaks the newline-delimited JSON protocol with canned answers; depends only
on the standard library and PIL.  Modes (argv[1]):
  normal    well-behaved worker
  badid     replies with a wrong request id
  flaky     returns an error record for segment requests
"""

import base64
import json
import struct
import sys

from PIL import Image


def top_rows_rle(h, w, k):
    """RLE for a mask of the first k rows (k >= 1)."""
    if k >= h:
        return {"size": [h, w], "counts": [0, h * w]}
    return {"size": [h, w], "counts": [0, k * w, (h - k) * w]}


def main():
    mode = sys.argv[1] if len(sys.argv) > 1 else "normal"
    h = w = None
    for line in sys.stdin:
        req = json.loads(line)
        rid = req["id"]
        if mode == "badid":
            rid += 1
        op = req["op"]
        if op == "init":
            with Image.open(req["image_path"]) as im:
                w, h = im.size
            reply = {"id": rid, "ok": True, "height": h, "width": w}
        elif op == "segment":
            if mode == "flaky":
                reply = {"id": rid, "error": "segmenter exploded"}
            else:
                results = []
                for pid, _ in enumerate(req["points"]):
                    results.append({
                        "prompt_id": pid,
                        "levels": [
                            {"level": "object", "rle": top_rows_rle(h, w, h),
                             "score": 0.9},
                            {"level": "part", "rle": top_rows_rle(h, w, max(1, h // 2)),
                             "score": 0.8},
                            {"level": "subpart", "rle": top_rows_rle(h, w, max(1, h // 4)),
                             "score": 0.7},
                        ],
                    })
                reply = {"id": rid, "results": results}
        elif op == "embed":
            data = struct.pack("<12f", *range(12))  # C=3, 2x2 grid
            reply = {"id": rid, "features": {
                "c": 3, "h": 2, "w": 2,
                "data_b64": base64.b64encode(data).decode()}}
        else:
            reply = {"id": rid, "error": f"unknown op {op!r}"}
        sys.stdout.write(json.dumps(reply) + "\n")
        sys.stdout.flush()


if __name__ == "__main__":
    main()
