"""Segmentation worker: a deterministic point-promptable segmenter served
over a newline-delimited JSON protocol, plus a batch exporter that writes
the precomputed-directory format the host pipeline replays."""

from .model import RegionSegmenter, encode_runs, decode_runs
from .protocol import serve
from .export import export_directory

__version__ = "0.1.0"

__all__ = ["RegionSegmenter", "encode_runs", "decode_runs", "serve",
           "export_directory", "__version__"]
