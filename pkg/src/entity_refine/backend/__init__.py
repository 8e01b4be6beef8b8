"""Pluggable promptable-segmenter backends.

Three providers implement the same interface: a synthetic oracle for
desk-scale verification, a precomputed-directory replayer, and an
external-process client speaking a newline-delimited JSON protocol.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..masks import MaskError, ScoredMask


class BackendError(RuntimeError):
    """Provider failure; carries the offending prompt id when known."""

    def __init__(self, message: str, prompt_id: Optional[int] = None):
        super().__init__(message)
        self.prompt_id = prompt_id


@dataclass(frozen=True)
class PointPrompt:
    row: float
    col: float
    id: int


@dataclass(frozen=True)
class MaskTriple:
    prompt_id: int
    object: ScoredMask
    part: ScoredMask
    subpart: ScoredMask

    def __post_init__(self):
        a_o, a_p, a_s = (self.object.mask.area, self.part.mask.area,
                         self.subpart.mask.area)
        if not (a_o >= a_p >= a_s):
            raise MaskError(
                f"triple area ordering violated for prompt {self.prompt_id}: "
                f"{a_o} >= {a_p} >= {a_s} fails")

    @property
    def levels(self) -> tuple[ScoredMask, ScoredMask, ScoredMask]:
        return (self.object, self.part, self.subpart)


@dataclass(frozen=True)
class FeatureGrid:
    channels: int
    height: int
    width: int
    data: np.ndarray  # (C, h, w) float32

    def __post_init__(self):
        if self.channels < 1 or self.data.shape != (self.channels, self.height, self.width):
            raise ValueError(f"bad feature grid shape {self.data.shape}")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("non-finite feature values")


def grid_prompts(height: int, width: int, points_per_side: int) -> list[PointPrompt]:
    """Uniform n×n point grid at cell centers, row-major id order."""
    if points_per_side < 1:
        raise ValueError("points_per_side must be >= 1")
    n = points_per_side
    rows = (np.arange(n) + 0.5) * height / n
    cols = (np.arange(n) + 0.5) * width / n
    return [PointPrompt(float(rows[i]), float(cols[j]), i * n + j)
            for i in range(n) for j in range(n)]


class SegmenterProvider(ABC):
    """Interface every segmenter backend implements.

    Providers that cannot serve concurrent segment calls set
    ``single_flight = True``; the pipeline then serializes calls.
    """

    single_flight = False

    @property
    @abstractmethod
    def height(self) -> int: ...

    @property
    @abstractmethod
    def width(self) -> int: ...

    @abstractmethod
    def image(self) -> np.ndarray:
        """H×W×3 float raster in [0,1]."""

    @abstractmethod
    def segment(self, prompts: Sequence[PointPrompt]) -> list[MaskTriple]:
        """One id-aligned triple per prompt, areas ordered object>=part>=subpart."""

    @abstractmethod
    def embed(self) -> Optional[FeatureGrid]:
        """Image feature grid, or None when the provider has no features."""

    def check_bounds(self, prompts: Sequence[PointPrompt]) -> None:
        for p in prompts:
            if not (0 <= p.row < self.height and 0 <= p.col < self.width):
                raise BackendError(f"prompt {p.id} out of bounds: ({p.row}, {p.col})",
                                   prompt_id=p.id)


def sorted_triple(prompt_id: int, masks: Sequence[ScoredMask]) -> MaskTriple:
    """Build a MaskTriple from three masks by sorting on area descending."""
    if len(masks) != 3:
        raise MaskError(f"expected 3 masks, got {len(masks)}")
    ordered = sorted(masks, key=lambda m: -m.mask.area)
    return MaskTriple(
        prompt_id,
        object=ScoredMask(ordered[0].mask, ordered[0].score, "object", prompt_id),
        part=ScoredMask(ordered[1].mask, ordered[1].score, "part", prompt_id),
        subpart=ScoredMask(ordered[2].mask, ordered[2].score, "subpart", prompt_id),
    )


from .scenes import EntitySpec, NoiseSpec, SceneSpec, ground_truth, random_scene  # noqa: E402
from .oracle import OracleProvider  # noqa: E402
from .precomputed import PrecomputedProvider, record_provider  # noqa: E402
from .external import ExternalProvider  # noqa: E402

__all__ = [
    "BackendError", "PointPrompt", "MaskTriple", "FeatureGrid",
    "grid_prompts", "SegmenterProvider", "sorted_triple",
    "EntitySpec", "NoiseSpec", "SceneSpec", "ground_truth", "random_scene",
    "OracleProvider", "PrecomputedProvider", "record_provider", "ExternalProvider",
]
