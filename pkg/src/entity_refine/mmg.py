"""Stage 1: stratify segmenter outputs into level maps, filter the object
level, and thin part/subpart maps with density-driven adaptive NMS."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .backend import MaskTriple, SegmenterProvider, grid_prompts
from .config import PipelineConfig
from .masks import MaskError, ScoredMask, iou, nms
from .superpixels import (DensityMap, SuperpixelMap, default_felz_params,
                          density_map, felzenszwalb, mask_density)

# Eq-style argmax ties prefer the coarser level: entity scale is the goal
_LEVEL_PRIORITY = ("object", "part", "subpart")


@dataclass(frozen=True)
class LevelMaps:
    object: list[ScoredMask]
    part: list[ScoredMask]
    subpart: list[ScoredMask]
    best: list[ScoredMask]
    grid_n: int


@dataclass(frozen=True)
class MMGOutput:
    object_refined: list[ScoredMask]
    part_thinned: list[ScoredMask]
    subpart_thinned: list[ScoredMask]
    object64: list[ScoredMask]
    best64: list[ScoredMask]
    superpixels: SuperpixelMap
    density: DensityMap
    levels32: LevelMaps
    levels64: LevelMaps


def stratify(triples: Sequence[MaskTriple], grid_n: int = 0) -> LevelMaps:
    """Split triples into per-level lists plus the max-score best list."""
    if not triples:
        raise MaskError("cannot stratify an empty triple list")
    obj, part, sub, best = [], [], [], []
    for t in triples:
        by_level = {"object": t.object, "part": t.part, "subpart": t.subpart}
        obj.append(t.object)
        part.append(t.part)
        sub.append(t.subpart)
        best.append(max((by_level[lv] for lv in _LEVEL_PRIORITY),
                        key=lambda sm: (sm.score, -_LEVEL_PRIORITY.index(sm.level))))
    return LevelMaps(obj, part, sub, best, grid_n)


def _nonempty(masks: Sequence[ScoredMask]) -> list[ScoredMask]:
    return [m for m in masks if not m.mask.is_empty()]


def filter_object_level(object32: Sequence[ScoredMask], best32: Sequence[ScoredMask],
                        theta_o: float, gamma_o: float) -> list[ScoredMask]:
    """Naive NMS at theta_o, then keep survivors whose best-map IoU support
    reaches gamma_o."""
    survivors = nms(_nonempty(object32), theta_o)
    best = _nonempty(best32)
    kept = []
    for m in survivors:
        support = max((iou(m.mask, b.mask) for b in best), default=0.0)
        if support >= gamma_o:
            kept.append(m)
    return kept


def adaptive_nms(masks: Sequence[ScoredMask], density: DensityMap,
                 base_threshold_nt: float) -> list[ScoredMask]:
    """Greedy NMS whose threshold is raised to the kept mask's local density:
    dense regions tolerate more overlap before suppression."""
    candidates = _nonempty(masks)
    order = sorted(range(len(candidates)),
                   key=lambda i: (-candidates[i].score,
                                  candidates[i].prompt_id
                                  if candidates[i].prompt_id is not None else float("inf"),
                                  i))
    kept: list[ScoredMask] = []
    kept_thresholds: list[float] = []
    for i in order:
        cand = candidates[i]
        suppressed = any(
            iou(cand.mask, k.mask) > thr
            for k, thr in zip(kept, kept_thresholds))
        if not suppressed:
            kept.append(cand)
            kept_thresholds.append(
                max(base_threshold_nt, mask_density(density, cand.mask)))
    return kept


def run_mmg(provider: SegmenterProvider, image, config: PipelineConfig) -> MMGOutput:
    """Coarse-grid stratification + object filtering, superpixel density,
    adaptive thinning, and the fine-grid maps kept for refinement."""
    h, w = image.shape[:2]
    prompts32 = grid_prompts(h, w, config.grid_coarse)
    levels32 = stratify(provider.segment(prompts32), config.grid_coarse)
    object_refined = filter_object_level(levels32.object, levels32.best,
                                         config.theta_o, config.gamma_o)

    scale_k, sigma, min_size = default_felz_params(
        h, w, config.felz_scale, config.felz_sigma, config.felz_min_size)
    sp = felzenszwalb(image, scale_k, sigma, min_size)
    dens = density_map(sp)
    part_thinned = adaptive_nms(levels32.part, dens, config.n_t)
    subpart_thinned = adaptive_nms(levels32.subpart, dens, config.n_t)

    prompts64 = grid_prompts(h, w, config.grid_fine)
    levels64 = stratify(provider.segment(prompts64), config.grid_fine)
    return MMGOutput(
        object_refined=object_refined,
        part_thinned=part_thinned,
        subpart_thinned=subpart_thinned,
        object64=levels64.object,
        best64=levels64.best,
        superpixels=sp,
        density=dens,
        levels32=levels32,
        levels64=levels64,
    )
