"""Stage 3: find superpixel regions the entity map missed, prompt them, and
greedily fuse the recovered masks."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .backend import PointPrompt, SegmenterProvider
from .backend.precomputed import PromptMiss
from .config import PipelineConfig
from .masks import (BinaryMask, EntityMap, ScoredMask, connected_components,
                    centroid, iou, union)
from .superpixels import SuperpixelMap

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class UncoveredRegion:
    mask: BinaryMask
    source_superpixels: tuple[int, ...]


def uncovered_regions(entity_map: EntityMap, sp: SuperpixelMap,
                      coverage_fraction: float,
                      min_region_px: int = 1) -> list[UncoveredRegion]:
    """Superpixels with less than coverage_fraction of their pixels covered,
    grouped into 4-connected regions; tiny regions dropped."""
    covered = entity_map.union_dense()
    labels = sp.labels
    k = sp.num_regions
    cover_counts = np.bincount(labels.ravel(), weights=covered.ravel(), minlength=k)
    areas = np.array([r.area for r in sp.regions], dtype=np.float64)
    uncovered = cover_counts / areas < coverage_fraction
    if not uncovered.any():
        return []
    uncovered_px = uncovered[labels]
    regions = []
    for comp in connected_components(BinaryMask.from_dense(uncovered_px), 4):
        if comp.area < min_region_px:
            continue
        src = tuple(sorted(set(np.unique(labels[comp.dense]).tolist())))
        regions.append(UncoveredRegion(comp, src))
    return regions


def additional_prompts(regions: Sequence[UncoveredRegion],
                       part32: Sequence[ScoredMask],
                       subpart32: Sequence[ScoredMask],
                       containment_frac: float = 0.9) -> list[PointPrompt]:
    """One prompt per region: the centroid of a part/subpart mask that
    contains the region, else the region's own centroid."""
    pool = [m for m in list(part32) + list(subpart32) if not m.mask.is_empty()]
    prompts: list[PointPrompt] = []
    seen: set[tuple[int, int]] = set()
    next_id = 0
    for region in regions:
        if region.mask.area == 0:
            log.warning("skipping empty uncovered region")
            continue
        point = None
        for m in pool:
            inside = np.count_nonzero(region.mask.dense & m.mask.dense)
            if inside / region.mask.area >= containment_frac:
                point = centroid(m.mask)
                break
        if point is None:
            point = centroid(region.mask)
        key = (round(point[0]), round(point[1]))  # 1 px dedup
        if key in seen:
            continue
        seen.add(key)
        prompts.append(PointPrompt(point[0], point[1], next_id))
        next_id += 1
    return prompts


def fuse(entity_map: EntityMap, additional: Sequence[ScoredMask],
         rho: float) -> EntityMap:
    """Insert additional masks: clip to uncovered space, then either union
    into the best-overlapping entity (pre-clip IoU > rho) or append."""
    masks = list(entity_map.masks)
    covered = entity_map.union_dense()
    for add in additional:
        if add.mask.is_empty():
            continue
        ious = [iou(add.mask, m.mask) for m in masks]
        clipped = BinaryMask.from_dense(add.mask.dense & ~covered)
        best_idx = int(np.argmax(ious)) if ious else -1
        if best_idx >= 0 and ious[best_idx] > rho:
            host = masks[best_idx]
            masks[best_idx] = ScoredMask(union(host.mask, clipped), host.score,
                                         host.level, host.prompt_id)
        elif not clipped.is_empty():
            masks.append(ScoredMask(clipped, add.score, add.level, add.prompt_id))
        covered |= clipped.dense
    return EntityMap.build(masks, entity_map.height, entity_map.width)


def greedy_fill(entity_map: EntityMap, candidates: Sequence[ScoredMask],
                min_gain_px: int, rho: float) -> EntityMap:
    """Accept candidates by maximal uncovered-pixel gain until the best gain
    drops below min_gain_px."""
    current = entity_map
    remaining = list(candidates)
    while remaining:
        covered = current.union_dense()
        gains = [int(np.count_nonzero(c.mask.dense & ~covered)) for c in remaining]
        order = sorted(
            range(len(remaining)),
            key=lambda i: (-gains[i], -remaining[i].score,
                           remaining[i].prompt_id
                           if remaining[i].prompt_id is not None else float("inf")))
        best = order[0]
        if gains[best] < min_gain_px:
            break
        current = fuse(current, [remaining[best]], rho)
        del remaining[best]
    return current


def run_usr(provider: SegmenterProvider, mmg_out, entity_map: EntityMap,
            config: PipelineConfig) -> EntityMap:
    """Single repair pass: uncovered regions -> prompts -> segment ->
    greedy fill."""
    regions = uncovered_regions(entity_map, mmg_out.superpixels,
                                config.coverage_fraction, config.min_region_px)
    if not regions:
        return entity_map
    prompts = additional_prompts(regions, mmg_out.part_thinned,
                                 mmg_out.subpart_thinned, config.containment_frac)
    candidates: list[ScoredMask] = []
    for p in prompts:
        try:
            triple = provider.segment([p])[0]
        except PromptMiss as miss:
            log.info("replay miss for repair prompt %s: %s", p.id, miss)
            continue
        cand = triple.object
        if cand.mask.is_empty():
            cand = max(triple.levels, key=lambda sm: sm.score)
        if not cand.mask.is_empty():
            candidates.append(ScoredMask(cand.mask, cand.score, cand.level, p.id))
    return greedy_fill(entity_map, candidates, config.min_gain_px, config.rho)
