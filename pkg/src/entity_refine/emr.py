"""Stage 2: split overlapping object masks with fine-grid gallery guidance,
then merge adjacent high-affinity masks into entity-level masks."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.ndimage import map_coordinates
from skimage import color as skcolor

from .backend import FeatureGrid, PointPrompt, grid_prompts
from .config import PipelineConfig
from .masks import (BinaryMask, EntityMap, MaskError, ScoredMask, intersect,
                    iou, subtract, union)
from .superpixels import SuperpixelMap


@dataclass(frozen=True)
class GalleryEntry:
    object: ScoredMask
    best: ScoredMask


@dataclass(frozen=True)
class MaskGallery:
    by_prompt: dict[int, GalleryEntry]
    all_masks: tuple[BinaryMask, ...]

    def __len__(self) -> int:
        return len(self.by_prompt)


def build_gallery(object64: Sequence[ScoredMask],
                  best64: Sequence[ScoredMask]) -> MaskGallery:
    if len(object64) != len(best64):
        raise MaskError("gallery level lists are misaligned")
    by_prompt = {}
    uniq: dict[tuple, BinaryMask] = {}
    for pid, (o, b) in enumerate(zip(object64, best64)):
        if o.mask.is_empty() or b.mask.is_empty():
            continue
        by_prompt[pid] = GalleryEntry(o, b)
        uniq.setdefault(o.mask.runs, o.mask)
        uniq.setdefault(b.mask.runs, b.mask)
    return MaskGallery(by_prompt, tuple(uniq.values()))


def _score_order(masks: Sequence[ScoredMask]) -> list[ScoredMask]:
    return sorted(masks, key=lambda m: (-m.score,
                                        m.prompt_id if m.prompt_id is not None
                                        else float("inf")))


def _select_guidance(entry: GalleryEntry, tau: float) -> ScoredMask:
    # object-level guidance unless the best level is clearly stronger
    if entry.best.score - entry.object.score < tau:
        return entry.object
    return entry.best


def split_overlaps(masks: Sequence[ScoredMask], gallery: MaskGallery,
                   prompts64: Sequence[PointPrompt], delta: float,
                   tau: float) -> list[ScoredMask]:
    """Resolve every pairwise overlap; output masks are pairwise disjoint.

    Small overlaps (relative to the larger mask) are carved out of the
    larger mask; larger overlaps are assigned wholesale to whichever mask
    better matches the modal fine-grid guidance mask found inside the
    overlap region.
    """
    current = _score_order(m for m in masks if not m.mask.is_empty())
    while True:
        hit = _first_overlap(current)
        if hit is None:
            break
        i, j, overlap = hit
        p, q = current[i], current[j]
        larger, smaller = (i, j) if p.mask.area >= q.mask.area else (j, i)
        ratio = overlap.area / max(p.mask.area, q.mask.area)
        loser: int
        if ratio < delta:
            loser = larger
        else:
            guidance = _modal_guidance(overlap, gallery, prompts64, tau)
            if guidance is None:
                # no fine-grid prompt landed inside the overlap
                loser = larger
            else:
                iou_p = iou(p.mask, guidance)
                iou_q = iou(q.mask, guidance)
                loser = j if iou_p >= iou_q else i
        trimmed = subtract(current[loser].mask, overlap)
        src = current[loser]
        if trimmed.is_empty():
            del current[loser]
        else:
            current[loser] = ScoredMask(trimmed, src.score, src.level, src.prompt_id)
    return current


def _first_overlap(masks: list[ScoredMask]):
    for i in range(len(masks)):
        for j in range(i + 1, len(masks)):
            ov = intersect(masks[i].mask, masks[j].mask)
            if not ov.is_empty():
                return i, j, ov
    return None


def _modal_guidance(overlap: BinaryMask, gallery: MaskGallery,
                    prompts64: Sequence[PointPrompt],
                    tau: float) -> Optional[BinaryMask]:
    dense = overlap.dense
    h, w = dense.shape
    votes: dict[tuple, tuple[int, BinaryMask]] = {}
    for p in prompts64:
        r, c = int(math.floor(p.row)), int(math.floor(p.col))
        if not (0 <= r < h and 0 <= c < w) or not dense[r, c]:
            continue
        entry = gallery.by_prompt.get(p.id)
        if entry is None:
            continue
        g = _select_guidance(entry, tau).mask
        count, _ = votes.get(g.runs, (0, g))
        votes[g.runs] = (count + 1, g)
    if not votes:
        return None
    # modal mask; ties go to the first mask reaching the max count
    best_count = max(v[0] for v in votes.values())
    for count, g in votes.values():
        if count == best_count:
            return g
    return None


# -- similarity matrices --------------------------------------------------

def centroid_similarity(features: FeatureGrid, sp: SuperpixelMap) -> np.ndarray:
    """Cosine similarity between feature vectors sampled bilinearly at each
    superpixel centroid."""
    h, w = sp.shape
    rows = np.array([r.centroid[0] for r in sp.regions])
    cols = np.array([r.centroid[1] for r in sp.regions])
    gr = rows / h * features.height - 0.5
    gc = cols / w * features.width - 0.5
    vecs = np.stack([
        map_coordinates(features.data[c], [gr, gc], order=1, mode="nearest")
        for c in range(features.channels)
    ], axis=1)
    return _cosine_matrix(vecs)


def fallback_centroid_similarity(sp: SuperpixelMap, height: int,
                                 width: int) -> np.ndarray:
    """Feature-free stand-in: Lab of the region mean color plus the
    normalized centroid position."""
    mean_rgb = np.array([r.mean_color for r in sp.regions])
    lab = skcolor.rgb2lab(mean_rgb.reshape(-1, 1, 3)).reshape(-1, 3)
    lab = lab / np.array([100.0, 128.0, 128.0])
    pos = np.array([[r.centroid[0] / height, r.centroid[1] / width]
                    for r in sp.regions])
    return _cosine_matrix(np.hstack([lab, pos]))


def _cosine_matrix(vecs: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(vecs, axis=1)
    safe = np.where(norms > 0, norms, 1.0)
    unit = vecs / safe[:, None]
    sim = unit @ unit.T
    zero = norms == 0
    sim[zero, :] = 0.0
    sim[:, zero] = 0.0
    np.fill_diagonal(sim, 1.0)
    return np.clip(sim, -1.0, 1.0)


def centroids_in_masks(masks: Sequence[ScoredMask],
                       sp: SuperpixelMap) -> list[list[int]]:
    """Superpixel-centroid indices whose coordinates fall inside each mask."""
    h, w = sp.shape
    out: list[list[int]] = []
    coords = [(min(h - 1, int(round(r.centroid[0]))),
               min(w - 1, int(round(r.centroid[1]))))
              for r in sp.regions]
    for m in masks:
        dense = m.mask.dense
        out.append([k for k, (r, c) in enumerate(coords) if dense[r, c]])
    return out


def adjacency_similarity(masks: Sequence[ScoredMask], sp: SuperpixelMap,
                         s_c: np.ndarray, k: int) -> np.ndarray:
    """Row-normalized affinity: how often a mask's centroids rank another
    mask's centroids among their top-k most similar.  Entries are in [0,1]
    (counts divided by both |C_i| and k)."""
    if k < 1:
        raise MaskError("k must be >= 1")
    members = centroids_in_masks(masks, sp)
    n = len(masks)
    num_centroids = s_c.shape[0]
    owner = np.full(num_centroids, -1, dtype=np.int64)
    for mi, cents in enumerate(members):
        for c in cents:
            owner[c] = mi  # masks are disjoint, so ownership is unique
    s_m = np.zeros((n, n))
    kk = min(k, max(num_centroids - 1, 1))
    for mi, cents in enumerate(members):
        if not cents:
            continue
        for c in cents:
            keys = -s_c[c].copy()
            keys[c] = np.inf  # exclude self
            top = np.lexsort((np.arange(num_centroids), keys))[:kk]
            for t in top:
                oj = owner[t]
                if oj >= 0 and oj != mi:
                    s_m[mi, oj] += 1.0
        s_m[mi] /= len(cents) * k
    return s_m


# -- merging --------------------------------------------------------------

def merge_similar(masks: Sequence[ScoredMask], s_m: np.ndarray,
                  gallery: MaskGallery, merge_threshold: float,
                  containment_gamma: float, height: int, width: int,
                  centroid_counts: Optional[Sequence[int]] = None) -> EntityMap:
    """Union pairs of high-affinity masks that some gallery mask encompasses.

    After a merge the affected similarity rows are recombined exactly
    (counts are additive over the merged centroid set), then remaining
    pairs are re-examined until none qualifies.
    """
    current = list(masks)
    sm = np.array(s_m, dtype=np.float64)
    weights = np.array(
        centroid_counts if centroid_counts is not None else [1] * len(current),
        dtype=np.float64)
    while True:
        merged_any = False
        for a, b in _best_pair(sm, merge_threshold):
            if _gallery_supports(current[a].mask, current[b].mask, gallery,
                                 containment_gamma):
                current, sm, weights = _merge_into(current, sm, weights, a, b)
                merged_any = True
                break  # similarity rows changed; re-rank pairs
        if not merged_any:
            break
    return EntityMap.build(current, height, width)


def _best_pair(sm: np.ndarray, threshold: float):
    n = sm.shape[0]
    scored = []
    for a in range(n):
        for b in range(a + 1, n):
            s = max(sm[a, b], sm[b, a])
            if s >= threshold:
                scored.append((s, a, b))
    scored.sort(key=lambda t: (-t[0], t[1], t[2]))
    return [(a, b) for _, a, b in scored]


def _gallery_supports(a: BinaryMask, b: BinaryMask, gallery: MaskGallery,
                      containment_gamma: float) -> bool:
    ab = union(a, b)
    return any(iou(g, ab) >= containment_gamma for g in gallery.all_masks)


def _merge_into(current: list[ScoredMask], sm: np.ndarray, weights: np.ndarray,
                a: int, b: int):
    ma, mb = current[a], current[b]
    merged = ScoredMask(union(ma.mask, mb.mask), max(ma.score, mb.score),
                        "object", ma.prompt_id)
    sm = np.array(sm)
    wa, wb = weights[a], weights[b]
    total = wa + wb
    # exact count algebra: rows average by centroid weight, columns add
    if total > 0:
        sm[a, :] = (wa * sm[a, :] + wb * sm[b, :]) / total
    else:
        sm[a, :] = 0.0
    sm[:, a] = sm[:, a] + sm[:, b]
    sm[a, a] = 0.0
    keep = np.arange(sm.shape[0]) != b
    new_current = list(current)
    new_current[a] = merged
    del new_current[b]
    new_weights = np.array(weights)
    new_weights[a] = total
    return new_current, sm[np.ix_(keep, keep)], new_weights[keep]


# -- orchestration --------------------------------------------------------

def run_emr(masks: Sequence[ScoredMask], mmg_out, features: Optional[FeatureGrid],
            config: PipelineConfig, height: int, width: int) -> EntityMap:
    """Full split-then-merge pass over the refined object masks."""
    gallery = build_gallery(mmg_out.object64, mmg_out.best64)
    prompts64 = grid_prompts(height, width, config.grid_fine)
    split = split_overlaps(masks, gallery, prompts64, config.delta, config.tau)
    if len(split) < 2:
        return EntityMap.build(split, height, width)
    sp = mmg_out.superpixels
    if features is not None:
        s_c = centroid_similarity(features, sp)
    else:
        s_c = fallback_centroid_similarity(sp, height, width)
    s_m = adjacency_similarity(split, sp, s_c, config.top_k)
    counts = [len(c) for c in centroids_in_masks(split, sp)]
    return merge_similar(split, s_m, gallery, config.merge_threshold,
                         config.containment_gamma, height, width,
                         centroid_counts=counts)
