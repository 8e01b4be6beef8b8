import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from entity_refine.masks import (BinaryMask, Box, EntityMap, MaskError,
                                 ScoredMask, centroid, connected_components,
                                 decode, encode, intersect, iou, nms, subtract,
                                 union)
from helpers import rect, scored
from reference import (pixel_set, random_bitmap, ref_intersect, ref_iou,
                       ref_nms, ref_rle, ref_subtract, ref_union)


# -- encode / decode ------------------------------------------------------

def test_encode_all_false():
    m = encode(np.zeros((2, 2), dtype=bool))
    assert m.runs == (4,)
    assert m.area == 0
    assert m.bbox is None


def test_encode_all_true():
    m = encode(np.ones((2, 2), dtype=bool))
    assert m.runs == (0, 4)
    assert m.area == 4
    assert m.bbox == Box(0, 0, 1, 1)


def test_encode_single_pixel_row_major():
    bitmap = np.zeros((2, 2), dtype=bool)
    bitmap[0, 1] = True
    m = encode(bitmap)
    assert m.runs == (1, 1, 2)
    assert m.area == 1


def test_decode_examples():
    assert not decode(BinaryMask.from_runs(2, 2, [4])).any()
    assert decode(BinaryMask.from_runs(2, 2, [0, 4])).all()
    d = decode(BinaryMask.from_runs(2, 2, [1, 1, 2]))
    assert pixel_set(d) == {(0, 1)}


def test_from_runs_validation():
    with pytest.raises(MaskError):
        BinaryMask.from_runs(2, 2, [5])  # sum mismatch
    with pytest.raises(MaskError):
        BinaryMask.from_runs(2, 2, [1, -1, 4])  # negative
    with pytest.raises(MaskError):
        BinaryMask.from_runs(2, 2, [1, 0, 3])  # zero interior run
    with pytest.raises(MaskError):
        BinaryMask.from_runs(0, 4, [0])


def test_encode_rejects_bad_shapes():
    with pytest.raises(MaskError):
        encode(np.zeros((0, 3), dtype=bool))
    with pytest.raises(MaskError):
        encode(np.zeros(9, dtype=bool))


@settings(max_examples=200, deadline=None)
@given(arrays(bool, st.tuples(st.integers(1, 64), st.integers(1, 64))))
def test_roundtrip_property(bitmap):
    m = encode(bitmap)
    assert np.array_equal(decode(m), bitmap)
    assert list(m.runs) == ref_rle(bitmap)
    # canonical: no zero-length interior runs
    assert all(r > 0 for r in m.runs[1:])


def test_rle_record_roundtrip_byte_exact(rng):
    for _ in range(50):
        bitmap = random_bitmap(rng, 17, 23)
        m = encode(bitmap)
        blob = json.dumps(m.to_rle())
        again = BinaryMask.from_rle(json.loads(blob))
        assert json.dumps(again.to_rle()) == blob
        assert np.array_equal(decode(again), bitmap)


def test_from_rle_malformed():
    with pytest.raises(MaskError):
        BinaryMask.from_rle({"counts": [4]})
    with pytest.raises(MaskError):
        BinaryMask.from_rle({"size": [2], "counts": [4]})


# -- algebra vs brute force ----------------------------------------------

def test_algebra_matches_reference(rng):
    for _ in range(300):
        h = int(rng.integers(1, 20))
        w = int(rng.integers(1, 20))
        a_bm, b_bm = random_bitmap(rng, h, w), random_bitmap(rng, h, w)
        a, b = encode(a_bm), encode(b_bm)
        assert iou(a, b) == pytest.approx(ref_iou(a_bm, b_bm), abs=0)
        assert pixel_set(decode(intersect(a, b))) == ref_intersect(a_bm, b_bm)
        assert pixel_set(decode(union(a, b))) == ref_union(a_bm, b_bm)
        assert pixel_set(decode(subtract(a, b))) == ref_subtract(a_bm, b_bm)
        # inclusion-exclusion
        assert intersect(a, b).area + union(a, b).area == a.area + b.area


def test_iou_edge_cases():
    a = encode(rect(4, 4, 0, 0, 1, 1))
    assert iou(a, a) == 1.0
    b = encode(rect(4, 4, 2, 2, 3, 3))
    assert iou(a, b) == 0.0
    e = BinaryMask.empty(4, 4)
    assert iou(e, e) == 0.0
    assert iou(a, e) == 0.0


def test_dimension_mismatch():
    a = BinaryMask.empty(3, 3)
    b = BinaryMask.empty(3, 4)
    for op in (iou, intersect, union, subtract):
        with pytest.raises(MaskError):
            op(a, b)


def test_centroid():
    m = encode(rect(5, 5, 1, 1, 3, 3))
    assert centroid(m) == (2.0, 2.0)
    with pytest.raises(MaskError):
        centroid(BinaryMask.empty(3, 3))


def test_box_validation():
    with pytest.raises(MaskError):
        Box(2, 0, 1, 0)


# -- connected components -------------------------------------------------

def test_components_empty():
    assert connected_components(BinaryMask.empty(4, 4)) == []


def test_components_isolated_pixels():
    bitmap = np.zeros((5, 5), dtype=bool)
    bitmap[0, 0] = bitmap[4, 4] = True
    comps = connected_components(encode(bitmap))
    assert len(comps) == 2
    assert all(c.area == 1 for c in comps)
    # ordered by bbox (row_min, col_min)
    assert comps[0].bbox.row_min == 0


def test_components_diagonal_connectivity():
    bitmap = np.zeros((3, 3), dtype=bool)
    bitmap[0, 0] = bitmap[1, 1] = True
    m = encode(bitmap)
    assert len(connected_components(m, 4)) == 2
    assert len(connected_components(m, 8)) == 1
    with pytest.raises(MaskError):
        connected_components(m, 6)


def test_components_partition_foreground(rng):
    bitmap = random_bitmap(rng, 15, 15)
    m = encode(bitmap)
    comps = connected_components(m, 4)
    acc = np.zeros_like(bitmap, dtype=int)
    for c in comps:
        acc += c.dense
    assert acc.max(initial=0) <= 1
    assert np.array_equal(acc.astype(bool), bitmap)


# -- NMS ------------------------------------------------------------------

def test_nms_single():
    a = scored(rect(4, 4, 0, 0, 2, 2), 0.7)
    assert nms([a], 0.5) == [a]


def test_nms_identical_pair():
    bm = rect(4, 4, 0, 0, 2, 2)
    hi, lo = scored(bm, 0.9), scored(bm, 0.8)
    assert nms([lo, hi], 0.8) == [hi]


def test_nms_three_mask_trace():
    # pairwise IoUs: (a,b) high, (a,c) and (b,c) low
    a = scored(rect(10, 10, 0, 0, 4, 9), 0.9)
    b = scored(rect(10, 10, 0, 0, 4, 8), 0.85)
    c = scored(rect(10, 10, 6, 0, 9, 9), 0.5)
    assert iou(a.mask, b.mask) > 0.8
    assert iou(a.mask, c.mask) < 0.8 and iou(b.mask, c.mask) < 0.8
    assert nms([a, b, c], 0.8) == [a, c]


def test_nms_matches_reference(rng):
    for _ in range(100):
        n = int(rng.integers(0, 7))
        entries = []
        for i in range(n):
            bitmap = random_bitmap(rng, 12, 12)
            if not bitmap.any():
                bitmap[0, 0] = True
            pid = int(rng.integers(0, 4)) if rng.random() < 0.7 else None
            entries.append((bitmap, float(rng.choice([0.3, 0.5, 0.9])), pid))
        thr = float(rng.choice([0.2, 0.5, 0.8]))
        masks = [scored(bm, s, pid) for bm, s, pid in entries]
        got = nms(masks, thr)
        want = [masks[i] for i in ref_nms(entries, thr)]
        assert got == want
        # antichain: every kept pair has IoU <= threshold
        for i in range(len(got)):
            for j in range(i + 1, len(got)):
                assert iou(got[i].mask, got[j].mask) <= thr


# -- ScoredMask / EntityMap ----------------------------------------------

def test_scored_mask_validation():
    bm = BinaryMask.empty(2, 2)
    with pytest.raises(MaskError):
        ScoredMask(bm, 1.5)
    with pytest.raises(MaskError):
        ScoredMask(bm, 0.5, "chunk")


def test_entity_map_disjointness():
    a = scored(rect(4, 4, 0, 0, 1, 1), 0.9)
    b = scored(rect(4, 4, 2, 2, 3, 3), 0.8)
    em = EntityMap.build([a, b], 4, 4)
    assert len(em) == 2
    assert em.covered_area() == 8
    overlapping = scored(rect(4, 4, 0, 0, 2, 2), 0.5)
    with pytest.raises(MaskError):
        EntityMap.build([a, overlapping], 4, 4)
    # permitted when disjointness is waived
    em2 = EntityMap.build([a, overlapping], 4, 4, require_disjoint=False)
    assert len(em2) == 2


def test_entity_map_drops_empty_and_checks_dims():
    a = scored(rect(4, 4, 0, 0, 1, 1), 0.9)
    empty = ScoredMask(BinaryMask.empty(4, 4), 0.0)
    assert len(EntityMap.build([a, empty], 4, 4)) == 1
    with pytest.raises(MaskError):
        EntityMap.build([a], 5, 5)
