import numpy as np
import pytest

from entity_refine.evaluation import (DEFAULT_THRESHOLDS, EvalError,
                                      ImageMasks, average_precision, match,
                                      pairwise_iou, read_ndjson, write_ndjson)
from entity_refine.masks import ScoredMask
from helpers import rect, scored
from reference import random_bitmap, ref_average_precision, ref_match


def _image(image_id, masks, h=16, w=16):
    return ImageMasks(image_id, h, w, tuple(masks))


# -- matching -------------------------------------------------------------

def test_match_perfect():
    gts = [scored(rect(8, 8, 0, 0, 3, 3), 1.0), scored(rect(8, 8, 5, 5, 7, 7), 1.0)]
    preds = [ScoredMask(g.mask, 1.0) for g in gts]
    result = dict(match(preds, gts, 0.5))
    assert result == {0: 0, 1: 1}


def test_match_empty_preds():
    gts = [scored(rect(8, 8, 0, 0, 3, 3), 1.0)]
    assert match([], gts, 0.5) == []


def test_match_prefers_higher_iou():
    gt1 = scored(rect(10, 10, 0, 0, 4, 9), 1.0)   # 50 px
    gt2 = scored(rect(10, 10, 5, 0, 9, 9), 1.0)   # 50 px
    pred_bm = rect(10, 10, 2, 0, 7, 9)            # overlaps both
    pred = scored(pred_bm, 0.9)
    table = pairwise_iou([pred], [gt1, gt2])
    assert table[0, 0] == table[0, 1]  # symmetric overlap: tie
    [(_, gi)] = match([pred], [gt1, gt2], 0.2)
    assert gi == 0  # ties go to the lower gt index
    # shift the prediction down: gt2 now has the higher IoU
    pred2 = scored(rect(10, 10, 3, 0, 8, 9), 0.9)
    [(_, gi)] = match([pred2], [gt1, gt2], 0.2)
    assert gi == 1


def test_match_agrees_with_reference(rng):
    for _ in range(200):
        n_p = int(rng.integers(0, 6))
        n_g = int(rng.integers(0, 6))
        preds_raw = []
        for _ in range(n_p):
            bm = random_bitmap(rng, 10, 10)
            if not bm.any():
                bm[0, 0] = True
            preds_raw.append((bm, float(rng.random())))
        gts_raw = []
        for _ in range(n_g):
            bm = random_bitmap(rng, 10, 10)
            if not bm.any():
                bm[1, 1] = True
            gts_raw.append(bm)
        thr = float(rng.choice([0.3, 0.5, 0.75]))
        preds = [scored(bm, s) for bm, s in preds_raw]
        gts = [scored(bm, 1.0) for bm in gts_raw]
        got = dict(match(preds, gts, thr))
        want = ref_match(preds_raw, gts_raw, thr)
        assert got == want


# -- average precision ----------------------------------------------------

def test_perfect_predictions_score_one():
    gts_masks = [scored(rect(16, 16, 0, 0, 5, 5), 1.0),
                 scored(rect(16, 16, 8, 8, 13, 13), 1.0)]
    gt = _image("a", gts_masks)
    pred = _image("a", [ScoredMask(m.mask, 0.9) for m in gts_masks])
    res = average_precision([pred], [gt])
    assert res.ap == res.ap50 == res.ap75 == 1.0
    assert all(v == 1.0 for _, v in res.per_threshold)


def test_zero_correct_predictions():
    gt = _image("a", [scored(rect(16, 16, 0, 0, 5, 5), 1.0)])
    pred = _image("a", [scored(rect(16, 16, 10, 10, 15, 15), 0.9)])
    res = average_precision([pred], [gt])
    assert res.ap == 0.0


def test_frozen_two_pred_example():
    # 2 gts; pred1 (score .9) hits gt1 with IoU 0.9; pred2 (score .8) hits
    # nothing.  Ranked flags (TP, FP) over 2 gts with 101-point
    # interpolation: 51 grid points at precision 1.0 -> AP50 = 51/101
    gt1 = rect(20, 20, 0, 0, 9, 9)
    gt2 = rect(20, 20, 12, 12, 19, 19)
    pred1 = rect(20, 20, 0, 0, 9, 9).copy()
    pred1[9, :10] = False  # IoU 90/100 = 0.9 with gt1
    pred2 = rect(20, 20, 0, 12, 5, 19)
    gt = _image("a", [scored(gt1, 1.0), scored(gt2, 1.0)], 20, 20)
    preds = _image("a", [scored(pred1, 0.9), scored(pred2, 0.8)], 20, 20)
    res = average_precision([preds], [gt], thresholds=(0.5,))
    assert res.ap50 == pytest.approx(51 / 101)
    assert res.ap50 == pytest.approx(
        ref_average_precision([True, False], 2))


def test_ap_matches_reference_random(rng):
    for _ in range(40):
        gts_m, preds_m = [], []
        for _ in range(int(rng.integers(1, 5))):
            bm = random_bitmap(rng, 12, 12)
            if not bm.any():
                bm[2, 2] = True
            gts_m.append(scored(bm, 1.0))
        for _ in range(int(rng.integers(0, 5))):
            bm = random_bitmap(rng, 12, 12)
            if not bm.any():
                bm[3, 3] = True
            preds_m.append(scored(bm, float(rng.random())))
        gt = _image("a", gts_m, 12, 12)
        pred = _image("a", preds_m, 12, 12)
        thr = 0.5
        res = average_precision([pred], [gt], thresholds=(thr,))
        # independent reference: greedy-match, rank, 101-point integrate
        matched = ref_match([(m.mask.dense, m.score) for m in preds_m],
                            [m.mask.dense for m in gts_m], thr)
        ranked = sorted(range(len(preds_m)),
                        key=lambda i: (-preds_m[i].score, i))
        flags = [matched[i] is not None for i in ranked]
        assert res.ap50 == pytest.approx(ref_average_precision(flags, len(gts_m)))


def test_monotone_rescaling_invariance(rng):
    for _ in range(20):
        gts_m = [scored(random_bitmap(rng, 12, 12) | rect(12, 12, 0, 0, 2, 2), 1.0)
                 for _ in range(3)]
        preds_m = [scored(random_bitmap(rng, 12, 12) | rect(12, 12, 1, 1, 3, 3),
                          float(rng.uniform(0.1, 0.9)))
                   for _ in range(4)]
        gt = _image("a", gts_m, 12, 12)
        base = average_precision([_image("a", preds_m, 12, 12)], [gt])
        rescaled = [ScoredMask(m.mask, m.score ** 2, m.level, m.prompt_id)
                    for m in preds_m]  # strictly monotone on (0,1)
        again = average_precision([_image("a", rescaled, 12, 12)], [gt])
        assert base.per_threshold == again.per_threshold


def test_ap_antitone_in_threshold(rng):
    gts_m = [scored(rect(16, 16, 0, 0, 7, 7), 1.0),
             scored(rect(16, 16, 9, 9, 15, 15), 1.0)]
    noisy = rect(16, 16, 0, 0, 7, 6)
    preds_m = [scored(noisy, 0.9), scored(rect(16, 16, 9, 9, 15, 15), 0.8)]
    res = average_precision([_image("a", preds_m)], [_image("a", gts_m)])
    values = [v for _, v in res.per_threshold]
    assert all(a >= b for a, b in zip(values, values[1:]))
    assert res.ap == pytest.approx(float(np.mean(values)))


def test_errors():
    gt = _image("a", [scored(rect(16, 16, 0, 0, 3, 3), 1.0)])
    with pytest.raises(EvalError):
        average_precision([_image("mystery", [])], [gt])
    with pytest.raises(EvalError):
        average_precision([], [_image("a", [])])


def test_thresholds_default():
    assert DEFAULT_THRESHOLDS[0] == 0.5
    assert DEFAULT_THRESHOLDS[-1] == 0.95
    assert len(DEFAULT_THRESHOLDS) == 10


def test_thread_count_independence(monkeypatch, rng):
    images_p, images_g = [], []
    for i in range(4):
        gts_m = [scored(random_bitmap(rng, 12, 12) | rect(12, 12, 0, 0, 2, 2), 1.0)]
        preds_m = [scored(random_bitmap(rng, 12, 12) | rect(12, 12, 1, 1, 3, 3),
                          float(rng.random())) for _ in range(3)]
        images_g.append(_image(f"im{i}", gts_m, 12, 12))
        images_p.append(_image(f"im{i}", preds_m, 12, 12))
    monkeypatch.setenv("ENTITY_REFINE_THREADS", "1")
    serial = average_precision(images_p, images_g)
    monkeypatch.setenv("ENTITY_REFINE_THREADS", "8")
    parallel = average_precision(images_p, images_g)
    assert serial == parallel


# -- ndjson ---------------------------------------------------------------

def test_ndjson_roundtrip(tmp_path, rng):
    images = []
    for i in range(3):
        masks = [scored(random_bitmap(rng, 9, 11) | rect(9, 11, 0, 0, 1, 1),
                        round(float(rng.random()), 6)) for _ in range(2)]
        images.append(ImageMasks(f"im{i}", 9, 11, tuple(masks)))
    path = tmp_path / "preds.ndjson"
    write_ndjson(path, images, with_scores=True)
    again = read_ndjson(path)
    assert len(again) == 3
    for a, b in zip(images, again):
        assert (a.image_id, a.height, a.width) == (b.image_id, b.height, b.width)
        for ma, mb in zip(a.masks, b.masks):
            assert ma.mask.runs == mb.mask.runs
            assert ma.score == mb.score


def test_ndjson_without_scores(tmp_path):
    im = ImageMasks("x", 4, 4, (scored(rect(4, 4, 0, 0, 1, 1), 0.7),))
    path = tmp_path / "gt.ndjson"
    write_ndjson(path, [im], with_scores=False)
    [back] = read_ndjson(path)
    assert back.masks[0].score == 1.0  # scores default when absent
