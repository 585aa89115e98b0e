import itertools

import numpy as np
import pytest

from oracles import greedy_match_bruteforce
from synthdet.metrics import Detection, EvalError, average_precision, evaluate, iou, match_detections


def test_iou_examples():
    assert iou([0, 0, 2, 2], [0, 0, 2, 2]) == 1.0
    assert iou([0, 0, 1, 1], [5, 5, 1, 1]) == 0.0
    assert iou([0, 0, 2, 2], [1, 1, 2, 2]) == pytest.approx(1 / 7)


def dets_of(pairs):
    return [Detection(0, 1, tuple(b), s) for b, s in pairs]


def test_match_examples():
    gt = [(0, 0, 10, 10)]
    assert match_detections(dets_of([((0, 0, 10, 7), 0.9)]), gt) == [True]
    assert match_detections(dets_of([((0, 0, 10, 10), 0.5), ((0, 0, 10, 9), 0.9)]), gt) == [False, True]


def test_match_vs_bruteforce():
    rng = np.random.default_rng(0)
    for _ in range(300):
        gts = [tuple(rng.integers(0, 8, 2)) + tuple(rng.integers(2, 6, 2)) for _ in range(rng.integers(0, 4))]
        pairs = [(tuple(rng.integers(0, 8, 2)) + tuple(rng.integers(2, 6, 2)), float(rng.integers(0, 4)) / 4)
                 for _ in range(rng.integers(0, 5))]
        ours = match_detections(dets_of(pairs), gts, 0.3)
        ref = greedy_match_bruteforce(pairs, gts, 0.3, iou) if pairs else []
        assert ours == ref


def test_ap_examples():
    assert average_precision([True, True], [0.9, 0.1], 2) == 1.0
    assert average_precision([], [], 3) == 0.0
    assert average_precision([True, False, True], [0.9, 0.8, 0.7], 2) == pytest.approx(5 / 6, abs=1e-12)
    with pytest.raises(EvalError):
        average_precision([True], [1.0], 0)


def test_ap_monotone():
    rng = np.random.default_rng(2)
    for _ in range(200):
        n = int(rng.integers(1, 10))
        labels = list(rng.random(n) < 0.5)
        scores = list(rng.random(n) + 0.1)
        # the extra TP claims a ground-truth box that was missed so far
        gt = sum(labels) + 1 + int(rng.integers(0, 3))
        base = average_precision(labels, scores, gt)
        assert average_precision(labels + [True], scores + [0.0], gt) >= base - 1e-12
        assert average_precision(labels + [False], scores + [0.0], gt) <= base + 1e-12
        assert average_precision(labels, [3 * s for s in scores], gt) == base


def fixture_docs():
    gt = {"images": [{"id": 1}, {"id": 2}], "categories": [{"id": 1}, {"id": 2}],
          "annotations": [{"image_id": 1, "category_id": 1, "bbox": [0, 0, 10, 10]},
                          {"image_id": 2, "category_id": 1, "bbox": [20, 20, 10, 10]},
                          {"image_id": 1, "category_id": 2, "bbox": [50, 50, 5, 5]}]}
    pred = [{"image_id": 1, "category_id": 1, "bbox": [0, 0, 10, 10], "score": 0.9},
            {"image_id": 2, "category_id": 1, "bbox": [60, 60, 10, 10], "score": 0.8},
            {"image_id": 2, "category_id": 1, "bbox": [20, 20, 10, 10], "score": 0.7},
            {"image_id": 1, "category_id": 2, "bbox": [50, 50, 5, 5], "score": 0.6}]
    return gt, pred


def test_evaluate_fixture():
    gt, pred = fixture_docs()
    res = evaluate(pred, gt)
    assert res.per_class[1] == pytest.approx(5 / 6, abs=1e-9)
    assert res.per_class[2] == pytest.approx(1.0, abs=1e-9)
    assert res.mAP == pytest.approx(11 / 12, abs=1e-9)


def test_evaluate_perfect_and_empty():
    gt, _ = fixture_docs()
    perfect = [dict(a, score=1.0) for a in gt["annotations"]]
    assert evaluate(perfect, gt).mAP == 1.0
    assert evaluate([], gt).mAP == 0.0


def test_evaluate_invariances():
    gt, pred = fixture_docs()
    base = evaluate(pred, gt).mAP
    for perm in itertools.permutations(pred):
        assert evaluate(list(perm), gt).mAP == base
    remap = {1: 17, 2: 4}
    gt2 = {"images": [{"id": remap[i["id"]]} for i in gt["images"]], "categories": gt["categories"],
           "annotations": [dict(a, image_id=remap[a["image_id"]]) for a in gt["annotations"]]}
    pred2 = [dict(p, image_id=remap[p["image_id"]]) for p in pred]
    assert evaluate(pred2, gt2).mAP == base


def test_evaluate_errors():
    gt, pred = fixture_docs()
    with pytest.raises(EvalError):
        evaluate(pred + [{"image_id": 1, "category_id": 9, "bbox": [0, 0, 1, 1], "score": 0.1}], gt)
    with pytest.raises(EvalError):
        evaluate([{"image_id": 5, "category_id": 1, "bbox": [0, 0, 1, 1], "score": 0.1}], gt)
