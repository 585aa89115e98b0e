import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from oracles import naive_rle
from synthdet.annotate import (AnnotationError, AnnotationSet, annotate_frame, bbox_from_mask, decode_rle, dumps,
                               emit_coco, encode_rle, filter_visibility, masks_from_ids, scaled_min_pixels)


def test_rle_examples():
    assert encode_rle(np.zeros((2, 2), bool)) == [4]
    m = np.zeros((2, 2), bool)
    m[0, 0] = True
    assert encode_rle(m) == [0, 1, 3]
    m = np.zeros((2, 2), bool)
    m[1, 0] = True  # second pixel in column-major order
    assert encode_rle(m) == [1, 1, 2]


@settings(max_examples=200, deadline=None)
@given(arrays(np.bool_, st.tuples(st.integers(1, 12), st.integers(1, 12))))
def test_rle_roundtrip_and_oracle(mask):
    counts = encode_rle(mask)
    assert counts == naive_rle(mask)
    assert sum(counts) == mask.size
    assert (decode_rle(counts, *mask.shape) == mask).all()


def test_rle_thousand_random():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        h, w = rng.integers(1, 40, 2)
        m = rng.random((h, w)) < rng.random()
        assert (decode_rle(encode_rle(m), h, w) == m).all()


def test_decode_rejects_bad_total():
    with pytest.raises(AnnotationError):
        decode_rle([1, 2], 2, 2)


def test_masks_from_ids():
    assert masks_from_ids(np.zeros((3, 3), np.uint16)) == []
    ms = masks_from_ids(np.array([[1, 0], [0, 2]], np.uint16), {1: 4, 2: 5})
    assert [(m.instance_id, m.class_id, m.area) for m in ms] == [(1, 4, 1), (2, 5, 1)]


def test_masks_partition_random_buffer():
    rng = np.random.default_rng(1)
    ids = rng.integers(0, 6, size=(40, 50)).astype(np.uint16)
    ms = masks_from_ids(ids)
    total = np.zeros(ids.shape, int)
    for m in ms:
        total += m.bitmap()
    assert total.max() == 1
    assert ((total == 1) == (ids > 0)).all()
    assert sum(m.area for m in ms) == int((ids > 0).sum())


def test_bbox_examples():
    m = np.zeros((8, 8), bool)
    m[3, 2] = m[5, 4] = True  # (x, y) = (2, 3) and (4, 5)
    b = bbox_from_mask(m)
    assert (b.x, b.y, b.w, b.h) == (2, 3, 3, 3)
    m = np.zeros((4, 4), bool)
    m[0, 0] = True
    assert bbox_from_mask(m).as_list() == [0, 0, 1, 1]
    with pytest.raises(AnnotationError):
        bbox_from_mask(np.zeros((3, 3), bool))


@settings(max_examples=100, deadline=None)
@given(arrays(np.bool_, st.tuples(st.integers(1, 15), st.integers(1, 15))))
def test_bbox_tight(mask):
    if not mask.any():
        return
    b = bbox_from_mask(mask)
    inside = np.zeros_like(mask)
    inside[b.y:b.y + b.h, b.x:b.x + b.w] = True
    assert not (mask & ~inside).any()
    assert mask[b.y, :].any() and mask[b.y + b.h - 1, :].any()
    assert mask[:, b.x].any() and mask[:, b.x + b.w - 1].any()


def _set(areas):
    ids = np.zeros((20, 20), np.uint16)
    flat = ids.reshape(-1)
    pos = 0
    for k, a in enumerate(areas, start=1):
        flat[pos:pos + a] = k
        pos += a
    return annotate_frame(ids, {k: 1 for k in range(1, len(areas) + 1)}, "f.png", min_pixels=1)


def test_filter_visibility():
    s = _set([49, 50, 3])
    assert len(filter_visibility(s, 1).items) == 3
    kept = filter_visibility(s, 50).items
    assert [m.area for m, _, _ in kept] == [50]
    with pytest.raises(ValueError):
        filter_visibility(s, 0)


def test_scaled_threshold():
    assert scaled_min_pixels(1024, 768) == 20
    assert scaled_min_pixels(512, 384) == 5
    assert scaled_min_pixels(8, 8) == 1


def test_emit_coco(catalog):
    doc = emit_coco([], catalog)
    assert doc["images"] == [] and doc["annotations"] == [] and len(doc["categories"]) == 12
    s = _set([7])
    doc = emit_coco([s], catalog)
    (ann,) = doc["annotations"]
    assert ann["area"] == 7 and ann["iscrowd"] == 0 and ann["segmentation"]["size"] == [20, 20]
    assert dumps(emit_coco([s], catalog)) == dumps(emit_coco([s], catalog))
    s2 = AnnotationSet("g.png", 20, 20, image_id=s.image_id)
    with pytest.raises(AnnotationError):
        emit_coco([s, s2], catalog)
