"""Instance masks, tight boxes and COCO-style documents from ID buffers."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

REFERENCE_PIXELS = 1024 * 768
DEFAULT_MIN_PIXELS = 20


class AnnotationError(ValueError):
    pass


@dataclass
class BBox:
    x: int
    y: int
    w: int
    h: int

    def as_list(self):
        return [int(self.x), int(self.y), int(self.w), int(self.h)]


@dataclass
class InstanceMask:
    instance_id: int
    class_id: int
    counts: list  # column-major RLE, leading zero-run first
    width: int
    height: int

    @property
    def area(self) -> int:
        return int(sum(self.counts[1::2]))

    def bitmap(self) -> np.ndarray:
        return decode_rle(self.counts, self.height, self.width)


@dataclass
class AnnotationSet:
    file_name: str
    width: int
    height: int
    variant: str = ""
    frame_seed: int = 0
    image_id: int = 0
    items: list = field(default_factory=list)  # [(InstanceMask, BBox, class_id)]


def encode_rle(mask: np.ndarray) -> list:
    """Run lengths of a bitmap scanned column by column, background run first."""
    flat = np.asarray(mask, dtype=bool).ravel(order="F")
    if flat.size == 0:
        return [0]
    change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate([[0], change, [flat.size]])
    runs = np.diff(bounds).tolist()
    if flat[0]:
        runs.insert(0, 0)
    return [int(r) for r in runs]


def decode_rle(counts, height, width) -> np.ndarray:
    counts = np.asarray(counts, dtype=np.int64)
    if counts.sum() != height * width:
        raise AnnotationError(f"run lengths sum to {counts.sum()}, expected {height * width}")
    values = np.arange(len(counts)) % 2 == 1
    flat = np.repeat(values, counts)
    return flat.reshape((height, width), order="F")


def bbox_from_mask(mask: np.ndarray) -> BBox:
    mask = np.asarray(mask, dtype=bool)
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    if rows.size == 0:
        raise AnnotationError("empty mask has no bounding box")
    return BBox(int(cols[0]), int(rows[0]), int(cols[-1] - cols[0] + 1), int(rows[-1] - rows[0] + 1))


def masks_from_ids(ids: np.ndarray, class_of=None) -> list:
    """One mask per distinct nonzero id; ``class_of`` maps instance id to class id."""
    ids = np.asarray(ids)
    h, w = ids.shape
    out = []
    for iid in np.unique(ids):
        if iid == 0:
            continue
        cid = int(class_of[int(iid)]) if class_of is not None else 0
        out.append(InstanceMask(int(iid), cid, encode_rle(ids == iid), w, h))
    return out


def scaled_min_pixels(width, height, base=DEFAULT_MIN_PIXELS) -> int:
    """Visibility threshold proportional to image area, at least 1."""
    return max(1, int(round(base * width * height / REFERENCE_PIXELS)))


def filter_visibility(annotations, min_pixels: int = DEFAULT_MIN_PIXELS):
    """Drop instances whose mask covers fewer than ``min_pixels`` pixels.

    Accepts an AnnotationSet (returns a new one) or a list of masks / items.
    """
    if min_pixels < 1:
        raise ValueError("min_pixels must be at least 1")

    def area(item):
        m = item[0] if isinstance(item, tuple) else item
        return m.area

    if isinstance(annotations, AnnotationSet):
        kept = [it for it in annotations.items if area(it) >= min_pixels]
        return AnnotationSet(annotations.file_name, annotations.width, annotations.height, annotations.variant,
                             annotations.frame_seed, annotations.image_id, kept)
    return [it for it in annotations if area(it) >= min_pixels]


def annotate_frame(ids, class_of, file_name, image_id=0, variant="", frame_seed=0, min_pixels=None) -> AnnotationSet:
    h, w = ids.shape
    if min_pixels is None:
        min_pixels = scaled_min_pixels(w, h)
    items = []
    for m in masks_from_ids(ids, class_of):
        if m.area == 0:
            continue
        items.append((m, bbox_from_mask(ids == m.instance_id), m.class_id))
    aset = AnnotationSet(file_name, w, h, variant, int(frame_seed), int(image_id), items)
    return filter_visibility(aset, min_pixels)


def categories(catalog) -> list:
    return [{"id": int(pc.class_id), "name": pc.name, "supercategory": "part"} for pc in catalog]


def emit_coco(sets, catalog) -> dict:
    """COCO-style document; annotation ids follow image order then instance id."""
    seen = set()
    images, anns = [], []
    valid = set(catalog.class_ids)
    next_id = 1
    for s in sets:
        if s.image_id in seen:
            raise AnnotationError(f"duplicate image id {s.image_id}")
        seen.add(s.image_id)
        images.append({"id": int(s.image_id), "file_name": s.file_name, "width": int(s.width),
                       "height": int(s.height), "variant": s.variant, "frame_seed": int(s.frame_seed)})
        for mask, box, cid in sorted(s.items, key=lambda it: it[0].instance_id):
            if cid not in valid:
                raise AnnotationError(f"class id {cid} not in catalog")
            anns.append({"id": next_id, "image_id": int(s.image_id), "category_id": int(cid),
                         "bbox": box.as_list(), "area": mask.area, "iscrowd": 0,
                         "instance_id": int(mask.instance_id),
                         "segmentation": {"size": [int(mask.height), int(mask.width)], "counts": list(mask.counts)}})
            next_id += 1
    return {"images": images, "annotations": anns, "categories": categories(catalog)}


def dumps(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def load_coco(path) -> dict:
    with open(path) as f:
        return json.load(f)
