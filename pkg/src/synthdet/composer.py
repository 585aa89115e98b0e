"""Dataset manifests: mixing at fixed ratios, external ingest, crops, splits."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .images import image_size, load_rgb, save_rgb
from .randomizer import DatasetVariant, make_rng

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")


class ComposeError(ValueError):
    pass


@dataclass(frozen=True)
class Record:
    image: str
    annotation: str
    variant: DatasetVariant

    def to_dict(self):
        return {"image": self.image, "annotation": self.annotation, "variant": self.variant.value}

    @classmethod
    def from_dict(cls, d):
        return cls(str(d["image"]), str(d.get("annotation", "")), DatasetVariant.parse(d["variant"]))


@dataclass
class DatasetManifest:
    records: list = field(default_factory=list)
    seed: int = 0

    def __len__(self):
        return len(self.records)

    def dumps(self) -> str:
        """One JSON object per line; the first line is a header carrying the seed."""
        lines = [json.dumps({"seed": int(self.seed), "count": len(self.records)}, sort_keys=True)]
        lines += [json.dumps(r.to_dict(), sort_keys=True) for r in self.records]
        return "\n".join(lines) + "\n"

    def save(self, path):
        Path(path).write_text(self.dumps())

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        path = Path(path)
        lines = [ln for ln in path.read_text().splitlines() if ln.strip()]
        seed = 0
        records = []
        base = path.parent
        for ln in lines:
            d = json.loads(ln)
            if "image" not in d:
                seed = int(d.get("seed", 0))
                continue
            r = Record.from_dict(d)
            # relative paths are taken relative to the manifest file
            img = r.image if Path(r.image).is_absolute() else str(base / r.image)
            ann = r.annotation
            if ann and not Path(ann).is_absolute():
                ann = str(base / ann)
            records.append(Record(img, ann, r.variant))
        return cls(records, seed)

    def histogram(self) -> dict:
        out = {}
        for r in self.records:
            out[r.variant.value] = out.get(r.variant.value, 0) + 1
        return dict(sorted(out.items()))


@dataclass
class MixSpec:
    components: list  # [(DatasetManifest, fraction)]
    total: int
    seed: int = 0
    names: list = field(default_factory=list)

    def __post_init__(self):
        if self.total < 1:
            raise ComposeError("total must be at least 1")
        fr = [float(f) for _, f in self.components]
        if any(f < 0 or f > 1 for f in fr):
            raise ComposeError("fractions must lie in [0, 1]")
        if abs(sum(fr) - 1.0) > 1e-9:
            raise ComposeError(f"fractions sum to {sum(fr):.12g}, expected 1")
        if not self.names:
            self.names = [f"component {k}" for k in range(len(self.components))]

    @classmethod
    def load(cls, path) -> "MixSpec":
        path = Path(path)
        d = json.loads(path.read_text())
        comps, names = [], []
        for c in d["components"]:
            mp = Path(c["manifest"])
            if not mp.is_absolute():
                mp = path.parent / mp
            comps.append((DatasetManifest.load(mp), float(c["fraction"])))
            names.append(str(c["manifest"]))
        return cls(comps, int(d["total"]), int(d.get("seed", 0)), names)


def largest_remainder(fractions, total) -> list:
    """Integer counts proportional to ``fractions`` summing exactly to ``total``.

    Leftover units go to the largest fractional parts; ties favor the earlier component.
    """
    quotas = [float(f) * total for f in fractions]
    counts = [int(np.floor(q)) for q in quotas]
    left = total - sum(counts)
    order = sorted(range(len(quotas)), key=lambda k: (-(quotas[k] - counts[k]), k))
    for k in order[:left]:
        counts[k] += 1
    return counts


def compose(spec: MixSpec) -> DatasetManifest:
    rng = make_rng(spec.seed)
    counts = largest_remainder([f for _, f in spec.components], spec.total)
    picked = []
    for (manifest, _), n, name in zip(spec.components, counts, spec.names):
        if n > len(manifest.records):
            raise ComposeError(f"{name}: needs {n} records but has only {len(manifest.records)}")
        idx = rng.choice(len(manifest.records), size=n, replace=False) if n else []
        picked.extend(manifest.records[int(i)] for i in idx)
    order = rng.permutation(len(picked))
    return DatasetManifest([picked[int(i)] for i in order], spec.seed)


def ingest_external(directory, variant=DatasetVariant.FIX_REFINED, annotation_dir=None) -> DatasetManifest:
    """Pair every image in ``directory`` with ``<stem>.json`` by stem name.

    Annotations are looked up next to the image unless ``annotation_dir`` is given.
    """
    directory = Path(directory)
    ann_dir = Path(annotation_dir) if annotation_dir else directory
    variant = DatasetVariant.parse(variant)
    images = sorted(p for p in directory.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES
                    and not p.stem.endswith("_ids"))
    records = []
    for img in images:
        ann = ann_dir / f"{img.stem}.json"
        if not ann.exists():
            raise ComposeError(f"no annotation for image stem {img.stem!r}")
        records.append(Record(str(img), str(ann), variant))
    return DatasetManifest(records, 0)


@dataclass
class CropConfig:
    size: int = 256
    per_image: int = 4
    seed: int = 0

    def __post_init__(self):
        if self.size < 1 or self.per_image < 1:
            raise ComposeError("crop size and per_image must be at least 1")


@dataclass(frozen=True)
class Crop:
    source: str
    ox: int
    oy: int
    size: int
    path: str = ""


def crop_name(stem, ox, oy) -> str:
    return f"{stem}_x{ox:04d}_y{oy:04d}.png"


def crop_offsets(width, height, config: CropConfig, rng) -> list:
    if config.size > min(width, height):
        raise ComposeError(f"crop size {config.size} exceeds image {width}x{height}")
    xs = rng.integers(0, width - config.size + 1, size=config.per_image)
    ys = rng.integers(0, height - config.size + 1, size=config.per_image)
    return [(int(x), int(y)) for x, y in zip(xs, ys)]


def extract_crops(manifest: DatasetManifest, config: CropConfig, out_dir=None) -> list:
    """Random square windows per image; written as PNGs when ``out_dir`` is given.

    Offsets come from a generator seeded by ``config.seed``, consumed in manifest order.
    Images are validated before any crop is written.
    """
    rng = make_rng(config.seed)
    for r in manifest.records:
        w, h = image_size(r.image)
        if config.size > min(w, h):
            raise ComposeError(f"{r.image}: crop size {config.size} exceeds image {w}x{h}")
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
    crops = []
    for r in manifest.records:
        img = load_rgb(r.image)
        h, w = img.shape[:2]
        stem = Path(r.image).stem
        for ox, oy in crop_offsets(w, h, config, rng):
            path = ""
            if out_dir is not None:
                path = str(out_dir / crop_name(stem, ox, oy))
                save_rgb(path, img[oy:oy + config.size, ox:ox + config.size])
            crops.append(Crop(r.image, ox, oy, config.size, path))
    return crops


def split(manifest: DatasetManifest, fractions=(0.8, 0.2), seed=0):
    """Seeded partition into (train, val) with largest-remainder sizes."""
    fr = [float(f) for f in fractions]
    if any(f < 0 for f in fr) or abs(sum(fr) - 1.0) > 1e-9:
        raise ComposeError("split fractions must be non-negative and sum to 1")
    n = len(manifest.records)
    n_train, _ = largest_remainder(fr, n) if n else (0, 0)
    order = make_rng(seed).permutation(n)
    train = [manifest.records[int(i)] for i in order[:n_train]]
    val = [manifest.records[int(i)] for i in order[n_train:]]
    return DatasetManifest(train, manifest.seed), DatasetManifest(val, manifest.seed)
