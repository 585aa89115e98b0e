"""Frame generation: settle, sample, render, annotate, write."""

from __future__ import annotations

import json
import os
import sys
from dataclasses import replace
from pathlib import Path

from .annotate import annotate_frame, dumps, emit_coco, scaled_min_pixels
from .composer import DatasetManifest, Record
from .images import save_ids, save_rgb
from .randomizer import DatasetVariant, GenerationError, SceneConfig, sample_scene
from .render import RenderConfig, render

FAILED_MARKER = ".failed"
COCO_NAME = "annotations.json"
MANIFEST_NAME = "manifest.jsonl"


def frame_stem(index: int) -> str:
    return f"frame_{index:06d}"


def _atomic_write(path: Path, text: str):
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def render_config_for(variant, config: RenderConfig) -> RenderConfig:
    """The plain variant sits on an endless white backdrop, so misses are white too."""
    if DatasetVariant.parse(variant) is DatasetVariant.FIX and config.background == RenderConfig().background:
        return replace(config, background=(1.0, 1.0, 1.0))
    return config


def generate_frame(variant, catalog, master_seed, index, scene_config=None, render_config=None):
    """(SceneSpec, RenderOutput, AnnotationSet) for one frame."""
    render_config = render_config_for(variant, render_config or RenderConfig())
    scene = sample_scene(variant, catalog, master_seed, index, scene_config or SceneConfig())
    out = render(scene, catalog, render_config)
    class_of = {i.instance_id: i.class_id for i in scene.instances}
    aset = annotate_frame(out.ids, class_of, f"{frame_stem(index)}.png", image_id=index,
                          variant=scene.variant.value, frame_seed=scene.frame_seed,
                          min_pixels=scaled_min_pixels(render_config.width, render_config.height))
    return scene, out, aset


def generate(variant, count, master_seed, catalog, out_dir, scene_config=None, render_config=None,
             progress=True, start=0):
    """Write ``count`` frames plus one COCO document and a manifest into ``out_dir``.

    On failure a ``.failed`` marker replaces the COCO document and the error is re-raised.
    """
    variant = DatasetVariant.parse(variant)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    coco_path = out_dir / COCO_NAME
    marker = out_dir / FAILED_MARKER
    for stale in (coco_path, marker):
        if stale.exists():
            stale.unlink()
    sets, records = [], []
    try:
        for k in range(start, start + count):
            scene, out, aset = generate_frame(variant, catalog, master_seed, k, scene_config, render_config)
            stem = frame_stem(k)
            save_rgb(out_dir / f"{stem}.png", out.rgb)
            save_ids(out_dir / f"{stem}_ids.png", out.ids)
            doc = emit_coco([aset], catalog)
            doc["scene"] = scene.to_dict()
            _atomic_write(out_dir / f"{stem}.json", dumps(doc))
            sets.append(aset)
            records.append(Record(f"{stem}.png", f"{stem}.json", variant))
            if progress:
                print(f"[{k - start + 1}/{count}] {stem}: {len(aset.items)} instances, "
                      f"{scene.settle_steps} settle steps", file=sys.stderr, flush=True)
    except Exception as e:
        marker.write_text(f"{type(e).__name__}: {e}\n")
        if isinstance(e, GenerationError):
            raise
        raise GenerationError(str(e), getattr(e, "frame_index", None)) from e
    _atomic_write(out_dir / MANIFEST_NAME, DatasetManifest(records, master_seed).dumps())
    _atomic_write(coco_path, dumps(emit_coco(sets, catalog)))
    return coco_path


def load_json(path):
    return json.loads(Path(path).read_text())
