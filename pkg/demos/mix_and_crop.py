"""Mix two manifests 20/80, then cut 256-pixel crops for image-to-image training.

    python demos/mix_and_crop.py

Everything lives in a temporary directory. The "refined" source is a stand-in
made of noise images, since real refined images come from an external model.
"""

import tempfile
from pathlib import Path

import numpy as np

from synthdet.composer import CropConfig, DatasetManifest, MixSpec, Record, compose, extract_crops
from synthdet.images import save_rgb
from synthdet.randomizer import DatasetVariant

rng = np.random.default_rng(0)
with tempfile.TemporaryDirectory() as tmp:
    tmp = Path(tmp)
    sources = {}
    for variant in (DatasetVariant.FIX_REFINED, DatasetVariant.RAND_TEX):
        recs = []
        for k in range(10):
            p = tmp / f"{variant.value}_{k}.png"
            save_rgb(p, rng.integers(0, 256, (768, 1024, 3), dtype=np.uint8))
            recs.append(Record(str(p), "", variant))
        sources[variant] = DatasetManifest(recs)

    mix = compose(MixSpec([(sources[DatasetVariant.FIX_REFINED], 0.2),
                           (sources[DatasetVariant.RAND_TEX], 0.8)], total=10, seed=1))
    print("mixed:", mix.histogram())

    crops = extract_crops(mix, CropConfig(size=256, per_image=2, seed=1), tmp / "crops")
    for c in crops[:4]:
        print(f"  {Path(c.path).name}  from {Path(c.source).name} at ({c.ox}, {c.oy})")
    print(f"{len(crops)} crops in total")
