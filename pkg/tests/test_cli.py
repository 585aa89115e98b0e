import json
import subprocess
import sys

import numpy as np
import pytest
from scipy.ndimage import binary_dilation

from synthdet.cli import main
from synthdet.composer import DatasetManifest, Record
from synthdet.images import load_ids, load_rgb
from synthdet.randomizer import DatasetVariant


def small_config(tmp_path, **extra):
    cfg = {"generate": {"width": 96, "height": 72, "spp": 1, **extra}}
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(cfg))
    return str(p)


def test_generate_deterministic(tmp_path, catalog_dir):
    cfg = small_config(tmp_path)
    args = ["--config", cfg, "generate", "--count", "2", "--seed", "7", "--catalog", str(catalog_dir)]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert "annotations.json" in names and "frame_000001_ids.png" in names
    for n in names:
        assert (tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes()
    assert load_rgb(tmp_path / "a" / "frame_000000.png").shape == (72, 96, 3)


def test_flags_override_config(tmp_path, catalog_dir):
    cfg = small_config(tmp_path)
    assert main(["--config", cfg, "generate", "--count", "1", "--width", "40", "--height", "30",
                 "--catalog", str(catalog_dir), "--out", str(tmp_path / "o")]) == 0
    assert load_ids(tmp_path / "o" / "frame_000000_ids.png").shape == (30, 40)


def test_fix_floor_white(tmp_path, catalog_dir):
    cfg = small_config(tmp_path)
    assert main(["--config", cfg, "generate", "--variant", "fix", "--count", "2", "--catalog", str(catalog_dir),
                 "--out", str(tmp_path / "f")]) == 0
    for k in range(2):
        rgb = load_rgb(tmp_path / "f" / f"frame_{k:06d}.png")
        ids = load_ids(tmp_path / "f" / f"frame_{k:06d}_ids.png")
        # pixels whose neighbourhood shows only floor cannot be touched by jittered part samples
        clear = ~binary_dilation(ids > 0, iterations=1)
        assert clear.any() and (rgb[clear] == 255).all()


def test_generate_zero(tmp_path):
    assert main(["generate", "--count", "0", "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "annotations.json").read_text())
    assert doc["images"] == [] and len(doc["categories"]) == 12


def test_generate_failure_marker(tmp_path, catalog_dir):
    cfg = small_config(tmp_path, scene={"settle": {"max_steps": 2}, "settle_retries": 0})
    rc = main(["--config", cfg, "generate", "--count", "1", "--catalog", str(catalog_dir), "--out", str(tmp_path / "x")])
    assert rc == 2
    assert (tmp_path / "x" / ".failed").exists() and not (tmp_path / "x" / "annotations.json").exists()


def test_usage_errors(tmp_path):
    assert main(["nonsense"]) == 1
    assert main(["generate", "--variant", "bogus", "--out", str(tmp_path)]) == 1
    bad = tmp_path / "c.json"
    bad.write_text("{not json")
    assert main(["--config", str(bad), "stats", "--manifest", "x"]) == 1


def _manifests(tmp_path):
    for name, variant in (("ref", "fix_refined"), ("rt", "rand_tex")):
        DatasetManifest([Record(f"{name}{k}.png", f"{name}{k}.json", DatasetVariant.parse(variant))
                         for k in range(10000)]).save(tmp_path / f"{name}.jsonl")


def test_compose_cli(tmp_path, capsys):
    _manifests(tmp_path)
    spec = {"total": 10000, "seed": 0, "components": [{"manifest": "ref.jsonl", "fraction": 0.2},
                                                      {"manifest": "rt.jsonl", "fraction": 0.8}]}
    (tmp_path / "mix.json").write_text(json.dumps(spec))
    assert main(["compose", "--spec", str(tmp_path / "mix.json"), "--out", str(tmp_path / "o1.jsonl")]) == 0
    assert main(["compose", "--spec", str(tmp_path / "mix.json"), "--out", str(tmp_path / "o2.jsonl")]) == 0
    assert (tmp_path / "o1.jsonl").read_bytes() == (tmp_path / "o2.jsonl").read_bytes()
    assert DatasetManifest.load(tmp_path / "o1.jsonl").histogram() == {"fix_refined": 2000, "rand_tex": 8000}
    assert main(["stats", "--manifest", str(tmp_path / "o1.jsonl")]) == 0
    assert "fix_refined  2000" in capsys.readouterr().out
    spec["components"][1]["fraction"] = 0.7
    (tmp_path / "bad.json").write_text(json.dumps(spec))
    assert main(["compose", "--spec", str(tmp_path / "bad.json"), "--out", str(tmp_path / "o3.jsonl")]) != 0


def test_crops_cli(tmp_path):
    from synthdet.images import save_rgb
    save_rgb(tmp_path / "im.png", np.random.default_rng(0).integers(0, 255, (768, 1024, 3), dtype=np.uint8))
    DatasetManifest([Record("im.png", "", DatasetVariant.RAND_TEX)]).save(tmp_path / "m.jsonl")
    assert main(["crops", "--manifest", str(tmp_path / "m.jsonl"), "--out", str(tmp_path / "c")]) == 0
    files = sorted((tmp_path / "c").iterdir())
    assert len(files) == 4 and all(load_rgb(f).shape == (256, 256, 3) for f in files)
    assert main(["crops", "--manifest", str(tmp_path / "m.jsonl"), "--size", "2000", "--out", str(tmp_path / "d")]) != 0


def test_analyze_rf_cli(tmp_path, capsys):
    arch = tmp_path / "arch.json"
    arch.write_text(json.dumps([{"kernel": 4, "stride": 2, "padding": 1}] * 3 + [{"kernel": 4, "stride": 1, "padding": 1}] * 2))
    assert main(["analyze-rf", "--arch", str(arch), "--extent", "120"]) == 0
    out = capsys.readouterr().out
    assert "rf 70 grid 30x30" in out and "NOT COVERED" in out
    arch.write_text("[{\"stride\": 1}]")
    assert main(["analyze-rf", "--arch", str(arch)]) != 0


def test_eval_cli(tmp_path, capsys):
    gt = {"images": [{"id": 1}, {"id": 2}], "categories": [{"id": 1}, {"id": 2}],
          "annotations": [{"image_id": 1, "category_id": 1, "bbox": [0, 0, 10, 10]},
                          {"image_id": 2, "category_id": 1, "bbox": [20, 20, 10, 10]},
                          {"image_id": 1, "category_id": 2, "bbox": [50, 50, 5, 5]}]}
    pred = [{"image_id": 1, "category_id": 1, "bbox": [0, 0, 10, 10], "score": 0.9},
            {"image_id": 2, "category_id": 1, "bbox": [60, 60, 10, 10], "score": 0.8},
            {"image_id": 2, "category_id": 1, "bbox": [20, 20, 10, 10], "score": 0.7},
            {"image_id": 1, "category_id": 2, "bbox": [50, 50, 5, 5], "score": 0.6}]
    (tmp_path / "gt.json").write_text(json.dumps(gt))
    (tmp_path / "p.json").write_text(json.dumps(pred))
    (tmp_path / "perfect.json").write_text(json.dumps([dict(a, score=1.0) for a in gt["annotations"]]))
    assert main(["eval", "--gt", str(tmp_path / "gt.json"), "--pred", str(tmp_path / "p.json")]) == 0
    assert "mAP@0.5 0.9167" in capsys.readouterr().out
    assert main(["eval", "--gt", str(tmp_path / "gt.json"), "--pred", str(tmp_path / "perfect.json")]) == 0
    assert "mAP@0.5 1.0000" in capsys.readouterr().out
    assert main(["eval", "--gt", str(tmp_path / "missing.json"), "--pred", str(tmp_path / "p.json")]) != 0


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "synthdet", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "analyze-rf" in r.stdout
