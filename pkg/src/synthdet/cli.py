"""Command-line front end.

Exit codes: 0 success, 1 usage (bad flags, bad config, invalid specs),
2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import tempfile
from pathlib import Path

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2

# resolved defaults per subcommand; config file values and then flags override them
DEFAULTS = {
    "generate": {"variant": "rand_tex", "count": 10, "seed": 0, "catalog": None, "out": "out",
                 "width": 1024, "height": 768, "spp": 4, "max_depth": 2, "shadows": True, "workers": 1,
                 "scene": {}},
    "compose": {"spec": None, "out": None},
    "crops": {"manifest": None, "size": 256, "per_image": 4, "seed": 0, "out": "crops"},
    "analyze-rf": {"arch": None, "input_size": "256x256", "extent": None},
    "eval": {"gt": None, "pred": None, "iou": 0.5},
    "stats": {"manifest": None},
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="synthdet", description="Synthetic detection dataset toolkit.")
    p.add_argument("--config", help="JSON file with defaults; top-level keys may be subcommand names")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    S = argparse.SUPPRESS

    g = sub.add_parser("generate", help="settle, render and annotate frames")
    g.add_argument("--variant", default=S, help="fix | rand_no_tex | rand_tex")
    g.add_argument("--count", type=int, default=S)
    g.add_argument("--seed", type=int, default=S, help="master seed (default 0)")
    g.add_argument("--catalog", default=S, help="directory with catalog.json (default: built-in parts)")
    g.add_argument("--out", default=S)
    g.add_argument("--width", type=int, default=S)
    g.add_argument("--height", type=int, default=S)
    g.add_argument("--spp", type=int, default=S)
    g.add_argument("--max-depth", dest="max_depth", type=int, default=S)
    g.add_argument("--no-shadows", dest="shadows", action="store_false", default=S)
    g.add_argument("--workers", type=int, default=S)

    c = sub.add_parser("compose", help="mix manifests at fixed ratios")
    c.add_argument("--spec", default=S, help="MixSpec JSON")
    c.add_argument("--out", default=S, help="output manifest (JSON lines)")

    k = sub.add_parser("crops", help="random square crops for image-to-image training")
    k.add_argument("--manifest", default=S)
    k.add_argument("--size", type=int, default=S)
    k.add_argument("--per-image", dest="per_image", type=int, default=S)
    k.add_argument("--seed", type=int, default=S)
    k.add_argument("--out", default=S)

    a = sub.add_parser("analyze-rf", help="receptive field of a conv stack")
    a.add_argument("--arch", default=S, help="JSON list of {kernel, stride, padding}")
    a.add_argument("--input-size", dest="input_size", default=S, help="WxH, default 256x256")
    a.add_argument("--extent", type=int, default=S, help="object extent in pixels")

    e = sub.add_parser("eval", help="box mAP of predictions against ground truth")
    e.add_argument("--gt", default=S)
    e.add_argument("--pred", default=S)
    e.add_argument("--iou", type=float, default=S)

    s = sub.add_parser("stats", help="variant histogram of a manifest")
    s.add_argument("--manifest", default=S)
    return p


def resolve(args) -> dict:
    """Defaults, then the config file, then explicit flags."""
    cmd = args.command
    opts = dict(DEFAULTS[cmd])
    if args.config:
        try:
            cfg = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise UsageError(f"cannot read config {args.config}: {e}")
        if not isinstance(cfg, dict):
            raise UsageError("config must be a JSON object")
        section = cfg.get(cmd, {k: v for k, v in cfg.items() if k not in DEFAULTS})
        for key, val in section.items():
            key = key.replace("-", "_")
            if key not in opts:
                raise UsageError(f"unknown config key {key!r} for {cmd}")
            opts[key] = val
    for key, val in vars(args).items():
        if key not in ("command", "config"):
            opts[key] = val
    return opts


def _require(opts, *keys):
    for k in keys:
        if opts.get(k) in (None, ""):
            raise UsageError(f"--{k.replace('_', '-')} is required")


def _need_file(path, what):
    if not Path(path).is_file():
        raise FileNotFoundError(f"{what} not found: {path}")


def cmd_generate(o) -> int:
    from .assets import load_catalog
    from .parts import write_demo_catalog
    from .randomizer import DatasetVariant, SceneConfig
    from .render import RenderConfig
    from .pipeline import generate

    try:
        variant = DatasetVariant.parse(o["variant"])
        if variant is DatasetVariant.FIX_REFINED:
            raise ValueError("refined images are ingested, not generated")
        rcfg = RenderConfig(width=int(o["width"]), height=int(o["height"]), samples_per_pixel=int(o["spp"]),
                            max_reflection_depth=int(o["max_depth"]), shadows=bool(o["shadows"]),
                            workers=int(o["workers"]))
        scfg = SceneConfig.from_dict(o.get("scene") or {})
        if int(o["count"]) < 0:
            raise ValueError("count must be non-negative")
    except (ValueError, TypeError) as e:
        raise UsageError(str(e))
    if o["catalog"]:
        catalog = load_catalog(o["catalog"])
    else:
        with tempfile.TemporaryDirectory() as tmp:
            write_demo_catalog(tmp)
            catalog = load_catalog(tmp)
    path = generate(variant, int(o["count"]), int(o["seed"]), catalog, o["out"], scfg, rcfg)
    print(path)
    return EXIT_OK


def cmd_compose(o) -> int:
    from .composer import ComposeError, MixSpec, compose

    _require(o, "spec", "out")
    _need_file(o["spec"], "mix spec")
    try:
        spec = MixSpec.load(o["spec"])
    except (ComposeError, KeyError, TypeError, ValueError) as e:
        raise UsageError(f"invalid mix spec: {e}")
    manifest = compose(spec)
    manifest.save(o["out"])
    counts = manifest.histogram()
    print(f"{len(manifest)} records " + " ".join(f"{k}={v}" for k, v in counts.items()))
    return EXIT_OK


def cmd_crops(o) -> int:
    from .composer import CropConfig, DatasetManifest, extract_crops

    _require(o, "manifest")
    _need_file(o["manifest"], "manifest")
    try:
        cfg = CropConfig(int(o["size"]), int(o["per_image"]), int(o["seed"]))
    except ValueError as e:
        raise UsageError(str(e))
    crops = extract_crops(DatasetManifest.load(o["manifest"]), cfg, o["out"])
    print(f"{len(crops)} crops written to {o['out']}")
    return EXIT_OK


def _parse_size(text):
    try:
        if isinstance(text, (list, tuple)):
            w, h = text
        else:
            w, h = str(text).lower().split("x")
        return int(w), int(h)
    except ValueError:
        raise UsageError(f"bad input size {text!r}; expected WxH")


def cmd_analyze_rf(o) -> int:
    from .receptive import ArchitectureError, check_coverage, load_architecture, receptive_field

    _require(o, "arch")
    _need_file(o["arch"], "architecture file")
    size = _parse_size(o["input_size"])
    try:
        layers = load_architecture(o["arch"])
        report = receptive_field(layers, size)
    except ArchitectureError as e:
        raise UsageError(str(e))
    print(report.table())
    print(f"rf {report.rf} grid {report.grid[0]}x{report.grid[1]}")
    if o.get("extent") is not None:
        cov = check_coverage(report, int(o["extent"]))
        print(f"extent {cov.extent}: {cov.verdict} (margin {cov.margin:+d})")
    return EXIT_OK


def cmd_eval(o) -> int:
    from .metrics import evaluate, load_json

    _require(o, "gt", "pred")
    _need_file(o["gt"], "ground truth")
    _need_file(o["pred"], "predictions")
    res = evaluate(load_json(o["pred"]), load_json(o["gt"]), float(o["iou"]))
    for cid, ap in sorted(res.per_class.items()):
        print(f"class {cid:>3} AP {ap:.4f}")
    print(f"mAP@{res.iou_threshold:g} {res.mAP:.4f}")
    return EXIT_OK


def cmd_stats(o) -> int:
    from .composer import DatasetManifest

    _require(o, "manifest")
    _need_file(o["manifest"], "manifest")
    m = DatasetManifest.load(o["manifest"])
    print(f"records {len(m)}")
    for k, v in m.histogram().items():
        print(f"{k:<12} {v}")
    return EXIT_OK


COMMANDS = {"generate": cmd_generate, "compose": cmd_compose, "crops": cmd_crops,
            "analyze-rf": cmd_analyze_rf, "eval": cmd_eval, "stats": cmd_stats}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        opts = resolve(args)
        return COMMANDS[args.command](opts)
    except UsageError as e:
        print(f"synthdet {args.command}: {e}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as e:  # noqa: BLE001 - every runtime failure maps to one exit code
        print(f"synthdet {args.command}: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
