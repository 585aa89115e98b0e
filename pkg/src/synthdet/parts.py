"""Procedural stand-ins for the twelve electronic parts.

The real CAD models are not distributed, so :func:`write_demo_catalog`
builds coarse primitive assemblies of roughly the right size (millimeters)
and writes them as OBJ files plus a ``catalog.json`` manifest that
:func:`synthdet.assets.load_catalog` understands.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .assets import write_obj
from .primitives import box, cylinder, dome, merge

BLACK = (0.05, 0.05, 0.05)
SILVER = (0.75, 0.75, 0.78)
GOLD = (0.85, 0.65, 0.2)
WHITE = (0.92, 0.92, 0.9)


def _pins(count, pitch, size, z, y=0.0):
    xs = (np.arange(count) - 0.5 * (count - 1)) * pitch
    return [("pins", box(size, (x, y, z))) for x in xs]


def _tactile_switch():
    return merge([("body", box((6, 6, 3.5), (0, 0, 1.75))),
                  ("button", cylinder(1.75, 1.5, (0, 0, 4.25)))]), {"body": BLACK, "button": (0.3, 0.3, 0.32)}


def _pin_header():
    return merge([("body", box((20.3, 2.5, 2.5), (0, 0, 1.25)))]
                 + _pins(8, 2.54, (0.64, 0.64, 8.5), 3.5)), {"body": BLACK, "pins": GOLD}


def _screw_terminal():
    return merge([("body", box((15, 8, 10), (0, 0, 5)))]
                 + [("screws", cylinder(1.8, 1.0, (x, 1.0, 10.5))) for x in (-5, 0, 5)]), \
        {"body": (0.1, 0.45, 0.2), "screws": SILVER}


def _dc_jack():
    return merge([("body", box((9, 14, 11), (0, 0, 5.5))),
                  ("barrel", cylinder(3.2, 1.2, (0, -7.6, 6.0), axis=1))]), {"body": BLACK, "barrel": SILVER}


def _dip_switch():
    return merge([("body", box((10, 6.5, 3), (0, 0, 1.5)))]
                 + [("sliders", box((1.2, 2.0, 0.8), (x, 0.6, 3.4))) for x in (-3.81, -1.27, 1.27, 3.81)]), \
        {"body": (0.75, 0.1, 0.1), "sliders": WHITE}


def _slide_switch():
    return merge([("body", box((8.6, 3.6, 3.5), (0, 0, 1.75))),
                  ("lever", box((1.5, 1.5, 4.0), (0, 0, 5.5)))]), {"body": SILVER, "lever": BLACK}


def _led():
    return merge([("lens", cylinder(2.5, 5.0, (0, 0, 2.5))),
                  ("lens", dome(2.5, (0, 0, 5.0))),
                  ("legs", box((0.5, 0.5, 10), (-1.27, 0, -5))),
                  ("legs", box((0.5, 0.5, 12), (1.27, 0, -6)))]), {"lens": (0.9, 0.1, 0.1), "legs": SILVER}


def _ic_socket():
    return merge([("frame", box((10, 2.2, 3.5), (0, -4.4, 1.75))),
                  ("frame", box((10, 2.2, 3.5), (0, 4.4, 1.75))),
                  ("frame", box((2.0, 6.6, 2.0), (-4.0, 0, 1.0))),
                  ("frame", box((2.0, 6.6, 2.0), (4.0, 0, 1.0)))]
                 + _pins(4, 2.54, (0.6, 0.6, 3.0), -1.5, y=-4.4)
                 + _pins(4, 2.54, (0.6, 0.6, 3.0), -1.5, y=4.4)), {"frame": BLACK, "pins": SILVER}


def _trimmer():
    return merge([("body", box((9.5, 9.5, 5), (0, 0, 2.5))),
                  ("knob", cylinder(3.5, 1.5, (0, 0, 5.75)))]), {"body": (0.1, 0.2, 0.7), "knob": WHITE}


def _buzzer():
    return merge([("body", cylinder(6.0, 9.5, (0, 0, 4.75), segments=16)),
                  ("port", cylinder(1.0, 0.5, (0, 0, 9.75)))]), {"body": BLACK, "port": (0.3, 0.3, 0.3)}


def _usb_a():
    return merge([("shell", box((13.1, 14, 5.7), (0, 0, 2.85))),
                  ("tongue", box((11, 1.5, 1.8), (0, -7.5, 3.3)))]), {"shell": SILVER, "tongue": WHITE}


def _usb_c():
    return merge([("shell", box((8.9, 7.4, 3.2), (0, 0, 1.6))),
                  ("tongue", box((6.7, 1.0, 0.7), (0, -4.2, 1.6)))]), {"shell": SILVER, "tongue": BLACK}


# name, builder, mass in kg
DEMO_PARTS = [
    ("tactile_switch", _tactile_switch, 0.8e-3),
    ("pin_header", _pin_header, 1.2e-3),
    ("screw_terminal_3way", _screw_terminal, 3.5e-3),
    ("dc_power_jack", _dc_jack, 2.5e-3),
    ("dip_switch", _dip_switch, 0.9e-3),
    ("slide_switch", _slide_switch, 0.6e-3),
    ("led", _led, 0.3e-3),
    ("ic_socket", _ic_socket, 1.0e-3),
    ("trimmer", _trimmer, 1.1e-3),
    ("buzzer", _buzzer, 2.0e-3),
    ("usb_a_socket", _usb_a, 3.0e-3),
    ("usb_c_socket", _usb_c, 1.0e-3),
]


def demo_manifest() -> dict:
    parts = []
    for name, builder, mass in DEMO_PARTS:
        _, palette = builder()
        parts.append({"name": name, "mesh_file": f"{name}.obj", "mass_kg": mass,
                      "palette": {k: list(v) for k, v in palette.items()}})
    return {"units_scale": 1e-3, "parts": parts}


def write_demo_catalog(root) -> Path:
    """Write the twelve part meshes and ``catalog.json`` into ``root``."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    for name, builder, _ in DEMO_PARTS:
        mesh, _ = builder()
        # center each part's footprint on its local origin
        lo, hi = mesh.bounds()
        mesh.vertices = mesh.vertices - 0.5 * (lo + hi)
        (root / f"{name}.obj").write_text(write_obj(mesh))
    path = root / "catalog.json"
    path.write_text(json.dumps(demo_manifest(), indent=2, sort_keys=True))
    return path
