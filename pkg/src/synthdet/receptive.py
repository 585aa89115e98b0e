"""Receptive-field arithmetic for stacked convolutions and the dual-grid loss."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import correlate2d


class ArchitectureError(ValueError):
    pass


@dataclass(frozen=True)
class ConvLayerSpec:
    kernel: int
    stride: int = 1
    padding: int = 0

    def __post_init__(self):
        if self.kernel < 1 or self.stride < 1 or self.padding < 0:
            raise ArchitectureError(f"invalid layer {self}")

    def out_size(self, n: int) -> int:
        return (n + 2 * self.padding - self.kernel) // self.stride + 1


@dataclass
class LayerRf:
    receptive_field: int
    jump: int
    grid: tuple  # (w, h) of this layer's output


@dataclass
class RfReport:
    layers: list
    input_size: tuple

    @property
    def rf(self) -> int:
        return self.layers[-1].receptive_field if self.layers else 1

    @property
    def grid(self) -> tuple:
        return self.layers[-1].grid if self.layers else tuple(self.input_size)

    def table(self) -> str:
        rows = [f"{'layer':>5} {'rf':>6} {'jump':>6} {'grid':>11}"]
        for k, l in enumerate(self.layers, start=1):
            rows.append(f"{k:>5} {l.receptive_field:>6} {l.jump:>6} {l.grid[0]:>5}x{l.grid[1]:<5}")
        return "\n".join(rows)


@dataclass
class Coverage:
    covered: bool
    margin: int
    rf: int
    extent: int

    @property
    def verdict(self) -> str:
        return "COVERED" if self.covered else "NOT COVERED"


def receptive_field(layers, input_size=(256, 256)) -> RfReport:
    w, h = int(input_size[0]), int(input_size[1])
    r, j = 1, 1
    out = []
    for k, layer in enumerate(layers):
        r = r + (layer.kernel - 1) * j
        j = j * layer.stride
        w, h = layer.out_size(w), layer.out_size(h)
        if w < 1 or h < 1:
            raise ArchitectureError(f"layer {k + 1} collapses the output below 1 pixel")
        out.append(LayerRf(r, j, (w, h)))
    return RfReport(out, (int(input_size[0]), int(input_size[1])))


def check_coverage(report: RfReport, object_extent: int) -> Coverage:
    if object_extent < 1:
        raise ValueError("object extent must be at least 1 pixel")
    return Coverage(report.rf >= object_extent, report.rf - int(object_extent), report.rf, int(object_extent))


def influence_rf(layers) -> int:
    """Receptive field measured by back-propagating one output impulse.

    Each layer is taken as an all-ones kernel, so an input pixel influences
    the chosen output unit iff the adjoint of the stack, applied to a unit
    impulse, is nonzero there. Square kernels make the axes separable, so a
    1-D probe suffices. The probe is sized so the middle unit sees no padding.
    """
    reach, jump, pad_eff = 1, 1, 0
    for l in layers:
        pad_eff += l.padding * jump
        reach += (l.kernel - 1) * jump
        jump *= l.stride
    size = 2 * (reach + pad_eff + jump) + 8
    shapes = [size]
    for l in layers:
        shapes.append(l.out_size(shapes[-1]))
        if shapes[-1] < 1:
            raise ArchitectureError("stack collapses the probe input")
    grad = np.zeros(shapes[-1])
    grad[shapes[-1] // 2] = 1.0
    for l, n_in in zip(reversed(layers), reversed(shapes[:-1])):
        up = np.zeros(n_in + 2 * l.padding + l.kernel + l.stride)
        for a in np.flatnonzero(grad):
            up[a * l.stride:a * l.stride + l.kernel] += grad[a]
        grad = up[l.padding:l.padding + n_in]
    hits = np.flatnonzero(grad)
    return int(hits[-1] - hits[0] + 1) if hits.size else 0


def influence_rf_forward(layers, size: int, unit=None) -> int:
    """Same measurement by perturbing every input pixel and running the stack forward."""
    def forward(img):
        a = img
        for l in layers:
            a = np.pad(a, l.padding)
            a = correlate2d(a, np.ones((l.kernel, l.kernel)), mode="valid")[::l.stride, ::l.stride]
        return a

    base = forward(np.zeros((size, size)))
    c = unit if unit is not None else base.shape[0] // 2
    hit_cols = []
    for x in range(size):
        img = np.zeros((size, size))
        img[:, x] = 1.0  # a full column keeps the sweep one-dimensional
        if forward(img)[c, c] != 0:
            hit_cols.append(x)
    return int(hit_cols[-1] - hit_cols[0] + 1) if hit_cols else 0


def dual_grid_loss(grid_small, grid_large) -> float:
    """Mean over every unit of both grids pooled together."""
    a = np.asarray(grid_small, dtype=np.float64).ravel()
    b = np.asarray(grid_large, dtype=np.float64).ravel()
    if a.size == 0 or b.size == 0:
        raise ValueError("both grids must be non-empty")
    if not (np.isfinite(a).all() and np.isfinite(b).all()):
        raise ValueError("grid values must be finite")
    return float(np.concatenate([a, b]).mean())


def load_architecture(path) -> list:
    try:
        data = json.loads(Path(path).read_text())
        if isinstance(data, dict):
            data = data["layers"]
        return [ConvLayerSpec(int(d["kernel"]), int(d.get("stride", 1)), int(d.get("padding", 0))) for d in data]
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as e:
        raise ArchitectureError(f"malformed architecture file {path}: {e}") from e


PATCHGAN_70 = [ConvLayerSpec(4, 2, 1)] * 3 + [ConvLayerSpec(4, 1, 1)] * 2
