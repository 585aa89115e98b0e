"""Solid procedural textures evaluated at 3D surface points."""

from __future__ import annotations

import numpy as np
from numba import njit

KIND_NONE = -1
KIND_CHECKER = 0
KIND_VALUE_NOISE = 1
KIND_STRIPES = 2
KIND_CODES = {"checker": KIND_CHECKER, "value_noise": KIND_VALUE_NOISE, "stripes": KIND_STRIPES}

_M64 = np.uint64(0xFFFFFFFFFFFFFFFF)


@njit(cache=True)
def mix64(x):
    """splitmix64 finalizer on a uint64."""
    x = (x + np.uint64(0x9E3779B97F4A7C15))
    x = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    x = (x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return x ^ (x >> np.uint64(31))


@njit(cache=True)
def _lattice(seed, i, j, k):
    h = mix64(np.uint64(seed) ^ mix64(np.uint64(i & 0xFFFFFFFF)
                                      ^ (np.uint64(j & 0xFFFFFFFF) << np.uint64(21))
                                      ^ (np.uint64(k & 0xFFFFFFFF) << np.uint64(42))))
    return float(h >> np.uint64(11)) * (1.0 / 9007199254740992.0)


@njit(cache=True)
def _smooth(t):
    return t * t * (3.0 - 2.0 * t)


@njit(cache=True)
def value_noise(seed, x, y, z):
    fx, fy, fz = np.floor(x), np.floor(y), np.floor(z)
    ix, iy, iz = np.int64(fx), np.int64(fy), np.int64(fz)
    tx, ty, tz = _smooth(x - fx), _smooth(y - fy), _smooth(z - fz)
    acc = 0.0
    for dz in range(2):
        wz = tz if dz else 1.0 - tz
        for dy in range(2):
            wy = ty if dy else 1.0 - ty
            for dx in range(2):
                wx = tx if dx else 1.0 - tx
                acc += wx * wy * wz * _lattice(seed, ix + dx, iy + dy, iz + dz)
    return min(max(acc, 0.0), 1.0)


@njit(cache=True)
def texture_value(kind, scale, seed, x, y, z):
    """Blend weight in [0, 1] between a material's base and secondary color."""
    sx, sy, sz = x * scale, y * scale, z * scale
    if kind == KIND_CHECKER:
        s = np.int64(np.floor(sx)) + np.int64(np.floor(sy)) + np.int64(np.floor(sz))
        return 1.0 if s % 2 != 0 else 0.0
    if kind == KIND_VALUE_NOISE:
        return value_noise(seed, sx, sy, sz)
    if kind == KIND_STRIPES:
        axis = seed % 3
        c = sx if axis == 0 else (sy if axis == 1 else sz)
        return 1.0 if np.int64(np.floor(c)) % 2 != 0 else 0.0
    return 0.0


def procedural_texture(kind, params, point) -> float:
    """Evaluate a texture; ``params`` needs ``scale`` and ``seed`` (attribute or key)."""
    if kind not in KIND_CODES:
        raise ValueError(f"unknown texture kind {kind!r}")
    get = params.get if isinstance(params, dict) else lambda k, d=None: getattr(params, k, d)
    scale = float(get("scale", 1.0))
    seed = int(get("seed", 0)) & 0x7FFFFFFFFFFFFFFF
    x, y, z = (float(c) for c in point)
    return float(texture_value(KIND_CODES[kind], scale, seed, x, y, z))
