"""Whitted-style ray tracer with an instance-ID pass.

Scene triangles live in a median-split BVH. Pixels are rendered in row
tiles by numba kernels that release the GIL; every pixel draws its jitter
from a hash of (frame seed, pixel index), so the image does not depend on
how tiles are scheduled.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numba import njit

from .assets import vertex_normals
from .texture import KIND_CODES, KIND_NONE, mix64, texture_value

T_MIN = 1e-6
BOX_PAD = 1e-9
LEAF_SIZE = 4
FLOOR_HALF = 0.5
SHININESS = 32.0
STACK_DEPTH = 128


@dataclass
class RenderConfig:
    width: int = 1024
    height: int = 768
    samples_per_pixel: int = 4
    max_reflection_depth: int = 2
    shadows: bool = True
    fov_y_deg: float = 60.0
    background: tuple = (0.0, 0.0, 0.0)
    floor: bool = True
    workers: int = 1
    tile_rows: int = 16

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("image dimensions must be at least 1")
        if self.samples_per_pixel < 1:
            raise ValueError("samples_per_pixel must be at least 1")
        if self.max_reflection_depth < 0:
            raise ValueError("max_reflection_depth must be non-negative")

    @classmethod
    def from_dict(cls, d: dict) -> "RenderConfig":
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        if "background" in known:
            known["background"] = tuple(known["background"])
        return cls(**known)


@dataclass
class RenderOutput:
    rgb: np.ndarray  # (h, w, 3) uint8
    ids: np.ndarray  # (h, w) uint16, 0 = floor / background
    radiance: Optional[np.ndarray] = None  # (h, w, 3) float64 before tone mapping


# --------------------------------------------------------------------------- geometry


@dataclass
class SceneGeometry:
    """Flattened world-space triangles, materials and lights of one scene."""

    v0: np.ndarray
    e1: np.ndarray
    e2: np.ndarray
    n0: np.ndarray
    n1: np.ndarray
    n2: np.ndarray
    tri_instance: np.ndarray
    tri_material: np.ndarray
    inst_rot: np.ndarray  # (n_instances + 1, 3, 3); entry 0 is the floor (identity)
    inst_pos: np.ndarray
    mat_base: np.ndarray
    mat_color2: np.ndarray
    mat_kind: np.ndarray
    mat_scale: np.ndarray
    mat_seed: np.ndarray
    mat_spec: np.ndarray
    mat_refl: np.ndarray
    mat_unlit: np.ndarray
    light_pos: np.ndarray
    light_rgb: np.ndarray  # color * intensity

    @property
    def n_triangles(self) -> int:
        return len(self.v0)


def _material_rows(mats):
    base, col2, kind, scale, seed, spec, refl, unlit = [], [], [], [], [], [], [], []
    for m in mats:
        base.append(m.base_color)
        spec.append(m.specular)
        refl.append(m.reflectivity)
        unlit.append(bool(m.unlit))
        if m.texture is None:
            kind.append(KIND_NONE)
            scale.append(1.0)
            col2.append(m.base_color)
            seed.append(0)
        else:
            kind.append(KIND_CODES[m.texture.kind])
            scale.append(m.texture.scale)
            col2.append(m.texture.color2)
            seed.append(int(m.texture.seed) & 0x7FFFFFFFFFFFFFFF)
    return (np.array(base, dtype=np.float64).reshape(-1, 3), np.array(col2, dtype=np.float64).reshape(-1, 3),
            np.array(kind, dtype=np.int64), np.array(scale, dtype=np.float64), np.array(seed, dtype=np.int64),
            np.array(spec, dtype=np.float64), np.array(refl, dtype=np.float64), np.array(unlit, dtype=np.bool_))


def scene_geometry(scene, catalog) -> SceneGeometry:
    """World-space triangles for every instance; material 0 is the floor."""
    mats = [scene.floor_material]
    v0, v1, v2, n0, n1, n2, inst, matidx = [], [], [], [], [], [], [], []
    inst_rot = [np.eye(3)]
    inst_pos = [np.zeros(3)]
    for k, instance in enumerate(scene.instances, start=1):
        if instance.instance_id != k:
            raise ValueError("instance ids must be 1..n in order")
        pc = catalog.by_id(instance.class_id)
        mesh = pc.mesh
        R = instance.rotation()
        t = np.asarray(instance.position, dtype=np.float64)
        inst_rot.append(R)
        inst_pos.append(t)
        wv = mesh.vertices @ R.T + t
        tri = mesh.triangles
        if mesh.normals is not None:
            vn = vertex_normals(mesh) @ R.T
            a, b, c = vn[tri[:, 0]], vn[tri[:, 1]], vn[tri[:, 2]]
        else:
            fn = np.cross(wv[tri[:, 1]] - wv[tri[:, 0]], wv[tri[:, 2]] - wv[tri[:, 0]])
            fn /= np.linalg.norm(fn, axis=1, keepdims=True)
            a = b = c = fn
        groups = mesh.group_of_triangles()
        slot = {}
        for g in sorted(set(groups)):
            slot[g] = len(mats)
            mats.append(instance.materials[g])
        v0.append(wv[tri[:, 0]])
        v1.append(wv[tri[:, 1]])
        v2.append(wv[tri[:, 2]])
        n0.append(a)
        n1.append(b)
        n2.append(c)
        inst.append(np.full(len(tri), k, dtype=np.int64))
        matidx.append(np.array([slot[g] for g in groups], dtype=np.int64))
    if v0:
        V0, V1, V2 = np.vstack(v0), np.vstack(v1), np.vstack(v2)
        N0, N1, N2 = np.vstack(n0), np.vstack(n1), np.vstack(n2)
        inst_arr, mat_arr = np.concatenate(inst), np.concatenate(matidx)
    else:
        V0 = V1 = V2 = N0 = N1 = N2 = np.zeros((0, 3))
        inst_arr = mat_arr = np.zeros(0, dtype=np.int64)
    lp = np.array([l.position for l in scene.lights], dtype=np.float64).reshape(-1, 3)
    lc = np.array([np.asarray(l.color) * l.intensity for l in scene.lights], dtype=np.float64).reshape(-1, 3)
    rows = _material_rows(mats)
    return SceneGeometry(np.ascontiguousarray(V0), np.ascontiguousarray(V1 - V0), np.ascontiguousarray(V2 - V0),
                         np.ascontiguousarray(N0), np.ascontiguousarray(N1), np.ascontiguousarray(N2),
                         inst_arr, mat_arr, np.array(inst_rot), np.array(inst_pos), *rows, lp, lc)


# --------------------------------------------------------------------------- BVH


@dataclass
class Bvh:
    node_min: np.ndarray
    node_max: np.ndarray
    node_left: np.ndarray  # -1 for leaves; right child is node_right
    node_right: np.ndarray
    node_start: np.ndarray  # leaf range into prims
    node_count: np.ndarray
    prims: np.ndarray  # triangle indices in leaf order
    node_axis: Optional[np.ndarray] = None  # split axis of inner nodes
    geometry: Optional[SceneGeometry] = None

    @property
    def n_nodes(self) -> int:
        return len(self.node_min)

    def leaves(self):
        return [i for i in range(self.n_nodes) if self.node_left[i] < 0]


def build_bvh_triangles(v0, e1, e2) -> Bvh:
    """Median split on the longest centroid axis, at most four triangles per leaf."""
    n = len(v0)
    if n == 0:
        raise ValueError("no triangles to build a BVH over")
    v1 = v0 + e1
    v2 = v0 + e2
    tmin = np.minimum(np.minimum(v0, v1), v2)
    tmax = np.maximum(np.maximum(v0, v1), v2)
    cent = (v0 + v1 + v2) / 3.0
    prims = np.arange(n, dtype=np.int64)
    cap = 2 * n
    node_min = np.zeros((cap, 3))
    node_max = np.zeros((cap, 3))
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    start = np.zeros(cap, dtype=np.int64)
    count = np.zeros(cap, dtype=np.int64)
    split = np.zeros(cap, dtype=np.int64)
    n_nodes = 1
    stack = [(0, 0, n)]
    while stack:
        node, lo, hi = stack.pop()
        idx = prims[lo:hi]
        node_min[node] = tmin[idx].min(axis=0) - BOX_PAD
        node_max[node] = tmax[idx].max(axis=0) + BOX_PAD
        start[node] = lo
        count[node] = hi - lo
        if hi - lo <= LEAF_SIZE:
            continue
        c = cent[idx]
        axis = int(np.argmax(c.max(axis=0) - c.min(axis=0)))
        mid = (hi - lo) // 2
        # stable ordering keeps the build deterministic on ties
        order = np.argsort(c[:, axis], kind="stable")
        prims[lo:hi] = idx[order]
        l, r = n_nodes, n_nodes + 1
        n_nodes += 2
        left[node], right[node] = l, r
        split[node] = axis
        count[node] = 0
        stack.append((r, lo + mid, hi))
        stack.append((l, lo, lo + mid))
    return Bvh(node_min[:n_nodes].copy(), node_max[:n_nodes].copy(), left[:n_nodes].copy(),
               right[:n_nodes].copy(), start[:n_nodes].copy(), count[:n_nodes].copy(), prims,
               split[:n_nodes].copy())


def build_bvh(scene, catalog) -> Bvh:
    geo = scene_geometry(scene, catalog)
    if geo.n_triangles == 0:
        raise ValueError("scene has no geometry")
    bvh = build_bvh_triangles(geo.v0, geo.e1, geo.e2)
    bvh.geometry = geo
    return bvh


# --------------------------------------------------------------------------- kernels


@njit(cache=True, nogil=True)
def _tri_hit(ox, oy, oz, dx, dy, dz, v0, e1, e2, t):
    """Moller-Trumbore; returns (hit t or -1, u, v)."""
    px = dy * e2[t, 2] - dz * e2[t, 1]
    py = dz * e2[t, 0] - dx * e2[t, 2]
    pz = dx * e2[t, 1] - dy * e2[t, 0]
    det = e1[t, 0] * px + e1[t, 1] * py + e1[t, 2] * pz
    if det == 0.0:
        return -1.0, 0.0, 0.0
    inv = 1.0 / det
    sx, sy, sz = ox - v0[t, 0], oy - v0[t, 1], oz - v0[t, 2]
    u = (sx * px + sy * py + sz * pz) * inv
    if u < 0.0 or u > 1.0:
        return -1.0, 0.0, 0.0
    qx = sy * e1[t, 2] - sz * e1[t, 1]
    qy = sz * e1[t, 0] - sx * e1[t, 2]
    qz = sx * e1[t, 1] - sy * e1[t, 0]
    v = (dx * qx + dy * qy + dz * qz) * inv
    if v < 0.0 or u + v > 1.0:
        return -1.0, 0.0, 0.0
    tt = (e2[t, 0] * qx + e2[t, 1] * qy + e2[t, 2] * qz) * inv
    return tt, u, v


@njit(cache=True, nogil=True)
def _slab(o, d, lo, hi, tnear, tfar):
    if d == 0.0:
        if o < lo or o > hi:
            return 1.0, 0.0
        return tnear, tfar
    inv = 1.0 / d
    t0 = (lo - o) * inv
    t1 = (hi - o) * inv
    if t0 > t1:
        t0, t1 = t1, t0
    return max(tnear, t0), min(tfar, t1)


@njit(cache=True, nogil=True)
def _box_hit(ox, oy, oz, dx, dy, dz, bmin, bmax, node, tmax):
    tn, tf = _slab(ox, dx, bmin[node, 0], bmax[node, 0], 0.0, tmax)
    if tn > tf:
        return False
    tn, tf = _slab(oy, dy, bmin[node, 1], bmax[node, 1], tn, tf)
    if tn > tf:
        return False
    tn, tf = _slab(oz, dz, bmin[node, 2], bmax[node, 2], tn, tf)
    return tn <= tf


@njit(cache=True, nogil=True)
def trace_nearest(ox, oy, oz, dx, dy, dz, bmin, bmax, left, right, start, count, prims, axis, v0, e1, e2, stack):
    """Nearest triangle with t > T_MIN; ties go to the lower triangle index."""
    best_t = np.inf
    best = -1
    bu = 0.0
    bv = 0.0
    sp = 0
    stack[sp] = 0
    sp += 1
    while sp > 0:
        sp -= 1
        node = stack[sp]
        if not _box_hit(ox, oy, oz, dx, dy, dz, bmin, bmax, node, best_t):
            continue
        if left[node] < 0:
            for k in range(start[node], start[node] + count[node]):
                tri = prims[k]
                t, u, v = _tri_hit(ox, oy, oz, dx, dy, dz, v0, e1, e2, tri)
                if t > T_MIN and (t < best_t or (t == best_t and tri < best)):
                    best_t = t
                    best = tri
                    bu = u
                    bv = v
        else:
            a = axis[node]
            neg = (dx if a == 0 else (dy if a == 1 else dz)) < 0.0
            # push the far child first so the near one is popped next
            if neg:
                stack[sp] = left[node]
                sp += 1
                stack[sp] = right[node]
            else:
                stack[sp] = right[node]
                sp += 1
                stack[sp] = left[node]
            sp += 1
    return best, best_t, bu, bv


@njit(cache=True, nogil=True)
def trace_linear(ox, oy, oz, dx, dy, dz, v0, e1, e2):
    best_t = np.inf
    best = -1
    bu = 0.0
    bv = 0.0
    for tri in range(v0.shape[0]):
        t, u, v = _tri_hit(ox, oy, oz, dx, dy, dz, v0, e1, e2, tri)
        if t > T_MIN and (t < best_t or (t == best_t and tri < best)):
            best_t = t
            best = tri
            bu = u
            bv = v
    return best, best_t, bu, bv


@njit(cache=True, nogil=True)
def _occluded(ox, oy, oz, dx, dy, dz, tmax, bmin, bmax, left, right, start, count, prims, axis, v0, e1, e2, stack):
    if v0.shape[0] == 0:
        return False
    sp = 0
    stack[sp] = 0
    sp += 1
    while sp > 0:
        sp -= 1
        node = stack[sp]
        if not _box_hit(ox, oy, oz, dx, dy, dz, bmin, bmax, node, tmax):
            continue
        if left[node] < 0:
            for k in range(start[node], start[node] + count[node]):
                t, u, v = _tri_hit(ox, oy, oz, dx, dy, dz, v0, e1, e2, prims[k])
                if T_MIN < t < tmax:
                    return True
        else:
            stack[sp] = right[node]
            sp += 1
            stack[sp] = left[node]
            sp += 1
    return False


@njit(cache=True, nogil=True)
def _floor_hit(ox, oy, oz, dx, dy, dz, enabled):
    if not enabled or dz == 0.0:
        return np.inf
    t = -oz / dz
    if t <= T_MIN:
        return np.inf
    x = ox + t * dx
    y = oy + t * dy
    if abs(x) > FLOOR_HALF or abs(y) > FLOOR_HALF:
        return np.inf
    return t


@njit(cache=True, nogil=True)
def _first_hit(ox, oy, oz, dx, dy, dz, bmin, bmax, left, right, start, count, prims, axis, v0, e1, e2, floor_on, stack):
    """(triangle or -1 for floor or -2 for miss, t, u, v)."""
    tri, t, u, v = -1, np.inf, 0.0, 0.0
    if v0.shape[0] > 0:
        tri, t, u, v = trace_nearest(ox, oy, oz, dx, dy, dz, bmin, bmax, left, right, start, count, prims,
                                     axis, v0, e1, e2, stack)
    tf = _floor_hit(ox, oy, oz, dx, dy, dz, floor_on)
    if tf < t:
        return -1, tf, 0.0, 0.0
    if tri < 0:
        return -2, np.inf, 0.0, 0.0
    return tri, t, u, v


@njit(cache=True, nogil=True)
def shade_path(ox, oy, oz, dx, dy, dz, max_depth, shadows, background, floor_on,
               bmin, bmax, left, right, start, count, prims, axis, v0, e1, e2, n0, n1, n2,
               tri_inst, tri_mat, inst_rot, inst_pos,
               mat_base, mat_color2, mat_kind, mat_scale, mat_seed, mat_spec, mat_refl, mat_unlit,
               light_pos, light_rgb, out, stack):
    """Radiance along one camera ray, written to ``out``.

    Direct term per light: albedo * light_rgb * max(0, n.l) / d^2 (plus a
    Blinn-Phong highlight scaled by the material's specular weight), gated by
    a shadow ray; mirror bounces add reflectivity-weighted radiance.
    """
    out[0] = 0.0
    out[1] = 0.0
    out[2] = 0.0
    weight = 1.0
    for depth in range(max_depth + 1):
        tri, t, u, v = _first_hit(ox, oy, oz, dx, dy, dz, bmin, bmax, left, right, start, count, prims,
                                  axis, v0, e1, e2, floor_on, stack)
        if tri == -2:
            for c in range(3):
                out[c] += weight * background[c]
            return
        px, py, pz = ox + t * dx, oy + t * dy, oz + t * dz
        if tri == -1:
            m = 0
            nx, ny, nz = 0.0, 0.0, 1.0
            lx, ly, lz = px, py, pz
        else:
            m = tri_mat[tri]
            w0 = 1.0 - u - v
            nx = w0 * n0[tri, 0] + u * n1[tri, 0] + v * n2[tri, 0]
            ny = w0 * n0[tri, 1] + u * n1[tri, 1] + v * n2[tri, 1]
            nz = w0 * n0[tri, 2] + u * n1[tri, 2] + v * n2[tri, 2]
            ln = np.sqrt(nx * nx + ny * ny + nz * nz)
            nx /= ln
            ny /= ln
            nz /= ln
            k = tri_inst[tri]
            qx, qy, qz = px - inst_pos[k, 0], py - inst_pos[k, 1], pz - inst_pos[k, 2]
            lx = inst_rot[k, 0, 0] * qx + inst_rot[k, 1, 0] * qy + inst_rot[k, 2, 0] * qz
            ly = inst_rot[k, 0, 1] * qx + inst_rot[k, 1, 1] * qy + inst_rot[k, 2, 1] * qz
            lz = inst_rot[k, 0, 2] * qx + inst_rot[k, 1, 2] * qy + inst_rot[k, 2, 2] * qz
        if nx * dx + ny * dy + nz * dz > 0.0:
            nx, ny, nz = -nx, -ny, -nz
        a0, a1, a2 = mat_base[m, 0], mat_base[m, 1], mat_base[m, 2]
        if mat_kind[m] >= 0:
            s = texture_value(mat_kind[m], mat_scale[m], mat_seed[m], lx, ly, lz)
            a0 = (1.0 - s) * a0 + s * mat_color2[m, 0]
            a1 = (1.0 - s) * a1 + s * mat_color2[m, 1]
            a2 = (1.0 - s) * a2 + s * mat_color2[m, 2]
        if mat_unlit[m]:
            out[0] += weight * a0
            out[1] += weight * a1
            out[2] += weight * a2
            return
        sox, soy, soz = px + nx * T_MIN, py + ny * T_MIN, pz + nz * T_MIN
        for li in range(light_pos.shape[0]):
            vx = light_pos[li, 0] - px
            vy = light_pos[li, 1] - py
            vz = light_pos[li, 2] - pz
            d2 = vx * vx + vy * vy + vz * vz
            d = np.sqrt(d2)
            vx /= d
            vy /= d
            vz /= d
            cos = nx * vx + ny * vy + nz * vz
            if cos <= 0.0:
                continue
            if shadows and _occluded(sox, soy, soz, vx, vy, vz, d, bmin, bmax, left, right, start, count,
                                     prims, axis, v0, e1, e2, stack):
                continue
            diff = cos / d2
            spec = 0.0
            if mat_spec[m] > 0.0:
                hx, hy, hz = vx - dx, vy - dy, vz - dz
                hl = np.sqrt(hx * hx + hy * hy + hz * hz)
                if hl > 0.0:
                    nh = (nx * hx + ny * hy + nz * hz) / hl
                    if nh > 0.0:
                        spec = mat_spec[m] * nh ** SHININESS / d2
            out[0] += weight * light_rgb[li, 0] * (a0 * diff + spec)
            out[1] += weight * light_rgb[li, 1] * (a1 * diff + spec)
            out[2] += weight * light_rgb[li, 2] * (a2 * diff + spec)
        r = mat_refl[m]
        if r <= 0.0 or depth == max_depth:
            return
        weight *= r
        dn = dx * nx + dy * ny + dz * nz
        dx, dy, dz = dx - 2 * dn * nx, dy - 2 * dn * ny, dz - 2 * dn * nz
        ox, oy, oz = sox, soy, soz


@njit(cache=True, nogil=True)
def _pixel_dir(i, j, jx, jy, W, H, tan_half, cam):
    aspect = W / H
    sx = (2.0 * (i + jx) / W - 1.0) * tan_half * aspect
    sy = (1.0 - 2.0 * (j + jy) / H) * tan_half
    dx = cam[1, 0] + sx * cam[2, 0] + sy * cam[3, 0]
    dy = cam[1, 1] + sx * cam[2, 1] + sy * cam[3, 1]
    dz = cam[1, 2] + sx * cam[2, 2] + sy * cam[3, 2]
    ln = np.sqrt(dx * dx + dy * dy + dz * dz)
    return dx / ln, dy / ln, dz / ln


@njit(cache=True, nogil=True)
def _uniform(h):
    return float(h >> np.uint64(11)) * (1.0 / 9007199254740992.0)


@njit(cache=True, nogil=True)
def _jitter(seed, pixel, sample):
    state = mix64(mix64(np.uint64(seed)) ^ mix64(np.uint64(pixel)))
    hx = mix64(state + np.uint64(2 * sample))
    hy = mix64(state + np.uint64(2 * sample + 1))
    return _uniform(hx), _uniform(hy)


def pixel_jitter(frame_seed, i, j, width, sample):
    """Sub-pixel offset in [0, 1)^2 used for one sample of pixel (i, j)."""
    return _jitter(np.uint64(int(frame_seed) & 0xFFFFFFFFFFFFFFFF), j * width + i, sample)


@njit(cache=True, nogil=True)
def render_rows(row0, row1, W, H, tan_half, cam, spp, seed, max_depth, shadows, background, floor_on,
                bmin, bmax, left, right, start, count, prims, axis, v0, e1, e2, n0, n1, n2,
                tri_inst, tri_mat, inst_rot, inst_pos,
                mat_base, mat_color2, mat_kind, mat_scale, mat_seed, mat_spec, mat_refl, mat_unlit,
                light_pos, light_rgb, rad, ids):
    col = np.empty(3)
    stack = np.empty(STACK_DEPTH, dtype=np.int64)
    ox, oy, oz = cam[0, 0], cam[0, 1], cam[0, 2]
    for j in range(row0, row1):
        for i in range(W):
            r0 = 0.0
            r1 = 0.0
            r2 = 0.0
            for s in range(spp):
                jx, jy = _jitter(seed, j * W + i, s)
                dx, dy, dz = _pixel_dir(i, j, jx, jy, W, H, tan_half, cam)
                shade_path(ox, oy, oz, dx, dy, dz, max_depth, shadows, background, floor_on,
                           bmin, bmax, left, right, start, count, prims, axis, v0, e1, e2, n0, n1, n2,
                           tri_inst, tri_mat, inst_rot, inst_pos,
                           mat_base, mat_color2, mat_kind, mat_scale, mat_seed, mat_spec, mat_refl, mat_unlit,
                           light_pos, light_rgb, col, stack)
                r0 += col[0]
                r1 += col[1]
                r2 += col[2]
            rad[j, i, 0] = r0 / spp
            rad[j, i, 1] = r1 / spp
            rad[j, i, 2] = r2 / spp
            dx, dy, dz = _pixel_dir(i, j, 0.5, 0.5, W, H, tan_half, cam)
            tri, t, u, v = _first_hit(ox, oy, oz, dx, dy, dz, bmin, bmax, left, right, start, count, prims,
                                      axis, v0, e1, e2, floor_on, stack)
            ids[j, i] = tri_inst[tri] if tri >= 0 else 0


# --------------------------------------------------------------------------- python API


def _empty_bvh() -> Bvh:
    z = np.zeros((1, 3))
    return Bvh(z, z.copy(), np.array([-1]), np.array([-1]), np.array([0]), np.array([0]),
               np.zeros(0, dtype=np.int64), np.array([0]))


@dataclass
class Hit:
    t: float
    triangle: int
    instance: int
    u: float
    v: float


def intersect(origin, direction, bvh: Bvh) -> Optional[Hit]:
    """Nearest triangle hit of a ray against ``bvh`` (floor excluded)."""
    geo = bvh.geometry
    o = np.asarray(origin, dtype=np.float64)
    d = np.asarray(direction, dtype=np.float64)
    tri, t, u, v = trace_nearest(o[0], o[1], o[2], d[0], d[1], d[2], bvh.node_min, bvh.node_max,
                                 bvh.node_left, bvh.node_right, bvh.node_start, bvh.node_count, bvh.prims,
                                 bvh.node_axis, geo.v0, geo.e1, geo.e2, np.empty(STACK_DEPTH, dtype=np.int64))
    if tri < 0:
        return None
    return Hit(float(t), int(tri), int(geo.tri_instance[tri]), float(u), float(v))


def intersect_linear(origin, direction, geo: SceneGeometry) -> Optional[Hit]:
    """Brute-force nearest hit over every triangle."""
    o = np.asarray(origin, dtype=np.float64)
    d = np.asarray(direction, dtype=np.float64)
    tri, t, u, v = trace_linear(o[0], o[1], o[2], d[0], d[1], d[2], geo.v0, geo.e1, geo.e2)
    if tri < 0:
        return None
    return Hit(float(t), int(tri), int(geo.tri_instance[tri]), float(u), float(v))


def camera_matrix(camera) -> np.ndarray:
    return np.array([camera.position, camera.forward, camera.right, camera.up], dtype=np.float64)


def pixel_ray(camera, config: RenderConfig, i, j, jx=0.5, jy=0.5):
    """Origin and unit direction of the ray through pixel (column i, row j)."""
    cam = camera_matrix(camera)
    tan_half = np.tan(np.radians(config.fov_y_deg) / 2.0)
    d = _pixel_dir(i, j, jx, jy, config.width, config.height, tan_half, cam)
    return cam[0].copy(), np.array(d)


def _kernel_args(bvh: Bvh, geo: SceneGeometry):
    return (bvh.node_min, bvh.node_max, bvh.node_left, bvh.node_right, bvh.node_start, bvh.node_count,
            bvh.prims, bvh.node_axis, geo.v0, geo.e1, geo.e2, geo.n0, geo.n1, geo.n2, geo.tri_instance, geo.tri_material,
            geo.inst_rot, geo.inst_pos, geo.mat_base, geo.mat_color2, geo.mat_kind, geo.mat_scale,
            geo.mat_seed, geo.mat_spec, geo.mat_refl, geo.mat_unlit, geo.light_pos, geo.light_rgb)


def shade(origin, direction, scene, catalog, depth_limit=2, shadows=True, floor=True, background=(0, 0, 0)):
    """Radiance (linear RGB) carried back along one ray."""
    geo = scene_geometry(scene, catalog)
    bvh = build_bvh_triangles(geo.v0, geo.e1, geo.e2) if geo.n_triangles else _empty_bvh()
    out = np.zeros(3)
    o = np.asarray(origin, dtype=np.float64)
    d = np.asarray(direction, dtype=np.float64)
    d = d / np.linalg.norm(d)
    shade_path(o[0], o[1], o[2], d[0], d[1], d[2], int(depth_limit), bool(shadows),
               np.asarray(background, dtype=np.float64), bool(floor), *_kernel_args(bvh, geo), out,
               np.empty(STACK_DEPTH, dtype=np.int64))
    return out


def tone_map(radiance: np.ndarray) -> np.ndarray:
    """Clamp to [0, 1], gamma 2.2, quantize to 8 bits."""
    c = np.clip(radiance, 0.0, 1.0) ** (1.0 / 2.2)
    return np.floor(c * 255.0 + 0.5).astype(np.uint8)


def render(scene, catalog, config: RenderConfig = None, keep_radiance=False) -> RenderOutput:
    config = config or RenderConfig()
    geo = scene_geometry(scene, catalog)
    bvh = build_bvh_triangles(geo.v0, geo.e1, geo.e2) if geo.n_triangles else _empty_bvh()
    W, H = config.width, config.height
    rad = np.zeros((H, W, 3))
    ids = np.zeros((H, W), dtype=np.uint16)
    cam = camera_matrix(scene.camera)
    tan_half = float(np.tan(np.radians(config.fov_y_deg) / 2.0))
    bg = np.asarray(config.background, dtype=np.float64)
    seed = int(scene.frame_seed) & 0xFFFFFFFFFFFFFFFF
    args = _kernel_args(bvh, geo)
    rows = max(1, int(config.tile_rows))
    tiles = [(r, min(r + rows, H)) for r in range(0, H, rows)]

    def run(tile):
        render_rows(tile[0], tile[1], W, H, tan_half, cam, config.samples_per_pixel, np.uint64(seed),
                    config.max_reflection_depth, config.shadows, bg, config.floor, *args, rad, ids)

    workers = config.workers or os.cpu_count() or 1
    if workers <= 1:
        for tile in tiles:
            run(tile)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run, tiles))
    return RenderOutput(tone_map(rad), ids, rad if keep_radiance else None)
