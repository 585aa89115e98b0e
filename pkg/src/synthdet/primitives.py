"""Small triangle-mesh builders used for the demo catalog and for tests."""

from __future__ import annotations

import numpy as np

from .assets import Mesh


def box(size, center=(0.0, 0.0, 0.0)) -> Mesh:
    sx, sy, sz = (0.5 * float(s) for s in size)
    c = np.asarray(center, dtype=np.float64)
    v = np.array([[x, y, z] for z in (-sz, sz) for y in (-sy, sy) for x in (-sx, sx)]) + c
    # corners: index = xi + 2*yi + 4*zi
    t = np.array([
        [0, 2, 1], [1, 2, 3],  # -z
        [4, 5, 6], [5, 7, 6],  # +z
        [0, 1, 4], [1, 5, 4],  # -y
        [2, 6, 3], [3, 6, 7],  # +y
        [0, 4, 2], [2, 4, 6],  # -x
        [1, 3, 5], [3, 7, 5],  # +x
    ], dtype=np.int64)
    return Mesh(v, t)


def cylinder(radius, height, center=(0.0, 0.0, 0.0), segments=12, axis=2) -> Mesh:
    """Closed prism approximating a cylinder; axis 0/1/2 picks x/y/z."""
    ang = 2 * np.pi * np.arange(segments) / segments
    ring = np.stack([radius * np.cos(ang), radius * np.sin(ang)], axis=1)
    h = 0.5 * height
    bottom = np.column_stack([ring, np.full(segments, -h)])
    top = np.column_stack([ring, np.full(segments, h)])
    v = np.vstack([bottom, top, [[0, 0, -h], [0, 0, h]]])
    cb, ct = 2 * segments, 2 * segments + 1
    tris = []
    for i in range(segments):
        j = (i + 1) % segments
        tris.append([i, j, segments + j])
        tris.append([i, segments + j, segments + i])
        tris.append([cb, j, i])
        tris.append([ct, segments + i, segments + j])
    v = _orient_axis(v, axis) + np.asarray(center, dtype=np.float64)
    return Mesh(v, np.array(tris, dtype=np.int64))


def dome(radius, center=(0.0, 0.0, 0.0), segments=12, rings=4) -> Mesh:
    """Upper hemisphere with its equator at ``center`` (closed by a base disk)."""
    verts = [[0.0, 0.0, radius]]
    for r in range(1, rings + 1):
        phi = 0.5 * np.pi * r / rings
        for s in range(segments):
            th = 2 * np.pi * s / segments
            verts.append([radius * np.sin(phi) * np.cos(th), radius * np.sin(phi) * np.sin(th), radius * np.cos(phi)])
    verts.append([0.0, 0.0, 0.0])
    tris = []
    for s in range(segments):
        tris.append([0, 1 + s, 1 + (s + 1) % segments])
    for r in range(1, rings):
        a0 = 1 + (r - 1) * segments
        b0 = 1 + r * segments
        for s in range(segments):
            s1 = (s + 1) % segments
            tris.append([a0 + s, b0 + s, b0 + s1])
            tris.append([a0 + s, b0 + s1, a0 + s1])
    base = len(verts) - 1
    last = 1 + (rings - 1) * segments
    for s in range(segments):
        tris.append([base, last + (s + 1) % segments, last + s])
    v = np.array(verts) + np.asarray(center, dtype=np.float64)
    return Mesh(v, np.array(tris, dtype=np.int64))


def icosphere(radius=1.0, subdivisions=2, center=(0.0, 0.0, 0.0)) -> Mesh:
    t = (1.0 + 5 ** 0.5) / 2.0
    verts = [[-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
             [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
             [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1]]
    faces = [[0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
             [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
             [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
             [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1]]
    verts = [list(np.asarray(v, dtype=np.float64) / np.linalg.norm(v)) for v in verts]
    for _ in range(subdivisions):
        cache = {}

        def midpoint(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = np.asarray(verts[a]) + np.asarray(verts[b])
                verts.append(list(m / np.linalg.norm(m)))
                cache[key] = len(verts) - 1
            return cache[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        faces = new_faces
    v = np.array(verts) * radius + np.asarray(center, dtype=np.float64)
    return Mesh(v, np.array(faces, dtype=np.int64))


def _orient_axis(v, axis):
    if axis == 2:
        return v
    if axis == 0:
        return v[:, [2, 0, 1]]
    return v[:, [0, 2, 1]]


def merge(named_parts) -> Mesh:
    """Concatenate ``(group name, Mesh)`` pairs; consecutive equal names share one group."""
    verts, tris, groups = [], [], {}
    offset = 0
    tri_offset = 0
    for name, m in named_parts:
        verts.append(m.vertices)
        tris.append(m.triangles + offset)
        start, stop = tri_offset, tri_offset + m.n_triangles
        if name in groups:
            g0, g1 = groups[name]
            if g1 != start:
                raise ValueError(f"group {name!r} must be contiguous")
            groups[name] = (g0, stop)
        else:
            groups[name] = (start, stop)
        offset += m.n_vertices
        tri_offset = stop
    return Mesh(np.vstack(verts), np.vstack(tris), None, groups)
