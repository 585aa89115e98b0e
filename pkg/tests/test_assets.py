import json
import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from synthdet.assets import (CatalogError, Mesh, MeshError, convex_hull, load_catalog, parse_obj, parse_stl,
                             validate_mesh, write_obj, write_stl)
from synthdet.parts import DEMO_PARTS, demo_manifest
from synthdet.primitives import box


def stl_bytes(tris, declared=None):
    head = b"\0" * 80 + struct.pack("<I", len(tris) if declared is None else declared)
    body = b"".join(struct.pack("<12fH", 0, 0, 0, *np.ravel(t), 0) for t in tris)
    return head + body


def test_minimal_obj():
    m = parse_obj(b"v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3")
    assert m.n_vertices == 3 and m.n_triangles == 1


def test_quad_fan():
    m = parse_obj("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n")
    assert m.triangles.tolist() == [[0, 1, 2], [0, 2, 3]]


def test_out_of_range_names_line():
    with pytest.raises(MeshError, match="index out of range, line 4"):
        parse_obj(b"v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9")


def test_obj_groups_and_negative_indices():
    m = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 0 1\ng a\nf -4 -3 -2\ng b\nf 1 2 4\nf 1 3 4\n")
    assert m.sub_groups == {"a": (0, 1), "b": (1, 3)}
    assert m.group_of_triangles() == ["a", "b", "b"]


def test_obj_roundtrip():
    cube = box((1, 2, 3))
    m = parse_obj(write_obj(cube))
    assert np.allclose(m.vertices, cube.vertices)
    assert (m.triangles == cube.triangles).all()


def test_stl_one_triangle():
    m = parse_stl(stl_bytes([[[0, 0, 0], [1, 0, 0], [0, 1, 0]]]))
    assert m.n_vertices == 3 and m.n_triangles == 1


def test_stl_count_mismatch():
    with pytest.raises(MeshError):
        parse_stl(stl_bytes([[[0, 0, 0], [1, 0, 0], [0, 1, 0]]], declared=2))


def test_stl_weld_shared_edge():
    a = [[0, 0, 0], [1, 0, 0], [0, 1, 0]]
    b = [[1, 0, 0], [1, 1, 0], [0, 1, 0]]
    m = parse_stl(stl_bytes([a, b]))
    assert m.n_vertices == 4 and m.n_triangles == 2


def test_stl_roundtrip():
    cube = box((1, 1, 1))
    m = parse_stl(write_stl(cube))
    assert m.n_vertices == 8 and m.n_triangles == 12


def test_validate():
    assert validate_mesh(box((1, 1, 1))).ok
    m = Mesh(np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0.]]), np.array([[0, 0, 1]]))
    assert validate_mesh(m).degenerate_triangles == [0]
    m = Mesh(np.array([[0, 0, 0], [1, np.nan, 0], [0, 1, 0.]]), np.array([[0, 1, 2]]))
    assert validate_mesh(m).non_finite_vertices == [1]


def test_hull_cube_and_interior_point():
    cube = box((1, 1, 1))
    h = convex_hull(cube)
    assert len(h.vertices) == 8 and len(h.faces) == 12
    pts = np.vstack([cube.vertices, [[0.1, 0.1, 0.1]]])
    h2 = convex_hull(pts)
    assert not any(np.allclose(v, [0.1, 0.1, 0.1]) for v in h2.vertices)


def test_hull_contains_random_ball_points():
    rng = np.random.default_rng(3)
    p = rng.normal(size=(100, 3))
    p *= (rng.random(100) ** (1 / 3) / np.linalg.norm(p, axis=1))[:, None]
    h = convex_hull(p)
    # brute force: every input behind every face plane
    n = h.plane_normals()
    d = h.plane_offsets()
    assert (p @ n.T - d).max() <= 1e-9


def test_coplanar_points_rejected():
    with pytest.raises(MeshError):
        convex_hull(np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0.]]))


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(*[st.floats(-1, 1)] * 3), min_size=8, max_size=40))
def test_hull_contains_inputs(points):
    p = np.array(points)
    if np.linalg.matrix_rank(p - p.mean(axis=0), tol=1e-3) < 3:
        return
    try:
        h = convex_hull(p)
    except MeshError:
        return
    assert h.contains(p, tol=1e-9).all()


def test_catalog_loads_twelve(catalog):
    assert catalog.class_ids == list(range(1, 13))
    assert [pc.name for pc in catalog] == [n for n, _, _ in DEMO_PARTS]
    for pc in catalog:
        assert validate_mesh(pc.mesh).ok
        # meters: every demo part is smaller than 3 cm
        lo, hi = pc.mesh.bounds()
        assert (hi - lo).max() < 0.03


def test_catalog_errors(catalog_dir):
    with pytest.raises(CatalogError, match="empty catalog"):
        load_catalog(catalog_dir, {"parts": []})
    man = demo_manifest()
    man["parts"].append(dict(man["parts"][6]))
    with pytest.raises(CatalogError, match="led"):
        load_catalog(catalog_dir, man)


def test_catalog_manifest_path(catalog_dir, tmp_path):
    man = demo_manifest()
    man["parts"] = man["parts"][:2]
    path = tmp_path / "m.json"
    path.write_text(json.dumps(man))
    cat = load_catalog(catalog_dir, path)
    assert cat.class_ids == [1, 2]
