import numpy as np
import pytest

from synthdet.assets import Mesh, PartCatalog, PartClass, convex_hull
from synthdet.primitives import icosphere, box
from synthdet.randomizer import CameraPose, DatasetVariant, Instance, Light, MaterialSpec, SceneSpec, \
    look_at_origin, sample_scene
from synthdet.render import (RenderConfig, build_bvh, build_bvh_triangles, intersect, intersect_linear,
                             pixel_jitter, pixel_ray, render, scene_geometry, shade, tone_map)

WHITE = MaterialSpec((1.0, 1.0, 1.0))


def single_catalog(mesh, name="thing"):
    groups = {g: (0.5, 0.5, 0.5) for g in set(mesh.group_of_triangles())}
    return PartCatalog([PartClass(1, name, mesh, convex_hull(mesh), 1e-3, groups)], 1.0)


def scene_of(mesh_cat, positions, lights=None, camera=None, floor=WHITE, seed=1):
    mesh = mesh_cat.by_id(1).mesh
    groups = set(mesh.group_of_triangles())
    inst = [Instance(k, 1, np.asarray(p, dtype=float), np.array([1.0, 0, 0, 0]), {g: WHITE for g in groups})
            for k, p in enumerate(positions, start=1)]
    return SceneSpec(DatasetVariant.RAND_NO_TEX, inst, floor, lights or [Light((0, 0, 1), (1, 1, 1), 1.0)],
                     camera or look_at_origin((0, 0, 0.5)), seed)


@pytest.fixture(scope="module")
def sphere_cat():
    return single_catalog(icosphere(0.5, 3))


@pytest.fixture(scope="module")
def random_scene(catalog):
    return sample_scene("rand_tex", catalog, 7, 0)


def test_single_triangle_bvh():
    v0 = np.array([[0.0, 0, 0]])
    e1 = np.array([[1.0, 0, 0]])
    e2 = np.array([[0.0, 2, 0]])
    bvh = build_bvh_triangles(v0, e1, e2)
    assert bvh.n_nodes == 1 and bvh.leaves() == [0]
    assert np.allclose(bvh.node_min[0], [0, 0, 0], atol=1e-8)
    assert np.allclose(bvh.node_max[0], [1, 2, 0], atol=1e-8)


def test_bvh_structure(catalog, random_scene):
    bvh = build_bvh(random_scene, catalog)
    n = bvh.geometry.n_triangles
    assert bvh.n_nodes <= 2 * n
    leaves = bvh.leaves()
    owned = np.concatenate([bvh.prims[bvh.node_start[i]:bvh.node_start[i] + bvh.node_count[i]] for i in leaves])
    assert sorted(owned.tolist()) == list(range(n))
    assert all(bvh.node_count[i] <= 4 for i in leaves)
    for i in range(bvh.n_nodes):
        for c in (bvh.node_left[i], bvh.node_right[i]):
            if c >= 0:
                assert (bvh.node_min[c] >= bvh.node_min[i] - 1e-9).all()
                assert (bvh.node_max[c] <= bvh.node_max[i] + 1e-9).all()


def test_empty_scene_has_no_bvh(sphere_cat):
    s = scene_of(sphere_cat, [])
    with pytest.raises(ValueError):
        build_bvh(s, sphere_cat)


def test_sphere_hit_distance(sphere_cat):
    s = scene_of(sphere_cat, [(0, 0, 0)])
    bvh = build_bvh(s, sphere_cat)
    hit = intersect((0, 0, 1), (0, 0, -1), bvh)
    assert hit is not None and hit.instance == 1
    assert hit.t == pytest.approx(0.5, abs=1e-2)
    assert intersect((0, 0, 1), (0, 0, 1), bvh) is None


def test_bvh_matches_linear_scan(catalog, random_scene):
    bvh = build_bvh(random_scene, catalog)
    geo = bvh.geometry
    cfg = RenderConfig()
    rng = np.random.default_rng(0)
    for _ in range(3000):
        o, d = pixel_ray(random_scene.camera, cfg, rng.integers(cfg.width), rng.integers(cfg.height),
                         rng.random(), rng.random())
        a, b = intersect(o, d, bvh), intersect_linear(o, d, geo)
        assert (a is None) == (b is None)
        if a is not None:
            assert a.triangle == b.triangle and a.t == b.t
    # rays from random origins in random directions, most of them missing
    for _ in range(2000):
        o = rng.uniform(-0.15, 0.15, 3)
        d = rng.normal(size=3)
        d /= np.linalg.norm(d)
        a, b = intersect(o, d, bvh), intersect_linear(o, d, geo)
        assert (a is None) == (b is None)
        if a is not None:
            assert a.triangle == b.triangle and a.t == b.t


def test_lambert_fixture(sphere_cat):
    s = scene_of(sphere_cat, [])
    assert np.allclose(shade((0, 0, 0.5), (0, 0, -1), s, sphere_cat), 1.0, atol=1e-12)
    cfg = RenderConfig(width=33, height=33, samples_per_pixel=4)
    out = render(s, sphere_cat, cfg, keep_radiance=True)
    i = j = 16
    expect = 0.0
    for k in range(4):
        o, d = pixel_ray(s.camera, cfg, i, j, *pixel_jitter(s.frame_seed, i, j, cfg.width, k))
        p = o + (-o[2] / d[2]) * d
        v = np.array([0, 0, 1.0]) - p
        dist = np.linalg.norm(v)
        expect += (v[2] / dist) / dist ** 2 / 4
    assert np.allclose(out.radiance[j, i], expect, atol=1e-6)


def test_full_shadow(sphere_cat):
    # a blocker sphere sits between the floor point and the light
    s = scene_of(sphere_cat, [(0, 0, 0.7)], camera=look_at_origin((0.3, 0.0, 0.2)))
    rad = shade((0.3, 0.0, 0.2), -np.array([0.3, 0.0, 0.2]), s, sphere_cat)
    assert np.allclose(rad, 0.0)


def test_reflection_depth_zero(sphere_cat):
    mirror = MaterialSpec((1.0, 1.0, 1.0), reflectivity=1.0)
    s = scene_of(sphere_cat, [], floor=mirror)
    s0 = shade((0, 0, 0.5), (0, 0, -1), s, sphere_cat, depth_limit=0)
    assert np.allclose(s0, 1.0)


def test_empty_scene_background(sphere_cat):
    s = scene_of(sphere_cat, [])
    out = render(s, sphere_cat, RenderConfig(width=16, height=12, floor=False, background=(0.2, 0.4, 0.6)))
    assert out.rgb.shape == (12, 16, 3) and out.ids.shape == (12, 16)
    assert (out.ids == 0).all()
    assert (out.rgb == tone_map(np.array([0.2, 0.4, 0.6]))).all()


def test_center_pixel_id(sphere_cat):
    small = single_catalog(icosphere(0.02, 2))
    s = scene_of(small, [(0, 0, 0.02)], camera=look_at_origin((0, 0, 0.15)))
    out = render(s, small, RenderConfig(width=31, height=21, samples_per_pixel=1))
    assert out.ids[10, 15] == 1


def test_worker_count_invariance(catalog, random_scene):
    cfg1 = RenderConfig(width=160, height=120, samples_per_pixel=2, workers=1)
    cfg4 = RenderConfig(width=160, height=120, samples_per_pixel=2, workers=4, tile_rows=7)
    a, b = render(random_scene, catalog, cfg1), render(random_scene, catalog, cfg4)
    assert (a.rgb == b.rgb).all() and (a.ids == b.ids).all()


def test_ids_agree_with_retrace(catalog, random_scene):
    cfg = RenderConfig(width=128, height=96, samples_per_pixel=1)
    out = render(random_scene, catalog, cfg, keep_radiance=True)
    assert np.isfinite(out.radiance).all() and (out.radiance >= 0).all()
    bvh = build_bvh(random_scene, catalog)
    valid = {i.instance_id for i in random_scene.instances}
    rows, cols = np.nonzero(out.ids)
    assert set(np.unique(out.ids[out.ids > 0]).tolist()) <= valid
    for j, i in list(zip(rows, cols))[::7]:
        o, d = pixel_ray(random_scene.camera, cfg, i, j)
        assert intersect(o, d, bvh).instance == out.ids[j, i]


def test_tone_map():
    assert tone_map(np.array([0.0, 1.0, 5.0, -1.0])).tolist() == [0, 255, 255, 0]
    assert tone_map(np.array([0.5]))[0] == round(255 * 0.5 ** (1 / 2.2))


def test_config_validation():
    with pytest.raises(ValueError):
        RenderConfig(width=0)
    with pytest.raises(ValueError):
        RenderConfig(samples_per_pixel=0)
