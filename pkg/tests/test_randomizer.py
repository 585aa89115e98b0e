import numpy as np
import pytest

from synthdet.randomizer import (PRISM, DatasetVariant, GenerationError, SceneConfig, catalog_palette,
                                 derive_frame_seed, look_at_origin, make_rng, sample_camera, sample_lights,
                                 sample_material, sample_scene, splitmix64)
from synthdet.physics import SettleParams


def test_splitmix_reference():
    assert splitmix64(0) == 0xE220A8397B1DCDAF
    assert derive_frame_seed(7, 0) != derive_frame_seed(7, 1)
    assert derive_frame_seed(7, 3) == derive_frame_seed(7, 3)


def test_variant_parse():
    assert DatasetVariant.parse("rand+tex") is DatasetVariant.RAND_TEX
    assert DatasetVariant.parse("FIX") is DatasetVariant.FIX
    with pytest.raises(ValueError):
        DatasetVariant.parse("nope")


def test_camera_prism_and_frame():
    rng = make_rng(0)
    lo, hi = np.array(PRISM[0]), np.array(PRISM[1])
    for _ in range(2000):
        cam = sample_camera(rng)
        assert (cam.position >= lo).all() and (cam.position <= hi).all()
        to_origin = -cam.position / np.linalg.norm(cam.position)
        assert np.arccos(np.clip(cam.forward @ to_origin, -1, 1)) < 1e-6
        assert abs(cam.right[2]) < 1e-9
        assert abs(np.linalg.det(np.array([cam.right, cam.up, -cam.forward])) - 1) < 1e-9


def test_look_straight_down():
    cam = look_at_origin((0, 0, 0.15))
    assert np.allclose(cam.forward, (0, 0, -1))
    assert np.allclose(cam.right, (1, 0, 0)) and np.allclose(cam.up, (0, 1, 0))


def test_lights():
    rng = make_rng(1)
    counts = set()
    for _ in range(200):
        ls = sample_lights(rng)
        counts.add(len(ls))
        for l in ls:
            assert 0.5 <= l.position[2] <= 1.0
            assert all(0 <= c <= 1 for c in l.color)
    assert counts == {1, 2, 3, 4}
    with pytest.raises(ValueError):
        sample_lights(rng, (0, 2))


def test_materials(catalog):
    palette = catalog_palette(catalog)
    region = ("led", "lens")
    fix = sample_material("fix", make_rng(0), region, palette)
    assert fix.base_color == pytest.approx(palette[region]) and fix.texture is None
    floor = sample_material("fix", make_rng(0), "floor", palette)
    assert floor.base_color == (1.0, 1.0, 1.0)
    assert sample_material("rand_no_tex", make_rng(0), region, palette).texture is None
    assert sample_material("rand_tex", make_rng(0), region, palette).texture is not None
    with pytest.raises(KeyError):
        sample_material("rand_tex", make_rng(0), ("led", "nope"), palette)


def test_scene_is_seed_deterministic(catalog):
    a = sample_scene("rand_tex", catalog, 7, 2)
    b = sample_scene("rand_tex", catalog, 7, 2)
    c = sample_scene("rand_tex", catalog, 8, 2)
    assert a.to_dict() == b.to_dict()
    assert a.to_dict() != c.to_dict()
    assert [i.instance_id for i in a.instances] == list(range(1, len(a.instances) + 1))
    assert all(1 <= i.class_id <= 12 for i in a.instances)


def test_scene_instance_counts(catalog):
    for k in range(5):
        s = sample_scene("fix", catalog, 1, k, SceneConfig(max_per_class=1))
        ids = [i.class_id for i in s.instances]
        assert len(ids) == len(set(ids)) >= 1


def test_generation_error_when_settling_cannot_finish(catalog):
    cfg = SceneConfig(settle=SettleParams(max_steps=3), settle_retries=1)
    with pytest.raises(GenerationError):
        sample_scene("fix", catalog, 0, 0, cfg)


def test_refined_cannot_be_generated(catalog):
    with pytest.raises(ValueError):
        sample_scene("fix_refined", catalog, 0, 0)
