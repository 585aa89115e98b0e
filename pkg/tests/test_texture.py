import numpy as np
import pytest

from synthdet.texture import procedural_texture


def test_checker_parity():
    p = {"scale": 1.0, "seed": 0}
    assert procedural_texture("checker", p, (0.25, 0.25, 0)) != procedural_texture("checker", p, (1.25, 0.25, 0))
    assert procedural_texture("checker", p, (0.25, 0.25, 0)) == procedural_texture("checker", p, (0.75, 0.25, 0))
    p2 = {"scale": 2.0, "seed": 0}
    assert procedural_texture("checker", p2, (0.25, 0.25, 0)) != procedural_texture("checker", p2, (0.75, 0.25, 0))


def test_value_noise_deterministic_and_bounded():
    rng = np.random.default_rng(0)
    pts = rng.uniform(-50, 50, size=(100_000, 3))
    p = {"scale": 3.0, "seed": 1234}
    vals = np.array([procedural_texture("value_noise", p, x) for x in pts])
    assert vals.min() >= 0.0 and vals.max() <= 1.0
    assert procedural_texture("value_noise", p, (0.3, 0.1, 2.0)) == procedural_texture("value_noise", p, (0.3, 0.1, 2.0))
    assert procedural_texture("value_noise", p, (0.3, 0.1, 2.0)) != \
        procedural_texture("value_noise", {"scale": 3.0, "seed": 99}, (0.3, 0.1, 2.0))


def test_value_noise_continuous():
    p = {"scale": 1.0, "seed": 5}
    a = procedural_texture("value_noise", p, (0.999999, 0.5, 0.5))
    b = procedural_texture("value_noise", p, (1.000001, 0.5, 0.5))
    assert abs(a - b) < 1e-4


def test_stripes_binary():
    vals = {procedural_texture("stripes", {"scale": 10, "seed": s}, (0.33, 0.71, 0.05)) for s in range(6)}
    assert vals <= {0.0, 1.0}


def test_unknown_kind():
    with pytest.raises(ValueError):
        procedural_texture("marble", {}, (0, 0, 0))
