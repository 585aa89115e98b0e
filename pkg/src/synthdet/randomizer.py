"""Domain-randomized scene sampling: parts, materials, lights and camera."""

from __future__ import annotations

import enum
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .physics import SettleParams, make_world, quat_to_matrix, sample_initial_poses, settle

MASK64 = (1 << 64) - 1
TEXTURE_KINDS = ("checker", "value_noise", "stripes")


class DatasetVariant(str, enum.Enum):
    FIX = "fix"
    RAND_NO_TEX = "rand_no_tex"
    RAND_TEX = "rand_tex"
    FIX_REFINED = "fix_refined"  # ingest only

    @classmethod
    def parse(cls, text) -> "DatasetVariant":
        if isinstance(text, cls):
            return text
        key = str(text).strip().lower().replace("-", "_").replace("+", "_")
        aliases = {"rand_tex": cls.RAND_TEX, "randtex": cls.RAND_TEX, "rand_notex": cls.RAND_NO_TEX,
                   "fixed": cls.FIX, "refined": cls.FIX_REFINED, "fix_real": cls.FIX_REFINED}
        for v in cls:
            if v.value == key or v.name.lower() == key:
                return v
        if key in aliases:
            return aliases[key]
        raise ValueError(f"unknown dataset variant {text!r}")


class GenerationError(RuntimeError):
    def __init__(self, message, frame_index=None):
        self.frame_index = frame_index
        super().__init__(message)


# --------------------------------------------------------------------------- seeds


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_frame_seed(master_seed: int, frame_index: int) -> int:
    return splitmix64((int(master_seed) ^ (int(frame_index) + 1)) & MASK64)


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed) & MASK64))


# --------------------------------------------------------------------------- types


@dataclass
class Light:
    position: tuple
    color: tuple
    intensity: float


@dataclass
class TextureSpec:
    kind: str
    scale: float  # cells per meter
    color2: tuple
    seed: int


@dataclass
class MaterialSpec:
    base_color: tuple
    texture: Optional[TextureSpec] = None
    specular: float = 0.0
    reflectivity: float = 0.0
    # unlit surfaces show their albedo directly (the plain white backdrop)
    unlit: bool = False


@dataclass
class CameraPose:
    position: np.ndarray
    forward: np.ndarray
    right: np.ndarray
    up: np.ndarray

    def to_dict(self):
        return {k: [float(x) for x in getattr(self, k)] for k in ("position", "forward", "right", "up")}


@dataclass
class Instance:
    instance_id: int
    class_id: int
    position: np.ndarray  # mesh-frame translation
    orientation: np.ndarray  # unit quaternion (w, x, y, z)
    materials: dict  # sub-group name -> MaterialSpec

    def rotation(self):
        return quat_to_matrix(self.orientation)


@dataclass
class SceneSpec:
    variant: DatasetVariant
    instances: list
    floor_material: MaterialSpec
    lights: list
    camera: CameraPose
    frame_seed: int
    frame_index: int = 0
    settle_steps: int = 0

    def __post_init__(self):
        if not self.lights:
            raise ValueError("scene needs at least one light")

    def to_dict(self) -> dict:
        mat = asdict
        return {
            "variant": self.variant.value,
            "frame_seed": int(self.frame_seed),
            "frame_index": int(self.frame_index),
            "settle_steps": int(self.settle_steps),
            "camera": self.camera.to_dict(),
            "floor_material": mat(self.floor_material),
            "lights": [asdict(l) for l in self.lights],
            "instances": [{
                "instance_id": i.instance_id, "class_id": i.class_id,
                "position": [float(x) for x in i.position],
                "orientation": [float(x) for x in i.orientation],
                "materials": {k: mat(v) for k, v in sorted(i.materials.items())},
            } for i in self.instances],
        }


@dataclass
class SceneConfig:
    max_per_class: int = 2
    light_count: tuple = (1, 4)
    light_region: tuple = ((-0.25, -0.25, 0.5), (0.25, 0.25, 1.0))
    light_intensity: tuple = (0.1, 0.6)
    drop_region: tuple = ((-0.1, -0.1, 0.05), (0.1, 0.1, 0.15))
    camera_prism: tuple = ((-0.1, -0.1, 0.1), (0.1, 0.1, 0.2))
    spawn_clearance: float = 0.002
    settle_retries: int = 3
    settle: SettleParams = field(default_factory=SettleParams)
    palette: dict = field(default_factory=dict)  # part name -> region -> rgb override

    @classmethod
    def from_dict(cls, d: dict) -> "SceneConfig":
        d = dict(d)
        kwargs = {}
        for key in ("max_per_class", "spawn_clearance", "settle_retries"):
            if key in d:
                kwargs[key] = d[key]
        for key in ("light_count", "light_intensity"):
            if key in d:
                kwargs[key] = tuple(d[key])
        for key in ("light_region", "drop_region", "camera_prism"):
            if key in d:
                lo, hi = d[key]
                kwargs[key] = (tuple(lo), tuple(hi))
        if "settle" in d:
            kwargs["settle"] = SettleParams.from_dict(d["settle"])
        if "palette" in d:
            kwargs["palette"] = d["palette"]
        return cls(**kwargs)


# --------------------------------------------------------------------------- samplers

PRISM = ((-0.10, -0.10, 0.10), (0.10, 0.10, 0.20))


def look_at_origin(position) -> CameraPose:
    """Camera frame aimed at the world origin with a horizontal right axis."""
    p = np.asarray(position, dtype=np.float64)
    forward = -p / np.linalg.norm(p)
    z = np.array([0.0, 0.0, 1.0])
    right = np.cross(forward, z)
    n = np.linalg.norm(right)
    if n < 1e-12:
        # looking straight down: roll is undefined, fix the convention
        right = np.array([1.0, 0.0, 0.0])
        up = np.array([0.0, 1.0, 0.0])
    else:
        right /= n
        up = np.cross(right, forward)
    return CameraPose(p, forward, right, up)


def sample_camera(rng, prism=PRISM) -> CameraPose:
    lo = np.asarray(prism[0], dtype=np.float64)
    hi = np.asarray(prism[1], dtype=np.float64)
    return look_at_origin(lo + (hi - lo) * rng.random(3))


def sample_lights(rng, count_range=(1, 4), region=((-0.25, -0.25, 0.5), (0.25, 0.25, 1.0)),
                  intensity_range=(0.1, 0.6)) -> list:
    lo_n, hi_n = int(count_range[0]), int(count_range[1])
    if lo_n < 1 or hi_n < lo_n:
        raise ValueError("light count range must satisfy 1 <= min <= max")
    n = int(rng.integers(lo_n, hi_n + 1))
    lo = np.asarray(region[0], dtype=np.float64)
    hi = np.asarray(region[1], dtype=np.float64)
    lights = []
    for _ in range(n):
        pos = lo + (hi - lo) * rng.random(3)
        color = rng.random(3)
        intensity = intensity_range[0] + (intensity_range[1] - intensity_range[0]) * rng.random()
        lights.append(Light(tuple(float(x) for x in pos), tuple(float(c) for c in color), float(intensity)))
    return lights


def _texture(rng, scale_range) -> TextureSpec:
    kind = TEXTURE_KINDS[int(rng.integers(len(TEXTURE_KINDS)))]
    scale = float(np.exp(rng.uniform(np.log(scale_range[0]), np.log(scale_range[1]))))
    color2 = tuple(float(c) for c in rng.random(3))
    seed = int(rng.integers(0, 2 ** 63 - 1))
    return TextureSpec(kind, scale, color2, seed)


def sample_material(variant, rng, part_region, palette=None) -> MaterialSpec:
    """Material for one region (``(part_name, group)`` or ``"floor"``).

    ``palette`` maps region keys to the fixed colors; any region not in it
    (other than the floor) is rejected.
    """
    variant = DatasetVariant.parse(variant)
    if variant is DatasetVariant.FIX_REFINED:
        raise ValueError("refined images are ingested, not generated")
    palette = palette or {}
    is_floor = part_region == "floor"
    if not is_floor and part_region not in palette:
        raise KeyError(f"unknown part region {part_region!r}")
    if variant is DatasetVariant.FIX:
        if is_floor:
            return MaterialSpec((1.0, 1.0, 1.0), None, 0.0, 0.0, unlit=True)
        return MaterialSpec(tuple(float(c) for c in palette[part_region]), None, 0.2, 0.0)
    base = tuple(float(c) for c in rng.random(3))
    specular = float(rng.uniform(0.0, 0.5))
    reflectivity = float(rng.uniform(0.0, 0.4)) if rng.random() < 0.3 else 0.0
    texture = None
    if variant is DatasetVariant.RAND_TEX:
        texture = _texture(rng, (20.0, 200.0) if is_floor else (200.0, 2000.0))
    return MaterialSpec(base, texture, specular, reflectivity)


def catalog_palette(catalog, overrides=None) -> dict:
    """``{(part name, group): rgb}`` over every mesh group in the catalog."""
    overrides = overrides or {}
    out = {}
    for pc in catalog:
        for g in sorted(set(pc.mesh.group_of_triangles())):
            rgb = overrides.get(pc.name, {}).get(g, pc.palette.get(g, (0.5, 0.5, 0.5)))
            out[(pc.name, g)] = tuple(float(c) for c in rgb)
    return out


def sample_scene(variant, catalog, master_seed, frame_index, params: SceneConfig = None) -> SceneSpec:
    """Sample parts, settle them, then draw materials, lights and camera."""
    variant = DatasetVariant.parse(variant)
    if variant is DatasetVariant.FIX_REFINED:
        raise ValueError("refined images are ingested, not generated")
    params = params or SceneConfig()
    frame_seed = derive_frame_seed(master_seed, frame_index)
    rng = make_rng(frame_seed)

    ids = catalog.class_ids
    counts = rng.integers(0, params.max_per_class + 1, size=len(ids))
    if counts.sum() == 0:
        counts[int(rng.integers(len(ids)))] = 1
    parts = [cid for cid, n in zip(ids, counts) for _ in range(int(n))]

    result = None
    for _ in range(1 + params.settle_retries):
        poses = sample_initial_poses(parts, catalog, rng, params.drop_region,
                                     min_separation=params.spawn_clearance)
        result = settle(make_world(parts, catalog, poses), params.settle)
        if result.converged:
            break
    if not result.converged:
        raise GenerationError(f"frame {frame_index}: settling did not converge after "
                              f"{params.settle_retries} re-drops", frame_index)

    palette = catalog_palette(catalog, params.palette)
    instances = []
    for k, (cid, body) in enumerate(zip(parts, result.world.bodies), start=1):
        pc = catalog.by_id(cid)
        groups = sorted({g for (name, g) in palette if name == pc.name})
        mats = {g: sample_material(variant, rng, (pc.name, g), palette) for g in groups}
        instances.append(Instance(k, cid, body.pose.position.copy(), body.pose.orientation.copy(), mats))
    floor = sample_material(variant, rng, "floor", palette)
    lights = sample_lights(rng, params.light_count, params.light_region, params.light_intensity)
    camera = sample_camera(rng, params.camera_prism)
    return SceneSpec(variant, instances, floor, lights, camera, frame_seed, int(frame_index), result.steps)
