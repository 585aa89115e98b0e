"""Mesh parsing (OBJ / binary STL), validation, convex hulls and the part catalog."""

from __future__ import annotations

import io
import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.spatial import ConvexHull as _QHull
from scipy.spatial import QhullError

DEGENERATE_AREA = 1e-12
HULL_TOL = 1e-9


class MeshError(ValueError):
    """Raised when a mesh file cannot be parsed or fails validation."""

    def __init__(self, message: str, line: Optional[int] = None, source: Optional[str] = None):
        self.line = line
        self.source = source
        parts = [message]
        if line is not None:
            parts.append(f"line {line}")
        text = ", ".join(parts)
        if source is not None:
            text = f"{source}: {text}"
        super().__init__(text)


class CatalogError(ValueError):
    pass


@dataclass
class Mesh:
    vertices: np.ndarray  # (n, 3) float64, meters after load_catalog scaling
    triangles: np.ndarray  # (m, 3) int64
    normals: Optional[np.ndarray] = None  # per-vertex, only when the file supplied them
    sub_groups: dict = field(default_factory=dict)  # name -> (start, stop) triangle range

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def face_normals(self) -> np.ndarray:
        v = self.vertices
        t = self.triangles
        n = np.cross(v[t[:, 1]] - v[t[:, 0]], v[t[:, 2]] - v[t[:, 0]])
        length = np.linalg.norm(n, axis=1, keepdims=True)
        return n / np.where(length > 0, length, 1.0)

    def triangle_areas(self) -> np.ndarray:
        v = self.vertices
        t = self.triangles
        return 0.5 * np.linalg.norm(np.cross(v[t[:, 1]] - v[t[:, 0]], v[t[:, 2]] - v[t[:, 0]]), axis=1)

    def scaled(self, factor: float) -> "Mesh":
        return Mesh(self.vertices * factor, self.triangles.copy(),
                    None if self.normals is None else self.normals.copy(), dict(self.sub_groups))

    def group_of_triangles(self) -> list:
        """Group name for every triangle (``"default"`` where no group covers it)."""
        names = ["default"] * self.n_triangles
        for name, (start, stop) in self.sub_groups.items():
            for i in range(start, stop):
                names[i] = name
        return names

    def bounds(self) -> tuple:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)


@dataclass
class ValidationReport:
    degenerate_triangles: list = field(default_factory=list)
    non_finite_vertices: list = field(default_factory=list)
    out_of_range: list = field(default_factory=list)  # (triangle index, bad vertex index)

    @property
    def ok(self) -> bool:
        return not (self.degenerate_triangles or self.non_finite_vertices or self.out_of_range)

    def __bool__(self) -> bool:
        # truthy when problems were found
        return not self.ok


@dataclass
class ConvexHull:
    vertices: np.ndarray  # (k, 3)
    faces: np.ndarray  # (f, 3) indices into vertices, counter-clockwise seen from outside

    def plane_normals(self) -> np.ndarray:
        v = self.vertices
        f = self.faces
        n = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
        return n / np.linalg.norm(n, axis=1, keepdims=True)

    def plane_offsets(self) -> np.ndarray:
        return np.einsum("ij,ij->i", self.plane_normals(), self.vertices[self.faces[:, 0]])

    def signed_distances(self, points: np.ndarray) -> np.ndarray:
        """(points, faces) matrix of signed plane distances; positive is outside."""
        return np.asarray(points) @ self.plane_normals().T - self.plane_offsets()

    def contains(self, points: np.ndarray, tol: float = 1e-6) -> np.ndarray:
        return np.all(self.signed_distances(points) <= tol, axis=1)


@dataclass
class PartClass:
    class_id: int
    name: str
    mesh: Mesh
    convex_proxy: ConvexHull
    mass: float
    palette: dict = field(default_factory=dict)  # region -> RGB for the fixed-color variant


@dataclass
class PartCatalog:
    classes: list
    units_scale: float = 1e-3

    def __post_init__(self):
        if not self.classes:
            raise CatalogError("empty catalog")
        names = [c.name for c in self.classes]
        if len(set(names)) != len(names):
            raise CatalogError("duplicate part name")
        ids = [c.class_id for c in self.classes]
        if len(set(ids)) != len(ids):
            raise CatalogError("duplicate class id")

    def __len__(self) -> int:
        return len(self.classes)

    def __iter__(self):
        return iter(self.classes)

    def by_id(self, class_id: int) -> PartClass:
        for c in self.classes:
            if c.class_id == class_id:
                return c
        raise KeyError(class_id)

    def by_name(self, name: str) -> PartClass:
        for c in self.classes:
            if c.name == name:
                return c
        raise KeyError(name)

    @property
    def class_ids(self) -> list:
        return [c.class_id for c in self.classes]


# --------------------------------------------------------------------------- OBJ


def _obj_index(token: str, count: int, lineno: int) -> int:
    ref = token.split("/")[0]
    try:
        idx = int(ref)
    except ValueError:
        raise MeshError(f"bad face index {token!r}", lineno) from None
    if idx < 0:
        idx = count + idx
    else:
        idx -= 1
    if idx < 0 or idx >= count:
        raise MeshError("index out of range", lineno)
    return idx


def parse_obj(data) -> Mesh:
    """Parse a Wavefront OBJ byte string.

    Handles ``v``, ``vn``, ``f``, ``g``, ``o``, ``usemtl`` and ``mtllib``. Faces
    with more than three corners are fan-triangulated from their first corner.
    Group, object and material names become ``sub_groups`` triangle ranges.
    Faces may reference vertices declared later in the file, so indices are
    checked once the whole file has been read.
    """
    if isinstance(data, str):
        text = data
    else:
        try:
            text = bytes(data).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MeshError(f"not a text file ({exc.reason})") from None

    verts = []
    vnormals = []
    raw_faces = []  # (lineno, tokens)
    group_marks = []  # (triangle start index, name)
    tri_count = 0
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        key = parts[0]
        if key == "v":
            if len(parts) < 4:
                raise MeshError("vertex needs 3 coordinates", lineno)
            try:
                verts.append([float(x) for x in parts[1:4]])
            except ValueError:
                raise MeshError("non-numeric coordinate", lineno) from None
        elif key == "vn":
            if len(parts) < 4:
                raise MeshError("normal needs 3 components", lineno)
            try:
                vnormals.append([float(x) for x in parts[1:4]])
            except ValueError:
                raise MeshError("non-numeric normal", lineno) from None
        elif key == "f":
            corners = parts[1:]
            if len(corners) < 3:
                raise MeshError("face with fewer than 3 vertices", lineno)
            raw_faces.append((lineno, corners))
            tri_count += len(corners) - 2
        elif key in ("g", "o", "usemtl"):
            name = " ".join(parts[1:]) or "default"
            group_marks.append((tri_count, name))
        elif key in ("mtllib", "s", "vt", "l"):
            pass

    n = len(verts)
    tris = []
    for lineno, corners in raw_faces:
        idx = [_obj_index(c, n, lineno) for c in corners]
        for k in range(1, len(idx) - 1):
            tris.append((idx[0], idx[k], idx[k + 1]))

    sub_groups = {}
    for k, (start, name) in enumerate(group_marks):
        stop = group_marks[k + 1][0] if k + 1 < len(group_marks) else tri_count
        if stop > start:
            if name in sub_groups:
                # a repeated name keeps its first range; later blocks fall back to default
                continue
            sub_groups[name] = (start, stop)

    vertices = np.array(verts, dtype=np.float64).reshape(-1, 3)
    triangles = np.array(tris, dtype=np.int64).reshape(-1, 3)
    normals = None
    if vnormals and len(vnormals) == n:
        normals = np.array(vnormals, dtype=np.float64)
    mesh = Mesh(vertices, triangles, normals, sub_groups)
    report = validate_mesh(mesh)
    if report.non_finite_vertices:
        raise MeshError(f"non-finite coordinate at vertex {report.non_finite_vertices[0]}")
    if report.degenerate_triangles:
        raise MeshError(f"degenerate triangle {report.degenerate_triangles[0]}")
    return mesh


def write_obj(mesh: Mesh, scale: float = 1.0) -> str:
    out = io.StringIO()
    for v in mesh.vertices * scale:
        out.write("v %r %r %r\n" % (float(v[0]), float(v[1]), float(v[2])))
    starts = sorted((start, stop, name) for name, (start, stop) in mesh.sub_groups.items())
    cursor = 0
    for start, stop, name in starts + [(mesh.n_triangles, mesh.n_triangles, None)]:
        if start > cursor:
            out.write("g default\n")
            for t in mesh.triangles[cursor:start]:
                out.write("f %d %d %d\n" % tuple(int(i) + 1 for i in t))
        if name is None:
            break
        out.write(f"g {name}\n")
        for t in mesh.triangles[start:stop]:
            out.write("f %d %d %d\n" % tuple(int(i) + 1 for i in t))
        cursor = stop
    return out.getvalue()


# --------------------------------------------------------------------------- STL

_STL_RECORD = struct.Struct("<12fH")


def parse_stl(data) -> Mesh:
    """Parse binary STL; vertices that are bit-identical are welded."""
    data = bytes(data)
    if len(data) < 84:
        raise MeshError("truncated STL header")
    (count,) = struct.unpack_from("<I", data, 80)
    payload = len(data) - 84
    if payload != count * 50:
        if payload < count * 50:
            raise MeshError(f"declared {count} triangles but payload holds {payload / 50:g}")
        raise MeshError(f"declared {count} triangles but payload is {payload} bytes")
    if count == 0:
        return Mesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))
    rec = np.frombuffer(data, dtype=np.dtype([("n", "<f4", 3), ("v", "<f4", (3, 3)), ("a", "<u2")]),
                        count=count, offset=84)
    corners = np.ascontiguousarray(rec["v"].reshape(-1, 3))
    # weld on exact bit pattern, first occurrence order
    keys = corners.view(np.dtype((np.void, 12))).ravel()
    _, first, inverse = np.unique(keys, return_index=True, return_inverse=True)
    order = np.argsort(first, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    vertices = corners[first[order]].astype(np.float64)
    triangles = rank[inverse.ravel()].reshape(-1, 3).astype(np.int64)
    mesh = Mesh(vertices, triangles)
    report = validate_mesh(mesh)
    if report.non_finite_vertices:
        raise MeshError(f"non-finite coordinate at vertex {report.non_finite_vertices[0]}")
    if report.degenerate_triangles:
        raise MeshError(f"degenerate triangle {report.degenerate_triangles[0]}")
    return mesh


def write_stl(mesh: Mesh) -> bytes:
    out = bytearray(80)
    out += struct.pack("<I", mesh.n_triangles)
    normals = mesh.face_normals()
    for t, n in zip(mesh.triangles, normals):
        v = mesh.vertices[t]
        out += _STL_RECORD.pack(*n, *v[0], *v[1], *v[2], 0)
    return bytes(out)


# --------------------------------------------------------------------------- validation


def validate_mesh(mesh: Mesh) -> ValidationReport:
    report = ValidationReport()
    v = np.asarray(mesh.vertices, dtype=np.float64)
    t = np.asarray(mesh.triangles)
    n = len(v)
    if v.size:
        report.non_finite_vertices = [int(i) for i in np.nonzero(~np.all(np.isfinite(v), axis=1))[0]]
    good = np.ones(len(t), dtype=bool)
    for i, tri in enumerate(t):
        for idx in tri:
            if idx < 0 or idx >= n:
                report.out_of_range.append((i, int(idx)))
                good[i] = False
    bad_vertex = set(report.non_finite_vertices)
    for i, tri in enumerate(t):
        if not good[i] or bad_vertex.intersection(int(x) for x in tri):
            continue
        a, b, c = v[tri[0]], v[tri[1]], v[tri[2]]
        area = 0.5 * np.linalg.norm(np.cross(b - a, c - a))
        if tri[0] == tri[1] or tri[1] == tri[2] or tri[0] == tri[2] or not area > DEGENERATE_AREA:
            report.degenerate_triangles.append(i)
    return report


def vertex_normals(mesh: Mesh) -> np.ndarray:
    """Shading normals: the file's normals when present, else area-weighted face normals."""
    if mesh.normals is not None:
        nrm = np.asarray(mesh.normals, dtype=np.float64)
    else:
        v, t = mesh.vertices, mesh.triangles
        fn = np.cross(v[t[:, 1]] - v[t[:, 0]], v[t[:, 2]] - v[t[:, 0]])
        nrm = np.zeros_like(v)
        for k in range(3):
            np.add.at(nrm, t[:, k], fn)
    length = np.linalg.norm(nrm, axis=1, keepdims=True)
    return nrm / np.where(length > 0, length, 1.0)


# --------------------------------------------------------------------------- hull


def convex_hull(mesh_or_points) -> ConvexHull:
    """Convex hull of a mesh's vertices with outward-wound triangular faces."""
    pts = mesh_or_points.vertices if isinstance(mesh_or_points, Mesh) else np.asarray(mesh_or_points, dtype=np.float64)
    pts = np.unique(pts, axis=0)
    if len(pts) < 4:
        raise MeshError("convex hull needs at least 4 distinct vertices")
    span = pts - pts.mean(axis=0)
    sv = np.linalg.svd(span, compute_uv=False)
    if sv[-1] <= 1e-12 * max(sv[0], 1e-300):
        raise MeshError("degenerate (coplanar) point set has no 3D hull")
    try:
        qh = _QHull(pts)
    except QhullError as exc:
        raise MeshError(f"degenerate point set: {str(exc).splitlines()[0]}") from None
    used = np.unique(qh.simplices)
    remap = np.full(len(pts), -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    verts = pts[used]
    faces = remap[qh.simplices]
    centroid = verts.mean(axis=0)
    a, b, c = verts[faces[:, 0]], verts[faces[:, 1]], verts[faces[:, 2]]
    nrm = np.cross(b - a, c - a)
    flip = np.einsum("ij,ij->i", nrm, a - centroid) < 0
    faces[flip] = faces[flip][:, [0, 2, 1]]
    return ConvexHull(verts, faces)


# --------------------------------------------------------------------------- catalog


def _load_mesh_file(path: Path) -> Mesh:
    data = path.read_bytes()
    suffix = path.suffix.lower()
    try:
        if suffix == ".obj":
            return parse_obj(data)
        if suffix == ".stl":
            return parse_stl(data)
    except MeshError as exc:
        raise MeshError(str(exc), source=str(path)) from None
    raise CatalogError(f"{path}: unsupported mesh format {suffix!r}")


def load_catalog(root, manifest=None) -> PartCatalog:
    """Build a :class:`PartCatalog` from a manifest.

    ``manifest`` may be a dict, a path to a JSON file, or ``None`` to read
    ``root/catalog.json``. Class ids follow manifest order starting at 1.
    """
    root = Path(root)
    if manifest is None:
        manifest = root / "catalog.json"
    if isinstance(manifest, (str, Path)):
        manifest = json.loads(Path(manifest).read_text())
    scale = float(manifest.get("units_scale", 1e-3))
    if not (scale > 0 and math.isfinite(scale)):
        raise CatalogError(f"invalid units_scale {scale}")
    entries = manifest.get("parts", [])
    if not entries:
        raise CatalogError("empty catalog")
    seen = set()
    classes = []
    for i, entry in enumerate(entries, start=1):
        name = entry["name"]
        if name in seen:
            raise CatalogError(f"duplicate part name {name!r}")
        seen.add(name)
        path = root / entry["mesh_file"]
        if not path.is_file():
            raise CatalogError(f"missing mesh file {path}")
        mesh = _load_mesh_file(path).scaled(scale)
        mass = float(entry.get("mass_kg", 1e-3))
        if not mass > 0:
            raise CatalogError(f"{name}: mass must be positive")
        try:
            hull = convex_hull(mesh)
        except MeshError as exc:
            raise MeshError(str(exc), source=str(path)) from None
        palette = {k: tuple(float(c) for c in rgb) for k, rgb in entry.get("palette", {}).items()}
        classes.append(PartClass(i, name, mesh, hull, mass, palette))
    return PartCatalog(classes, scale)
