"""Rigid-body settling of dropped parts on a floor plane.

Bodies collide through their convex hulls. A step is semi-implicit Euler
with a sequential-impulse contact solver (restitution, Coulomb friction)
followed by nonlinear position projection, which bounds penetration.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from numba import njit

from .assets import ConvexHull
from .collision import query

GRAVITY = (0.0, 0.0, -9.81)


class PhysicsError(RuntimeError):
    def __init__(self, message, body_index=None):
        self.body_index = body_index
        super().__init__(message)


@dataclass
class PoseState:
    """Pose of a body's local frame plus the velocity of its center of mass."""

    position: np.ndarray
    orientation: np.ndarray  # unit quaternion (w, x, y, z)
    linear_velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    angular_velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64)
        self.orientation = np.asarray(self.orientation, dtype=np.float64)
        self.linear_velocity = np.asarray(self.linear_velocity, dtype=np.float64)
        self.angular_velocity = np.asarray(self.angular_velocity, dtype=np.float64)

    def rotation(self) -> np.ndarray:
        return quat_to_matrix(self.orientation)


@dataclass
class SettleParams:
    dt: float = 1.0 / 240.0
    restitution: float = 0.1
    friction: float = 0.6
    rest_lin_speed: float = 1e-3
    rest_ang_speed: float = 1e-2
    max_steps: int = 5000
    max_penetration: float = 1e-4
    solver_iterations: int = 8
    position_iterations: int = 8
    # correction aims below max_penetration so rest penetration stays inside it
    slop: float = 5e-5
    contact_margin: float = 1e-3
    restitution_threshold: float = 0.05
    linear_damping: float = 0.1
    angular_damping: float = 0.5
    rest_window: int = 10

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.max_steps <= 0:
            raise ValueError("max_steps must be positive")
        for name in ("rest_lin_speed", "rest_ang_speed", "max_penetration"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 <= self.slop < self.max_penetration:
            raise ValueError("slop must be in [0, max_penetration)")

    @classmethod
    def from_dict(cls, d: dict) -> "SettleParams":
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        return cls(**known)


@dataclass
class Body:
    class_id: int
    hull: ConvexHull  # in the part's local frame
    mass: float
    pose: PoseState


@dataclass
class WorldState:
    bodies: list
    gravity: tuple = GRAVITY
    time: float = 0.0
    # previous step's contact keys and impulses, used to warm start the solver
    contact_cache: tuple = None

    def __post_init__(self):
        if not self.bodies:
            raise PhysicsError("world needs at least one body")

    def copy(self) -> "WorldState":
        bodies = [Body(b.class_id, b.hull, b.mass,
                       PoseState(b.pose.position.copy(), b.pose.orientation.copy(),
                                 b.pose.linear_velocity.copy(), b.pose.angular_velocity.copy()))
                  for b in self.bodies]
        cache = None
        if self.contact_cache is not None:
            cache = tuple(a.copy() for a in self.contact_cache)
        return WorldState(bodies, self.gravity, self.time, cache)


@dataclass
class SettleResult:
    world: WorldState
    steps: int
    converged: bool

    @property
    def poses(self) -> list:
        return [b.pose for b in self.world.bodies]


# --------------------------------------------------------------------------- quaternions


def quat_to_matrix(q) -> np.ndarray:
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def random_quaternion(rng) -> np.ndarray:
    """Uniform rotation via Shoemake's three-uniform construction."""
    u1, u2, u3 = rng.random(3)
    a, b = np.sqrt(1 - u1), np.sqrt(u1)
    q = np.array([b * np.cos(2 * np.pi * u3), a * np.sin(2 * np.pi * u2),
                  a * np.cos(2 * np.pi * u2), b * np.sin(2 * np.pi * u3)])
    return q / np.linalg.norm(q)


@njit(cache=True)
def _qmat(q, R):
    w, x, y, z = q[0], q[1], q[2], q[3]
    R[0, 0] = 1 - 2 * (y * y + z * z)
    R[0, 1] = 2 * (x * y - w * z)
    R[0, 2] = 2 * (x * z + w * y)
    R[1, 0] = 2 * (x * y + w * z)
    R[1, 1] = 1 - 2 * (x * x + z * z)
    R[1, 2] = 2 * (y * z - w * x)
    R[2, 0] = 2 * (x * z - w * y)
    R[2, 1] = 2 * (y * z + w * x)
    R[2, 2] = 1 - 2 * (x * x + y * y)


@njit(cache=True)
def _rotate_quat(q, wx, wy, wz, h):
    """q <- normalize(q + h/2 * (0, w) * q)."""
    w, x, y, z = q[0], q[1], q[2], q[3]
    q[0] = w + 0.5 * h * (-wx * x - wy * y - wz * z)
    q[1] = x + 0.5 * h * (wx * w + wy * z - wz * y)
    q[2] = y + 0.5 * h * (wy * w + wz * x - wx * z)
    q[3] = z + 0.5 * h * (wz * w + wx * y - wy * x)
    n = np.sqrt(q[0] ** 2 + q[1] ** 2 + q[2] ** 2 + q[3] ** 2)
    for k in range(4):
        q[k] /= n


# --------------------------------------------------------------------------- mass properties


def mass_properties(hull: ConvexHull, mass: float):
    """Center of mass and body-frame inertia (about the COM) of a solid hull."""
    v = hull.vertices
    canon = np.array([[2.0, 1, 1], [1, 2, 1], [1, 1, 2]]) / 120.0
    vol = 0.0
    first = np.zeros(3)
    cov = np.zeros((3, 3))
    for f in hull.faces:
        A = v[f].T  # columns a, b, c
        det = np.linalg.det(A)
        vol += det / 6.0
        first += det / 6.0 * A.sum(axis=1) / 4.0
        cov += det * A @ canon @ A.T
    com = first / vol
    cov -= vol * np.outer(com, com)
    density = mass / vol
    inertia = density * (np.trace(cov) * np.eye(3) - cov)
    return com, inertia


# --------------------------------------------------------------------------- kernels

MAX_CONTACTS = 4096
MAX_PAIR_CONTACTS = 16


@njit(cache=True)
def _world_geometry(pos, quat, hv, hv_off, hn, hd, hp_off, WV, WN, WD):
    R = np.empty((3, 3))
    nb = pos.shape[0]
    for i in range(nb):
        _qmat(quat[i], R)
        for v in range(hv_off[i], hv_off[i + 1]):
            for r in range(3):
                WV[v, r] = pos[i, r] + R[r, 0] * hv[v, 0] + R[r, 1] * hv[v, 1] + R[r, 2] * hv[v, 2]
        for f in range(hp_off[i], hp_off[i + 1]):
            for r in range(3):
                WN[f, r] = R[r, 0] * hn[f, 0] + R[r, 1] * hn[f, 1] + R[r, 2] * hn[f, 2]
            WD[f] = hd[f] + WN[f, 0] * pos[i, 0] + WN[f, 1] * pos[i, 1] + WN[f, 2] * pos[i, 2]


@njit(cache=True)
def _inside_lateral(p0, p1, p2, WN, WD, f0, f1, nx, ny, nz, facing_sign, tol):
    for f in range(f0, f1):
        c = WN[f, 0] * nx + WN[f, 1] * ny + WN[f, 2] * nz
        if facing_sign * c > 0.5:
            continue
        if WN[f, 0] * p0 + WN[f, 1] * p1 + WN[f, 2] * p2 - WD[f] > tol:
            return False
    return True


@njit(cache=True)
def _gather_contacts(pos, radius, hv_off, hp_off, WV, WN, WD, margin, feat_tol,
                     CA, CB, CN, CP, CS, CK):
    """Floor and pairwise contacts; returns the contact count.

    Each contact pushes body CB along CN relative to CA (CA == -1 is the floor).
    CK gets a key that is stable across steps: the hull vertex that produced
    the contact and the partner body, or a negative pair code for the
    single-point fallback.
    """
    nb = pos.shape[0]
    nc = 0
    for i in range(nb):
        for v in range(hv_off[i], hv_off[i + 1]):
            if WV[v, 2] < margin and nc < MAX_CONTACTS:
                CA[nc] = -1
                CB[nc] = i
                CN[nc, 0] = 0.0
                CN[nc, 1] = 0.0
                CN[nc, 2] = 1.0
                CP[nc, 0] = WV[v, 0]
                CP[nc, 1] = WV[v, 1]
                CP[nc, 2] = WV[v, 2]
                CS[nc] = WV[v, 2]
                CK[nc] = v * (nb + 1)
                nc += 1
    for i in range(nb):
        for j in range(i + 1, nb):
            dx = pos[j, 0] - pos[i, 0]
            dy = pos[j, 1] - pos[i, 1]
            dz = pos[j, 2] - pos[i, 2]
            reach = radius[i] + radius[j] + margin
            if dx * dx + dy * dy + dz * dz > reach * reach:
                continue
            VA = WV[hv_off[i]:hv_off[i + 1]]
            VB = WV[hv_off[j]:hv_off[j + 1]]
            signed, nrm, pa, pb = query(VA, VB)
            sep = -signed
            if sep > margin:
                continue
            nx, ny, nz = nrm[0], nrm[1], nrm[2]
            sA = -np.inf
            for v in range(VA.shape[0]):
                sA = max(sA, VA[v, 0] * nx + VA[v, 1] * ny + VA[v, 2] * nz)
            sB = np.inf
            for v in range(VB.shape[0]):
                sB = min(sB, VB[v, 0] * nx + VB[v, 1] * ny + VB[v, 2] * nz)
            start = nc
            lat_tol = 1e-5 + max(sep, 0.0)
            for v in range(VA.shape[0]):
                d = VA[v, 0] * nx + VA[v, 1] * ny + VA[v, 2] * nz
                if d < sA - feat_tol or nc - start >= MAX_PAIR_CONTACTS or nc >= MAX_CONTACTS:
                    continue
                if not _inside_lateral(VA[v, 0], VA[v, 1], VA[v, 2], WN, WD, hp_off[j], hp_off[j + 1],
                                       nx, ny, nz, -1.0, lat_tol):
                    continue
                CA[nc] = i
                CB[nc] = j
                CN[nc, 0] = nx
                CN[nc, 1] = ny
                CN[nc, 2] = nz
                for r in range(3):
                    CP[nc, r] = VA[v, r]
                CS[nc] = sB - d
                CK[nc] = (hv_off[i] + v) * (nb + 1) + j + 1
                nc += 1
            for v in range(VB.shape[0]):
                d = VB[v, 0] * nx + VB[v, 1] * ny + VB[v, 2] * nz
                if d > sB + feat_tol or nc - start >= MAX_PAIR_CONTACTS or nc >= MAX_CONTACTS:
                    continue
                if not _inside_lateral(VB[v, 0], VB[v, 1], VB[v, 2], WN, WD, hp_off[i], hp_off[i + 1],
                                       nx, ny, nz, 1.0, lat_tol):
                    continue
                CA[nc] = i
                CB[nc] = j
                CN[nc, 0] = nx
                CN[nc, 1] = ny
                CN[nc, 2] = nz
                for r in range(3):
                    CP[nc, r] = VB[v, r]
                CS[nc] = d - sA
                CK[nc] = (hv_off[j] + v) * (nb + 1) + i + 1
                nc += 1
            if nc == start and nc < MAX_CONTACTS:
                CA[nc] = i
                CB[nc] = j
                CN[nc, 0] = nx
                CN[nc, 1] = ny
                CN[nc, 2] = nz
                for r in range(3):
                    CP[nc, r] = 0.5 * (pa[r] + pb[r])
                CS[nc] = sep
                CK[nc] = -(i * nb + j) - 1
                nc += 1
    return nc


@njit(cache=True)
def _world_inv_inertia(quat, inv_I_body, IW):
    R = np.empty((3, 3))
    for i in range(quat.shape[0]):
        _qmat(quat[i], R)
        IW[i] = R @ inv_I_body[i] @ R.T


@njit(cache=True)
def _cross(a0, a1, a2, b0, b1, b2):
    return a1 * b2 - a2 * b1, a2 * b0 - a0 * b2, a0 * b1 - a1 * b0


@njit(cache=True)
def _eff_mass(b, rx, ry, rz, nx, ny, nz, inv_m, IW):
    """inv_m + (I^-1 (r x n)) x r . n for one body (0 for the floor)."""
    if b < 0:
        return 0.0
    cx, cy, cz = _cross(rx, ry, rz, nx, ny, nz)
    ix = IW[b, 0, 0] * cx + IW[b, 0, 1] * cy + IW[b, 0, 2] * cz
    iy = IW[b, 1, 0] * cx + IW[b, 1, 1] * cy + IW[b, 1, 2] * cz
    iz = IW[b, 2, 0] * cx + IW[b, 2, 1] * cy + IW[b, 2, 2] * cz
    return inv_m[b] + cx * ix + cy * iy + cz * iz


@njit(cache=True)
def _apply_impulse(b, sign, px, py, pz, rx, ry, rz, vel, omg, inv_m, IW):
    if b < 0:
        return
    vel[b, 0] += sign * inv_m[b] * px
    vel[b, 1] += sign * inv_m[b] * py
    vel[b, 2] += sign * inv_m[b] * pz
    cx, cy, cz = _cross(rx, ry, rz, px, py, pz)
    for r in range(3):
        omg[b, r] += sign * (IW[b, r, 0] * cx + IW[b, r, 1] * cy + IW[b, r, 2] * cz)


@njit(cache=True)
def _point_velocity(b, rx, ry, rz, vel, omg):
    if b < 0:
        return 0.0, 0.0, 0.0
    cx, cy, cz = _cross(omg[b, 0], omg[b, 1], omg[b, 2], rx, ry, rz)
    return vel[b, 0] + cx, vel[b, 1] + cy, vel[b, 2] + cz


@njit(cache=True)
def _tangents(nx, ny, nz):
    if abs(nx) < 0.57735:
        ax, ay, az = 1.0, 0.0, 0.0
    else:
        ax, ay, az = 0.0, 1.0, 0.0
    t1x, t1y, t1z = _cross(nx, ny, nz, ax, ay, az)
    ln = np.sqrt(t1x * t1x + t1y * t1y + t1z * t1z)
    t1x /= ln
    t1y /= ln
    t1z /= ln
    t2x, t2y, t2z = _cross(nx, ny, nz, t1x, t1y, t1z)
    return t1x, t1y, t1z, t2x, t2y, t2z


@njit(cache=True)
def _rot_energy(omg, IB, quat):
    R = np.empty((3, 3))
    _qmat(quat, R)
    wb = R.T @ omg
    return 0.5 * (wb @ (IB @ wb))


@njit(cache=True)
def step_arrays(pos, quat, vel, omg, inv_m, inv_I_body, I_body, hv, hv_off, hn, hd, hp_off, radius,
                gravity, dt, restitution, friction, slop, max_pen, iters, pos_iters,
                margin, rest_thresh, lin_damp, ang_damp, check_out, WK, WI, wcount):
    """Advance the world by one step in place.

    Returns -1 on success or the index of the first body whose state became
    non-finite. ``check_out[0]`` receives the worst remaining penetration.
    ``WK``/``WI``/``wcount`` hold the previous step's contact keys and world
    impulses for warm starting and are overwritten with this step's.
    """
    nb = pos.shape[0]
    nv = hv.shape[0]
    nfaces = hn.shape[0]
    WV = np.empty((nv, 3))
    WN = np.empty((nfaces, 3))
    WD = np.empty(nfaces)
    CA = np.empty(MAX_CONTACTS, dtype=np.int64)
    CB = np.empty(MAX_CONTACTS, dtype=np.int64)
    CN = np.empty((MAX_CONTACTS, 3))
    CP = np.empty((MAX_CONTACTS, 3))
    CS = np.empty(MAX_CONTACTS)
    CK = np.empty(MAX_CONTACTS, dtype=np.int64)
    IW = np.empty((nb, 3, 3))
    feat_tol = 2e-4

    # external forces
    for i in range(nb):
        for r in range(3):
            vel[i, r] += dt * gravity[r]

    _world_geometry(pos, quat, hv, hv_off, hn, hd, hp_off, WV, WN, WD)
    nc = _gather_contacts(pos, radius, hv_off, hp_off, WV, WN, WD, margin, feat_tol, CA, CB, CN, CP, CS, CK)

    # damping acts only on bodies in contact, so free flight stays ballistic
    touching = np.zeros(nb, dtype=np.bool_)
    for c in range(nc):
        if CA[c] >= 0:
            touching[CA[c]] = True
        touching[CB[c]] = True
    ld = 1.0 / (1.0 + dt * lin_damp)
    ad = 1.0 / (1.0 + dt * ang_damp)
    for i in range(nb):
        if touching[i]:
            for r in range(3):
                vel[i, r] *= ld
                omg[i, r] *= ad
    _world_inv_inertia(quat, inv_I_body, IW)

    # per-contact solver data
    RA = np.zeros((nc, 3))
    RB = np.zeros((nc, 3))
    T1 = np.zeros((nc, 3))
    T2 = np.zeros((nc, 3))
    KN = np.zeros(nc)
    K1 = np.zeros(nc)
    K2 = np.zeros(nc)
    TARGET = np.zeros(nc)
    LN = np.zeros(nc)
    L1 = np.zeros(nc)
    L2 = np.zeros(nc)
    for c in range(nc):
        a, b = CA[c], CB[c]
        nx, ny, nz = CN[c, 0], CN[c, 1], CN[c, 2]
        for r in range(3):
            if a >= 0:
                RA[c, r] = CP[c, r] - pos[a, r]
            RB[c, r] = CP[c, r] - pos[b, r]
        t1x, t1y, t1z, t2x, t2y, t2z = _tangents(nx, ny, nz)
        T1[c, 0], T1[c, 1], T1[c, 2] = t1x, t1y, t1z
        T2[c, 0], T2[c, 1], T2[c, 2] = t2x, t2y, t2z
        KN[c] = _eff_mass(a, RA[c, 0], RA[c, 1], RA[c, 2], nx, ny, nz, inv_m, IW) + \
            _eff_mass(b, RB[c, 0], RB[c, 1], RB[c, 2], nx, ny, nz, inv_m, IW)
        K1[c] = _eff_mass(a, RA[c, 0], RA[c, 1], RA[c, 2], t1x, t1y, t1z, inv_m, IW) + \
            _eff_mass(b, RB[c, 0], RB[c, 1], RB[c, 2], t1x, t1y, t1z, inv_m, IW)
        K2[c] = _eff_mass(a, RA[c, 0], RA[c, 1], RA[c, 2], t2x, t2y, t2z, inv_m, IW) + \
            _eff_mass(b, RB[c, 0], RB[c, 1], RB[c, 2], t2x, t2y, t2z, inv_m, IW)
        va0, va1, va2 = _point_velocity(a, RA[c, 0], RA[c, 1], RA[c, 2], vel, omg)
        vb0, vb1, vb2 = _point_velocity(b, RB[c, 0], RB[c, 1], RB[c, 2], vel, omg)
        vn = (vb0 - va0) * nx + (vb1 - va1) * ny + (vb2 - va2) * nz
        if CS[c] > 0.0:
            # speculative: allow closing the gap within this step
            TARGET[c] = -CS[c] / dt
        elif vn < -rest_thresh:
            TARGET[c] = -restitution * vn
        else:
            TARGET[c] = 0.0

    # warm start from last step's impulses on matching contacts
    for c in range(nc):
        for q in range(wcount[0]):
            if WK[q] == CK[c]:
                ix, iy, iz = WI[q, 0], WI[q, 1], WI[q, 2]
                ln = ix * CN[c, 0] + iy * CN[c, 1] + iz * CN[c, 2]
                if ln <= 0.0:
                    break
                LN[c] = ln
                l1 = ix * T1[c, 0] + iy * T1[c, 1] + iz * T1[c, 2]
                l2 = ix * T2[c, 0] + iy * T2[c, 1] + iz * T2[c, 2]
                lim = friction * ln
                L1[c] = min(max(l1, -lim), lim)
                L2[c] = min(max(l2, -lim), lim)
                px = LN[c] * CN[c, 0] + L1[c] * T1[c, 0] + L2[c] * T2[c, 0]
                py = LN[c] * CN[c, 1] + L1[c] * T1[c, 1] + L2[c] * T2[c, 1]
                pz = LN[c] * CN[c, 2] + L1[c] * T1[c, 2] + L2[c] * T2[c, 2]
                _apply_impulse(CA[c], -1.0, px, py, pz, RA[c, 0], RA[c, 1], RA[c, 2], vel, omg, inv_m, IW)
                _apply_impulse(CB[c], 1.0, px, py, pz, RB[c, 0], RB[c, 1], RB[c, 2], vel, omg, inv_m, IW)
                break

    for _ in range(iters):
        for c in range(nc):
            a, b = CA[c], CB[c]
            va0, va1, va2 = _point_velocity(a, RA[c, 0], RA[c, 1], RA[c, 2], vel, omg)
            vb0, vb1, vb2 = _point_velocity(b, RB[c, 0], RB[c, 1], RB[c, 2], vel, omg)
            dvx, dvy, dvz = vb0 - va0, vb1 - va1, vb2 - va2
            # friction first, bounded by the current normal impulse
            lim = friction * LN[c]
            for t in range(2):
                if t == 0:
                    tx, ty, tz, kt = T1[c, 0], T1[c, 1], T1[c, 2], K1[c]
                else:
                    tx, ty, tz, kt = T2[c, 0], T2[c, 1], T2[c, 2], K2[c]
                if kt <= 0.0:
                    continue
                vt = dvx * tx + dvy * ty + dvz * tz
                dl = -vt / kt
                old = L1[c] if t == 0 else L2[c]
                new = min(max(old + dl, -lim), lim)
                dl = new - old
                if t == 0:
                    L1[c] = new
                else:
                    L2[c] = new
                px, py, pz = dl * tx, dl * ty, dl * tz
                _apply_impulse(a, -1.0, px, py, pz, RA[c, 0], RA[c, 1], RA[c, 2], vel, omg, inv_m, IW)
                _apply_impulse(b, 1.0, px, py, pz, RB[c, 0], RB[c, 1], RB[c, 2], vel, omg, inv_m, IW)
                va0, va1, va2 = _point_velocity(a, RA[c, 0], RA[c, 1], RA[c, 2], vel, omg)
                vb0, vb1, vb2 = _point_velocity(b, RB[c, 0], RB[c, 1], RB[c, 2], vel, omg)
                dvx, dvy, dvz = vb0 - va0, vb1 - va1, vb2 - va2
            nx, ny, nz = CN[c, 0], CN[c, 1], CN[c, 2]
            vn = dvx * nx + dvy * ny + dvz * nz
            if KN[c] <= 0.0:
                continue
            dl = (TARGET[c] - vn) / KN[c]
            new = max(LN[c] + dl, 0.0)
            dl = new - LN[c]
            LN[c] = new
            px, py, pz = dl * nx, dl * ny, dl * nz
            _apply_impulse(a, -1.0, px, py, pz, RA[c, 0], RA[c, 1], RA[c, 2], vel, omg, inv_m, IW)
            _apply_impulse(b, 1.0, px, py, pz, RB[c, 0], RB[c, 1], RB[c, 2], vel, omg, inv_m, IW)

    for c in range(nc):
        WK[c] = CK[c]
        for r in range(3):
            WI[c, r] = LN[c] * CN[c, r] + L1[c] * T1[c, r] + L2[c] * T2[c, r]
    wcount[0] = nc

    # integrate positions
    for i in range(nb):
        e0 = _rot_energy(omg[i], I_body[i], quat[i])
        for r in range(3):
            pos[i, r] += dt * vel[i, r]
        _rotate_quat(quat[i], omg[i, 0], omg[i, 1], omg[i, 2], dt)
        e1 = _rot_energy(omg[i], I_body[i], quat[i])
        # the gyroscope-free update may raise rotational energy; never let it
        if e1 > e0 and e1 > 0.0:
            s = np.sqrt(e0 / e1)
            for r in range(3):
                omg[i, r] *= s

    # position projection
    PK = np.empty(MAX_CONTACTS, dtype=np.int64)
    worst = 0.0
    for _ in range(pos_iters):
        _world_geometry(pos, quat, hv, hv_off, hn, hd, hp_off, WV, WN, WD)
        nc = _gather_contacts(pos, radius, hv_off, hp_off, WV, WN, WD, 0.0, feat_tol, CA, CB, CN, CP, CS, PK)
        worst = 0.0
        for c in range(nc):
            worst = max(worst, -CS[c])
        if worst <= slop:
            break
        _world_inv_inertia(quat, inv_I_body, IW)
        for c in range(nc):
            depth = -CS[c] - slop
            if depth <= 0.0:
                continue
            a, b = CA[c], CB[c]
            nx, ny, nz = CN[c, 0], CN[c, 1], CN[c, 2]
            rax = ray = raz = 0.0
            if a >= 0:
                rax, ray, raz = CP[c, 0] - pos[a, 0], CP[c, 1] - pos[a, 1], CP[c, 2] - pos[a, 2]
            rbx, rby, rbz = CP[c, 0] - pos[b, 0], CP[c, 1] - pos[b, 1], CP[c, 2] - pos[b, 2]
            k = _eff_mass(a, rax, ray, raz, nx, ny, nz, inv_m, IW) + \
                _eff_mass(b, rbx, rby, rbz, nx, ny, nz, inv_m, IW)
            if k <= 0.0:
                continue
            lam = 0.8 * depth / k
            px, py, pz = lam * nx, lam * ny, lam * nz
            for side in range(2):
                body = a if side == 0 else b
                if body < 0:
                    continue
                sign = -1.0 if side == 0 else 1.0
                rx, ry, rz = (rax, ray, raz) if side == 0 else (rbx, rby, rbz)
                pos[body, 0] += sign * inv_m[body] * px
                pos[body, 1] += sign * inv_m[body] * py
                pos[body, 2] += sign * inv_m[body] * pz
                cx, cy, cz = _cross(rx, ry, rz, px, py, pz)
                wx = sign * (IW[body, 0, 0] * cx + IW[body, 0, 1] * cy + IW[body, 0, 2] * cz)
                wy = sign * (IW[body, 1, 0] * cx + IW[body, 1, 1] * cy + IW[body, 1, 2] * cz)
                wz = sign * (IW[body, 2, 0] * cx + IW[body, 2, 1] * cy + IW[body, 2, 2] * cz)
                _rotate_quat(quat[body], wx, wy, wz, 1.0)
    check_out[0] = worst

    for i in range(nb):
        for r in range(3):
            if not (np.isfinite(pos[i, r]) and np.isfinite(vel[i, r]) and np.isfinite(omg[i, r])):
                return i
        for r in range(4):
            if not np.isfinite(quat[i, r]):
                return i
    return -1


@njit(cache=True)
def settle_arrays(pos, quat, vel, omg, inv_m, inv_I_body, I_body, hv, hv_off, hn, hd, hp_off, radius,
                  gravity, dt, restitution, friction, slop, max_pen, iters, pos_iters,
                  margin, rest_thresh, lin_damp, ang_damp, WK, WI, wcount,
                  rest_lin, rest_ang, rest_window, max_steps, out):
    """Step until every body is below the rest speeds for ``rest_window`` steps.

    ``out`` receives (steps taken, converged flag, failing body or -1).
    """
    check = np.zeros(1)
    calm = 0
    steps = 0
    out[2] = -1
    while steps < max_steps:
        bad = step_arrays(pos, quat, vel, omg, inv_m, inv_I_body, I_body, hv, hv_off, hn, hd, hp_off, radius,
                          gravity, dt, restitution, friction, slop, max_pen, iters, pos_iters,
                          margin, rest_thresh, lin_damp, ang_damp, check, WK, WI, wcount)
        steps += 1
        if bad >= 0:
            out[2] = bad
            break
        vmax = 0.0
        wmax = 0.0
        for i in range(pos.shape[0]):
            vmax = max(vmax, np.sqrt(vel[i, 0] ** 2 + vel[i, 1] ** 2 + vel[i, 2] ** 2))
            wmax = max(wmax, np.sqrt(omg[i, 0] ** 2 + omg[i, 1] ** 2 + omg[i, 2] ** 2))
        if vmax < rest_lin and wmax < rest_ang and check[0] <= max_pen:
            calm += 1
            if calm >= rest_window:
                out[0] = steps
                out[1] = 1
                return
        else:
            calm = 0
    out[0] = steps
    out[1] = 0


# --------------------------------------------------------------------------- packing


class _Packed:
    """Flat arrays for the kernels; COM-centered hulls, COM positions."""

    def __init__(self, world: WorldState):
        bodies = world.bodies
        self.coms = []
        hv, hn, hd = [], [], []
        hv_off, hp_off = [0], [0]
        inv_m, inv_I, I_b, radius = [], [], [], []
        pos, quat, vel, omg = [], [], [], []
        for b in bodies:
            com, inertia = mass_properties(b.hull, b.mass)
            self.coms.append(com)
            local = b.hull.vertices - com
            hv.append(local)
            nrm = b.hull.plane_normals()
            hn.append(nrm)
            hd.append(np.einsum("ij,ij->i", nrm, local[b.hull.faces[:, 0]]))
            hv_off.append(hv_off[-1] + len(local))
            hp_off.append(hp_off[-1] + len(nrm))
            inv_m.append(1.0 / b.mass)
            inv_I.append(np.linalg.inv(inertia))
            I_b.append(inertia)
            radius.append(np.linalg.norm(local, axis=1).max())
            R = quat_to_matrix(b.pose.orientation)
            pos.append(b.pose.position + R @ com)
            quat.append(b.pose.orientation / np.linalg.norm(b.pose.orientation))
            vel.append(b.pose.linear_velocity)
            omg.append(b.pose.angular_velocity)
        self.hv = np.ascontiguousarray(np.vstack(hv))
        self.hn = np.ascontiguousarray(np.vstack(hn))
        self.hd = np.concatenate(hd)
        self.hv_off = np.array(hv_off, dtype=np.int64)
        self.hp_off = np.array(hp_off, dtype=np.int64)
        self.inv_m = np.array(inv_m)
        self.inv_I = np.ascontiguousarray(np.array(inv_I))
        self.I_b = np.ascontiguousarray(np.array(I_b))
        self.radius = np.array(radius)
        self.pos = np.array(pos, dtype=np.float64)
        self.quat = np.array(quat, dtype=np.float64)
        self.vel = np.array(vel, dtype=np.float64)
        self.omg = np.array(omg, dtype=np.float64)
        self.gravity = np.asarray(world.gravity, dtype=np.float64)

    def args(self, p: SettleParams):
        return (self.pos, self.quat, self.vel, self.omg, self.inv_m, self.inv_I, self.I_b,
                self.hv, self.hv_off, self.hn, self.hd, self.hp_off, self.radius, self.gravity,
                p.dt, p.restitution, p.friction, p.slop, p.max_penetration, p.solver_iterations,
                p.position_iterations, p.contact_margin, p.restitution_threshold,
                p.linear_damping, p.angular_damping)

    def cache_arrays(self, world: WorldState):
        if world.contact_cache is not None:
            return tuple(a.copy() for a in world.contact_cache)
        return (np.empty(MAX_CONTACTS, dtype=np.int64), np.empty((MAX_CONTACTS, 3)),
                np.zeros(1, dtype=np.int64))

    def unpack(self, world: WorldState, time: float, cache=None) -> WorldState:
        bodies = []
        for i, b in enumerate(world.bodies):
            q = self.quat[i].copy()
            R = quat_to_matrix(q)
            pose = PoseState(self.pos[i] - R @ self.coms[i], q, self.vel[i].copy(), self.omg[i].copy())
            bodies.append(Body(b.class_id, b.hull, b.mass, pose))
        return WorldState(bodies, world.gravity, time, cache)


def _check_world(world: WorldState):
    for i, b in enumerate(world.bodies):
        p = b.pose
        vals = np.concatenate([p.position, p.orientation, p.linear_velocity, p.angular_velocity])
        if not np.all(np.isfinite(vals)):
            raise PhysicsError(f"non-finite state in body {i}", i)
        if abs(np.linalg.norm(p.orientation) - 1.0) > 1e-6:
            raise PhysicsError(f"body {i} orientation is not a unit quaternion", i)


def step(world: WorldState, params: SettleParams = None) -> WorldState:
    """Advance ``world`` by one ``params.dt``; the input is left untouched."""
    params = params or SettleParams()
    _check_world(world)
    packed = _Packed(world)
    check = np.zeros(1)
    cache = packed.cache_arrays(world)
    bad = step_arrays(*packed.args(params), check, *cache)
    if bad >= 0:
        raise PhysicsError(f"non-finite state in body {bad}", int(bad))
    return packed.unpack(world, world.time + params.dt, cache)


def settle(world: WorldState, params: SettleParams = None) -> SettleResult:
    params = params or SettleParams()
    _check_world(world)
    packed = _Packed(world)
    out = np.zeros(3, dtype=np.int64)
    cache = packed.cache_arrays(world)
    settle_arrays(*packed.args(params), *cache, params.rest_lin_speed, params.rest_ang_speed,
                  params.rest_window, params.max_steps, out)
    steps, converged, bad = int(out[0]), bool(out[1]), int(out[2])
    if bad >= 0:
        raise PhysicsError(f"non-finite state in body {bad}", bad)
    return SettleResult(packed.unpack(world, world.time + steps * params.dt, cache), steps, converged)


# --------------------------------------------------------------------------- queries and sampling


def world_vertices(hull: ConvexHull, pose: PoseState) -> np.ndarray:
    return hull.vertices @ pose.rotation().T + pose.position


def penetration_depth(a, b) -> float:
    """Signed depth between two posed hulls, each given as ``(ConvexHull, PoseState)``.

    Positive values are overlap depth, non-positive values the negated gap.
    """
    va = np.ascontiguousarray(world_vertices(*a))
    vb = np.ascontiguousarray(world_vertices(*b))
    return float(query(va, vb)[0])


def max_penetration(world: WorldState) -> float:
    """Worst pairwise or floor penetration in ``world`` (0 when nothing overlaps)."""
    verts = [world_vertices(b.hull, b.pose) for b in world.bodies]
    worst = max(0.0, max(-v[:, 2].min() for v in verts))
    for i in range(len(verts)):
        for j in range(i + 1, len(verts)):
            worst = max(worst, float(query(np.ascontiguousarray(verts[i]), np.ascontiguousarray(verts[j]))[0]))
    return worst


def sample_initial_poses(parts, catalog, rng, drop_region, min_separation=None, attempts=32) -> list:
    """Uniform positions in ``drop_region`` and uniform random orientations.

    ``drop_region`` is ``((xmin, ymin, zmin), (xmax, ymax, zmax))``. With
    ``min_separation`` set, each position is redrawn (up to ``attempts``
    times) while its bounding sphere overlaps one already placed.
    """
    if len(parts) == 0:
        raise ValueError("no parts to drop")
    lo = np.asarray(drop_region[0], dtype=np.float64)
    hi = np.asarray(drop_region[1], dtype=np.float64)
    if np.any(hi < lo):
        raise ValueError("drop region min exceeds max")
    if lo[2] <= 0:
        raise ValueError("drop region must lie above the floor")
    placed = []
    poses = []
    for cid in parts:
        radius = 0.0
        if min_separation is not None:
            hull = catalog.by_id(cid).convex_proxy
            radius = np.linalg.norm(hull.vertices, axis=1).max()
        q = random_quaternion(rng)
        for _ in range(max(1, attempts)):
            p = lo + (hi - lo) * rng.random(3)
            if min_separation is None:
                break
            if all(np.linalg.norm(p - c) >= r + radius + min_separation for c, r in placed):
                break
        placed.append((p, radius))
        poses.append(PoseState(p, q))
    return poses


def make_world(parts, catalog, poses, gravity=GRAVITY) -> WorldState:
    bodies = []
    for cid, pose in zip(parts, poses):
        pc = catalog.by_id(cid)
        bodies.append(Body(cid, pc.convex_proxy, pc.mass, pose))
    return WorldState(bodies, gravity)


def with_pose(world: WorldState, index: int, **changes) -> WorldState:
    out = world.copy()
    b = out.bodies[index]
    b.pose = replace(b.pose, **changes)
    return out
