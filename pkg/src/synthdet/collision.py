"""GJK distance and EPA penetration depth between convex vertex sets.

Everything here is numba-compiled and works on plain float64 arrays of world
space vertices, so the physics step can call it without Python overhead.
"""

from __future__ import annotations

import numpy as np
from numba import njit

GJK_MAX_ITERS = 128
EPA_MAX_ITERS = 128
EPA_MAX_VERTS = 160
EPA_MAX_FACES = 2 * EPA_MAX_VERTS


@njit(cache=True)
def _support(verts, d0, d1, d2):
    best = 0
    best_val = verts[0, 0] * d0 + verts[0, 1] * d1 + verts[0, 2] * d2
    for i in range(1, verts.shape[0]):
        val = verts[i, 0] * d0 + verts[i, 1] * d1 + verts[i, 2] * d2
        if val > best_val:
            best_val = val
            best = i
    return best


@njit(cache=True)
def _det3(a00, a01, a02, a10, a11, a12, a20, a21, a22):
    return (a00 * (a11 * a22 - a12 * a21)
            - a01 * (a10 * a22 - a12 * a20)
            + a02 * (a10 * a21 - a11 * a20))


@njit(cache=True)
def _closest_on_simplex(W, k, lam_out):
    """Closest point of conv(W[:k]) to the origin.

    Every non-empty subset is projected onto its affine hull; among the
    projections that land strictly inside their subset the shortest wins.
    Returns the subset bitmask; barycentric weights go to ``lam_out``.
    """
    best_mask = 0
    best_d2 = np.inf
    lam = np.zeros(4)
    idx = np.zeros(4, dtype=np.int64)
    for mask in range(1, 1 << k):
        m = 0
        for i in range(k):
            if mask & (1 << i):
                idx[m] = i
                m += 1
        for i in range(4):
            lam[i] = 0.0
        ok = True
        if m == 1:
            lam[idx[0]] = 1.0
        else:
            w0 = W[idx[0]]
            # Gram system G mu = -E^T w0 with E columns w_i - w0
            n = m - 1
            G = np.zeros((3, 3))
            rhs = np.zeros(3)
            for r in range(n):
                er = W[idx[r + 1]] - w0
                rhs[r] = -(er[0] * w0[0] + er[1] * w0[1] + er[2] * w0[2])
                for c in range(n):
                    ec = W[idx[c + 1]] - w0
                    G[r, c] = er[0] * ec[0] + er[1] * ec[1] + er[2] * ec[2]
            scale = 0.0
            for r in range(n):
                scale = max(scale, G[r, r])
            mu = np.zeros(3)
            if n == 1:
                if G[0, 0] <= 1e-30:
                    ok = False
                else:
                    mu[0] = rhs[0] / G[0, 0]
            elif n == 2:
                det = G[0, 0] * G[1, 1] - G[0, 1] * G[1, 0]
                if abs(det) <= 1e-12 * scale * scale or det == 0.0:
                    ok = False
                else:
                    mu[0] = (rhs[0] * G[1, 1] - G[0, 1] * rhs[1]) / det
                    mu[1] = (G[0, 0] * rhs[1] - rhs[0] * G[1, 0]) / det
            else:
                det = _det3(G[0, 0], G[0, 1], G[0, 2], G[1, 0], G[1, 1], G[1, 2], G[2, 0], G[2, 1], G[2, 2])
                if abs(det) <= 1e-12 * scale * scale * scale or det == 0.0:
                    ok = False
                else:
                    mu[0] = _det3(rhs[0], G[0, 1], G[0, 2], rhs[1], G[1, 1], G[1, 2], rhs[2], G[2, 1], G[2, 2]) / det
                    mu[1] = _det3(G[0, 0], rhs[0], G[0, 2], G[1, 0], rhs[1], G[1, 2], G[2, 0], rhs[2], G[2, 2]) / det
                    mu[2] = _det3(G[0, 0], G[0, 1], rhs[0], G[1, 0], G[1, 1], rhs[1], G[2, 0], G[2, 1], rhs[2]) / det
            if ok:
                s = 0.0
                for r in range(n):
                    if mu[r] <= 0.0:
                        ok = False
                    lam[idx[r + 1]] = mu[r]
                    s += mu[r]
                lam[idx[0]] = 1.0 - s
                if lam[idx[0]] <= 0.0:
                    ok = False
        if not ok:
            continue
        p0 = 0.0
        p1 = 0.0
        p2 = 0.0
        for i in range(k):
            p0 += lam[i] * W[i, 0]
            p1 += lam[i] * W[i, 1]
            p2 += lam[i] * W[i, 2]
        d2 = p0 * p0 + p1 * p1 + p2 * p2
        if d2 < best_d2:
            best_d2 = d2
            best_mask = mask
            for i in range(4):
                lam_out[i] = lam[i]
    return best_mask


@njit(cache=True)
def _extent(VA, VB):
    s = 0.0
    for i in range(VA.shape[0]):
        for j in range(3):
            s = max(s, abs(VA[i, j]))
    for i in range(VB.shape[0]):
        for j in range(3):
            s = max(s, abs(VB[i, j]))
    return max(s, 1e-12)


@njit(cache=True)
def gjk(VA, VB, W, SA, SB):
    """GJK on the Minkowski difference ``A - B``.

    Fills the simplex arrays (points, and the A/B vertex indices that made
    them) and returns ``(k, distance, a_point, b_point)``. ``distance == 0``
    means the sets overlap (or touch within rounding).
    """
    scale = _extent(VA, VB)
    eps2 = (1e-13 * scale) ** 2
    d = np.empty(3)
    # start from the centroid difference
    for j in range(3):
        d[j] = 0.0
    for i in range(VA.shape[0]):
        for j in range(3):
            d[j] += VA[i, j] / VA.shape[0]
    for i in range(VB.shape[0]):
        for j in range(3):
            d[j] -= VB[i, j] / VB.shape[0]
    if d[0] * d[0] + d[1] * d[1] + d[2] * d[2] < eps2:
        d[0] = 1.0
    ia = _support(VA, -d[0], -d[1], -d[2])
    ib = _support(VB, d[0], d[1], d[2])
    k = 1
    SA[0] = ia
    SB[0] = ib
    for j in range(3):
        W[0, j] = VA[ia, j] - VB[ib, j]
    lam = np.zeros(4)
    v = np.empty(3)
    Wt = np.empty((4, 3))
    SAt = np.empty(4, dtype=np.int64)
    SBt = np.empty(4, dtype=np.int64)
    lam_keep = np.zeros(4)
    for _ in range(GJK_MAX_ITERS):
        mask = _closest_on_simplex(W, k, lam)
        # shrink simplex to the supporting subset
        m = 0
        for i in range(k):
            if mask & (1 << i):
                for j in range(3):
                    Wt[m, j] = W[i, j]
                SAt[m] = SA[i]
                SBt[m] = SB[i]
                lam_keep[m] = lam[i]
                m += 1
        k = m
        for i in range(k):
            for j in range(3):
                W[i, j] = Wt[i, j]
            SA[i] = SAt[i]
            SB[i] = SBt[i]
            lam[i] = lam_keep[i]
        for j in range(3):
            v[j] = 0.0
            for i in range(k):
                v[j] += lam[i] * W[i, j]
        vv = v[0] * v[0] + v[1] * v[1] + v[2] * v[2]
        if k == 4 or vv <= eps2:
            return k, 0.0, lam, lam
        ia = _support(VA, -v[0], -v[1], -v[2])
        ib = _support(VB, v[0], v[1], v[2])
        w0 = VA[ia, 0] - VB[ib, 0]
        w1 = VA[ia, 1] - VB[ib, 1]
        w2 = VA[ia, 2] - VB[ib, 2]
        if vv - (v[0] * w0 + v[1] * w1 + v[2] * w2) <= 1e-12 * vv:
            break
        dup = False
        for i in range(k):
            if SA[i] == ia and SB[i] == ib:
                dup = True
        if dup:
            break
        SA[k] = ia
        SB[k] = ib
        W[k, 0] = w0
        W[k, 1] = w1
        W[k, 2] = w2
        k += 1
    return k, np.sqrt(vv), lam, lam


@njit(cache=True)
def _witness(VA, VB, SA, SB, lam, k):
    pa = np.zeros(3)
    pb = np.zeros(3)
    for i in range(k):
        for j in range(3):
            pa[j] += lam[i] * VA[SA[i], j]
            pb[j] += lam[i] * VB[SB[i], j]
    return pa, pb


@njit(cache=True)
def _face_setup(P, fa, fb, fc, FN, FD, f, interior):
    ax, ay, az = P[fa, 0], P[fa, 1], P[fa, 2]
    ux, uy, uz = P[fb, 0] - ax, P[fb, 1] - ay, P[fb, 2] - az
    vx, vy, vz = P[fc, 0] - ax, P[fc, 1] - ay, P[fc, 2] - az
    nx = uy * vz - uz * vy
    ny = uz * vx - ux * vz
    nz = ux * vy - uy * vx
    ln = np.sqrt(nx * nx + ny * ny + nz * nz)
    if ln <= 0.0:
        return False
    nx /= ln
    ny /= ln
    nz /= ln
    FN[f, 0] = nx
    FN[f, 1] = ny
    FN[f, 2] = nz
    FD[f] = nx * ax + ny * ay + nz * az
    return True


@njit(cache=True)
def _add_support_point(VA, VB, P, PA, PB, n, d0, d1, d2):
    ia = _support(VA, d0, d1, d2)
    ib = _support(VB, -d0, -d1, -d2)
    P[n, 0] = VA[ia, 0] - VB[ib, 0]
    P[n, 1] = VA[ia, 1] - VB[ib, 1]
    P[n, 2] = VA[ia, 2] - VB[ib, 2]
    PA[n] = ia
    PB[n] = ib


@njit(cache=True)
def _tetra_volume(P, a, b, c, d):
    return _det3(P[b, 0] - P[a, 0], P[b, 1] - P[a, 1], P[b, 2] - P[a, 2],
                 P[c, 0] - P[a, 0], P[c, 1] - P[a, 1], P[c, 2] - P[a, 2],
                 P[d, 0] - P[a, 0], P[d, 1] - P[a, 1], P[d, 2] - P[a, 2])


@njit(cache=True)
def epa(VA, VB, W, SA, SB, k):
    """Expand the GJK simplex into the penetration polytope.

    Returns ``(depth, normal, point_on_a, point_on_b)``; ``normal`` points
    from A towards B, so translating B by ``depth * normal`` separates them.
    """
    scale = _extent(VA, VB)
    P = np.zeros((EPA_MAX_VERTS, 3))
    PA = np.zeros(EPA_MAX_VERTS, dtype=np.int64)
    PB = np.zeros(EPA_MAX_VERTS, dtype=np.int64)
    for i in range(k):
        for j in range(3):
            P[i, j] = W[i, j]
        PA[i] = SA[i]
        PB[i] = SB[i]
    n = k
    # complete a degenerate simplex to a tetrahedron using axis / normal supports
    dirs = np.array([[1.0, 0, 0], [-1.0, 0, 0], [0, 1.0, 0], [0, -1.0, 0], [0, 0, 1.0], [0, 0, -1.0],
                     [0.577, 0.577, 0.577], [-0.577, -0.577, -0.577], [0.577, -0.577, 0.577],
                     [-0.577, 0.577, -0.577], [0.577, 0.577, -0.577], [-0.577, -0.577, 0.577],
                     [-0.577, 0.577, 0.577], [0.577, -0.577, -0.577]])
    tol_len = 1e-10 * scale
    if n == 1:
        for t in range(dirs.shape[0]):
            _add_support_point(VA, VB, P, PA, PB, 1, dirs[t, 0], dirs[t, 1], dirs[t, 2])
            dx = P[1, 0] - P[0, 0]
            dy = P[1, 1] - P[0, 1]
            dz = P[1, 2] - P[0, 2]
            if np.sqrt(dx * dx + dy * dy + dz * dz) > tol_len:
                n = 2
                break
    if n == 2:
        ex = P[1, 0] - P[0, 0]
        ey = P[1, 1] - P[0, 1]
        ez = P[1, 2] - P[0, 2]
        best_area = 0.0
        bx, by, bz = 0.0, 0.0, 0.0
        for t in range(dirs.shape[0]):
            # direction perpendicular to the segment
            px = dirs[t, 1] * ez - dirs[t, 2] * ey
            py = dirs[t, 2] * ex - dirs[t, 0] * ez
            pz = dirs[t, 0] * ey - dirs[t, 1] * ex
            if px * px + py * py + pz * pz < 1e-20:
                continue
            _add_support_point(VA, VB, P, PA, PB, 2, px, py, pz)
            fx = P[2, 0] - P[0, 0]
            fy = P[2, 1] - P[0, 1]
            fz = P[2, 2] - P[0, 2]
            cx = ey * fz - ez * fy
            cy = ez * fx - ex * fz
            cz = ex * fy - ey * fx
            area = np.sqrt(cx * cx + cy * cy + cz * cz)
            if area > best_area:
                best_area = area
                bx, by, bz = px, py, pz
        if best_area > tol_len * tol_len:
            _add_support_point(VA, VB, P, PA, PB, 2, bx, by, bz)
            n = 3
    if n == 3:
        ux = P[1, 0] - P[0, 0]
        uy = P[1, 1] - P[0, 1]
        uz = P[1, 2] - P[0, 2]
        vx = P[2, 0] - P[0, 0]
        vy = P[2, 1] - P[0, 1]
        vz = P[2, 2] - P[0, 2]
        nx = uy * vz - uz * vy
        ny = uz * vx - ux * vz
        nz = ux * vy - uy * vx
        _add_support_point(VA, VB, P, PA, PB, 3, nx, ny, nz)
        vol_pos = abs(_tetra_volume(P, 0, 1, 2, 3))
        _add_support_point(VA, VB, P, PA, PB, 4, -nx, -ny, -nz)
        vol_neg = abs(_tetra_volume(P, 0, 1, 2, 4))
        if vol_neg > vol_pos:
            for j in range(3):
                P[3, j] = P[4, j]
            PA[3] = PA[4]
            PB[3] = PB[4]
            vol_pos = vol_neg
        if vol_pos > tol_len ** 3:
            n = 4
    if n < 4:
        # flat Minkowski difference: treat as touching
        pa, pb = np.zeros(3), np.zeros(3)
        for j in range(3):
            pa[j] = VA[PA[0], j]
            pb[j] = VB[PB[0], j]
        nrm = np.zeros(3)
        nrm[2] = 1.0
        return 0.0, nrm, pa, pb

    F = np.zeros((EPA_MAX_FACES, 3), dtype=np.int64)
    FN = np.zeros((EPA_MAX_FACES, 3))
    FD = np.zeros(EPA_MAX_FACES)
    alive = np.zeros(EPA_MAX_FACES, dtype=np.bool_)
    nf = 0
    if _tetra_volume(P, 0, 1, 2, 3) > 0:
        # make faces wind outward: (0,1,2) normal must point away from 3
        tets = ((0, 2, 1), (0, 1, 3), (0, 3, 2), (1, 2, 3))
    else:
        tets = ((0, 1, 2), (0, 3, 1), (0, 2, 3), (1, 3, 2))
    for t in tets:
        F[nf, 0] = t[0]
        F[nf, 1] = t[1]
        F[nf, 2] = t[2]
        if _face_setup(P, t[0], t[1], t[2], FN, FD, nf, 0):
            alive[nf] = True
        nf += 1

    edges = np.zeros((3 * EPA_MAX_FACES, 2), dtype=np.int64)
    best = 0
    tol = 1e-10 * scale
    for _ in range(EPA_MAX_ITERS):
        best = -1
        best_d = np.inf
        for f in range(nf):
            if alive[f] and FD[f] < best_d:
                best_d = FD[f]
                best = f
        if best < 0:
            break
        if n >= EPA_MAX_VERTS or nf + 3 * EPA_MAX_VERTS >= EPA_MAX_FACES * 2:
            break
        _add_support_point(VA, VB, P, PA, PB, n, FN[best, 0], FN[best, 1], FN[best, 2])
        dnew = FN[best, 0] * P[n, 0] + FN[best, 1] * P[n, 1] + FN[best, 2] * P[n, 2]
        if dnew - best_d <= tol:
            break
        # horizon of faces visible from the new point
        ne = 0
        for f in range(nf):
            if not alive[f]:
                continue
            a = F[f, 0]
            vis = (FN[f, 0] * (P[n, 0] - P[a, 0]) + FN[f, 1] * (P[n, 1] - P[a, 1])
                   + FN[f, 2] * (P[n, 2] - P[a, 2]))
            if vis > tol:
                alive[f] = False
                for e in range(3):
                    i0 = F[f, e]
                    i1 = F[f, (e + 1) % 3]
                    found = -1
                    for q in range(ne):
                        if edges[q, 0] == i1 and edges[q, 1] == i0:
                            found = q
                            break
                    if found >= 0:
                        edges[found, 0] = edges[ne - 1, 0]
                        edges[found, 1] = edges[ne - 1, 1]
                        ne -= 1
                    else:
                        edges[ne, 0] = i0
                        edges[ne, 1] = i1
                        ne += 1
        if nf + ne > EPA_MAX_FACES:
            break
        for q in range(ne):
            F[nf, 0] = edges[q, 0]
            F[nf, 1] = edges[q, 1]
            F[nf, 2] = n
            if _face_setup(P, edges[q, 0], edges[q, 1], n, FN, FD, nf, 0):
                alive[nf] = True
            nf += 1
        n += 1
        best = -1
    if best < 0:
        best_d = np.inf
        for f in range(nf):
            if alive[f] and FD[f] < best_d:
                best_d = FD[f]
                best = f
    depth = max(FD[best], 0.0)
    nrm = FN[best].copy()
    # barycentric coordinates of the origin's projection onto the closest face
    a, b, c = F[best, 0], F[best, 1], F[best, 2]
    px, py, pz = nrm[0] * FD[best], nrm[1] * FD[best], nrm[2] * FD[best]
    v0 = P[b] - P[a]
    v1 = P[c] - P[a]
    v2x, v2y, v2z = px - P[a, 0], py - P[a, 1], pz - P[a, 2]
    d00 = v0[0] * v0[0] + v0[1] * v0[1] + v0[2] * v0[2]
    d01 = v0[0] * v1[0] + v0[1] * v1[1] + v0[2] * v1[2]
    d11 = v1[0] * v1[0] + v1[1] * v1[1] + v1[2] * v1[2]
    d20 = v2x * v0[0] + v2y * v0[1] + v2z * v0[2]
    d21 = v2x * v1[0] + v2y * v1[1] + v2z * v1[2]
    den = d00 * d11 - d01 * d01
    if den > 0:
        lb = (d11 * d20 - d01 * d21) / den
        lc = (d00 * d21 - d01 * d20) / den
    else:
        lb = 0.0
        lc = 0.0
    la = 1.0 - lb - lc
    pa = la * VA[PA[a]] + lb * VA[PA[b]] + lc * VA[PA[c]]
    pb = la * VB[PB[a]] + lb * VB[PB[b]] + lc * VB[PB[c]]
    return depth, nrm, pa, pb


@njit(cache=True)
def query(VA, VB):
    """Signed separation between two convex vertex sets.

    Returns ``(signed, normal, point_on_a, point_on_b)`` where ``signed`` is
    the penetration depth (positive) or minus the gap (negative) and
    ``normal`` points from A to B.
    """
    W = np.zeros((4, 3))
    SA = np.zeros(4, dtype=np.int64)
    SB = np.zeros(4, dtype=np.int64)
    k, dist, lam, _ = gjk(VA, VB, W, SA, SB)
    if dist > 0.0:
        pa, pb = _witness(VA, VB, SA, SB, lam, k)
        nrm = (pb - pa) / dist
        return -dist, nrm, pa, pb
    depth, nrm, pa, pb = epa(VA, VB, W, SA, SB, k)
    return depth, nrm, pa, pb


def penetration_depth(verts_a, verts_b) -> float:
    """Positive overlap depth, or the negated gap when the sets are apart."""
    a = np.ascontiguousarray(verts_a, dtype=np.float64)
    b = np.ascontiguousarray(verts_b, dtype=np.float64)
    return float(query(a, b)[0])
