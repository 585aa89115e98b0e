"""Independent reference implementations used only by the tests."""

import itertools

import numpy as np
from scipy.spatial import ConvexHull as QHull


def fibonacci_sphere(n):
    k = np.arange(n) + 0.5
    phi = np.arccos(1 - 2 * k / n)
    theta = np.pi * (1 + 5 ** 0.5) * k
    return np.stack([np.cos(theta) * np.sin(phi), np.sin(theta) * np.sin(phi), np.cos(phi)], axis=1)


def sat_axes(va, vb):
    """Face normals of both hulls plus every edge-edge cross product."""
    ha, hb = QHull(va), QHull(vb)
    axes = [ha.equations[:, :3], hb.equations[:, :3]]

    def edges(h, v):
        e = set()
        for s in h.simplices:
            for i, j in itertools.combinations(s, 2):
                e.add((min(i, j), max(i, j)))
        d = np.array([v[j] - v[i] for i, j in e])
        return d / np.linalg.norm(d, axis=1, keepdims=True)

    ea, eb = edges(ha, va), edges(hb, vb)
    cr = np.cross(ea[:, None, :], eb[None, :, :]).reshape(-1, 3)
    n = np.linalg.norm(cr, axis=1)
    cr = cr[n > 1e-9] / n[n > 1e-9, None]
    axes.append(cr)
    return np.vstack(axes)


def signed_depth(va, vb, n_dirs=10_000):
    """min over unit d of h_A(d) + h_B(-d): overlap depth if positive, minus the gap otherwise.

    Exact for overlap (SAT axes included), an upper bound on minus the distance otherwise.
    """
    d = np.vstack([fibonacci_sphere(n_dirs), sat_axes(va, vb)])
    d = np.vstack([d, -d])
    ha = (va @ d.T).max(axis=0)
    hb = (-(vb @ d.T)).max(axis=0)
    return float((ha + hb).min())


def naive_rle(mask):
    flat = [bool(x) for x in np.asarray(mask).T.ravel()]
    runs, cur, n = [], False, 0
    for v in flat:
        if v == cur:
            n += 1
        else:
            runs.append(n)
            cur, n = v, 1
    runs.append(n)
    return runs


def greedy_match_bruteforce(dets, gts, thr, iou):
    """Enumerate every assignment and keep the one the greedy rule accepts.

    The greedy rule is a lexicographic preference: the top-scored detection
    takes its best gt, then the next, and so on. Among all partial injections
    the accepted one maximizes the tuple of (iou rank per detection in score order).
    """
    order = sorted(range(len(dets)), key=lambda k: (-dets[k][1], k))
    best_key, best = None, None
    options = [[None] + list(range(len(gts)))] * len(dets)
    for combo in itertools.product(*options):
        used = [g for g in combo if g is not None]
        if len(used) != len(set(used)):
            continue
        ok = True
        key = []
        for k in order:
            g = combo[k]
            v = iou(dets[k][0], gts[g]) if g is not None else -1.0
            if g is not None and v < thr:
                ok = False
                break
            key.append((v, -(g if g is not None else len(gts))))
        if not ok:
            continue
        if best_key is None or key > best_key:
            best_key, best = key, combo
    return [g is not None for g in best]


def conv_forward_influence(layers, size):
    """Perturb each input column and watch the centre output unit."""
    from scipy.signal import correlate2d

    def forward(img):
        a = img
        for l in layers:
            a = np.pad(a, l.padding)
            a = correlate2d(a, np.ones((l.kernel, l.kernel)), mode="valid")[::l.stride, ::l.stride]
        return a

    c = forward(np.zeros((size, size))).shape[0] // 2
    hits = [x for x in range(size) if forward(_col(size, x))[c, c]]
    return hits[-1] - hits[0] + 1 if hits else 0


def _col(size, x):
    img = np.zeros((size, size))
    img[:, x] = 1.0
    return img


def hull_distance(va, vb):
    """Euclidean distance between two convex hulls as a small QP over vertex weights."""
    from scipy.optimize import minimize

    na, nb = len(va), len(vb)

    def f(x):
        d = x[:na] @ va - x[na:] @ vb
        return d @ d

    def grad(x):
        d = x[:na] @ va - x[na:] @ vb
        return np.concatenate([2 * va @ d, -2 * vb @ d])

    x0 = np.concatenate([np.full(na, 1 / na), np.full(nb, 1 / nb)])
    cons = [{"type": "eq", "fun": lambda x: x[:na].sum() - 1, "jac": lambda x: np.r_[np.ones(na), np.zeros(nb)]},
            {"type": "eq", "fun": lambda x: x[na:].sum() - 1, "jac": lambda x: np.r_[np.zeros(na), np.ones(nb)]}]
    res = minimize(f, x0, jac=grad, bounds=[(0, 1)] * (na + nb), constraints=cons, method="SLSQP",
                   options={"ftol": 1e-16, "maxiter": 500})
    return float(np.sqrt(max(res.fun, 0.0)))
