"""Polytope volumes, LP feasibility and simplex subdivision rules."""

from __future__ import annotations

from functools import lru_cache
from itertools import combinations, permutations, product
from math import factorial

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import ConvexHull, QhullError

FEAS_TOL = 1e-9


def interval_lengths(a, b, tol=0.0):
    """Lengths of ``{u : a u <= b}`` for stacked 1-d systems.

    ``a`` and ``b`` have shape ``(P, r)``. Rows with ``a == 0`` act as pure
    feasibility tests ``0 <= b``.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        bound = b / a
    upper = np.where(a > 0, bound, np.inf).min(axis=1)
    lower = np.where(a < 0, bound, -np.inf).max(axis=1)
    ok = np.where(a == 0, b >= -tol, True).all(axis=1)
    length = np.clip(upper - lower, 0.0, None)
    length[~ok] = 0.0
    length[~np.isfinite(length)] = np.nan
    return length


def polygon_areas(A, b, tol=1e-12):
    """Areas of the bounded polygons ``{u in R^2 : A u <= b}``.

    Vertices are enumerated from all pairs of constraint lines, filtered by
    feasibility, ordered by angle around their mean and closed with the
    shoelace formula. ``A`` has shape ``(P, r, 2)``, ``b`` shape ``(P, r)``.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    P, r, _ = A.shape
    if P == 0:
        return np.zeros(0)
    idx = np.array(list(combinations(range(r), 2)))
    M = np.stack([A[:, idx[:, 0]], A[:, idx[:, 1]]], axis=-2)  # (P, C, 2, 2)
    rhs = np.stack([b[:, idx[:, 0]], b[:, idx[:, 1]]], axis=-1)
    det = M[..., 0, 0] * M[..., 1, 1] - M[..., 0, 1] * M[..., 1, 0]
    good = np.abs(det) > 1e-14
    safe = np.where(good, det, 1.0)
    x = (rhs[..., 0] * M[..., 1, 1] - rhs[..., 1] * M[..., 0, 1]) / safe
    y = (M[..., 0, 0] * rhs[..., 1] - M[..., 1, 0] * rhs[..., 0]) / safe
    pts = np.stack([x, y], axis=-1)  # (P, C, 2)
    scale = 1.0 + np.abs(b).max(axis=1)
    slack = np.einsum("prk,pck->pcr", A, pts) - b[:, None, :]
    feas = good & (slack <= tol * scale[:, None, None]).all(axis=-1)
    count = feas.sum(axis=1)
    centre = np.where(feas[..., None], pts, 0.0).sum(axis=1) / np.maximum(count, 1)[:, None]
    rel = pts - centre[:, None, :]
    ang = np.where(feas, np.arctan2(rel[..., 1], rel[..., 0]), np.inf)
    order = np.argsort(ang, axis=1)
    rel = np.take_along_axis(rel, order[..., None], axis=1)
    valid = np.take_along_axis(feas, order, axis=1)
    first = rel[:, :1, :]
    rel = np.where(valid[..., None], rel, first)
    nxt = np.roll(rel, -1, axis=1)
    cross = rel[..., 0] * nxt[..., 1] - rel[..., 1] * nxt[..., 0]
    area = 0.5 * np.abs(cross.sum(axis=1))
    area[count < 3] = 0.0
    return area


def halfspace_volume(A, b, tol=1e-12):
    """Volume of the bounded polytope ``{x : A x <= b}`` in any dimension.

    Uses vertex enumeration over all ``d``-subsets of constraints, which is
    exact up to rounding and fine for the handful of constraints that arise
    at desk scale. Lower-dimensional or empty sets have volume 0.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float).ravel()
    d = A.shape[1]
    if d == 1:
        return float(interval_lengths(A[None, :, 0], b[None])[0])
    if d == 2:
        return float(polygon_areas(A[None], b[None])[0])
    verts = polytope_vertices(A, b, tol)
    if len(verts) <= d:
        return 0.0
    try:
        return float(ConvexHull(verts).volume)
    except QhullError:
        return 0.0


def polytope_vertices(A, b, tol=1e-12):
    """Vertices of ``{x : A x <= b}`` by solving every ``d x d`` subsystem."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float).ravel()
    d = A.shape[1]
    scale = 1.0 + np.abs(b).max()
    idx = np.array(list(combinations(range(A.shape[0]), d)))
    if len(idx) == 0:
        return np.zeros((0, d))
    out = []
    for start in range(0, len(idx), 50_000):
        sub = idx[start:start + 50_000]
        M = A[sub]
        ok = np.abs(np.linalg.det(M)) >= 1e-13
        if not ok.any():
            continue
        x = np.linalg.solve(M[ok], b[sub[ok]][..., None])[..., 0]
        feas = (x @ A.T - b <= tol * scale).all(axis=1)
        out.append(x[feas])
    out = np.concatenate(out) if out else np.zeros((0, d))
    if len(out) == 0:
        return out
    # the same vertex arrives from several degenerate subsets; merge near-copies
    keep = []
    for x in out:
        if not keep or np.abs(np.array(keep) - x).max(axis=1).min() > 1e-9 * scale:
            keep.append(x)
    return np.array(keep)


def lp_feasible(A_eq, b_eq, n_vars, A_ub=None, b_ub=None, tol=FEAS_TOL):
    """Decide whether ``A_eq v = b_eq`` has a solution with ``v >= 0``
    (and ``A_ub v <= b_ub`` if given), allowing an equality slack of ``tol``.

    The slack is minimized explicitly so the decision does not depend on the
    solver's internal feasibility tolerance.
    """
    A_eq = np.atleast_2d(np.asarray(A_eq, dtype=float))
    b_eq = np.asarray(b_eq, dtype=float).ravel()
    m = A_eq.shape[0]
    # variables: v (n_vars, >= 0), t (scalar slack, >= 0)
    c = np.zeros(n_vars + 1)
    c[-1] = 1.0
    ub_rows = [np.hstack([A_eq, -np.ones((m, 1))]), np.hstack([-A_eq, -np.ones((m, 1))])]
    ub_rhs = [b_eq, -b_eq]
    if A_ub is not None:
        A_ub = np.atleast_2d(np.asarray(A_ub, dtype=float))
        ub_rows.append(np.hstack([A_ub, np.zeros((A_ub.shape[0], 1))]))
        ub_rhs.append(np.asarray(b_ub, dtype=float).ravel())
    res = linprog(c, A_ub=np.vstack(ub_rows), b_ub=np.concatenate(ub_rhs),
                  bounds=[(0, None)] * (n_vars + 1), method="highs")
    if res.status != 0:
        return False
    return bool(res.fun <= tol)


def simplices_intersect(P, Q, tol=FEAS_TOL):
    """Whether two simplices (vertex rows in a common space) intersect."""
    P = np.asarray(P, dtype=float)
    Q = np.asarray(Q, dtype=float)
    p, q = len(P), len(Q)
    A_eq = np.zeros((P.shape[1] + 2, p + q))
    A_eq[:-2, :p] = P.T
    A_eq[:-2, p:] = -Q.T
    A_eq[-2, :p] = 1.0
    A_eq[-1, p:] = 1.0
    b_eq = np.zeros(P.shape[1] + 2)
    b_eq[-2:] = 1.0
    return lp_feasible(A_eq, b_eq, p + q, tol=tol)


def barycentric_matrix(vertices):
    """Matrix ``B`` with ``B @ [x, 1] = barycentric coordinates of x``.

    ``vertices`` is ``(d+1, d)``, a full-dimensional simplex in ``R^d``.
    """
    vertices = np.asarray(vertices, dtype=float)
    d = vertices.shape[1]
    M = np.vstack([vertices.T, np.ones(d + 1)])
    return np.linalg.inv(M)


@lru_cache(maxsize=None)
def kuhn_cube_simplices(d):
    """The ``d!`` Kuhn simplices of the unit cube, as ``(d!, d+1, d)`` integer vertices."""
    out = []
    for perm in permutations(range(d)):
        v = np.zeros(d, dtype=int)
        verts = [v.copy()]
        for axis in perm:
            v[axis] += 1
            verts.append(v.copy())
        out.append(verts)
    return np.array(out, dtype=int).reshape(-1, d + 1, d)


@lru_cache(maxsize=None)
def edgewise_centroids(d, k):
    """Barycentric coordinates of the centroids of the ``k**d`` congruent
    pieces of the Freudenthal (edgewise) subdivision of a ``d``-simplex.

    Every piece has volume ``vol / k**d``, so equal weights give the
    composite midpoint rule.
    """
    if d == 0:
        return np.ones((1, 1))
    kuhn = kuhn_cube_simplices(d)
    cells = np.array(list(product(range(k), repeat=d)), dtype=float)
    cents = (cells[:, None, :] + kuhn.mean(axis=1)[None, :, :]).reshape(-1, d) / k
    # reference simplex 1 >= y_1 >= ... >= y_d >= 0
    keep = (np.diff(cents, axis=1) < 0).all(axis=1) if d > 1 else np.ones(len(cents), bool)
    y = cents[keep]
    lam = np.empty((len(y), d + 1))
    lam[:, 0] = 1.0 - y[:, 0]
    lam[:, 1:d] = y[:, :-1] - y[:, 1:]
    lam[:, d] = y[:, -1]
    assert len(lam) == k ** d
    return lam


def barycentric_subdivision(vertices):
    """Split a simplex into its ``(d+1)!`` barycentric pieces.

    ``vertices`` has shape ``(d+1, n)``; the result ``((d+1)!, d+1, n)``.
    """
    vertices = np.asarray(vertices, dtype=float)
    d1 = len(vertices)
    out = np.empty((factorial(d1), d1, vertices.shape[1]))
    for m, perm in enumerate(permutations(range(d1))):
        pts = vertices[list(perm)]
        out[m] = np.cumsum(pts, axis=0) / np.arange(1, d1 + 1)[:, None]
    return out
