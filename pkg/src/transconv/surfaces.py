"""Polyhedral submanifolds of R^n with piecewise-constant densities.

A :class:`PolyhedralSurface` is a finite list of flat simplicial facets of
a common dimension. Facet frames (tangent and normal) are computed once at
construction and kept as stacked arrays so that sweeps over facet pairs
and triples stay vectorized.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from itertools import product
from math import factorial

import numpy as np
from scipy.optimize import linprog

from .errors import DegenerateFacet, EmptyInteraction, NonTransversal
from .linalg import DET_FLOOR, ORTHO_TOL, DimensionSignature, Frame
from .polytope import FEAS_TOL, barycentric_subdivision, kuhn_cube_simplices, lp_feasible

VOLUME_FLOOR = 1e-14


@dataclass(frozen=True, eq=False)
class Facet:
    """A flat ``d``-simplex ``{base + tangent @ t : t in domain}``."""

    base_point: np.ndarray
    tangent: Frame
    normal: Frame
    domain: np.ndarray

    def __post_init__(self):
        T = np.asarray(self.tangent)
        N = np.asarray(self.normal)
        if T.shape[0] != N.shape[0] or T.shape[1] + N.shape[1] != T.shape[0]:
            raise ValueError("tangent and normal frames are not complementary")
        if np.abs(T.T @ N).max() > ORTHO_TOL:
            raise ValueError("tangent and normal frames are not orthogonal")
        dom = np.asarray(self.domain, dtype=float)
        if dom.shape != (T.shape[1] + 1, T.shape[1]):
            raise ValueError(f"domain must hold d+1 points in R^d, got {dom.shape}")
        facet_volume(self)

    @property
    def dim(self):
        return self.tangent.rank

    @property
    def ambient_dim(self):
        return self.tangent.ambient_dim

    @property
    def vertices(self):
        return np.asarray(self.base_point) + np.asarray(self.domain) @ np.asarray(self.tangent).T

    @classmethod
    def from_vertices(cls, vertices):
        S = PolyhedralSurface(np.asarray(vertices, dtype=float)[None])
        return S.facet(0)


def facet_volume(f):
    """``d``-volume of a facet's domain simplex."""
    dom = np.asarray(f.domain, dtype=float)
    d = dom.shape[1]
    vol = abs(np.linalg.det(dom[1:] - dom[0])) / factorial(d)
    if vol < VOLUME_FLOOR:
        raise DegenerateFacet(f"facet volume {vol:.3e} below {VOLUME_FLOOR:.0e}")
    return float(vol)


class PolyhedralSurface:
    """Finite union of flat ``d``-simplices in ``R^n``.

    Parameters
    ----------
    vertices : (F, d+1, n) array
        Ambient vertex coordinates of every facet.
    sig_index : int, optional
        Which of the three surfaces (1, 2 or 3) this one plays.
    frames : tuple of arrays, optional
        Precomputed ``(tangents, normals)``; used when reading files that
        carry explicit frames.
    """

    def __init__(self, vertices, sig_index=None, frames=None, parent=None):
        V = np.array(vertices, dtype=float)
        if V.ndim != 3:
            raise ValueError("vertices must have shape (F, d+1, n)")
        F, d1, n = V.shape
        d = d1 - 1
        if not 0 < d < n:
            raise ValueError(f"facet dimension {d} must lie strictly between 0 and n={n}")
        self.vertices = V
        self.sig_index = sig_index
        self.bases = V[:, 0, :].copy()
        edges = V[:, 1:, :] - V[:, :1, :]
        if frames is None:
            q, r = np.linalg.qr(np.swapaxes(edges, 1, 2), mode="complete")
            self.tangents = q[:, :, :d]
            self.normals = q[:, :, d:]
        else:
            self.tangents = np.asarray(frames[0], dtype=float).reshape(F, n, d)
            self.normals = np.asarray(frames[1], dtype=float).reshape(F, n, n - d)
        self.domains = np.einsum("fvn,fnd->fvd", V - V[:, :1, :], self.tangents)
        self.volumes = np.abs(np.linalg.det(self.domains[:, 1:, :])) / factorial(d)
        bad = np.flatnonzero(self.volumes < VOLUME_FLOOR)
        if len(bad):
            raise DegenerateFacet(f"facet {bad[0]} has volume {self.volumes[bad[0]]:.3e}")
        self.parent = None if parent is None else np.asarray(parent, dtype=int)
        for arr in (self.vertices, self.bases, self.tangents, self.normals,
                    self.domains, self.volumes):
            arr.setflags(write=False)

    @property
    def n(self):
        return self.vertices.shape[2]

    @property
    def dim(self):
        return self.vertices.shape[1] - 1

    @property
    def codim(self):
        return self.n - self.dim

    def __len__(self):
        return self.vertices.shape[0]

    @property
    def area(self):
        return float(self.volumes.sum())

    @property
    def centroids(self):
        return self.vertices.mean(axis=1)

    def facet(self, i):
        return Facet(self.bases[i], Frame(self.tangents[i]), Frame(self.normals[i]),
                     self.domains[i])

    @property
    def facets(self):
        return [self.facet(i) for i in range(len(self))]

    @classmethod
    def from_facets(cls, facets, sig_index=None):
        facets = list(facets)
        V = np.stack([f.vertices for f in facets])
        T = np.stack([np.asarray(f.tangent) for f in facets])
        N = np.stack([np.asarray(f.normal) for f in facets])
        return cls(V, sig_index, frames=(T, N))

    def mapped(self, fn):
        """Surface with every vertex sent through ``fn``; frames recomputed."""
        V = fn(self.vertices.reshape(-1, self.n)).reshape(self.vertices.shape)
        return PolyhedralSurface(V, self.sig_index, parent=self.parent)

    def translated(self, v):
        return self.mapped(lambda p: p + np.asarray(v, dtype=float))

    def rotated(self, Q):
        Q = np.asarray(Q, dtype=float)
        return self.mapped(lambda p: p @ Q.T)

    def scaled(self, lam):
        return self.mapped(lambda p: lam * p)

    def reflected(self):
        return self.mapped(lambda p: -p)

    def bounding_boxes(self):
        return self.vertices.min(axis=1), self.vertices.max(axis=1)

    # -- interchange -------------------------------------------------------
    def to_dict(self):
        facets = []
        for i in range(len(self)):
            facets.append({
                "base": self.bases[i].tolist(),
                "tangent": self.tangents[i].tolist(),
                "normal": self.normals[i].tolist(),
                "domain_vertices": self.domains[i].tolist(),
            })
        return {"n": self.n, "dim": self.dim, "facets": facets}

    @classmethod
    def from_dict(cls, doc, sig_index=None):
        n, d = int(doc["n"]), int(doc["dim"])
        facets = doc["facets"]
        if not facets:
            raise ValueError("surface has no facets")
        B = np.array([f["base"] for f in facets], dtype=float)
        T = np.array([f["tangent"] for f in facets], dtype=float).reshape(-1, n, d)
        N = np.array([f["normal"] for f in facets], dtype=float).reshape(-1, n, n - d)
        D = np.array([f["domain_vertices"] for f in facets], dtype=float).reshape(-1, d + 1, d)
        for t, nu in zip(T, N):
            Frame(np.hstack([t, nu]))
        V = B[:, None, :] + np.einsum("fvd,fnd->fvn", D, T)
        return cls(V, sig_index, frames=(T, N))

    def dumps(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def loads(cls, text, sig_index=None):
        return cls.from_dict(json.loads(text), sig_index)


@dataclass(frozen=True, eq=False)
class SurfaceDensity:
    """Nonnegative piecewise-constant density, one value per facet."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float).ravel()
        if (v < 0).any() or not np.isfinite(v).all():
            raise ValueError("density values must be finite and nonnegative")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return len(self.values)

    @classmethod
    def constant(cls, S, c=1.0):
        return cls(np.full(len(S), float(c)))

    @classmethod
    def from_function(cls, S, fn):
        """Sample ``fn`` (vectorized over points) at facet centroids."""
        return cls(np.asarray(fn(S.centroids), dtype=float))

    def pullback(self, parent):
        return SurfaceDensity(self.values[np.asarray(parent)])

    def scaled(self, c):
        return SurfaceDensity(c * self.values)

    def to_dict(self):
        return {"values": self.values.tolist()}

    @classmethod
    def from_dict(cls, doc):
        return cls(doc["values"])


def l2_norm(f, S):
    """``L^2`` norm of a density against the surface measure of ``S``."""
    if len(f) != len(S):
        raise ValueError(f"density has {len(f)} values but surface has {len(S)} facets")
    return float(np.sqrt(np.sum(f.values ** 2 * S.volumes)))


def refine(S, level=1):
    """Barycentric subdivision applied ``level`` times.

    The returned surface records in ``parent`` the index of the original
    facet every new facet came from, so densities follow with
    ``density.pullback(refined.parent)``.
    """
    if level < 1:
        raise ValueError("level must be >= 1")
    V = S.vertices
    parent = np.arange(len(S)) if S.parent is None else S.parent
    for _ in range(level):
        pieces = np.stack([barycentric_subdivision(v) for v in V])
        k = pieces.shape[1]
        V = pieces.reshape(-1, *V.shape[1:])
        parent = np.repeat(parent, k)
    return PolyhedralSurface(V, S.sig_index, parent=parent)


# -- constructors ------------------------------------------------------------

def kuhn_grid(lo, hi, cells):
    """Kuhn/Freudenthal triangulation of an axis-aligned box.

    Returns ``(points, simplices)`` with ``points`` of shape ``(P, d)`` and
    ``simplices`` integer indices of shape ``(S, d+1)``; every grid cell
    contributes ``d!`` simplices.
    """
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    d = len(lo)
    cells = np.broadcast_to(np.asarray(cells, dtype=int), (d,))
    axes = [np.linspace(lo[a], hi[a], cells[a] + 1) for a in range(d)]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    points = mesh.reshape(-1, d)
    strides = np.cumprod([1] + [c + 1 for c in cells[::-1]][:-1])[::-1]
    kuhn = kuhn_cube_simplices(d)  # (d!, d+1, d)
    origins = np.array(list(product(*[range(c) for c in cells])), dtype=int)
    idx = origins[:, None, None, :] + kuhn[None]
    simplices = (idx * strides).sum(axis=-1).reshape(-1, d + 1)
    return points, simplices


def parallelotope_surface(origin, edges, cells=1, sig_index=None):
    """Flat patch ``{origin + sum_j a_j edges[j] : a in [0,1]^d}`` meshed
    by the Kuhn rule on a ``cells^d`` grid."""
    edges = np.atleast_2d(np.asarray(edges, dtype=float))
    d = edges.shape[0]
    pts, simp = kuhn_grid(np.zeros(d), np.ones(d), cells)
    amb = np.asarray(origin, dtype=float) + pts @ edges
    return PolyhedralSurface(amb[simp], sig_index)


def graph_surface(height, lo, hi, cells, tangent, normal, base=None, sig_index=None):
    """Simplicial mesh of the graph ``p -> base + T p + N height(p)``.

    ``height`` maps parameter points ``(M, d)`` to normal offsets
    ``(M, n-d)``; ``tangent`` (``n x d``) and ``normal`` (``n x (n-d)``)
    form an orthonormal basis of ``R^n``.
    """
    T = np.asarray(tangent, dtype=float)
    N = np.asarray(normal, dtype=float)
    n = T.shape[0]
    base = np.zeros(n) if base is None else np.asarray(base, dtype=float)
    pts, simp = kuhn_grid(lo, hi, cells)
    h = np.asarray(height(pts), dtype=float).reshape(len(pts), -1)
    amb = base + pts @ T.T + h @ N.T
    return PolyhedralSurface(amb[simp], sig_index)


# -- transversality ----------------------------------------------------------

def _normal_classes(S, decimals=9):
    """Group facets by normal space; returns (representatives, labels)."""
    P = np.einsum("fnc,fmc->fnm", S.normals, S.normals).reshape(len(S), -1)
    _, first, labels = np.unique(np.round(P, decimals), axis=0,
                                 return_index=True, return_inverse=True)
    return S.normals[first], labels.ravel()


def _triple_dets(N1, N2, N3, chunk=200_000):
    """|det(N1_a, N2_b, N3_c)| for all index triples, shape (A, B, C)."""
    A, B, C = len(N1), len(N2), len(N3)
    out = np.empty((A, B, C))
    flat = out.reshape(-1)
    total = A * B * C
    for start in range(0, total, chunk):
        idx = np.arange(start, min(total, start + chunk))
        a, rem = np.divmod(idx, B * C)
        b, c = np.divmod(rem, C)
        M = np.concatenate([N1[a], N2[b], N3[c]], axis=2)
        flat[idx] = np.abs(np.linalg.det(M))
    return out


def _check_signature(S1, S2, S3):
    n = S1.n
    if S2.n != n or S3.n != n:
        raise ValueError("surfaces live in different ambient spaces")
    return DimensionSignature(n, S1.dim, S2.dim, S3.dim)


def transversality_gamma0(S1, S2, S3, floor=DET_FLOOR):
    """Minimum of ``|det(N1, N2, N3)|`` over all facet triples.

    Normals are constant on facets, so the infimum over points is exact.
    """
    _check_signature(S1, S2, S3)
    reps = [_normal_classes(S)[0] for S in (S1, S2, S3)]
    g = float(_triple_dets(*reps).min())
    if g < floor:
        raise NonTransversal(f"gamma0 = {g:.3e} below floor {floor:.1e}")
    return g


def _bary_block(S, i):
    return S.vertices[i].T  # (n, d+1)


def _boxes_meet(lo_a, hi_a, lo_b, hi_b, tol=1e-9):
    return bool(np.all(lo_a <= hi_b + tol) and np.all(lo_b <= hi_a + tol))


def _sum_candidates(S1, i, S2, S3, k):
    """Facets j of S2 whose box sum with facet i of S1 can meet facet k of S3."""
    lo1, hi1 = S1.vertices[i].min(0), S1.vertices[i].max(0)
    lo2, hi2 = S2.bounding_boxes()
    lo3, hi3 = S3.vertices[k].min(0), S3.vertices[k].max(0)
    ok = np.all(lo1 + lo2 <= hi3 + 1e-9, axis=1) & np.all(lo3 <= hi1 + hi2 + 1e-9, axis=1)
    return np.flatnonzero(ok)


def _joint_feasible(S1, S2, S3, i1, j2t, i1t, j2, k, tol=FEAS_TOL):
    """Is there z in F3 with z = x + y~ = x~ + y, x in F1, y~ in F~2, x~ in F~1, y in F2?"""
    blocks = [_bary_block(S1, i1), _bary_block(S2, j2t), _bary_block(S1, i1t),
              _bary_block(S2, j2), _bary_block(S3, k)]
    sizes = [b.shape[1] for b in blocks]
    offs = np.concatenate([[0], np.cumsum(sizes)])
    nv = offs[-1]
    n = S1.n
    A = np.zeros((2 * n + 5, nv))
    # x + y~ - z = 0
    A[:n, offs[0]:offs[1]] = blocks[0]
    A[:n, offs[1]:offs[2]] = blocks[1]
    A[:n, offs[4]:offs[5]] = -blocks[4]
    # x~ + y - z = 0
    A[n:2 * n, offs[2]:offs[3]] = blocks[2]
    A[n:2 * n, offs[3]:offs[4]] = blocks[3]
    A[n:2 * n, offs[4]:offs[5]] = -blocks[4]
    for m in range(5):
        A[2 * n + m, offs[m]:offs[m + 1]] = 1.0
    b = np.zeros(2 * n + 5)
    b[2 * n:] = 1.0
    return lp_feasible(A, b, nv, tol=tol)


def _pair_feasible(S1, S2, S3, i, j, k, tol=FEAS_TOL):
    blocks = [_bary_block(S1, i), _bary_block(S2, j), _bary_block(S3, k)]
    sizes = [b.shape[1] for b in blocks]
    offs = np.concatenate([[0], np.cumsum(sizes)])
    n = S1.n
    A = np.zeros((n + 3, offs[-1]))
    A[:n, offs[0]:offs[1]] = blocks[0]
    A[:n, offs[1]:offs[2]] = blocks[1]
    A[:n, offs[2]:offs[3]] = -blocks[2]
    for m in range(3):
        A[n + m, offs[m]:offs[m + 1]] = 1.0
    b = np.zeros(n + 3)
    b[n:] = 1.0
    return lp_feasible(A, b, offs[-1], tol=tol)


@dataclass(frozen=True)
class RefinedGamma:
    value: float
    witness: tuple  # (F1, F~1, F2, F~2, F3) facet indices attaining the minimum
    rule: str = "min |det| over (F1,F2,F3) and (F~1,F~2,F3) of feasible quadruples"


def refined_gamma0(S1, S2, S3, floor=DET_FLOOR, return_witness=False):
    """Transversality restricted to interacting facet configurations.

    The minimum of ``|det(N1, N2, N3)|`` over facet triples ``(F1, F2, F3)``
    for which some ``F~1`` in S1 and ``F~2`` in S2 make the constraint set
    ``{z in F3 : z in F1 + F~2, z in F~1 + F2}`` nonempty. The swapped
    triple ``(F~1, F~2, F3)`` satisfies the same constraints with roles
    exchanged, so one sweep covers both combinations.

    Triples are visited in increasing order of the determinant and the
    first feasible one is returned, which keeps the number of linear
    programs small.
    """
    _check_signature(S1, S2, S3)
    reps, labels = zip(*[_normal_classes(S) for S in (S1, S2, S3)])
    dets = _triple_dets(*reps)
    order = np.argsort(dets, axis=None, kind="stable")
    members = [[np.flatnonzero(lab == c) for c in range(len(r))]
               for lab, r in zip(labels, reps)]
    pair_cache = {}

    def pair_ok(i, j, k):
        key = (i, j, k)
        if key not in pair_cache:
            pair_cache[key] = _pair_feasible(S1, S2, S3, i, j, k)
        return pair_cache[key]

    rev_cache = {}

    def partners(k, i1, j2):
        key = (k, i1, j2)
        if key not in rev_cache:
            t2 = [j for j in _sum_candidates(S1, i1, S2, S3, k) if pair_ok(i1, j, k)]
            t1 = [i for i in _sum_candidates(S2, j2, S1, S3, k) if pair_ok(i, j2, k)]
            rev_cache[key] = (t2, t1)
        return rev_cache[key]

    for flat in order:
        a, b, c = np.unravel_index(flat, dets.shape)
        g = float(dets[a, b, c])
        for k in members[2][c]:
            for i1 in members[0][a]:
                for j2 in members[1][b]:
                    t2, t1 = partners(k, i1, j2)
                    if not t2 or not t1:
                        continue
                    for j2t in t2:
                        for i1t in t1:
                            if _joint_feasible(S1, S2, S3, i1, j2t, i1t, j2, k):
                                if g < floor:
                                    raise NonTransversal(
                                        f"refined gamma0 = {g:.3e} below floor {floor:.1e}")
                                res = RefinedGamma(g, (int(i1), int(i1t), int(j2), int(j2t), int(k)))
                                return res if return_witness else g
    raise EmptyInteraction("no facet quadruple satisfies x + y~ = x~ + y = z")


def check_disjoint(S, tol=1e-9):
    """Raise ``ValueError`` if two facets of ``S`` overlap in their interiors.

    Only facets sharing an affine hull can overlap in positive measure; for
    those a small LP maximizes the common barycentric margin.
    """
    P = np.einsum("fnc,fmc->fnm", S.normals, S.normals)
    lo, hi = S.bounding_boxes()
    F, d1, n = S.vertices.shape
    for i in range(F):
        for j in range(i + 1, F):
            if not _boxes_meet(lo[i], hi[i], lo[j], hi[j]):
                continue
            if np.abs(P[i] - P[j]).max() > 1e-9:
                continue
            if np.abs(S.normals[i].T @ (S.bases[j] - S.bases[i])).max() > 1e-9:
                continue
            # maximize t with lambda_i, mu_j >= t, sum = 1, V_i^T lambda = V_j^T mu
            c = np.zeros(2 * d1 + 1)
            c[-1] = -1.0
            A_eq = np.zeros((n + 2, 2 * d1 + 1))
            A_eq[:n, :d1] = S.vertices[i].T
            A_eq[:n, d1:2 * d1] = -S.vertices[j].T
            A_eq[n, :d1] = 1.0
            A_eq[n + 1, d1:2 * d1] = 1.0
            b_eq = np.zeros(n + 2)
            b_eq[n:] = 1.0
            A_ub = np.zeros((2 * d1, 2 * d1 + 1))
            A_ub[:, :2 * d1] = -np.eye(2 * d1)
            A_ub[:, -1] = 1.0
            res = linprog(c, A_ub=A_ub, b_ub=np.zeros(2 * d1), A_eq=A_eq, b_eq=b_eq,
                          bounds=[(0, None)] * (2 * d1) + [(None, 1.0)], method="highs")
            if res.status == 0 and -res.fun > tol:
                raise ValueError(f"facets {i} and {j} overlap")
