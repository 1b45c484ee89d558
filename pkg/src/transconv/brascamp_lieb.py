"""Piecewise-linear Brascamp-Lieb functionals and their verification.

Three continuous piecewise-linear submersions ``phi_i : R^n -> R^{n_i}``
share one simplicial complex; on every cell each map is affine. All
geometric weights are then constant per cell (or per pair of cells), so
suprema and infima over points reduce to finite sweeps.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np

from .errors import NonSpanning, NonTransversal, NotConverged, RankDeficient
from .linalg import (DET_FLOOR, RANK_TOL, DimensionSignature, gramian_stack,
                     null_frames_stack, random_frame)
from .polytope import (edgewise_centroids, halfspace_volume,
                       simplices_intersect)
from .surfaces import kuhn_grid


# -- maps --------------------------------------------------------------------

class PiecewiseLinearMap:
    """Continuous map, affine on every cell of a simplicial complex.

    ``cells`` has shape ``(C, n+1, n)``; ``A`` is ``(C, m, n)`` and ``b``
    is ``(C, m)`` so that ``phi(x) = A[c] @ x + b[c]`` on cell ``c``.
    """

    def __init__(self, cells, A, b, check=True):
        self.cells = np.array(cells, dtype=float)
        self.A = np.array(A, dtype=float)
        self.b = np.array(b, dtype=float)
        C, n1, n = self.cells.shape
        if n1 != n + 1 or self.A.shape[0] != C or self.A.shape[2] != n:
            raise ValueError("inconsistent cell / matrix shapes")
        if check:
            self.validate()

    @property
    def n(self):
        return self.cells.shape[2]

    @property
    def target_dim(self):
        return self.A.shape[1]

    def __len__(self):
        return self.cells.shape[0]

    @classmethod
    def from_vertex_values(cls, points, simplices, values):
        """Interpolate values given at the vertices of a triangulation."""
        points = np.asarray(points, dtype=float)
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        cells = points[simplices]
        vals = values[simplices]  # (C, n+1, m)
        n = points.shape[1]
        M = np.ones((len(cells), n + 1, n + 1))
        M[:, :, :n] = cells
        coef = np.linalg.solve(M, vals)  # (C, n+1, m): rows = [A^T; b]
        A = np.swapaxes(coef[:, :n, :], 1, 2)
        b = coef[:, n, :]
        return cls(cells, A, b)

    @classmethod
    def linear(cls, cells, A, b=None):
        cells = np.asarray(cells, dtype=float)
        A = np.asarray(A, dtype=float)
        b = np.zeros(A.shape[0]) if b is None else np.asarray(b, dtype=float)
        C = len(cells)
        return cls(cells, np.broadcast_to(A, (C,) + A.shape), np.broadcast_to(b, (C,) + b.shape))

    def validate(self, tol=1e-9):
        s = np.linalg.svd(self.A, compute_uv=False)
        if (s[:, -1] <= RANK_TOL * np.maximum(1.0, s[:, 0])).any():
            raise RankDeficient("a cell matrix does not have full rank")
        keys = np.round(self.cells.reshape(-1, self.n), 9)
        vals = self.images().reshape(-1, self.target_dim)
        _, inv = np.unique(keys, axis=0, return_inverse=True)
        inv = inv.ravel()
        lo = np.full((inv.max() + 1, self.target_dim), np.inf)
        hi = np.full((inv.max() + 1, self.target_dim), -np.inf)
        np.minimum.at(lo, inv, vals)
        np.maximum.at(hi, inv, vals)
        gap = (hi - lo).max()
        if gap > tol * max(1.0, np.abs(vals).max()):
            raise ValueError(f"map is discontinuous across cells (jump {gap:.2e})")

    def images(self):
        """Images of the cell vertices, ``(C, n+1, m)``."""
        return np.einsum("cmn,cvn->cvm", self.A, self.cells) + self.b[:, None, :]

    def __call__(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        cell = locate_cells(self.cells, x)
        if (cell < 0).any():
            raise ValueError("point outside the complex")
        return np.einsum("pmn,pn->pm", self.A[cell], x) + self.b[cell]

    def precomposed(self, Q):
        """``x -> phi(Q x)`` for an orthogonal ``Q``; the complex is pulled back."""
        Q = np.asarray(Q, dtype=float)
        cells = self.cells @ Q  # rows: Q^T v
        return PiecewiseLinearMap(cells, self.A @ Q, self.b, check=False)

    def to_dict(self):
        return {"n": self.n, "target_dim": self.target_dim,
                "cells": [{"vertices": v.tolist(), "A": a.tolist(), "b": bb.tolist()}
                          for v, a, bb in zip(self.cells, self.A, self.b)]}

    @classmethod
    def from_dict(cls, doc):
        cells = doc["cells"]
        n, m = int(doc["n"]), int(doc["target_dim"])
        V = np.array([c["vertices"] for c in cells], dtype=float).reshape(-1, n + 1, n)
        A = np.array([c["A"] for c in cells], dtype=float).reshape(-1, m, n)
        b = np.array([c["b"] for c in cells], dtype=float).reshape(-1, m)
        return cls(V, A, b)


def locate_cells(cells, x, tol=1e-12):
    """Index of a cell containing each point (``-1`` if none)."""
    n = cells.shape[2]
    M = np.ones((len(cells), n + 1, n + 1))
    M[:, :n, :] = np.swapaxes(cells, 1, 2)
    B = np.linalg.inv(M)
    lam = np.einsum("cvn,pn->pcv", B[:, :, :n], x) + B[None, :, :, n]
    inside = (lam >= -tol).all(axis=2)
    out = np.where(inside.any(axis=1), inside.argmax(axis=1), -1)
    return out


def _shared_complex(*maps):
    ref = maps[0].cells
    for m in maps[1:]:
        if m.cells.shape != ref.shape or np.abs(m.cells - ref).max() > 1e-12:
            raise ValueError("maps must share one simplicial complex")
    return ref


def _signature(phi1, phi2, phi3):
    return DimensionSignature(phi1.n, phi1.target_dim, phi2.target_dim, phi3.target_dim)


# -- densities on the image spaces -------------------------------------------

@dataclass(frozen=True, eq=False)
class GridDensity:
    """Piecewise-constant function on an axis-aligned grid (zero outside)."""

    origin: np.ndarray
    spacing: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "origin", np.atleast_1d(np.asarray(self.origin, float)))
        object.__setattr__(self, "spacing", np.atleast_1d(np.asarray(self.spacing, float)))
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != len(self.origin) or (vals < 0).any():
            raise ValueError("grid values must be nonnegative with one axis per dimension")
        object.__setattr__(self, "values", vals)

    @property
    def dim(self):
        return len(self.origin)

    def __call__(self, y):
        y = np.atleast_2d(y)
        idx = np.floor((y - self.origin) / self.spacing).astype(int)
        shape = np.array(self.values.shape)
        inside = ((idx >= 0) & (idx < shape)).all(axis=1)
        out = np.zeros(len(y))
        out[inside] = self.values[tuple(idx[inside].T)]
        return out

    def l2_norm(self):
        return float(np.sqrt((self.values ** 2).sum() * np.prod(self.spacing)))

    def to_dict(self):
        return {"origin": self.origin.tolist(), "spacing": self.spacing.tolist(),
                "shape": list(self.values.shape), "values": self.values.ravel().tolist()}

    @classmethod
    def from_dict(cls, doc):
        vals = np.array(doc["values"], dtype=float).reshape(doc["shape"])
        return cls(doc["origin"], doc["spacing"], vals)


@dataclass(frozen=True, eq=False)
class PolytopeIndicator:
    """Indicator of the bounded polytope ``{y : G y <= h}``."""

    G: np.ndarray
    h: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "G", np.atleast_2d(np.asarray(self.G, float)))
        object.__setattr__(self, "h", np.asarray(self.h, float).ravel())

    @property
    def dim(self):
        return self.G.shape[1]

    @classmethod
    def box(cls, lo, hi):
        lo, hi = np.atleast_1d(lo).astype(float), np.atleast_1d(hi).astype(float)
        d = len(lo)
        return cls(np.vstack([np.eye(d), -np.eye(d)]), np.concatenate([hi, -lo]))

    @classmethod
    def parallelepiped(cls, origin, edges):
        """``{origin + E^T a : a in [0,1]^d}`` with edge vectors as rows of ``E``."""
        E = np.atleast_2d(np.asarray(edges, float))
        Minv = np.linalg.inv(E.T)
        o = Minv @ np.asarray(origin, float)
        d = E.shape[0]
        return cls(np.vstack([Minv, -Minv]), np.concatenate([np.ones(d) + o, -o]))

    def __call__(self, y):
        y = np.atleast_2d(y)
        scale = 1.0 + np.abs(self.h).max()
        return ((y @ self.G.T - self.h) <= 1e-12 * scale).all(axis=1).astype(float)

    def volume(self):
        return halfspace_volume(self.G, self.h)

    def l2_norm(self):
        return float(np.sqrt(self.volume()))

    def to_dict(self):
        return {"G": self.G.tolist(), "h": self.h.tolist()}

    @classmethod
    def from_dict(cls, doc):
        return cls(doc["G"], doc["h"])


def density_from_dict(doc):
    if "G" in doc:
        return PolytopeIndicator.from_dict(doc)
    return GridDensity.from_dict(doc)


# -- weights -----------------------------------------------------------------

def rho_weights(phi3, sig):
    """Per-cell ``(rho1, rho2)`` from the singular values of ``D phi3``.

    ``rho1 = |A3|^{-(n-n2)/n3} prod_{j > n-n2} sigma_j`` and
    ``rho2 = |A3|^{-(n-n1)/n3} prod_{j > n-n1} sigma_j`` with ascending
    singular values; both are evaluated on the cell's own matrix.
    """
    n, n1, n2, n3 = sig.n, sig.n1, sig.n2, sig.n3
    if phi3.target_dim != n3:
        raise ValueError("phi3 target dimension does not match the signature")
    s = np.sort(np.linalg.svd(phi3.A, compute_uv=False), axis=1)
    if (s[:, 0] <= RANK_TOL * np.maximum(1.0, s[:, -1])).any():
        raise RankDeficient("D phi3 is rank deficient on some cell")
    vol = np.prod(s, axis=1)
    rho1 = vol ** (-(n - n2) / n3) * np.prod(s[:, n - n2:], axis=1)
    rho2 = vol ** (-(n - n1) / n3) * np.prod(s[:, n - n1:], axis=1)
    return rho1, rho2


def fiber_pairs(phi3, tol=1e-9):
    """Ordered cell pairs ``(c, c')`` whose images under ``phi3`` intersect."""
    img = phi3.images()
    lo, hi = img.min(axis=1), img.max(axis=1)
    C = len(img)
    pairs = [(c, c) for c in range(C)]
    for c in range(C):
        ok = np.all(lo[c] <= hi + tol, axis=1) & np.all(lo <= hi[c] + tol, axis=1)
        for d in np.flatnonzero(ok[c + 1:]) + c + 1:
            if simplices_intersect(img[c], img[d], tol):
                pairs += [(c, int(d)), (int(d), c)]
    pairs.sort()
    return np.array(pairs, dtype=int).reshape(-1, 2)


def rho_sup(phi3, sig, pairs=None):
    r1, r2 = rho_weights(phi3, sig)
    pairs = fiber_pairs(phi3) if pairs is None else pairs
    return float(np.max(r1[pairs[:, 0]] * r2[pairs[:, 1]]))


@dataclass(frozen=True)
class TransversalityWeights:
    rho1: np.ndarray
    rho2: np.ndarray
    rho: float
    gamma0_bl: float
    certified: bool
    pairs: np.ndarray


@dataclass(frozen=True)
class Gamma0Result:
    value: float
    certified: bool
    pair: tuple
    per_pair: np.ndarray
    upper: np.ndarray
    method: str


def _complement_stack(N):
    """Orthonormal complements of a stack of frames ``(P, n, c)``."""
    c = N.shape[2]
    q, _ = np.linalg.qr(N, mode="complete")
    return q[:, :, c:]


def _rot2(theta, reflect):
    c, s = np.cos(theta), np.sin(theta)
    if reflect:
        return np.array([[c, s], [s, -c]])
    return np.array([[c, -s], [s, c]])


def _search_2d(B, Cm, resolution):
    """max over R in O(2) of |det([R b, c])| for stacks of 2-vectors b, c."""
    b = B[:, :, 0]
    c = Cm[:, :, 0]
    theta = np.arange(0.0, 2 * np.pi, resolution)
    ct, st = np.cos(theta), np.sin(theta)
    best = np.empty(len(b))
    for p in range(len(b)):
        # rotation: R b = (ct b0 - st b1, st b0 + ct b1); reflection: (ct b0 + st b1, st b0 - ct b1)
        vals = []
        args = []
        for sgn in (1.0, -1.0):
            rb0 = ct * b[p, 0] - sgn * st * b[p, 1]
            rb1 = st * b[p, 0] + sgn * ct * b[p, 1]
            f = np.abs(rb0 * c[p, 1] - rb1 * c[p, 0])
            m = int(np.argmax(f))
            vals.append(f[m])
            args.append((theta[m], sgn))
        k = int(np.argmax(vals))
        t0, sgn = args[k]

        def g(t, sgn=sgn, p=p):
            rb0 = np.cos(t) * b[p, 0] - sgn * np.sin(t) * b[p, 1]
            rb1 = np.sin(t) * b[p, 0] + sgn * np.cos(t) * b[p, 1]
            return abs(rb0 * c[p, 1] - rb1 * c[p, 0])

        best[p] = max(vals[k], _golden_max(g, t0 - resolution, t0 + resolution))
    return best


def _golden_max(g, a, b, iters=80):
    phi = (np.sqrt(5.0) - 1) / 2
    x1, x2 = b - phi * (b - a), a + phi * (b - a)
    g1, g2 = g(x1), g(x2)
    for _ in range(iters):
        if g1 < g2:
            a, x1, g1 = x1, x2, g2
            x2 = a + phi * (b - a)
            g2 = g(x2)
        else:
            b, x2, g2 = x2, x1, g1
            x1 = b - phi * (b - a)
            g1 = g(x1)
    return max(g1, g2)


def _ascent(B, Cm, upper, rng, restarts, steps=300, lr=0.2):
    """Projected gradient ascent of log|det([R B, C])| over O(n3).

    Restarts stop early once the Hadamard upper bound is reached, since
    no orthogonal ``R`` can do better.
    """
    P, n3, c1 = B.shape
    best = np.zeros(P)
    for p in range(P):
        target = upper[p] * (1 - 1e-12)
        for _ in range(restarts):
            R = random_frame(rng, n3, n3)
            prev = 0.0
            for _ in range(steps):
                M = np.hstack([R @ B[p], Cm[p]])
                det = abs(np.linalg.det(M))
                best[p] = max(best[p], det)
                if det < 1e-300:
                    R = random_frame(rng, n3, n3)
                    continue
                if det >= target or det - prev <= 1e-15 * det:
                    break
                prev = det
                G = np.linalg.inv(M)[:c1, :].T @ B[p].T
                u, _, vt = np.linalg.svd(R + lr * G)
                R = u @ vt
            if best[p] >= target:
                break
    return best


def gamma0_bl(phi1, phi2, phi3, sig=None, resolution=1e-4, restarts=64, seed=0,
              floor=DET_FLOOR, pairs=None):
    """Transversality of the three kernel fields along the fibres of ``phi3``.

    For every pair of cells whose ``phi3``-images meet, the orthogonal maps
    ``O`` with ``O N3(x) = N3(y)`` are written as ``[N3(y), M_y R][N3(x),
    M_x]^T`` with ``R`` in ``O(n3)``; ``|det(O N1(x), N2(y), N3(y))|``
    reduces to ``|det([R B, C])|`` with ``B = M_x^T N1(x)`` and ``C = M_y^T
    N2(y)``. The inner supremum is found by an angle grid plus golden
    section polish when ``n3 == 2`` and by random-restart projected ascent
    otherwise. Hadamard's inequality gives ``vol(B) vol(C)`` as an upper
    bound; a pair counts as certified when the search reaches it.
    """
    _shared_complex(phi1, phi2, phi3)
    sig = _signature(phi1, phi2, phi3) if sig is None else sig
    n3 = sig.n3
    N1 = null_frames_stack(phi1.A)
    N2 = null_frames_stack(phi2.A)
    N3 = null_frames_stack(phi3.A)
    span = np.abs(np.linalg.det(np.concatenate([N1, N2, N3], axis=2)))
    if (span < floor).any():
        raise NonSpanning(f"kernels fail to span R^n on cell {int(np.argmin(span))}")
    pairs = fiber_pairs(phi3) if pairs is None else pairs
    x, y = pairs[:, 0], pairs[:, 1]
    Mx = _complement_stack(N3[x])
    My = _complement_stack(N3[y])
    B = np.einsum("pnk,pnc->pkc", Mx, N1[x])
    Cm = np.einsum("pnk,pnc->pkc", My, N2[y])
    upper = gramian_stack(np.swapaxes(B, 1, 2)) * gramian_stack(np.swapaxes(Cm, 1, 2))
    # identical (B, C) data recur across pairs of a linear map; solve each once
    key = np.round(np.concatenate([np.abs(np.einsum("pkc,pkd->pcd", B, B)).reshape(len(B), -1),
                                   np.abs(np.einsum("pkc,pkd->pcd", Cm, Cm)).reshape(len(B), -1),
                                   np.abs(np.einsum("pkc,pkd->pcd", B, Cm)).reshape(len(B), -1)],
                                  axis=1), 12)
    _, first, inv = np.unique(key, axis=0, return_index=True, return_inverse=True)
    inv = inv.ravel()
    if n3 == 2:
        vals = _search_2d(B[first], Cm[first], resolution)
        method = "grid"
    else:
        vals = _ascent(B[first], Cm[first], upper[first], np.random.default_rng(seed), restarts)
        method = "ascent"
    per_pair = vals[inv]
    certified = bool((per_pair >= upper * (1 - 1e-8)).all())
    k = int(np.argmin(per_pair))
    g = float(per_pair[k])
    if g < floor:
        raise NonTransversal(f"gamma0 = {g:.3e} below floor {floor:.1e}")
    return Gamma0Result(g, certified, (int(x[k]), int(y[k])), per_pair, upper, method)


def transversality_weights(phi1, phi2, phi3, **kw):
    sig = _signature(phi1, phi2, phi3)
    pairs = fiber_pairs(phi3)
    r1, r2 = rho_weights(phi3, sig)
    g = gamma0_bl(phi1, phi2, phi3, sig, pairs=pairs, **kw)
    rho = float(np.max(r1[pairs[:, 0]] * r2[pairs[:, 1]]))
    return TransversalityWeights(r1, r2, rho, g.value, g.certified, pairs)


# -- integrals ---------------------------------------------------------------

def cell_weights(phi1, phi2, phi3):
    """``(|A1| |A2| |A3|)^{1/2}`` per cell."""
    return np.sqrt(gramian_stack(phi1.A) * gramian_stack(phi2.A) * gramian_stack(phi3.A))


def _cell_halfspaces(cell):
    n = cell.shape[1]
    M = np.ones((n + 1, n + 1))
    M[:n, :] = cell.T
    B = np.linalg.inv(M)
    return -B[:, :n], B[:, n]


@dataclass(frozen=True)
class IntegralResult:
    value: float
    coarse: float | None
    level: int | None
    exact: bool


def bl_integral(f1, f2, f3, phi1, phi2, phi3, level=3, tol=1e-2):
    """``int (|Dphi1||Dphi2||Dphi3|)^{1/2} f1(phi1) f2(phi2) f3(phi3) dx`` over the complex.

    When every density is a :class:`PolytopeIndicator` the integral is a
    sum of exact polytope volumes. Otherwise composite midpoint quadrature
    is used on each cell at ``level`` and ``level + 1``, and
    :class:`NotConverged` is raised when they differ by more than ``tol``.
    """
    cells = _shared_complex(phi1, phi2, phi3)
    w = cell_weights(phi1, phi2, phi3)
    fs, phis = (f1, f2, f3), (phi1, phi2, phi3)
    if all(isinstance(f, PolytopeIndicator) for f in fs):
        total = 0.0
        for c in range(len(cells)):
            G0, h0 = _cell_halfspaces(cells[c])
            Gs, hs = [G0], [h0]
            for f, phi in zip(fs, phis):
                Gs.append(f.G @ phi.A[c])
                hs.append(f.h - f.G @ phi.b[c])
            total += w[c] * halfspace_volume(np.vstack(Gs), np.concatenate(hs))
        return IntegralResult(float(total), None, None, True)
    vals = []
    for lev in (level, level + 1):
        vals.append(_quadrature(fs, phis, cells, w, lev))
    coarse, fine = vals
    if fine or coarse:
        rel = abs(fine - coarse) / max(abs(fine), 1e-300)
        if rel > tol:
            raise NotConverged(f"levels {level} and {level + 1} differ by {rel:.2e}",
                               coarse=coarse, fine=fine)
    return IntegralResult(float(fine), float(coarse), level, False)


def _quadrature(fs, phis, cells, w, level):
    n = cells.shape[2]
    lam = edgewise_centroids(n, 2 ** level)
    vol = np.abs(np.linalg.det(cells[:, 1:] - cells[:, :1])) / factorial(n)
    total = 0.0
    for c in range(len(cells)):
        x = lam @ cells[c]
        prod = np.ones(len(x))
        for f, phi in zip(fs, phis):
            prod *= f(x @ phi.A[c].T + phi.b[c])
        total += w[c] * vol[c] / len(lam) * prod.sum()
    return total


# -- verification ------------------------------------------------------------

@dataclass
class BLReport:
    lhs: float
    rhs: float
    norms: list
    gamma: float | None
    rho: float | None
    gamma0: float | None
    gamma0_certified: bool | None
    constant: float
    linear_constant: float | None
    tolerance: float
    passed: bool
    equality_gap: float | None = None
    exact: bool = True

    def to_dict(self):
        return dict(self.__dict__)


def linear_gamma(A1, A2, A3):
    """``|det(V1, V2, V3)|`` for orthonormal kernel frames of the three matrices."""
    V = np.hstack([null_frames_stack(np.asarray(A)[None])[0] for A in (A1, A2, A3)])
    return float(abs(np.linalg.det(V)))


def dual_parallelepipeds(A1, A2, A3):
    """Images ``P_i = A_i P`` of the parallelepiped spanned by the kernel frames.

    Returns the three indicators and ``gamma = vol(P)``.
    """
    As = [np.asarray(A, dtype=float) for A in (A1, A2, A3)]
    Vs = [null_frames_stack(A[None])[0] for A in As]
    gamma = float(abs(np.linalg.det(np.hstack(Vs))))
    out = []
    for i, A in enumerate(As):
        others = np.hstack([Vs[j] for j in range(3) if j != i])
        E = (A @ others).T  # rows: images of the other kernel vectors
        out.append(PolytopeIndicator.parallelepiped(np.zeros(A.shape[0]), E))
    return out, gamma


def _linear_integral_exact(As, fs):
    Gs = [f.G @ A for f, A in zip(fs, As)]
    hs = [f.h for f in fs]
    return halfspace_volume(np.vstack(Gs), np.concatenate(hs))


def _support_box(As, fs):
    """Bounding box of ``{x : A_i x in supp f_i}`` from each density's box."""
    Gs, hs = [], []
    for A, f in zip(As, fs):
        if isinstance(f, GridDensity):
            lo = f.origin
            hi = f.origin + f.spacing * np.array(f.values.shape)
            box = PolytopeIndicator.box(lo, hi)
        else:
            box = f
        Gs.append(box.G @ A)
        hs.append(box.h)
    from .polytope import polytope_vertices
    verts = polytope_vertices(np.vstack(Gs), np.concatenate(hs))
    if len(verts) == 0:
        return None
    return verts.min(axis=0), verts.max(axis=0)


def box_complex(lo, hi, cells=1):
    pts, simp = kuhn_grid(lo, hi, cells)
    return pts[simp]


def verify_prop3(A1, A2, A3, f1=None, f2=None, f3=None, tol=1e-8, level=4, quad_tol=1e-2):
    """Linear Brascamp-Lieb inequality with constant ``gamma^{-1/2}``.

    Without densities, the extremal indicators of the dual parallelepipeds
    are used and the relative equality gap is reported. Polytope indicators
    are integrated exactly; grid densities by quadrature over a Kuhn
    triangulation of the support's bounding box.
    """
    As = [np.asarray(A, dtype=float) for A in (A1, A2, A3)]
    n = As[0].shape[1]
    DimensionSignature(n, *(A.shape[0] for A in As))
    for A in As:
        s = np.linalg.svd(A, compute_uv=False)
        if s[-1] <= RANK_TOL * max(1.0, s[0]):
            raise RankDeficient("a linear map does not have maximal rank")
    equality = f1 is None
    if equality:
        (f1, f2, f3), gamma = dual_parallelepipeds(*As)
        if gamma < DET_FLOOR:
            from .errors import SingularFrame
            raise SingularFrame(f"kernel frames are degenerate (gamma = {gamma:.2e})")
    else:
        gamma = linear_gamma(*As)
    fs = (f1, f2, f3)
    weight = float(np.prod([np.sqrt(gramian_stack(A[None])[0]) for A in As]))
    exact = all(isinstance(f, PolytopeIndicator) for f in fs)
    if exact:
        integral = _linear_integral_exact(As, fs)
    else:
        box = _support_box(As, fs)
        if box is None:
            integral = 0.0
        else:
            cells = box_complex(box[0], box[1], 1)
            phis = [PiecewiseLinearMap.linear(cells, A) for A in As]
            integral = bl_integral(*fs, *phis, level=level, tol=quad_tol).value
    lhs = weight * integral
    norms = [f.l2_norm() for f in fs]
    rhs = gamma ** -0.5 * float(np.prod(norms))
    gap = abs(lhs - rhs) / rhs if equality else None
    passed = bool(lhs <= rhs * (1 + tol)) and (gap is None or gap <= tol)
    return BLReport(lhs=float(lhs), rhs=float(rhs), norms=norms, gamma=gamma, rho=None,
                    gamma0=None, gamma0_certified=None, constant=gamma ** -0.5,
                    linear_constant=gamma ** -0.5, tolerance=tol, passed=passed,
                    equality_gap=gap, exact=exact)


def verify_theorem2(phi1, phi2, phi3, f1, f2, f3, level=3, tol=1e-2, quad_tol=1e-2, **kw):
    """Compare the weighted integral with ``sqrt(rho / gamma0) prod ||f_i||``."""
    tw = transversality_weights(phi1, phi2, phi3, **kw)
    integral = bl_integral(f1, f2, f3, phi1, phi2, phi3, level=level, tol=quad_tol)
    norms = [f.l2_norm() for f in (f1, f2, f3)]
    const = float(np.sqrt(tw.rho / tw.gamma0_bl))
    rhs = const * float(np.prod(norms))
    lin_g = lin_c = None
    if _is_linear(phi1, phi2, phi3):
        lin_g = linear_gamma(phi1.A[0], phi2.A[0], phi3.A[0])
        lin_c = lin_g ** -0.5
    return BLReport(lhs=integral.value, rhs=rhs, norms=norms, gamma=lin_g, rho=tw.rho,
                    gamma0=tw.gamma0_bl, gamma0_certified=tw.certified, constant=const,
                    linear_constant=lin_c, tolerance=tol,
                    passed=bool(integral.value <= rhs * (1 + tol)), exact=integral.exact)


def _is_linear(*maps):
    return all(np.abs(m.A - m.A[0]).max() < 1e-12 and np.abs(m.b - m.b[0]).max() < 1e-12
               for m in maps)
