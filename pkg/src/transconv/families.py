"""Builders for the surface and map configurations used in sweeps and tests.

Every builder is deterministic given its arguments (and ``rng`` state).
"""

from __future__ import annotations

import numpy as np

from .brascamp_lieb import PiecewiseLinearMap, GridDensity, PolytopeIndicator
from .errors import SingularFrame
from .linalg import dual_basis, random_frame
from .surfaces import PolyhedralSurface, graph_surface, kuhn_grid, parallelotope_surface


def coordinate_planes(cells=1):
    """Unit squares in the three coordinate planes of R^3.

    The convolution of the first two uniform densities is identically 1 on
    the third square, so the ratio equals 1.
    """
    e = np.eye(3)
    S1 = parallelotope_surface(np.zeros(3), [e[1], e[2]], cells, sig_index=1)
    S2 = parallelotope_surface(np.array([0.0, 0.0, -1.0]), [e[0], e[2]], cells, sig_index=2)
    S3 = parallelotope_surface(np.zeros(3), [e[0], e[1]], cells, sig_index=3)
    return S1, S2, S3


def dual_basis_patches(V1, V2, V3, cells=1):
    """Flat patches spanned by the dual frames; constant densities are extremal.

    ``S1`` is spanned by the columns of ``W2, W3``, ``S2`` by ``W1, W3``
    (shifted by ``-sum W3``), ``S3`` by ``W1, W2``.
    """
    t = dual_basis(V1, V2, V3)
    W1, W2, W3 = t.W
    n = W1.shape[0]
    S1 = parallelotope_surface(np.zeros(n), np.hstack([W2, W3]).T, cells, sig_index=1)
    S2 = parallelotope_surface(-W3.sum(axis=1), np.hstack([W1, W3]).T, cells, sig_index=2)
    S3 = parallelotope_surface(np.zeros(n), np.hstack([W1, W2]).T, cells, sig_index=3)
    return (S1, S2, S3), t.gamma


def random_linear_frames(rng, sig, min_gamma=0.1, max_draws=100_000):
    """Haar-random normal frames with ``|det V| >= min_gamma`` by rejection."""
    for _ in range(max_draws):
        V1 = random_frame(rng, sig.n, sig.codims[0])
        V2 = random_frame(rng, sig.n, sig.codims[1])
        V3 = random_frame(rng, sig.n, sig.codims[2])
        g = abs(np.linalg.det(np.hstack([V1, V2, V3])))
        if g >= min_gamma:
            return V1, V2, V3
    raise SingularFrame(f"no triple with gamma >= {min_gamma} in {max_draws} draws")


def tilted_frames(gamma):
    """Normals ``e1``, ``e2`` and ``(sqrt(1-gamma^2), 0, gamma)``; ``|det| = gamma``."""
    e = np.eye(3)
    nu3 = np.array([np.sqrt(max(0.0, 1 - gamma ** 2)), 0.0, gamma])
    return e[:, :1], e[:, 1:2], nu3[:, None]


def roof_surfaces(gamma, cells=1):
    """Two-facet roof ``x = |z| tan(a)`` with ``cos(a) = gamma`` against two planes.

    Both roof faces have normals ``(cos a, 0, -+sin a)``; with the planes
    ``y = 0`` and ``z = 0`` the transversality of every triple is ``gamma``.
    """
    a = np.arccos(np.clip(gamma, 0.0, 1.0))
    t = np.tan(a)
    pts = np.array([[t, 0.0, -1.0], [0.0, 0.0, 0.0], [t, 0.0, 1.0]])
    e = np.eye(3)
    lower = parallelotope_surface(pts[1], [pts[0] - pts[1], e[1]], cells)
    upper = parallelotope_surface(pts[1], [pts[2] - pts[1], e[1]], cells)
    S1 = PolyhedralSurface(np.concatenate([lower.vertices, upper.vertices]), sig_index=1)
    S2 = parallelotope_surface(np.array([-1.0 - t, 0.0, -1.0]), [2 * e[0] * (1 + t), 2 * e[2]],
                               cells, sig_index=2)
    S3 = parallelotope_surface(np.array([-1.0 - t, 0.0, 0.0]), [2 * e[0] * (1 + t), e[1]],
                               cells, sig_index=3)
    return S1, S2, S3


def paraboloid_height(curvature):
    def h(p):
        return 0.5 * curvature * (p ** 2).sum(axis=1)
    return h


def paraboloid_scenario(level, curvature=0.5, tilt=0.3):
    """Meshed paraboloid graph as the third surface of an R^3 scenario.

    The graph of ``curvature |p|^2 / 2`` over ``[-1/2, 1/2]^2`` is meshed with
    ``2**level`` Kuhn cells per axis. The first two surfaces are flat
    squares with normals ``e1`` and ``(0, cos t, sin t)``.
    """
    e = np.eye(3)
    cells = 2 ** level
    S3 = graph_surface(paraboloid_height(curvature), [-0.5, -0.5], [0.5, 0.5], cells,
                       e[:, :2], e[:, 2:], sig_index=3)
    c, s = np.cos(tilt), np.sin(tilt)
    S1 = parallelotope_surface(np.array([0.0, -0.5, -0.5]), [e[1], e[2]], 1, sig_index=1)
    S2 = parallelotope_surface(np.array([-0.5, 0.0, 0.0]), [e[0], np.array([0.0, -s, c])], 1,
                               sig_index=2)
    return S1, S2, S3


def paraboloid_hausdorff_bound(level, curvature, lo=-0.5, hi=0.5):
    """Upper bound on the distance between the mesh and the graph.

    Linear interpolation of ``h`` on a simplex of diameter ``d`` errs by at
    most ``|D^2 h| d^2 / 8``; with ``D^2 h = curvature I`` and Kuhn cells of
    side ``s`` the diameter is ``s sqrt(2)``.
    """
    s = (hi - lo) / 2 ** level
    return abs(curvature) * 2 * s ** 2 / 8


def perturbed(S, rng, scale):
    """Move every vertex of ``S`` by a shared random field (keeps the mesh conforming)."""
    V = S.vertices.reshape(-1, S.n)
    keys, inv = np.unique(np.round(V, 12), axis=0, return_inverse=True)
    shift = scale * rng.uniform(-1, 1, size=keys.shape)
    V2 = (V + shift[inv.ravel()]).reshape(S.vertices.shape)
    return PolyhedralSurface(V2, S.sig_index)


# -- piecewise-linear map families -------------------------------------------

def random_linear_maps(rng, sig, min_gamma=0.1):
    """Full-rank matrices whose kernels form a transversal triple."""
    V = random_linear_frames(rng, sig, min_gamma)
    out = []
    for Vi, m in zip(V, sig.dims):
        Q = np.linalg.qr(np.hstack([Vi, rng.standard_normal((sig.n, m))]))[0][:, Vi.shape[1]:]
        mix = rng.standard_normal((m, m)) + 2 * np.eye(m)
        out.append(mix @ Q.T)
    return out


def bent_maps(rng, sig, cells=1, bend=0.2, min_gamma=0.1, half_width=1.0):
    """Three PL maps on a Kuhn triangulation of ``[-w, w]^n``.

    Each map is a random linear map plus a small random vertex perturbation,
    interpolated linearly on every simplex.
    """
    As = random_linear_maps(rng, sig, min_gamma)
    pts, simp = kuhn_grid(-half_width * np.ones(sig.n), half_width * np.ones(sig.n), cells)
    maps = []
    for A in As:
        vals = pts @ A.T + bend * rng.uniform(-1, 1, size=(len(pts), A.shape[0]))
        maps.append(PiecewiseLinearMap.from_vertex_values(pts, simp, vals))
    return maps


def hinge_map(sig, slope=0.5):
    """phi3 bent across ``x_1 = 0``; phi1, phi2 are coordinate projections."""
    n = sig.n
    pts, simp = kuhn_grid(-np.ones(n), np.ones(n), 2)
    e = np.eye(n)
    maps = []
    for i, m in enumerate(sig.dims):
        A = e[[k for k in range(n) if k not in _dropped(sig, i)]][:m]
        vals = pts @ A.T
        if i == 2:
            vals = vals.copy()
            vals[:, -1] += slope * np.abs(pts[:, 0])
        maps.append(PiecewiseLinearMap.from_vertex_values(pts, simp, vals))
    return maps


def _dropped(sig, i):
    c = sig.codims
    start = sum(c[:i])
    return list(range(start, start + c[i]))


def random_grid_density(rng, dim, lo, hi, shape=4):
    lo, hi = np.asarray(lo, float), np.asarray(hi, float)
    spacing = (hi - lo) / shape
    vals = rng.uniform(0.0, 1.0, size=(shape,) * dim)
    return GridDensity(lo, spacing, vals)


def random_box_indicator(rng, lo, hi):
    lo, hi = np.asarray(lo, float), np.asarray(hi, float)
    a = rng.uniform(lo, hi)
    b = rng.uniform(lo, hi)
    return PolytopeIndicator.box(np.minimum(a, b), np.maximum(a, b) + 1e-3)


def image_box(phi):
    img = phi.images().reshape(-1, phi.target_dim)
    return img.min(axis=0), img.max(axis=0)
