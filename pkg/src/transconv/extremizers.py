"""Search for near-extremal density pairs of the discretized convolution ratio.

With facet-wise constant densities the squared quadrature norm of
``f1 * f2`` on the nodes of ``S3`` is

    sum_k ( sum_{i,j} T[i, j, k] f1[i] f2[j] )^2,

where ``T`` folds the fiber coefficient and the square root of the node
weight together. Rescaling ``g = f sqrt(area)`` turns the ratio into the
norm of a bilinear map on unit vectors, which is maximized by alternating
top singular vector steps.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .convolution import fiber_table, midpoint_nodes
from .errors import NonTransversal, NotConverged, SingularFrame, Stagnated
from .families import dual_basis_patches, roof_surfaces, tilted_frames
from .surfaces import _check_signature, transversality_gamma0


@dataclass(frozen=True, eq=False)
class DiscretizedOperator:
    """Sparse nonnegative tensor ``T[i, j, k]`` in coordinate form."""

    i: np.ndarray
    j: np.ndarray
    k: np.ndarray
    value: np.ndarray
    shape: tuple
    vol1: np.ndarray
    vol2: np.ndarray
    level: int
    gamma0: float

    @property
    def nnz(self):
        return len(self.value)

    def contract(self, f1, f2):
        """Node values ``sum_{ij} T[i, j, k] f1[i] f2[j]``."""
        f1 = np.asarray(getattr(f1, "values", f1), dtype=float)
        f2 = np.asarray(getattr(f2, "values", f2), dtype=float)
        return np.bincount(self.k, weights=self.value * f1[self.i] * f2[self.j],
                           minlength=self.shape[2])

    def quadratic_form(self, f1, f2):
        """``||f1 * f2||^2`` under the quadrature the tensor was built with."""
        v = self.contract(f1, f2)
        return float(v @ v)

    def ratio(self, f1, f2):
        f1 = np.asarray(getattr(f1, "values", f1), dtype=float)
        f2 = np.asarray(getattr(f2, "values", f2), dtype=float)
        den = np.sqrt((self.vol1 * f1 ** 2).sum() * (self.vol2 * f2 ** 2).sum())
        return float(np.sqrt(self.quadratic_form(f1, f2)) / den) if den > 0 else 0.0


def discretize(S1, S2, S3, level=3, threads=None):
    """Tensor whose contraction reproduces the ``level`` quadrature of ``||f1 * f2||^2``."""
    _check_signature(S1, S2, S3)
    try:
        g0 = transversality_gamma0(S1, S2, S3)
    except NonTransversal:
        g0 = 0.0
    nodes = midpoint_nodes(S3, level)
    table = fiber_table(S1, S2, nodes.points, threads)
    val = table.coef * np.sqrt(nodes.weights[table.k])
    keep = val > 0
    return DiscretizedOperator(table.i[keep], table.j[keep], table.k[keep], val[keep],
                               (len(S1), len(S2), len(nodes.weights)), np.asarray(S1.volumes),
                               np.asarray(S2.volumes), level, g0)


@dataclass
class ExtremizerCertificate:
    f1: np.ndarray
    f2: np.ndarray
    achieved_ratio: float
    gamma0: float
    bound_half: float
    bound_three_halves: float
    iterations: int
    converged: bool
    history: list = field(default_factory=list)

    @property
    def certified(self):
        return self.converged and self.achieved_ratio <= self.bound_three_halves * (1 + 1e-6)


def _top_right_vector(M, start):
    """Unit top right singular vector of a sparse nonnegative ``M`` and its norm."""
    G = (M.T @ M).tocsr()
    m = G.shape[0]
    if m <= 1500:
        w, v = np.linalg.eigh(G.toarray())
        x = np.abs(v[:, -1])
        return x, float(np.sqrt(max(w[-1], 0.0)))
    # Perron iteration from the current (positive) iterate
    x = start / np.linalg.norm(start)
    lam = 0.0
    for _ in range(2000):
        y = G @ x
        nrm = np.linalg.norm(y)
        if nrm == 0:
            return x, 0.0
        y /= nrm
        if np.abs(y - x).max() < 1e-14:
            x = y
            break
        x = y
    lam = float(x @ (G @ x))
    return x, float(np.sqrt(max(lam, 0.0)))


def power_iterate(T, seed=0, max_iter=10_000, tol=1e-8):
    """Alternating maximization of ``||T(g1, g2)||`` over unit ``g1, g2 >= 0``.

    Each half-step replaces one factor by the top singular vector of the
    matrix obtained by fixing the other, so the ratio never decreases
    (checked every step). Returns densities normalized to unit ``L^2`` norm.
    """
    n1, n2, _ = T.shape
    if T.nnz == 0:
        raise Stagnated("zero tensor: no interacting facet pairs",
                        ExtremizerCertificate(np.zeros(n1), np.zeros(n2), 0.0, T.gamma0,
                                              _pow(T.gamma0, -0.5), _pow(T.gamma0, -1.5), 0, False))
    rng = np.random.default_rng(seed)
    s1, s2 = np.sqrt(T.vol1), np.sqrt(T.vol2)
    scaled = T.value / (s1[T.i] * s2[T.j])
    g1 = rng.uniform(0.5, 1.5, n1)
    g2 = rng.uniform(0.5, 1.5, n2)
    g1 /= np.linalg.norm(g1)
    g2 /= np.linalg.norm(g2)
    ratio = 0.0
    history = []
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        M1 = sparse.coo_matrix((scaled * g2[T.j], (T.k, T.i)), shape=(T.shape[2], n1))
        g1, r_half = _top_right_vector(M1, g1)
        M2 = sparse.coo_matrix((scaled * g1[T.i], (T.k, T.j)), shape=(T.shape[2], n2))
        g2, r_new = _top_right_vector(M2, g2)
        if r_new < ratio * (1 - 1e-12) or r_half < ratio * (1 - 1e-12):
            raise AssertionError(f"ratio decreased from {ratio} to {r_new}")
        history.append(r_new)
        if ratio > 0 and (r_new - ratio) <= tol * r_new:
            ratio = r_new
            converged = True
            break
        ratio = r_new
    cert = ExtremizerCertificate(g1 / s1, g2 / s2, ratio, T.gamma0, _pow(T.gamma0, -0.5),
                                 _pow(T.gamma0, -1.5), it, converged, history)
    if not converged:
        raise Stagnated(f"no convergence after {max_iter} iterations", cert)
    return cert


def _pow(g, e):
    return float(g ** e) if g > 0 else float("inf")


# -- sweeps -------------------------------------------------------------------

SWEEP_COLUMNS = ["gamma0", "ratio", "bound_half", "bound_three_halves", "converged",
                 "iterations", "level", "status"]


def linear_family(gamma, cells=2):
    """Dual-basis patches for the normals ``e1, e2, (sqrt(1-g^2), 0, g)``."""
    (S1, S2, S3), _ = dual_basis_patches(*tilted_frames(gamma), cells=cells)
    return S1, S2, S3


def roof_family(gamma, cells=2):
    return roof_surfaces(gamma, cells)


FAMILIES = {"linear": linear_family, "roof": roof_family}


def constant_sweep(family, gamma_grid, level=3, cells=2, seed=0, max_iter=10_000, tol=1e-8):
    """Extremal ratio per grid value; failures become flagged rows.

    Returns a list of row dicts with the keys of :data:`SWEEP_COLUMNS`.
    """
    build = FAMILIES[family] if isinstance(family, str) else family
    rows = []
    for g in gamma_grid:
        row = dict(gamma0=float(g), ratio=float("nan"), bound_half=_pow(g, -0.5),
                   bound_three_halves=_pow(g, -1.5), converged=False, iterations=0,
                   level=level, status="ok")
        try:
            surfaces = build(g, cells)
            T = discretize(*surfaces, level=level)
            if T.gamma0 <= 0:
                raise NonTransversal("gamma0 below floor")
            row["gamma0"] = T.gamma0
            row["bound_half"] = T.gamma0 ** -0.5
            row["bound_three_halves"] = T.gamma0 ** -1.5
            cert = power_iterate(T, seed=seed, max_iter=max_iter, tol=tol)
            row.update(ratio=cert.achieved_ratio, converged=cert.converged,
                       iterations=cert.iterations)
        except (NonTransversal, SingularFrame):
            row["status"] = "NonTransversal"
        except Stagnated as exc:
            row.update(ratio=exc.certificate.achieved_ratio, iterations=exc.certificate.iterations,
                       status="Stagnated")
        except NotConverged:
            row["status"] = "NotConverged"
        rows.append(row)
    return rows


def sweep_csv(rows):
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=SWEEP_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()
