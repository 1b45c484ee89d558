"""Small dense linear algebra: frames, Gramians, dual bases, singular values.

Everything here works on plain ``numpy`` arrays of modest size (ambient
dimension up to about 8). Quantities consumed downstream are invariant
under the choice of orthonormal basis, so the sign and rotation of any
frame returned by :func:`null_frame` carry no meaning.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations, permutations

import numpy as np

from .errors import InvalidSignature, RankDeficient, SingularFrame

DET_FLOOR = 1e-10
ORTHO_TOL = 1e-12
RANK_TOL = 1e-10


@dataclass(frozen=True)
class DimensionSignature:
    """Ambient dimension ``n`` and the three surface (or image) dimensions."""

    n: int
    n1: int
    n2: int
    n3: int

    def __post_init__(self):
        dims = (self.n1, self.n2, self.n3)
        if any(not 0 < d < self.n for d in dims):
            raise InvalidSignature(
                f"each n_i must satisfy 0 < n_i < n; got n={self.n}, dims={dims}")
        if sum(dims) != 2 * self.n:
            raise InvalidSignature(
                f"signature violates n1 + n2 + n3 = 2n: {dims} with n={self.n}")

    @property
    def dims(self):
        return (self.n1, self.n2, self.n3)

    @property
    def codims(self):
        return tuple(self.n - d for d in self.dims)

    @classmethod
    def from_codims(cls, c1, c2, c3):
        n = c1 + c2 + c3
        return cls(n, n - c1, n - c2, n - c3)

    @classmethod
    def admissible(cls, n):
        """All signatures with ambient dimension ``n`` (ordered triples)."""
        out = []
        for c1 in range(1, n - 1):
            for c2 in range(1, n - c1):
                c3 = n - c1 - c2
                if c3 >= 1:
                    out.append(cls.from_codims(c1, c2, c3))
        return out


@dataclass(frozen=True, eq=False)
class Frame:
    """An ``n x k`` matrix with orthonormal columns."""

    columns: np.ndarray

    def __post_init__(self):
        cols = np.array(self.columns, dtype=float, copy=True)
        if cols.ndim == 1:
            cols = cols[:, None]
        n, k = cols.shape
        if not 1 <= k <= n:
            raise ValueError(f"frame needs 1 <= k <= n, got shape {cols.shape}")
        err = np.abs(cols.T @ cols - np.eye(k)).max()
        if err > ORTHO_TOL:
            raise ValueError(f"columns are not orthonormal (error {err:.2e})")
        cols.setflags(write=False)
        object.__setattr__(self, "columns", cols)

    @property
    def ambient_dim(self):
        return self.columns.shape[0]

    @property
    def rank(self):
        return self.columns.shape[1]

    @classmethod
    def orthonormalize(cls, M):
        """Frame spanning the column space of a full-column-rank ``M``."""
        M = np.atleast_2d(np.asarray(M, dtype=float))
        if M.shape[0] < M.shape[1]:
            M = M.T
        q, r = np.linalg.qr(M)
        if np.abs(np.diag(r)).min() <= RANK_TOL * max(1.0, np.abs(r).max()):
            raise RankDeficient("columns are linearly dependent")
        return cls(q)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.columns, dtype=dtype)


@dataclass(frozen=True, eq=False)
class DualBasisTriple:
    V: tuple
    W: tuple
    gamma: float

    @property
    def V_matrix(self):
        return np.hstack([np.asarray(v) for v in self.V])

    @property
    def W_matrix(self):
        return np.hstack(self.W)


@dataclass(frozen=True)
class DualIdentityResiduals:
    """Relative residuals of the two face-volume identities, per index i."""

    inverse_gamma: np.ndarray
    normal_volume: np.ndarray

    @property
    def max(self):
        return float(max(self.inverse_gamma.max(), self.normal_volume.max()))


def gramian(A):
    """Gramian determinant ``sqrt(det(A A^T))`` of a ``k x m`` matrix.

    Equal to the ``k``-volume of the parallelepiped spanned by the rows.
    Evaluated through a QR factorization of ``A^T``; returns 0 when the rows
    cannot be independent (``k > m``).
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    k, m = A.shape
    if k > m:
        return 0.0
    r = np.linalg.qr(A.T, mode="r")
    return float(np.abs(np.prod(np.diag(r))))


def gramian_stack(A):
    """Vectorized :func:`gramian` over the leading axes of ``A``."""
    A = np.asarray(A, dtype=float)
    if A.shape[-2] > A.shape[-1]:
        return np.zeros(A.shape[:-2])
    r = np.linalg.qr(np.swapaxes(A, -1, -2), mode="r")
    return np.abs(np.prod(np.diagonal(r, axis1=-2, axis2=-1), axis=-1))


def cauchy_binet_gramian(A):
    """Brute-force Gramian: root of the sum of squared maximal minors."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    k, m = A.shape
    if k > m:
        return 0.0
    total = 0.0
    for cols in combinations(range(m), k):
        total += np.linalg.det(A[:, list(cols)]) ** 2
    return float(np.sqrt(total))


def singular_values(A):
    """Singular values of a ``m x n`` matrix (``m <= n``), ascending."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.shape[0] > A.shape[1]:
        raise ValueError(f"expected m <= n, got shape {A.shape}")
    return np.sort(np.linalg.svd(A, compute_uv=False))


def null_frame(A, tol=RANK_TOL):
    """Orthonormal basis of ``ker(A)`` for a full-row-rank ``m x n`` matrix."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    m, n = A.shape
    if m >= n:
        raise RankDeficient(f"a {m}x{n} matrix has no nontrivial kernel frame")
    _, s, vt = np.linalg.svd(A)
    if s.min() <= tol * max(1.0, s.max()):
        raise RankDeficient(f"numerical rank below {m} (smallest sigma {s.min():.2e})")
    return Frame(vt[m:].T)


def null_frames_stack(A):
    """Kernel frames for a stack of full-row-rank matrices, shape ``(..., n, n-m)``."""
    A = np.asarray(A, dtype=float)
    m = A.shape[-2]
    _, s, vt = np.linalg.svd(A)
    if (s[..., -1] <= RANK_TOL * np.maximum(1.0, s[..., 0])).any():
        raise RankDeficient("a matrix in the stack is rank deficient")
    return np.swapaxes(vt[..., m:, :], -1, -2)


def orthonormal_complement(F):
    """Orthonormal basis of the orthogonal complement of span(F)."""
    F = np.asarray(F, dtype=float)
    return null_frame(F.T).columns


def dual_basis(V1, V2, V3, sig=None, floor=DET_FLOOR):
    """Dual basis ``W = V^{-T}`` of three concatenated orthonormal frames.

    Raises :class:`SingularFrame` when ``|det V|`` is below ``floor``,
    which signals a non-transversal configuration.
    """
    frames = [f if isinstance(f, Frame) else Frame(f) for f in (V1, V2, V3)]
    V = np.hstack([f.columns for f in frames])
    n = V.shape[0]
    if V.shape != (n, n):
        raise InvalidSignature(f"concatenated frame has shape {V.shape}, not square")
    if sig is not None and tuple(f.rank for f in frames) != sig.codims:
        raise InvalidSignature(
            f"frame ranks {[f.rank for f in frames]} do not match codimensions {sig.codims}")
    det = abs(np.linalg.det(V))
    if det < floor:
        raise SingularFrame(f"|det V| = {det:.3e} below floor {floor:.1e}")
    W = np.linalg.inv(V).T
    splits = np.cumsum([f.rank for f in frames])[:-1]
    Ws = tuple(np.split(W, splits, axis=1))
    return DualBasisTriple(V=tuple(frames), W=Ws, gamma=float(det))


def lemma1_identities(t):
    """Residuals of ``|(W_{i-1}, W_{i+1})^T| = 1/gamma`` and
    ``|(V_{i-1}, V_{i+1})^T| = gamma |W_i^T|`` for i = 1, 2, 3."""
    V = [np.asarray(v) for v in t.V]
    W = t.W
    g = t.gamma
    inv = np.empty(3)
    vol = np.empty(3)
    for i in range(3):
        a, b = (i - 1) % 3, (i + 1) % 3
        inv[i] = abs(gramian(np.hstack([W[a], W[b]]).T) * g - 1.0)
        target = g * gramian(W[i].T)
        vol[i] = abs(gramian(np.hstack([V[a], V[b]]).T) - target) / target
    return DualIdentityResiduals(inverse_gamma=inv, normal_volume=vol)


def random_frame(rng, n, k):
    """Haar-distributed ``n x k`` orthonormal frame."""
    q, r = np.linalg.qr(rng.standard_normal((n, k)))
    return q * np.sign(np.diag(r))


def random_rotation(rng, n):
    q = random_frame(rng, n, n)
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def simplex_volume(vertices):
    """``d``-volume of a simplex given as ``(d+1, m)`` vertex rows, ``m >= d``."""
    vertices = np.asarray(vertices, dtype=float)
    edges = vertices[1:] - vertices[0]
    d = edges.shape[0]
    return gramian(edges) / _factorial(d)


def _factorial(d):
    out = 1
    for i in range(2, d + 1):
        out *= i
    return out


def permutation_list(d):
    return list(permutations(range(d)))
