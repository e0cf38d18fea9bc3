"""Finite-truncation operator algebra.

A compact operator on a separable Hilbert space is represented by its leading
d x d block plus a norm bound on the discarded tail.  All constructions act on
the truncated block; the tail only ever contributes -inf growth rates, which
the spectrum types carry symbolically.  Scalars are real throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
import scipy.linalg

from .errors import CapacityError, DimensionMismatchError, RejectedInputError

#: Largest admissible dimension for a compound (exterior-power) matrix.
DEFAULT_COMPOUND_CAP = 10_000

#: Pivots below this threshold are treated as exact zeros in LU determinants.
LU_PIVOT_THRESHOLD = 1e-14


def _as_matrix(entries) -> np.ndarray:
    arr = np.array(entries, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise RejectedInputError(f"operator entries must be a square matrix, got shape {arr.shape}")
    if arr.shape[0] == 0:
        raise RejectedInputError("operator dimension must be positive")
    if not np.all(np.isfinite(arr)):
        raise RejectedInputError("operator entries must be finite reals")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class TruncatedOperator:
    """A d x d truncation of a compact operator, plus a tail norm bound.

    Parameters
    ----------
    entries : (d, d) array of finite reals.
    tail_bound : operator-norm bound on the discarded infinite-dimensional
        tail; 0 for exactly finite-rank instances.
    """

    entries: np.ndarray
    tail_bound: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "entries", _as_matrix(self.entries))
        tb = float(self.tail_bound)
        if not (tb >= 0.0) or not math.isfinite(tb):
            raise RejectedInputError(f"tail_bound must be a finite nonnegative real, got {self.tail_bound}")
        object.__setattr__(self, "tail_bound", tb)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @staticmethod
    def identity(dim: int) -> "TruncatedOperator":
        return TruncatedOperator(np.eye(dim))

    @staticmethod
    def diagonal(values, tail_bound: float = 0.0) -> "TruncatedOperator":
        return TruncatedOperator(np.diag(np.asarray(values, dtype=float)), tail_bound)

    @staticmethod
    def zero(dim: int) -> "TruncatedOperator":
        return TruncatedOperator(np.zeros((dim, dim)))

    def apply(self, vector) -> np.ndarray:
        return self.entries @ np.asarray(vector, dtype=float)

    def __repr__(self):  # compact, dimension-first
        return f"TruncatedOperator(dim={self.dim}, norm={operator_norm(self):.6g}, tail={self.tail_bound:.3g})"


@dataclass(frozen=True)
class PlaneRotation:
    """Rotation by `angle` radians in the (i, j) coordinate plane.

    As a d x d operator it is the 2x2 rotation block on span(e_i, e_j) and
    the identity on the orthogonal complement.
    """

    i: int
    j: int
    angle: float

    def __post_init__(self):
        if self.i == self.j or self.i < 0 or self.j < 0:
            raise RejectedInputError(f"plane indices must be distinct and nonnegative, got ({self.i}, {self.j})")

    def matrix(self, dim: int) -> np.ndarray:
        if max(self.i, self.j) >= dim:
            raise RejectedInputError(f"plane indices ({self.i}, {self.j}) exceed dimension {dim}")
        return plane_rotation_matrix(dim, self.i, self.j, self.angle)

    def operator(self, dim: int) -> TruncatedOperator:
        return TruncatedOperator(self.matrix(dim))


def plane_rotation_matrix(dim: int, i: int, j: int, angle: float) -> np.ndarray:
    """d x d rotation by `angle` in the coordinate plane (i, j)."""
    c, s = math.cos(angle), math.sin(angle)
    r = np.eye(dim)
    r[i, i] = c
    r[j, j] = c
    r[j, i] = s
    r[i, j] = -s
    return r


def rotation_in_span(u, w, angle: float) -> np.ndarray:
    """Rotation by `angle` in the plane spanned by orthonormal vectors u, w.

    Maps u to cos(angle) u + sin(angle) w; identity on the orthogonal
    complement of span(u, w).
    """
    u = np.asarray(u, dtype=float)
    w = np.asarray(w, dtype=float)
    if u.shape != w.shape or u.ndim != 1:
        raise RejectedInputError("plane basis vectors must be 1-d of equal length")
    if abs(u @ u - 1.0) > 1e-8 or abs(w @ w - 1.0) > 1e-8 or abs(u @ w) > 1e-8:
        raise RejectedInputError("plane basis must be orthonormal")
    c, s = math.cos(angle), math.sin(angle)
    uu = np.outer(u, u)
    ww = np.outer(w, w)
    return np.eye(u.size) + (c - 1.0) * (uu + ww) + s * (np.outer(w, u) - np.outer(u, w))


def compose(a: TruncatedOperator, b: TruncatedOperator) -> TruncatedOperator:
    """Composition a after b: entries = a.entries @ b.entries.

    Tail bounds propagate as ||a||*tail(b) + tail(a)*(||b|| + tail(b)).
    """
    if a.dim != b.dim:
        raise DimensionMismatchError(f"cannot compose operators of dimension {a.dim} and {b.dim}")
    tail = 0.0
    if a.tail_bound or b.tail_bound:
        na, nb = operator_norm(a), operator_norm(b)
        tail = na * b.tail_bound + a.tail_bound * (nb + b.tail_bound)
    return TruncatedOperator(a.entries @ b.entries, tail)


def operator_norm(a: TruncatedOperator) -> float:
    """Largest singular value of the truncated block."""
    return float(np.linalg.norm(a.entries, 2))


def svd(a: TruncatedOperator):
    """Singular value decomposition with a deterministic sign convention.

    Returns (sigma, u, v) with sigma descending and a.entries = u @ diag(sigma) @ v.T
    up to floating point.  Each right singular vector is canonicalized so its
    leading nonzero entry is nonnegative (the matching left vector is flipped
    with it), which pins the decomposition for golden tests.
    """
    u, s, vt = np.linalg.svd(a.entries)
    v = vt.T
    for k in range(v.shape[1]):
        col = v[:, k]
        nz = np.nonzero(np.abs(col) > 1e-300)[0]
        if nz.size and col[nz[0]] < 0:
            v[:, k] = -col
            u[:, k] = -u[:, k]
    return s, u, v


def _det_small(m: np.ndarray) -> float:
    """Determinant by cofactor expansion for p <= 3, LU above.

    LU pivots with magnitude below LU_PIVOT_THRESHOLD are treated as exact
    zeros so that structurally rank-deficient minors come out exactly 0.
    """
    p = m.shape[0]
    if p == 1:
        return m[0, 0]
    if p == 2:
        return m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
    if p == 3:
        return (
            m[0, 0] * (m[1, 1] * m[2, 2] - m[1, 2] * m[2, 1])
            - m[0, 1] * (m[1, 0] * m[2, 2] - m[1, 2] * m[2, 0])
            + m[0, 2] * (m[1, 0] * m[2, 1] - m[1, 1] * m[2, 0])
        )
    lu = m.copy()
    det = 1.0
    for col in range(p):
        piv = col + int(np.argmax(np.abs(lu[col:, col])))
        if abs(lu[piv, col]) < LU_PIVOT_THRESHOLD:
            return 0.0
        if piv != col:
            lu[[col, piv]] = lu[[piv, col]]
            det = -det
        det *= lu[col, col]
        factors = lu[col + 1 :, col] / lu[col, col]
        lu[col + 1 :, col:] -= np.outer(factors, lu[col, col:])
    return det


def _subset_indices(d: int, p: int):
    return list(combinations(range(d), p))


def exterior_power(a: TruncatedOperator, p: int, cap: int = DEFAULT_COMPOUND_CAP) -> TruncatedOperator:
    """p-th compound matrix: entries are p x p minors on lex-ordered p-subsets.

    The result acts on p-vectors; its operator norm is the maximal p-volume
    expansion factor.  Multiplicative: exterior_power(a @ b) = exterior_power(a)
    @ exterior_power(b) (Cauchy-Binet).
    """
    d = a.dim
    if not (1 <= p <= d):
        raise RejectedInputError(f"exterior power order must satisfy 1 <= p <= {d}, got {p}")
    out_dim = math.comb(d, p)
    if out_dim > cap:
        raise CapacityError(
            f"compound matrix would have dimension {out_dim} > cap {cap}",
            required_dim=out_dim,
        )
    if p == 1:
        return a
    subsets = _subset_indices(d, p)
    m = a.entries
    if p <= 3:
        # all minors in one vectorized gather; closed-form determinants
        rows = np.array(subsets)
        blocks = m[rows[:, None, :, None], rows[None, :, None, :]]  # (out, out, p, p)
        if p == 2:
            comp = blocks[..., 0, 0] * blocks[..., 1, 1] - blocks[..., 0, 1] * blocks[..., 1, 0]
        else:
            comp = (
                blocks[..., 0, 0] * (blocks[..., 1, 1] * blocks[..., 2, 2] - blocks[..., 1, 2] * blocks[..., 2, 1])
                - blocks[..., 0, 1] * (blocks[..., 1, 0] * blocks[..., 2, 2] - blocks[..., 1, 2] * blocks[..., 2, 0])
                + blocks[..., 0, 2] * (blocks[..., 1, 0] * blocks[..., 2, 1] - blocks[..., 1, 1] * blocks[..., 2, 0])
            )
    else:
        comp = np.empty((out_dim, out_dim))
        for i, ri in enumerate(subsets):
            mi = m[list(ri), :]
            for j, cj in enumerate(subsets):
                comp[i, j] = _det_small(mi[:, list(cj)])
    tail = 0.0
    if a.tail_bound:
        n = operator_norm(a)
        tail = (n + a.tail_bound) ** p - n**p
    return TruncatedOperator(comp, tail)


def _orthonormal_from_basis(basis) -> np.ndarray:
    """Orthonormalize a basis (a d x k column matrix or a list of vectors)."""
    if isinstance(basis, np.ndarray) and basis.ndim == 2:
        cols = basis.astype(float)
    elif isinstance(basis, np.ndarray) and basis.ndim == 1:
        cols = basis.astype(float)[:, None]
    else:
        cols = np.column_stack([np.asarray(v, dtype=float) for v in basis])
    if cols.ndim != 2 or cols.shape[1] == 0:
        raise RejectedInputError("basis must contain at least one vector")
    if cols.shape[1] > cols.shape[0]:
        raise RejectedInputError("more basis vectors than ambient dimension")
    sv = np.linalg.svd(cols, compute_uv=False)
    if sv[-1] < 1e-10 * max(1.0, sv[0]):
        raise RejectedInputError("basis is degenerate (numerically dependent vectors)")
    q, _ = np.linalg.qr(cols)
    return q


def subspace_angle(e_basis, f_basis) -> float:
    """Minimal principal angle between span(e_basis) and span(f_basis), in [0, pi/2]."""
    qe = _orthonormal_from_basis(e_basis)
    qf = _orthonormal_from_basis(f_basis)
    if qe.shape[0] != qf.shape[0]:
        raise DimensionMismatchError("subspaces live in different ambient dimensions")
    angles = scipy.linalg.subspace_angles(qe, qf)
    return float(np.min(angles)) if angles.size else 0.0


def principal_angles(e_basis, f_basis) -> np.ndarray:
    """All principal angles (descending), convenience wrapper used by diagnostics."""
    qe = _orthonormal_from_basis(e_basis)
    qf = _orthonormal_from_basis(f_basis)
    if qe.shape[0] != qf.shape[0]:
        raise DimensionMismatchError("subspaces live in different ambient dimensions")
    return scipy.linalg.subspace_angles(qe, qf)
