"""Scale-free singular values of long matrix products.

Direct evaluation of a product A(f^{n-1}x)...A(x) overflows or underflows for
any interesting n.  The accumulator below maintains the product in the form

    A_n ... A_1 Q0 = U diag(exp(g)) V^T

with U a d x k frame of unit, pairwise-orthogonal columns, V a k x k
orthogonal matrix, and all magnitudes kept in the log vector g (-inf marks an
exactly collapsed direction).  Each push multiplies one factor in and restores
orthogonality of the scaled columns with one-sided Jacobi rotations computed
in scale-free form, so g stays accurate no matter how far the singular values
spread.  After every step, exp(g) are the singular values of the partial
product applied to Q0.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import NumericError, RejectedInputError

_ORTHO_TOL = 1e-13
_BIG_DELTA = 300.0
_GRADED_DELTA = 60.0
_MAX_SWEEPS = 64


class ProductSVD:
    """Incremental SVD of a matrix product applied to an initial frame."""

    def __init__(self, q0: np.ndarray, record: bool = False):
        q0 = np.array(q0, dtype=float)
        if q0.ndim != 2 or q0.shape[1] < 1 or q0.shape[1] > q0.shape[0]:
            raise RejectedInputError(f"initial frame must be d x k with 1 <= k <= d, got {q0.shape}")
        gram = q0.T @ q0
        if np.max(np.abs(gram - np.eye(q0.shape[1]))) > 1e-10:
            raise RejectedInputError("initial frame must have orthonormal columns")
        self.q0 = q0.copy()
        self.u = q0.copy()
        self.k = q0.shape[1]
        self.dim = q0.shape[0]
        self.g = np.zeros(self.k)
        self.v = np.eye(self.k)
        self.steps = 0
        self._record = record
        self._history = [] if record else None

    # -- state ---------------------------------------------------------------

    @property
    def log_sigma(self) -> np.ndarray:
        """Log singular values, descending; -inf for collapsed directions."""
        return self.g.copy()

    def exponents(self) -> np.ndarray:
        """Per-step growth rates g / steps."""
        if self.steps == 0:
            raise RejectedInputError("no factors pushed yet")
        return self.g / self.steps

    def left_frame(self) -> np.ndarray:
        """Unit column frame at the end of the product (d x k, growth-ordered)."""
        return self.u.copy()

    def right_frame(self) -> np.ndarray:
        """Right singular directions in ambient coordinates (d x k): Q0 @ V."""
        return self.q0 @ self.v

    def history(self) -> np.ndarray:
        """(steps, k) array of g after each push (requires record=True)."""
        if self._history is None:
            raise RejectedInputError("accumulator was created with record=False")
        return np.array(self._history)

    # -- update --------------------------------------------------------------

    def push(self, a: np.ndarray):
        """Multiply one factor into the product."""
        b = a @ self.u
        nrm = np.sqrt(np.einsum("ij,ij->j", b, b))
        if nrm.min() > 0.0:
            self.g += np.log(nrm)
            self.u = b / nrm
            live_pairs = np.isfinite(self.g).sum() > 1
        else:
            with np.errstate(divide="ignore"):
                self.g = self.g + np.log(nrm)
            live = np.isfinite(self.g)
            q = np.empty_like(b)
            if live.any():
                q[:, live] = b[:, live] / nrm[live]
            self.u = q
            self._fill_dead()
            live_pairs = live.sum() > 1
        if self.k > 1 and live_pairs:
            self._orthogonalize()
        if np.any(self.g[:-1] < self.g[1:]):
            self._sort()
        self.steps += 1
        if self._record:
            self._history.append(self.g.copy())

    def _fill_dead(self):
        # dead directions carry -inf and never rotate; any unit filler keeps
        # the frame well formed, orthogonal to the live part for tidiness
        live = np.isfinite(self.g)
        base = self.u[:, live] if live.any() else np.zeros((self.dim, 0))
        for idx in np.nonzero(~live)[0]:
            for cand in range(self.dim):
                vec = np.zeros(self.dim)
                vec[cand] = 1.0
                vec -= base @ (base.T @ vec)
                n = np.linalg.norm(vec)
                if n > 1e-6:
                    self.u[:, idx] = vec / n
                    base = np.column_stack([base, self.u[:, idx]])
                    break

    def _orthogonalize(self):
        gram = self.u.T @ self.u
        np.fill_diagonal(gram, 0.0)
        if abs(gram).max() <= _ORTHO_TOL:
            return
        for _ in range(_MAX_SWEEPS):
            live_idx = np.nonzero(np.isfinite(self.g))[0]
            if live_idx.size < 2:
                return
            self._sweep(live_idx)
            live_idx = np.nonzero(np.isfinite(self.g))[0]
            if live_idx.size < 2:
                return
            sub = self.u[:, live_idx]
            gram = sub.T @ sub
            np.fill_diagonal(gram, 0.0)
            if np.max(np.abs(gram)) <= _ORTHO_TOL:
                return
        raise NumericError("column orthogonalization failed to converge")

    def _sweep(self, live_idx: np.ndarray):
        """One orthogonalization pass over the live columns.

        Columns are grouped into scale clusters (consecutive log gaps below
        _GRADED_DELTA).  Across clusters the exact Jacobi rotation degenerates
        to Gram-Schmidt of the smaller column with V moving below float
        resolution, so cross-cluster work is a block projection; inside a
        cluster the scale-free pair rotations run as usual.  When every
        cluster is a singleton the whole pass collapses to one thin QR.
        """
        lg = self.g[live_idx]
        if np.all(lg[:-1] >= lg[1:]) and (lg.size < 2 or np.min(lg[:-1] - lg[1:]) > _GRADED_DELTA):
            q, r = np.linalg.qr(self.u)
            rd = np.diag(r).copy()
            neg = rd < 0.0
            if neg.any():
                q[:, neg] = -q[:, neg]
                rd = np.abs(rd)
            with np.errstate(divide="ignore"):
                self.g = self.g + np.log(rd)
            self.u = q
            return

        order = live_idx[np.argsort(-self.g[live_idx], kind="stable")]
        clusters = []
        current = [order[0]]
        for idx in order[1:]:
            if self.g[current[-1]] - self.g[idx] <= _GRADED_DELTA:
                current.append(idx)
            else:
                clusters.append(current)
                current = [idx]
        clusters.append(current)

        prefix = np.empty((self.dim, len(order)))
        nprefix = 0
        for cluster in clusters:
            if nprefix:
                pref = prefix[:, :nprefix]
                block = self.u[:, cluster]
                block = block - pref @ (pref.T @ block)
                for pos, idx in enumerate(cluster):
                    self._renorm(idx, block[:, pos])
            live = [idx for idx in cluster if np.isfinite(self.g[idx])]
            for a in range(len(live) - 1):
                for b in range(a + 1, len(live)):
                    i, j = live[a], live[b]
                    w = float(self.u[:, i] @ self.u[:, j])
                    if abs(w) <= _ORTHO_TOL:
                        continue
                    self._rotate_pair(i, j, w)
            for idx in live:
                prefix[:, nprefix] = self.u[:, idx]
                nprefix += 1

    def _rotate_pair(self, i: int, j: int, w: float):
        # unit-column cross term w is symmetric; order the pair by scale
        hi, lo = (i, j) if self.g[i] >= self.g[j] else (j, i)
        delta = self.g[hi] - self.g[lo]
        qhi = self.u[:, hi].copy()
        qlo = self.u[:, lo].copy()
        if delta > _BIG_DELTA:
            # rotation angle ~ w exp(-delta): on unit columns this reduces to
            # Gram-Schmidt of the small column; V moves below float resolution
            self._renorm(lo, qlo - w * qhi)
            return
        ed = math.exp(delta)
        edi = math.exp(-delta)
        denom = ed - edi
        if denom == 0.0:
            t = 1.0 if w > 0 else -1.0
        else:
            tau = denom / (2.0 * w)
            t = math.copysign(1.0, tau) / (abs(tau) + math.hypot(1.0, tau))
        c = 1.0 / math.hypot(1.0, t)
        s = c * t
        self._renorm(hi, c * qhi + (s * edi) * qlo)
        self._renorm(lo, (-s * ed) * qhi + c * qlo)
        vhi = self.v[:, hi].copy()
        vlo = self.v[:, lo].copy()
        self.v[:, hi] = c * vhi + s * vlo
        self.v[:, lo] = -s * vhi + c * vlo

    def _renorm(self, idx: int, raw: np.ndarray):
        n = float(np.linalg.norm(raw))
        if n == 0.0:
            self.g[idx] = -np.inf
            self._fill_dead()
            return
        self.u[:, idx] = raw / n
        self.g[idx] += math.log(n)

    def _sort(self):
        order = np.argsort(-self.g, kind="stable")
        self.g = self.g[order]
        self.u = self.u[:, order]
        self.v = self.v[:, order]


def accumulate_product(matrices, q0: np.ndarray, record: bool = False) -> ProductSVD:
    """Push an iterable of matrices through a fresh accumulator."""
    acc = ProductSVD(q0, record=record)
    for m in matrices:
        acc.push(m)
    return acc
