"""Numerical Oseledets-Ruelle theory for truncated compact cocycles.

The spectrum estimator propagates an orthonormal frame through the cocycle
with per-step re-orthonormalization (see `products`), so after n steps the
estimates are exactly (1/n) log of the singular values of A^n(x) applied to
the initial frame.  Directions whose average log growth falls below a
declared floor, or which collapse exactly, are reported in the -infinity
block; a truncated compact operator always carries the ambient tail there as
well.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from dataclasses import field as dc_field

import numpy as np

from .cocycles import CocycleField, exterior_field
from .dynamics import BasePoint
from .errors import GapMissingError, RejectedInputError
from .operators import principal_angles
from .products import ProductSVD

#: Exponent estimates below this per-step average are declared -infinity.
NEG_INF_FLOOR = math.log(1e-12)

#: Absolute floor of the multiplicity-grouping tolerance.
GROUP_TOL_FLOOR = 1e-6

_SERIES_MAX_ROWS = 512


@dataclass(frozen=True)
class LyapunovSpectrum:
    """Grouped exponent estimates with multiplicities and a -infinity block.

    finite_exponents is a descending tuple of (value, multiplicity);
    minus_infinity_dim counts computed directions at -infinity (kernel
    directions and floor hits); unresolved_dim counts truncation directions
    not examined because the frame width k was below d (0 for the default
    full frame).  The infinite-dimensional tail beyond the truncation always
    belongs to the -infinity block and is tracked by tail_bound.
    """

    finite_exponents: tuple
    minus_infinity_dim: int
    unresolved_dim: int
    truncation_dim: int
    tail_bound: float
    iterations_used: int
    residual: float
    group_tol: float
    neg_inf_floor: float
    series_iterations: np.ndarray = dc_field(repr=False, default=None)
    series: np.ndarray = dc_field(repr=False, default=None)

    def __post_init__(self):
        total = sum(m for _, m in self.finite_exponents)
        if total + self.minus_infinity_dim + self.unresolved_dim != self.truncation_dim:
            raise RejectedInputError("spectrum block dimensions do not add up to the truncation dimension")
        vals = [v for v, _ in self.finite_exponents]
        if any(not math.isfinite(v) for v in vals):
            raise RejectedInputError("finite exponent groups must hold finite values")
        if any(b >= a for a, b in zip(vals, vals[1:])):
            raise RejectedInputError("exponent groups must be strictly descending")

    @property
    def num_finite(self) -> int:
        return sum(m for _, m in self.finite_exponents)

    @property
    def all_minus_infinity(self) -> bool:
        return self.num_finite == 0

    def expanded(self) -> list:
        """Exponents repeated by multiplicity, then the computed -inf block."""
        out = []
        for v, m in self.finite_exponents:
            out.extend([v] * m)
        out.extend([-math.inf] * self.minus_infinity_dim)
        return out

    def top(self, p: int) -> list:
        """Leading p exponents with multiplicity; -inf beyond the computed ones."""
        exp = self.expanded()
        if p > len(exp):
            if self.unresolved_dim > 0:
                raise RejectedInputError(
                    f"only {len(exp)} directions were computed (k < d); cannot report top {p}"
                )
            exp = exp + [-math.inf] * (p - len(exp))
        return exp[:p]

    def entropy(self, p: int) -> float:
        """Sum of the leading p exponents; -inf if any of them is -inf."""
        vals = self.top(p)
        if any(v == -math.inf for v in vals):
            return -math.inf
        return float(sum(vals))

    def gap_at(self, p: int) -> float:
        """lambda_p - lambda_{p+1}; +inf when lambda_{p+1} is -inf (incl. the tail)."""
        exp = self.expanded()
        if p < 1 or p > len(exp):
            raise RejectedInputError(f"gap index must be in [1, {len(exp)}], got {p}")
        lam_p = exp[p - 1]
        if lam_p == -math.inf:
            raise RejectedInputError(f"lambda_{p} is -infinity; no splitting of index {p}")
        if p == len(exp) and self.unresolved_dim > 0:
            raise RejectedInputError("gap against unresolved directions is not known (k < d)")
        lam_next = exp[p] if p < len(exp) else -math.inf
        return math.inf if lam_next == -math.inf else lam_p - lam_next

    def largest_gap_index(self) -> int:
        """Splitting index with the largest inter-group gap.

        Gaps between finite groups are compared first; if there is no finite
        gap, the index is the full finite block (split against the -infinity
        block, whose gap is infinite).  Ties pick the smaller index.
        """
        if self.all_minus_infinity:
            raise RejectedInputError("trivial spectrum has no splitting index")
        groups = self.finite_exponents
        if len(groups) >= 2:
            best_p, best_gap = None, -1.0
            cum = 0
            for i in range(len(groups) - 1):
                cum += groups[i][1]
                gap = groups[i][0] - groups[i + 1][0]
                if gap > best_gap + 1e-15:
                    best_p, best_gap = cum, gap
            return best_p
        return self.num_finite


@dataclass(frozen=True)
class OseledetsSplitting:
    """Index-p splitting E1 + E2 of the truncation at an anchor point.

    E1 spans the p fastest directions (orthonormal columns); E2 is its
    orthogonal complement within the truncation.  The invariance defect is
    the largest principal angle between A(x) E1(x) and E1(f(x)), measured,
    never assumed.
    """

    index_p: int
    e1: np.ndarray
    e2: np.ndarray
    anchor_point: BasePoint
    gap: float
    invariance_defect: float
    iterations_used: int

    def __post_init__(self):
        d, p = self.e1.shape
        if p != self.index_p or self.e2.shape != (d, d - p):
            raise RejectedInputError("splitting basis shapes are inconsistent with the index")
        combined = np.column_stack([self.e1, self.e2])
        if np.max(np.abs(combined.T @ combined - np.eye(d))) > 1e-10:
            raise RejectedInputError("splitting bases must be orthonormal and complementary")

    @property
    def dim(self) -> int:
        return self.e1.shape[0]


def _initial_frame(d: int, k: int) -> np.ndarray:
    if not (1 <= k <= d):
        raise RejectedInputError(f"frame width must satisfy 1 <= k <= {d}, got {k}")
    return np.eye(d)[:, :k]


def _run_accumulator(field: CocycleField, x: BasePoint, n: int, k: int, record: bool) -> ProductSVD:
    if n < 1:
        raise RejectedInputError("iteration count must be >= 1")
    acc = ProductSVD(_initial_frame(field.dim, k), record=record)
    for m in field.matrices_along_orbit(x, n):
        acc.push(m)
    return acc


def _residual_from_history(history: np.ndarray, n: int) -> float:
    """Convergence diagnostic: last-window drift of the running estimates plus
    a CLT standard-error scale of the per-step increments."""
    finite_cols = np.all(np.isfinite(history), axis=0)
    if not finite_cols.any() or n < 4:
        return 1e-9
    h = history[:, finite_cols]
    steps = np.arange(1, n + 1)[:, None]
    estimates = h / steps
    n0 = max(1, int(0.9 * n))
    drift = float(np.max(np.abs(estimates[n - 1] - estimates[n0 - 1])))
    half = n // 2
    increments = np.diff(h[half - 1 :], axis=0)
    if increments.shape[0] >= 2:
        se = float(np.max(np.std(increments, axis=0))) / math.sqrt(increments.shape[0])
    else:
        se = 0.0
    return max(drift, 2.0 * se, 1e-9)


def _group_exponents(values: np.ndarray, tol: float):
    """Group descending finite estimates into multiplicity blocks within tol."""
    groups = []
    for v in values:
        if groups and groups[-1][0][-1] - v <= tol:
            groups[-1][0].append(v)
        else:
            groups.append(([v],))
    out = []
    for (members,) in groups:
        out.append((float(np.mean(members)), len(members)))
    # enforce strict descent after averaging: merge any residual collisions
    merged = []
    for v, m in out:
        if merged and merged[-1][0] - v <= tol:
            pv, pm = merged.pop()
            v = (pv * pm + v * m) / (pm + m)
            m = pm + m
        merged.append((v, m))
    return tuple(merged)


def _downsample_series(history: np.ndarray, n: int):
    idx = np.unique(np.linspace(1, n, min(n, _SERIES_MAX_ROWS)).astype(int))
    series = history[idx - 1] / idx[:, None]
    return idx, series


def spectrum(
    field: CocycleField,
    x: BasePoint,
    n: int,
    k: int = None,
    neg_inf_floor: float = NEG_INF_FLOOR,
    keep_series: bool = True,
) -> LyapunovSpectrum:
    """Estimate the leading-k Lyapunov exponents at x over n iterations.

    With the default full frame (k = d) the estimates equal
    (1/n) log sigma_i(A^n(x)) exactly; rank collapse and estimates below
    `neg_inf_floor` populate the -infinity block.  Exponents are grouped
    into multiplicities with tolerance max(1e-6, 5 * residual).
    """
    k = field.dim if k is None else int(k)
    acc = _run_accumulator(field, x, n, k, record=True)
    history = acc.history()
    residual = _residual_from_history(history, n)
    group_tol = max(GROUP_TOL_FLOOR, 5.0 * residual)
    raw = acc.exponents()
    finite_mask = np.isfinite(raw) & (raw >= neg_inf_floor)
    finite_vals = raw[finite_mask]
    groups = _group_exponents(finite_vals, group_tol) if finite_vals.size else ()
    minus_dim = int(k - finite_vals.size)
    series_iterations, series = (None, None)
    if keep_series:
        series_iterations, series = _downsample_series(history, n)
    return LyapunovSpectrum(
        finite_exponents=groups,
        minus_infinity_dim=minus_dim,
        unresolved_dim=field.dim - k,
        truncation_dim=field.dim,
        tail_bound=field.evaluate(x).tail_bound,
        iterations_used=n,
        residual=residual,
        group_tol=group_tol,
        neg_inf_floor=neg_inf_floor,
        series_iterations=series_iterations,
        series=series,
    )


def limit_operator_estimate(field: CocycleField, x: BasePoint, n: int):
    """n-th root singular values of A^n(x) plus the right singular frame.

    The roots converge to exp(lambda_i) (0 for the -infinity block); the
    right frame columns converge to the eigenframe of the limit operator at
    x.  Computed by the scaled accumulation, never by the raw product.
    """
    acc = _run_accumulator(field, x, n, field.dim, record=False)
    roots = np.exp(acc.exponents())
    return roots, acc.right_frame()


def oseledets_splitting(
    field: CocycleField,
    x: BasePoint,
    p: int,
    n: int,
    group_tol: float = None,
) -> OseledetsSplitting:
    """Index-p splitting at x from the orbit segment ending at x.

    E1 is the span of the p leading left singular directions of the product
    over [f^{-n}(x), x); these converge to the invariant fast subspace at the
    anchor.  E2 is the orthogonal complement within the truncation.  Requires
    a spectral gap lambda_p > lambda_{p+1} wider than the grouping tolerance.
    """
    d = field.dim
    if not (1 <= p <= d):
        raise RejectedInputError(f"splitting index must satisfy 1 <= p <= {d}, got {p}")
    start = x
    for _ in range(n):
        start = field.base.inverse_step(start)
    acc = ProductSVD(_initial_frame(d, d), record=True)
    for m in field.matrices_along_orbit(start, n):
        acc.push(m)
    raw = acc.exponents()
    residual = _residual_from_history(acc.history(), n)
    tol = max(GROUP_TOL_FLOOR, 5.0 * residual) if group_tol is None else group_tol
    lam_p = raw[p - 1]
    lam_next = raw[p] if p < d else -math.inf
    if not math.isfinite(lam_p):
        raise GapMissingError(f"lambda_{p} is -infinity; no index-{p} splitting", gap=0.0)
    gap = math.inf if lam_next == -math.inf else float(lam_p - lam_next)
    if gap <= tol:
        raise GapMissingError(
            f"no spectral gap at index {p}: lambda_{p} - lambda_{p + 1} = {gap:.3e} <= tol {tol:.3e}",
            gap=gap,
        )
    e1 = acc.left_frame()[:, :p]
    # complement via full QR against E1 (robust also when trailing directions collapsed)
    full, _ = np.linalg.qr(np.column_stack([e1, np.eye(d)]), mode="reduced")
    e2 = full[:, p:d]
    # invariance defect: push one more step and compare A(x) E1 with E1(f(x))
    a_x = field.evaluate(x).entries
    image = a_x @ e1
    acc.push(a_x)
    e1_next = acc.left_frame()[:, :p]
    sv = np.linalg.svd(image, compute_uv=False)
    if sv[-1] < 1e-12 * max(1.0, sv[0]):
        defect = math.pi / 2.0
    else:
        defect = float(np.max(principal_angles(image, e1_next)))
    return OseledetsSplitting(
        index_p=p,
        e1=e1,
        e2=e2,
        anchor_point=x,
        gap=gap,
        invariance_defect=defect,
        iterations_used=n,
    )


def manual_splitting(field: CocycleField, x: BasePoint, e1_basis) -> OseledetsSplitting:
    """Wrap an explicitly given fast subspace as a splitting (for probes/tests)."""
    e1 = np.asarray(e1_basis, dtype=float)
    if e1.ndim == 1:
        e1 = e1[:, None]
    d = field.dim
    q, _ = np.linalg.qr(e1)
    p = q.shape[1]
    full, _ = np.linalg.qr(np.column_stack([q, np.eye(d)]), mode="reduced")
    e2 = full[:, p:d]
    return OseledetsSplitting(
        index_p=p,
        e1=q,
        e2=e2,
        anchor_point=x,
        gap=math.nan,
        invariance_defect=math.nan,
        iterations_used=0,
    )


def exterior_top_exponent(
    field: CocycleField,
    x: BasePoint,
    p: int,
    n: int,
    k: int = 1,
    burn_in: int = None,
    neg_inf_floor: float = NEG_INF_FLOOR,
    cap: int = None,
) -> float:
    """Top exponent of the compound cocycle wedge^p(A) at x.

    Runs the frame propagation with width k (default 1) on the compound
    field.  The rate is taken over the tail window [burn_in, n] (default
    burn_in = n // 2), which removes the initial-alignment transient of a
    thin frame; pass burn_in=0 for the raw (1/n) log norm estimate.
    """
    wedge = exterior_field(field, p, cap=cap)
    acc = _run_accumulator(wedge, x, n, k, record=True)
    g_end = acc.log_sigma[0]
    if not math.isfinite(g_end):
        return -math.inf
    nb = n // 2 if burn_in is None else int(burn_in)
    if not (0 <= nb < n):
        raise RejectedInputError(f"burn_in must lie in [0, n), got {nb}")
    g_start = 0.0 if nb == 0 else acc.history()[nb - 1, 0]
    if not math.isfinite(g_start):
        return -math.inf
    rate = (g_end - g_start) / (n - nb)
    return -math.inf if rate < neg_inf_floor else float(rate)


def entropy(
    field: CocycleField,
    p: int,
    x: BasePoint,
    n: int,
    k: int = None,
    neg_inf_floor: float = NEG_INF_FLOOR,
) -> float:
    """Sum of the leading p exponents at x; -inf if any of them is -inf.

    p = 0 is the empty sum (0.0), used by perturbation bound bookkeeping.
    """
    if p == 0:
        return 0.0
    if not (1 <= p <= field.dim):
        raise RejectedInputError(f"entropy order must satisfy 0 <= p <= {field.dim}, got {p}")
    k = field.dim if k is None else max(int(k), p)
    spec = spectrum(field, x, n, k=k, neg_inf_floor=neg_inf_floor, keep_series=False)
    return spec.entropy(p)


@dataclass(frozen=True)
class SubadditiveSequence:
    """a_n = log sup_sample ||wedge^p(A^n(x))|| for n = 1..n_max, plus inf a_n/n."""

    order_p: int
    values: np.ndarray
    running_inf: np.ndarray

    @property
    def ratios(self) -> np.ndarray:
        n = np.arange(1, len(self.values) + 1)
        return self.values / n


def subadditive_sequence(field: CocycleField, p: int, n_max: int, sample) -> SubadditiveSequence:
    """The sup-norm sequence of compound products over a point sample.

    a_n is exact per point (log ||wedge^p A^n|| equals the sum of the top-p
    log singular values of A^n); the sup is over the provided sample, which
    covers the whole space for periodic systems.
    """
    if n_max < 2:
        raise RejectedInputError("n_max must be >= 2")
    if not (1 <= p <= field.dim):
        raise RejectedInputError(f"order must satisfy 1 <= p <= {field.dim}, got {p}")
    sample = list(sample)
    if not sample:
        raise RejectedInputError("sample must contain at least one point")
    best = np.full(n_max, -np.inf)
    for pt in sample:
        acc = _run_accumulator(field, pt, n_max, field.dim, record=True)
        h = acc.history()  # (n_max, d)
        sums = h[:, :p].sum(axis=1)
        best = np.maximum(best, sums)
    steps = np.arange(1, n_max + 1)
    ratios = best / steps
    running_inf = np.minimum.accumulate(ratios)
    return SubadditiveSequence(order_p=p, values=best, running_inf=running_inf)
