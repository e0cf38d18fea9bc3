"""Pointwise perturbations of cocycle fields and the dichotomy probe.

Three mechanisms, all realized as patches (pointwise overrides):

* rotate_at_point: compose A(x) with a small plane rotation; the sup-distance
  obeys ||A - B|| <= ||A|| 2 sin(xi/2), and the admissible angle for a budget
  eps is xi_0 = 2 arcsin(eps / (2 ||A||)).
* kill_direction: at an orbit site where the restriction of A to the fast
  subspace nearly annihilates a unit vector, replace A by the operator that
  agrees with it on the orthogonal complement and vanishes on that vector;
  the p-th compound norm of the patched product drops to exactly zero.
* mix_directions: distribute a quarter-turn from a fast direction toward the
  image of the slow subspace across m orbit sites, each within the rotation
  budget; on period-1 orbits the schedule collapses to one constant patch
  that accumulates the turn through revisits.

The dichotomy probe classifies sampled points (trivial spectrum, dominated,
or perturbable) and quantifies the entropy drop achieved within a given
sup-distance budget; periodic points also get the explicit domination scale
derived from their spectral gap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .cocycles import CocycleField, cocycle_distance
from .dynamics import BasePoint
from .errors import (
    HypothesisFailedError,
    NeedsLargerMError,
    NormFloorAbsentError,
    NumericError,
    RejectedInputError,
)
from .domination import (
    CLASS_DOMINATED,
    CLASS_FAILS_NORM,
    CLASS_FAILS_RATIO,
    CLASS_NO_GAP,
    DEFAULT_THETA_FLOOR,
    check_ell_domination,
    find_min_ell,
    gamma_status,
)
from .lyapunov import (
    NEG_INF_FLOOR,
    OseledetsSplitting,
    exterior_top_exponent,
    oseledets_splitting,
    spectrum,
)
from .operators import (
    TruncatedOperator,
    exterior_power,
    operator_norm,
    plane_rotation_matrix,
    principal_angles,
    rotation_in_span,
)

TOTAL_MIX_TURN = math.pi / 2.0


@dataclass(frozen=True)
class PerturbationPlan:
    """What a perturbation did: mechanism, budget, and the patches applied."""

    kind: str
    budget: float
    patch_points: tuple
    distance_achieved: float


def max_rotation_angle(sup_norm: float, eps: float) -> float:
    """Largest admissible rotation angle for a sup-distance budget eps."""
    if eps <= 0:
        raise RejectedInputError("rotation budget must be positive")
    if sup_norm == 0.0 or eps >= 2.0 * sup_norm:
        return math.pi
    return 2.0 * math.asin(eps / (2.0 * sup_norm))


def _rotation_matrix_for_plane(dim: int, plane, angle: float) -> np.ndarray:
    if isinstance(plane, tuple) and len(plane) == 2 and all(isinstance(i, (int, np.integer)) for i in plane):
        return plane_rotation_matrix(dim, int(plane[0]), int(plane[1]), angle)
    basis = np.asarray(plane, dtype=float)
    if basis.shape != (dim, 2):
        raise RejectedInputError(f"rotation plane must be an index pair or a {dim} x 2 basis")
    return rotation_in_span(basis[:, 0], basis[:, 1], angle)


def rotate_at_point(
    field: CocycleField, x: BasePoint, plane, xi: float, eps: float
) -> CocycleField:
    """Patch the field at x with A(x) composed with a rotation by xi in `plane`.

    The angle must satisfy xi <= 2 arcsin(eps / (2 ||A||)); the achieved
    sup-distance is verified against ||A|| 2 sin(xi/2) before returning.
    """
    if xi < 0:
        raise RejectedInputError("rotation angle must be nonnegative")
    sup = field.sup_norm()
    xi_max = max_rotation_angle(sup, eps)
    if xi > xi_max + 1e-12:
        raise RejectedInputError(
            f"rotation angle {xi:.6g} exceeds the admissible bound {xi_max:.6g} "
            f"for budget {eps:.6g} at sup-norm {sup:.6g}"
        )
    a_x = field.evaluate(x)
    rot = _rotation_matrix_for_plane(field.dim, plane, xi)
    patched = field.with_patch(
        x, TruncatedOperator(a_x.entries @ rot, a_x.tail_bound), note=f"rotate(xi={xi:.6g})"
    )
    achieved = cocycle_distance(field, patched)
    bound = operator_norm(a_x) * 2.0 * math.sin(xi / 2.0)
    if achieved > bound + 1e-9 or achieved > eps + 1e-9:
        raise NumericError(
            f"rotation patch distance {achieved:.6g} exceeded its bound "
            f"(norm bound {bound:.6g}, budget {eps:.6g})"
        )
    return patched


@dataclass(frozen=True)
class KillReport:
    site_index: int
    site_point: BasePoint
    direction: np.ndarray
    op_distance: float
    product_length: int
    compound_norm_after: float
    rank_after: int
    order_p: int
    plan: PerturbationPlan


def kill_direction(
    field: CocycleField,
    x: BasePoint,
    p: int,
    n_target: int,
    eps: float,
    split: OseledetsSplitting = None,
    n_split: int = 200,
):
    """Zero the near-kernel fast direction at the first qualifying orbit site.

    Searches f^N(x), N < n_target, for a unit v in the transported fast
    subspace with ||A(f^N(x)) v|| < eps; the patched operator agrees with A
    on the orthogonal complement of v and vanishes on v.  The report records
    the verified collapse of the p-th compound norm of the patched product.
    """
    if eps <= 0 or n_target < 1:
        raise RejectedInputError("eps must be positive and n_target >= 1")
    if split is None:
        split = oseledets_splitting(field, x, p, n_split)
    if split.anchor_point != x:
        raise RejectedInputError("splitting must be anchored at the perturbed point")

    pts = field.base.orbit(x, n_target)
    e1 = split.e1.copy()
    site = None
    for t in range(n_target):
        a_t = field.evaluate(pts[t]).entries
        u_, s_, vt_ = np.linalg.svd(a_t @ e1)
        if s_[-1] < eps:
            v = e1 @ vt_[-1]
            site = (t, pts[t], v, float(s_[-1]))
            break
        q, _ = np.linalg.qr(a_t @ e1)
        e1 = q
    if site is None:
        raise NormFloorAbsentError(
            f"no orbit site within {n_target} steps carries a fast direction with "
            f"one-step norm below {eps:.3g}; the ratio-failure route (mix_directions) applies instead"
        )
    t, pt, v, s_min = site
    a_site = field.evaluate(pt)
    killer = np.eye(field.dim) - np.outer(v, v)
    patched_op = TruncatedOperator(a_site.entries @ killer, a_site.tail_bound)
    patched = field.with_patch(pt, patched_op, note=f"kill(site={t})")

    prod = patched.random_product(x, n_target)
    rank_after = int(np.linalg.matrix_rank(prod.entries))
    compound_after = operator_norm(exterior_power(prod, p))
    op_distance = float(np.linalg.norm(a_site.entries - patched_op.entries, 2))
    plan = PerturbationPlan(
        kind="kill",
        budget=eps,
        patch_points=(pt,),
        distance_achieved=cocycle_distance(field, patched),
    )
    report = KillReport(
        site_index=t,
        site_point=pt,
        direction=v,
        op_distance=op_distance,
        product_length=n_target,
        compound_norm_after=compound_after,
        rank_after=rank_after,
        order_p=p,
        plan=plan,
    )
    return patched, report


@dataclass(frozen=True)
class MixReport:
    hypothesis_ratio: float
    source_direction: np.ndarray
    target_direction: np.ndarray
    achieved_direction: np.ndarray
    residual_angle: float
    angles: tuple
    scheduled_m: int
    collapsed: bool
    applications: int
    min_feasible_m: int
    plan: PerturbationPlan


def _line_angle(v: np.ndarray, u: np.ndarray):
    """Angle in [0, pi/2] between the lines spanned by unit vectors v, u,
    and u oriented to the same half-space as v."""
    c = float(v @ u)
    if c < 0:
        u = -u
        c = -c
    w = u - c * v
    s = float(np.linalg.norm(w))
    return math.atan2(s, c), u, (w / s if s > 1e-300 else None)


def mix_directions(
    field: CocycleField,
    x: BasePoint,
    p: int,
    m: int,
    delta: float,
    split: OseledetsSplitting = None,
    n_split: int = 200,
):
    """Carry a fast unit vector into the image of the slow subspace via m
    budgeted plane rotations along the orbit.

    Requires the comparison ratio sigma_max(A^m|E2) / sigma_min(A^m|E1) >= 1/2
    at x (the ratio-failure condition).  Each site's rotation stays within
    the budget 2 arcsin(delta / (2 ||A||)); if the quarter-turn cannot be
    divided that finely a NeedsLargerMError reports the minimal feasible m.
    Period-1 orbits collapse the schedule into a single constant patch whose
    rotation accumulates through revisits.
    """
    if m < 1 or delta <= 0:
        raise RejectedInputError("m must be >= 1 and delta positive")
    d = field.dim
    if p >= d:
        raise RejectedInputError("mixing requires a nonempty slow complement (p < d)")
    if split is None:
        split = oseledets_splitting(field, x, p, n_split)
    if split.anchor_point != x:
        raise RejectedInputError("splitting must be anchored at the perturbed point")

    base = field.base
    collapsed = base.is_periodic and base.period == 1
    if base.is_periodic and not collapsed and m > base.period:
        raise RejectedInputError(
            f"schedule of length {m} does not fit in a period-{base.period} orbit"
        )

    # hypothesis at x via restricted-block singular values of the m-step product
    pts = base.orbit(x, m)
    power = np.eye(d)
    for t in range(m):
        power = field.evaluate(pts[t]).entries @ power
    sv_e1 = np.linalg.svd(power @ split.e1, compute_uv=False)
    sv_e2 = np.linalg.svd(power @ split.e2, compute_uv=False)
    ratio = float(sv_e2[0] / sv_e1[-1]) if sv_e1[-1] > 0 else math.inf
    if ratio < 0.5:
        raise HypothesisFailedError(
            f"comparison ratio {ratio:.6g} < 1/2: the slow block is strictly dominated "
            f"at this scale, mixing does not apply",
            ratio=ratio,
        )

    sup = field.sup_norm()
    xi_max = max_rotation_angle(sup, delta)
    min_feasible = max(1, math.ceil(TOTAL_MIX_TURN / xi_max))
    per_site = TOTAL_MIX_TURN / m
    if per_site > xi_max + 1e-12:
        raise NeedsLargerMError(
            f"per-site angle {per_site:.6g} exceeds the budgeted maximum {xi_max:.6g}; "
            f"minimal feasible m is {min_feasible}",
            min_feasible_m=min_feasible,
        )

    # source: least-expanding fast direction; target: most robust slow image
    _, _, vt1 = np.linalg.svd(power @ split.e1)
    v0 = split.e1 @ vt1[-1]
    _, _, vt2 = np.linalg.svd(power @ split.e2)
    u0 = split.e2 @ vt2[0]
    target = power @ u0
    target_norm = np.linalg.norm(target)
    if target_norm == 0.0:
        raise HypothesisFailedError("the slow image vanishes; nothing to mix into", ratio=0.0)
    target_dir = target / target_norm

    patched = field
    angles = []
    if collapsed:
        xi = per_site
        a_x = field.evaluate(x)
        rot = rotation_in_span(v0, u0, xi)
        patched = field.with_patch(
            x, TruncatedOperator(a_x.entries @ rot, a_x.tail_bound), note=f"mix(xi={xi:.6g})"
        )
        angles = [xi] * m
        cur = v0.copy()
        bmat = patched.evaluate(x).entries
        for _ in range(m):
            cur = bmat @ cur
            cur /= np.linalg.norm(cur)
        achieved = cur
    else:
        cur = v0.copy()
        u_traj = u0.copy()
        for j in range(m):
            pt = pts[j]
            a_j = patched.evaluate(pt)
            u_hat = u_traj / np.linalg.norm(u_traj)
            phi, u_hat, w_hat = _line_angle(cur, u_hat)
            remaining = m - j
            xi = phi / remaining
            if xi > xi_max + 1e-12:
                raise NeedsLargerMError(
                    f"site {j} needs angle {xi:.6g} > budget {xi_max:.6g} after transport "
                    f"distortion; retry with m >= {max(min_feasible, 2 * m)}",
                    min_feasible_m=max(min_feasible, 2 * m),
                )
            if w_hat is not None and xi > 0:
                rot = rotation_in_span(cur, w_hat, xi)
                new_op = TruncatedOperator(a_j.entries @ rot, a_j.tail_bound)
                patched = patched.with_patch(pt, new_op, note=f"mix(site={j}, xi={xi:.6g})")
                step_mat = new_op.entries
            else:
                step_mat = a_j.entries
            angles.append(xi)
            cur = step_mat @ cur
            nrm = np.linalg.norm(cur)
            if nrm == 0.0:
                raise NumericError("mixed vector collapsed during the schedule")
            cur /= nrm
            u_traj = field.evaluate(pt).entries @ u_traj
            if np.linalg.norm(u_traj) == 0.0:
                raise NumericError("target trajectory collapsed during the schedule")
        achieved = cur

    residual = float(np.min(principal_angles(achieved[:, None], target_dir[:, None])))
    distance = cocycle_distance(field, patched)
    if distance > delta + 1e-9:
        raise NumericError(f"mixing patches exceeded the budget: {distance:.6g} > {delta:.6g}")
    plan = PerturbationPlan(
        kind="mix",
        budget=delta,
        patch_points=tuple(pt.point for pt in patched.patches[: len(patched.patches) - len(field.patches)]),
        distance_achieved=distance,
    )
    report = MixReport(
        hypothesis_ratio=ratio,
        source_direction=v0,
        target_direction=target_dir,
        achieved_direction=achieved,
        residual_angle=residual,
        angles=tuple(angles),
        scheduled_m=m,
        collapsed=collapsed,
        applications=m,
        min_feasible_m=min_feasible,
        plan=plan,
    )
    return patched, report


def _half_budget_m(field: CocycleField, requested_m: int, delta: float) -> int:
    """Schedule length used by the harnesses: at least the requested m, and
    fine enough that each site uses at most half the admissible angle."""
    xi_max = max_rotation_angle(field.sup_norm(), delta)
    return max(requested_m, math.ceil(TOTAL_MIX_TURN / (0.5 * xi_max)))


def _windowed_top_exponent(field: CocycleField, x: BasePoint, p: int, n: int) -> float:
    """(1/n) log of the top compound growth over the window [x, f^n(x))."""
    return exterior_top_exponent(field, x, p, n, burn_in=0)


@dataclass(frozen=True)
class PointPerturbationRecord:
    point: BasePoint
    status: str
    mechanism: str = None
    before: float = None
    after: float = None
    drop: float = None
    distance: float = None
    detail: object = None
    error: str = None


@dataclass(frozen=True)
class GlobalPerturbationReport:
    order_p: int
    scale_m: int
    scheduled_m: int
    budget_delta: float
    eps: float
    lambda_p: float
    lambda_next: float
    leading_sum: float
    bound_rhs: float
    branch: str  # "finite" or "minus_infinity"
    nothing_to_perturb: bool
    distance_achieved: float
    records: tuple
    bound_met: bool

    @property
    def perturbed_points(self):
        return [r for r in self.records if r.mechanism in ("kill", "mix")]


def global_perturbation(
    field: CocycleField,
    p: int,
    m: int,
    delta: float,
    eps: float,
    sample=None,
    sample_count: int = 8,
    n_spectrum: int = 2000,
    n_entropy: int = None,
    horizon: int = None,
    theta_floor: float = DEFAULT_THETA_FLOOR,
):
    """Perturb every sampled point where the index-p splitting fails to
    m-dominate, and compare the resulting top compound exponent against the
    averaged-gap bound (or -eps when lambda_{p+1} is -infinity).

    Norm-floor failures get the kill mechanism, ratio failures the mixing
    schedule (placed around the middle of the evaluation window on
    non-periodic orbits).  Entropies are finite-window estimates over
    n_entropy iterations at each perturbed point; a patch on finitely many
    orbit points cannot move a true asymptotic exponent, so the window value
    is the quantity the report speaks about.
    """
    if n_entropy is None:
        n_entropy = n_spectrum
    base = field.base
    if sample is not None:
        points = list(sample)
    elif base.is_periodic:
        points = base.full_orbit_points()
    else:
        points = base.sample_measure(sample_count)
    if not points:
        raise RejectedInputError("no points to examine")

    ref_spec = spectrum(field, points[0], n_spectrum, keep_series=False)
    lam = ref_spec.top(min(p + 1, field.dim)) if not ref_spec.all_minus_infinity else []
    if len(lam) < p or (lam and lam[p - 1] == -math.inf):
        raise RejectedInputError(f"lambda_{p} is not finite at the reference point; no index-{p} bound")
    lam_p = lam[p - 1]
    lam_next = lam[p] if len(lam) > p else -math.inf
    leading_sum = ref_spec.entropy(p - 1) if p > 1 else 0.0
    if lam_next == -math.inf:
        branch = "minus_infinity"
        bound_rhs = -eps
    else:
        branch = "finite"
        bound_rhs = leading_sum + 0.5 * (lam_p + lam_next) + eps

    m_sched = _half_budget_m(field, m, delta)
    current = field
    records = []
    for pt in points:
        status = gamma_status(field, pt, p, m, n_spectrum, horizon=horizon, theta_floor=theta_floor)
        if status.label == CLASS_DOMINATED:
            records.append(PointPerturbationRecord(point=pt, status=status.label))
            continue
        if status.label == CLASS_NO_GAP:
            records.append(PointPerturbationRecord(point=pt, status=status.label))
            continue
        before = _windowed_top_exponent(current, pt, p, n_entropy)
        try:
            if status.label == CLASS_FAILS_NORM:
                current, detail = kill_direction(
                    current, pt, p, n_target=n_entropy, eps=delta, split=status.splitting
                )
                mechanism = "kill"
            else:
                anchor, split_at = _mixing_anchor(current, pt, p, m, n_entropy, n_spectrum)
                current, detail = mix_directions(
                    current, anchor, p, m_sched, delta, split=split_at
                )
                mechanism = "mix"
        except (HypothesisFailedError, NeedsLargerMError, NormFloorAbsentError) as err:
            records.append(
                PointPerturbationRecord(point=pt, status=status.label, error=str(err))
            )
            continue
        after = _windowed_top_exponent(current, pt, p, n_entropy)
        records.append(
            PointPerturbationRecord(
                point=pt,
                status=status.label,
                mechanism=mechanism,
                before=before,
                after=after,
                drop=before - after if after != -math.inf else math.inf,
                distance=detail.plan.distance_achieved,
                detail=detail,
            )
        )

    perturbed = [r for r in records if r.mechanism is not None]
    nothing = not perturbed
    distance = cocycle_distance(field, current)
    if distance > delta + 1e-9:
        raise NumericError(f"global perturbation exceeded its budget: {distance:.6g} > {delta:.6g}")
    bound_met = bool(perturbed) and all(r.after < bound_rhs for r in perturbed)
    report = GlobalPerturbationReport(
        order_p=p,
        scale_m=m,
        scheduled_m=m_sched,
        budget_delta=delta,
        eps=eps,
        lambda_p=lam_p,
        lambda_next=lam_next,
        leading_sum=leading_sum,
        bound_rhs=bound_rhs,
        branch=branch,
        nothing_to_perturb=nothing,
        distance_achieved=distance,
        records=tuple(records),
        bound_met=bound_met,
    )
    return current, report


def _mixing_anchor(field: CocycleField, pt: BasePoint, p: int, m: int, n_entropy: int, n_split: int):
    """Mixing site around the middle of the evaluation window.

    Searches outward from s = n_entropy // 2 for an iterate whose splitting
    satisfies the comparison hypothesis; periodic orbits stay at the point
    itself (the schedule collapses or wraps there).
    """
    base = field.base
    if base.is_periodic:
        return pt, None
    s_mid = n_entropy // 2
    candidates = [s_mid]
    for off in range(1, 9):
        candidates.extend([s_mid + off, s_mid - off])
    last_err = None
    for s in candidates:
        if s < 0:
            continue
        anchor = pt
        for _ in range(s):
            anchor = base.step(anchor)
        try:
            split = oseledets_splitting(field, anchor, p, min(n_split, 400))
            d = field.dim
            pts = base.orbit(anchor, m)
            power = np.eye(d)
            for t in range(m):
                power = field.evaluate(pts[t]).entries @ power
            sv1 = np.linalg.svd(power @ split.e1, compute_uv=False)
            sv2 = np.linalg.svd(power @ split.e2, compute_uv=False)
            ratio = float(sv2[0] / sv1[-1]) if sv1[-1] > 0 else math.inf
            if ratio >= 0.5:
                return anchor, split
            last_err = HypothesisFailedError(
                f"comparison ratio {ratio:.6g} < 1/2 near the window middle", ratio=ratio
            )
        except Exception as err:  # keep scanning nearby iterates
            last_err = err
    raise last_err if last_err is not None else HypothesisFailedError(
        "no admissible mixing site near the window middle", ratio=None
    )


@dataclass(frozen=True)
class ProbeConfig:
    sample_count: int = 8
    n_spectrum: int = 2000
    n_entropy: int = None
    horizon: int = None
    pinned_p: int = None
    pinned_m: int = None
    delta: float = 0.2
    eps: float = 1e-3
    ell_max: int = 64
    theta_floor: float = DEFAULT_THETA_FLOOR
    neg_inf_floor: float = NEG_INF_FLOOR


@dataclass(frozen=True)
class PeriodicEstimate:
    """Explicit domination scale for a periodic point with a gap at p."""

    branch: str  # "finite" or "minus_infinity"
    n_steps: int
    eps_used: float
    certified_m: int = None


@dataclass(frozen=True)
class ProbePointRecord:
    point: BasePoint
    branch: str  # "null_spectrum" | "dominated" | "perturbed" | "no_gap"
    order_p: int = None
    scale_m: int = None
    exponents: tuple = None
    certificate: object = None
    periodic_estimate: PeriodicEstimate = None
    before: float = None
    after: float = None
    drop: float = None
    distance: float = None
    mechanism: str = None
    decay_check: bool = None
    error: str = None


@dataclass(frozen=True)
class ProbeReport:
    config: ProbeConfig
    records: tuple
    gamma_frequency: float
    gamma_confidence: float

    def branches(self):
        return [r.branch for r in self.records]


def _periodic_scale(lam_p: float, lam_next: float) -> PeriodicEstimate:
    """Smallest N with the gap-driven ratio bound below 1/2.

    Finite gap: exp(N (lam_next - lam_p)) < 1/2.  When lam_next is
    -infinity, an eps with lam_p > -eps gives exp(N (-lam_p - eps)) < 1/2;
    eps is chosen so the decay rate is at least log 2 per step.
    """
    ln2 = math.log(2.0)
    if lam_next != -math.inf:
        gap = lam_p - lam_next
        n_steps = int(ln2 / gap) + 1
        return PeriodicEstimate(branch="finite", n_steps=n_steps, eps_used=0.0)
    eps4 = max(ln2 - lam_p, 1e-9)
    rate = lam_p + eps4
    n_steps = int(ln2 / rate) + 1
    return PeriodicEstimate(branch="minus_infinity", n_steps=n_steps, eps_used=eps4)


def dichotomy_probe(field: CocycleField, config: ProbeConfig = ProbeConfig()) -> ProbeReport:
    """Classify each sampled point into exactly one dichotomy branch.

    Trivial spectrum (all exponents -infinity) records the null branch.
    Otherwise the probe selects the splitting index (pinned or the largest
    gap), certifies m-domination (periodic points first compute the explicit
    scale from their gap), and where certification fails applies the
    matching perturbation and quantifies the entropy drop achieved within
    the distance budget.  A report is always produced.
    """
    base = field.base
    n_entropy = config.n_entropy if config.n_entropy is not None else config.n_spectrum
    points = base.full_orbit_points() if base.is_periodic else base.sample_measure(config.sample_count)
    records = []
    for pt in points:
        records.append(_probe_point(field, pt, config, n_entropy))
    n_gamma = sum(1 for r in records if r.branch == "perturbed")
    freq = n_gamma / len(records)
    conf = 1.96 * math.sqrt(max(freq * (1.0 - freq), 1e-12) / len(records))
    return ProbeReport(config=config, records=tuple(records), gamma_frequency=freq, gamma_confidence=conf)


def _probe_point(field: CocycleField, pt: BasePoint, config: ProbeConfig, n_entropy: int) -> ProbePointRecord:
    base = field.base
    spec = spectrum(field, pt, config.n_spectrum, neg_inf_floor=config.neg_inf_floor, keep_series=False)
    if spec.all_minus_infinity:
        return ProbePointRecord(point=pt, branch="null_spectrum", exponents=spec.finite_exponents)
    p = config.pinned_p if config.pinned_p is not None else spec.largest_gap_index()
    exp = spec.expanded()
    if p < 1 or p > len(exp) or exp[p - 1] == -math.inf:
        return ProbePointRecord(point=pt, branch="no_gap", order_p=p, exponents=spec.finite_exponents)
    lam_p = exp[p - 1]
    lam_next = exp[p] if p < len(exp) else -math.inf
    if lam_p - lam_next <= spec.group_tol and lam_next != -math.inf:
        return ProbePointRecord(point=pt, branch="no_gap", order_p=p, exponents=spec.finite_exponents)

    try:
        split = oseledets_splitting(field, pt, p, config.n_spectrum)
    except Exception:
        return ProbePointRecord(point=pt, branch="no_gap", order_p=p, exponents=spec.finite_exponents)

    periodic_estimate = None
    if base.is_periodic:
        periodic_estimate = _periodic_scale(lam_p, lam_next)

    if config.pinned_m is not None:
        m = config.pinned_m
        cert = check_ell_domination(
            field, pt, split, m, horizon=config.horizon, theta_floor=config.theta_floor
        )
        if cert.dominated:
            return ProbePointRecord(
                point=pt, branch="dominated", order_p=p, scale_m=m,
                exponents=spec.finite_exponents, certificate=cert,
                periodic_estimate=periodic_estimate,
            )
        return _perturb_record(field, pt, p, m, cert, spec, config, n_entropy, periodic_estimate)

    if periodic_estimate is not None:
        start_m = periodic_estimate.n_steps
        for m in range(start_m, config.ell_max + 1):
            cert = check_ell_domination(
                field, pt, split, m, horizon=config.horizon, theta_floor=config.theta_floor
            )
            if cert.dominated:
                periodic_estimate = PeriodicEstimate(
                    branch=periodic_estimate.branch,
                    n_steps=periodic_estimate.n_steps,
                    eps_used=periodic_estimate.eps_used,
                    certified_m=m,
                )
                return ProbePointRecord(
                    point=pt, branch="dominated", order_p=p, scale_m=m,
                    exponents=spec.finite_exponents, certificate=cert,
                    periodic_estimate=periodic_estimate,
                )
        return _perturb_record(field, pt, p, config.ell_max, cert, spec, config, n_entropy, periodic_estimate)

    ell, cert = find_min_ell(
        field, pt, split, config.ell_max, horizon=config.horizon, theta_floor=config.theta_floor
    )
    if ell is not None:
        return ProbePointRecord(
            point=pt, branch="dominated", order_p=p, scale_m=ell,
            exponents=spec.finite_exponents, certificate=cert,
        )
    return _perturb_record(field, pt, p, config.ell_max, cert, spec, config, n_entropy, None)


def _perturb_record(field, pt, p, m, cert, spec, config, n_entropy, periodic_estimate):
    before = _windowed_top_exponent(field, pt, p, n_entropy)
    exp = spec.expanded()
    lam_next = exp[p] if p < len(exp) else -math.inf
    try:
        if cert.verdict == "failed_norm_floor":
            patched, detail = kill_direction(field, pt, p, n_target=n_entropy, eps=config.delta)
            mechanism = "kill"
        else:
            anchor, split_at = _mixing_anchor(field, pt, p, m, n_entropy, config.n_spectrum)
            m_sched = _half_budget_m(field, m, config.delta)
            patched, detail = mix_directions(field, anchor, p, m_sched, config.delta, split=split_at)
            mechanism = "mix"
    except Exception as err:
        return ProbePointRecord(
            point=pt, branch="perturbed", order_p=p, scale_m=m,
            exponents=spec.finite_exponents, certificate=cert,
            periodic_estimate=periodic_estimate, error=str(err),
        )
    after = _windowed_top_exponent(patched, pt, p, n_entropy)
    decay_check = None
    if lam_next == -math.inf:
        # a-posteriori rate check of the collapsed compound norm
        decay_check = bool(after <= -config.eps)
    return ProbePointRecord(
        point=pt, branch="perturbed", order_p=p, scale_m=m,
        exponents=spec.finite_exponents, certificate=cert,
        periodic_estimate=periodic_estimate,
        before=before, after=after,
        drop=(before - after) if after != -math.inf else math.inf,
        distance=detail.plan.distance_achieved,
        mechanism=mechanism, decay_check=decay_check,
    )
