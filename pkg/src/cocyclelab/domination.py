"""Certify or refute ell-domination of an index-p splitting along orbits.

The two defining inequalities are checked with restricted-block singular
values: for each orbit point, max_{u in E2} ||A^ell u|| is the largest
singular value of A^ell composed with the E2 injection and
min_{v in E1} ||A^ell v|| the smallest on E1, so the quantified definition
becomes two SVDs per point.  E1 is transported by applying the cocycle and
re-orthonormalizing; E2 is refreshed as the orthogonal complement of the
transported E1.  Verdicts: dominated, failed_norm_floor (the one-step norm
of A on E1 drops below the floor), failed_ratio (the ell-step comparison
fails), no_gap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cocycles import CocycleField
from .dynamics import BasePoint
from .errors import GapMissingError, RejectedInputError
from .lyapunov import OseledetsSplitting, oseledets_splitting, spectrum
from .operators import principal_angles

VERDICT_DOMINATED = "dominated"
VERDICT_FAILED_NB = "failed_norm_floor"
VERDICT_FAILED_ND = "failed_ratio"

CLASS_DOMINATED = "dominated"
CLASS_FAILS_NORM = "fails_norm_floor"
CLASS_FAILS_RATIO = "fails_ratio"
CLASS_NO_GAP = "no_gap"
CLASS_PERIODIC = "periodic_case"

#: One-step norm floor below which the restriction of A to E1 counts as broken.
DEFAULT_THETA_FLOOR = 1e-9

#: Horizon for shift/rotation bases; periodic bases always use their period.
DEFAULT_HORIZON = 1000

RATIO_THRESHOLD = 0.5


@dataclass(frozen=True)
class DominationWitness:
    """Failure evidence: orbit index plus the unit vectors realizing it."""

    orbit_index: int
    u: np.ndarray  # in E2 (None for norm-floor failures)
    v: np.ndarray  # in E1
    value: float  # the failing ratio, or the failing one-step norm


@dataclass(frozen=True)
class DominationCertificate:
    """Outcome of an ell-domination check along an orbit segment.

    theta is the observed one-step norm floor of A on transported E1;
    theta_ell_measured the observed ell-step floor and theta_ell_implied the
    theta**ell bound it is compared against; gamma the minimal principal
    angle between E1 and E2 over the horizon (pi/2 by construction of E2 as
    the orthogonal complement, recorded for the certificate contract).
    """

    index_p: int
    ell: int
    verdict: str
    theta: float
    theta_ell_measured: float
    theta_ell_implied: float
    gamma: float
    max_ratio: float
    horizon: int
    anchor_point: BasePoint
    witness: DominationWitness = None

    def __post_init__(self):
        has_witness = self.witness is not None
        failing = self.verdict in (VERDICT_FAILED_NB, VERDICT_FAILED_ND)
        if has_witness != failing:
            raise RejectedInputError("witness must be present exactly for failure verdicts")

    @property
    def dominated(self) -> bool:
        return self.verdict == VERDICT_DOMINATED


def _complement(e1: np.ndarray) -> np.ndarray:
    d, p = e1.shape
    if p == d:
        return np.zeros((d, 0))
    full, _ = np.linalg.qr(np.column_stack([e1, np.eye(d)]), mode="reduced")
    return full[:, p:d]


def _restricted_svals(m: np.ndarray, basis: np.ndarray) -> np.ndarray:
    """Singular values of m restricted to span(basis) (orthonormal columns)."""
    if basis.shape[1] == 0:
        return np.zeros(0)
    return np.linalg.svd(m @ basis, compute_uv=False)


def _min_direction(m: np.ndarray, basis: np.ndarray) -> np.ndarray:
    """Unit vector in span(basis) realizing the smallest ||m v||."""
    _, _, vt = np.linalg.svd(m @ basis)
    return basis @ vt[-1]


def _max_direction(m: np.ndarray, basis: np.ndarray) -> np.ndarray:
    _, _, vt = np.linalg.svd(m @ basis)
    return basis @ vt[0]


def check_ell_domination(
    field: CocycleField,
    x: BasePoint,
    split: OseledetsSplitting,
    ell: int,
    horizon: int = None,
    theta_floor: float = DEFAULT_THETA_FLOOR,
) -> DominationCertificate:
    """Check the two domination inequalities at every orbit point in the horizon.

    Norm-floor failures take precedence over ratio failures (the latter class
    is defined as ratio failure without norm breakdown).  Failed checks return
    a certificate with a recomputable witness, never an exception.
    """
    if split.anchor_point != x:
        raise RejectedInputError("splitting must be anchored at the checked point")
    if ell < 1 or (horizon is not None and horizon < 1):
        raise RejectedInputError("ell and horizon must be >= 1")
    if horizon is None:
        horizon = field.base.period if field.base.is_periodic else DEFAULT_HORIZON

    p = split.index_p
    d = field.dim
    mats = list(field.matrices_along_orbit(x, horizon + ell))

    e1 = split.e1.copy()
    thetas = np.empty(horizon)
    ratios = np.empty(horizon)
    gammas = np.empty(horizon)
    ell_floor = math.inf
    nb_witness = None
    nd_witness = None

    for t in range(horizon):
        a_t = mats[t]
        e2 = _complement(e1)
        power = np.eye(d)
        for j in range(ell):
            power = mats[t + j] @ power
        sv1_step = _restricted_svals(a_t, e1)
        theta_t = float(sv1_step[-1])
        sv1 = _restricted_svals(power, e1)
        denom = float(sv1[-1])
        ell_floor = min(ell_floor, denom)
        numer = float(_restricted_svals(power, e2)[0]) if e2.shape[1] else 0.0
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio_t = numer / denom if denom > 0.0 else (0.0 if numer == 0.0 else math.inf)
        thetas[t] = theta_t
        ratios[t] = ratio_t
        if e2.shape[1]:
            gammas[t] = float(np.min(principal_angles(e1, e2)))
        else:
            gammas[t] = math.pi / 2.0
        if theta_t < theta_floor and nb_witness is None:
            nb_witness = DominationWitness(
                orbit_index=t, u=None, v=_min_direction(a_t, e1), value=theta_t
            )
        if ratio_t > RATIO_THRESHOLD and nd_witness is None:
            nd_witness = DominationWitness(
                orbit_index=t,
                u=_max_direction(power, e2) if e2.shape[1] else None,
                v=_min_direction(power, e1),
                value=float(ratio_t),
            )
        # transport E1 forward; exact rank loss is a norm-floor failure site
        image = a_t @ e1
        q, r = np.linalg.qr(image)
        diag = np.abs(np.diag(r))
        if diag.min() == 0.0 and nb_witness is None:
            nb_witness = DominationWitness(
                orbit_index=t, u=None, v=_min_direction(a_t, e1), value=0.0
            )
        e1 = q

    theta = float(thetas.min())
    max_ratio = float(np.max(ratios))
    gamma = float(np.min(gammas))

    if nb_witness is not None:
        verdict, witness = VERDICT_FAILED_NB, nb_witness
    elif nd_witness is not None:
        verdict, witness = VERDICT_FAILED_ND, nd_witness
    else:
        verdict, witness = VERDICT_DOMINATED, None

    return DominationCertificate(
        index_p=p,
        ell=ell,
        verdict=verdict,
        theta=theta,
        theta_ell_measured=ell_floor,
        theta_ell_implied=theta**ell,
        gamma=gamma,
        max_ratio=max_ratio,
        horizon=horizon,
        anchor_point=x,
        witness=witness,
    )


def find_min_ell(
    field: CocycleField,
    x: BasePoint,
    split: OseledetsSplitting,
    ell_max: int,
    horizon: int = None,
    theta_floor: float = DEFAULT_THETA_FLOOR,
):
    """Smallest ell <= ell_max whose certificate is dominated.

    Each ell is checked independently (domination is not monotone in ell).
    Returns (ell, certificate) on success, (None, last_certificate) otherwise.
    """
    if ell_max < 1:
        raise RejectedInputError("ell_max must be >= 1")
    last = None
    for ell in range(1, ell_max + 1):
        cert = check_ell_domination(field, x, split, ell, horizon=horizon, theta_floor=theta_floor)
        if cert.dominated:
            return ell, cert
        last = cert
    return None, last


@dataclass(frozen=True)
class PointClassification:
    label: str
    spectrum: object = None
    splitting: OseledetsSplitting = None
    certificate: DominationCertificate = None
    gap: float = None


def gamma_status(
    field: CocycleField,
    x: BasePoint,
    p: int,
    m: int,
    n_spectrum: int,
    horizon: int = None,
    theta_floor: float = DEFAULT_THETA_FLOOR,
) -> PointClassification:
    """Raw m-domination membership test at x (no periodic routing).

    Builds the index-p splitting and runs the m-step certificate; used both
    by classify_point and by the perturbation harness (which exercises the
    mechanism on periodic demo instances as well).
    """
    spec = spectrum(field, x, n_spectrum, keep_series=False)
    try:
        split = oseledets_splitting(field, x, p, n_spectrum)
    except GapMissingError as err:
        return PointClassification(label=CLASS_NO_GAP, spectrum=spec, gap=err.gap)
    cert = check_ell_domination(field, x, split, m, horizon=horizon, theta_floor=theta_floor)
    if cert.dominated:
        label = CLASS_DOMINATED
    elif cert.verdict == VERDICT_FAILED_NB:
        label = CLASS_FAILS_NORM
    else:
        label = CLASS_FAILS_RATIO
    return PointClassification(
        label=label, spectrum=spec, splitting=split, certificate=cert, gap=split.gap
    )


def classify_point(
    field: CocycleField,
    x: BasePoint,
    p: int,
    m: int,
    n_spectrum: int,
    horizon: int = None,
    theta_floor: float = DEFAULT_THETA_FLOOR,
) -> PointClassification:
    """Classify x as dominated / norm-failure / ratio-failure / no-gap.

    Periodic base systems route to the periodic case (handled by the probe's
    explicit estimates instead of the perturbation lemmas).
    """
    if field.base.is_periodic:
        return PointClassification(label=CLASS_PERIODIC)
    return gamma_status(field, x, p, m, n_spectrum, horizon=horizon, theta_floor=theta_floor)


@dataclass(frozen=True)
class AngleProfile:
    gamma_min: float
    angles: np.ndarray
    eigen_angles: np.ndarray = None


def angle_profile(
    field: CocycleField,
    x: BasePoint,
    split: OseledetsSplitting,
    horizon: int,
    eigen_depth: int = None,
) -> AngleProfile:
    """Minimal principal angle between transported E1 and its complement.

    With E2 refreshed as the orthogonal complement the per-point angles are
    pi/2 by construction; the optional eigen-angle diagnostic measures the
    angle between transported E1 and the slow invariant subspace estimated
    from a forward accumulation of depth eigen_depth at each orbit point
    (trailing right-singular frame).
    """
    from .products import ProductSVD

    d = field.dim
    p = split.index_p
    mats = list(field.matrices_along_orbit(x, horizon))
    pts = field.base.orbit(x, horizon)
    e1 = split.e1.copy()
    angles = np.empty(horizon)
    eigen_angles = np.empty(horizon) if eigen_depth else None
    for t in range(horizon):
        e2 = _complement(e1)
        angles[t] = float(np.min(principal_angles(e1, e2))) if e2.shape[1] else math.pi / 2.0
        if eigen_depth:
            acc = ProductSVD(np.eye(d))
            for mm in field.matrices_along_orbit(pts[t], eigen_depth):
                acc.push(mm)
            slow = acc.right_frame()[:, p:]
            eigen_angles[t] = (
                float(np.min(principal_angles(e1, slow))) if slow.shape[1] else math.pi / 2.0
            )
        q, _ = np.linalg.qr(mats[t] @ e1)
        e1 = q
    return AngleProfile(gamma_min=float(angles.min()), angles=angles, eigen_angles=eigen_angles)
