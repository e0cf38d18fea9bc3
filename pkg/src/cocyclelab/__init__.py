"""cocyclelab: numerical experiments with compact linear cocycles.

Estimates Oseledets-Ruelle Lyapunov spectra (including -infinity exponents),
certifies or refutes ell-dominated splittings, computes exterior-power
entropy, and runs budgeted perturbation experiments exhibiting the
dominated-splitting-versus-trivial-spectrum dichotomy on concrete base
systems (Bernoulli shifts, circle rotations, periodic orbits).
"""

__version__ = "0.1.0"

from .cocycles import CocycleField, Patch, cocycle_distance, exterior_field
from .domination import (
    AngleProfile,
    DominationCertificate,
    DominationWitness,
    PointClassification,
    angle_profile,
    check_ell_domination,
    classify_point,
    find_min_ell,
    gamma_status,
)
from .dynamics import (
    BasePoint,
    BaseSystem,
    BernoulliPoint,
    PeriodicPoint,
    RotationPoint,
)
from .errors import (
    CapacityError,
    CocycleLabError,
    ConfigError,
    DimensionMismatchError,
    GapMissingError,
    HypothesisFailedError,
    MissingSeriesError,
    NeedsLargerMError,
    NormFloorAbsentError,
    NumericError,
    RejectedInputError,
)
from .lyapunov import (
    LyapunovSpectrum,
    OseledetsSplitting,
    SubadditiveSequence,
    entropy,
    exterior_top_exponent,
    limit_operator_estimate,
    manual_splitting,
    oseledets_splitting,
    spectrum,
    subadditive_sequence,
)
from .operators import (
    PlaneRotation,
    TruncatedOperator,
    compose,
    exterior_power,
    operator_norm,
    plane_rotation_matrix,
    principal_angles,
    rotation_in_span,
    subspace_angle,
    svd,
)
from .perturbation import (
    GlobalPerturbationReport,
    KillReport,
    MixReport,
    PerturbationPlan,
    ProbeConfig,
    ProbeReport,
    dichotomy_probe,
    global_perturbation,
    kill_direction,
    max_rotation_angle,
    mix_directions,
    rotate_at_point,
)
from .products import ProductSVD, accumulate_product
from .runner import emit_plot_data, run, run_config

__all__ = [name for name in dir() if not name.startswith("_")]
