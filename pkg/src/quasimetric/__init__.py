"""Analysis on finite quasi-metric spaces: slopes, symmetry, curves and composition operators."""

import os as _os

# QML_THREADS caps the BLAS/OpenMP pools; it only takes effect if set before numpy loads
if _os.environ.get("QML_THREADS"):
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ.setdefault(_var, _os.environ["QML_THREADS"])

from .banach_stone import (  # noqa: E402
    AlgebraOperator,
    FunctionAlgebra,
    IsoReport,
    averaging_operator,
    compose_operator,
    cone_norm,
    lipschitz_bound_check,
    multiplicative_functionals,
    recover_tau,
    verify_composition,
    verify_iso,
)
from .descent import CompatibilityWitness, NoWitness, check_metric_compatibility, descent_modulus  # noqa: E402
from .errors import *  # noqa: E402,F401,F403
from .geometry import (  # noqa: E402
    Curve,
    curve_length,
    curve_on,
    quasiconvexity_constant,
    verify_length_lemma,
    verify_upper_gradient,
)
from .qspace import (  # noqa: E402
    QuasiMetricSpace,
    SpaceRecipe,
    backward_ball,
    blend,
    build_space,
    forward_ball,
    from_matrix,
    grid,
    path_quasimetric,
    reverse,
    symmetrize,
)
from .slope import (  # noqa: E402
    LadderConfig,
    ScalarField,
    SlopeEstimate,
    ascent_slope_at,
    bind,
    descent_slope_at,
    from_function,
    lip_at,
    separation_field,
    slip_at,
    slip_sup,
    truncated_distance_field,
    verify_constant_ordering,
    verify_lip_decomposition,
)
from .symmetry import SymmetryReport, classify_symmetry, index_of_symmetry, pointwise_sigma, reversibility  # noqa: E402

__version__ = "0.1.0"
