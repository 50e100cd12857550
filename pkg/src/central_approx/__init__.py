"""Asymptotics of annealed partition functions, exact to the constant factor.

The package computes E[Z] (and replica powers E[Z^n]) for mean-field and
sparse factor-graph ensembles two ways: exactly, as guarded sums over
empirical types, and asymptotically, as e^{N F} times a Gaussian constant
factor obtained from a central approximation of the type sum.  Agreement of
the two routes is the core acceptance test.
"""

__version__ = "0.1.0"

from .types_core import Alphabet, ProbMeasure, TypeVector  # noqa: E402
from .dense import (  # noqa: E402
    DenseModelSpec,
    PolyOverlap,
    asymptotic_estimate,
    central_approx_constant,
    exact_type_sum,
    field_local,
    solve_variational,
    zero_local,
)
from .replica_rs import (  # noqa: E402
    RSParams,
    rs_correction_n0,
    rs_determinant,
    sk_paramagnetic_correction,
)
from .clt import dense_type_covariance, fg_type_covariances, overlap_covariance  # noqa: E402
from .factor_graph import (  # noqa: E402
    EnsembleSpec,
    exact_expected_Z,
    exact_expected_Z_exact,
    fg_asymptotic_estimate,
    fg_constant_log,
    lattice_step_s,
    ldpc_expected_codewords,
    make_ensemble,
    solve_bethe,
)

__all__ = [
    "Alphabet",
    "ProbMeasure",
    "TypeVector",
    "DenseModelSpec",
    "PolyOverlap",
    "zero_local",
    "field_local",
    "exact_type_sum",
    "solve_variational",
    "central_approx_constant",
    "asymptotic_estimate",
    "RSParams",
    "rs_determinant",
    "rs_correction_n0",
    "sk_paramagnetic_correction",
    "dense_type_covariance",
    "overlap_covariance",
    "fg_type_covariances",
    "EnsembleSpec",
    "make_ensemble",
    "exact_expected_Z",
    "exact_expected_Z_exact",
    "solve_bethe",
    "fg_constant_log",
    "fg_asymptotic_estimate",
    "lattice_step_s",
    "ldpc_expected_codewords",
]
