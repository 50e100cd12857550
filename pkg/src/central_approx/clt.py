"""Covariance matrices of the type and overlap central limit theorems.

The scaled type fluctuations sqrt(N)(v/N - nu*) converge to a degenerate
Gaussian whose covariance has the resolvent form M (I - B M)^{-1}: M is the
bare multinomial covariance of the maximizing measure and B the coupling
curvature seen through the relevant contraction.  The same shape appears
for dense overlaps and for the two factor-graph type layers; only M, B and
the basis change.  Degenerate directions (normalization, hard constraints)
are kept in the matrix rather than projected out, so bases stay aligned
with their labels; rank diagnostics travel with the result.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .dense import (
    DenseModelSpec,
    assemble_matrices,
    pair_indices,
    type_log_weights,
)
from .errors import ATInstabilityError, GuardError, NumericalFailure, SingularMatrixError
from .types_core import ProbMeasure, num_types, solve, type_array_blocks

__all__ = [
    "CovarianceResult",
    "dense_type_covariance",
    "overlap_covariance",
    "empirical_type_covariance_oracle",
    "fg_type_covariances",
]

ORACLE_TYPE_GUARD = 10**6


@dataclass(frozen=True)
class CovarianceResult:
    """A (possibly singular) covariance matrix with basis labels and rank."""

    matrix: np.ndarray
    labels: tuple
    rank: int
    min_eigenvalue: float

    @classmethod
    def from_matrix(cls, matrix: np.ndarray, labels: tuple, *,
                    sym_tol: float = 1e-10, psd_tol: float = 1e-9) -> "CovarianceResult":
        matrix = np.asarray(matrix, dtype=float)
        if matrix.shape != (len(labels), len(labels)):
            raise ValueError(f"matrix shape {matrix.shape} does not fit {len(labels)} labels")
        scale = max(1.0, float(np.max(np.abs(matrix))) if matrix.size else 0.0)
        skew = float(np.max(np.abs(matrix - matrix.T))) if matrix.size else 0.0
        if skew > sym_tol * scale:
            raise NumericalFailure(f"covariance asymmetry {skew:.3e} exceeds tolerance")
        sym = 0.5 * (matrix + matrix.T)
        eigs = np.linalg.eigvalsh(sym) if sym.size else np.empty(0)
        min_eig = float(eigs[0]) if eigs.size else 0.0
        if min_eig < -psd_tol * scale:
            raise NumericalFailure(
                f"covariance has eigenvalue {min_eig:.3e}, below the PSD tolerance"
            )
        rank = int(np.sum(eigs > psd_tol * scale)) if eigs.size else 0
        sym.setflags(write=False)
        return cls(matrix=sym, labels=tuple(labels), rank=rank, min_eigenvalue=min_eig)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


def _resolvent_covariance(M: np.ndarray, B: np.ndarray) -> np.ndarray:
    """M (I - B M)^{-1} via one linear solve; raises on a singular middle."""
    middle = np.eye(M.shape[0]) - B @ M
    try:
        return solve(middle.T, M.T).T
    except SingularMatrixError as exc:
        raise ATInstabilityError(f"fluctuation resolvent is singular: {exc}") from exc


def dense_type_covariance(spec: DenseModelSpec, nu_star) -> CovarianceResult:
    """Covariance of sqrt(N)(v/N - nu*) on the X^n symbol basis.

    Returns (S' - S)(I - J D2g J^T (S' - S))^{-1} where S', S are the
    diagonal and outer-product moment matrices of nu* and D2g is the
    coupling Hessian at the maximizing overlaps.
    """
    mats = assemble_matrices(spec, nu_star)
    M = mats.indicator_covariance
    B = mats.pair_products @ mats.hessian @ mats.pair_products.T
    cov = _resolvent_covariance(M, B)
    return CovarianceResult.from_matrix(cov, tuple(map(tuple, spec.symbols)))


def overlap_covariance(spec: DenseModelSpec, nu_star, m: int | None = None) -> CovarianceResult:
    """Covariance of sqrt(N)(q - q*) on the pair basis (a,b), a <= b.

    Returns (U' - U)(I - D2g (U' - U))^{-1}.  Only the annealed case
    m = spec.n is supported; the quenched marginal covariance for m < n
    replicas is not implemented.
    """
    if m is None:
        m = spec.n
    if m < spec.n:
        raise NotImplementedError(
            "quenched overlap covariance for m < n replicas is not implemented"
        )
    if m > spec.n:
        raise ValueError(f"m={m} exceeds the model's replica count n={spec.n}")
    mats = assemble_matrices(spec, nu_star)
    cov = _resolvent_covariance(mats.pair_covariance, mats.hessian)
    return CovarianceResult.from_matrix(cov, tuple(pair_indices(spec.n)))


def empirical_type_covariance_oracle(spec: DenseModelSpec, N: int, *,
                                     guard: int = ORACLE_TYPE_GUARD,
                                     allow_large: bool = False) -> CovarianceResult:
    """Exact covariance of sqrt(N)(v/N - nu*) at finite N, by full summation.

    Weights every type v by multinomial(v) * exp{sum_x v(x) f(x) + N g(q(v))}
    and computes the centered covariance of the scaled fluctuation.  The
    centering removes the maximizer, so nu* never enters: shifting by any
    constant leaves a covariance unchanged.  Validation plumbing for
    dense_type_covariance; cost grows like the number of types.
    """
    K = len(spec.symbols)
    total = num_types(N, K)
    if total > guard and not allow_large:
        raise GuardError(
            f"covariance oracle over {total} types exceeds the guard ({guard}); "
            "pass allow_large=True to proceed"
        )
    blocks = list(type_array_blocks(N, K, guard=guard, allow_large=allow_large))
    V = np.concatenate(blocks, axis=0)
    logw = type_log_weights(spec, N, V)
    w = np.exp(logw - logsumexp(logw))
    freq = V / N
    mean = w @ freq
    X = np.sqrt(N) * (freq - mean)
    cov = (X * w[:, None]).T @ X
    return CovarianceResult.from_matrix(cov, tuple(map(tuple, spec.symbols)))


def fg_type_covariances(ensemble, mu_star, nu_star) -> dict[str, CovarianceResult]:
    """Factor- and variable-type covariances of a random regular ensemble.

    factor:   (T' - T)(I - K C K^T (T' - T))^{-1}   on the X^r word basis
    variable: (V' - V)(I - C (V' - V))^{-1}          on the X letter basis

    with T' = diag(mu*), T = mu* mu*^T, K the per-word letter frequencies,
    V' = K^T T' K, V = nu* nu*^T and C the variable-entropy curvature.
    Words outside the factor support carry zero rows and columns.

    Both matrices describe fluctuations scaled by sqrt(M), M = Nl/r the
    number of factor nodes: sqrt(M)(u/M - mu*) and sqrt(M)(v/N - nu*).
    Under sqrt(N) scaling the variable covariance picks up a factor r/l
    (check: a trivial factor makes v exactly multinomial, so the
    sqrt(N)-scaled covariance is diag(nu*) - nu* nu*^T, which is r/l
    times what the formula gives).
    """
    from .factor_graph import assemble_fg_matrices

    mats = assemble_fg_matrices(ensemble, mu_star, nu_star)
    factor = _resolvent_covariance(
        mats.factor_covariance_bare, mats.letter_freq @ mats.curvature @ mats.letter_freq.T
    )
    variable = _resolvent_covariance(mats.variable_covariance_bare, mats.curvature)
    return {
        "factor": CovarianceResult.from_matrix(factor, mats.word_labels),
        "variable": CovarianceResult.from_matrix(variable, mats.letter_labels),
    }
