"""Combinatorics over empirical types plus a small linear-algebra kernel.

Everything downstream reduces to weighted sums over type vectors (integer
count vectors with a fixed total) and to determinants of moderately sized
moment matrices.  This module owns both primitives:

* exact and log-gamma multinomial coefficients, entropy, and the local
  (Gaussian) approximation of a multinomial around a target measure;
* deterministic lexicographic enumeration of all types, with size guards
  and a batched array variant for vectorized consumers;
* ``det`` / ``solve`` / ``inv`` wrappers around an LU factorization with
  partial pivoting and an explicit singularity signal.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np
from scipy.linalg import LinAlgWarning, lu_factor, lu_solve
from scipy.special import gammaln

from .errors import GuardError, SingularMatrixError

# Tolerances and guards used by the constructors below.  Kept module level
# so tests can reference the same numbers.
PROB_SUM_TOL = 1e-12
EXACT_MULTINOMIAL_MAX_TOTAL = 2000
TYPE_ENUM_GUARD = 10**8
PIVOT_RTOL = 1e-14


@dataclass(frozen=True)
class Alphabet:
    """Ordered finite set of distinct real symbol values."""

    values: tuple[float, ...]
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if len(vals) == 0:
            raise ValueError("alphabet must be nonempty")
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("alphabet values must be finite")
        if len(set(vals)) != len(vals):
            raise ValueError("alphabet values must be distinct")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "_index", {v: i for i, v in enumerate(vals)})

    def index(self, value) -> int:
        try:
            return self._index[float(value)]
        except KeyError:
            raise ValueError(f"{value!r} is not a symbol of this alphabet") from None

    def __len__(self) -> int:
        return len(self.values)

    def __iter__(self):
        return iter(self.values)

    def __getitem__(self, i):
        return self.values[i]


class ProbMeasure:
    """Nonnegative weights over an indexed finite cell set, summing to one.

    ``labels`` is optional bookkeeping (symbols, words, pair names); the
    numerics only ever touch ``weights``.
    """

    __slots__ = ("_weights", "labels")

    def __init__(self, weights, labels=None):
        w = np.asarray(weights, dtype=float)
        if w.ndim != 1 or w.size == 0:
            raise ValueError("weights must be a nonempty 1-d array")
        if not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite")
        if np.any(w < 0):
            raise ValueError("weights must be nonnegative")
        s = float(w.sum())
        if abs(s - 1.0) > PROB_SUM_TOL:
            raise ValueError(f"weights sum to {s!r}, not 1 within {PROB_SUM_TOL}")
        if labels is not None and len(labels) != w.size:
            raise ValueError("labels length does not match weights")
        self._weights = w.copy()
        self._weights.setflags(write=False)
        self.labels = tuple(labels) if labels is not None else None

    @property
    def weights(self) -> np.ndarray:
        return self._weights

    def __len__(self) -> int:
        return self._weights.size

    def __getitem__(self, i) -> float:
        return float(self._weights[i])

    def min_weight(self) -> float:
        return float(self._weights.min())

    def entropy(self) -> float:
        return entropy(self._weights)

    def __repr__(self):
        return f"ProbMeasure({np.array2string(self._weights, precision=6)})"


class TypeVector:
    """Integer count vector with a fixed total."""

    __slots__ = ("_counts", "total")

    def __init__(self, counts, total=None):
        c = np.asarray(counts)
        if c.ndim != 1 or c.size == 0:
            raise ValueError("counts must be a nonempty 1-d array")
        if not np.issubdtype(c.dtype, np.integer):
            ci = np.asarray(counts, dtype=np.int64)
            if not np.array_equal(ci, np.asarray(counts)):
                raise ValueError("counts must be integers")
            c = ci
        c = c.astype(np.int64)
        if np.any(c < 0):
            raise ValueError("counts must be nonnegative")
        s = int(c.sum())
        if total is None:
            total = s
        elif s != int(total):
            raise ValueError(f"counts sum to {s}, expected total {total}")
        self._counts = c.copy()
        self._counts.setflags(write=False)
        self.total = int(total)

    @property
    def counts(self) -> np.ndarray:
        return self._counts

    def as_measure(self) -> ProbMeasure:
        if self.total == 0:
            raise ValueError("type with total 0 has no empirical measure")
        return ProbMeasure(self._counts / self.total)

    def __len__(self):
        return self._counts.size

    def __eq__(self, other):
        return (
            isinstance(other, TypeVector)
            and self.total == other.total
            and np.array_equal(self._counts, other._counts)
        )

    def __hash__(self):
        return hash((self.total, tuple(self._counts.tolist())))

    def __repr__(self):
        return f"TypeVector({self._counts.tolist()}, total={self.total})"


def _counts_of(counts) -> np.ndarray:
    if isinstance(counts, TypeVector):
        return counts.counts
    c = np.asarray(counts, dtype=np.int64)
    if c.ndim != 1 or np.any(c < 0):
        raise ValueError("counts must be a 1-d nonnegative integer array")
    return c


def multinomial_exact(counts) -> int:
    """Exact multinomial coefficient as a big integer.

    Guarded to totals <= EXACT_MULTINOMIAL_MAX_TOTAL; beyond that use the
    log-gamma path.
    """
    c = _counts_of(counts)
    total = int(c.sum())
    if total > EXACT_MULTINOMIAL_MAX_TOTAL:
        raise GuardError(
            f"exact multinomial guarded to total <= {EXACT_MULTINOMIAL_MAX_TOTAL}, got {total}"
        )
    coef = 1
    remaining = total
    for k in c.tolist():
        coef *= math.comb(remaining, k)
        remaining -= k
    return coef


def log_multinomial(counts) -> float:
    """log of the multinomial coefficient, via log-gamma."""
    c = _counts_of(counts)
    total = int(c.sum())
    return float(math.lgamma(total + 1) - sum(math.lgamma(k + 1) for k in c.tolist()))


def log_multinomial_rows(type_rows: np.ndarray) -> np.ndarray:
    """Row-wise log multinomial for an (m, cells) array of count vectors."""
    V = np.asarray(type_rows, dtype=np.int64)
    totals = V.sum(axis=1)
    return gammaln(totals + 1.0) - gammaln(V + 1.0).sum(axis=1)


def entropy(measure) -> float:
    """Shannon entropy in nats, with the 0 * log 0 = 0 convention."""
    w = measure.weights if isinstance(measure, ProbMeasure) else np.asarray(measure, dtype=float)
    pos = w[w > 0]
    return float(-(pos * np.log(pos)).sum())


def local_approx_log_multinomial(nu, v, N) -> float:
    """Gaussian-order local approximation of log multinomial(N nu + sqrt(N) v).

    ``nu`` is a strictly positive measure, ``v`` a balanced (zero-sum)
    displacement in units of sqrt(N).  Returns

        log[ sqrt(2 pi N) / prod_x sqrt(2 pi N nu(x)) ]
        + N H(nu) - sqrt(N) sum_x v(x) log nu(x) - (1/2) sum_x v(x)^2 / nu(x)

    i.e. the expansion without its relative error factor.  The quadratic
    coefficient 1/2 is validated against the exact binomial in the tests
    (both the central value and the e^{-2 d^2/N} Gaussian width).
    """
    w = nu.weights if isinstance(nu, ProbMeasure) else np.asarray(nu, dtype=float)
    vv = np.asarray(v, dtype=float)
    if w.shape != vv.shape:
        raise ValueError("nu and v must have the same number of cells")
    if np.any(w <= 0):
        raise ValueError("local approximation requires a strictly positive measure")
    if abs(float(vv.sum())) > 1e-12 * max(1.0, float(np.abs(vv).max(initial=0.0))):
        raise ValueError("displacement v must sum to zero")
    N = float(N)
    if N <= 0:
        raise ValueError("N must be positive")
    prefactor = 0.5 * math.log(2 * math.pi * N) - 0.5 * float(np.log(2 * math.pi * N * w).sum())
    return float(
        prefactor
        + N * entropy(w)
        - math.sqrt(N) * float((vv * np.log(w)).sum())
        - 0.5 * float((vv * vv / w).sum())
    )


def num_types(N: int, cells: int) -> int:
    """Number of types: compositions of N into ``cells`` nonnegative parts."""
    if cells < 1 or N < 0:
        raise ValueError("need cells >= 1 and N >= 0")
    return math.comb(N + cells - 1, cells - 1)


def _compositions(total: int, cells: int) -> np.ndarray:
    """All compositions as an (count, cells) int64 array, lexicographic."""
    if cells == 1:
        return np.array([[total]], dtype=np.int64)
    if cells == 2:
        first = np.arange(total + 1, dtype=np.int64)
        return np.column_stack([first, total - first])
    if cells == 3:
        lengths = np.arange(total + 1, 0, -1, dtype=np.int64)
        first = np.repeat(np.arange(total + 1, dtype=np.int64), lengths)
        second = np.concatenate(
            [np.arange(n, dtype=np.int64) for n in lengths]
        ) if total >= 0 else np.empty(0, dtype=np.int64)
        third = total - first - second
        return np.column_stack([first, second, third])
    parts = []
    for k in range(total + 1):
        sub = _compositions(total - k, cells - 1)
        parts.append(
            np.hstack([np.full((sub.shape[0], 1), k, dtype=np.int64), sub])
        )
    return np.vstack(parts)


def type_array_blocks(
    N: int,
    cells: int,
    *,
    max_rows: int = 1 << 20,
    guard: int = TYPE_ENUM_GUARD,
    allow_large: bool = False,
) -> Iterator[np.ndarray]:
    """Yield all types of total N over ``cells`` cells as int64 array blocks.

    Blocks arrive in global lexicographic order and concatenate to the full
    enumeration.  Raises GuardError when the total count exceeds ``guard``
    unless ``allow_large`` is set.
    """
    count = num_types(N, cells)
    if count > guard and not allow_large:
        raise GuardError(
            f"type enumeration would produce {count} types (guard {guard}); "
            "pass allow_large=True to override"
        )

    def rec(prefix: list[int], total: int, c: int) -> Iterator[np.ndarray]:
        if c <= 3 or num_types(total, c) <= max_rows:
            arr = _compositions(total, c)
            if prefix:
                pre = np.tile(np.array(prefix, dtype=np.int64), (arr.shape[0], 1))
                arr = np.hstack([pre, arr])
            yield arr
        else:
            for k in range(total + 1):
                yield from rec(prefix + [k], total - k, c - 1)

    yield from rec([], N, cells)


def enumerate_types(
    N: int,
    cells: int,
    *,
    guard: int = TYPE_ENUM_GUARD,
    allow_large: bool = False,
) -> Iterator[TypeVector]:
    """Deterministic lexicographic stream of all TypeVectors of total N."""
    for block in type_array_blocks(N, cells, guard=guard, allow_large=allow_large):
        for row in block:
            yield TypeVector(row, total=N)


# ---------------------------------------------------------------------------
# Dense linear-algebra kernel.  LU with partial pivoting; a pivot smaller
# than PIVOT_RTOL times the matrix scale is treated as singular.

def _lu(a: np.ndarray):
    m = np.asarray(a, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("expected a square matrix")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix entries must be finite")
    if m.shape[0] == 0:
        return m, None, None
    with warnings.catch_warnings():
        # exact zero pivots are reported through SingularMatrixError below
        warnings.simplefilter("ignore", LinAlgWarning)
        lu, piv = lu_factor(m, check_finite=False)
    pivots = np.diag(lu)
    scale = float(np.abs(m).max())
    if scale == 0.0 or float(np.abs(pivots).min()) < PIVOT_RTOL * scale:
        raise SingularMatrixError(
            f"singular to working precision (min pivot {np.abs(pivots).min() if scale else 0.0:.3e}, "
            f"scale {scale:.3e})"
        )
    return m, lu, piv


def det(a) -> float:
    """Determinant via LU with partial pivoting.

    Raises SingularMatrixError when a pivot falls below PIVOT_RTOL * scale.
    The empty matrix has determinant 1.
    """
    m, lu, piv = _lu(a)
    if lu is None:
        return 1.0
    pivots = np.diag(lu)
    sign = 1.0 if (np.sum(piv != np.arange(m.shape[0])) % 2 == 0) else -1.0
    sign *= float(np.prod(np.sign(pivots)))
    logabs = float(np.log(np.abs(pivots)).sum())
    return sign * math.exp(logabs)


def solve(a, b) -> np.ndarray:
    """Solve a x = b through the same guarded LU factorization."""
    m, lu, piv = _lu(a)
    if lu is None:
        return np.zeros_like(np.asarray(b, dtype=float))
    return lu_solve((lu, piv), np.asarray(b, dtype=float), check_finite=False)


def inv(a) -> np.ndarray:
    n = np.asarray(a).shape[0]
    return solve(a, np.eye(n))
