"""Random (l,r)-regular factor-graph ensembles, exact and asymptotic.

A graph draws its edges as a uniform permutation of the N*l variable stubs
onto the M*r factor stubs, M = N*l/r.  Everything averages cleanly over
that permutation: the expected number of assignments with a given
variable-type v and factor-type u is a ratio of multinomials, so E[Z] is
an exact finite sum.  The growth rate is the Bethe maximum, and the
constant factor combines the variable-type Gaussian with an integer step
size s: the consistency constraints confine the factor-type lattice to a
sublattice, and s is its index, computed from the congruence system via
Smith normal form and cross-checked against the prime-field rank and
binary gcd special cases.

Factor functions are arrays over all words in X^r, order significant.
Words are enumerated lexicographically by symbol index; the support is
wherever f is strictly positive.
"""

from __future__ import annotations

import itertools
import math
import warnings
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.special import logsumexp

from .errors import (
    BoundaryMaximizerError,
    GuardError,
    InstabilityError,
    NonConvergenceError,
    SingularMatrixError,
    ValidationFailure,
)
from .types_core import (
    Alphabet,
    ProbMeasure,
    det,
    entropy,
    enumerate_types,
    log_multinomial,
    multinomial_exact,
    num_types,
)

__all__ = [
    "EnsembleSpec",
    "make_ensemble",
    "check_consistency",
    "log_expected_type_count",
    "expected_type_count_exact",
    "PermutationOracleResult",
    "brute_force_permutation_oracle",
    "exact_expected_Z",
    "exact_expected_Z_exact",
    "BetheSolution",
    "solve_bethe",
    "FGMatrices",
    "assemble_fg_matrices",
    "smith_normal_form_divisors",
    "lattice_step_s",
    "step_size_methods",
    "fg_constant_log",
    "fg_asymptotic_estimate",
    "LdpcResult",
    "ldpc_expected_codewords",
    "expected_codewords_at_weight",
]

PERMUTATION_GUARD_STUBS = 8
PERMUTATION_MAX_STUBS = 12
EXACT_COUNT_MAX_STUBS = 60
TYPE_PAIR_GUARD = 10**7
WORD_TABLE_GUARD = 1 << 20

BUILTIN_FACTORS = ("parity", "all-equal", "uniform", "table:<path>")


class EnsembleSpec:
    """An (l,r)-regular ensemble: degrees, alphabet, and the factor table."""

    def __init__(self, l: int, r: int, alphabet: Alphabet, f_values,
                 f_exact: tuple[Fraction, ...] | None = None,
                 factor_name: str | None = None):
        if l < 2 or r < 2:
            raise ValidationFailure(f"degrees must be at least 2, got l={l}, r={r}")
        K = len(alphabet)
        if K**r > WORD_TABLE_GUARD:
            raise GuardError(
                f"word table |X|^r = {K**r} exceeds the guard ({WORD_TABLE_GUARD})"
            )
        self.l = int(l)
        self.r = int(r)
        self.alphabet = alphabet
        self.words = np.array(
            list(itertools.product(range(K), repeat=r)), dtype=np.int64
        )
        self.letter_counts = np.stack(
            [(self.words == z).sum(axis=1) for z in range(K)], axis=1
        )
        f = np.asarray(f_values, dtype=float)
        if f.shape != (K**r,):
            raise ValidationFailure(
                f"factor table needs one value per word, expected {K**r}, got {f.shape}"
            )
        if not np.all(np.isfinite(f)) or np.any(f < 0):
            raise ValidationFailure("factor values must be finite and nonnegative")
        if not np.any(f > 0):
            raise ValidationFailure("factor function has empty support")
        f.setflags(write=False)
        self.f_values = f
        if f_exact is not None:
            f_exact = tuple(Fraction(x) for x in f_exact)
            if len(f_exact) != K**r:
                raise ValidationFailure("exact factor table length mismatch")
            if any(float(a) != b for a, b in zip(f_exact, f)):
                raise ValidationFailure("exact factor table disagrees with float table")
        self.f_exact = f_exact
        self.factor_name = factor_name
        self.support = np.flatnonzero(f > 0)

    @property
    def word_labels(self) -> tuple:
        vals = self.alphabet.values
        return tuple(tuple(vals[i] for i in w) for w in self.words)

    @property
    def letter_labels(self) -> tuple:
        return tuple(self.alphabet.values)

    def is_admissible(self, N: int) -> bool:
        return N >= 1 and (N * self.l) % self.r == 0

    def require_admissible(self, N: int) -> None:
        if not self.is_admissible(N):
            raise ValidationFailure(
                f"N={N} is not admissible for (l,r)=({self.l},{self.r}): "
                f"r must divide N*l"
            )

    def num_factors(self, N: int) -> int:
        self.require_admissible(N)
        return N * self.l // self.r

    def __repr__(self) -> str:
        name = self.factor_name or "custom"
        return (f"EnsembleSpec(l={self.l}, r={self.r}, |X|={len(self.alphabet)}, "
                f"factor={name}, |S|={len(self.support)})")


def load_factor_table(path: str, alphabet: Alphabet, r: int) -> list:
    """Read a factor value table: one line per word, word then value.

    Tokens are whitespace-separated; the first r name alphabet symbols,
    the last is the value.  Values parse as exact rationals when they can
    ("2", "1/3", "0.25"), keeping the big-rational paths available.
    Blank lines and #-comments are skipped.  Every word must appear
    exactly once.
    """
    symbol_of = {}
    for value in alphabet.values:
        symbol_of[f"{value:g}"] = value
        if value == int(value):
            symbol_of[str(int(value))] = value
    K = len(alphabet)
    index = {w: i for i, w in enumerate(itertools.product(alphabet.values, repeat=r))}
    vals: list = [None] * (K**r)
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            tokens = body.split()
            if len(tokens) != r + 1:
                raise ValidationFailure(
                    f"{path}:{lineno}: expected {r} symbols and a value, got {len(tokens)} tokens"
                )
            try:
                word = tuple(symbol_of[t] for t in tokens[:r])
            except KeyError as exc:
                raise ValidationFailure(
                    f"{path}:{lineno}: unknown symbol {exc.args[0]!r}"
                ) from None
            try:
                val = Fraction(tokens[r])
            except (ValueError, ZeroDivisionError):
                try:
                    val = float(tokens[r])
                except ValueError:
                    raise ValidationFailure(
                        f"{path}:{lineno}: bad value {tokens[r]!r}"
                    ) from None
            pos = index[word]
            if vals[pos] is not None:
                raise ValidationFailure(f"{path}:{lineno}: word listed twice")
            vals[pos] = val
    missing = sum(1 for v in vals if v is None)
    if missing:
        raise ValidationFailure(f"{path}: {missing} of {K**r} words missing")
    if all(isinstance(v, Fraction) for v in vals):
        return vals
    return [float(v) for v in vals]


def make_ensemble(l: int, r: int, alphabet: Alphabet, factor) -> EnsembleSpec:
    """Build an ensemble from a named factor, a value table, or a callable.

    Named factors: "parity" (two-letter alphabets, indicator that the
    second symbol appears an even number of times), "all-equal" (indicator
    that all r letters agree), "uniform" (f identically one), and
    "table:<path>" (load_factor_table format).  A table is a sequence of
    K^r values in word order; a callable receives the word as a tuple of
    alphabet values.
    """
    K = len(alphabet)
    if isinstance(factor, str):
        if factor.startswith("table:"):
            return make_ensemble(l, r, alphabet, load_factor_table(factor[6:], alphabet, r))
        if factor == "parity":
            if K != 2:
                raise ValidationFailure("parity factors need a two-letter alphabet")
            counts1 = np.array(
                [sum(w) for w in itertools.product(range(2), repeat=r)]
            )
            vals = (counts1 % 2 == 0).astype(int)
        elif factor == "all-equal":
            vals = np.array(
                [int(len(set(w)) == 1) for w in itertools.product(range(K), repeat=r)]
            )
        elif factor == "uniform":
            vals = np.ones(K**r, dtype=int)
        else:
            raise ValidationFailure(
                f"unknown factor name {factor!r}; built-ins are {BUILTIN_FACTORS}"
            )
        exact = tuple(Fraction(int(x)) for x in vals)
        return EnsembleSpec(l, r, alphabet, vals.astype(float), exact, factor)
    if callable(factor):
        words = itertools.product(alphabet.values, repeat=r)
        vals = np.array([float(factor(w)) for w in words])
        return EnsembleSpec(l, r, alphabet, vals, None, None)
    vals = list(factor)
    exact = None
    if all(isinstance(x, (int, np.integer, Fraction)) for x in vals):
        exact = tuple(
            Fraction(int(x)) if isinstance(x, (int, np.integer)) else x for x in vals
        )
    return EnsembleSpec(l, r, alphabet, [float(x) for x in vals], exact, None)


# --------------------------------------------------------------------------
# expected counts of (variable-type, factor-type) pairs


def _as_counts(vec, cells: int, total: int, what: str) -> np.ndarray:
    arr = np.asarray(vec, dtype=np.int64)
    if arr.shape != (cells,) or np.any(arr < 0):
        raise ValidationFailure(f"{what} must be {cells} nonnegative counts")
    if arr.sum() != total:
        raise ValidationFailure(f"{what} must total {total}, got {arr.sum()}")
    return arr


def check_consistency(ensemble: EnsembleSpec, v, u, N: int) -> tuple[np.ndarray, np.ndarray]:
    """Validate a (v, u) pair: totals and the per-letter edge-count balance.

    Every letter z is seen l*v(z) times from the variable side and
    sum_x N_z(x) u(x) times from the factor side; the two must agree.
    """
    M = ensemble.num_factors(N)
    K = len(ensemble.alphabet)
    v = _as_counts(v, K, N, "variable-type")
    u = _as_counts(u, K**ensemble.r, M, "factor-type")
    lhs = ensemble.letter_counts.T @ u
    if not np.array_equal(lhs, ensemble.l * v):
        raise ValidationFailure(
            f"inconsistent type pair: factor side sees {lhs.tolist()} letters, "
            f"variable side provides {(ensemble.l * v).tolist()}"
        )
    return v, u


def log_expected_type_count(ensemble: EnsembleSpec, v, u, N: int) -> float:
    """log E[N(v,u)]: multinomial(v) * multinomial(u) * prod (v(x)l)! / (Nl)!."""
    v, u = check_consistency(ensemble, v, u, N)
    l = ensemble.l
    out = log_multinomial(v) + log_multinomial(u) - math.lgamma(N * l + 1)
    out += sum(math.lgamma(int(c) * l + 1) for c in v)
    return out


def expected_type_count_exact(ensemble: EnsembleSpec, v, u, N: int) -> Fraction:
    """E[N(v,u)] as an exact rational; guarded by the (Nl)! size."""
    if N * ensemble.l > EXACT_COUNT_MAX_STUBS:
        raise GuardError(
            f"exact path is guarded at N*l <= {EXACT_COUNT_MAX_STUBS}, got {N * ensemble.l}"
        )
    v, u = check_consistency(ensemble, v, u, N)
    l = ensemble.l
    num = multinomial_exact(v) * multinomial_exact(u)
    for c in v:
        num *= math.factorial(int(c) * l)
    return Fraction(num, math.factorial(N * l))


# --------------------------------------------------------------------------
# brute-force oracle over all edge permutations


@dataclass
class PermutationOracleResult:
    """Exact averages over every edge permutation and every assignment."""

    expected_Z: Fraction | float
    log_expected_Z: float
    type_counts: dict
    permutations: int


def brute_force_permutation_oracle(ensemble: EnsembleSpec, N: int, *,
                                   guard: int = PERMUTATION_GUARD_STUBS,
                                   allow_large: bool = False) -> PermutationOracleResult:
    """Average over all (Nl)! stub permutations, exactly.

    For each permutation and each of the |X|^N assignments, reads off the
    variable- and factor-type and tallies them; E[N(v,u)] is the tally
    divided by (Nl)!, and E[Z] follows by weighting each pair with the
    factor values.  Feasible only for a handful of stubs; the guard caps
    N*l at 8 by default and at 12 with allow_large.
    """
    stubs = N * ensemble.l
    M = ensemble.num_factors(N)
    limit = PERMUTATION_MAX_STUBS if allow_large else guard
    if stubs > limit:
        raise GuardError(
            f"permutation oracle needs (N*l)! enumeration; N*l={stubs} exceeds {limit}"
        )
    K = len(ensemble.alphabet)
    r = ensemble.r
    assigns = np.array(list(itertools.product(range(K), repeat=N)), dtype=np.int64)
    v_keys = [tuple(int((row == z).sum()) for z in range(K)) for row in assigns]
    radix = K ** np.arange(r - 1, -1, -1)
    var_of_stub = tuple(i // ensemble.l for i in range(stubs))

    raw = defaultdict(int)
    for perm in itertools.permutations(range(stubs)):
        vars_at = np.fromiter((var_of_stub[p] for p in perm), np.int64, stubs)
        word_idx = assigns[:, vars_at].reshape(-1, M, r) @ radix
        word_idx.sort(axis=1)
        for i, row in enumerate(word_idx):
            raw[(v_keys[i], tuple(row))] += 1

    nperm = math.factorial(stubs)
    type_counts: dict = {}
    for (v_key, row), count in raw.items():
        u = np.zeros(K**r, dtype=np.int64)
        for w in row:
            u[w] += 1
        type_counts[(v_key, tuple(int(x) for x in u))] = Fraction(count, nperm)

    if ensemble.f_exact is not None:
        ez = Fraction(0)
        for (v_key, u_key), weight in type_counts.items():
            term = weight
            for w, c in enumerate(u_key):
                if c:
                    term *= ensemble.f_exact[w] ** c
            ez += term
        logez = _log_fraction(ez)
    else:
        ez = 0.0
        for (v_key, u_key), weight in type_counts.items():
            term = float(weight)
            for w, c in enumerate(u_key):
                if c:
                    term *= ensemble.f_values[w] ** c
            ez += term
        logez = math.log(ez) if ez > 0 else -math.inf
    return PermutationOracleResult(ez, logez, type_counts, nperm)


def _log_fraction(x: Fraction) -> float:
    if x == 0:
        return -math.inf
    return math.log(x.numerator) - math.log(x.denominator)


# --------------------------------------------------------------------------
# exact E[Z] via the type sum


def _weight_polynomial(ensemble: EnsembleSpec, exact: bool) -> list:
    """Coefficient j: total factor value of support words with j second letters."""
    counts1 = ensemble.letter_counts[:, 1]
    coeffs = [Fraction(0) if exact else 0.0] * (ensemble.r + 1)
    for w in ensemble.support:
        val = ensemble.f_exact[w] if exact else float(ensemble.f_values[w])
        coeffs[int(counts1[w])] += val
    return coeffs


def _poly_mul(a: list, b: list) -> list:
    zero = a[0] * 0
    out = [zero] * (len(a) + len(b) - 1)
    for i, x in enumerate(a):
        if x:
            for j, y in enumerate(b):
                if y:
                    out[i + j] += x * y
    return out


def _poly_pow(p: list, k: int) -> list:
    result = [p[0] * 0 + 1]
    base = list(p)
    while k:
        if k & 1:
            result = _poly_mul(result, base)
        base = _poly_mul(base, base)
        k >>= 1
    return result


def _expected_Z_binary_exact(ensemble: EnsembleSpec, N: int) -> Fraction:
    l = ensemble.l
    M = ensemble.num_factors(N)
    P = _poly_pow(_weight_polynomial(ensemble, exact=True), M)
    fNl = math.factorial(N * l)
    total = Fraction(0)
    for w1 in range(N + 1):
        deg = l * w1
        if deg >= len(P) or P[deg] == 0:
            continue
        num = (math.comb(N, w1) * math.factorial((N - w1) * l) * math.factorial(w1 * l))
        total += Fraction(num, fNl) * P[deg]
    return total


def _expected_Z_binary_float(ensemble: EnsembleSpec, N: int) -> float:
    # same contraction in the log domain: coefficients of the M-th power
    # are built by logsumexp convolutions, so no renormalization is needed
    l = ensemble.l
    M = ensemble.num_factors(N)
    base = _weight_polynomial(ensemble, exact=False)
    with np.errstate(divide="ignore"):
        logp = np.log(np.array(base))

    def logconv(a, b):
        out = np.full(len(a) + len(b) - 1, -np.inf)
        for i in range(len(a)):
            if a[i] == -np.inf:
                continue
            out[i:i + len(b)] = np.logaddexp(out[i:i + len(b)], a[i] + b)
        return out

    result = np.array([0.0])
    power = logp
    k = M
    while k:
        if k & 1:
            result = logconv(result, power)
        power = logconv(power, power)
        k >>= 1
    terms = []
    for w1 in range(N + 1):
        deg = l * w1
        if deg >= len(result) or result[deg] == -np.inf:
            continue
        terms.append(
            result[deg]
            + math.lgamma(N + 1) - math.lgamma(w1 + 1) - math.lgamma(N - w1 + 1)
            + math.lgamma((N - w1) * l + 1) + math.lgamma(w1 * l + 1)
            - math.lgamma(N * l + 1)
        )
    return float(logsumexp(terms)) if terms else -math.inf


def _expected_Z_general(ensemble: EnsembleSpec, N: int, exact: bool,
                        guard: int, allow_large: bool):
    # enumerate factor-types over the support; each determines the
    # variable-type uniquely through the consistency balance
    l, r = ensemble.l, ensemble.r
    M = ensemble.num_factors(N)
    S = ensemble.support
    n_u = num_types(M, len(S))
    if n_u > guard and not allow_large:
        raise GuardError(
            f"factor-type enumeration has {n_u} candidates, over the guard ({guard}); "
            "pass allow_large=True to proceed"
        )
    counts_S = ensemble.letter_counts[S]
    fNl = math.factorial(N * l)
    total_exact = Fraction(0)
    log_terms = []
    for u_t in enumerate_types(M, len(S)):
        u = u_t.counts
        balance = counts_S.T @ u
        if np.any(balance % l):
            continue
        v = balance // l
        if exact:
            num = multinomial_exact(v) * multinomial_exact(u)
            for c in v:
                num *= math.factorial(int(c) * l)
            term = Fraction(num, fNl)
            for pos, c in enumerate(u):
                if c:
                    term *= ensemble.f_exact[int(S[pos])] ** int(c)
            total_exact += term
        else:
            lt = (log_multinomial(v) + log_multinomial(u)
                  - math.lgamma(N * l + 1)
                  + sum(math.lgamma(int(c) * l + 1) for c in v))
            for pos, c in enumerate(u):
                if c:
                    lt += int(c) * math.log(ensemble.f_values[int(S[pos])])
            log_terms.append(lt)
    if exact:
        return total_exact
    return float(logsumexp(log_terms)) if log_terms else -math.inf


def exact_expected_Z(ensemble: EnsembleSpec, N: int, *, guard: int = TYPE_PAIR_GUARD,
                     allow_large: bool = False) -> float:
    """log E[Z] by exact summation over consistent type pairs.

    Two-letter alphabets go through a generating-function contraction (the
    inner sum over factor-types with a fixed letter balance is one
    coefficient of a polynomial power), which keeps e.g. (3,6) ensembles
    exact at N in the hundreds.  Other alphabets enumerate factor-types
    over the support directly, guarded by the enumeration size.
    """
    ensemble.require_admissible(N)
    if len(ensemble.alphabet) == 2:
        if ensemble.f_exact is not None:
            return _log_fraction(_expected_Z_binary_exact(ensemble, N))
        return _expected_Z_binary_float(ensemble, N)
    return _expected_Z_general(ensemble, N, False, guard, allow_large)


def exact_expected_Z_exact(ensemble: EnsembleSpec, N: int, *, guard: int = TYPE_PAIR_GUARD,
                           allow_large: bool = False) -> Fraction:
    """E[Z] as an exact rational; needs an exact factor table."""
    if ensemble.f_exact is None:
        raise ValidationFailure(
            "exact arithmetic needs an exact factor table (integer or rational values)"
        )
    ensemble.require_admissible(N)
    if len(ensemble.alphabet) == 2:
        return _expected_Z_binary_exact(ensemble, N)
    return _expected_Z_general(ensemble, N, True, guard, allow_large)


# --------------------------------------------------------------------------
# Bethe maximization


@dataclass
class BetheSolution:
    """Stationary pair of measures and the value of the Bethe maximum."""

    nu_star: ProbMeasure
    mu_star: ProbMeasure
    F: float
    residual: float
    boundary: bool
    diagnostics: dict = field(default_factory=dict)

    @property
    def unique(self) -> bool:
        return bool(self.diagnostics.get("unique", True))


def _bethe_mu(ensemble: EnsembleSpec, nu: np.ndarray, fld: np.ndarray) -> np.ndarray:
    """Maximizing word measure for a fixed letter marginal."""
    loggain = (ensemble.l - 1) / ensemble.l * np.log(np.clip(nu, 1e-300, None)) + fld / ensemble.l
    with np.errstate(divide="ignore"):
        logf = np.log(ensemble.f_values)
    expo = logf + ensemble.letter_counts @ loggain
    expo -= logsumexp(expo)
    return np.exp(expo)


def _bethe_marginal(ensemble: EnsembleSpec, mu: np.ndarray) -> np.ndarray:
    return (ensemble.letter_counts.T @ mu) / ensemble.r


def _bethe_objective(ensemble: EnsembleSpec, nu: np.ndarray, mu: np.ndarray,
                     fld: np.ndarray) -> float:
    lr = ensemble.l / ensemble.r
    on = mu > 0
    flog = float(mu[on] @ np.log(ensemble.f_values[on]))
    return float(lr * (entropy(mu) + flog) - (ensemble.l - 1) * entropy(nu) + fld @ nu)


def solve_bethe(ensemble: EnsembleSpec, *, external_field=None, restarts: int = 32,
                damping: float = 0.5, tol: float = 1e-12, max_iter: int = 100_000,
                seed: int = 0, objective_gap: float = 1e-9, dedup_tol: float = 1e-8,
                boundary_tol: float = 1e-10) -> BetheSolution:
    """Damped fixed-point iteration for the Bethe maximum, multi-started.

    Iterates nu <- marginal(mu(nu)) where mu(nu) is the entropy-maximizing
    word measure with letter gain nu^((l-1)/l); stationary points of the
    iteration are exactly the stationary points of the constrained
    maximization.  An optional external field (one value per letter) adds
    sum_z field(z) nu(z) to the objective, which tilts mu by field/l per
    letter occurrence.
    """
    K = len(ensemble.alphabet)
    fld = np.zeros(K) if external_field is None else np.asarray(external_field, float)
    if fld.shape != (K,) or not np.all(np.isfinite(fld)):
        raise ValidationFailure("external field needs one finite value per letter")

    starts = [np.full(K, 1.0 / K)]
    for k in range(restarts):
        rng = np.random.default_rng((seed, k))
        starts.append(rng.dirichlet(np.ones(K)))

    converged = []
    for nu in starts:
        nu = nu.copy()
        for it in range(max_iter):
            target = _bethe_marginal(ensemble, _bethe_mu(ensemble, nu, fld))
            step = float(np.max(np.abs(target - nu)))
            nu = (1.0 - damping) * nu + damping * target
            if step <= tol:
                break
        else:
            continue
        mu = _bethe_mu(ensemble, nu, fld)
        resid = float(np.max(np.abs(_bethe_marginal(ensemble, mu) - nu)))
        converged.append((_bethe_objective(ensemble, nu, mu, fld), nu, mu, resid, it))

    if not converged:
        raise NonConvergenceError(
            f"no Bethe restart converged within {max_iter} iterations", residual=None
        )
    converged.sort(key=lambda t: -t[0])
    best_obj, best_nu, best_mu, best_resid, best_it = converged[0]
    distinct = [best_nu]
    for obj, nu, _, _, _ in converged[1:]:
        if best_obj - obj > objective_gap:
            break
        if all(np.max(np.abs(nu - d)) > dedup_tol for d in distinct):
            distinct.append(nu)
    boundary = float(best_nu.min()) <= boundary_tol
    return BetheSolution(
        nu_star=ProbMeasure(best_nu),
        mu_star=ProbMeasure(best_mu, labels=ensemble.word_labels),
        F=best_obj,
        residual=best_resid,
        boundary=boundary,
        diagnostics={
            "restarts": len(starts),
            "converged": len(converged),
            "iterations_best": best_it,
            "unique": len(distinct) == 1,
            "field": fld.copy(),
        },
    )


# --------------------------------------------------------------------------
# fluctuation matrices and the constant factor


@dataclass
class FGMatrices:
    """Fluctuation-matrix inputs at the Bethe maximizer, on labeled bases."""

    curvature: np.ndarray          # C, diagonal, letters
    letter_freq: np.ndarray        # K, words x letters, N_z(x)/r
    word_second_moment: np.ndarray  # T', diag(mu*)
    word_mean_outer: np.ndarray     # T, mu* mu*^T
    variable_second: np.ndarray     # V' = K^T T' K
    variable_outer: np.ndarray      # V, nu* nu*^T
    word_labels: tuple
    letter_labels: tuple

    @property
    def factor_covariance_bare(self) -> np.ndarray:
        return self.word_second_moment - self.word_mean_outer

    @property
    def variable_covariance_bare(self) -> np.ndarray:
        return self.variable_second - self.variable_outer


def assemble_fg_matrices(ensemble: EnsembleSpec, mu_star, nu_star,
                         *, consistency_tol: float = 1e-8) -> FGMatrices:
    mu = mu_star.weights if isinstance(mu_star, ProbMeasure) else np.asarray(mu_star, float)
    nu = nu_star.weights if isinstance(nu_star, ProbMeasure) else np.asarray(nu_star, float)
    if nu.min() <= 0.0:
        raise BoundaryMaximizerError(
            f"letter marginal touches zero (min {nu.min():.2e}); "
            "the constant factor needs an interior maximizer"
        )
    marg = _bethe_marginal(ensemble, mu)
    if np.max(np.abs(marg - nu)) > consistency_tol:
        raise ValidationFailure(
            "mu and nu are not marginal-consistent "
            f"(max gap {np.max(np.abs(marg - nu)):.2e})"
        )
    Kf = ensemble.letter_counts / ensemble.r
    Tp = np.diag(mu)
    return FGMatrices(
        curvature=np.diag(ensemble.r * (ensemble.l - 1) / (ensemble.l * nu)),
        letter_freq=Kf,
        word_second_moment=Tp,
        word_mean_outer=np.outer(mu, mu),
        variable_second=Kf.T @ (mu[:, None] * Kf),
        variable_outer=np.outer(nu, nu),
        word_labels=ensemble.word_labels,
        letter_labels=ensemble.letter_labels,
    )


# --------------------------------------------------------------------------
# the lattice step size s


def smith_normal_form_divisors(A) -> list[int]:
    """Elementary divisors of an integer matrix, d1 | d2 | ..., zeros last."""
    M = [[int(x) for x in row] for row in np.atleast_2d(np.asarray(A, dtype=object))]
    m = len(M)
    n = len(M[0]) if m else 0
    size = min(m, n)
    divisors = []
    t = 0
    while t < size:
        # locate the smallest nonzero entry in the trailing block
        pivot = None
        for i in range(t, m):
            for j in range(t, n):
                if M[i][j] and (pivot is None or abs(M[i][j]) < abs(M[pivot[0]][pivot[1]])):
                    pivot = (i, j)
        if pivot is None:
            break
        pi, pj = pivot
        M[t], M[pi] = M[pi], M[t]
        for row in M:
            row[t], row[pj] = row[pj], row[t]
        p = M[t][t]
        dirty = False
        for i in range(t + 1, m):
            q = M[i][t] // p
            if q:
                for j in range(t, n):
                    M[i][j] -= q * M[t][j]
            if M[i][t]:
                dirty = True
        for j in range(t + 1, n):
            q = M[t][j] // p
            if q:
                for i in range(t, m):
                    M[i][j] -= q * M[i][t]
            if M[t][j]:
                dirty = True
        if dirty:
            continue  # remainders became new, smaller pivot candidates
        # pivot must divide the whole trailing block for the divisor chain
        offender = None
        for i in range(t + 1, m):
            for j in range(t + 1, n):
                if M[i][j] % p:
                    offender = i
                    break
            if offender is not None:
                break
        if offender is not None:
            for j in range(t, n):
                M[t][j] += M[offender][j]
            continue
        divisors.append(abs(p))
        t += 1
    divisors += [0] * (size - len(divisors))
    return divisors


def _step_matrix(ensemble: EnsembleSpec, ref_word: int | None,
                 ref_symbol: int | None) -> np.ndarray:
    """Coefficient matrix of the congruences: rows letters (minus the
    reference), columns support words (minus the reference word)."""
    S = ensemble.support
    if ref_word is None:
        ref_word = int(S[0])
    if ref_symbol is None:
        ref_symbol = 0
    if ref_word not in set(int(x) for x in S):
        raise ValidationFailure("reference word must lie in the support")
    K = len(ensemble.alphabet)
    rows = [z for z in range(K) if z != ref_symbol]
    cols = [int(x) for x in S if int(x) != ref_word]
    base = ensemble.letter_counts[ref_word]
    return np.array(
        [[int(ensemble.letter_counts[x][z] - base[z]) for x in cols] for z in rows],
        dtype=np.int64,
    ).reshape(len(rows), len(cols))


def _rank_mod_prime(A: np.ndarray, p: int) -> int:
    M = (np.array(A, dtype=np.int64) % p).tolist()
    m = len(M)
    n = len(M[0]) if m else 0
    rank = 0
    for col in range(n):
        pivot = next((i for i in range(rank, m) if M[i][col] % p), None)
        if pivot is None:
            continue
        M[rank], M[pivot] = M[pivot], M[rank]
        inv = pow(M[rank][col], -1, p)
        M[rank] = [(x * inv) % p for x in M[rank]]
        for i in range(m):
            if i != rank and M[i][col]:
                c = M[i][col]
                M[i] = [(a - c * b) % p for a, b in zip(M[i], M[rank])]
        rank += 1
        if rank == m:
            break
    return rank


def _kernel_count_mod(A: np.ndarray, l: int) -> int:
    """Number of solutions of A eps = 0 over Z/l, by column DP."""
    m, n = A.shape
    if m == 0 or n == 0:
        return l**n
    states = {(0,) * m: 1}
    for j in range(n):
        col = [int(x) % l for x in A[:, j]]
        new: dict = defaultdict(int)
        for state, cnt in states.items():
            for val in range(l):
                key = tuple((state[i] + col[i] * val) % l for i in range(m))
                new[key] += cnt
        states = dict(new)
    return states.get((0,) * m, 0)


def _box_density(A: np.ndarray, l: int, L: int) -> Fraction:
    """Fraction of integer points of [-L, L]^n solving the congruences."""
    m, n = A.shape
    box = 2 * L + 1
    residue_counts = [0] * l
    for e in range(-L, L + 1):
        residue_counts[e % l] += 1
    if m == 0 or n == 0:
        return Fraction(1)
    states = {(0,) * m: 1}
    for j in range(n):
        col = [int(x) % l for x in A[:, j]]
        new: dict = defaultdict(int)
        for state, cnt in states.items():
            for val in range(l):
                c = residue_counts[val]
                if not c:
                    continue
                key = tuple((state[i] + col[i] * val) % l for i in range(m))
                new[key] += cnt * c
        states = dict(new)
    return Fraction(states.get((0,) * m, 0), box**n)


def _is_prime(p: int) -> bool:
    if p < 2:
        return False
    return all(p % d for d in range(2, int(math.isqrt(p)) + 1))


def step_size_methods(ensemble: EnsembleSpec, *, ref_word: int | None = None,
                      ref_symbol: int | None = None,
                      density_box_L: int | None = None) -> dict:
    """All available routes to the step size s, for cross-validation.

    Always: "snf" (Smith normal form of the congruence matrix) and
    "residue_count" (exact count of solutions modulo l).  When l is prime:
    "prime_rank" = l^rank over the field.  For two-letter alphabets:
    "binary_gcd" = l / gcd(differences, l).  With density_box_L set, adds
    "box_density", the exact fraction of solutions in an integer box;
    when 2L+1 is a multiple of l this equals 1/s exactly.
    """
    A = _step_matrix(ensemble, ref_word, ref_symbol)
    l = ensemble.l
    out: dict = {}
    divisors = smith_normal_form_divisors(A) if A.size else []
    s = 1
    for d in divisors:
        s *= l // math.gcd(d, l)
    out["snf"] = s
    kernel = _kernel_count_mod(A, l)
    n = A.shape[1]
    total = l**n
    if kernel == 0 or total % kernel:
        raise NonConvergenceError("residue kernel count is inconsistent")
    out["residue_count"] = total // kernel
    if _is_prime(l):
        out["prime_rank"] = l ** _rank_mod_prime(A, l)
    if len(ensemble.alphabet) == 2:
        g = l
        for x in A[0] if A.size else []:
            g = math.gcd(g, int(x))
        out["binary_gcd"] = l // g
    if density_box_L is not None:
        out["box_density"] = _box_density(A, l, density_box_L)
    return out


def lattice_step_s(ensemble: EnsembleSpec, *, ref_word: int | None = None,
                   ref_symbol: int | None = None) -> int:
    """Step size s: the index of the consistency sublattice.

    The factor-type fluctuations can only move on the sublattice where
    every letter-balance shift is a multiple of l; s is the index of that
    sublattice, i.e. the size of the image of the congruence map.  The
    Smith-normal-form value is authoritative; the prime-field rank and the
    binary gcd special cases are checked against it and a disagreement
    warns (it indicates a bug, not an input problem).
    """
    methods = step_size_methods(ensemble, ref_word=ref_word, ref_symbol=ref_symbol)
    s = methods["snf"]
    for name in ("residue_count", "prime_rank", "binary_gcd"):
        if name in methods and methods[name] != s:
            warnings.warn(
                f"step size disagreement: snf={s} but {name}={methods[name]}",
                RuntimeWarning,
                stacklevel=2,
            )
    return s


# --------------------------------------------------------------------------
# asymptotic estimate and the LDPC application


def fg_constant_log(ensemble: EnsembleSpec, solution: BetheSolution, *,
                    step: int | None = None) -> float:
    """log of the N-free constant: l^((K-1)/2) / s * det(...)^(-1/2)."""
    if solution.boundary:
        raise BoundaryMaximizerError(
            "Bethe maximizer touches the boundary; constant factor undefined"
        )
    mats = assemble_fg_matrices(ensemble, solution.mu_star, solution.nu_star)
    K = len(ensemble.alphabet)
    middle = np.eye(K) - mats.curvature @ mats.variable_covariance_bare
    try:
        d = det(middle)
    except SingularMatrixError as exc:
        raise InstabilityError(f"det(I - C(V'-V)) vanishes: {exc}") from exc
    if d <= 0.0:
        raise InstabilityError(
            f"det(I - C(V'-V)) = {d:.6g} is not positive; fluctuations unstable"
        )
    s = lattice_step_s(ensemble) if step is None else step
    return 0.5 * (K - 1) * math.log(ensemble.l) - math.log(s) - 0.5 * math.log(d)


def fg_asymptotic_estimate(ensemble: EnsembleSpec, N: int,
                           solution: BetheSolution | None = None, *,
                           step: int | None = None, **solver_kw) -> float:
    """log E[Z] up to (1+o(1)): N F + the constant term."""
    ensemble.require_admissible(N)
    if solution is None:
        solution = solve_bethe(ensemble, **solver_kw)
    return N * solution.F + fg_constant_log(ensemble, solution, step=step)


@dataclass
class LdpcResult:
    """Expected-codeword asymptotics: count, growth rate, constant."""

    N: int
    omega: float | None
    log_expected_count: float
    growth_rate: float
    log_constant: float
    theta: float = 0.0


def expected_codewords_at_weight(l: int, r: int, N: int, w: int) -> Fraction:
    """Exact expected number of weight-w codewords of the (l,r) ensemble."""
    ens = make_ensemble(l, r, Alphabet((0.0, 1.0)), "parity")
    M = ens.num_factors(N)
    if not 0 <= w <= N:
        raise ValidationFailure(f"weight {w} outside 0..{N}")
    P = _poly_pow(_weight_polynomial(ens, exact=True), M)
    deg = l * w
    if deg >= len(P) or P[deg] == 0:
        return Fraction(0)
    num = math.comb(N, w) * math.factorial((N - w) * l) * math.factorial(w * l)
    return Fraction(num, math.factorial(N * l)) * P[deg]


def _tilted_solution(ensemble: EnsembleSpec, omega: float, *, solver_kw) -> tuple:
    """Field theta with marginal nu_theta(1) = omega, by bisection."""
    solver_kw = {"restarts": 4, **solver_kw}

    def marginal_one(theta: float) -> float:
        sol = solve_bethe(ensemble, external_field=np.array([0.0, theta]), **solver_kw)
        return sol.nu_star[1], sol

    lo, hi = -1.0, 1.0
    flo, slo = marginal_one(lo)
    fhi, shi = marginal_one(hi)
    for _ in range(80):
        if flo <= omega:
            break
        lo *= 2.0
        flo, slo = marginal_one(lo)
    for _ in range(80):
        if fhi >= omega:
            break
        hi *= 2.0
        fhi, shi = marginal_one(hi)
    if not flo <= omega <= fhi:
        raise NonConvergenceError(
            f"could not bracket the weight fraction {omega:g}", residual=None
        )
    sol = None
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fm, sol = marginal_one(mid)
        if abs(fm - omega) <= 1e-13:
            break
        if fm < omega:
            lo = mid
        else:
            hi = mid
    return mid, sol


def ldpc_expected_codewords(l: int, r: int, N: int, omega: float | None = None,
                            **solver_kw) -> LdpcResult:
    """Expected codeword count of the random (l,r) LDPC ensemble.

    With omega = None, counts all codewords: growth rate F from the Bethe
    maximum and the constant from the fluctuation determinant and step
    size.  With a weight fraction omega, tilts the ensemble by a field
    theta chosen so the letter marginal hits omega, and reports the
    Legendre-corrected growth rate A(theta) - theta*omega.  The constant
    reported for fixed omega is the tilted ensemble's total-count
    constant; the additional weight-localization normalization of a local
    limit argument is not included.

    omega = 0 is handled exactly: the all-zeros word is always the unique
    weight-0 codeword.  Weights outside the support range have expected
    count zero.
    """
    ens = make_ensemble(l, r, Alphabet((0.0, 1.0)), "parity")
    ens.require_admissible(N)
    if omega is None:
        sol = solve_bethe(ens, **solver_kw)
        const = fg_constant_log(ens, sol)
        return LdpcResult(N, None, N * sol.F + const, sol.F, const)
    if not 0.0 <= omega <= 1.0:
        raise ValidationFailure(f"weight fraction must lie in [0, 1], got {omega:g}")
    omega_max = float(np.max(ens.letter_counts[ens.support, 1])) / r
    if omega == 0.0:
        return LdpcResult(N, 0.0, 0.0, 0.0, 0.0)
    if omega > omega_max:
        return LdpcResult(N, omega, -math.inf, -math.inf, 0.0)
    if omega == omega_max:
        if r % 2 == 0:
            # the all-ones assignment: every factor sees an even word
            return LdpcResult(N, omega, 0.0, 0.0, 0.0)
        raise ValidationFailure(
            f"weight fraction {omega:g} sits on the support boundary; "
            "use expected_codewords_at_weight for exact counts there"
        )
    theta, sol = _tilted_solution(ens, omega, solver_kw=solver_kw)
    growth = sol.F - theta * omega
    const = fg_constant_log(ens, sol)
    return LdpcResult(N, omega, N * growth + const, growth, const, theta)
