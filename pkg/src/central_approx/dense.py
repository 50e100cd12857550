"""Densely coupled replicated models on a finite alphabet.

A model instance is a replica count n, an alphabet X, a local term
f : X^n -> R, and a smooth coupling g acting on the n(n+1)/2 replica-pair
overlaps q_ab = (1/N) sum_i x_i^(a) x_i^(b), a <= b.  The expectation of
interest is

    E = sum over configurations exp{ sum_i f(x_i) + N g(q) }.

Three routes are provided:

* ``brute_force_expectation``: literal configuration sum (tiny N only);
* ``exact_type_sum``: the same value as a multinomial-weighted sum over
  empirical types, feasible into the thousands of sites;
* ``asymptotic_estimate``: N F plus the log of the Gaussian constant
  factor coming from the curvature of the type sum at its maximizing
  measure.

Pair coordinates are ordered (a, b) with a <= b, lexicographically:
(1,1), (1,2), ..., (1,n), (2,2), ..., (n,n) (1-based in documentation,
0-based in code).
"""

from __future__ import annotations

import itertools
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import (
    ATInstabilityError,
    BoundaryMaximizerError,
    GuardError,
    NonConvergenceError,
    SingularMatrixError,
)
from .types_core import (
    Alphabet,
    ProbMeasure,
    det,
    entropy,
    log_multinomial_rows,
    num_types,
    type_array_blocks,
)

FD_REL_STEP = 1e-5


def worker_count() -> int:
    """Parallel worker budget, capped by CENTRAL_APPROX_THREADS (default 1)."""
    raw = os.environ.get("CENTRAL_APPROX_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        return 1
    return max(1, n)


def pair_indices(n: int) -> list[tuple[int, int]]:
    """Ordered replica-pair index list, 0-based, a <= b lexicographic."""
    return [(a, b) for a in range(n) for b in range(a, n)]


def distinct_pair_positions(n: int) -> list[int]:
    """Positions within pair_indices(n) where a < b."""
    return [k for k, (a, b) in enumerate(pair_indices(n)) if a < b]


# ------------------------------------------------------------ derivatives

def fd_gradient(fn, x: np.ndarray) -> np.ndarray:
    """Central finite-difference gradient, step FD_REL_STEP * (1 + |x_i|)."""
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for i in range(x.size):
        h = FD_REL_STEP * (1.0 + abs(x[i]))
        xp = x.copy(); xp[i] += h
        xm = x.copy(); xm[i] -= h
        g[i] = (fn(xp) - fn(xm)) / (2.0 * h)
    return g


def fd_hessian(fn, x: np.ndarray) -> np.ndarray:
    """Central finite-difference Hessian, same step rule as fd_gradient."""
    x = np.asarray(x, dtype=float)
    p = x.size
    h = FD_REL_STEP * (1.0 + np.abs(x))
    hess = np.zeros((p, p))
    f0 = fn(x)
    for i in range(p):
        xp = x.copy(); xp[i] += h[i]
        xm = x.copy(); xm[i] -= h[i]
        hess[i, i] = (fn(xp) - 2.0 * f0 + fn(xm)) / (h[i] * h[i])
        for j in range(i + 1, p):
            xpp = x.copy(); xpp[i] += h[i]; xpp[j] += h[j]
            xpm = x.copy(); xpm[i] += h[i]; xpm[j] -= h[j]
            xmp = x.copy(); xmp[i] -= h[i]; xmp[j] += h[j]
            xmm = x.copy(); xmm[i] -= h[i]; xmm[j] -= h[j]
            hess[i, j] = hess[j, i] = (fn(xpp) - fn(xpm) - fn(xmp) + fn(xmm)) / (
                4.0 * h[i] * h[j]
            )
    return hess


class OverlapFunction:
    """Coupling g on the overlap vector (length n(n+1)/2).

    Subclasses provide ``value``; derivative and batch evaluations fall
    back to central finite differences and row loops unless overridden.
    g must be invariant under simultaneous replica permutations; model
    construction checks this by sampling.
    """

    def __init__(self, n: int):
        if n < 1:
            raise ValueError("need n >= 1")
        self.n = n
        self.n_pairs = n * (n + 1) // 2

    def value(self, q) -> float:
        raise NotImplementedError

    def value_batch(self, Q: np.ndarray) -> np.ndarray:
        return np.array([self.value(row) for row in np.asarray(Q, dtype=float)])

    def gradient(self, q) -> np.ndarray:
        return fd_gradient(self.value, np.asarray(q, dtype=float))

    def hessian(self, q) -> np.ndarray:
        return fd_hessian(self.value, np.asarray(q, dtype=float))


class PolyOverlap(OverlapFunction):
    """Polynomial in the overlap coordinates, with analytic derivatives.

    ``terms`` is a sequence of (coefficient, powers) where powers maps a
    pair position (index into pair_indices(n)) to a nonnegative exponent.
    """

    def __init__(self, n: int, terms):
        super().__init__(n)
        cleaned = []
        for coef, powers in terms:
            pw = {int(k): int(v) for k, v in dict(powers).items() if int(v) != 0}
            for k in pw:
                if not 0 <= k < self.n_pairs:
                    raise ValueError(f"pair position {k} out of range")
            cleaned.append((float(coef), tuple(sorted(pw.items()))))
        self.terms = tuple(cleaned)

    @classmethod
    def zero(cls, n: int) -> "PolyOverlap":
        return cls(n, [])

    @classmethod
    def quadratic(cls, n: int, lam: float, pairs: str = "all") -> "PolyOverlap":
        """(lam/2) * sum of squared overlaps over the selected pair set."""
        idx = pair_indices(n)
        if pairs == "all":
            sel = range(len(idx))
        elif pairs == "distinct":
            sel = distinct_pair_positions(n)
        elif pairs == "diagonal":
            sel = [k for k, (a, b) in enumerate(idx) if a == b]
        else:
            raise ValueError("pairs must be one of: all, distinct, diagonal")
        return cls(n, [(0.5 * lam, {k: 2}) for k in sel])

    @classmethod
    def pairwise_square(cls, n: int, beta: float) -> "PolyOverlap":
        """(beta^2/2) * sum over distinct pairs of q_ab^2 (pair curvature beta^2)."""
        return cls.quadratic(n, beta * beta, pairs="distinct")

    def value(self, q) -> float:
        q = np.asarray(q, dtype=float)
        total = 0.0
        for coef, powers in self.terms:
            t = coef
            for k, e in powers:
                t *= q[k] ** e
            total += t
        return float(total)

    def value_batch(self, Q: np.ndarray) -> np.ndarray:
        Q = np.asarray(Q, dtype=float)
        out = np.zeros(Q.shape[0])
        for coef, powers in self.terms:
            t = np.full(Q.shape[0], coef)
            for k, e in powers:
                t = t * Q[:, k] ** e
            out += t
        return out

    def gradient(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        g = np.zeros(self.n_pairs)
        for coef, powers in self.terms:
            for k, e in powers:
                t = coef * e * q[k] ** (e - 1)
                for k2, e2 in powers:
                    if k2 != k:
                        t *= q[k2] ** e2
                g[k] += t
        return g

    def hessian(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        h = np.zeros((self.n_pairs, self.n_pairs))
        for coef, powers in self.terms:
            pw = dict(powers)
            for k, e in powers:
                # second derivative in the same coordinate
                if e >= 2:
                    t = coef * e * (e - 1) * q[k] ** (e - 2)
                    for k2, e2 in powers:
                        if k2 != k:
                            t *= q[k2] ** e2
                    h[k, k] += t
                # mixed derivatives
                for k2, e2 in powers:
                    if k2 <= k:
                        continue
                    t = coef * e * e2 * q[k] ** (e - 1) * q[k2] ** (e2 - 1)
                    for k3, e3 in powers:
                        if k3 != k and k3 != k2:
                            t *= q[k3] ** e3
                    h[k, k2] += t
                    h[k2, k] += t
        return h


class CallableOverlap(OverlapFunction):
    """Wrap a user callable; missing derivatives use finite differences."""

    def __init__(self, n, fn, grad=None, hess=None, batch=None):
        super().__init__(n)
        self._fn = fn
        self._grad = grad
        self._hess = hess
        self._batch = batch

    def value(self, q) -> float:
        return float(self._fn(np.asarray(q, dtype=float)))

    def value_batch(self, Q):
        if self._batch is not None:
            return np.asarray(self._batch(np.asarray(Q, dtype=float)), dtype=float)
        return super().value_batch(Q)

    def gradient(self, q):
        if self._grad is not None:
            return np.asarray(self._grad(np.asarray(q, dtype=float)), dtype=float)
        return super().gradient(q)

    def hessian(self, q):
        if self._hess is not None:
            return np.asarray(self._hess(np.asarray(q, dtype=float)), dtype=float)
        return super().hessian(q)


# ------------------------------------------------------------- local terms

def zero_local():
    return lambda xs: 0.0


def field_local(h: float):
    """h * sum over replicas of the symbol value."""
    return lambda xs: h * float(sum(xs))


class DenseModelSpec:
    """Replica count, alphabet, local term, and overlap coupling.

    Precomputes the product-symbol table, the local-term vector, and the
    pair-product matrix (symbols x pairs) whose rows are x^(a) x^(b).
    """

    def __init__(self, n: int, alphabet: Alphabet, f, g: OverlapFunction):
        if n < 1:
            raise ValueError("need n >= 1")
        if g.n != n:
            raise ValueError("overlap function built for a different replica count")
        self.n = int(n)
        self.alphabet = alphabet
        self.f = f
        self.g = g
        self.symbols = tuple(itertools.product(alphabet.values, repeat=n))
        self.num_symbols = len(self.symbols)
        self.pair_list = pair_indices(n)
        sym = np.array(self.symbols, dtype=float)  # (K, n)
        self.pair_products = np.column_stack(
            [sym[:, a] * sym[:, b] for (a, b) in self.pair_list]
        )
        self.f_values = np.array([float(f(s)) for s in self.symbols])
        if not np.all(np.isfinite(self.f_values)):
            raise ValueError("local term must be finite on every symbol")
        self._check_g_symmetry()

    def _check_g_symmetry(self):
        rng = np.random.default_rng(987654321)
        pos = {pair: k for k, pair in enumerate(self.pair_list)}
        for _ in range(4):
            q = rng.uniform(-0.9, 0.9, size=len(self.pair_list))
            perm = rng.permutation(self.n)
            qp = np.empty_like(q)
            for k, (a, b) in enumerate(self.pair_list):
                a2, b2 = sorted((perm[a], perm[b]))
                qp[pos[(a2, b2)]] = q[k]
            v1, v2 = self.g.value(q), self.g.value(qp)
            if abs(v1 - v2) > 1e-10 * (1.0 + abs(v1)):
                raise ValueError(
                    "overlap coupling is not invariant under replica permutations"
                )

    def overlaps(self, weights: np.ndarray) -> np.ndarray:
        """Overlap vector of a measure on the product symbols."""
        return np.asarray(weights, dtype=float) @ self.pair_products


# ----------------------------------------------------------- exact routes

def brute_force_expectation(spec: DenseModelSpec, N: int, *, guard: int = 10**8,
                            batch: int = 1 << 15) -> float:
    """log of the configuration sum, enumerated literally.

    Guarded to |X|^(n N) <= guard configurations.
    """
    K = spec.num_symbols
    total = K**N
    if total > guard:
        raise GuardError(f"brute force would enumerate {total} configurations (guard {guard})")
    powers = K ** np.arange(N - 1, -1, -1, dtype=np.int64)
    pieces = []
    for start in range(0, total, batch):
        idx = np.arange(start, min(start + batch, total), dtype=np.int64)
        digits = (idx[:, None] // powers) % K
        fsum = spec.f_values[digits].sum(axis=1)
        q = spec.pair_products[digits].mean(axis=1)
        lw = fsum + N * spec.g.value_batch(q)
        pieces.append(logsumexp(lw))
    return float(logsumexp(np.array(pieces)))


def type_log_weights(spec: DenseModelSpec, N: int, V: np.ndarray) -> np.ndarray:
    """log multinomial(v) + sum_x v(x) f(x) + N g(q(v/N)) for rows of V."""
    lw = log_multinomial_rows(V)
    lw = lw + V @ spec.f_values
    Q = (V / N) @ spec.pair_products
    lw = lw + N * spec.g.value_batch(Q)
    return lw


def exact_type_sum(spec: DenseModelSpec, N: int, *, guard: int = 10**8,
                   allow_large: bool = False) -> float:
    """log of the configuration sum, organized over empirical types.

    Equal to brute_force_expectation wherever both are feasible; remains
    tractable while the type count C(N + K - 1, K - 1) is manageable.
    """
    if N < 1:
        raise ValueError("need N >= 1")
    pieces = []
    for V in type_array_blocks(N, spec.num_symbols, guard=guard, allow_large=allow_large):
        pieces.append(logsumexp(type_log_weights(spec, N, V)))
    return float(logsumexp(np.array(pieces)))


def windowed_type_sum(spec: DenseModelSpec, N: int, alpha: float, nu_star,
                      *, guard: int = 10**8, allow_large: bool = False) -> float:
    """Type sum restricted to the window ||v - N nu*||_2 <= N^alpha.

    alpha must lie strictly between 1/2 (below the fluctuation scale) and
    2/3 (where cubic corrections enter).  Returns -inf for an empty window.
    """
    if not (0.5 < alpha < 2.0 / 3.0):
        raise ValueError("alpha must lie in (1/2, 2/3)")
    center = N * np.asarray(
        nu_star.weights if isinstance(nu_star, ProbMeasure) else nu_star, dtype=float
    )
    if center.size != spec.num_symbols:
        raise ValueError("nu_star has the wrong number of cells")
    radius = float(N) ** alpha
    pieces = []
    for V in type_array_blocks(N, spec.num_symbols, guard=guard, allow_large=allow_large):
        dist2 = ((V - center) ** 2).sum(axis=1)
        mask = dist2 <= radius * radius
        if mask.any():
            pieces.append(logsumexp(type_log_weights(spec, N, V[mask])))
    if not pieces:
        return float("-inf")
    return float(logsumexp(np.array(pieces)))


# ------------------------------------------------------- variational layer

@dataclass
class VariationalSolution:
    """Maximizing measure(s) of H(nu) + <f>_nu + g(q(nu)) over the simplex."""

    nu_star: ProbMeasure
    F: float
    residual: float
    co_maximizers: list[ProbMeasure]
    boundary: bool
    diagnostics: dict = field(default_factory=dict)

    @property
    def unique(self) -> bool:
        return len(self.co_maximizers) == 1


def _variational_objective(spec: DenseModelSpec, w: np.ndarray) -> float:
    return float(entropy(w) + w @ spec.f_values + spec.g.value(spec.overlaps(w)))


def _stationary_map(spec: DenseModelSpec, w: np.ndarray) -> np.ndarray:
    score = spec.f_values + spec.pair_products @ spec.g.gradient(spec.overlaps(w))
    score = score - score.max()
    e = np.exp(score)
    return e / e.sum()


def _run_fixed_point(spec, w, damping, tol, max_iter):
    for it in range(max_iter):
        target = _stationary_map(spec, w)
        w_new = (1.0 - damping) * w + damping * target
        delta = float(np.abs(w_new - w).max())
        w = w_new
        if delta <= tol:
            return w, it + 1, True
    return w, max_iter, False


def solve_variational(
    spec: DenseModelSpec,
    *,
    restarts: int = 32,
    damping: float = 0.5,
    tol: float = 1e-12,
    max_iter: int = 100_000,
    seed: int = 0,
    objective_gap: float = 1e-9,
    dedup_tol: float = 1e-8,
    boundary_tol: float = 1e-10,
) -> VariationalSolution:
    """Damped fixed-point iteration with deterministic multi-start.

    Restart k draws its start from a Dirichlet(1) with seed (seed, k); a
    uniform start is always included.  Runs are independent, so results do
    not depend on the worker count.
    """
    K = spec.num_symbols

    def starts():
        yield np.full(K, 1.0 / K)
        for k in range(restarts):
            rng = np.random.default_rng((seed, k))
            yield rng.dirichlet(np.ones(K))

    def run(w0):
        return _run_fixed_point(spec, w0, damping, tol, max_iter)

    workers = worker_count()
    start_list = list(starts())
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(run, start_list))
    else:
        runs = [run(w0) for w0 in start_list]

    converged = [(w, its) for (w, its, ok) in runs if ok]
    if not converged:
        best_res = min(
            float(np.abs(_stationary_map(spec, w) - w).max()) for (w, _, _) in runs
        )
        raise NonConvergenceError(
            f"no restart converged within {max_iter} iterations", residual=best_res
        )

    scored = sorted(
        ((_variational_objective(spec, w), w, its) for (w, its) in converged),
        key=lambda t: -t[0],
    )
    best_obj = scored[0][0]
    keep: list[np.ndarray] = []
    for obj, w, _ in scored:
        if obj < best_obj - objective_gap:
            break
        if all(float(np.abs(w - other).max()) > dedup_tol for other in keep):
            keep.append(w)

    best = keep[0]
    residual = float(np.abs(_stationary_map(spec, best) - best).max())
    boundary = any(float(w.min()) < boundary_tol for w in keep)
    measures = [ProbMeasure(w, labels=spec.symbols) for w in keep]
    return VariationalSolution(
        nu_star=measures[0],
        F=best_obj,
        residual=residual,
        co_maximizers=measures,
        boundary=boundary,
        diagnostics={
            "restarts": len(start_list),
            "converged": len(converged),
            "iterations_best": scored[0][2],
            "objective_gap": 0.0 if len(scored) == 1 else best_obj - scored[-1][0],
        },
    )


# -------------------------------------------------- fluctuation matrices

@dataclass
class DenseFluctuationMatrices:
    """Moment and curvature matrices of the type sum at a measure.

    Shapes: K = number of product symbols, P = n(n+1)/2 pairs.
      pair_products     (K, P)  symbol -> vector of x^(a) x^(b)
      contrast          (K, K-1) embedding of zero-sum coordinates against
                                 the first symbol as reference cell
      inv_measure_diag  (K, K)  diag(1/nu)
      measure_diag      (K, K)  diag(nu)
      measure_outer     (K, K)  nu nu^T
      pair_second_moment(P, P)  <(x^a x^b)(x^c x^d)>_nu
      pair_mean_outer   (P, P)  <x^a x^b> <x^c x^d>
      hessian           (P, P)  second derivatives of g at q(nu)
    """

    overlaps: np.ndarray
    pair_products: np.ndarray
    contrast: np.ndarray
    inv_measure_diag: np.ndarray
    measure_diag: np.ndarray
    measure_outer: np.ndarray
    pair_second_moment: np.ndarray
    pair_mean_outer: np.ndarray
    hessian: np.ndarray

    @property
    def indicator_covariance(self) -> np.ndarray:
        """diag(nu) - nu nu^T, the covariance of the one-hot symbol vector."""
        return self.measure_diag - self.measure_outer

    @property
    def pair_covariance(self) -> np.ndarray:
        """Covariance of the pair-product vector under nu."""
        return self.pair_second_moment - self.pair_mean_outer


def assemble_matrices(spec: DenseModelSpec, nu_star) -> DenseFluctuationMatrices:
    """Build all fluctuation matrices at a strictly interior measure."""
    w = np.asarray(
        nu_star.weights if isinstance(nu_star, ProbMeasure) else nu_star, dtype=float
    )
    if w.size != spec.num_symbols:
        raise ValueError("measure has the wrong number of cells")
    if float(w.min()) <= 0.0:
        raise BoundaryMaximizerError(
            "fluctuation matrices require a strictly interior measure"
        )
    J = spec.pair_products
    q = w @ J
    K = spec.num_symbols
    contrast = np.zeros((K, K - 1))
    contrast[0, :] = -1.0
    contrast[1:, :] = np.eye(K - 1)
    return DenseFluctuationMatrices(
        overlaps=q,
        pair_products=J,
        contrast=contrast,
        inv_measure_diag=np.diag(1.0 / w),
        measure_diag=np.diag(w),
        measure_outer=np.outer(w, w),
        pair_second_moment=J.T @ (J * w[:, None]),
        pair_mean_outer=np.outer(q, q),
        hessian=spec.g.hessian(q),
    )


@dataclass
class CentralApproxResult:
    """Exponent and Gaussian constant factor of the type sum."""

    F: float
    log_constant: float
    det_value: float
    matrices: DenseFluctuationMatrices
    per_maximizer: list[tuple[ProbMeasure, float]]
    diagnostics: dict = field(default_factory=dict)


def central_approx_constant(spec: DenseModelSpec, solution: VariationalSolution,
                            *, boundary_tol: float = 1e-10) -> CentralApproxResult:
    """Gaussian constant factor det(I - D2g (U' - U))^{-1/2}.

    With several co-maximizers the contributions add before taking logs.
    Raises BoundaryMaximizerError at a boundary maximizer and
    ATInstabilityError when any determinant is non-positive.
    """
    per: list[tuple[ProbMeasure, float]] = []
    logs = []
    mats0 = None
    for m in solution.co_maximizers:
        if m.min_weight() < boundary_tol:
            raise BoundaryMaximizerError(
                f"maximizer touches the simplex boundary (min weight {m.min_weight():.2e})"
            )
        mats = assemble_matrices(spec, m)
        P = mats.hessian.shape[0]
        try:
            d = det(np.eye(P) - mats.hessian @ mats.pair_covariance)
        except SingularMatrixError as exc:
            raise ATInstabilityError(f"fluctuation determinant is singular: {exc}") from exc
        if d <= 0.0:
            raise ATInstabilityError(
                f"fluctuation determinant {d:.6e} <= 0: Gaussian constant undefined"
            )
        per.append((m, d))
        logs.append(-0.5 * math.log(d))
        if mats0 is None:
            mats0 = mats
    return CentralApproxResult(
        F=solution.F,
        log_constant=float(logsumexp(np.array(logs))),
        det_value=per[0][1],
        matrices=mats0,
        per_maximizer=per,
        diagnostics={"n_maximizers": len(per), "residual": solution.residual},
    )


def asymptotic_estimate(spec: DenseModelSpec, N: int,
                        result: CentralApproxResult | None = None, **solver_kw) -> float:
    """N F + log constant: the central-approximation estimate of the log sum."""
    if result is None:
        solution = solve_variational(spec, **solver_kw)
        result = central_approx_constant(spec, solution)
    return N * result.F + result.log_constant
