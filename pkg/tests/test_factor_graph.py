"""Random regular factor-graph ensembles against exact enumeration oracles.

The ground truth throughout is exact arithmetic: the (Nl)! permutation
average at tiny N, big-rational type sums, and a dual grid sweep for the
Bethe maximum.  Asymptotic claims are checked by ratios at growing N.
"""

import math
import warnings
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from central_approx.errors import (
    BoundaryMaximizerError,
    GuardError,
    ValidationFailure,
)
from central_approx.factor_graph import (
    brute_force_permutation_oracle,
    assemble_fg_matrices,
    exact_expected_Z,
    exact_expected_Z_exact,
    expected_codewords_at_weight,
    expected_type_count_exact,
    fg_asymptotic_estimate,
    fg_constant_log,
    lattice_step_s,
    ldpc_expected_codewords,
    log_expected_type_count,
    make_ensemble,
    smith_normal_form_divisors,
    solve_bethe,
    step_size_methods,
)
from central_approx.types_core import Alphabet

BINARY = Alphabet((0.0, 1.0))
TERNARY = Alphabet((0.0, 1.0, 2.0))


def compositions(total, cells):
    if cells == 1:
        yield (total,)
        return
    for head in range(total + 1):
        for rest in compositions(total - head, cells - 1):
            yield (head,) + rest


# ------------------------------------------------------------ construction

def test_ensemble_rejects_bad_degrees():
    with pytest.raises(ValidationFailure):
        make_ensemble(1, 2, BINARY, "uniform")
    with pytest.raises(ValidationFailure):
        make_ensemble(2, 1, BINARY, "uniform")


def test_parity_needs_two_symbols():
    with pytest.raises(ValidationFailure):
        make_ensemble(2, 3, TERNARY, "parity")


def test_factor_table_validation():
    with pytest.raises(ValidationFailure):
        make_ensemble(2, 2, BINARY, [1.0, -0.5, 1.0, 1.0])
    with pytest.raises(ValidationFailure):
        make_ensemble(2, 2, BINARY, [0, 0, 0, 0])
    with pytest.raises(ValidationFailure):
        make_ensemble(2, 2, BINARY, "no-such-family")


def test_admissibility():
    ens = make_ensemble(3, 6, BINARY, "parity")
    assert ens.is_admissible(20) and not ens.is_admissible(3)
    with pytest.raises(ValidationFailure):
        exact_expected_Z(ens, 3)


def test_parity_support_is_even_weight_words():
    ens = make_ensemble(2, 4, BINARY, "parity")
    weights = ens.letter_counts[ens.support, 1]
    assert sorted(weights) == [0, 2, 2, 2, 2, 2, 2, 4]


# -------------------------------------------------- expected type counts

def test_single_symbol_type_count_is_one():
    ens = make_ensemble(2, 2, Alphabet((3.0,)), [1.0])
    assert expected_type_count_exact(ens, [2], [2], 2) == 1
    assert log_expected_type_count(ens, [2], [2], 2) == pytest.approx(0.0, abs=1e-12)


def test_inconsistent_pair_rejected():
    ens = make_ensemble(3, 6, BINARY, "parity")
    u = [0] * 64
    u[-1] = 3
    with pytest.raises(ValidationFailure):
        log_expected_type_count(ens, [3, 3], u, 6)


def test_exact_count_guard():
    ens = make_ensemble(3, 6, BINARY, "parity")
    v = [30, 30]
    u = [0] * 64
    u[0] = 30
    with pytest.raises(GuardError):
        expected_type_count_exact(ens, v, u, 60)


def test_type_counts_match_permutation_average():
    # every consistent (v, u) at N=2, l=r=2: the formula must equal the
    # tally over all 24 stub permutations, as exact rationals
    ens = make_ensemble(2, 2, BINARY, "uniform")
    oracle = brute_force_permutation_oracle(ens, 2)
    assert oracle.permutations == 24
    seen = 0
    for (v_key, u_key), weight in oracle.type_counts.items():
        assert expected_type_count_exact(ens, v_key, u_key, 2) == weight
        seen += 1
    assert seen >= 4


@pytest.mark.parametrize("l,r,N", [(2, 2, 3), (2, 4, 4)])
def test_type_count_sum_is_multinomial(l, r, N):
    # summing E[N(v,u)] over consistent u recovers the number of
    # assignments with letter type v, exactly
    ens = make_ensemble(l, r, BINARY, "uniform")
    M = ens.num_factors(N)
    cells = len(ens.words)
    for ones in range(N + 1):
        v = (N - ones, ones)
        total = Fraction(0)
        for u in compositions(M, cells):
            stub = ens.letter_counts.T @ np.array(u)
            if np.any(stub % l) or tuple(stub // l) != v:
                continue
            total += expected_type_count_exact(ens, v, u, N)
        assert total == math.comb(N, ones)


# ----------------------------------------------------- exact E[Z] oracles

PERMUTATION_CASES = [
    ("parity", 2, 2, 2, Fraction(8, 3)),
    ("parity", 2, 2, 3, Fraction(16, 5)),
    ("parity", 2, 2, 4, Fraction(128, 35)),
    ("uniform", 2, 2, 2, Fraction(4)),
    ("uniform", 2, 2, 3, Fraction(8)),
    ("parity", 2, 4, 2, Fraction(4)),
    ("parity", 2, 4, 4, Fraction(304, 35)),
    ("uniform", 2, 4, 2, Fraction(4)),
    ("uniform", 2, 4, 4, Fraction(16)),
]


@pytest.mark.parametrize("factor,l,r,N,expected", PERMUTATION_CASES)
def test_exact_Z_equals_permutation_oracle(factor, l, r, N, expected):
    ens = make_ensemble(l, r, BINARY, factor)
    oracle = brute_force_permutation_oracle(ens, N)
    assert oracle.expected_Z == expected
    assert exact_expected_Z_exact(ens, N) == expected
    assert exact_expected_Z(ens, N) == pytest.approx(float(math.log(expected)), abs=1e-12)


def test_general_alphabet_path_matches_oracle():
    ens = make_ensemble(2, 2, TERNARY, "uniform")
    oracle = brute_force_permutation_oracle(ens, 2)
    assert exact_expected_Z_exact(ens, 2) == oracle.expected_Z == 9


def test_permutation_oracle_guard():
    ens = make_ensemble(2, 2, BINARY, "uniform")
    with pytest.raises(GuardError):
        brute_force_permutation_oracle(ens, 5)


def test_exact_rational_needs_exact_table():
    ens = make_ensemble(2, 2, BINARY, lambda x: math.exp(-abs(x[0] - x[1])))
    with pytest.raises(ValidationFailure):
        exact_expected_Z_exact(ens, 2)
    # the float path still runs
    assert np.isfinite(exact_expected_Z(ens, 4))


@settings(max_examples=25, deadline=None)
@given(st.lists(st.integers(0, 4), min_size=4, max_size=4))
def test_generating_function_matches_permutations(table):
    assume(any(table))
    ens = make_ensemble(2, 2, BINARY, table)
    oracle = brute_force_permutation_oracle(ens, 2)
    assert exact_expected_Z_exact(ens, 2) == oracle.expected_Z


# ------------------------------------------------------- Bethe maximum

def bethe_dual_grid(ens, points=801):
    """Sweep the letter marginal; solve the inner maximization exactly.

    At a fixed marginal t the entropy-maximizing factor measure is the
    exponential family mu ~ f(x) e^{theta n1(x)} with theta matching the
    marginal, so a fine 1-D sweep brackets the Bethe maximum from below.
    """
    n1 = ens.letter_counts[:, 1].astype(float)
    logf = np.full(len(ens.words), -np.inf)
    sup = ens.support
    logf[sup] = np.log(ens.f_values[sup])
    best = -np.inf
    for t in np.linspace(1e-9, 1.0 - 1e-9, points):
        lo, hi = -60.0, 60.0
        for _ in range(90):
            theta = 0.5 * (lo + hi)
            lw = logf + theta * n1
            lw -= lw.max()
            mu = np.exp(lw)
            mu /= mu.sum()
            if float(mu @ n1) / ens.r < t:
                lo = theta
            else:
                hi = theta
        if abs(float(mu @ n1) / ens.r - t) > 1e-6:
            continue
        pos = mu > 0
        h_mu = -float(mu[pos] @ np.log(mu[pos]))
        mean_logf = float(mu[sup] @ np.log(ens.f_values[sup]))
        nu = np.array([1.0 - t, t])
        h_nu = -float(nu @ np.log(nu))
        best = max(best, ens.l / ens.r * (h_mu + mean_logf) - (ens.l - 1) * h_nu)
    return best


@pytest.mark.parametrize("l,r", [(3, 6), (2, 4)])
def test_bethe_parity_growth_rate(l, r):
    ens = make_ensemble(l, r, BINARY, "parity")
    sol = solve_bethe(ens)
    assert sol.F == pytest.approx(0.5 * math.log(2.0), abs=1e-12)
    assert sol.residual < 1e-10
    assert not sol.boundary
    grid = bethe_dual_grid(ens)
    assert grid <= sol.F + 5e-9
    assert sol.F - grid < 1e-6


def test_bethe_uniform_factor():
    ens = make_ensemble(2, 2, BINARY, "uniform")
    sol = solve_bethe(ens)
    assert sol.F == pytest.approx(math.log(2.0), abs=1e-12)
    assert np.allclose(sol.mu_star.weights, 0.25, atol=1e-10)


def test_bethe_single_symbol():
    ens = make_ensemble(2, 2, Alphabet((1.0,)), [2.5])
    sol = solve_bethe(ens)
    assert sol.F == pytest.approx(math.log(2.5), abs=1e-12)


def test_bethe_concentrating_maximizer_is_boundary():
    ens = make_ensemble(3, 3, TERNARY, "all-equal")
    sol = solve_bethe(ens)
    assert sol.boundary
    assert abs(sol.F) < 1e-4
    with pytest.raises(BoundaryMaximizerError):
        fg_constant_log(ens, sol)


def test_bethe_marginal_consistency():
    ens = make_ensemble(3, 6, BINARY, "parity")
    sol = solve_bethe(ens)
    marg = np.zeros(2)
    for w, m in zip(ens.letter_counts, sol.mu_star.weights):
        marg += m * w / ens.r
    assert np.abs(marg - sol.nu_star.weights).max() < 1e-10


# ------------------------------------------------- fluctuation matrices

def test_assembled_matrices_shapes_and_identities():
    ens = make_ensemble(2, 3, BINARY, "uniform")
    sol = solve_bethe(ens)
    mats = assemble_fg_matrices(ens, sol.mu_star, sol.nu_star)
    assert np.allclose(mats.letter_freq.sum(axis=1), 1.0)
    assert np.allclose(mats.variable_second, mats.variable_second.T)
    assert np.linalg.matrix_rank(mats.variable_outer) == 1
    # product-measure maximizer: V' - V collapses to the multinomial
    # covariance of one word, scaled by 1/r
    nu = sol.nu_star.weights
    expect = (np.diag(nu) - np.outer(nu, nu)) / ens.r
    assert np.abs(mats.variable_covariance_bare - expect).max() < 1e-10


def test_assemble_rejects_inconsistent_pair():
    ens = make_ensemble(2, 3, BINARY, "uniform")
    sol = solve_bethe(ens)
    skew = np.array([0.7, 0.3])
    with pytest.raises(ValidationFailure):
        assemble_fg_matrices(ens, sol.mu_star, skew)


def test_assemble_rejects_boundary_marginal():
    ens = make_ensemble(2, 2, BINARY, "uniform")
    mu = np.array([1.0, 0.0, 0.0, 0.0])
    with pytest.raises(BoundaryMaximizerError):
        assemble_fg_matrices(ens, mu, np.array([1.0, 0.0]))


# ------------------------------------------------------- lattice step s

def test_smith_normal_form_known_cases():
    assert smith_normal_form_divisors([[2, 0], [0, 3]]) == [1, 6]
    assert smith_normal_form_divisors([[1, 0], [0, 1]]) == [1, 1]
    assert smith_normal_form_divisors([[2, 4], [4, 8]]) == [2, 0]
    assert smith_normal_form_divisors([[0, 0], [0, 0]]) == [0, 0]
    assert smith_normal_form_divisors([[6], [4]]) == [2]
    divisors = smith_normal_form_divisors([[2, 4, 4], [-6, 6, 12], [10, 4, 16]])
    for a, b in zip(divisors, divisors[1:]):
        assert b == 0 or (a != 0 and b % a == 0)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.lists(st.integers(-6, 6), min_size=2, max_size=3),
                min_size=2, max_size=3).filter(lambda rows: len({len(r) for r in rows}) == 1))
def test_snf_chain_and_determinant(rows):
    A = np.array(rows)
    d = smith_normal_form_divisors(A)
    for a, b in zip(d, d[1:]):
        assert b == 0 or (a != 0 and b % a == 0)
    if A.shape[0] == A.shape[1]:
        prod = 1
        for x in d:
            prod *= x
        assert prod == round(abs(np.linalg.det(A)))


S_BATTERY = [
    (2, 4, BINARY, "parity", 1),
    (3, 6, BINARY, "parity", 3),
    (2, 6, BINARY, "parity", 1),
    (3, 4, BINARY, "parity", 3),
    (5, 4, BINARY, "parity", 5),
    (4, 4, BINARY, "parity", 2),
    (6, 4, BINARY, "parity", 3),
    (2, 2, BINARY, "uniform", 2),
    (3, 2, BINARY, "uniform", 3),
    (2, 2, TERNARY, "uniform", 4),
    (3, 2, TERNARY, "uniform", 9),
    (2, 3, BINARY, "all-equal", 2),
    (3, 3, BINARY, "all-equal", 1),
]


@pytest.mark.parametrize("l,r,alphabet,factor,s", S_BATTERY)
def test_step_size_battery(l, r, alphabet, factor, s):
    ens = make_ensemble(l, r, alphabet, factor)
    with warnings.catch_warnings():
        # a disagreement between the five routes is a bug, not a warning
        warnings.simplefilter("error")
        assert lattice_step_s(ens) == s
    # a box of width 3l (needs odd l) covers every residue class evenly,
    # making the lattice density exactly 1/s
    box = (3 * l - 1) // 2 if l % 2 else None
    methods = step_size_methods(ens, density_box_L=box)
    assert methods["snf"] == s
    assert methods["residue_count"] == s
    if "prime_rank" in methods:
        assert methods["prime_rank"] == s
    if "binary_gcd" in methods:
        assert methods["binary_gcd"] == s
    if box is not None:
        assert methods["box_density"] == Fraction(1, s)


def test_step_size_reference_invariance():
    ens = make_ensemble(3, 6, BINARY, "parity")
    for ref_word in [int(x) for x in ens.support[:4]]:
        for ref_symbol in (0, 1):
            assert lattice_step_s(ens, ref_word=ref_word, ref_symbol=ref_symbol) == 3


# --------------------------------------------- the constant, end to end

def test_uniform_factor_constant_is_one():
    # f == 1 makes Z = 2^N exactly; the estimate must be exact too
    ens = make_ensemble(2, 2, BINARY, "uniform")
    sol = solve_bethe(ens)
    assert abs(fg_constant_log(ens, sol)) < 1e-13
    for N in (4, 10):
        assert fg_asymptotic_estimate(ens, N, sol) == pytest.approx(
            exact_expected_Z(ens, N), abs=1e-10)


@pytest.mark.parametrize("l,r,constant,Ns,ratios", [
    (3, 6, 1.0, (20, 40, 60), (1.008778409, 1.001520522, 1.000648390)),
    (2, 4, 2.0, (20, 40, 80), (1.025047320, 1.010555439, 1.004953909)),
])
def test_parity_constant_against_exact_counts(l, r, constant, Ns, ratios):
    ens = make_ensemble(l, r, BINARY, "parity")
    sol = solve_bethe(ens)
    const_log = fg_constant_log(ens, sol)
    assert math.exp(const_log) == pytest.approx(constant, rel=1e-12)
    seen = []
    for N, expected in zip(Ns, ratios):
        ratio = math.exp(exact_expected_Z(ens, N) - N * sol.F - const_log)
        assert ratio == pytest.approx(expected, rel=1e-5)
        seen.append(ratio)
    assert seen[0] > seen[1] > seen[2] > 1.0


def test_constant_invariant_under_relabeling():
    plain = make_ensemble(3, 6, BINARY, "parity")
    swapped = make_ensemble(3, 6, Alphabet((1.0, 0.0)), "parity")
    sol_p, sol_s = solve_bethe(plain), solve_bethe(swapped)
    assert sol_p.F == pytest.approx(sol_s.F, abs=1e-12)
    assert fg_constant_log(plain, sol_p) == pytest.approx(
        fg_constant_log(swapped, sol_s), abs=1e-12)


@settings(max_examples=15, deadline=None)
@given(st.lists(st.integers(1, 5), min_size=4, max_size=4))
def test_growth_rate_invariant_under_relabeling(table):
    ens = make_ensemble(2, 2, BINARY, table)
    flipped = make_ensemble(2, 2, BINARY, [table[3], table[2], table[1], table[0]])
    a = solve_bethe(ens, restarts=6)
    b = solve_bethe(flipped, restarts=6)
    assert a.F == pytest.approx(b.F, abs=1e-9)


# ------------------------------------------------------------------ LDPC

def test_ldpc_total_count_matches_estimate():
    ens = make_ensemble(3, 6, BINARY, "parity")
    res = ldpc_expected_codewords(3, 6, 60)
    assert res.omega is None
    assert res.log_expected_count == pytest.approx(20.794415416798376, rel=1e-10)
    assert res.log_expected_count == pytest.approx(fg_asymptotic_estimate(ens, 60), abs=1e-12)


def test_ldpc_weight_zero_is_the_zero_word():
    res = ldpc_expected_codewords(3, 6, 60, omega=0.0)
    assert (res.log_expected_count, res.growth_rate, res.log_constant) == (0.0, 0.0, 0.0)
    for N in (12, 60):
        assert expected_codewords_at_weight(3, 6, N, 0) == 1


def test_ldpc_half_weight_is_untilted():
    res = ldpc_expected_codewords(3, 6, 60, omega=0.5)
    assert res.growth_rate == pytest.approx(0.5 * math.log(2.0), abs=1e-9)
    assert abs(res.theta) < 1e-9


def test_ldpc_weight_enumerator_point():
    res = ldpc_expected_codewords(3, 6, 100, omega=0.3)
    assert res.growth_rate == pytest.approx(0.26621528497429187, abs=1e-9)
    assert res.theta == pytest.approx(-0.7916330732659844, abs=1e-6)
    # the exact finite-N counts close in on the growth rate from below
    gaps = []
    for N in (40, 200):
        w = int(0.3 * N)
        exact = expected_codewords_at_weight(3, 6, N, w)
        log_exact = math.log(exact.numerator) - math.log(exact.denominator)
        gaps.append(res.growth_rate - log_exact / N)
    assert gaps[1] < gaps[0]
    assert 0 < gaps[1] < 0.015


def test_ldpc_full_weight_even_r():
    res = ldpc_expected_codewords(3, 6, 60, omega=1.0)
    assert res.log_expected_count == 0.0
    assert expected_codewords_at_weight(3, 6, 12, 12) == 1


def test_ldpc_infeasible_weights():
    # odd r kills the all-ones word: anything past the largest even
    # fraction has expected count zero
    res = ldpc_expected_codewords(2, 3, 6, omega=0.9)
    assert res.log_expected_count == -math.inf
    with pytest.raises(ValidationFailure):
        ldpc_expected_codewords(2, 3, 6, omega=2.0 / 3.0)
    with pytest.raises(ValidationFailure):
        ldpc_expected_codewords(3, 6, 60, omega=1.1)
    with pytest.raises(ValidationFailure):
        ldpc_expected_codewords(3, 6, 60, omega=-0.1)


def test_weight_enumerator_sums_to_total():
    N = 12
    ens = make_ensemble(3, 6, BINARY, "parity")
    total = sum(expected_codewords_at_weight(3, 6, N, w) for w in range(N + 1))
    assert total == exact_expected_Z_exact(ens, N)
    assert total == Fraction(28957999024, 434113615)
