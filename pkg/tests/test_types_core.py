"""Types, multinomials, the local Gaussian approximation, and the LU kernel."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from central_approx.errors import GuardError, SingularMatrixError
from central_approx.types_core import (
    Alphabet,
    ProbMeasure,
    TypeVector,
    det,
    entropy,
    enumerate_types,
    inv,
    local_approx_log_multinomial,
    log_multinomial,
    log_multinomial_rows,
    multinomial_exact,
    num_types,
    solve,
    type_array_blocks,
)


# ---------------------------------------------------------------- alphabets

def test_alphabet_basicindexing():
    a = Alphabet((-1.0, 1.0))
    assert len(a) == 2
    assert a.index(1) == 1
    assert a.index(-1.0) == 0
    with pytest.raises(ValueError):
        a.index(0.5)


def test_alphabet_rejects_duplicates_and_nonfinite():
    with pytest.raises(ValueError):
        Alphabet((1.0, 1.0))
    with pytest.raises(ValueError):
        Alphabet((0.0, float("inf")))
    with pytest.raises(ValueError):
        Alphabet(())


# ----------------------------------------------------------------- measures

def test_prob_measure_validation():
    ProbMeasure([0.25, 0.75])
    with pytest.raises(ValueError):
        ProbMeasure([0.5, 0.6])  # sums to 1.1
    with pytest.raises(ValueError):
        ProbMeasure([-0.1, 1.1])
    with pytest.raises(ValueError):
        ProbMeasure([0.5, float("nan")])
    # sum tolerance is 1e-12 absolute
    ProbMeasure([0.5, 0.5 + 0.9e-12])
    with pytest.raises(ValueError):
        ProbMeasure([0.5, 0.5 + 1e-9])


def test_prob_measure_weights_read_only():
    m = ProbMeasure([0.5, 0.5])
    with pytest.raises(ValueError):
        m.weights[0] = 0.9


def test_type_vector_total_check():
    t = TypeVector([2, 3], total=5)
    assert t.total == 5
    assert np.array_equal(t.counts, [2, 3])
    with pytest.raises(ValueError):
        TypeVector([2, 3], total=6)
    with pytest.raises(ValueError):
        TypeVector([-1, 6])
    with pytest.raises(ValueError):
        TypeVector([0.5, 0.5])


# ------------------------------------------------------------- multinomials

def test_multinomial_frozen_values():
    # oracle: exact big-integer binomial
    c = math.comb(100, 50)
    assert c == 100891344545564193334812497256
    assert multinomial_exact([50, 50]) == c
    expected = math.log(c)  # 66.78384165201743
    assert expected == pytest.approx(66.78384165201743, rel=1e-14)
    assert log_multinomial([50, 50]) == pytest.approx(expected, rel=1e-12)
    # small exact case
    assert multinomial_exact([1, 2, 3]) == 60
    assert log_multinomial([1, 2, 3]) == pytest.approx(math.log(60), rel=1e-12)
    assert multinomial_exact([0, 0]) == 1
    assert log_multinomial([0, 0]) == 0.0


def test_multinomial_exact_guard():
    with pytest.raises(GuardError):
        multinomial_exact([1500, 1500])


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(0, 60), min_size=1, max_size=6))
def test_multinomial_paths_agree(counts):
    # exact path and log-gamma path agree to 1e-9 relative in the log
    exact = math.log(multinomial_exact(counts))
    approx = log_multinomial(counts)
    assert abs(approx - exact) <= 1e-9 * max(1.0, abs(exact))


def test_multinomial_paths_agree_large():
    rng = np.random.default_rng(7)
    for _ in range(50):
        cells = rng.integers(2, 7)
        counts = rng.multinomial(300, np.ones(cells) / cells)
        exact = math.log(multinomial_exact(counts))
        assert abs(log_multinomial(counts) - exact) <= 1e-9 * abs(exact)


def test_log_multinomial_rows_matches_scalar():
    V = np.array([[0, 5], [2, 3], [5, 0]])
    rows = log_multinomial_rows(V)
    for row, val in zip(V, rows):
        assert val == pytest.approx(log_multinomial(row), abs=1e-12)


# ------------------------------------------------------------------ entropy

def test_entropy_values():
    assert entropy([1.0]) == 0.0
    assert entropy([0.5, 0.5]) == pytest.approx(math.log(2), rel=1e-14)
    # oracle: direct evaluation of -sum p log p
    expected = -(0.25 * math.log(0.25) + 0.75 * math.log(0.75))
    assert expected == pytest.approx(0.5623351446188083, rel=1e-14)
    assert entropy(ProbMeasure([0.25, 0.75])) == pytest.approx(expected, rel=1e-14)
    # 0 log 0 = 0 convention
    assert entropy([0.0, 1.0]) == 0.0


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(1, 50), min_size=1, max_size=8))
def test_entropy_bounds(raw):
    w = np.array(raw, dtype=float)
    w /= w.sum()
    h = entropy(w)
    assert -1e-12 <= h <= math.log(len(w)) + 1e-12


# ------------------------------------------------- local approximation

def test_local_approx_frozen_center_value():
    # oracle: exact binomial at the center, nu = (1/2, 1/2), v = 0, N = 100
    approx = local_approx_log_multinomial([0.5, 0.5], [0.0, 0.0], 100)
    assert approx == pytest.approx(66.78634161037477, rel=1e-12)
    exact = math.log(math.comb(100, 50))
    relerr = math.exp(approx - exact) - 1.0
    assert relerr == pytest.approx(2.503086e-03, rel=1e-4)  # ~0.25%, positive


def test_local_approx_error_decays_like_1_over_N():
    errs = {}
    for N in (50, 100, 200, 400, 800):
        exact = math.log(math.comb(N, N // 2))
        approx = local_approx_log_multinomial([0.5, 0.5], [0.0, 0.0], N)
        errs[N] = abs(math.exp(approx - exact) - 1.0)
    for N in (50, 100, 200):
        assert errs[4 * N] <= 0.3 * errs[N]


def test_local_approx_gaussian_width():
    # The quadratic coefficient must reproduce the binomial's local CLT
    # width: C(N, N/2 + d) / C(N, N/2) ~ exp(-2 d^2 / N).
    N = 400
    for d in (5, 10, 20):
        v = d / math.sqrt(N)
        exact = math.log(math.comb(N, N // 2 + d))
        approx = local_approx_log_multinomial([0.5, 0.5], [-v, v], N)
        # coefficient 1/2 keeps the defect tiny; coefficient 1 would be off
        # by 2 d^2 / N (0.125 .. 2.0 here)
        assert abs(exact - approx) < 0.05 * (2 * d * d / N)


def test_local_approx_rejects_bad_inputs():
    with pytest.raises(ValueError):
        local_approx_log_multinomial([1.0, 0.0], [0.0, 0.0], 10)
    with pytest.raises(ValueError):
        local_approx_log_multinomial([0.5, 0.5], [0.5, 0.0], 10)  # not balanced


# -------------------------------------------------------------- enumeration

def test_enumerate_types_small_lexicographic():
    got = [tuple(t.counts.tolist()) for t in enumerate_types(2, 2)]
    assert got == [(0, 2), (1, 1), (2, 0)]


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 8), st.integers(1, 4))
def test_enumerate_types_complete_and_sorted(N, cells):
    got = [tuple(t.counts.tolist()) for t in enumerate_types(N, cells)]
    assert len(got) == num_types(N, cells)
    assert len(set(got)) == len(got)
    assert got == sorted(got)
    assert all(sum(g) == N for g in got)


def test_type_array_blocks_concatenate_to_enumeration():
    blocks = list(type_array_blocks(9, 4, max_rows=16))
    assert len(blocks) > 1  # actually exercises the splitting path
    all_rows = np.vstack(blocks)
    assert all_rows.shape == (num_types(9, 4), 4)
    direct = np.array([t.counts for t in enumerate_types(9, 4)])
    assert np.array_equal(all_rows, direct)


def test_enumeration_guard():
    with pytest.raises(GuardError):
        list(enumerate_types(10**6, 6))
    # override works (use a small case so it stays fast)
    n = sum(1 for _ in enumerate_types(5, 3, guard=2, allow_large=True))
    assert n == num_types(5, 3)


# ------------------------------------------------------------ linear algebra

def test_det_known_values():
    assert det(np.eye(3)) == pytest.approx(1.0, rel=1e-14)
    assert det([[2.0, 0.0], [0.0, 3.0]]) == pytest.approx(6.0, rel=1e-13)
    assert det([[0.0, 1.0], [1.0, 0.0]]) == pytest.approx(-1.0, rel=1e-13)
    assert det(np.zeros((0, 0))) == 1.0


def test_det_accuracy_moderate_size():
    rng = np.random.default_rng(3)
    for n in (5, 20, 80):
        q, _ = np.linalg.qr(rng.standard_normal((n, n)))
        d = np.exp(rng.uniform(-0.5, 0.5, size=n))
        m = (q * d) @ q.T  # SPD with known determinant
        expected = float(np.prod(d))
        assert det(m) == pytest.approx(expected, rel=1e-11)


def test_det_signals_singularity():
    with pytest.raises(SingularMatrixError):
        det([[1.0, 2.0], [2.0, 4.0]])
    with pytest.raises(SingularMatrixError):
        det(np.zeros((3, 3)))


def test_solve_and_inv():
    rng = np.random.default_rng(11)
    a = rng.standard_normal((6, 6)) + 6 * np.eye(6)
    b = rng.standard_normal(6)
    x = solve(a, b)
    assert np.allclose(a @ x, b, atol=1e-12)
    assert np.allclose(a @ inv(a), np.eye(6), atol=1e-12)
    with pytest.raises(SingularMatrixError):
        solve(np.zeros((2, 2)), np.ones(2))


def test_det_product_identity_sylvester():
    # det(I_n + A B) = det(I_m + B A) for rectangular A (n x m), B (m x n)
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(1, 9))
        m = int(rng.integers(1, 9))
        a = rng.uniform(-1.0, 1.0, size=(n, m))
        b = rng.uniform(-1.0, 1.0, size=(m, n))
        d1 = det(np.eye(n) + a @ b)
        d2 = det(np.eye(m) + b @ a)
        defect = abs(d1 - d2) / (1.0 + abs(d1))
        worst = max(worst, defect)
    assert worst <= 1e-9
