"""Dense complex kernels checked against independent small-scale oracles:
loop-nest products, cofactor determinants, and truncated exponential series.
"""

import numpy as np
import pytest

from matsol.linalg import (
    ExpOverflowError,
    SingularMatrixError,
    anticommutator,
    commutator,
    expm,
    lu_det_solve,
    mat_mul,
)


def _rand(rng, n, m=None):
    m = n if m is None else m
    return rng.standard_normal((n, m)) + 1j * rng.standard_normal((n, m))


def _mul_loops(a, b):
    n, k = a.shape
    m = b.shape[1]
    out = np.zeros((n, m), dtype=complex)
    for i in range(n):
        for j in range(m):
            acc = 0j
            for p in range(k):
                acc += a[i, p] * b[p, j]
            out[i, j] = acc
    return out


def _det_cofactor(a):
    n = a.shape[0]
    if n == 1:
        return complex(a[0, 0])
    tot = 0j
    for j in range(n):
        minor = np.delete(np.delete(a, 0, axis=0), j, axis=1)
        tot += (-1) ** j * a[0, j] * _det_cofactor(minor)
    return tot


def test_mat_mul_matches_loop_product():
    rng = np.random.default_rng(101)
    for n, k, m in [(1, 1, 1), (2, 3, 2), (4, 4, 4), (5, 2, 3)]:
        a, b = _rand(rng, n, k), _rand(rng, k, m)
        assert np.abs(mat_mul(a, b) - _mul_loops(a, b)).max() <= 1e-13


def test_mat_mul_rejects_mismatched_shapes():
    rng = np.random.default_rng(102)
    with pytest.raises(ValueError):
        mat_mul(_rand(rng, 2, 3), _rand(rng, 2, 3))
    with pytest.raises(ValueError):
        mat_mul(np.zeros(3), np.zeros((3, 3)))


def test_bracket_identities():
    rng = np.random.default_rng(103)
    t, s = _rand(rng, 3), _rand(rng, 3)
    assert np.abs(commutator(t, s) + commutator(s, t)).max() == 0.0
    assert np.abs(anticommutator(t, s) - anticommutator(s, t)).max() == 0.0
    assert np.abs(anticommutator(t, s) - (t @ s + s @ t)).max() == 0.0
    # {T, T} = 2 T^2 and [T, T] = 0
    assert np.abs(commutator(t, t)).max() == 0.0
    assert np.abs(anticommutator(t, t) - 2 * t @ t).max() <= 1e-14


def test_det_identity_and_diagonal():
    assert lu_det_solve(np.eye(4)).det == 1.0 + 0j
    d = np.diag([2.0 + 1j, -3.0, 0.5j])
    ref = (2.0 + 1j) * (-3.0) * 0.5j
    assert abs(lu_det_solve(d).det - ref) <= 1e-14 * abs(ref)


def test_det_matches_cofactor_expansion():
    rng = np.random.default_rng(104)
    for n in (1, 2, 3, 4, 5):
        a = _rand(rng, n)
        ref = _det_cofactor(a)
        got = lu_det_solve(a).det
        assert abs(got - ref) <= 1e-11 * max(abs(ref), 1.0)


def test_det_multiplicative():
    rng = np.random.default_rng(105)
    for _ in range(10):
        a, b = _rand(rng, 4), _rand(rng, 4)
        da, db = lu_det_solve(a).det, lu_det_solve(b).det
        dab = lu_det_solve(a @ b).det
        assert abs(dab - da * db) <= 1e-10 * abs(da * db)


def test_solve_residual_small():
    rng = np.random.default_rng(106)
    a = _rand(rng, 5)
    b = _rand(rng, 5, 2)
    x = lu_det_solve(a, b).solution
    res = np.abs(a @ x - b).max()
    assert res <= 1e-12 * np.abs(a).max() * max(np.abs(x).max(), 1.0)
    # vector right-hand side keeps its rank
    v = lu_det_solve(a, b[:, 0]).solution
    assert v.shape == (5,)
    assert np.abs(v - x[:, 0]).max() <= 1e-12


def test_singular_matrix_flagged_and_solve_raises():
    a = np.array([[1.0, 2.0], [2.0, 4.0]], dtype=complex)  # rank 1
    r = lu_det_solve(a)
    assert r.singular
    assert abs(r.det) <= 1e-12
    with pytest.raises(SingularMatrixError):
        lu_det_solve(a, np.ones(2))


def test_rhs_shape_mismatch():
    with pytest.raises(ValueError):
        lu_det_solve(np.eye(3), np.ones(2))


def _expm_series(a, terms=40):
    out = np.eye(a.shape[0], dtype=complex)
    term = np.eye(a.shape[0], dtype=complex)
    for n in range(1, terms):
        term = term @ a / n
        out = out + term
    return out


def test_expm_zero_and_diagonal():
    assert np.abs(expm(np.zeros((3, 3))) - np.eye(3)).max() == 0.0
    d = np.diag([0.3 + 1j, -2.0, 0.0])
    assert np.abs(expm(d) - np.diag(np.exp(np.diag(d)))).max() == 0.0


def test_expm_matches_taylor_series():
    rng = np.random.default_rng(107)
    for n in (1, 2, 4):
        a = 0.6 * _rand(rng, n)  # small norm keeps the series reference honest
        assert np.abs(expm(a) - _expm_series(a)).max() <= 1e-12


def test_expm_inverse_pairing():
    rng = np.random.default_rng(108)
    a = _rand(rng, 4)
    prod = expm(a) @ expm(-a)
    assert np.abs(prod - np.eye(4)).max() <= 1e-11


def test_expm_additivity_for_commuting_arguments():
    rng = np.random.default_rng(109)
    a = _rand(rng, 3)
    # a and 2a commute, so exp(a) exp(2a) = exp(3a)
    lhs = expm(a) @ expm(2 * a)
    assert np.abs(lhs - expm(3 * a)).max() <= 1e-10 * np.abs(lhs).max()


def test_expm_overflow_guard():
    with pytest.raises(ExpOverflowError):
        expm(np.diag([800.0, 0.0]))
    with pytest.raises(ExpOverflowError):
        expm(np.full((2, 2), 2000.0, dtype=complex))
