import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from toruscopula.correlation import (
    AR1,
    ExpDecay,
    Identity,
    NotPositiveDefiniteError,
    Unstructured,
    build_matrix,
    factorize,
)
from toruscopula.spatial import distance_matrix


def random_corr(rng, k):
    a = rng.standard_normal((k, k + 2))
    c = a @ a.T
    d = np.sqrt(np.diag(c))
    return c / np.outer(d, d)


def brute_conditional(omega, target):
    # explicit block inverse of the remaining coordinates
    rest = [i for i in range(omega.shape[0]) if i != target]
    w21 = omega[target, rest]
    inv22 = np.linalg.inv(omega[np.ix_(rest, rest)])
    return w21 @ inv22, 1.0 - w21 @ inv22 @ w21


# ---- build_matrix ----

def test_ar1_examples():
    np.testing.assert_array_equal(build_matrix(AR1(0.0, 4)), np.eye(4))
    np.testing.assert_allclose(build_matrix(AR1(0.5, 3)),
                               [[1, .5, .25], [.5, 1, .5], [.25, .5, 1]], atol=1e-15)


def test_expdecay_example():
    d = np.array([[0.0, np.log(2)], [np.log(2), 0.0]])
    assert build_matrix(ExpDecay(1.0, d))[0, 1] == pytest.approx(0.5, abs=1e-15)


def test_structure_validation():
    with pytest.raises(ValueError):
        AR1(1.0, 3)
    with pytest.raises(ValueError):
        AR1(-1.2, 3)
    with pytest.raises(ValueError):
        ExpDecay(0.0, np.zeros((2, 2)))
    with pytest.raises(ValueError):
        ExpDecay(1.0, np.array([[0.0, 1.0], [2.0, 0.0]]))
    with pytest.raises(ValueError):
        ExpDecay(1.0, np.array([[1.0, 1.0], [1.0, 0.0]]))
    with pytest.raises(ValueError):
        Unstructured(np.array([[1.0, 0.2], [0.3, 1.0]]))
    with pytest.raises(ValueError):
        Unstructured(np.array([[2.0, 0.2], [0.2, 1.0]]))


def test_unstructured_not_positive_definite():
    bad = np.array([[1.0, 0.9, -0.9], [0.9, 1.0, 0.9], [-0.9, 0.9, 1.0]])
    with pytest.raises(NotPositiveDefiniteError):
        build_matrix(Unstructured(bad))


@settings(max_examples=60, deadline=None)
@given(st.floats(-0.99, 0.99), st.integers(1, 50))
def test_ar1_always_factorizes(rho, k):
    fc = factorize(build_matrix(AR1(rho, k)))
    np.testing.assert_allclose(fc.lower @ fc.lower.T, fc.matrix, atol=1e-10)
    # determinant identity (1 - rho^2)^(K - 1)
    assert fc.log_det == pytest.approx((k - 1) * np.log1p(-rho * rho), abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.01, 100.0), st.integers(0, 10_000))
def test_expdecay_always_factorizes(rho, seed):
    pts = np.random.default_rng(seed).uniform(size=(15, 2))
    d = distance_matrix(pts)
    fc = factorize(build_matrix(ExpDecay(rho, d)))
    np.testing.assert_allclose(fc.lower @ fc.lower.T, fc.matrix, atol=1e-10)


# ---- factorize ----

def test_factorize_examples():
    fc = factorize(np.eye(4))
    np.testing.assert_array_equal(fc.lower, np.eye(4))
    assert fc.log_det == 0.0
    assert factorize([[1, 0.8], [0.8, 1]]).log_det == pytest.approx(np.log(0.36), abs=1e-15)
    m = build_matrix(AR1(0.5, 3))
    assert factorize(m).log_det == pytest.approx(2 * np.log(0.75), abs=1e-14)
    assert factorize(m).log_det == pytest.approx(np.log(np.linalg.det(m)), abs=1e-14)


def test_factorize_reports_failing_pivot():
    m = np.eye(4)
    m[2, 3] = m[3, 2] = 1.0  # rows 2 and 3 identical
    with pytest.raises(NotPositiveDefiniteError) as info:
        factorize(m)
    assert info.value.pivot == 3
    assert "3" in str(info.value)
    m = np.array([[1.0, 2.0], [2.0, 1.0]])
    with pytest.raises(NotPositiveDefiniteError) as info:
        factorize(m)
    assert info.value.pivot == 1


def test_factorize_pivot_tolerance_refuses_near_singular():
    eps = 1e-13
    m = np.array([[1.0, 1.0 - eps], [1.0 - eps, 1.0]])
    with pytest.raises(NotPositiveDefiniteError):
        factorize(m)


def test_factorize_bad_shapes():
    with pytest.raises(ValueError):
        factorize(np.ones((2, 3)))
    with pytest.raises(ValueError):
        factorize(np.array([[1.0, np.nan], [np.nan, 1.0]]))


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 12), st.integers(0, 10_000))
def test_factor_invariants_random(k, seed):
    omega = random_corr(np.random.default_rng(seed), k)
    fc = factorize(omega)
    np.testing.assert_allclose(fc.lower @ fc.lower.T, omega, atol=1e-10)
    assert np.allclose(np.triu(fc.lower, 1), 0.0)
    assert fc.log_det == pytest.approx(2 * np.sum(np.log(np.diag(fc.lower))), abs=1e-12)
    assert fc.log_det == pytest.approx(np.linalg.slogdet(omega)[1], abs=1e-9)


# ---- quadratic form and solves ----

def test_quadratic_form_examples():
    fc = factorize([[1, 0.8], [0.8, 1]])
    assert fc.quadratic_form([1.0, 1.0]) == pytest.approx(0.888888888888888888888888888889, abs=1e-14)
    omega = np.array([[1, 0.8], [0.8, 1]])
    z = np.ones(2)
    assert fc.quadratic_form(z) == pytest.approx(z @ z - z @ np.linalg.inv(omega) @ z, abs=1e-14)
    assert fc.quadratic_form(np.zeros(2)) == 0.0


def test_quadratic_form_identity_is_zero():
    fc = factorize(np.eye(6))
    z = np.random.default_rng(1).standard_normal((100, 6))
    assert np.all(fc.quadratic_form(z) == 0.0)


def test_quadratic_form_dimension_mismatch():
    with pytest.raises(ValueError):
        factorize(np.eye(3)).quadratic_form(np.ones(2))


def test_solve_and_whiten_match_dense_algebra():
    rng = np.random.default_rng(5)
    omega = random_corr(rng, 7)
    fc = factorize(omega)
    b = rng.standard_normal((7, 3))
    np.testing.assert_allclose(fc.solve(b), np.linalg.solve(omega, b), atol=1e-10)
    z = rng.standard_normal((2, 4, 7))
    w = fc.whiten(z)
    np.testing.assert_allclose(np.sum(w * w, axis=-1),
                               np.einsum("...i,ij,...j", z, np.linalg.inv(omega), z), atol=1e-9)


# ---- conditional partition ----

def test_partition_examples():
    p = factorize(np.eye(4)).conditional_partition(2)
    np.testing.assert_array_equal(p.weights, 0.0)
    assert p.cond_variance == 1.0
    p = factorize([[1, 0.8], [0.8, 1]]).conditional_partition(1)
    np.testing.assert_allclose(p.weights, [0.8], atol=1e-15)
    assert p.cond_variance == pytest.approx(0.36, abs=1e-15)
    omega = build_matrix(AR1(0.5, 3))
    p = factorize(omega).conditional_partition(1)
    w, v = brute_conditional(omega, 1)
    np.testing.assert_allclose(p.weights, w, atol=1e-14)
    np.testing.assert_allclose(p.weights, [0.4, 0.4], atol=1e-14)
    assert p.cond_variance == pytest.approx(v, abs=1e-14)
    assert p.mean([1.0, -1.0]) == pytest.approx(0.0, abs=1e-15)


def test_partition_errors():
    with pytest.raises(ValueError):
        factorize(np.eye(1)).conditional_partition(0)
    with pytest.raises(IndexError):
        factorize(np.eye(3)).conditional_partition(3)


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 10), st.integers(0, 10_000), st.data())
def test_partition_matches_block_inverse(k, seed, data):
    omega = random_corr(np.random.default_rng(seed), k)
    target = data.draw(st.integers(0, k - 1))
    p = factorize(omega).conditional_partition(target)
    w, v = brute_conditional(omega, target)
    np.testing.assert_allclose(p.weights, w, atol=1e-8)
    assert p.cond_variance == pytest.approx(v, abs=1e-10)
    assert 0.0 < p.cond_variance <= 1.0


def test_partition_variance_one_iff_unit_row():
    omega = np.eye(4)
    omega[0, 1] = omega[1, 0] = 0.3
    fc = factorize(omega)
    assert fc.conditional_partition(2).cond_variance == 1.0
    assert fc.conditional_partition(3).cond_variance == 1.0
    assert fc.conditional_partition(0).cond_variance < 1.0


def test_identity_structure():
    assert Identity(3).dim == 3
    np.testing.assert_array_equal(build_matrix(Identity(3)), np.eye(3))
