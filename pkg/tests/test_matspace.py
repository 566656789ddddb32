import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from matkernel.matspace import (
    MatPoly,
    WeightFn,
    check_cauchy_schwarz,
    frobenius_norm,
    inner_dot,
    inner_poly,
    is_psd,
    spectral_norm,
)

# magnitudes below 1e-3 are excluded so squares never underflow
finite = st.one_of(st.just(0.0), st.floats(1e-3, 10), st.floats(-10, -1e-3))


def mat_pairs(max_side=5):
    return st.tuples(st.integers(1, max_side), st.integers(1, max_side)).flatmap(
        lambda s: st.tuples(arrays(float, s, elements=finite), arrays(float, s, elements=finite))
    )


def test_frobenius_examples():
    assert frobenius_norm([[3, 4], [0, 0]]) == 5.0
    assert frobenius_norm(np.zeros((2, 3))) == 0.0


def test_frobenius_matches_entry_loop():
    M = np.random.default_rng(1).standard_normal((5, 4))
    total = 0.0
    for row in M:
        for v in row:
            total += v * v
    assert frobenius_norm(M) == pytest.approx(np.sqrt(total), rel=1e-14)


def test_spectral_examples():
    assert spectral_norm(np.eye(3)) == pytest.approx(1.0, rel=1e-12)
    assert spectral_norm(np.diag([2.0, -5.0])) == pytest.approx(5.0, rel=1e-12)


def test_spectral_matches_singular_value():
    M = np.random.default_rng(2).standard_normal((4, 3))
    # independent route: largest singular value from an SVD
    assert spectral_norm(M) == pytest.approx(np.linalg.svd(M, compute_uv=False)[0], rel=1e-9)


def test_inner_dot_examples():
    I2 = np.eye(2)
    swap = np.array([[0.0, 1.0], [1.0, 0.0]])
    np.testing.assert_array_equal(inner_dot(I2, I2), I2)
    np.testing.assert_array_equal(inner_dot(I2, swap), swap)


def test_inner_dot_shape_mismatch():
    with pytest.raises(ValueError, match="mismatch"):
        inner_dot(np.ones((2, 3)), np.ones((3, 2)))


def test_rejects_non_finite():
    with pytest.raises(ValueError, match="non-finite"):
        frobenius_norm([[np.nan]])


@settings(max_examples=200, deadline=None)
@given(mat_pairs())
def test_inner_dot_transpose_symmetry(pair):
    X, Y = pair
    np.testing.assert_allclose(inner_dot(Y, X), inner_dot(X, Y).T, rtol=0, atol=1e-12)


@settings(max_examples=200, deadline=None)
@given(mat_pairs(), finite, finite, st.integers(0, 2**32 - 1))
def test_inner_dot_bilinear(pair, a, b, seed):
    X1, Y = pair
    X2 = np.random.default_rng(seed).standard_normal(X1.shape)
    lhs = inner_dot(a * X1 + b * X2, Y)
    rhs = a * inner_dot(X1, Y) + b * inner_dot(X2, Y)
    scale = max(1.0, np.max(np.abs(a * inner_dot(X1, Y))), np.max(np.abs(b * inner_dot(X2, Y))))
    assert np.max(np.abs(lhs - rhs)) <= 1e-10 * scale


@settings(max_examples=200, deadline=None)
@given(mat_pairs())
def test_self_product_psd_and_definite(pair):
    X, _ = pair
    S = inner_dot(X, X)
    assert is_psd(S)
    assert (np.count_nonzero(S) == 0) == (np.count_nonzero(X) == 0)


@settings(max_examples=200, deadline=None)
@given(mat_pairs())
def test_cauchy_schwarz_random(pair):
    X, Y = pair
    assert check_cauchy_schwarz(X, Y).holds


def test_cauchy_schwarz_equality_cases():
    X = np.random.default_rng(3).standard_normal((4, 3))
    same = check_cauchy_schwarz(X, X)
    assert same.holds and same.lhs == pytest.approx(same.rhs, rel=1e-12)
    zero = check_cauchy_schwarz(X, np.zeros_like(X))
    assert zero.holds and zero.lhs == 0.0 and zero.rhs == 0.0


def test_cauchy_schwarz_shape_mismatch():
    with pytest.raises(ValueError):
        check_cauchy_schwarz(np.ones((2, 2)), np.ones((3, 2)))


def test_is_psd_detects_negative_direction():
    assert not is_psd(np.diag([1.0, -1e-3]))
    assert is_psd(np.diag([1.0, -1e-12]))


# matrix polynomials -------------------------------------------------------


def test_matpoly_horner():
    A, B = np.eye(2), np.array([[0.0, 1.0], [2.0, 3.0]])
    P = MatPoly([A, B, A])
    np.testing.assert_allclose(P(2.0), A + 2 * B + 4 * A)
    assert P.degree == 2 and P.n == 2


def test_matpoly_validation():
    with pytest.raises(ValueError):
        MatPoly([])
    with pytest.raises(ValueError):
        MatPoly([np.eye(2), np.eye(3)])


def test_inner_poly_constant_identity():
    I = MatPoly([np.eye(2)])
    np.testing.assert_allclose(inner_poly(I, I, WeightFn.constant(np.eye(2)), 1), np.eye(2), atol=1e-14)


def test_inner_poly_scalar_square():
    x = MatPoly([[[0.0]], [[1.0]]])
    np.testing.assert_allclose(inner_poly(x, x, WeightFn.constant([[1.0]]), 2), [[1 / 3]], atol=1e-14)


def test_inner_poly_matches_closed_form():
    rng = np.random.default_rng(4)
    A, B = rng.standard_normal((2, 2, 2))
    P = MatPoly([np.eye(2), A])
    Q = MatPoly([np.zeros((2, 2)), B])
    # integral over (0, 1) of (I + x A)^T (x B) = B / 2 + A^T B / 3
    expected = B / 2 + A.T @ B / 3
    np.testing.assert_allclose(inner_poly(P, Q, WeightFn.constant(np.eye(2)), 2), expected, atol=1e-12)


def test_inner_poly_on_shifted_interval():
    x = MatPoly([[[0.0]], [[1.0]]])
    one = MatPoly([[[1.0]]])
    # integral of x over (-1, 3) is (9 - 1) / 2
    assert inner_poly(one, x, WeightFn.constant([[1.0]], -1.0, 3.0), 1)[0, 0] == pytest.approx(4.0, abs=1e-12)


def test_inner_poly_quadrature_exact_under_refinement():
    rng = np.random.default_rng(5)
    P = MatPoly(list(rng.standard_normal((3, 2, 2))))
    Q = MatPoly(list(rng.standard_normal((2, 2, 2))))
    L = rng.standard_normal((2, 2))
    W = WeightFn(lambda x: (1 + x**2) * (L @ L.T) + np.eye(2), 0.0, 2.0)
    q = (P.degree + Q.degree + 2) // 2 + 1
    np.testing.assert_allclose(inner_poly(P, Q, W, q), inner_poly(P, Q, W, 2 * q), atol=1e-10)


def test_inner_poly_cauchy_schwarz():
    rng = np.random.default_rng(6)
    W = WeightFn(lambda x: np.diag([1.0 + x, 2.0 - x]), 0.0, 1.0)
    inner = lambda P, Q: inner_poly(P, Q, W, 4)
    for _ in range(50):
        P = MatPoly(list(rng.standard_normal((2, 2, 2))))
        Q = MatPoly(list(rng.standard_normal((3, 2, 2))))
        assert check_cauchy_schwarz(P, Q, inner=inner).holds


def test_inner_poly_errors():
    P2, P3 = MatPoly([np.eye(2)]), MatPoly([np.eye(3)])
    W = WeightFn.constant(np.eye(2))
    with pytest.raises(ValueError, match="quad_order"):
        inner_poly(P2, P2, W, 0)
    with pytest.raises(ValueError, match="mismatch"):
        inner_poly(P2, P3, W, 1)
    with pytest.raises(ValueError, match="weight block"):
        inner_poly(P3, P3, W, 1)


def test_weight_validation():
    with pytest.raises(ValueError, match="not PSD"):
        WeightFn.constant(np.diag([1.0, -1.0]))(0.5)
    with pytest.raises(ValueError, match="not symmetric"):
        WeightFn.constant([[1.0, 1.0], [0.0, 1.0]])(0.5)
    with pytest.raises(ValueError, match="a < b"):
        WeightFn.constant(np.eye(2), 1.0, 1.0)
