import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.interpolate import BSpline

from sindex.splines import (
    KnotVector,
    basis_and_derivative,
    derivative_matrix,
    design_matrix,
    eval_basis,
    eval_basis_deriv,
    num_knots,
)


@pytest.mark.parametrize(
    "n, c1, c2, expected",
    [
        # floor(100 ** (1/5.5)) = floor(2.309) = 2
        (100, 1, 5, 2),
        # floor(5000 ** (1/5.5)) = floor(4.705) = 4
        (5000, 1, 10, 4),
        (1, 1, 5, 1),
        (5000, 1, 3, 3),
        (100, 2, 10, 4),
    ],
)
def test_num_knots(n, c1, c2, expected):
    assert num_knots(n, c1, c2) == expected


def test_num_knots_exact_power():
    # 2 ** 5.5 is not an integer; 32 ** (1/5.5) < 2, 64 ** (1/5.5) > 2
    assert num_knots(32, 1, 10) == 1
    assert num_knots(64, 1, 10) == 2


@pytest.mark.parametrize("bad", [(0, 1, 5), (10, 0, 5), (10, 1, 0)])
def test_num_knots_rejects_nonpositive(bad):
    with pytest.raises(ValueError):
        num_knots(*bad)


@pytest.mark.parametrize("J", [0, 1, 3, 10])
def test_knot_vector_layout(J):
    kv = KnotVector(J)
    t = kv.knots
    assert kv.dim == J + 4
    assert np.all(np.diff(t) >= 0)
    assert np.all(t[:4] == 0) and np.all(t[-4:] == 1)
    assert np.sum(t == 0) == 4 and np.sum(t == 1) == 4
    inner = t[3 : J + 5]
    np.testing.assert_allclose(np.diff(inner), 1 / (J + 1), atol=1e-15)


@pytest.mark.parametrize("J", [0, 2, 7])
def test_boundaries_are_unit_vectors(J):
    b0 = eval_basis(0.0, KnotVector(J))
    b1 = eval_basis(1.0, KnotVector(J))
    assert b0[0] == 1.0 and np.all(b0[1:] == 0)
    assert b1[-1] == 1.0 and np.all(b1[:-1] == 0)


def _bernstein(z):
    return np.array([math.comb(3, k) * z**k * (1 - z) ** (3 - k) for k in range(4)])


def _bernstein_deriv(z):
    # d/dz of C(3,k) z^k (1-z)^(3-k)
    return np.array([
        math.comb(3, k) * (k * z ** (k - 1) * (1 - z) ** (3 - k) if k else 0.0)
        - math.comb(3, k) * ((3 - k) * z**k * (1 - z) ** (2 - k) if k < 3 else 0.0)
        for k in range(4)
    ])


def test_bernstein_case_at_half():
    kv = KnotVector(0)
    np.testing.assert_allclose(eval_basis(0.5, kv), [0.125, 0.375, 0.375, 0.125], atol=1e-15)
    np.testing.assert_allclose(eval_basis_deriv(0.5, kv), [-0.75, -0.75, 0.75, 0.75], atol=1e-14)


def test_bernstein_case_everywhere():
    kv = KnotVector(0)
    for z in np.linspace(0, 1, 41):
        np.testing.assert_allclose(eval_basis(z, kv), _bernstein(z), atol=1e-14)
        np.testing.assert_allclose(eval_basis_deriv(z, kv), _bernstein_deriv(z), atol=1e-12)


@pytest.mark.parametrize("J", range(0, 11))
def test_matches_scipy_bspline(J):
    kv = KnotVector(J)
    z = np.linspace(0, 1, 203)
    ref = BSpline.design_matrix(z, kv.knots, 3).toarray()
    np.testing.assert_allclose(design_matrix(z, kv), ref, atol=1e-13)
    dref = np.column_stack([
        BSpline(kv.knots, np.eye(kv.dim)[j], 3).derivative()(z) for j in range(kv.dim)
    ])
    np.testing.assert_allclose(derivative_matrix(z, kv), dref, atol=1e-10)


@pytest.mark.parametrize("J", range(0, 11))
def test_partition_of_unity(J):
    z = np.random.default_rng(J).random(10_000)
    B = design_matrix(z, KnotVector(J))
    assert np.max(np.abs(B.sum(axis=1) - 1)) < 1e-12
    assert np.all(B >= 0)
    assert np.all((B > 0).sum(axis=1) <= 4)


@pytest.mark.parametrize("J", [0, 3, 10])
def test_local_support(J):
    kv = KnotVector(J)
    t = kv.knots
    z = np.random.default_rng(1).random(2000)
    B = design_matrix(z, kv)
    for j in range(kv.dim):
        outside = (z < t[j]) | (z > t[j + 4])
        assert np.all(B[outside, j] == 0)


@pytest.mark.parametrize("J", range(0, 11))
def test_derivative_matches_finite_differences(J):
    kv = KnotVector(J)
    rng = np.random.default_rng(100 + J)
    z = rng.uniform(1e-5, 1 - 1e-5, 200)
    h = 1e-6
    fd = (design_matrix(z + h, kv) - design_matrix(z - h, kv)) / (2 * h)
    dB = derivative_matrix(z, kv)
    # central differences straddling a knot pick up the jump in the second derivative
    near_knot = np.min(np.abs(z[:, None] - kv.knots[None, :]), axis=1) < 2 * h
    assert np.max(np.abs(fd - dB)[~near_knot]) < 1e-5
    np.testing.assert_allclose(dB.sum(axis=1), 0.0, atol=1e-10)


def test_derivative_random_z_J3():
    kv = KnotVector(3)
    for z in np.random.default_rng(7).uniform(0.01, 0.99, 25):
        fd = (eval_basis(z + 1e-6, kv) - eval_basis(z - 1e-6, kv)) / 2e-6
        np.testing.assert_allclose(eval_basis_deriv(z, kv), fd, atol=1e-5)


def test_interior_derivative_uses_knot_spacing():
    # in the interior the derivative is (J+1) * (B_{j,3} - B_{j+1,3})
    J = 4
    kv = KnotVector(J)
    z = np.array([0.45])
    t = kv.knots
    B3 = np.array([
        BSpline(t, np.eye(len(t) - 3)[j], 2, extrapolate=False)(z)[0] for j in range(len(t) - 3)
    ])
    B3 = np.nan_to_num(B3)
    expected = (J + 1) * (B3[:-1] - B3[1:])
    # functions fully inside the interior (j = 3..J)
    np.testing.assert_allclose(derivative_matrix(z, kv)[0, 3 : J + 1], expected[3 : J + 1],
                               atol=1e-12)


def test_basis_and_derivative_agree_with_separate_calls():
    kv = KnotVector(5)
    z = np.linspace(0, 1, 77)
    B, dB = basis_and_derivative(z, kv)
    np.testing.assert_array_equal(B, design_matrix(z, kv))
    np.testing.assert_array_equal(dB, derivative_matrix(z, kv))


def test_design_matrix_endpoints_J1():
    B = design_matrix([0.0, 1.0], KnotVector(1))
    np.testing.assert_array_equal(B, np.array([[1, 0, 0, 0, 0], [0, 0, 0, 0, 1.0]]))


@pytest.mark.parametrize("J", [0, 2, 6])
def test_cubic_reproduction(J):
    kv = KnotVector(J)
    z = np.linspace(0, 1, 100)
    B = design_matrix(z, kv)
    for coefs in ([1, 0, 0, 0], [0.3, -2, 5, 1.5], [-1, 4, -7, 3]):
        q = np.polyval(coefs[::-1], z)
        gamma, *_ = np.linalg.lstsq(B, q, rcond=None)
        assert np.max(np.abs(B @ gamma - q)) < 1e-8


@pytest.mark.parametrize("bad", [-1e-9, 1.0 + 1e-9, np.nan])
def test_rejects_points_outside_unit_interval(bad):
    with pytest.raises(ValueError):
        eval_basis(bad, KnotVector(2))


@settings(max_examples=60, deadline=None)
@given(z=st.floats(0.0, 1.0), J=st.integers(0, 10))
def test_partition_of_unity_property(z, J):
    b = eval_basis(z, KnotVector(J))
    assert abs(b.sum() - 1.0) < 1e-12
    assert np.all(b >= 0)
    assert abs(eval_basis_deriv(z, KnotVector(J)).sum()) < 1e-9 * (J + 1)
