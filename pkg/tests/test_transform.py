import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from sindex.transform import (
    DegenerateAuxiliaryError,
    IndexTransform,
    cdf,
    cdf_deriv,
    density,
    select_radius,
    standardize,
    transform_index,
)


def test_standardize_three_points():
    Z, params = standardize(np.array([[1.0], [2.0], [3.0]]))
    np.testing.assert_allclose(Z.ravel(), [-1, 0, 1])
    assert params.center[0] == 2.0 and params.scale[0] == 1.0


def test_standardize_moments_and_idempotence():
    X = np.random.default_rng(0).normal(3, 2, size=(500, 4))
    Z, _ = standardize(X)
    np.testing.assert_allclose(Z.mean(axis=0), 0, atol=1e-12)
    np.testing.assert_allclose(Z.std(axis=0, ddof=1), 1, atol=1e-12)
    Z2, _ = standardize(Z)
    np.testing.assert_allclose(Z2, Z, atol=1e-12)


def test_standardize_constant_column():
    with pytest.raises(DegenerateAuxiliaryError, match="degenerate auxiliary variable"):
        standardize(np.array([[0.0, 1.0], [0.0, 2.0], [0.0, 3.0]]))


def test_standardization_reused_on_new_rows():
    X = np.random.default_rng(1).random((50, 2))
    Z, params = standardize(X)
    np.testing.assert_allclose(params.apply(X[:5]), Z[:5])


def _rows_with_norms(norms, d=3):
    rng = np.random.default_rng(2)
    dirs = rng.normal(size=(len(norms), d))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    return dirs * np.asarray(norms, dtype=float)[:, None]


@pytest.mark.parametrize("alpha, expected", [(0.05, 95.0), (0.01, 99.0), (0.5, 50.0)])
def test_select_radius_nearest_rank(alpha, expected):
    X = _rows_with_norms(np.random.default_rng(3).permutation(np.arange(1, 101)))
    assert select_radius(X, alpha) == pytest.approx(expected, abs=1e-12)


def test_select_radius_identical_rows():
    X = np.tile([[3.0, 4.0]], (20, 1))
    for alpha in (0.01, 0.3, 0.9):
        assert select_radius(X, alpha) == pytest.approx(5.0)


def test_select_radius_empty():
    with pytest.raises(ValueError):
        select_radius(np.empty((0, 2)))


@pytest.mark.parametrize("a", [0.5, 2.0])
def test_density_d1_uniform(a):
    v = np.linspace(-a, a, 11)
    np.testing.assert_allclose(density(v, 1, a), 1 / (2 * a))
    assert density(a * 1.01, 1, a) == 0


@pytest.mark.parametrize("d", [2, 3, 4, 10])
def test_density_vanishes_at_boundary(d):
    assert density(2.0, d, 2.0) == 0
    assert density(-2.0, d, 2.0) == 0


@pytest.mark.parametrize("d", [1, 2, 3, 4, 7, 10])
@pytest.mark.parametrize("a", [0.7, 2.3])
def test_density_integrates_to_one(d, a):
    total, _ = quad(lambda v: density(v, d, a), -a, a, epsabs=1e-13, epsrel=1e-13)
    assert abs(total - 1) < 1e-8


@pytest.mark.parametrize("d", [1, 2, 3, 4, 7, 10])
def test_cdf_matches_quadrature(d):
    a = 1.9
    for v in np.linspace(-a, a, 13):
        ref, _ = quad(lambda t: density(t, d, a), -a, v, epsabs=1e-13, epsrel=1e-13)
        assert cdf(v, d, a) == pytest.approx(ref, abs=1e-10)


def test_cdf_closed_forms():
    a = 2.0
    for v in np.linspace(-a, a, 9):
        assert cdf(v, 1, a) == pytest.approx((v + a) / (2 * a), abs=1e-15)
        x = (v / a + 1) / 2
        assert cdf(v, 3, a) == pytest.approx(x**2 * (3 - 2 * x), abs=1e-13)
    assert cdf(a / 2, 3, a) == pytest.approx(0.84375, abs=1e-13)


@pytest.mark.parametrize("d", [1, 2, 5])
def test_cdf_center_and_ends(d):
    assert cdf(0.0, d, 1.3) == pytest.approx(0.5, abs=1e-14)
    assert cdf(-1.3, d, 1.3) == 0.0
    assert cdf(1.3, d, 1.3) == 1.0
    assert cdf(10.0, d, 1.3) == 1.0
    assert cdf(-10.0, d, 1.3) == 0.0


@pytest.mark.parametrize("d", [1, 2, 3, 4, 10])
def test_cdf_monotone_and_symmetric(d):
    a = 1.5
    v = np.linspace(-a, a, 1000)
    F = cdf(v, d, a)
    assert np.all(np.diff(F[1:-1]) > 0)
    np.testing.assert_allclose(cdf(-v, d, a), 1 - F, atol=1e-10)


@pytest.mark.parametrize("d", [1, 2, 3, 4, 10])
def test_cdf_deriv_is_density_and_finite_difference(d):
    a = 1.7
    rng = np.random.default_rng(d)
    v = rng.uniform(-a, a, 100)
    np.testing.assert_array_equal(cdf_deriv(v, d, a), density(v, d, a))
    vi = rng.uniform(-0.95 * a, 0.95 * a, 100)
    h = 1e-6
    fd = (cdf(vi + h, d, a) - cdf(vi - h, d, a)) / (2 * h)
    np.testing.assert_allclose(cdf_deriv(vi, d, a), fd, atol=1e-6)
    assert cdf_deriv(a * 1.5, d, a) == 0


def test_transform_index_examples():
    tr = IndexTransform(d=1, a=2.0)
    z = transform_index(np.array([[0.0], [1.0], [5.0], [-5.0], [2.0]]), [1.0], tr)
    np.testing.assert_allclose(z, [0.5, 0.75, 1.0, 0.0, 1.0])


def test_transform_index_rejects_non_unit_theta():
    tr = IndexTransform(d=2, a=1.0)
    with pytest.raises(ValueError, match="unit"):
        transform_index(np.zeros((3, 2)), [1.0, 1.0], tr)


def test_from_frame():
    X = np.random.default_rng(5).random((400, 3))
    tr, X_std = IndexTransform.from_frame(X, alpha=0.05)
    assert tr.d == 3
    norms = np.linalg.norm(X_std, axis=1)
    assert np.mean(norms <= tr.a) == pytest.approx(0.95, abs=1 / 400)


@settings(max_examples=50, deadline=None)
@given(
    vals=st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=30),
    d=st.integers(1, 10),
    a=st.floats(0.1, 10),
)
def test_transform_output_in_unit_interval(vals, d, a):
    X = np.zeros((len(vals), d))
    X[:, -1] = vals
    theta = np.zeros(d)
    theta[-1] = 1.0
    z = transform_index(X, theta, IndexTransform(d=d, a=a))
    assert np.all((z >= 0) & (z <= 1))


@settings(max_examples=50, deadline=None)
@given(v=st.floats(-5, 5), d=st.integers(1, 12), a=st.floats(0.2, 4))
def test_cdf_symmetry_property(v, d, a):
    assert cdf(-v, d, a) == pytest.approx(1 - cdf(v, d, a), abs=1e-10)
