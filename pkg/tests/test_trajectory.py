import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stf.trajectory import (
    BasisSpec,
    FotParams,
    basis_vector,
    derivative,
    evaluate,
    fot_from_coefficients,
    recenter,
    recommended_order,
    truncation_bound,
)


def test_monomial_basis_vector():
    np.testing.assert_allclose(basis_vector(BasisSpec("monomial", 3), 2.0), [1, 2, 4])
    np.testing.assert_allclose(basis_vector(BasisSpec("monomial", 1), 7.3), [1])


def test_trigonometric_basis_at_zero():
    np.testing.assert_allclose(basis_vector(BasisSpec("trigonometric", 2, omega=1.0), 0.0), [1, 0], atol=1e-15)


def test_trigonometric_derivative_matches_finite_difference():
    b = BasisSpec("trigonometric", 5, omega=0.7, phase=0.3)
    tau = np.array([0.2, 1.1])
    h = 1e-6
    fd = (b.matrix(tau + h) - b.matrix(tau - h)) / (2 * h)
    np.testing.assert_allclose(b.derivative_matrix(tau, 1), fd, atol=1e-8)


def test_custom_basis():
    b = BasisSpec("custom", functions=(np.ones_like, np.exp))
    assert b.order == 2
    np.testing.assert_allclose(basis_vector(b, 0.0), [1, 1])


def test_bad_basis_rejected():
    with pytest.raises(ValueError):
        BasisSpec("spline", 2)
    with pytest.raises(ValueError):
        BasisSpec("monomial", 0)


def test_evaluate_constant_and_quadratic():
    assert fot_from_coefficients([[5.0]]).values(123.0)[0] == 5.0
    fot = fot_from_coefficients([[1, 2, 3]])
    assert evaluate(fot, 2.0).value[0] == pytest.approx(17.0)


def test_derivatives_of_quadratic():
    fot = fot_from_coefficients([[1, 2, 3]])
    assert derivative(fot, 1.0, 1)[0] == pytest.approx(8.0)
    assert derivative(fot, 4.2, 2)[0] == pytest.approx(6.0)
    assert derivative(fot, 4.2, 3)[0] == 0.0


def test_values_vectorized_shape():
    fot = fot_from_coefficients([[1, 2], [3, 4]])
    assert fot.values(1.0).shape == (2,)
    assert fot.values(np.arange(4.0)).shape == (4, 2)


def test_coefficient_shape_mismatch():
    with pytest.raises(ValueError):
        FotParams(np.zeros((2, 3)), (BasisSpec("monomial", 3),) * 3)
    with pytest.raises(ValueError):
        FotParams(np.zeros((1, 3)), BasisSpec("monomial", 2))


def test_recommended_order():
    assert recommended_order("CV") == 2
    assert recommended_order("CA") == 3
    with pytest.raises(ValueError):
        recommended_order("jerk")


def test_truncation_bound():
    assert truncation_bound(6.0, 0.5, 3) == pytest.approx(0.125)
    assert truncation_bound(6.0, 0.0, 3) == 0.0
    assert truncation_bound(0.0, 0.5, 3) == 0.0


def test_truncation_bound_holds_for_cubic():
    # degree-2 Taylor polynomial of t^3 about 0 is 0, so the error is |t|^3
    bound = truncation_bound(6.0, 0.5, 3)
    t = np.linspace(-0.5, 0.5, 101)
    assert np.max(np.abs(t**3)) <= bound + 1e-15


@settings(max_examples=50, deadline=None)
@given(
    st.lists(st.floats(-5, 5), min_size=3, max_size=3),
    st.floats(-3, 3),
    st.floats(-3, 3),
)
def test_recenter_preserves_values(coeffs, t_ref, shift):
    fot = FotParams(np.array([coeffs]), BasisSpec("monomial", 3), t_ref)
    moved = recenter(fot, t_ref + shift)
    t = np.linspace(-4, 4, 9)
    np.testing.assert_allclose(moved.values(t), fot.values(t), atol=1e-9 * (1 + np.abs(fot.values(t))).max())


def test_recenter_trigonometric_preserves_values():
    b = BasisSpec("trigonometric", 3, omega=1.3)
    fot = FotParams(np.array([[0.5, -1.0, 2.0]]), b, 0.4)
    moved = recenter(fot, 1.7)
    t = np.linspace(-2, 3, 11)
    np.testing.assert_allclose(moved.values(t), fot.values(t), atol=1e-9)


def test_valid_window_checks():
    with pytest.raises(ValueError):
        FotParams(np.zeros((1, 2)), valid_window=(2.0, 1.0))
    fot = FotParams(np.zeros((1, 2)), valid_window=(0.0, 1.0))
    assert fot.contains(0.5) and not fot.contains(1.5)
    assert math.isinf(FotParams(np.zeros((1, 2))).valid_window[1])
