#!/usr/bin/env python3
"""
Test numerics primitives: Hermite polynomials, Gauss-Hermite rules, the
Hermite-Gaussian integral identity and chirped line integrals
"""

import sys
import os
import math
import cmath

import numpy as np
import pytest
from scipy.integrate import quad

# Add the project root to Python path
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from services.errors import ConvergenceError, DegenerateBranchError, ValidationError
from services.numerics import (
    QuadratureSpec, gauss_hermite_rule, hermite_gaussian_integral, hermite_poly, oscillatory_line_integral,
)


def test_hermite_poly_low_orders():
    x = np.linspace(-2.0, 2.0, 9)
    np.testing.assert_allclose(hermite_poly(0, x), np.ones_like(x))
    np.testing.assert_allclose(hermite_poly(1, x), 2 * x)
    np.testing.assert_allclose(hermite_poly(3, x), 8 * x ** 3 - 12 * x, atol=1e-12)
    np.testing.assert_allclose(hermite_poly(4, x), 16 * x ** 4 - 48 * x ** 2 + 12, atol=1e-12)


def test_hermite_poly_scalar_and_complex():
    assert hermite_poly(2, 0.5) == pytest.approx(4 * 0.25 - 2)
    z = 0.3 + 0.7j
    assert hermite_poly(2, z) == pytest.approx(4 * z ** 2 - 2)


def test_hermite_poly_matches_numpy_series():
    x = np.linspace(-3.0, 3.0, 13)
    for n in range(8):
        coefficients = np.zeros(n + 1)
        coefficients[n] = 1.0
        np.testing.assert_allclose(hermite_poly(n, x), np.polynomial.hermite.hermval(x, coefficients),
                                   rtol=1e-12, atol=1e-9)


def test_hermite_poly_rejects_bad_input():
    with pytest.raises(ValidationError):
        hermite_poly(-1, 0.0)
    with pytest.raises(ValidationError):
        hermite_poly(2, np.array([0.0, np.nan]))


def test_gauss_hermite_rule_integrates_polynomials_exactly():
    nodes, weights = gauss_hermite_rule(10)
    assert weights.sum() == pytest.approx(math.sqrt(math.pi), rel=1e-13)
    # integral of x^2 exp(-x^2) is sqrt(pi)/2, of x^4 exp(-x^2) is 3 sqrt(pi)/4
    assert np.sum(weights * nodes ** 2) == pytest.approx(math.sqrt(math.pi) / 2, rel=1e-13)
    assert np.sum(weights * nodes ** 4) == pytest.approx(3 * math.sqrt(math.pi) / 4, rel=1e-13)


def test_gauss_hermite_low_order_rules():
    nodes, weights = gauss_hermite_rule(1)
    np.testing.assert_allclose(nodes, [0.0], atol=1e-15)
    np.testing.assert_allclose(weights, [math.sqrt(math.pi)], rtol=1e-13)
    nodes, weights = gauss_hermite_rule(2)
    np.testing.assert_allclose(nodes, [-1 / math.sqrt(2), 1 / math.sqrt(2)], rtol=1e-13)
    np.testing.assert_allclose(weights, [math.sqrt(math.pi) / 2] * 2, rtol=1e-13)


def test_hermite_gaussian_integral_reference_values():
    assert hermite_gaussian_integral(0, 0.4, 0.0) == pytest.approx(math.sqrt(math.pi), rel=1e-14)
    assert hermite_gaussian_integral(1, 0.5, 1.0) == pytest.approx(math.sqrt(math.pi), rel=1e-12)
    assert hermite_gaussian_integral(2, 0.3, 0.0) == pytest.approx(-3.2259, abs=1e-4)


@pytest.mark.parametrize("order", [0, 201])
def test_gauss_hermite_rule_order_range(order):
    with pytest.raises(ValidationError):
        gauss_hermite_rule(order)


def test_hermite_gaussian_integral_second_order_closed_form():
    alpha, beta = 0.5, 0.3
    # integral of (4 a^2 y^2 - 2) exp(-(y - b)^2) = sqrt(pi) (4 a^2 (b^2 + 1/2) - 2)
    expected = math.sqrt(math.pi) * (4 * alpha ** 2 * (beta ** 2 + 0.5) - 2)
    assert hermite_gaussian_integral(2, alpha, beta) == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("n", [0, 1, 3, 5])
def test_hermite_gaussian_integral_against_quadrature(n):
    alpha, beta = 0.7, -0.4
    real, _ = quad(lambda y: hermite_poly(n, alpha * y) * math.exp(-(y - beta) ** 2), -30, 30,
                   epsabs=1e-13, epsrel=1e-13, limit=200)
    assert hermite_gaussian_integral(n, alpha, beta).real == pytest.approx(real, rel=1e-9, abs=1e-11)


def test_hermite_gaussian_integral_is_branch_independent_for_complex_alpha():
    # s^n H_n(z/s) is a polynomial in s^2, so the other root of 1 - alpha^2 gives the same value
    alpha, beta, n = 0.8 - 0.6j, 0.2 + 0.1j, 4
    s = -cmath.sqrt(1 - alpha ** 2)
    other_branch = math.sqrt(math.pi) * s ** n * hermite_poly(n, alpha * beta / s)
    assert hermite_gaussian_integral(n, alpha, beta) == pytest.approx(other_branch, rel=1e-12)


def test_hermite_gaussian_integral_vectorized_beta():
    beta = np.array([-1.0, 0.0, 1.0])
    values = hermite_gaussian_integral(1, 0.5, beta)
    # integral of 2 a y exp(-(y - b)^2) = 2 a b sqrt(pi)
    np.testing.assert_allclose(values, 2 * 0.5 * beta * math.sqrt(math.pi), atol=1e-14)


def test_hermite_gaussian_integral_degenerate_branch():
    with pytest.raises(DegenerateBranchError):
        hermite_gaussian_integral(2, 1.0, 0.5)
    # zeroth order has no branch dependence
    assert hermite_gaussian_integral(0, 1.0, 0.5) == pytest.approx(math.sqrt(math.pi))


def test_quadrature_spec_validation_and_scaling():
    with pytest.raises(ValidationError):
        QuadratureSpec(half_width=0.0)
    with pytest.raises(ValidationError):
        QuadratureSpec(nodes_per_axis=1)
    with pytest.raises(ValidationError):
        QuadratureSpec(abs_tol=0.0)

    spec = QuadratureSpec(half_width=10.0, nodes_per_axis=1001, abs_tol=1e-9)
    assert spec.covering(5.0) is spec
    wider = spec.covering(20.0)
    assert wider.half_width == 20.0
    assert wider.step == pytest.approx(spec.step, rel=1e-12)
    assert spec.refined().step == pytest.approx(spec.step / 2)


def test_oscillatory_line_integral_gaussian_chirp():
    spec = QuadratureSpec(half_width=12.0, nodes_per_axis=2049, abs_tol=1e-10)
    a, b = 1.5, -0.8
    c = 1 - 0.5j * a
    expected = cmath.sqrt(math.pi / c) * cmath.exp(-b ** 2 / (4 * c))
    value = oscillatory_line_integral(lambda x: np.exp(-x ** 2), a, b, spec)
    assert abs(value - expected) < 1e-10


def test_oscillatory_line_integral_array_of_linear_terms():
    spec = QuadratureSpec(half_width=12.0, nodes_per_axis=2049, abs_tol=1e-10)
    b = np.array([-2.0, 0.0, 2.0])
    values = oscillatory_line_integral(lambda x: np.exp(-x ** 2), 0.0, b, spec)
    np.testing.assert_allclose(values, math.sqrt(math.pi) * np.exp(-b ** 2 / 4), atol=1e-10)


def test_oscillatory_line_integral_sampled_input():
    spec = QuadratureSpec(abs_tol=1e-10)
    x = np.linspace(-10.0, 10.0, 2049)
    value = oscillatory_line_integral((x, np.exp(-x ** 2)), 0.0, 1.0, spec)
    assert value == pytest.approx(math.sqrt(math.pi) * math.exp(-0.25), abs=1e-10)


def test_oscillatory_line_integral_rejects_untruncated_integrand():
    spec = QuadratureSpec(half_width=3.0, nodes_per_axis=257)
    with pytest.raises(ConvergenceError):
        oscillatory_line_integral(lambda x: np.exp(-x ** 2 / 100.0), 0.0, 0.0, spec)


def test_hermite_poly_high_orders_match_numpy_series():
    x = np.linspace(-10.0, 10.0, 41)
    for n in range(26):
        coefficients = np.zeros(n + 1)
        coefficients[n] = 1.0
        expected = np.polynomial.hermite.hermval(x, coefficients)
        scale = float(np.max(np.abs(expected)))
        np.testing.assert_allclose(hermite_poly(n, x), expected, rtol=1e-9, atol=1e-12 * scale)


@pytest.mark.parametrize("n", [0, 2, 3, 5])
@pytest.mark.parametrize("alpha", [0.6 + 0.4j, 0.9 - 0.5j, 0.3 + 0.5j])
def test_hermite_gaussian_integral_complex_alpha_against_quadrature(n, alpha):
    beta = 0.35

    def integrand(y):
        return hermite_poly(n, alpha * y) * math.exp(-(y - beta) ** 2)

    real, _ = quad(lambda y: integrand(y).real, -30, 30, epsabs=1e-13, epsrel=1e-13, limit=200)
    imag, _ = quad(lambda y: integrand(y).imag, -30, 30, epsabs=1e-13, epsrel=1e-13, limit=200)
    value = hermite_gaussian_integral(n, alpha, beta)
    assert value.real == pytest.approx(real, rel=1e-9, abs=1e-10)
    assert value.imag == pytest.approx(imag, rel=1e-9, abs=1e-10)


def test_oscillatory_line_integral_is_linear():
    spec = QuadratureSpec(half_width=12.0, nodes_per_axis=2049, abs_tol=1e-10)
    a, b = 0.7, np.array([-1.0, 0.3, 1.5])
    f = lambda x: np.exp(-x ** 2)
    g = lambda x: x * np.exp(-(x - 0.5) ** 2)
    combined = oscillatory_line_integral(lambda x: f(x) - 2.5 * g(x), a, b, spec)
    separate = oscillatory_line_integral(f, a, b, spec) - 2.5 * oscillatory_line_integral(g, a, b, spec)
    np.testing.assert_allclose(combined, separate, atol=1e-10)


@pytest.mark.parametrize("a, b", [(1.2, 0.4), (-0.5, 2.0), (0.0, -1.3)])
def test_oscillatory_line_integral_conjugate_symmetry(a, b):
    spec = QuadratureSpec(half_width=12.0, nodes_per_axis=2049, abs_tol=1e-10)
    f = lambda x: (1 + x) * np.exp(-x ** 2 / 2)
    forward = oscillatory_line_integral(f, a, b, spec)
    backward = oscillatory_line_integral(f, -a, -b, spec)
    assert abs(backward - forward.conjugate()) < 1e-10


def test_refined_quadrature_gives_the_same_integral():
    spec = QuadratureSpec(half_width=12.0, nodes_per_axis=1025, abs_tol=1e-10)
    finer = spec.refined()
    assert finer.half_width == spec.half_width
    assert finer.abs_tol == spec.abs_tol
    f = lambda x: np.exp(-x ** 2) * np.cos(x)
    coarse_value = oscillatory_line_integral(f, 0.8, -0.6, spec)
    fine_value = oscillatory_line_integral(f, 0.8, -0.6, finer)
    assert abs(fine_value - coarse_value) < 10 * spec.abs_tol


def test_oscillatory_line_integral_rejects_mismatched_samples():
    with pytest.raises(ValidationError):
        oscillatory_line_integral((np.linspace(0, 1, 10), np.ones(9)), 0.0, 0.0, QuadratureSpec())


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
