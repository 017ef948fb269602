"""Kernel construction: analytic values, moment conditions, products."""

import numpy as np
import pytest
from scipy.integrate import quad

from microcorr import KernelFunction, gaussian_kernel, kernel_eval, product_kernel
from microcorr.exceptions import ValidationError

INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def test_order_two_is_the_gaussian_density():
    k = gaussian_kernel(2)
    assert k.is_gaussian
    assert kernel_eval(0.0, k) == pytest.approx(INV_SQRT_2PI, abs=1e-12)
    assert kernel_eval(1.0, k) == pytest.approx(
        np.exp(-0.5) * INV_SQRT_2PI, abs=1e-12
    )


def test_order_four_polynomial_factor():
    # Fourth-order kernel: (3 - u^2)/2 times the Gaussian density.
    k = gaussian_kernel(4)
    for u in (0.0, 0.7, -1.3, 2.5):
        phi = np.exp(-0.5 * u**2) * INV_SQRT_2PI
        assert kernel_eval(u, k) == pytest.approx(0.5 * (3 - u**2) * phi, abs=1e-12)


@pytest.mark.parametrize("order", [2, 4, 6])
def test_moment_conditions_by_quadrature(order):
    k = gaussian_kernel(order)
    mass, _ = quad(lambda u: kernel_eval(u, k), -10, 10)
    assert mass == pytest.approx(1.0, abs=1e-6)
    for j in range(1, order):
        moment, _ = quad(lambda u: u**j * kernel_eval(u, k), -10, 10)
        assert moment == pytest.approx(0.0, abs=1e-6)
    top, _ = quad(lambda u: u**order * kernel_eval(u, k), -10, 10)
    assert abs(top) > 1e-3  # the order-m moment must not vanish


def test_odd_or_nonpositive_order_rejected():
    for bad in (0, 1, 3, -2):
        with pytest.raises(ValidationError):
            gaussian_kernel(bad)


def test_kernel_cache_returns_same_object():
    assert gaussian_kernel(4) is gaussian_kernel(4)


def test_product_kernel_at_zero():
    k = gaussian_kernel(2)
    assert product_kernel(np.zeros(2), 1.0, k) == pytest.approx(
        1.0 / (2.0 * np.pi), abs=1e-12
    )


def test_product_kernel_hand_value():
    k = gaussian_kernel(2)
    expected = kernel_eval(1.0, k) ** 2
    assert product_kernel(np.ones(2), 1.0, k) == pytest.approx(expected, abs=1e-12)
    assert expected == pytest.approx(0.058550, abs=1e-6)


def test_product_kernel_reduces_to_kernel_eval_in_one_dimension():
    k = gaussian_kernel(2)
    assert product_kernel(np.array([0.3]), 1.0, k) == pytest.approx(
        kernel_eval(0.3, k), abs=1e-15
    )


def test_product_kernel_bandwidth_scaling():
    k = gaussian_kernel(2)
    diff = np.array([0.5, -0.25])
    assert product_kernel(diff, 0.5, k) == pytest.approx(
        product_kernel(diff / 0.5, 1.0, k), abs=1e-14
    )


def test_kernel_function_at_zero_matches_call():
    for order in (2, 4):
        k = gaussian_kernel(order)
        assert k.at_zero == pytest.approx(kernel_eval(0.0, k), abs=1e-15)


def test_manual_coefficients_round_trip():
    k4 = gaussian_kernel(4)
    rebuilt = KernelFunction(order=4, coefficients=np.asarray(k4.coefficients))
    assert kernel_eval(0.9, rebuilt) == pytest.approx(kernel_eval(0.9, k4), abs=1e-15)
