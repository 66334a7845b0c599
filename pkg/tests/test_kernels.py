"""Tests for the Helmholtz fundamental solution and its derivatives.

Run with: python -m pytest tests/test_kernels.py -v
"""

import os
import sys

import numpy as np
import pytest

# Add parent to path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from core.errors import KernelError
from core.kernels import (
    bessel_j,
    check_wavenumber,
    euler_gamma_eta,
    gamma,
    grad_gamma,
    hess_gamma,
)


J0_1 = 0.7651976866
Y0_1 = 0.0882569642
H1_1 = 0.4400505857 - 0.7812128213j

WAVENUMBERS = [0, 1.0, 2.3 + 0.1j, 0.05 + 3.0j]
POINT = np.array([0.7, -0.4])


def fd_gradient(k, x, h):
    e = np.eye(2)
    return np.array([(gamma(k, x + h * e[c]) - gamma(k, x - h * e[c])) / (2 * h) for c in range(2)])


def fd_hessian(k, x, h):
    e = np.eye(2)
    cols = [(grad_gamma(k, x + h * e[c]) - grad_gamma(k, x - h * e[c])) / (2 * h) for c in range(2)]
    return np.stack(cols, axis=-1)


# ============================================================
# Reference values
# ============================================================

def test_bessel_j0_at_one():
    assert bessel_j(0, 1.0) == pytest.approx(J0_1, abs=1e-10)


def test_gamma_matches_hankel_at_unit_distance():
    value = gamma(1.0, [1.0, 0.0])
    assert value == pytest.approx(Y0_1 / 4 - 0.25j * J0_1, abs=1e-10)


def test_grad_gamma_matches_hankel1_at_unit_distance():
    g = grad_gamma(1.0, [1.0, 0.0])
    assert g[0] == pytest.approx(0.25j * H1_1, abs=1e-10)
    assert g[1] == pytest.approx(0.0, abs=1e-15)


def test_static_gamma_is_logarithmic():
    assert gamma(0, [1.0, 0.0]) == pytest.approx(0.0)
    assert gamma(0, [0.0, np.e]) == pytest.approx(1 / (2 * np.pi))
    np.testing.assert_allclose(grad_gamma(0, [2.0, 0.0]), [1 / (4 * np.pi), 0.0])


def test_euler_gamma_eta_is_small_argument_constant():
    for k in (1.0, 0.3 + 0.02j):
        r = 1e-4
        value = gamma(k, [r, 0.0])
        expansion = np.log(r) / (2 * np.pi) + euler_gamma_eta(k)
        assert abs(value - expansion) < 1e-6


def test_euler_gamma_eta_static_is_zero():
    assert euler_gamma_eta(0) == 0


# ============================================================
# Derivative consistency
# ============================================================

def test_gradient_matches_finite_differences_second_order():
    for k in WAVENUMBERS:
        exact = grad_gamma(k, POINT)
        e1 = np.abs(fd_gradient(k, POINT, 1e-3) - exact).max()
        e2 = np.abs(fd_gradient(k, POINT, 5e-4) - exact).max()
        assert e1 < 1e-4
        assert np.log2(e1 / e2) >= 1.9


def test_hessian_matches_finite_differences_second_order():
    for k in WAVENUMBERS:
        exact = hess_gamma(k, POINT)
        e1 = np.abs(fd_hessian(k, POINT, 1e-3) - exact).max()
        e2 = np.abs(fd_hessian(k, POINT, 5e-4) - exact).max()
        assert e1 < 1e-4
        assert np.log2(e1 / e2) >= 1.9


def test_hessian_is_symmetric():
    x = np.array([[0.3, 0.9], [-1.2, 0.4], [2.0, -0.1]])
    H = hess_gamma(2.3 + 0.1j, x)
    np.testing.assert_allclose(H, np.swapaxes(H, -1, -2))


def test_helmholtz_equation_holds():
    for k in WAVENUMBERS:
        k = complex(k)
        laplacian = np.trace(hess_gamma(k, POINT))
        assert abs(laplacian + k ** 2 * gamma(k, POINT)) < 1e-12 * max(1.0, abs(laplacian))


def test_broadcasts_over_leading_axes():
    x = np.random.default_rng(0).normal(size=(4, 3, 2)) + 3.0
    assert gamma(1.0, x).shape == (4, 3)
    assert grad_gamma(1.0, x).shape == (4, 3, 2)
    assert hess_gamma(1.0, x).shape == (4, 3, 2, 2)


# ============================================================
# Errors
# ============================================================

def test_singularity_raises():
    with pytest.raises(KernelError):
        gamma(1.0, [0.0, 0.0])
    with pytest.raises(KernelError):
        grad_gamma(0, np.array([[1.0, 0.0], [0.0, 0.0]]))


def test_bad_wavenumbers_raise():
    with pytest.raises(KernelError):
        check_wavenumber(-1.0)
    with pytest.raises(KernelError):
        check_wavenumber(complex(np.nan, 0))
    with pytest.raises(KernelError):
        check_wavenumber("fast")


def test_bad_point_shape_raises():
    with pytest.raises(KernelError):
        gamma(1.0, [1.0, 2.0, 3.0])
