"""Helmholtz fundamental solutions in two dimensions.

Gamma^k(x) = (1/2pi) ln|x|          for k = 0
           = -(i/4) H0^(1)(k|x|)     otherwise

All functions take the difference vector x = x_target - x_source with a
trailing axis of size 2 and broadcast over leading axes. Bessel and Hankel
values come from scipy.special, which handles complex arguments (the particle
wavenumber k_D is complex under the Drude model).
"""

import numpy as np
from scipy import special

from core.errors import KernelError


EULER_GAMMA = float(np.euler_gamma)


def check_wavenumber(k) -> complex:
    """Normalize a wavenumber to complex and reject Re k < 0."""
    try:
        k = complex(k)
    except (TypeError, ValueError):
        raise KernelError(f"Wavenumber must be a number, got {k!r}")
    if not (np.isfinite(k.real) and np.isfinite(k.imag)):
        raise KernelError(f"Wavenumber must be finite, got {k}")
    if k.real < 0:
        raise KernelError(f"Wavenumber must have Re k >= 0, got {k}")
    return k


def _split(x) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=float)
    if x.ndim == 0 or x.shape[-1] != 2:
        raise KernelError("Difference vector must have a trailing dimension of size 2")
    r = np.hypot(x[..., 0], x[..., 1])
    if np.any(r == 0):
        raise KernelError("Fundamental solution evaluated at the singularity x = 0")
    return x, r


def gamma_r(k: complex, r) -> np.ndarray:
    """Gamma^k as a function of the distance r > 0 (no checks)."""
    if k == 0:
        return np.log(r) / (2 * np.pi) + 0j
    return -0.25j * special.hankel1(0, k * r)


def gamma(k, x) -> np.ndarray:
    """Fundamental solution Gamma^k(x)."""
    k = check_wavenumber(k)
    _, r = _split(x)
    return gamma_r(k, r)


def gamma_radial(k: complex, r) -> np.ndarray:
    """d Gamma / dr divided by r, so that grad = gamma_radial * x (no checks)."""
    if k == 0:
        return 1.0 / (2 * np.pi * r ** 2) + 0j
    return 0.25j * k * special.hankel1(1, k * r) / r


def grad_gamma(k, x) -> np.ndarray:
    """Gradient of Gamma^k with respect to x, shape (..., 2)."""
    k = check_wavenumber(k)
    x, r = _split(x)
    return gamma_radial(k, r)[..., None] * x


def hess_gamma(k, x) -> np.ndarray:
    """Hessian D^2 Gamma^k(x), shape (..., 2, 2), symmetric."""
    k = check_wavenumber(k)
    x, r = _split(x)
    outer = x[..., :, None] * x[..., None, :]
    eye = np.eye(2)
    if k == 0:
        a = -2.0 / (2 * np.pi * r ** 4)
        b = 1.0 / (2 * np.pi * r ** 2)
    else:
        h0 = special.hankel1(0, k * r)
        h1 = special.hankel1(1, k * r)
        # d/dr [H1(kr)/r] = k H0(kr)/r - 2 H1(kr)/r^2
        a = 0.25j * k * (k * h0 - 2 * h1 / r) / r ** 2
        b = 0.25j * k * h1 / r
    return a[..., None, None] * outer + b[..., None, None] * eye + 0j


def euler_gamma_eta(k) -> complex:
    """Constant of the small-argument expansion of the Helmholtz single layer.

    -(i/4) H0(k r) = (1/2pi) ln r + eta_k + O(r^2 ln r), with
    eta_k = (1/2pi)(ln k + gamma - ln 2) - i/4. Zero for k = 0.
    """
    k = check_wavenumber(k)
    if k == 0:
        return 0j
    return (np.log(k) + EULER_GAMMA - np.log(2.0)) / (2 * np.pi) - 0.25j


def bessel_j(order: int, z) -> np.ndarray:
    """J_order(z) for real or complex z."""
    return special.jv(order, z)
