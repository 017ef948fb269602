"""Higher-order product kernels built from Gaussian bumps.

A kernel of order m integrates to 1 and has vanishing moments up to
order m-1. For m = 2 this is the standard Gaussian density; for larger
even m we use the polynomial-times-Gaussian family, solving a small
linear system in the even Gaussian moments so that

    k(u) = (c_0 + c_1 u^2 + ... + c_{r-1} u^{2(r-1)}) * phi(u),  r = m/2

has the required moment structure (e.g. m = 4 gives (3 - u^2) phi(u) / 2).
Moment conditions are verified by quadrature when a kernel is first
constructed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate

from .exceptions import InternalConsistencyError
from .validation import ValidationError, as_vector, check_positive

_MOMENT_TOL = 1e-6
_SQRT_2PI = np.sqrt(2.0 * np.pi)


def _gaussian_even_moment(k: int) -> float:
    """E[U^(2k)] for U standard normal: (2k-1)!!."""
    out = 1.0
    for j in range(1, 2 * k, 2):
        out *= j
    return out


def _solve_coefficients(order: int) -> np.ndarray:
    r = order // 2
    # Row j: the 2j-th moment of the candidate kernel; must be 1 at j=0
    # and 0 for j = 1..r-1. Odd moments vanish by symmetry.
    system = np.empty((r, r))
    for j in range(r):
        for s in range(r):
            system[j, s] = _gaussian_even_moment(j + s)
    rhs = np.zeros(r)
    rhs[0] = 1.0
    return np.linalg.solve(system, rhs)


@dataclass(frozen=True)
class KernelFunction:
    """Symmetric kernel of even order `order`; callable on scalars/arrays."""

    order: int
    coefficients: np.ndarray = field(repr=False)

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        u2 = u * u
        poly = np.polynomial.polynomial.polyval(u2, self.coefficients)
        return poly * np.exp(-0.5 * u2) / _SQRT_2PI

    @property
    def is_gaussian(self) -> bool:
        return self.order == 2

    @property
    def at_zero(self) -> float:
        return float(self.coefficients[0]) / _SQRT_2PI


def _verify_moments(kernel: KernelFunction) -> None:
    for s in range(kernel.order):
        value, _ = integrate.quad(
            lambda u, s=s: u**s * kernel(u), -np.inf, np.inf, limit=200
        )
        target = 1.0 if s == 0 else 0.0
        if abs(value - target) > _MOMENT_TOL:
            raise InternalConsistencyError(
                f"kernel of order {kernel.order}: moment {s} is {value}, "
                f"expected {target}"
            )


@lru_cache(maxsize=None)
def gaussian_kernel(order: int = 2) -> KernelFunction:
    """Construct (and cache) the order-`order` Gaussian-based kernel."""
    if order < 2 or order % 2 != 0:
        raise ValidationError(f"kernel order must be an even integer >= 2, got {order}")
    coeffs = _solve_coefficients(order)
    coeffs.setflags(write=False)
    kernel = KernelFunction(order=order, coefficients=coeffs)
    _verify_moments(kernel)
    return kernel


def kernel_eval(u: float, kernel: KernelFunction) -> float:
    """Evaluate k(u)."""
    return float(kernel(u))


def product_kernel(z_diff, bandwidth: float, kernel: KernelFunction) -> float:
    """prod_j k(z_diff_j / bandwidth) for one covariate difference vector."""
    check_positive(bandwidth, "bandwidth")
    z_diff = as_vector(z_diff, "z_diff")
    return float(np.prod(kernel(z_diff / bandwidth)))
