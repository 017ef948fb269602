"""Closed-form correlation measures between two coefficient directions.

The headline quantity is the microbial correlation: the correlation of
beta'x and gamma'x when x has covariance Phi after confounder removal.
Two reference measures from the genetic-correlation literature are kept
for comparison reports: the plain cosine (ignores the covariance of x)
and the total-covariance variant.
"""

from __future__ import annotations

import numpy as np

from .exceptions import DegenerateDirectionError, InternalConsistencyError
from .validation import ValidationError, as_matrix, as_vector

# Round-off excursions of |R| beyond 1 up to this size are clamped;
# anything larger indicates a bug upstream (Phi not PSD).
_CLAMP_TOL = 1e-12


def _quadratic_forms(beta, gamma, phi):
    beta = as_vector(beta, "beta")
    gamma = as_vector(gamma, "gamma")
    phi = as_matrix(phi, "phi")
    p = beta.size
    if gamma.size != p or phi.shape != (p, p):
        raise ValidationError(
            f"beta ({beta.size}), gamma ({gamma.size}) and phi {phi.shape} "
            "are not conformable"
        )
    qb = float(beta @ phi @ beta)
    qg = float(gamma @ phi @ gamma)
    # Symmetrize so swapping the two directions gives the identical float.
    cross = 0.5 * (float(beta @ phi @ gamma) + float(gamma @ phi @ beta))
    trace = float(np.trace(phi))
    tol_b = _CLAMP_TOL * trace * float(beta @ beta)
    tol_g = _CLAMP_TOL * trace * float(gamma @ gamma)
    if qb <= tol_b:
        raise DegenerateDirectionError(
            f"beta'Phi beta = {qb:.3e} is not positive; no signal along beta"
        )
    if qg <= tol_g:
        raise DegenerateDirectionError(
            f"gamma'Phi gamma = {qg:.3e} is not positive; no signal along gamma"
        )
    return cross, qb, qg


def _clamped_ratio(cross: float, qb: float, qg: float) -> float:
    r = cross / np.sqrt(qb * qg)
    if abs(r) > 1.0:
        if abs(r) > 1.0 + _CLAMP_TOL:
            raise InternalConsistencyError(
                f"correlation {r} exceeds 1 beyond round-off; Phi is not PSD"
            )
        r = np.sign(r)
    return float(r)


def microbial_correlation(beta, gamma, phi) -> float:
    """Correlation of beta'x and gamma'x for x ~ (0, Phi).

    Returns beta'Phi gamma / sqrt(beta'Phi beta * gamma'Phi gamma),
    guaranteed to lie in [-1, 1].
    """
    return _clamped_ratio(*_quadratic_forms(beta, gamma, phi))


def genetic_r1(beta, gamma) -> float:
    """Cosine of the Euclidean angle between the coefficient vectors."""
    beta = as_vector(beta, "beta")
    gamma = as_vector(gamma, "gamma")
    nb = np.linalg.norm(beta)
    ng = np.linalg.norm(gamma)
    if nb == 0 or ng == 0:
        raise DegenerateDirectionError("genetic_r1 requires nonzero vectors")
    return _clamped_ratio(float(beta @ gamma), nb**2, ng**2)


def genetic_r2(beta, gamma, sigma_total) -> float:
    """Correlation of beta'x and gamma'x under the total covariance of x.

    `sigma_total` is Phi plus the covariance contributed by the
    confounder-driven part of x.
    """
    return _clamped_ratio(*_quadratic_forms(beta, gamma, sigma_total))
