"""Partially-linear-model estimation.

Confounder effects are removed by Nadaraya-Watson smoothing, subjects
whose estimated confounder density falls below a cutoff are truncated,
and the microbial coefficients come from truncated ordinary least
squares against the smoothing residuals. The truncated residual
covariance Phi-hat is the shared normal-equations matrix, so one
`PLMDesign` serves every outcome fitted on the same (X, Z) block.

Smoothing is leave-one-out throughout: each subject's own observation
is excluded from its kernel average. Keeping the self weight couples
the abundance and outcome smoothing errors at every point and leaves a
finite-sample correlation bias of order 1/(n * density) in the
coefficients; dropping it removes that term at no cost in rate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .datasets import PLMFit, SmootherConfig, _freeze
from .exceptions import (
    AllTruncatedError,
    InternalConsistencyError,
    SingularPhiError,
)
from .kernels import gaussian_kernel
from .smoothing import weight_block, weight_sums
from .validation import ValidationError, as_matrix, as_vector, check_same_rows

CONDITION_NUMBER_THRESHOLD = 1e10

# Rows whose leave-one-out weight sum is this small are never retained
# (the density cutoff is positive), so their fitted values are only
# placeholders; guard the division anyway.
_DENOM_FLOOR = 1e-300


def _safe_denominator(denom: np.ndarray) -> np.ndarray:
    safe = denom.copy()
    safe[np.abs(safe) < _DENOM_FLOOR] = np.inf
    return safe


@dataclass(frozen=True)
class PhiEstimate:
    """Truncated covariance of the abundance smoothing residuals."""

    matrix: np.ndarray
    retained_count: int
    cutoff_used: float
    bandwidth_used: float

    def __post_init__(self):
        m = as_matrix(self.matrix, "phi matrix")
        if not np.allclose(m, m.T, atol=1e-12, rtol=0.0):
            raise InternalConsistencyError("phi estimate is not symmetric")
        trace = float(np.trace(m))
        eigmin = float(np.linalg.eigvalsh(m)[0])
        if eigmin < -1e-10 * max(trace, 1.0):
            raise InternalConsistencyError(
                f"phi estimate has eigenvalue {eigmin}, below the PSD tolerance"
            )
        object.__setattr__(self, "matrix", _freeze(m))

    @property
    def condition_number(self) -> float:
        eig = np.linalg.eigvalsh(self.matrix)
        if eig[0] <= 0.0:
            return np.inf
        return float(eig[-1] / eig[0])


class PLMDesign:
    """Shared smoothing state for fitting many outcomes on one cohort.

    Stores the full kernel weight matrix, so intended for the paired
    cohort (n up to a few thousand); use `estimate_phi` for large
    covariate-only cohorts.
    """

    def __init__(
        self,
        X,
        Z,
        config: SmootherConfig,
        *,
        condition_threshold: float = CONDITION_NUMBER_THRESHOLD,
    ):
        X = as_matrix(X, "X")
        Z = as_matrix(Z, "Z")
        check_same_rows("X", X, "Z", Z)
        config.validate_for(Z.shape[1])
        self.config = config
        self.n, self.q = Z.shape
        self.p = X.shape[1]
        if self.n < 2:
            raise ValidationError("leave-one-out smoothing needs at least 2 rows")
        self._condition_threshold = condition_threshold
        kernel = gaussian_kernel(config.kernel_order)
        a, b = config.bandwidth, config.cutoff
        self._weights = weight_block(Z, Z, a, kernel)
        np.fill_diagonal(self._weights, 0.0)
        raw_denom = self._weights.sum(axis=1)
        self.density = raw_denom / ((self.n - 1) * a**self.q)
        self._denom = _safe_denominator(raw_denom)
        self.h_x = (self._weights @ X) / self._denom[:, None]
        self.residual_x = X - self.h_x
        self.mask = self.density > b
        self.retained_count = int(self.mask.sum())
        if self.retained_count == 0:
            raise AllTruncatedError(
                f"density cutoff {b} truncated all {self.n} subjects"
            )
        masked = self.residual_x[self.mask]
        phi = (masked.T @ masked) / self.n
        phi = 0.5 * (phi + phi.T)
        self.phi = PhiEstimate(
            matrix=phi,
            retained_count=self.retained_count,
            cutoff_used=b,
            bandwidth_used=a,
        )
        self._cho = None

    @property
    def _factor(self):
        if self._cho is None:
            if self.phi.condition_number > self._condition_threshold:
                raise SingularPhiError(
                    f"phi estimate condition number {self.phi.condition_number:.3e} "
                    f"exceeds {self._condition_threshold:.1e}"
                )
            try:
                self._cho = cho_factor(self.phi.matrix, lower=True)
            except np.linalg.LinAlgError as exc:  # pragma: no cover - guarded above
                raise SingularPhiError(str(exc)) from exc
        return self._cho

    def smooth(self, outcome: np.ndarray) -> np.ndarray:
        """Nadaraya-Watson fit of one outcome at the sample points."""
        return (self._weights @ outcome) / self._denom

    def fit_many(self, outcomes) -> tuple[np.ndarray, np.ndarray]:
        """Coefficients and residual variances for many outcome columns.

        Returns (coefs, sigma2) with coefs of shape (n_outcomes, p).
        """
        outcomes = as_matrix(outcomes, "outcomes")
        if outcomes.shape[0] != self.n:
            raise InternalConsistencyError(
                f"outcomes have {outcomes.shape[0]} rows, design has {self.n}"
            )
        h_o = (self._weights @ outcomes) / self._denom[:, None]
        residual_o = outcomes - h_o
        moment = self.residual_x[self.mask].T @ residual_o[self.mask] / self.n
        coefs = cho_solve(self._factor, moment)
        fit_res = residual_o[self.mask] - self.residual_x[self.mask] @ coefs
        sigma2 = np.mean(fit_res**2, axis=0)
        return coefs.T, sigma2

    def fit(self, outcome) -> PLMFit:
        """Truncated OLS fit of one outcome against the residualized X."""
        outcome = as_vector(outcome, "outcome")
        if outcome.size != self.n:
            raise InternalConsistencyError(
                f"outcome has {outcome.size} rows, design has {self.n}"
            )
        h_o = self.smooth(outcome)
        residual_o = outcome - h_o
        moment = self.residual_x[self.mask].T @ residual_o[self.mask] / self.n
        coef = cho_solve(self._factor, moment)
        fit_res = residual_o[self.mask] - self.residual_x[self.mask] @ coef
        sigma2 = float(np.mean(fit_res**2))
        return PLMFit(
            coefficients=coef,
            residual_variance=sigma2,
            retained_count=self.retained_count,
            fitted_confounder_effect=h_o,
        )


def estimate_phi(
    X,
    Z,
    config: SmootherConfig,
    *,
    bandwidth: float | None = None,
    cutoff: float | None = None,
) -> PhiEstimate:
    """Truncated covariance estimate without storing the weight matrix.

    Defaults to the paired-cohort bandwidth/cutoff; pass the external
    schedule explicitly when calibrating on a covariate-only cohort.
    """
    X = as_matrix(X, "X")
    Z = as_matrix(Z, "Z")
    check_same_rows("X", X, "Z", Z)
    config.validate_for(Z.shape[1])
    a = config.bandwidth if bandwidth is None else bandwidth
    b = config.cutoff if cutoff is None else cutoff
    n, q = Z.shape
    if n < 2:
        raise ValidationError("leave-one-out smoothing needs at least 2 rows")
    kernel = gaussian_kernel(config.kernel_order)
    denom, num = weight_sums(Z, a, kernel, targets=X, leave_one_out=True)
    density = denom / ((n - 1) * a**q)
    residual = X - num / _safe_denominator(denom)[:, None]
    mask = density > b
    retained = int(mask.sum())
    if retained == 0:
        raise AllTruncatedError(f"density cutoff {b} truncated all {n} subjects")
    masked = residual[mask]
    phi = (masked.T @ masked) / n
    phi = 0.5 * (phi + phi.T)
    return PhiEstimate(
        matrix=phi, retained_count=retained, cutoff_used=b, bandwidth_used=a
    )


def fit_plm(X, Z, outcome, config: SmootherConfig, phi: PhiEstimate | None = None) -> PLMFit:
    """One-shot truncated OLS fit; builds a fresh design.

    `phi` may be passed for interface symmetry but the design recomputes
    the same estimate from (X, Z, config); a mismatch raises.
    """
    design = PLMDesign(X, Z, config)
    if phi is not None and not np.allclose(
        phi.matrix, design.phi.matrix, atol=1e-10, rtol=1e-8
    ):
        raise InternalConsistencyError(
            "supplied phi estimate does not match the design's (X, Z, config)"
        )
    return design.fit(outcome)
