"""Core value objects: datasets, smoother configuration, fit results.

Everything here is immutable after construction; arrays are stored with
the writeable flag cleared so instances can be shared freely across
threads and joblib workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConformabilityError, ValidationError
from .validation import as_matrix, as_vector, check_positive, check_same_rows


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=float, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class PairedDataset:
    """Per-subject confounders, transformed abundances, and two outcomes.

    Z : (n, q) confounder block
    X : (n, p) log-ratio-transformed abundances
    y, w : (n,) log metabolite levels
    """

    Z: np.ndarray
    X: np.ndarray
    y: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        Z = as_matrix(self.Z, "Z")
        X = as_matrix(self.X, "X")
        y = as_vector(self.y, "y")
        w = as_vector(self.w, "w")
        check_same_rows("Z", Z, "X", X)
        if not (Z.shape[0] == y.size == w.size):
            raise ValidationError("Z, X, y, w must share the same row count")
        object.__setattr__(self, "Z", _freeze(Z))
        object.__setattr__(self, "X", _freeze(X))
        object.__setattr__(self, "y", _freeze(y))
        object.__setattr__(self, "w", _freeze(w))

    @property
    def n(self) -> int:
        return self.Z.shape[0]

    @property
    def q(self) -> int:
        return self.Z.shape[1]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def with_outcomes(self, y, w) -> "PairedDataset":
        return PairedDataset(self.Z, self.X, y, w)

    def subset(self, rows) -> "PairedDataset":
        rows = np.asarray(rows)
        return PairedDataset(self.Z[rows], self.X[rows], self.y[rows], self.w[rows])


@dataclass(frozen=True)
class ExternalDataset:
    """Covariate-only cohort used to calibrate the residual covariance."""

    Z: np.ndarray
    X: np.ndarray

    def __post_init__(self):
        Z = as_matrix(self.Z, "external Z")
        X = as_matrix(self.X, "external X")
        check_same_rows("external Z", Z, "external X", X)
        object.__setattr__(self, "Z", _freeze(Z))
        object.__setattr__(self, "X", _freeze(X))

    @property
    def n(self) -> int:
        return self.Z.shape[0]

    def check_conformable(self, paired: PairedDataset) -> None:
        if self.X.shape[1] != paired.p:
            raise ConformabilityError(
                f"external cohort has {self.X.shape[1]} taxa, paired cohort has {paired.p}"
            )
        if self.Z.shape[1] != paired.q:
            raise ConformabilityError(
                f"external cohort has {self.Z.shape[1]} confounders, paired cohort has {paired.q}"
            )


# Prefactor on the default density cutoffs. The cutoff rates only fix the
# exponent; taken with constant 1 they would exceed the largest value a
# q-dimensional density can reach at practical sample sizes and truncate
# everyone. 0.05 trims roughly the outer fifth of a standard-normal
# confounder sample: enough to suppress the low-density region whose
# 1/(n * density) smoothing-error correlation otherwise dominates the
# finite-sample bias of the coefficients, while preserving the rates.
_CUTOFF_SCALE = 0.05


def _paired_exponents(q: int, m: int) -> tuple[float, float]:
    # Worked admissible pair for the validated (q=2, m=2) path; otherwise
    # pick the midpoint of the admissible bandwidth-exponent interval and
    # take the cutoff exponent at half its admissible maximum (the same
    # margin the worked pair uses).
    if q == 2 and m == 2:
        alpha = 1.0 / 6.0
    else:
        alpha = 0.5 * (1.0 / (4 * m) + 1.0 / (2 * q))
    beta_max = min(m * alpha - 0.25, m * alpha / 2.0, (1.0 - 2 * q * alpha) / 4.0)
    if beta_max <= 0:
        raise ValidationError(
            f"no admissible bandwidth schedule for q={q}, m={m}; increase the kernel order"
        )
    return alpha, beta_max / 2.0


def _external_exponents(q: int, m: int) -> tuple[float, float]:
    if q == 2 and m == 2:
        alpha = 1.0 / 5.0
    else:
        alpha = 0.5 * (1.0 / (4 * m) + 1.0 / (2 * q))
    beta = (1.0 - 2 * q * alpha) / 4.0
    if beta <= 0:
        raise ValidationError(
            f"no admissible external bandwidth schedule for q={q}, m={m}"
        )
    return alpha, beta


@dataclass(frozen=True)
class SmootherConfig:
    """Kernel order and the bandwidth/cutoff pairs for both cohorts.

    `bandwidth`/`cutoff` apply to the paired cohort, the `external_*`
    analogues to the covariate-only cohort.
    """

    kernel_order: int = 4
    bandwidth: float = 0.25
    cutoff: float = 0.05
    external_bandwidth: float = 0.2
    external_cutoff: float = 0.05

    def __post_init__(self):
        m = self.kernel_order
        if not isinstance(m, (int, np.integer)) or m < 2 or m % 2 != 0:
            raise ValidationError(f"kernel_order must be an even integer >= 2, got {m}")
        for name in ("bandwidth", "cutoff", "external_bandwidth", "external_cutoff"):
            check_positive(getattr(self, name), name)

    def validate_for(self, q: int) -> None:
        if self.kernel_order <= q / 2:
            raise ValidationError(
                f"kernel_order={self.kernel_order} must exceed q/2={q / 2}"
            )

    @classmethod
    def defaults(
        cls,
        n: int,
        n_external: int | None = None,
        q: int = 2,
        kernel_order: int = 4,
        *,
        bandwidth: float | None = None,
        cutoff: float | None = None,
        external_bandwidth: float | None = None,
        external_cutoff: float | None = None,
    ) -> "SmootherConfig":
        """Sample-size-driven bandwidth schedule, overridable per knob.

        The default fourth-order kernel keeps the smoothing bias of the
        coefficient estimates well below their sampling noise at
        moderate n; the classical second-order kernel with its
        n^(-1/6) paired bandwidth remains available via
        `kernel_order=2`.
        """
        if n < 1:
            raise ValidationError("n must be >= 1")
        alpha, beta = _paired_exponents(q, kernel_order)
        a = bandwidth if bandwidth is not None else n ** (-alpha)
        b = cutoff if cutoff is not None else _CUTOFF_SCALE * n ** (-beta)
        n_ext = n_external if n_external is not None else 10 * n
        alpha_ss, beta_ss = _external_exponents(q, kernel_order)
        a_ss = (
            external_bandwidth
            if external_bandwidth is not None
            else n_ext ** (-alpha_ss)
        )
        b_ss = (
            external_cutoff
            if external_cutoff is not None
            else _CUTOFF_SCALE * n_ext ** (-beta_ss)
        )
        return cls(
            kernel_order=kernel_order,
            bandwidth=a,
            cutoff=b,
            external_bandwidth=a_ss,
            external_cutoff=b_ss,
        )


@dataclass(frozen=True)
class PLMFit:
    """Truncated-OLS fit of one outcome in the partially linear model."""

    coefficients: np.ndarray
    residual_variance: float
    retained_count: int
    fitted_confounder_effect: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "coefficients", _freeze(self.coefficients))
        object.__setattr__(
            self, "fitted_confounder_effect", _freeze(self.fitted_confounder_effect)
        )
        if self.residual_variance < 0:
            raise ValidationError("residual_variance must be nonnegative")


@dataclass(frozen=True)
class CorrelationEstimate:
    """Point estimate of the microbial correlation with diagnostics.

    `std_err` is the standard error of the estimate itself (the
    root-n-scaled sigma divided by sqrt(n)); it is NaN for the plug-in
    estimator, which has no tractable asymptotic distribution.
    `n_effective` is the subject count backing the estimate: subjects
    passing truncation for the plug-in route, the full paired sample
    size for the calibrated route. `split_seed` is -1 when no sample
    split was involved.
    """

    r_hat: float
    std_err: float = math.nan
    n_effective: int = 0
    split_seed: int = -1
    phi_condition_number: float = math.nan

    def __post_init__(self):
        if not -1.0 <= self.r_hat <= 1.0:
            raise ValidationError(f"r_hat must lie in [-1, 1], got {self.r_hat}")
