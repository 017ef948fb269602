"""Microbial correlation estimators.

Two routes:

* plug-in: everything estimated on the full paired sample; consistent
  but without a usable asymptotic distribution (std_err is NaN);
* calibrated: the two coefficient vectors come from disjoint halves of
  the paired sample and the residual covariance from an external
  covariate-only cohort, making the three ingredients mutually
  independent and the estimator asymptotically normal.

The asymptotic variance is a delta-method quadratic form in the three
quadratic statistics (beta'Phi gamma, beta'Phi beta, gamma'Phi gamma),
with the external covariance treated as fixed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .datasets import (
    CorrelationEstimate,
    ExternalDataset,
    PairedDataset,
    SmootherConfig,
)
from .exceptions import ValidationError
from .measures import _quadratic_forms, microbial_correlation
from .plm import PhiEstimate, PLMDesign, estimate_phi


@dataclass(frozen=True)
class SplitPlan:
    """A disjoint two-way split of the paired-sample rows."""

    seed: int
    indices_a: np.ndarray
    indices_b: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.indices_a, dtype=np.intp)
        b = np.asarray(self.indices_b, dtype=np.intp)
        n = a.size + b.size
        merged = np.concatenate([a, b])
        if not np.array_equal(np.sort(merged), np.arange(n)):
            raise ValidationError("split halves must partition the row indices")
        if abs(a.size - b.size) > 1:
            raise ValidationError("split halves may differ in size by at most 1")
        a.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "indices_a", a)
        object.__setattr__(self, "indices_b", b)

    @property
    def n(self) -> int:
        return self.indices_a.size + self.indices_b.size

    @classmethod
    def random(cls, n: int, seed: int) -> "SplitPlan":
        if n < 2:
            raise ValidationError("need at least 2 rows to split")
        perm = np.random.default_rng(seed).permutation(n)
        half = (n + 1) // 2
        return cls(seed=seed, indices_a=perm[:half], indices_b=perm[half:])


@dataclass(frozen=True)
class FullSampleFit:
    """Full-sample plug-in quantities feeding the variance formula."""

    beta: np.ndarray
    gamma: np.ndarray
    phi: PhiEstimate
    sigma2_eps: float
    sigma2_delta: float
    r_hat: float
    retained_count: int


def full_sample_fit(data: PairedDataset, config: SmootherConfig) -> FullSampleFit:
    """Fit both outcomes on the whole paired sample."""
    design = PLMDesign(data.X, data.Z, config)
    fit_y = design.fit(data.y)
    fit_w = design.fit(data.w)
    r = microbial_correlation(
        fit_y.coefficients, fit_w.coefficients, design.phi.matrix
    )
    return FullSampleFit(
        beta=fit_y.coefficients,
        gamma=fit_w.coefficients,
        phi=design.phi,
        sigma2_eps=fit_y.residual_variance,
        sigma2_delta=fit_w.residual_variance,
        r_hat=r,
        retained_count=design.retained_count,
    )


def estimate_r_plugin(data: PairedDataset, config: SmootherConfig) -> CorrelationEstimate:
    """Plug-in estimate of the microbial correlation (no std_err)."""
    full = full_sample_fit(data, config)
    return CorrelationEstimate(
        r_hat=full.r_hat,
        std_err=math.nan,
        n_effective=full.retained_count,
        split_seed=-1,
        phi_condition_number=full.phi.condition_number,
    )


def sigma_r(beta, gamma, phi, sigma2_eps: float, sigma2_delta: float) -> float:
    """Asymptotic variance of sqrt(n) (R_ss - R) at idealized equal halves."""
    return _sigma_r_scaled(beta, gamma, phi, sigma2_eps, sigma2_delta, 2.0, 2.0)


def _sigma_r_scaled(
    beta, gamma, phi, sigma2_eps, sigma2_delta, c_a: float, c_b: float
) -> float:
    """Variance quadratic form with per-half scaling factors.

    `c_a` (resp. `c_b`) is n over the size of the half used for beta
    (resp. gamma); both equal 2 for an exact half split.
    """
    cross, qb, qg = _quadratic_forms(beta, gamma, phi)
    s11 = c_a * sigma2_eps * qg + c_b * sigma2_delta * qb
    s22 = 4.0 * c_a * sigma2_eps * qb
    s33 = 4.0 * c_b * sigma2_delta * qg
    s12 = 2.0 * c_a * sigma2_eps * cross
    s13 = 2.0 * c_b * sigma2_delta * cross
    value = (
        s11 / (qb * qg)
        + cross**2 * s22 / (4.0 * qb**3 * qg)
        + cross**2 * s33 / (4.0 * qg**3 * qb)
        - cross * s12 / (qb**2 * qg)
        - cross * s13 / (qb * qg**2)
        # The cross-half covariance of beta'Phi beta and gamma'Phi gamma
        # vanishes by independence, so the Sigma_23 term drops out.
    )
    # The form is PSD analytically; tolerate round-off at the R = +/-1 edge.
    return max(float(value), 0.0)


def estimate_r_calibrated(
    data: PairedDataset,
    external: ExternalDataset,
    config: SmootherConfig,
    split: SplitPlan,
    *,
    phi_external: PhiEstimate | None = None,
    full: FullSampleFit | None = None,
) -> CorrelationEstimate:
    """Sample-split estimate with external-cohort covariance.

    `phi_external` and `full` allow reuse across splits and metabolite
    pairs; when omitted they are computed here.
    """
    external.check_conformable(data)
    if split.n != data.n:
        raise ValidationError(
            f"split plan covers {split.n} rows, dataset has {data.n}"
        )
    if phi_external is None:
        phi_external = estimate_phi(
            external.X,
            external.Z,
            config,
            bandwidth=config.external_bandwidth,
            cutoff=config.external_cutoff,
        )
    half_a = data.subset(split.indices_a)
    half_b = data.subset(split.indices_b)
    beta_ss = PLMDesign(half_a.X, half_a.Z, config).fit(half_a.y).coefficients
    gamma_ss = PLMDesign(half_b.X, half_b.Z, config).fit(half_b.w).coefficients
    r = microbial_correlation(beta_ss, gamma_ss, phi_external.matrix)
    if full is None:
        full = full_sample_fit(data, config)
    n = data.n
    sigma2 = _sigma_r_scaled(
        full.beta,
        full.gamma,
        full.phi.matrix,
        full.sigma2_eps,
        full.sigma2_delta,
        n / split.indices_a.size,
        n / split.indices_b.size,
    )
    return CorrelationEstimate(
        r_hat=r,
        std_err=math.sqrt(sigma2 / n),
        n_effective=n,
        split_seed=split.seed,
        phi_condition_number=phi_external.condition_number,
    )
