"""Hypothesis tests for |R| <= R0, multi-split aggregation, and FDR.

The one-pair test is a folded normal test built on the calibrated
estimator; with R0 = 0 it reduces to the usual two-sided z-test. The
multi-split protocol repeats the calibrated estimate over independent
sample splits and reports the median estimate together with the
p-value of the split that attains it.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

from .correlation import SplitPlan, estimate_r_calibrated, full_sample_fit
from .datasets import (
    CorrelationEstimate,
    ExternalDataset,
    PairedDataset,
    SmootherConfig,
)
from .exceptions import EstimationError, NumericalError, ValidationError
from .plm import estimate_phi
from .validation import check_probability


@dataclass(frozen=True)
class TestResult:
    """Folded test statistics and p-value for H0: |R| <= r0."""

    r0: float
    t_plus: float
    t_minus: float
    p_value: float


def _normal_two_sided(t: float) -> float:
    # 2 * Pr(Z >= t) for t >= 0, via the complementary error function.
    return float(erfc(t / math.sqrt(2.0)))


def test_statistics(estimate: CorrelationEstimate, n: int, r0: float) -> TestResult:
    """Test H0: |R| <= r0 against H1: |R| > r0."""
    if not 0.0 <= r0 < 1.0:
        raise ValidationError(f"r0 must lie in [0, 1), got {r0}")
    if not math.isfinite(estimate.std_err) or estimate.std_err <= 0:
        raise ValidationError("estimate must carry a finite positive std_err")
    sigma_hat = math.sqrt(n) * estimate.std_err
    excess = abs(estimate.r_hat) - r0
    t_plus = math.sqrt(n) * max(excess, 0.0) / sigma_hat
    t_minus = math.sqrt(n) * min(excess, 0.0) / sigma_hat
    assert max(t_plus, t_minus) == t_plus
    return TestResult(
        r0=r0, t_plus=t_plus, t_minus=t_minus, p_value=_normal_two_sided(t_plus)
    )


@dataclass(frozen=True)
class MultiSplitResult:
    """Median calibrated estimate across sample splits."""

    r_median: float
    p_value: float
    n_splits_used: int
    n_failed: int
    median_estimate: CorrelationEstimate


def split_seeds(master_seed: int, n_splits: int) -> np.ndarray:
    """Deterministic per-split seeds derived from one master seed."""
    return np.random.SeedSequence(master_seed).generate_state(n_splits)


def lower_median_index(values: np.ndarray) -> int:
    """Index of the element attaining the (lower) sample median."""
    order = np.argsort(values, kind="stable")
    return int(order[(values.size - 1) // 2])


def multi_split_inference(
    data: PairedDataset,
    external: ExternalDataset,
    config: SmootherConfig,
    n_splits: int,
    r0: float,
    seed: int,
    *,
    median_policy: str = "split",
) -> MultiSplitResult:
    """Median-of-splits calibrated estimate with its p-value.

    `median_policy` selects how the reported p-value is formed:
    "split" (default) takes the p-value of the split attaining the
    median estimate; "median_sigma" recomputes the test at the median
    estimate with the median standard error.
    """
    if n_splits < 1:
        raise ValidationError("n_splits must be >= 1")
    if median_policy not in ("split", "median_sigma"):
        raise ValidationError(f"unknown median_policy {median_policy!r}")
    external.check_conformable(data)
    phi_ss = estimate_phi(
        external.X,
        external.Z,
        config,
        bandwidth=config.external_bandwidth,
        cutoff=config.external_cutoff,
    )
    full = full_sample_fit(data, config)
    estimates: list[CorrelationEstimate] = []
    n_failed = 0
    for split_seed in split_seeds(seed, n_splits):
        try:
            plan = SplitPlan.random(data.n, int(split_seed))
            estimates.append(
                estimate_r_calibrated(
                    data, external, config, plan, phi_external=phi_ss, full=full
                )
            )
        except NumericalError as exc:
            n_failed += 1
            warnings.warn(f"sample split failed and was dropped: {exc}")
    if n_failed > n_splits / 2:
        raise EstimationError(
            f"{n_failed} of {n_splits} sample splits failed; pair not estimable"
        )
    values = np.array([e.r_hat for e in estimates])
    median_est = estimates[lower_median_index(values)]
    if median_policy == "split":
        p = test_statistics(median_est, data.n, r0).p_value
    else:
        synthetic = CorrelationEstimate(
            r_hat=median_est.r_hat,
            std_err=float(np.median([e.std_err for e in estimates])),
            n_effective=data.n,
            split_seed=median_est.split_seed,
            phi_condition_number=median_est.phi_condition_number,
        )
        p = test_statistics(synthetic, data.n, r0).p_value
    return MultiSplitResult(
        r_median=median_est.r_hat,
        p_value=p,
        n_splits_used=len(estimates),
        n_failed=n_failed,
        median_estimate=median_est,
    )


def by_fdr(p_values, alpha: float) -> tuple[np.ndarray, np.ndarray]:
    """Benjamini-Yekutieli step-up adjustment.

    Returns (adjusted p-values, significance flags at `alpha`). Valid
    under arbitrary dependence thanks to the harmonic correction.
    """
    check_probability(alpha, "alpha", open_ends=True)
    p = np.asarray(p_values, dtype=float)
    if p.ndim != 1:
        raise ValidationError("p_values must be a vector")
    if p.size == 0:
        return np.array([]), np.array([], dtype=bool)
    if np.any(~np.isfinite(p)) or np.any(p < 0) or np.any(p > 1):
        raise ValidationError("p_values must lie in [0, 1]")
    m = p.size
    harmonic = np.sum(1.0 / np.arange(1, m + 1))
    order = np.argsort(p, kind="stable")
    ranked = p[order] * m * harmonic / np.arange(1, m + 1)
    adjusted_sorted = np.minimum(1.0, np.minimum.accumulate(ranked[::-1])[::-1])
    adjusted = np.empty(m)
    adjusted[order] = adjusted_sorted
    return adjusted, adjusted <= alpha
