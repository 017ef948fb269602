"""Monte-Carlo harness for the synthetic study.

Generates paired and external cohorts from the partially linear model
under three confounder families and two residual-covariance scenarios,
with coefficient pairs constructed to hit a prescribed true microbial
correlation, and summarizes bias and rejection rates over replications.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed

from .correlation import SplitPlan, estimate_r_calibrated, estimate_r_plugin
from .datasets import ExternalDataset, PairedDataset, SmootherConfig
from .exceptions import NumericalError, ValidationError
from .inference import test_statistics
from .measures import microbial_correlation

CONFOUNDER_FAMILIES = ("linear", "exponential", "triangular")
PHI_SCENARIOS = ("identity", "upper_triangular")


def _confounder_functions(family: str):
    def total(Z):
        return Z[:, 0] + Z[:, 1] if Z.shape[1] >= 2 else Z[:, 0]

    if family == "linear":
        h = f = g = total
    elif family == "exponential":
        def h(Z):
            return np.exp(-0.5 * total(Z) ** 2)
        f = g = h
    elif family == "triangular":
        def h(Z):
            return np.sin(total(Z))
        f = h
        def g(Z):
            return np.cos(total(Z))
    else:
        raise ValidationError(f"unknown confounder family {family!r}")
    return h, f, g


@dataclass(frozen=True)
class ScenarioConfig:
    """One simulation cell: sizes, confounder family, covariance shape."""

    n: int
    p: int = 6
    q: int = 2
    external_factor: float = 10.0
    confounder_family: str = "linear"
    phi_scenario: str = "identity"
    r0_true: float = 0.0
    replications: int = 500
    seed: int = 0

    def __post_init__(self):
        if self.n < 1 or self.replications < 1:
            raise ValidationError("n and replications must be >= 1")
        if not abs(self.r0_true) < 1:
            raise ValidationError("|r0_true| must be < 1")
        if self.confounder_family not in CONFOUNDER_FAMILIES:
            raise ValidationError(
                f"confounder_family must be one of {CONFOUNDER_FAMILIES}"
            )
        if self.phi_scenario not in PHI_SCENARIOS:
            raise ValidationError(f"phi_scenario must be one of {PHI_SCENARIOS}")
        if self.external_factor <= 0:
            raise ValidationError("external_factor must be positive")


def _upper_triangular_d(p: int) -> np.ndarray:
    d = np.full((p, p), 0.5)
    d[np.tril_indices(p, -1)] = 0.0
    np.fill_diagonal(d, 1.0)
    return d


def build_phi(scenario: str, p: int = 6) -> np.ndarray:
    """Residual covariance for a scenario: identity or DD' with D upper
    triangular (unit diagonal, 0.5 above)."""
    if p < 1:
        raise ValidationError("p must be >= 1")
    if scenario == "identity":
        return np.eye(p)
    if scenario == "upper_triangular":
        d = _upper_triangular_d(p)
        return d @ d.T
    raise ValidationError(f"unknown phi scenario {scenario!r}")


def construct_coefficients(r0: float, scenario: str) -> tuple[np.ndarray, np.ndarray]:
    """Coefficient pair with microbial correlation exactly r0 (p = 6).

    In the identity scenario beta points along the first three
    coordinates and gamma mixes that direction with an orthogonal one.
    In the triangular scenario both vectors are premultiplied by the
    inverse transpose of D, which preserves the value of R under
    Phi = DD'. (Premultiplying by the plain inverse would not.)
    """
    if not abs(r0) <= 1:
        raise ValidationError("|r0| must be <= 1")
    p = 6
    beta = np.concatenate([np.full(3, np.sqrt(3) / 3), np.zeros(3)])
    gamma = np.concatenate(
        [np.full(3, r0 / np.sqrt(3)), np.full(3, np.sqrt((1 - r0**2) / 3))]
    )
    if scenario == "identity":
        return beta, gamma
    if scenario == "upper_triangular":
        d = _upper_triangular_d(p)
        return np.linalg.solve(d.T, beta), np.linalg.solve(d.T, gamma)
    raise ValidationError(f"unknown phi scenario {scenario!r}")


def generate_scenario(
    config: ScenarioConfig, rng: np.random.Generator
) -> tuple[PairedDataset, ExternalDataset, float]:
    """Draw one paired cohort plus its external cohort; returns the true R."""
    if config.p != 6:
        raise ValidationError("the coefficient construction is specific to p = 6")
    beta, gamma = construct_coefficients(config.r0_true, config.phi_scenario)
    phi = build_phi(config.phi_scenario, config.p)
    truth = microbial_correlation(beta, gamma, phi)
    h_x, f, g = _confounder_functions(config.confounder_family)
    chol = np.linalg.cholesky(phi)

    def draw_covariates(size: int) -> tuple[np.ndarray, np.ndarray]:
        Z = rng.standard_normal((size, config.q))
        tau = rng.standard_normal((size, config.p)) @ chol.T
        X = h_x(Z)[:, None] + tau
        return Z, X

    Z, X = draw_covariates(config.n)
    y = f(Z) + X @ beta + rng.standard_normal(config.n)
    w = g(Z) + X @ gamma + rng.standard_normal(config.n)
    Z_ext, X_ext = draw_covariates(int(round(config.external_factor * config.n)))
    return (
        PairedDataset(Z=Z, X=X, y=y, w=w),
        ExternalDataset(Z=Z_ext, X=X_ext),
        truth,
    )


@dataclass(frozen=True)
class ReplicationSummary:
    """Aggregates over the successful replications of one cell."""

    rejection_rate: float
    biases: np.ndarray = field(repr=False)
    median_bias: float
    n_replications: int
    n_failed: int


def _one_replication(config: ScenarioConfig, seed_seq, r0_test: float, alpha: float):
    rng = np.random.default_rng(seed_seq)
    data, external, truth = generate_scenario(config, rng)
    smoother = SmootherConfig.defaults(
        data.n, external.n, q=config.q, kernel_order=4
    )
    bias = estimate_r_plugin(data, smoother).r_hat - truth
    plan = SplitPlan.random(data.n, int(rng.integers(2**31)))
    estimate = estimate_r_calibrated(data, external, smoother, plan)
    reject = test_statistics(estimate, data.n, r0_test).p_value <= alpha
    return bias, reject


def run_replications(
    config: ScenarioConfig,
    r0_test: float = 0.0,
    alpha: float = 0.05,
    n_jobs: int = 1,
) -> ReplicationSummary:
    """Run the cell's replications; failed replications are dropped."""

    def safe(seed_seq):
        try:
            return _one_replication(config, seed_seq, r0_test, alpha)
        except NumericalError:
            return None

    children = np.random.SeedSequence(config.seed).spawn(config.replications)
    results = Parallel(n_jobs=n_jobs)(delayed(safe)(s) for s in children)
    kept = [r for r in results if r is not None]
    if not kept:
        raise NumericalError("every replication failed")
    biases = np.array([b for b, _ in kept])
    rejections = np.array([r for _, r in kept])
    return ReplicationSummary(
        rejection_rate=float(rejections.mean()),
        biases=biases,
        median_bias=float(np.median(biases)),
        n_replications=len(kept),
        n_failed=len(results) - len(kept),
    )


DEFAULT_R_GRID = tuple(np.round(np.arange(-0.5, 0.51, 0.1), 1))


def simulate_grid(
    n_values=(100, 300, 500),
    families=CONFOUNDER_FAMILIES,
    phi_scenarios=PHI_SCENARIOS,
    r_values=DEFAULT_R_GRID,
    replications: int = 500,
    seed: int = 0,
    r0_test: float = 0.0,
    alpha: float = 0.05,
    n_jobs: int = 1,
    external_factor: float = 10.0,
):
    """Rejection-rate and bias table over the full factorial grid.

    Returns a pandas DataFrame with one row per cell; cell seeds are
    spawned deterministically from `seed` in grid order.
    """
    import pandas as pd

    cells = [
        (family, phi_scenario, n, r)
        for family in families
        for phi_scenario in phi_scenarios
        for n in n_values
        for r in r_values
    ]
    master = np.random.SeedSequence(seed)
    cell_seeds = master.generate_state(len(cells))
    rows = []
    for (family, phi_scenario, n, r), cell_seed in zip(cells, cell_seeds):
        config = ScenarioConfig(
            n=int(n),
            confounder_family=family,
            phi_scenario=phi_scenario,
            r0_true=float(r),
            replications=replications,
            seed=int(cell_seed),
            external_factor=float(external_factor),
        )
        summary = run_replications(config, r0_test=r0_test, alpha=alpha, n_jobs=n_jobs)
        rows.append(
            {
                "family": family,
                "phi_scenario": phi_scenario,
                "n": int(n),
                "r_true": float(r),
                "replications": summary.n_replications,
                "rejection_rate": summary.rejection_rate,
                "median_bias": summary.median_bias,
                "median_abs_bias": float(np.median(np.abs(summary.biases))),
                "n_failed": summary.n_failed,
            }
        )
    return pd.DataFrame(rows)
