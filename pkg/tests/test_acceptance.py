"""Acceptance gate: nine end-to-end criteria with stated tolerances.

Each test prints one PASS/FAIL line (written straight to the terminal,
bypassing capture) and then asserts. The heavy Monte-Carlo criteria run
sequentially and take a few minutes each.
"""

import math
import time

import numpy as np
import pandas as pd
import pytest
from click.testing import CliRunner
from scipy.integrate import quad

from microcorr import (
    ScenarioConfig,
    SmootherConfig,
    SplitPlan,
    by_fdr,
    density_estimate,
    estimate_r_calibrated,
    estimate_r_plugin,
    fit_plm,
    gaussian_kernel,
    generate_scenario,
    microbial_correlation,
    nw_regress,
    run_replications,
)
from microcorr.cli import main as cli_main
from microcorr.datasets import PairedDataset
from microcorr.kernels import kernel_eval, product_kernel
from microcorr.pipeline import AbundanceTable, alr_transform


@pytest.fixture
def report(request):
    reporter = request.config.pluginmanager.getplugin("terminalreporter")

    def _report(criterion: int, ok: bool, detail: str = ""):
        line = f"[acceptance criterion {criterion}] {'PASS' if ok else 'FAIL'}: {detail}"
        if reporter is not None:
            reporter.write_line(line)
        else:  # pragma: no cover - fallback when run outside pytest's terminal
            print(line)
        assert ok, line

    return _report


# ---------------------------------------------------------------- criterion 1


def test_criterion_1_closed_form_oracle(report):
    """1,000 random triples: range, symmetry, and a 10^6-draw empirical check."""
    start = time.monotonic()
    rng = np.random.default_rng(1)
    p = 3
    draws = rng.standard_normal((1_000_000, p))
    # Sample moments of the shared Gaussian block; the empirical
    # correlation of (draws @ Lb, draws @ Lg) is exactly a quadratic-form
    # expression in this sample covariance.
    centered = draws - draws.mean(axis=0)
    sample_cov = centered.T @ centered / (draws.shape[0] - 1)

    worst = 0.0
    for _ in range(1000):
        a = rng.normal(size=(p, p))
        phi = a @ a.T + 0.3 * np.eye(p)
        beta = rng.normal(size=p)
        gamma = rng.normal(size=p)
        r = microbial_correlation(beta, gamma, phi)
        assert -1.0 <= r <= 1.0
        assert r == microbial_correlation(gamma, beta, phi)
        chol = np.linalg.cholesky(phi)
        b, g = chol.T @ beta, chol.T @ gamma
        empirical = (b @ sample_cov @ g) / math.sqrt(
            (b @ sample_cov @ b) * (g @ sample_cov @ g)
        )
        worst = max(worst, abs(r - empirical))
    elapsed = time.monotonic() - start
    report(
        1,
        worst < 0.01 and elapsed < 60.0,
        f"max |closed-form - empirical| = {worst:.5f} (tol 0.01), {elapsed:.1f}s (< 60s)",
    )


# ---------------------------------------------------------------- criterion 2


def test_criterion_2_kernel_oracle(report):
    """Brute-force smoother agreement to 1e-12 plus kernel moments to 1e-6."""
    start = time.monotonic()
    rng = np.random.default_rng(2)
    worst = 0.0
    for trial in range(100):
        n = int(rng.integers(2, 51))
        q = int(rng.integers(1, 4))
        kernel = gaussian_kernel(2 if trial % 2 == 0 else 4)
        Z = rng.normal(size=(n, q))
        t = rng.normal(size=(n, 2))
        a = float(rng.uniform(0.3, 2.0))
        dens = np.empty(n)
        fitted = np.empty((n, 2))
        for i in range(n):
            weights = np.array(
                [product_kernel(Z[i] - Z[j], a, kernel) for j in range(n)]
            )
            dens[i] = weights.sum() / (n * a**q)
            fitted[i] = weights @ t / weights.sum()
        worst = max(worst, np.abs(density_estimate(Z, a, kernel) - dens).max())
        worst = max(worst, np.abs(nw_regress(t, Z, a, kernel) - fitted).max())

    moment_err = 0.0
    for order in (2, 4):
        kernel = gaussian_kernel(order)
        for s in range(order):
            target = 1.0 if s == 0 else 0.0
            value, _ = quad(lambda u, s=s: u**s * kernel_eval(u, kernel), -10, 10)
            moment_err = max(moment_err, abs(value - target))
    elapsed = time.monotonic() - start
    report(
        2,
        worst < 1e-12 and moment_err < 1e-6 and elapsed < 10.0,
        f"max smoother deviation = {worst:.2e} (tol 1e-12), "
        f"max moment deviation = {moment_err:.2e} (tol 1e-6), {elapsed:.1f}s (< 10s)",
    )


# ---------------------------------------------------------------- criterion 3


def test_criterion_3_degenerate_equivalence(report):
    """Constant confounder + vanishing cutoff reduces to centered OLS."""
    rng = np.random.default_rng(3)
    n, p = 80, 4
    X = rng.normal(size=(n, p))
    Z = np.full((n, 1), 2.0)
    y = X @ rng.normal(size=p) + rng.normal(size=n)
    w = X @ rng.normal(size=p) + rng.normal(size=n)
    config = SmootherConfig(
        kernel_order=2, bandwidth=1.0, cutoff=1e-300,
        external_bandwidth=1.0, external_cutoff=1e-300,
    )

    Xc = X - X.mean(axis=0)
    beta_ols = np.linalg.lstsq(Xc, y - y.mean(), rcond=None)[0]
    gamma_ols = np.linalg.lstsq(Xc, w - w.mean(), rcond=None)[0]
    coef_err = max(
        np.abs(fit_plm(X, Z, y, config).coefficients - beta_ols).max(),
        np.abs(fit_plm(X, Z, w, config).coefficients - gamma_ols).max(),
    )

    data = PairedDataset(Z=Z, X=X, y=y, w=w)
    r_plm = estimate_r_plugin(data, config).r_hat
    phi_ols = Xc.T @ Xc / n
    r_ols = microbial_correlation(beta_ols, gamma_ols, phi_ols)
    r_err = abs(r_plm - r_ols)
    report(
        3,
        coef_err < 1e-8 and r_err < 1e-8,
        f"coefficient deviation = {coef_err:.2e}, correlation deviation = {r_err:.2e} "
        "(tol 1e-8)",
    )


# ---------------------------------------------------------------- criterion 4


def test_criterion_4_type_one_error(report):
    """Null rejection rate of the calibrated single-split test near 0.05."""
    config = ScenarioConfig(
        n=500, confounder_family="linear", phi_scenario="identity",
        r0_true=0.0, replications=500, seed=4,
    )
    summary = run_replications(config, r0_test=0.0, alpha=0.05)
    rate = summary.rejection_rate
    report(
        4,
        0.025 <= rate <= 0.085 and summary.n_failed == 0,
        f"rejection rate = {rate:.3f} (target [0.025, 0.085]), "
        f"{summary.n_failed} failed replications",
    )


# ---------------------------------------------------------------- criterion 5


def _plugin_deviation_medians(family, scenario, r_true, n, replications, seed):
    """(median |R-hat - R|, |median (R-hat - R)|) over the replications.

    The first tracks overall accuracy (dispersion plus bias) and drives
    the shrinkage comparison; the second isolates the systematic part
    and is what the small-bias bound constrains.
    """
    config = ScenarioConfig(
        n=n, confounder_family=family, phi_scenario=scenario, r0_true=r_true,
        replications=replications, seed=seed, external_factor=0.01,
    )
    deviations = []
    for child in np.random.SeedSequence(seed).spawn(replications):
        rng = np.random.default_rng(child)
        data, _, truth = generate_scenario(config, rng)
        smoother = SmootherConfig.defaults(n, q=config.q)
        deviations.append(estimate_r_plugin(data, smoother).r_hat - truth)
    deviations = np.asarray(deviations)
    return (
        float(np.median(np.abs(deviations))),
        abs(float(np.median(deviations))),
    )


def test_criterion_5_bias_shrinkage(report):
    """Median plug-in deviation falls from n=100 to n=500; median bias small."""
    shrunk = True
    worst_at_500 = 0.0
    details = []
    seed = 500
    for family in ("linear", "exponential", "triangular"):
        for scenario in ("identity", "upper_triangular"):
            for r_true in (0.0, 0.4):
                seed += 1
                small, _ = _plugin_deviation_medians(
                    family, scenario, r_true, 100, 200, seed
                )
                large, bias_500 = _plugin_deviation_medians(
                    family, scenario, r_true, 500, 200, seed
                )
                shrunk &= large < small
                worst_at_500 = max(worst_at_500, bias_500)
                if large >= small or bias_500 > 0.06:
                    details.append(
                        f"{family}/{scenario}/R={r_true}: med|dev| {small:.3f} -> "
                        f"{large:.3f}, |med bias| {bias_500:.3f}"
                    )
    report(
        5,
        shrunk and worst_at_500 <= 0.06,
        f"median |deviation| shrinks in every cell = {shrunk}, worst median "
        f"absolute bias at n=500 = {worst_at_500:.3f} (tol 0.06)"
        + ("; " + "; ".join(details) if details else ""),
    )


# ---------------------------------------------------------------- criterion 6


def test_criterion_6_variance_calibration(report):
    """Empirical spread of the calibrated estimator matches its std_err."""
    config = ScenarioConfig(
        n=500, confounder_family="triangular", phi_scenario="identity",
        r0_true=0.3, replications=500, seed=6,
    )
    r_hats, std_errs = [], []
    for child in np.random.SeedSequence(config.seed).spawn(config.replications):
        rng = np.random.default_rng(child)
        data, external, _ = generate_scenario(config, rng)
        smoother = SmootherConfig.defaults(data.n, external.n, q=config.q)
        plan = SplitPlan.random(data.n, int(rng.integers(2**31)))
        estimate = estimate_r_calibrated(data, external, smoother, plan)
        r_hats.append(estimate.r_hat)
        std_errs.append(estimate.std_err)
    empirical_sd = float(np.std(r_hats, ddof=1))
    mean_se = float(np.mean(std_errs))
    ratio = empirical_sd / mean_se
    report(
        6,
        0.8 <= ratio <= 1.2,
        f"empirical sd = {empirical_sd:.4f}, mean std_err = {mean_se:.4f}, "
        f"ratio = {ratio:.3f} (target within 20% of 1)",
    )


# ---------------------------------------------------------------- criterion 7


def test_criterion_7_composite_null(report):
    """H0: |R| <= 0.3 barely rejects inside the null, has power outside."""
    inside = run_replications(
        ScenarioConfig(n=500, r0_true=0.2, replications=500, seed=71),
        r0_test=0.3, alpha=0.05,
    ).rejection_rate
    outside = run_replications(
        ScenarioConfig(n=500, r0_true=0.5, replications=500, seed=72),
        r0_test=0.3, alpha=0.05,
    ).rejection_rate
    report(
        7,
        inside <= 0.02 and outside >= 0.5,
        f"rejection at truth 0.2 = {inside:.3f} (tol <= 0.02), "
        f"power at truth 0.5 = {outside:.3f} (target >= 0.5)",
    )


# ---------------------------------------------------------------- criterion 8


def _write_pipeline_dataset(root):
    rng = np.random.default_rng(8)
    n, n_ext, n_taxa, n_mets = 127, 1270, 12, 20
    taxa = [f"k__B|f__Fam{j:02d}|g__G{j:02d}" for j in range(n_taxa)]
    reference = taxa[-1]

    def cohort(size, tag):
        Z = rng.normal(size=(size, 2))
        latent = rng.normal(size=(size, n_taxa)) + 0.5 * Z[:, [0]]
        counts = np.floor(np.exp(latent + 4.0)) + 1.0
        sids = [f"{tag}{i:04d}" for i in range(size)]
        pd.DataFrame(counts, index=sids, columns=taxa).rename_axis(
            "sample_id"
        ).to_csv(root / f"{tag}_abundance.tsv", sep="\t")
        pd.DataFrame(Z, index=sids, columns=["age", "bmi"]).rename_axis(
            "sample_id"
        ).to_csv(root / f"{tag}_covariates.tsv", sep="\t")
        return Z, counts, sids

    Z, counts, sids = cohort(n, "p")
    cohort(n_ext, "x")

    # The duplicated pair is an exactly linear, noiseless function of the
    # ALR coordinates the pipeline will reconstruct, so its microbial
    # correlation estimate must sit at the boundary.
    table = AbundanceTable(sample_ids=sids, taxa=taxa, values=counts)
    alr = alr_transform(table, reference, pseudocount=0.5)
    b = rng.normal(size=alr.shape[1])
    linear = alr @ b
    mets = np.empty((n, n_mets))
    mets[:, 0] = np.exp(linear)
    mets[:, 1] = mets[:, 0]
    mets[:, 2:] = np.exp(rng.normal(size=(n, n_mets - 2)))
    met_ids = [f"met{k:02d}" for k in range(n_mets)]
    pd.DataFrame(mets, index=sids, columns=met_ids).rename_axis(
        "sample_id"
    ).to_csv(root / "p_metabolites.tsv", sep="\t")
    return reference


def test_criterion_8_end_to_end_pipeline(report, tmp_path):
    """Full `test` run: deterministic, boundary pair found, FDR controlled."""
    start = time.monotonic()
    reference = _write_pipeline_dataset(tmp_path)
    runner = CliRunner()
    outputs = []
    for tag in ("a", "b"):
        out = tmp_path / tag
        result = runner.invoke(
            cli_main,
            [
                "test",
                "--covariates", str(tmp_path / "p_covariates.tsv"),
                "--abundance", str(tmp_path / "p_abundance.tsv"),
                "--metabolites", str(tmp_path / "p_metabolites.tsv"),
                "--external-abundance", str(tmp_path / "x_abundance.tsv"),
                "--external-covariates", str(tmp_path / "x_covariates.tsv"),
                "--transform", "alr",
                "--alr-reference", reference,
                "--min-prevalence", "0",
                "--n-splits", "100",
                "--seed", "17",
                "--output-dir", str(out),
            ],
        )
        assert result.exit_code == 0, result.output
        outputs.append((out / "results.tsv").read_bytes())
    deterministic = outputs[0] == outputs[1]

    frame = pd.read_csv(tmp_path / "a" / "results.tsv", sep="\t", na_values=["NA"])
    assert len(frame) == 190  # 20 choose 2
    dup = frame[
        (frame["metabolite_id_1"] == "met00") & (frame["metabolite_id_2"] == "met01")
    ].iloc[0]
    dup_ok = bool(dup["significant"]) and abs(dup["r_median"] - 1.0) < 1e-8

    noise_ids = {f"met{k:02d}" for k in range(2, 20)}
    noise = frame[
        frame["metabolite_id_1"].isin(noise_ids)
        & frame["metabolite_id_2"].isin(noise_ids)
    ]
    false_rate = float(noise["significant"].mean())
    elapsed = time.monotonic() - start
    report(
        8,
        deterministic and dup_ok and false_rate <= 0.05 and elapsed < 600.0,
        f"deterministic = {deterministic}, duplicated pair r_median = "
        f"{dup['r_median']:.10f} significant = {bool(dup['significant'])}, "
        f"noise-pair discovery rate = {false_rate:.4f} (tol 0.05), "
        f"{elapsed:.0f}s (< 600s)",
    )


# ---------------------------------------------------------------- criterion 9


def test_criterion_9_fdr_property(report):
    """All-null uniform p-values: false-discovery proportion under alpha."""
    rng = np.random.default_rng(9)
    false_discovery = []
    for _ in range(200):
        p = rng.uniform(size=1000)
        _, significant = by_fdr(p, alpha=0.05)
        # Every hypothesis is null, so any discovery is false.
        false_discovery.append(1.0 if significant.any() else 0.0)
    fdp = float(np.mean(false_discovery))

    adjusted, significant = by_fdr([0.01, 0.5], alpha=0.05)
    hand_ok = (
        abs(adjusted[0] - 0.03) < 1e-12
        and abs(adjusted[1] - 0.75) < 1e-12
        and bool(significant[0])
        and not bool(significant[1])
    )
    report(
        9,
        fdp <= 0.05 and hand_ok,
        f"mean false-discovery proportion = {fdp:.4f} (tol 0.05), "
        f"two-value hand example adjusted = ({adjusted[0]:.4f}, {adjusted[1]:.4f})",
    )
