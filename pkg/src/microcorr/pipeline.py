"""Data ingestion, compositional transforms, the pairwise driver, and
result/network export.

File conventions: tab-separated values with a header row, first column
the sample id, one row per sample, missing values written as "NA".
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy.special import erfc

from .correlation import SplitPlan, _sigma_r_scaled
from .datasets import ExternalDataset, PairedDataset, SmootherConfig, _freeze
from .exceptions import (
    ConformabilityError,
    EstimationError,
    InternalConsistencyError,
    NumericalError,
    TableFormatError,
    ValidationError,
)
from .inference import (
    by_fdr,
    lower_median_index,
    multi_split_inference,
    split_seeds,
    test_statistics,
)
from .measures import _CLAMP_TOL
from .plm import PLMDesign, estimate_phi
from .validation import as_matrix, check_probability

RANK_PREFIXES = {
    "kingdom": "k__",
    "phylum": "p__",
    "class": "c__",
    "order": "o__",
    "family": "f__",
    "genus": "g__",
    "species": "s__",
}

RESULT_COLUMNS = [
    "metabolite_id_1",
    "metabolite_id_2",
    "r_median",
    "p_value",
    "p_adjusted",
    "significant",
    "n_splits",
]


def _read_tsv(path) -> pd.DataFrame:
    try:
        frame = pd.read_csv(path, sep="\t", index_col=0, na_values=["NA"])
    except (pd.errors.ParserError, UnicodeDecodeError, ValueError) as exc:
        raise TableFormatError(f"could not parse {path}: {exc}") from exc
    if frame.index.has_duplicates:
        raise TableFormatError(f"{path}: duplicate sample ids")
    if frame.columns.has_duplicates:
        raise TableFormatError(f"{path}: duplicate column ids")
    return frame


def write_tsv(frame: pd.DataFrame, path) -> None:
    frame.to_csv(path, sep="\t", index=False, na_rep="NA")


@dataclass(frozen=True)
class AbundanceTable:
    """Counts or relative abundances, samples by taxa."""

    sample_ids: tuple
    taxa: tuple
    values: np.ndarray

    def __post_init__(self):
        values = as_matrix(self.values, "abundance values")
        if np.any(values < 0):
            raise ValidationError("abundance values must be nonnegative")
        if len(self.sample_ids) != values.shape[0] or len(self.taxa) != values.shape[1]:
            raise ValidationError("abundance ids do not match the value block")
        if len(set(self.sample_ids)) != len(self.sample_ids):
            raise ValidationError("duplicate sample ids")
        if len(set(self.taxa)) != len(self.taxa):
            raise ValidationError("duplicate taxon ids")
        object.__setattr__(self, "sample_ids", tuple(self.sample_ids))
        object.__setattr__(self, "taxa", tuple(self.taxa))
        object.__setattr__(self, "values", _freeze(values))

    @classmethod
    def from_tsv(cls, path) -> "AbundanceTable":
        frame = _read_tsv(path)
        if frame.isna().any().any():
            raise TableFormatError(f"{path}: abundance tables may not contain NA")
        return cls(
            sample_ids=tuple(map(str, frame.index)),
            taxa=tuple(map(str, frame.columns)),
            values=frame.to_numpy(dtype=float),
        )


@dataclass(frozen=True)
class MetaboliteTable:
    """Metabolite levels, samples by compounds; missing entries are NaN."""

    sample_ids: tuple
    metabolite_ids: tuple
    values: np.ndarray

    def __post_init__(self):
        values = as_matrix(self.values, "metabolite values", allow_nan=True)
        if np.any(np.isinf(values)):
            raise ValidationError("metabolite values must be finite or missing")
        observed = values[~np.isnan(values)]
        if np.any(observed < 0):
            raise ValidationError("metabolite levels must be nonnegative")
        if len(self.sample_ids) != values.shape[0] or len(self.metabolite_ids) != values.shape[1]:
            raise ValidationError("metabolite ids do not match the value block")
        object.__setattr__(self, "sample_ids", tuple(self.sample_ids))
        object.__setattr__(self, "metabolite_ids", tuple(self.metabolite_ids))
        object.__setattr__(self, "values", _freeze(values))

    @classmethod
    def from_tsv(cls, path) -> "MetaboliteTable":
        frame = _read_tsv(path)
        return cls(
            sample_ids=tuple(map(str, frame.index)),
            metabolite_ids=tuple(map(str, frame.columns)),
            values=frame.to_numpy(dtype=float),
        )


def _rank_component(taxon: str, prefix: str) -> str | None:
    for part in taxon.split("|"):
        if part.startswith(prefix):
            return part
    return None


def aggregate_and_filter(
    table: AbundanceTable, rank: str | None, min_prevalence: float
) -> AbundanceTable:
    """Sum counts within groups at `rank`, then drop rare groups.

    Taxon ids carry pipe-separated lineages with rank prefixes
    (k__/p__/c__/o__/f__/g__/s__); `rank=None` skips aggregation. A
    group is kept when it is nonzero in at least `min_prevalence` of
    the samples.
    """
    check_probability(min_prevalence, "min_prevalence")
    values = table.values
    taxa = list(table.taxa)
    if rank is not None:
        prefix = RANK_PREFIXES.get(rank.lower())
        if prefix is None:
            raise ValidationError(
                f"unknown rank {rank!r}; expected one of {sorted(RANK_PREFIXES)}"
            )
        groups: dict[str, list[int]] = {}
        missing = []
        for idx, taxon in enumerate(taxa):
            component = _rank_component(taxon, prefix)
            if component is None:
                missing.append(taxon)
            else:
                groups.setdefault(component, []).append(idx)
        if not groups:
            raise ValidationError(f"no taxon carries a {rank!r} label")
        if missing:
            raise ValidationError(
                f"{len(missing)} taxa lack a {rank!r} label, e.g. {missing[0]!r}"
            )
        taxa = sorted(groups)
        values = np.column_stack(
            [table.values[:, groups[name]].sum(axis=1) for name in taxa]
        )
    prevalence = (values > 0).mean(axis=0)
    keep = prevalence >= min_prevalence
    if not keep.any():
        raise ValidationError("prevalence filter removed every taxon group")
    return AbundanceTable(
        sample_ids=table.sample_ids,
        taxa=tuple(t for t, k in zip(taxa, keep) if k),
        values=values[:, keep],
    )


def _closed_positive(table: AbundanceTable, pseudocount: float) -> np.ndarray:
    if pseudocount < 0:
        raise ValidationError("pseudocount must be nonnegative")
    shifted = table.values + pseudocount
    if np.any(shifted <= 0):
        raise ValidationError(
            "abundance table contains zeros; supply a positive pseudocount"
        )
    return shifted / shifted.sum(axis=1, keepdims=True)


def clr_transform(table: AbundanceTable, pseudocount: float = 0.5) -> np.ndarray:
    """Centered log-ratio coordinates; every output row sums to zero."""
    logs = np.log(_closed_positive(table, pseudocount))
    return logs - logs.mean(axis=1, keepdims=True)


def alr_transform(
    table: AbundanceTable, reference_taxon: str, pseudocount: float = 0.5
) -> np.ndarray:
    """Additive log-ratio coordinates against one reference taxon."""
    if reference_taxon not in table.taxa:
        raise ValidationError(f"reference taxon {reference_taxon!r} not in table")
    ref = table.taxa.index(reference_taxon)
    logs = np.log(_closed_positive(table, pseudocount))
    others = [j for j in range(len(table.taxa)) if j != ref]
    return logs[:, others] - logs[:, [ref]]


@dataclass(frozen=True)
class PreparedMetabolites:
    """Filtered, imputed, log-transformed metabolite block."""

    metabolite_ids: tuple
    values: np.ndarray


def prepare_metabolites(
    table: MetaboliteTable, max_missing: float = 0.5, impute: str = "half_min"
) -> PreparedMetabolites:
    """Drop mostly-missing metabolites, impute the rest, take logs.

    `impute` is "half_min" (missing entries replaced by half the
    metabolite's observed minimum) or "keep_missing" (NaN preserved so
    the pairwise driver can drop incomplete samples per pair).
    """
    check_probability(max_missing, "max_missing")
    if max_missing == 0:
        raise ValidationError("max_missing must lie in (0, 1]")
    if impute not in ("half_min", "keep_missing"):
        raise ValidationError(f"unknown imputation policy {impute!r}")
    missing_frac = np.isnan(table.values).mean(axis=0)
    keep = missing_frac < max_missing
    if not keep.any():
        raise ValidationError("the missingness filter removed every metabolite")
    values = table.values[:, keep].copy()
    ids = tuple(m for m, k in zip(table.metabolite_ids, keep) if k)
    if impute == "half_min":
        for j in range(values.shape[1]):
            col = values[:, j]
            nan = np.isnan(col)
            if nan.any():
                col[nan] = 0.5 * np.nanmin(col)
    if np.any(values[~np.isnan(values)] <= 0):
        raise ValidationError(
            "metabolite levels must be positive before the log transform"
        )
    return PreparedMetabolites(metabolite_ids=ids, values=np.log(values))


def _canonical_pairs(ids) -> list[tuple[int, int]]:
    # Unordered pairs keyed by metabolite id, not column position, so a
    # column permutation reorders rows but never changes a row.
    pairs = []
    for i, j in itertools.combinations(range(len(ids)), 2):
        if ids[j] < ids[i]:
            i, j = j, i
        pairs.append((i, j))
    pairs.sort(key=lambda ij: (ids[ij[0]], ids[ij[1]]))
    return pairs


def pairwise_analysis(
    X,
    Z,
    metabolites,
    metabolite_ids,
    external: ExternalDataset,
    config: SmootherConfig,
    n_splits: int = 100,
    r0: float = 0.0,
    alpha: float = 0.05,
    seed: int = 0,
    *,
    median_policy: str = "split",
) -> pd.DataFrame:
    """Calibrated multi-split inference for every metabolite pair.

    The external covariance and the per-split half-sample designs are
    shared across all pairs, and the same split plans are used for
    every pair, so results are deterministic in `seed`. Pairs whose
    estimation fails on more than half the splits get NA results.
    """
    X = as_matrix(X, "X")
    Z = as_matrix(Z, "Z")
    mets = as_matrix(metabolites, "metabolites", allow_nan=True)
    ids = tuple(map(str, metabolite_ids))
    if len(ids) != mets.shape[1]:
        raise ValidationError("metabolite_ids do not match the metabolite block")
    if len(ids) < 2:
        raise ValidationError("need at least two metabolites")
    if X.shape[0] != Z.shape[0] or X.shape[0] != mets.shape[0]:
        raise ValidationError("X, Z and metabolites must share the row count")
    if external.X.shape[1] != X.shape[1] or external.Z.shape[1] != Z.shape[1]:
        raise ConformabilityError("external cohort does not conform to the paired one")
    check_probability(alpha, "alpha", open_ends=True)
    if np.isnan(mets).any():
        rows = _pairwise_with_missing(
            X, Z, mets, ids, external, config, n_splits, r0, seed, median_policy
        )
    else:
        rows = _pairwise_complete(
            X, Z, mets, ids, external, config, n_splits, r0, seed, median_policy
        )
    frame = pd.DataFrame(rows, columns=RESULT_COLUMNS + ["std_err"])
    valid = frame["p_value"].notna()
    adjusted = np.full(len(frame), np.nan)
    significant = np.zeros(len(frame), dtype=bool)
    if valid.any():
        adj, sig = by_fdr(frame.loc[valid, "p_value"].to_numpy(), alpha)
        adjusted[valid.to_numpy()] = adj
        significant[valid.to_numpy()] = sig
    frame["p_adjusted"] = adjusted
    frame["significant"] = significant
    return frame


def _pair_rows_from_splits(ids, pairs, r_splits, std_err, n, n_splits, r0):
    rows = []
    for i, j in pairs:
        values = np.array([r[i, j] for r in r_splits])
        values = values[~np.isnan(values)]
        n_used = values.size
        if n_used < max(1, n_splits - n_splits // 2):
            rows.append([ids[i], ids[j], np.nan, np.nan, np.nan, False, 0, np.nan])
            continue
        r_median = float(values[lower_median_index(values)])
        se = std_err[i, j]
        if math.isfinite(se) and se > 0:
            sigma_hat = math.sqrt(n) * se
            t_plus = math.sqrt(n) * max(abs(r_median) - r0, 0.0) / sigma_hat
            p = float(erfc(t_plus / math.sqrt(2.0)))
        elif se == 0.0:
            # Degenerate limit (e.g. a noiseless duplicated metabolite):
            # the folded test is decisive either way.
            p = 1.0 if abs(r_median) <= r0 else 0.0
        else:
            p = np.nan
        rows.append([ids[i], ids[j], r_median, p, np.nan, False, n_used, se])
    return rows


def _pairwise_complete(
    X, Z, mets, ids, external, config, n_splits, r0, seed, median_policy
):
    n, m = mets.shape[0], mets.shape[1]
    phi_ss = estimate_phi(
        external.X,
        external.Z,
        config,
        bandwidth=config.external_bandwidth,
        cutoff=config.external_cutoff,
    )
    full = PLMDesign(X, Z, config)
    full_coefs, full_sigma2 = full.fit_many(mets)
    pairs = _canonical_pairs(ids)

    # Per-pair std_err from full-sample plug-ins; identical across splits.
    n_a = (n + 1) // 2
    n_b = n - n_a
    std_err = np.full((m, m), np.nan)
    for i, j in pairs:
        try:
            sigma2 = _sigma_r_scaled(
                full_coefs[i],
                full_coefs[j],
                full.phi.matrix,
                full_sigma2[i],
                full_sigma2[j],
                n / n_a,
                n / n_b,
            )
        except NumericalError:
            continue
        std_err[i, j] = math.sqrt(sigma2 / n)

    phi = phi_ss.matrix
    trace = float(np.trace(phi))
    r_splits = []
    failed_splits = 0
    for split_seed in split_seeds(seed, n_splits):
        try:
            plan = SplitPlan.random(n, int(split_seed))
            idx_a, idx_b = plan.indices_a, plan.indices_b
            coef_a, _ = PLMDesign(X[idx_a], Z[idx_a], config).fit_many(mets[idx_a])
            coef_b, _ = PLMDesign(X[idx_b], Z[idx_b], config).fit_many(mets[idx_b])
        except NumericalError as exc:
            failed_splits += 1
            warnings.warn(f"sample split failed and was dropped: {exc}")
            continue
        pa = coef_a @ phi
        pb = coef_b @ phi
        quad_a = np.einsum("ij,ij->i", pa, coef_a)
        quad_b = np.einsum("ij,ij->i", pb, coef_b)
        tol_a = _CLAMP_TOL * trace * np.einsum("ij,ij->i", coef_a, coef_a)
        tol_b = _CLAMP_TOL * trace * np.einsum("ij,ij->i", coef_b, coef_b)
        ok_a = quad_a > tol_a
        ok_b = quad_b > tol_b
        with np.errstate(invalid="ignore", divide="ignore"):
            r = (pa @ coef_b.T) / np.sqrt(np.outer(quad_a, quad_b))
        r[~ok_a, :] = np.nan
        r[:, ~ok_b] = np.nan
        if np.nanmax(np.abs(r), initial=0.0) > 1.0 + _CLAMP_TOL:
            raise InternalConsistencyError(
                "a pairwise correlation exceeds 1 beyond round-off"
            )
        r = np.clip(r, -1.0, 1.0)
        r_splits.append(r)
    if not r_splits:
        raise EstimationError("every sample split failed")
    return _pair_rows_from_splits(ids, pairs, r_splits, std_err, n, n_splits, r0)


def _pairwise_with_missing(
    X, Z, mets, ids, external, config, n_splits, r0, seed, median_policy
):
    # Slow path: per pair, drop samples missing either metabolite and run
    # the generic multi-split protocol on the remaining rows.
    rows = []
    for i, j in _canonical_pairs(ids):
        complete = ~np.isnan(mets[:, i]) & ~np.isnan(mets[:, j])
        try:
            if complete.sum() < 4:
                raise EstimationError("too few complete samples for this pair")
            data = PairedDataset(
                Z=Z[complete], X=X[complete], y=mets[complete, i], w=mets[complete, j]
            )
            result = multi_split_inference(
                data,
                external,
                config,
                n_splits,
                r0,
                seed,
                median_policy=median_policy,
            )
            rows.append(
                [
                    ids[i],
                    ids[j],
                    result.r_median,
                    result.p_value,
                    np.nan,
                    False,
                    result.n_splits_used,
                    result.median_estimate.std_err,
                ]
            )
        except (NumericalError, ValidationError) as exc:
            warnings.warn(f"pair ({ids[i]}, {ids[j]}) not estimable: {exc}")
            rows.append([ids[i], ids[j], np.nan, np.nan, np.nan, False, 0, np.nan])
    return rows


def pairwise_plugin_estimates(
    X, Z, metabolites, metabolite_ids, config: SmootherConfig
) -> pd.DataFrame:
    """Full-sample plug-in correlation for every metabolite pair."""
    X = as_matrix(X, "X")
    Z = as_matrix(Z, "Z")
    mets = as_matrix(metabolites, "metabolites")
    ids = tuple(map(str, metabolite_ids))
    design = PLMDesign(X, Z, config)
    coefs, _ = design.fit_many(mets)
    phi = design.phi.matrix
    trace = float(np.trace(phi))
    pa = coefs @ phi
    quad = np.einsum("ij,ij->i", pa, coefs)
    tol = _CLAMP_TOL * trace * np.einsum("ij,ij->i", coefs, coefs)
    rows = []
    for i, j in _canonical_pairs(ids):
        if quad[i] <= tol[i] or quad[j] <= tol[j]:
            rows.append([ids[i], ids[j], np.nan, design.retained_count])
            continue
        r = float(np.clip((pa[i] @ coefs[j]) / math.sqrt(quad[i] * quad[j]), -1, 1))
        rows.append([ids[i], ids[j], r, design.retained_count])
    return pd.DataFrame(
        rows, columns=["metabolite_id_1", "metabolite_id_2", "r_hat", "n_retained"]
    )


def export_network(results: pd.DataFrame, solid_threshold: float = 0.3) -> pd.DataFrame:
    """Edge list of significant pairs, styled by correlation magnitude."""
    required = {"metabolite_id_1", "metabolite_id_2", "r_median", "significant"}
    if not required.issubset(results.columns):
        raise ValidationError(
            f"result table is missing columns {sorted(required - set(results.columns))}"
        )
    edges = results[results["significant"].astype(bool)]
    return pd.DataFrame(
        {
            "node1": edges["metabolite_id_1"].to_numpy(),
            "node2": edges["metabolite_id_2"].to_numpy(),
            "weight": edges["r_median"].to_numpy(),
            "sign": np.where(edges["r_median"] >= 0, "positive", "negative"),
            "style": np.where(
                np.abs(edges["r_median"]) >= solid_threshold, "solid", "dashed"
            ),
        }
    )


def align_samples(sample_ids: tuple, *tables) -> list[np.ndarray]:
    """Reorder each table's rows to `sample_ids`; error on mismatch."""
    out = []
    for table in tables:
        lookup = {s: k for k, s in enumerate(table.sample_ids)}
        if set(lookup) != set(sample_ids):
            raise ConformabilityError("input tables cover different sample sets")
        order = np.array([lookup[s] for s in sample_ids])
        out.append(table.values[order])
    return out


def check_taxa_match(paired: AbundanceTable, external: AbundanceTable) -> None:
    if paired.taxa != external.taxa:
        raise ConformabilityError(
            "paired and external cohorts carry different taxon sets after "
            "aggregation/filtering; harmonize them before transformation"
        )
