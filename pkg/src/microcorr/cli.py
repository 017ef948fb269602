"""Command-line front end.

Subcommands: `simulate` (synthetic-study grid), `estimate` (per-pair
correlation estimates), `test` (pairwise inference with FDR control),
`network` (edge list from an existing result table). Every option can
also come from a YAML/JSON config file via --config, with explicit
flags winning; every run writes a manifest that can itself be replayed
as a config file.

Exit codes: 0 success, 2 validation, 3 I/O or parsing, 4 numerical.
"""

from __future__ import annotations

import functools
import json
import os
import sys
from pathlib import Path

import click
import numpy as np
import pandas as pd
import yaml

from . import __version__
from .datasets import ExternalDataset, SmootherConfig
from .exceptions import (
    MicrocorrError,
    NumericalError,
    TableFormatError,
    ValidationError,
)
from .pipeline import (
    RESULT_COLUMNS,
    AbundanceTable,
    MetaboliteTable,
    aggregate_and_filter,
    alr_transform,
    check_taxa_match,
    clr_transform,
    export_network,
    pairwise_analysis,
    pairwise_plugin_estimates,
    prepare_metabolites,
    write_tsv,
)
from .simulation import (
    CONFOUNDER_FAMILIES,
    DEFAULT_R_GRID,
    PHI_SCENARIOS,
    simulate_grid,
)


def _handle_errors(func):
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except ValidationError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(2)
        except (TableFormatError, OSError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(3)
        except NumericalError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(4)
        except MicrocorrError as exc:  # anything else from the package
            click.echo(f"error: {exc}", err=True)
            sys.exit(4)

    return wrapper


def _merge_config(ctx: click.Context, params: dict, config_path) -> dict:
    """Overlay config-file values onto parameters left at their defaults."""
    if not config_path:
        return params
    try:
        with open(config_path) as handle:
            document = yaml.safe_load(handle)
    except yaml.YAMLError as exc:
        raise TableFormatError(f"could not parse config {config_path}: {exc}") from exc
    if not isinstance(document, dict):
        raise ValidationError(f"config {config_path} must be a mapping")
    if "parameters" in document and isinstance(document["parameters"], dict):
        document = document["parameters"]
    aliases = {}
    for parameter in ctx.command.params:
        for opt in parameter.opts:
            aliases[opt.lstrip("-").replace("-", "_")] = parameter.name
    for key, value in document.items():
        name = str(key).replace("-", "_")
        name = aliases.get(name, name)
        if name in ("config", "subcommand", "version"):
            continue
        if name not in params:
            raise ValidationError(f"config {config_path}: unknown key {key!r}")
        if ctx.get_parameter_source(name) == click.core.ParameterSource.DEFAULT:
            if isinstance(params[name], tuple) and not isinstance(value, (list, tuple)):
                value = [value]
            params[name] = tuple(value) if isinstance(params[name], tuple) else value
    return params


def _write_manifest(output_dir: Path, subcommand: str, params: dict) -> None:
    clean = {
        k: (str(v) if isinstance(v, Path) else list(v) if isinstance(v, tuple) else v)
        for k, v in params.items()
        if k != "config"
    }
    manifest = {
        "subcommand": subcommand,
        "version": __version__,
        "parameters": clean,
    }
    with open(output_dir / "run_manifest.json", "w") as handle:
        json.dump(manifest, handle, indent=2, sort_keys=True)
        handle.write("\n")


def _default_threads() -> int:
    return os.cpu_count() or 1


@click.group()
@click.version_option(version=__version__)
def main():
    """Confounder-adjusted microbial correlation toolkit."""


_config_option = click.option(
    "--config", type=click.Path(dir_okay=False), default=None,
    help="YAML/JSON config file; explicit flags override its values.",
)
_output_option = click.option(
    "--output-dir", type=click.Path(file_okay=False), default=".",
    help="Directory for result files and the run manifest.",
)


@main.command()
@_config_option
@_output_option
@click.option("--n", "n_values", multiple=True, type=int, default=(100, 300, 500))
@click.option("--family", "families", multiple=True,
              type=click.Choice(CONFOUNDER_FAMILIES), default=CONFOUNDER_FAMILIES)
@click.option("--phi-scenario", "phi_scenarios", multiple=True,
              type=click.Choice(PHI_SCENARIOS), default=PHI_SCENARIOS)
@click.option("--r", "r_values", multiple=True, type=float, default=DEFAULT_R_GRID,
              help="True correlation values of the grid.")
@click.option("--replications", type=int, default=500)
@click.option("--r0", type=float, default=0.0, help="Null threshold of the test.")
@click.option("--alpha", type=float, default=0.05)
@click.option("--external-factor", type=float, default=10.0)
@click.option("--seed", type=int, default=0)
@click.option("--threads", type=int, default=None)
@click.pass_context
@_handle_errors
def simulate(ctx, config, output_dir, **params):
    """Run the synthetic-study grid and write a summary table."""
    params = _merge_config(ctx, dict(params, output_dir=output_dir), config)
    output_dir = Path(params.pop("output_dir"))
    for r in params["r_values"]:
        if not abs(r) < 1:
            raise ValidationError(f"true correlation {r} must lie in (-1, 1)")
    if not 0 < params["alpha"] < 1:
        raise ValidationError("alpha must lie in (0, 1)")
    if not 0 <= params["r0"] < 1:
        raise ValidationError("r0 must lie in [0, 1)")
    threads = params["threads"] or _default_threads()
    output_dir.mkdir(parents=True, exist_ok=True)
    summary = simulate_grid(
        n_values=params["n_values"],
        families=params["families"],
        phi_scenarios=params["phi_scenarios"],
        r_values=params["r_values"],
        replications=params["replications"],
        seed=params["seed"],
        r0_test=params["r0"],
        alpha=params["alpha"],
        n_jobs=threads,
        external_factor=params["external_factor"],
    )
    write_tsv(summary, output_dir / "simulation_summary.tsv")
    _write_manifest(output_dir, "simulate", params)
    click.echo(f"wrote {output_dir / 'simulation_summary.tsv'}")


def _pipeline_options(func):
    options = [
        click.option("--covariates", type=click.Path(dir_okay=False),
                     required=True, help="Paired-cohort covariate TSV."),
        click.option("--abundance", type=click.Path(dir_okay=False),
                     required=True, help="Paired-cohort abundance TSV."),
        click.option("--metabolites", type=click.Path(dir_okay=False),
                     required=True, help="Paired-cohort metabolite TSV."),
        click.option("--external-abundance", type=click.Path(dir_okay=False),
                     default=None),
        click.option("--external-covariates", type=click.Path(dir_okay=False),
                     default=None),
        click.option("--aggregate-rank", default=None,
                     help="Taxonomic rank to aggregate to (e.g. family)."),
        click.option("--min-prevalence", type=float, default=0.2),
        click.option("--transform", type=click.Choice(["clr", "alr"]), default="clr"),
        click.option("--alr-reference", default=None),
        click.option("--pseudocount", type=float, default=0.5),
        click.option("--max-missing", type=float, default=0.5),
        click.option("--impute", type=click.Choice(["half_min", "keep_missing"]),
                     default="half_min"),
        click.option("--kernel-order", type=int, default=4),
        click.option("--bandwidth", type=float, default=None),
        click.option("--cutoff", type=float, default=None),
        click.option("--external-bandwidth", type=float, default=None),
        click.option("--external-cutoff", type=float, default=None),
        click.option("--n-splits", type=int, default=100),
        click.option("--r0", type=float, default=0.0),
        click.option("--alpha", type=float, default=0.05),
        click.option("--median-policy", type=click.Choice(["split", "median_sigma"]),
                     default="split"),
        click.option("--seed", type=int, default=0),
        click.option("--threads", type=int, default=None),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def _reorder_rows(sample_ids, table_ids, values, label):
    lookup = {s: k for k, s in enumerate(table_ids)}
    if set(lookup) != set(sample_ids):
        raise ValidationError(
            f"{label} covers a different sample set than the covariate table"
        )
    order = np.array([lookup[s] for s in sample_ids])
    return values[order]


def _load_inputs(params):
    covariates = pd.read_csv(params["covariates"], sep="\t", index_col=0)
    if covariates.isna().any().any():
        raise TableFormatError("covariate table contains missing values")
    sample_ids = tuple(map(str, covariates.index))
    Z = covariates.to_numpy(dtype=float)

    abundance = AbundanceTable.from_tsv(params["abundance"])
    metabolites = MetaboliteTable.from_tsv(params["metabolites"])
    if params["aggregate_rank"] is not None or params["min_prevalence"] > 0:
        abundance = aggregate_and_filter(
            abundance, params["aggregate_rank"], params["min_prevalence"]
        )

    external = None
    ext_ab_path = params["external_abundance"]
    ext_cov_path = params["external_covariates"]
    if (ext_ab_path is None) != (ext_cov_path is None):
        raise ValidationError(
            "supply both --external-abundance and --external-covariates or neither"
        )
    if ext_ab_path is not None:
        ext_abundance = AbundanceTable.from_tsv(ext_ab_path)
        if params["aggregate_rank"] is not None or params["min_prevalence"] > 0:
            ext_abundance = aggregate_and_filter(
                ext_abundance, params["aggregate_rank"], params["min_prevalence"]
            )
        check_taxa_match(abundance, ext_abundance)
        ext_cov = pd.read_csv(ext_cov_path, sep="\t", index_col=0)
        if ext_cov.isna().any().any():
            raise TableFormatError("external covariate table contains missing values")
        ext_ids = tuple(map(str, ext_cov.index))
        ext_Z = ext_cov.to_numpy(dtype=float)
        ext_X = _transform(ext_abundance, params)
        ext_X = _reorder_rows(ext_ids, ext_abundance.sample_ids, ext_X,
                              "external abundance table")
        external = ExternalDataset(Z=ext_Z, X=ext_X)

    X = _transform(abundance, params)
    X = _reorder_rows(sample_ids, abundance.sample_ids, X, "abundance table")
    prepared = prepare_metabolites(
        metabolites, params["max_missing"], impute=params["impute"]
    )
    met_values = _reorder_rows(
        sample_ids, metabolites.sample_ids, prepared.values, "metabolite table"
    )
    n_ext = external.n if external is not None else None
    config = SmootherConfig.defaults(
        len(sample_ids),
        n_ext,
        q=Z.shape[1],
        kernel_order=params["kernel_order"],
        bandwidth=params["bandwidth"],
        cutoff=params["cutoff"],
        external_bandwidth=params["external_bandwidth"],
        external_cutoff=params["external_cutoff"],
    )
    return Z, X, met_values, prepared.metabolite_ids, external, config


def _transform(abundance: AbundanceTable, params) -> np.ndarray:
    if params["transform"] == "clr":
        return clr_transform(abundance, params["pseudocount"])
    if params["alr_reference"] is None:
        raise ValidationError("--alr-reference is required with --transform alr")
    return alr_transform(abundance, params["alr_reference"], params["pseudocount"])


@main.command()
@_config_option
@_output_option
@_pipeline_options
@click.pass_context
@_handle_errors
def estimate(ctx, config, output_dir, **params):
    """Per-pair correlation estimates (calibrated if external data given)."""
    params = _merge_config(ctx, dict(params, output_dir=output_dir), config)
    output_dir = Path(params.pop("output_dir"))
    Z, X, mets, ids, external, smoother = _load_inputs(params)
    output_dir.mkdir(parents=True, exist_ok=True)
    if external is None:
        table = pairwise_plugin_estimates(X, Z, mets, ids, smoother)
    else:
        full = pairwise_analysis(
            X, Z, mets, ids, external, smoother,
            n_splits=params["n_splits"], r0=params["r0"],
            alpha=params["alpha"], seed=params["seed"],
            median_policy=params["median_policy"],
        )
        table = full[["metabolite_id_1", "metabolite_id_2",
                      "r_median", "std_err", "n_splits"]]
    write_tsv(table, output_dir / "estimates.tsv")
    _write_manifest(output_dir, "estimate", params)
    click.echo(f"wrote {output_dir / 'estimates.tsv'}")


@main.command("test")
@_config_option
@_output_option
@_pipeline_options
@click.pass_context
@_handle_errors
def test_cmd(ctx, config, output_dir, **params):
    """Pairwise tests of H0: |R| <= r0 with Benjamini-Yekutieli FDR."""
    params = _merge_config(ctx, dict(params, output_dir=output_dir), config)
    output_dir = Path(params.pop("output_dir"))
    Z, X, mets, ids, external, smoother = _load_inputs(params)
    if external is None:
        raise ValidationError("the test subcommand requires the external cohort")
    output_dir.mkdir(parents=True, exist_ok=True)
    results = pairwise_analysis(
        X, Z, mets, ids, external, smoother,
        n_splits=params["n_splits"], r0=params["r0"],
        alpha=params["alpha"], seed=params["seed"],
        median_policy=params["median_policy"],
    )
    write_tsv(results[RESULT_COLUMNS], output_dir / "results.tsv")
    _write_manifest(output_dir, "test", params)
    click.echo(f"wrote {output_dir / 'results.tsv'}")


@main.command()
@_config_option
@_output_option
@click.option("--results", type=click.Path(dir_okay=False), required=True,
              help="Result table produced by the test subcommand.")
@click.option("--solid-threshold", type=float, default=0.3)
@click.pass_context
@_handle_errors
def network(ctx, config, output_dir, results, solid_threshold):
    """Export the significant-pair edge list from a result table."""
    params = _merge_config(
        ctx,
        {"results": results, "solid_threshold": solid_threshold,
         "output_dir": output_dir},
        config,
    )
    output_dir = Path(params.pop("output_dir"))
    try:
        table = pd.read_csv(params["results"], sep="\t", na_values=["NA"])
    except (pd.errors.ParserError, ValueError) as exc:
        raise TableFormatError(f"could not parse {params['results']}: {exc}") from exc
    edges = export_network(table, params["solid_threshold"])
    output_dir.mkdir(parents=True, exist_ok=True)
    write_tsv(edges, output_dir / "network_edges.tsv")
    _write_manifest(output_dir, "network", params)
    click.echo(f"wrote {output_dir / 'network_edges.tsv'}")


if __name__ == "__main__":
    main()
