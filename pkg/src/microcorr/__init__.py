"""Confounder-adjusted microbial correlation between metabolite pairs.

Partially linear models with kernel smoothing isolate the
microbe-driven component of each metabolite; the correlation of those
components is estimated either by a full-sample plug-in or by a
calibrated sample-split estimator that borrows a large covariate-only
external cohort and admits normal-theory p-values.
"""

from .correlation import (
    FullSampleFit,
    SplitPlan,
    estimate_r_calibrated,
    estimate_r_plugin,
    full_sample_fit,
    sigma_r,
)
from .datasets import (
    CorrelationEstimate,
    ExternalDataset,
    PairedDataset,
    PLMFit,
    SmootherConfig,
)
from .estimators import MicrobialCorrelation, PartiallyLinearRegressor
from .exceptions import (
    AllTruncatedError,
    ConformabilityError,
    DegenerateDirectionError,
    EstimationError,
    InternalConsistencyError,
    MicrocorrError,
    NumericalError,
    SingularPhiError,
    TableFormatError,
    ValidationError,
    VanishingDenominatorError,
)
from .inference import (
    MultiSplitResult,
    TestResult,
    by_fdr,
    multi_split_inference,
    test_statistics,
)
from .kernels import KernelFunction, gaussian_kernel, kernel_eval, product_kernel
from .measures import genetic_r1, genetic_r2, microbial_correlation
from .pipeline import (
    AbundanceTable,
    MetaboliteTable,
    PreparedMetabolites,
    aggregate_and_filter,
    alr_transform,
    clr_transform,
    export_network,
    pairwise_analysis,
    prepare_metabolites,
)
from .plm import PhiEstimate, PLMDesign, estimate_phi, fit_plm
from .simulation import (
    ReplicationSummary,
    ScenarioConfig,
    build_phi,
    construct_coefficients,
    generate_scenario,
    run_replications,
    simulate_grid,
)
from .smoothing import density_estimate, nw_predict, nw_regress

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
