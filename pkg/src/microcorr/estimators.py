"""Scikit-learn style wrappers around the functional core.

These give the package a familiar fit/predict surface (get_params,
set_params, trailing-underscore attributes) so it composes with
sklearn tooling; the heavy lifting lives in the plm/correlation
modules.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin

from .datasets import ExternalDataset, PairedDataset, SmootherConfig
from .exceptions import ValidationError
from .inference import multi_split_inference, test_statistics
from .correlation import SplitPlan, estimate_r_calibrated, estimate_r_plugin
from .kernels import gaussian_kernel
from .plm import PLMDesign
from .smoothing import nw_predict
from .validation import as_matrix, as_vector


def _resolve_config(n, q, n_external, kernel_order, bandwidth, cutoff,
                    external_bandwidth, external_cutoff) -> SmootherConfig:
    return SmootherConfig.defaults(
        n,
        n_external,
        q=q,
        kernel_order=kernel_order,
        bandwidth=bandwidth,
        cutoff=cutoff,
        external_bandwidth=external_bandwidth,
        external_cutoff=external_cutoff,
    )


class PartiallyLinearRegressor(RegressorMixin, BaseEstimator):
    """Partially linear regression: outcome = f(Z) + coef'X + noise.

    Bandwidth and cutoff default to the sample-size-driven schedule
    when left as None.
    """

    def __init__(self, kernel_order=4, bandwidth=None, cutoff=None):
        self.kernel_order = kernel_order
        self.bandwidth = bandwidth
        self.cutoff = cutoff

    def fit(self, X, y, Z=None):
        if Z is None:
            raise ValidationError("fit requires the confounder block Z")
        X = as_matrix(X, "X")
        Z = as_matrix(Z, "Z")
        y = as_vector(y, "y")
        config = _resolve_config(
            X.shape[0], Z.shape[1], None, self.kernel_order,
            self.bandwidth, self.cutoff, None, None,
        )
        design = PLMDesign(X, Z, config)
        result = design.fit(y)
        self.coef_ = result.coefficients
        self.residual_variance_ = result.residual_variance
        self.retained_count_ = result.retained_count
        self.config_ = config
        self._train_Z = Z
        self._train_X = X
        self._train_y = y
        return self

    def predict(self, X, Z=None):
        if Z is None:
            raise ValidationError("predict requires the confounder block Z")
        X = as_matrix(X, "X")
        Z = as_matrix(Z, "Z")
        kernel = gaussian_kernel(self.config_.kernel_order)
        a = self.config_.bandwidth
        h_y = nw_predict(self._train_Z, self._train_y, Z, a, kernel)
        h_x = nw_predict(self._train_Z, self._train_X, Z, a, kernel)
        return h_y + (X - h_x) @ self.coef_


class MicrobialCorrelation(BaseEstimator):
    """Microbial correlation between two outcomes.

    With an external cohort the calibrated multi-split estimator is
    used and `p_value_` tests H0: |R| <= r0; without one, only the
    plug-in point estimate is available.
    """

    def __init__(
        self,
        kernel_order=4,
        bandwidth=None,
        cutoff=None,
        external_bandwidth=None,
        external_cutoff=None,
        n_splits=100,
        r0=0.0,
        seed=0,
        median_policy="split",
    ):
        self.kernel_order = kernel_order
        self.bandwidth = bandwidth
        self.cutoff = cutoff
        self.external_bandwidth = external_bandwidth
        self.external_cutoff = external_cutoff
        self.n_splits = n_splits
        self.r0 = r0
        self.seed = seed
        self.median_policy = median_policy

    def fit(self, X, Y, Z=None, external_X=None, external_Z=None):
        if Z is None:
            raise ValidationError("fit requires the confounder block Z")
        Y = as_matrix(Y, "Y")
        if Y.shape[1] != 2:
            raise ValidationError("Y must carry exactly two outcome columns")
        data = PairedDataset(Z=Z, X=X, y=Y[:, 0], w=Y[:, 1])
        has_external = external_X is not None or external_Z is not None
        if has_external and (external_X is None or external_Z is None):
            raise ValidationError("supply both external_X and external_Z")
        n_ext = None
        external = None
        if has_external:
            external = ExternalDataset(Z=external_Z, X=external_X)
            n_ext = external.n
        config = _resolve_config(
            data.n, data.q, n_ext, self.kernel_order,
            self.bandwidth, self.cutoff,
            self.external_bandwidth, self.external_cutoff,
        )
        self.config_ = config
        if external is None:
            estimate = estimate_r_plugin(data, config)
            self.r_ = estimate.r_hat
            self.std_err_ = estimate.std_err
            self.p_value_ = float("nan")
            self.n_splits_used_ = 0
        else:
            result = multi_split_inference(
                data,
                external,
                config,
                self.n_splits,
                self.r0,
                self.seed,
                median_policy=self.median_policy,
            )
            self.r_ = result.r_median
            self.std_err_ = result.median_estimate.std_err
            self.p_value_ = result.p_value
            self.n_splits_used_ = result.n_splits_used
        return self
