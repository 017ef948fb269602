"""Kernel density and Nadaraya-Watson conditional-mean estimates.

All smoothers share one blockwise pass over the pairwise kernel weights
so that large reference cohorts never materialize an N x N matrix.
"""

from __future__ import annotations

import numpy as np

from .exceptions import VanishingDenominatorError
from .kernels import KernelFunction
from .validation import ValidationError, as_matrix, check_positive

# Cap on the number of pairwise weights held in memory at once.
_BLOCK_ENTRIES = 8_000_000


def weight_block(
    z_query: np.ndarray,
    z_ref: np.ndarray,
    bandwidth: float,
    kernel: KernelFunction,
) -> np.ndarray:
    """Pairwise product-kernel weights K((z_i - z_j)/a), shape (nq, nr)."""
    q = z_query.shape[1]
    if kernel.is_gaussian:
        # Fused path: the product of Gaussian bumps is a single Gaussian
        # in the squared distance.
        sq = (
            np.sum(z_query**2, axis=1)[:, None]
            + np.sum(z_ref**2, axis=1)[None, :]
            - 2.0 * (z_query @ z_ref.T)
        )
        np.maximum(sq, 0.0, out=sq)
        return np.exp(sq / (-2.0 * bandwidth**2)) / (2.0 * np.pi) ** (q / 2.0)
    weights = kernel((z_query[:, None, 0] - z_ref[None, :, 0]) / bandwidth)
    for d in range(1, q):
        weights *= kernel((z_query[:, None, d] - z_ref[None, :, d]) / bandwidth)
    return weights


def weight_sums(
    Z: np.ndarray,
    bandwidth: float,
    kernel: KernelFunction,
    targets: np.ndarray | None = None,
    leave_one_out: bool = False,
) -> tuple[np.ndarray, np.ndarray | None]:
    """Row sums of the kernel weight matrix and, optionally, K @ targets.

    Queries and references are the same sample; with `leave_one_out` the
    constant self weight k(0)^q is removed from both accumulators.
    """
    n, q = Z.shape
    num = None if targets is None else np.zeros((n, targets.shape[1]))
    denom = np.zeros(n)
    block = max(1, _BLOCK_ENTRIES // n)
    for start in range(0, n, block):
        stop = min(start + block, n)
        w = weight_block(Z[start:stop], Z, bandwidth, kernel)
        denom[start:stop] = w.sum(axis=1)
        if targets is not None:
            num[start:stop] = w @ targets
    if leave_one_out:
        self_weight = kernel.at_zero**q
        denom -= self_weight
        if targets is not None:
            num -= self_weight * targets
    return denom, num


def density_estimate(
    Z,
    bandwidth: float,
    kernel: KernelFunction,
    leave_one_out: bool = False,
) -> np.ndarray:
    """Kernel density at every sample point: (n a^q)^-1 sum_j K_ij.

    The j = i term is included by default; the leave-one-out variant
    drops it and rescales by n - 1.
    """
    Z = as_matrix(Z, "Z")
    check_positive(bandwidth, "bandwidth")
    n, q = Z.shape
    if leave_one_out and n < 2:
        raise ValidationError("leave-one-out density needs n >= 2")
    denom, _ = weight_sums(Z, bandwidth, kernel, leave_one_out=leave_one_out)
    scale = (n - 1 if leave_one_out else n) * bandwidth**q
    return denom / scale


def nw_regress(
    targets,
    Z,
    bandwidth: float,
    kernel: KernelFunction,
    leave_one_out: bool = False,
) -> np.ndarray:
    """Nadaraya-Watson estimate sum_j t_j K_ij / sum_j K_ij, column-wise.

    Returns an array matching the shape of `targets` (one smoothed
    column per target column).
    """
    Z = as_matrix(Z, "Z")
    check_positive(bandwidth, "bandwidth")
    t = np.asarray(targets, dtype=float)
    squeeze = t.ndim == 1
    t2 = as_matrix(t, "targets")
    if t2.shape[0] != Z.shape[0]:
        raise ValidationError("targets and Z must share the same row count")
    denom, num = weight_sums(Z, bandwidth, kernel, targets=t2, leave_one_out=leave_one_out)
    _check_denominator(denom)
    fitted = num / denom[:, None]
    return fitted[:, 0] if squeeze else fitted


def nw_predict(
    Z_train,
    targets,
    Z_query,
    bandwidth: float,
    kernel: KernelFunction,
) -> np.ndarray:
    """Nadaraya-Watson estimate at out-of-sample covariate points."""
    Z_train = as_matrix(Z_train, "Z_train")
    Z_query = as_matrix(Z_query, "Z_query")
    if Z_train.shape[1] != Z_query.shape[1]:
        raise ValidationError("train and query covariates must share q")
    check_positive(bandwidth, "bandwidth")
    t = np.asarray(targets, dtype=float)
    squeeze = t.ndim == 1
    t2 = as_matrix(t, "targets")
    w = weight_block(Z_query, Z_train, bandwidth, kernel)
    denom = w.sum(axis=1)
    _check_denominator(denom)
    fitted = (w @ t2) / denom[:, None]
    return fitted[:, 0] if squeeze else fitted


def _check_denominator(denom: np.ndarray) -> None:
    if np.any(denom <= 0.0):
        bad = int(np.argmax(denom <= 0.0))
        raise VanishingDenominatorError(
            f"kernel weight sum vanished at sample {bad}; "
            "increase the bandwidth or check for isolated points"
        )
