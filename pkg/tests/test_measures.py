"""Correlation measures: closed-form cases, symmetry, scale invariance."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from microcorr import genetic_r1, genetic_r2, microbial_correlation
from microcorr.exceptions import DegenerateDirectionError

from conftest import random_spd


def test_identity_direction_gives_one():
    e1 = np.array([1.0, 0.0, 0.0])
    assert microbial_correlation(e1, e1, np.eye(3)) == 1.0


def test_orthogonal_directions_give_zero():
    e1 = np.array([1.0, 0.0, 0.0])
    e2 = np.array([0.0, 1.0, 0.0])
    assert microbial_correlation(e1, e2, np.eye(3)) == pytest.approx(0.0, abs=1e-15)


def test_designed_coefficient_pair_gives_point_four():
    r0 = 0.4
    beta = np.sqrt(3.0) / 3.0 * np.array([1, 1, 1, 0, 0, 0], dtype=float)
    gamma = np.concatenate(
        [np.full(3, r0 / np.sqrt(3.0)), np.full(3, np.sqrt((1 - r0**2) / 3.0))]
    )
    assert microbial_correlation(beta, gamma, np.eye(6)) == pytest.approx(
        r0, abs=1e-12
    )


def test_degenerate_direction_raises():
    with pytest.raises(DegenerateDirectionError):
        microbial_correlation(np.zeros(2), np.ones(2), np.eye(2))


def test_genetic_r1_hand_values():
    assert genetic_r1(np.array([1.0, 1.0]), np.array([1.0, 1.0])) == pytest.approx(1.0)
    assert genetic_r1(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == pytest.approx(
        0.0, abs=1e-15
    )
    assert genetic_r1(np.array([1.0, 0.0]), np.array([1.0, 1.0])) == pytest.approx(
        1.0 / np.sqrt(2.0), abs=1e-12
    )


def test_genetic_r2_reduces_to_microbial_correlation_when_sigma_zero(rng):
    phi = random_spd(rng, 4)
    beta, gamma = rng.normal(size=4), rng.normal(size=4)
    assert genetic_r2(beta, gamma, phi) == pytest.approx(
        microbial_correlation(beta, gamma, phi), abs=1e-14
    )


def test_measures_can_disagree_on_zero():
    # Orthogonal directions give R = R1 = 0, yet the total-covariance
    # measure is nonzero once the noise covariance couples them.
    beta = np.array([1.0, 0.0])
    gamma = np.array([0.0, 1.0])
    sigma = np.array([[1.0, 0.9], [0.9, 1.0]])
    assert microbial_correlation(beta, gamma, np.eye(2)) == pytest.approx(0, abs=1e-15)
    assert genetic_r1(beta, gamma) == pytest.approx(0.0, abs=1e-15)
    assert abs(genetic_r2(beta, gamma, np.eye(2) + sigma)) > 0.2


_vectors = arrays(
    np.float64,
    4,
    elements=st.floats(-5, 5, allow_nan=False).filter(lambda v: abs(v) > 1e-3),
)


@settings(max_examples=200, deadline=None)
@given(beta=_vectors, gamma=_vectors, seed=st.integers(0, 2**31 - 1))
def test_range_and_symmetry_over_random_spd(beta, gamma, seed):
    phi = random_spd(np.random.default_rng(seed), 4)
    r = microbial_correlation(beta, gamma, phi)
    assert -1.0 <= r <= 1.0
    assert r == microbial_correlation(gamma, beta, phi)


@settings(max_examples=100, deadline=None)
@given(
    beta=_vectors,
    gamma=_vectors,
    scale=st.floats(0.01, 100, allow_nan=False),
    seed=st.integers(0, 2**31 - 1),
)
def test_positive_scale_invariance(beta, gamma, scale, seed):
    phi = random_spd(np.random.default_rng(seed), 4)
    r = microbial_correlation(beta, gamma, phi)
    assert microbial_correlation(scale * beta, gamma, phi) == pytest.approx(
        r, abs=1e-10
    )
    assert microbial_correlation(-scale * beta, gamma, phi) == pytest.approx(
        -r, abs=1e-10
    )
