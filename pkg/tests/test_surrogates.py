"""Global-bound and tangency guarantees for the SCA surrogates."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uavtraj.surrogates import (log_affine_tangent, norm_sq_tangent,
                                rate_surrogate, rate_surrogate_arrays,
                                total_signal_log_tangent)

GAMMA0 = 1e8  # paper-scale SNR numerator: P * beta0 / sigma^2
H2 = 100.0 ** 2


def true_rate(gamma0, h2, x):
    return np.log2(1.0 + gamma0 / (h2 + x))


# --------------------------------------------------------------------------
# Rate surrogate

def test_rate_surrogate_tight_at_expansion_point():
    sur = rate_surrogate(GAMMA0, H2, 2.5e5)
    assert sur.evaluate(2.5e5) == pytest.approx(true_rate(GAMMA0, H2, 2.5e5),
                                                abs=1e-12)
    assert sur.slope < 0.0


def test_rate_surrogate_example_values():
    # zenith expansion: value log2(1 + 1e4), slope -1e4/(ln2*1e4*(1e4+1e8))
    sur = rate_surrogate(1e8, 1e4, 0.0)
    assert sur.constant == pytest.approx(math.log2(1.0 + 1e4), rel=1e-12)
    expect_slope = -1e8 / (math.log(2.0) * 1e4 * (1e4 + 1e8))
    assert sur.slope == pytest.approx(expect_slope, rel=1e-12)


def test_rate_surrogate_zero_power_link():
    sur = rate_surrogate(0.0, H2, 3.0e4)
    assert sur.constant == 0.0
    assert sur.slope == 0.0
    assert sur.evaluate(1e6) == 0.0


@settings(max_examples=500, deadline=None)
@given(st.floats(1e4, 1e12), st.floats(1e2, 1e6),
       st.floats(0.0, 1e7), st.floats(0.0, 1e7))
def test_rate_surrogate_is_global_under_estimator(gamma0, h2, x_ref, x):
    sur = rate_surrogate(gamma0, h2, x_ref)
    assert sur.evaluate(x) <= true_rate(gamma0, h2, x) + 1e-9
    assert sur.evaluate(x_ref) == pytest.approx(true_rate(gamma0, h2, x_ref),
                                                abs=1e-12)


def test_rate_surrogate_arrays_match_scalar():
    x_ref = np.array([0.0, 1e4, 2e6])
    const, slope = rate_surrogate_arrays(GAMMA0, H2, x_ref)
    for i, x in enumerate(x_ref):
        sc = rate_surrogate(GAMMA0, H2, float(x))
        assert const[i] == pytest.approx(sc.constant, rel=1e-15)
        assert slope[i] == pytest.approx(sc.slope, rel=1e-15)


# --------------------------------------------------------------------------
# Norm-squared tangent

def test_norm_sq_tangent_example():
    tan = norm_sq_tangent([3.0, 4.0])
    assert tan.evaluate([0.0, 0.0]) == pytest.approx(-25.0)
    assert tan.evaluate([3.0, 4.0]) == pytest.approx(25.0)
    assert tan.coeff == pytest.approx([6.0, 8.0])
    assert tan.offset == pytest.approx(-25.0)


@settings(max_examples=500, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=4),
       st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=4))
def test_norm_sq_tangent_is_global_under_estimator(r, x):
    n = min(len(r), len(x))
    r, x = np.asarray(r[:n]), np.asarray(x[:n])
    tan = norm_sq_tangent(r)
    assert tan.evaluate(x) <= float(x @ x) + 1e-9
    assert tan.evaluate(r) == pytest.approx(float(r @ r), abs=1e-9)


# --------------------------------------------------------------------------
# Total-signal log tangent (multi-UAV signal term)

@settings(max_examples=300, deadline=None)
@given(st.integers(2, 4), st.integers(0, 2 ** 31 - 1))
def test_total_signal_log_tangent_under_estimates(m, seed):
    rng = np.random.default_rng(seed)
    coeffs = rng.uniform(1e-8, 1e-5, m)
    h2 = rng.uniform(1e3, 4e4, m)
    noise = 1e-14
    x_ref = rng.uniform(0.0, 4e6, m)
    x = rng.uniform(0.0, 4e6, m)

    def a_of(xv):
        return math.log2(noise + float(np.sum(coeffs / (h2 + xv))))

    value, grad, constant = total_signal_log_tangent(coeffs, h2, noise, x_ref)
    assert value == pytest.approx(a_of(x_ref), rel=1e-12)
    assert constant + float(grad @ x_ref) == pytest.approx(value, rel=1e-12)
    assert constant + float(grad @ x) <= a_of(x) + 1e-9
    assert np.all(grad <= 0.0)


def test_total_signal_log_tangent_batched():
    coeffs = np.full((3, 2), 1e-6)
    h2 = np.full((3, 2), 1e4)
    x_ref = np.arange(6.0).reshape(3, 2) * 1e4
    value, grad, constant = total_signal_log_tangent(coeffs, h2, 1e-14, x_ref)
    assert value.shape == (3,)
    assert grad.shape == (3, 2)
    for i in range(3):
        v, g, c = total_signal_log_tangent(coeffs[i], h2[i], 1e-14, x_ref[i])
        assert value[i] == pytest.approx(v, rel=1e-14)
        assert grad[i] == pytest.approx(g, rel=1e-14)
        assert constant[i] == pytest.approx(c, rel=1e-14)


# --------------------------------------------------------------------------
# Log-affine tangent (power block interference term)

@settings(max_examples=300, deadline=None)
@given(st.integers(1, 4), st.integers(0, 2 ** 31 - 1))
def test_log_affine_tangent_over_estimates(m, seed):
    rng = np.random.default_rng(seed)
    weights = rng.uniform(1e-12, 1e-9, m)
    offset = 1e-14
    p_ref = rng.uniform(0.0, 0.1, m)
    p = rng.uniform(0.0, 0.1, m)

    def b_of(pv):
        return math.log2(offset + float(weights @ pv))

    value, grad, constant = log_affine_tangent(weights, offset, p_ref)
    assert value == pytest.approx(b_of(p_ref), rel=1e-12)
    assert constant + float(grad @ p) >= b_of(p) - 1e-9
    assert np.all(grad >= 0.0)


def test_log_affine_tangent_exact_for_single_point():
    value, grad, constant = log_affine_tangent([1e-10], 1e-14, [0.05])
    assert value == pytest.approx(math.log2(1e-14 + 1e-10 * 0.05), rel=1e-12)
    assert grad[0] == pytest.approx(1e-10 / (math.log(2.0)
                                             * (1e-14 + 1e-10 * 0.05)),
                                    rel=1e-12)
