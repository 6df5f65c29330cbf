from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special

from lrfermion.filters import (
    FilterEvaluation,
    erf_filter,
    filter_fourier_check,
    fourier_quadrature,
    fourier_target,
    green_filter,
    green_filter_jumps,
    green_filter_log_abs,
    green_filter_monotone,
    sign_transform_by_quadrature,
    time_cutoff,
)


def test_erf_transform_example():
    val = fourier_quadrature("erf_sign", 1.0, 2.0)
    assert val.real == pytest.approx(0.99532, abs=1e-5)
    assert abs(val - special.erf(2.0)) <= 1e-6


def test_green_transform_example():
    z = 1j
    target = (1 - math.exp(-1)) / 1j
    assert complex(fourier_target("green", 1.0, 0.0, z)) == pytest.approx(target, abs=1e-15)
    assert abs(fourier_quadrature("green", 1.0, 0.0, z) - target) <= 1e-6


def test_erf_transform_against_midpoint_rule():
    # independent route: midpoint rule on a symmetric grid that avoids t = 0
    sigma, omega = 0.7, 1.3
    h = 1e-3
    t = h * (np.arange(-60_000, 60_000) + 0.5)
    val = np.sum(erf_filter(t, sigma) * np.exp(-1j * omega * t)) * h / (2 * math.pi)
    assert abs(val - special.erf(omega / sigma)) <= 1e-6


def test_green_filter_against_direct_formula():
    # where nothing overflows, the erfc/erfcx evaluation matches the literal definition
    sigma, z = 0.8, 0.3 - 0.4j
    gamma = 0.4
    t = np.array([-3.0, -0.5, 0.2, 1.0, 4.0])
    direct = 1j * math.pi * np.exp(1j * z * t) * (special.erf(sigma * t / 2 + gamma / sigma) - np.sign(t))
    assert np.allclose(green_filter(t, sigma, z), direct, rtol=1e-12, atol=1e-14)


def test_green_filter_log_magnitude_survives_large_times():
    val = green_filter_log_abs(np.array([500.0, -500.0]), 0.5, 3.0)
    assert np.all(np.isfinite(val))


@settings(max_examples=30, deadline=None)
@given(sigma=st.floats(0.1, 3.0), x=st.floats(-3, 3), y=st.floats(-3, 3))
def test_jumps_sum_to_two_pi(sigma, x, y):
    lo, hi = green_filter_jumps(sigma, complex(x, y))
    assert lo + hi == pytest.approx(2 * math.pi, rel=1e-12)
    gamma = -y
    assert lo == pytest.approx(math.pi * (1 - special.erf(gamma / sigma)), abs=1e-12)


@settings(max_examples=15, deadline=None)
@given(sigma=st.floats(0.2, 2.0), omega=st.floats(-5, 5))
def test_erf_fourier_residual(sigma, omega):
    assert filter_fourier_check("erf_sign", sigma, omega) <= 1e-6


@settings(max_examples=10, deadline=None)
@given(sigma=st.floats(0.2, 2.0), omega=st.floats(-5, 5), x=st.floats(-2, 2), y=st.floats(-2, 2))
def test_green_fourier_residual(sigma, omega, x, y):
    assert filter_fourier_check("green", sigma, omega, complex(x, y)) <= 1e-6


@settings(max_examples=30, deadline=None)
@given(sigma=st.floats(0.05, 5.0), x=st.floats(-5, 5), y=st.floats(-5, 5))
def test_green_filter_monotone(sigma, x, y):
    assert green_filter_monotone(sigma, complex(x, y))


def test_time_cutoff_bounds_tail():
    for sigma in (0.1, 1.0, 3.0):
        T = time_cutoff("erf_sign", sigma)
        assert abs(erf_filter(T, sigma)) < 1e-14
    T = time_cutoff("green", 0.5, 0.2 + 1.0j)
    assert max(green_filter_log_abs(np.array([T, -T]), 0.5, -1.0)) < math.log(1e-14)


def test_sign_transform_matches_erf():
    e = np.array([-2.0, -0.4, 0.3, 1.5])
    assert np.allclose(sign_transform_by_quadrature(e, 0.5), special.erf(e / 0.5), atol=1e-12)


def test_filter_validation():
    with pytest.raises(ValueError):
        FilterEvaluation("erf_sign", 0.0)
    with pytest.raises(ValueError):
        FilterEvaluation("green", 1.0)
    f = FilterEvaluation("green", 1.0, 1j)
    assert f.gamma == -1.0
