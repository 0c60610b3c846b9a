import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from kramerslab.cycling import (CyclingFitError, CyclingParams, density_grid, exit_density, fit_cycling,
                                gumbel_kernel, kernel_mass, mode_in_period, periodic_p, sample_angles)


def test_kernel_values():
    assert gumbel_kernel(0.0) == pytest.approx(0.5 * math.exp(-0.5), rel=1e-15)
    assert gumbel_kernel(-20.0) <= 1e-15 and gumbel_kernel(20.0) <= 1e-15
    assert np.all(np.isfinite(gumbel_kernel(np.array([-1e3, 1e3]))))


def test_kernel_mode_at_zero():
    # A'(x) = 0 where 2 = e^{-2x}, i.e. x = -log(2)/2
    xs = np.linspace(-1, 1, 200001)
    assert xs[np.argmax(gumbel_kernel(xs))] == pytest.approx(-0.5 * math.log(2), abs=1e-5)


def test_kernel_mass(oracle):
    assert abs(kernel_mass() - 0.5) <= 1e-8
    assert float(oracle["gumbel_mass"]) == pytest.approx(0.5, abs=1e-15)


def test_periodic_mass_per_period():
    for lt in (0.5, 2.0, 7.0):
        val, _ = integrate.quad(lambda t: float(periodic_p(t, lt)), 0, lt, epsabs=1e-13, epsrel=1e-13, limit=200)
        assert val == pytest.approx(0.5, rel=1e-10)


@given(st.integers(-40, 40).map(lambda k: k / 8), st.integers(-5, 5))
def test_exact_periodicity(theta, k):
    # dyadic inputs: the period reduction is exact, so the values agree bit for bit
    assert periodic_p(theta + 2.0 * k, 2.0) == periodic_p(theta, 2.0)


@given(st.floats(-30, 30), st.floats(0.3, 10))
def test_periodicity_general(theta, lt):
    assert periodic_p(theta + lt, lt) == pytest.approx(periodic_p(theta, lt), rel=1e-12, abs=1e-300)


def test_long_period_reduces_to_kernel():
    assert periodic_p(0.0, 40.0) == pytest.approx(float(gumbel_kernel(0.0)), rel=1e-15)


def test_density_support_and_mass():
    cp = CyclingParams.from_scales(lambda_t=2.0, lambda_tk=10.0, theta0=1.0, eps=0.01)
    with pytest.raises(ValueError):
        exit_density(1.0, cp)
    th, p = density_grid(cp, 400.0, 400001)
    assert np.all(p >= 0)
    # half a unit of mass per period, damped by the transient factor
    expected = 0.5 / cp.lambda_t * (1 - 1 / (cp.lambda_tk + 1))
    assert integrate.trapezoid(p, th) == pytest.approx(expected, rel=5e-3)


def test_mode_shifts_by_one_when_eps_divided_by_e():
    a = CyclingParams.from_scales(lambda_t=2.0, lambda_tk=1e6, theta0=0.0, eps=0.01)
    b = CyclingParams.from_scales(lambda_t=2.0, lambda_tk=1e6, theta0=0.0, eps=0.01 / math.e)
    # far from theta0 the transient factor is 1 to double precision
    m0 = mode_in_period(a, 40.0)
    m1 = mode_in_period(b, 40.0 + 1.0)
    assert m1 - m0 == pytest.approx(1.0, abs=1e-9)
    assert b.shift - a.shift == pytest.approx(1.0, abs=1e-14)


def test_params_round_trip():
    cp = CyclingParams.from_scales(lambda_t=1.5, lambda_tk=8.0, theta0=0.25, eps=1e-3)
    assert CyclingParams.from_dict(cp.to_dict()) == cp
    assert cp.lambda_t == pytest.approx(1.5)
    assert cp.lambda_tk == pytest.approx(8.0)


def test_sampling_matches_density():
    cp = CyclingParams.from_scales(lambda_t=2.0, lambda_tk=10.0, theta0=1.0, eps=0.01)
    s = sample_angles(cp, 20000, np.random.default_rng(0))
    assert s.min() > cp.theta0
    counts, edges = np.histogram(s, bins=40, range=(1.0, 21.0))
    th, p = density_grid(cp, 400.0, 400001)
    total = integrate.trapezoid(p, th)
    cdf = integrate.cumulative_trapezoid(p, th, initial=0.0) / total
    expected = np.diff(np.interp(edges, th, cdf)) * s.size
    assert np.max(np.abs(counts - expected) / np.sqrt(expected + 1)) < 5


def test_parameter_recovery():
    truth = CyclingParams.from_scales(lambda_t=2.0, lambda_tk=10.0, theta0=1.0, eps=0.01)
    s = sample_angles(truth, 100000, np.random.default_rng(7))
    counts, edges = np.histogram(s, bins=200, range=(0.0, 60.0))
    fit = fit_cycling(edges, counts, truth)
    assert fit.params.lambda_t == pytest.approx(2.0, rel=0.05)
    assert fit.params.lambda_tk == pytest.approx(10.0, rel=0.05)
    assert fit.params.theta0 == pytest.approx(1.0, abs=0.05)
    assert not fit.poor


def test_fit_is_shift_equivariant():
    truth = CyclingParams.from_scales(lambda_t=2.0, lambda_tk=10.0, theta0=1.0, eps=0.01)
    s = sample_angles(truth, 50000, np.random.default_rng(3))
    counts, edges = np.histogram(s, bins=150, range=(0.0, 45.0))
    a = fit_cycling(edges, counts, truth)
    b = fit_cycling(edges + 2.0, counts, truth)
    assert b.params.theta0 - a.params.theta0 == pytest.approx(2.0, abs=1e-3)


def test_uniform_histogram_is_poor():
    truth = CyclingParams.from_scales(lambda_t=2.0, lambda_tk=10.0, theta0=1.0, eps=0.01)
    edges = np.linspace(0, 60, 201)
    fit = fit_cycling(edges, np.full(200, 500), truth)
    assert fit.poor


def test_fit_needs_data():
    truth = CyclingParams.from_scales(lambda_t=2.0, lambda_tk=10.0, theta0=1.0, eps=0.01)
    edges = np.linspace(0, 60, 201)
    counts = np.zeros(200, dtype=int)
    counts[:5] = 10
    with pytest.raises(CyclingFitError):
        fit_cycling(edges, counts, truth)
