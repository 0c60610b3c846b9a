"""Acceptance suite: one PASS/FAIL line per criterion (see the terminal summary).

Criteria that the implementation does not meet are strict xfails: the line
still reads FAIL, and the suite turns red if they ever start passing.
"""
import math
import time

import numpy as np
import pytest

from kramerslab.action import DiscretePath, gradient_decomposition, minimize_action
from kramerslab.cycling import CyclingParams, fit_cycling, kernel_mass, mode_in_period, periodic_p, sample_angles
from kramerslab.exact1d import kramers_asymptotic_1d, mean_hitting_1d
from kramerslab.fieldsolver import ball, capacity_from_field, committor_grid, generator_spectrum_1d, \
    mean_time_potential_theory, outside
from kramerslab.landscape import HierarchyError, find_critical_points, metastable_order, minima, transition_spec
from kramerslab.potential import builtin
from kramerslab.rate import eyring_kramers, pitchfork_prefactor, psi_minus, psi_plus
from kramerslab.sde import Ball, SimConfig, sample_hitting_times
from kramerslab.spde import (continuum_eigenvalues, discretize_allen_cahn, linearization_spectrum,
                             spde_prefactor, spde_prefactor_bifurcation, truncated_product)

QUARTIC = builtin("quartic1d")


@pytest.fixture(scope="module")
def mc_runs():
    """Hitting-time samples shared by criteria 2 and 3: n=2000, dt=1e-3, x0=-1, target ball (1, 0.1)."""
    out, t0 = {}, time.perf_counter()
    for eps in (0.2, 0.15):
        cfg = SimConfig(eps, 1e-3, 50 * 200.0, Ball([1.0], 0.1), seed=1, n=2000)
        out[eps] = sample_hitting_times(QUARTIC, [-1.0], cfg)
    out["runtime"] = time.perf_counter() - t0
    return out


def test_criterion_1_kramers_1d(acceptance):
    t0 = time.perf_counter()
    errs = []
    for eps in (0.2, 0.1, 0.05):
        exact = mean_hitting_1d(QUARTIC, -1.0, 1.0, eps)
        errs.append(abs(exact / kramers_asymptotic_1d(QUARTIC, 1.0, 0.0, eps) - 1))
    runtime = time.perf_counter() - t0
    ok = errs[0] > errs[1] > errs[2] and errs[2] <= 0.15 and runtime < 10
    assert acceptance("1", ok, "1D quadrature vs Kramers: rel. errors "
                      + ", ".join(f"{e:.3f}" for e in errs) + f" (eps 0.2, 0.1, 0.05); {runtime:.1f} s")


@pytest.mark.slow
def test_criterion_2_mc_vs_quadrature(acceptance, mc_runs):
    parts, ok = [], mc_runs["runtime"] < 300
    for eps in (0.2, 0.15):
        hs = mc_runs[eps]
        ref = mean_hitting_1d(QUARTIC, 0.9, -1.0, eps)
        z = (hs.mean - ref) / hs.stderr
        ok &= abs(z) <= 3 and hs.valid
        parts.append(f"eps {eps}: {hs.mean:.3f} +- {hs.stderr:.3f} vs {ref:.3f} ({z:+.2f} se)")
    assert acceptance("2", ok, "MC vs quadrature: " + "; ".join(parts) + f"; {mc_runs['runtime']:.0f} s")


@pytest.mark.slow
@pytest.mark.xfail(strict=True, reason="pre-asymptotic: the exact killed-generator law is 0.063 from "
                                       "Exp(1) at eps=0.15")
def test_criterion_3_exponential_law(acceptance, mc_runs):
    ks = mc_runs[0.15].ks
    assert acceptance("3", ks <= 0.05, f"KS distance of tau/E[tau] at eps 0.15, n=2000: {ks:.4f} (bound 0.05)")


@pytest.mark.xfail(strict=True, reason="the O(sqrt(eps)|log eps|) correction is itself about 20% at eps=0.1")
def test_criterion_4a_potential_theory_1d(acceptance):
    eps = 0.1
    est = mean_time_potential_theory(QUARTIC, [-1.0], ball([1.0], 0.1), eps, 1 / 256, [(-2.5, 2.5)])
    ek = eyring_kramers(transition_spec(QUARTIC, -1, 1), eps).mean_time
    err = abs(est.mean_time / ek - 1)
    info = abs(est.laplace_mean_time / ek - 1)
    assert acceptance("4a", err <= 0.20, f"grid capacity mean time {est.mean_time:.2f} vs Eyring-Kramers {ek:.2f}: "
                      f"{100 * err:.1f}% (bound 20%; Laplace-numerator variant {100 * info:.1f}%)")


def test_criterion_4b_concentric_capacity(acceptance):
    eps = 0.5
    flat = builtin("custom_polynomial", dim=2, terms=[[0.0, [0, 0]]])
    f = committor_grid(flat, [(-2, 2), (-2, 2)], ball([0, 0], 0.5), outside([0, 0], 2.0), eps, 1 / 128)
    exact = 2 * math.pi * eps / math.log(4.0)
    err = abs(capacity_from_field(f) / exact - 1)
    assert acceptance("4b", err <= 0.02, f"concentric-circle capacity at h=1/128: {100 * err:.2f}% (bound 2%)")


def test_criterion_5_pitchfork(acceptance):
    psi0 = math.gamma(0.25) / (2 ** 1.25 * math.sqrt(math.pi))
    checks = {
        "psi+(0)": abs(psi_plus(0.0) - psi0) <= 1e-6,
        "psi+(100)": abs(psi_plus(100.0) - 1) <= 1e-2,
        "psi-(100)": abs(psi_minus(100.0) - 2) <= 2e-2,
    }
    ratio = (pitchfork_prefactor(-1.0, 0.0, [2.0], 1.0, 1.0, 1e-4).prefactor
             / pitchfork_prefactor(-1.0, 0.0, [2.0], 1.0, 1.0, 16e-4).prefactor)
    checks["C(eps)/C(16eps)"] = abs(ratio - 0.5) <= 0.02 * 0.5
    a = pitchfork_prefactor(-1.0, 1e-12, [2.0], 1.0, 1.0, 1e-3).prefactor
    b = pitchfork_prefactor(-1.0, -1e-12, [2.0], 1.0, 1.0, 1e-3).prefactor
    checks["continuity"] = abs(a - b) <= 1e-6 * a
    failed = [k for k, v in checks.items() if not v]
    assert acceptance("5", not failed, f"pitchfork crossover: psi+(0)={psi_plus(0.0):.10f}, "
                      f"psi+(100)={psi_plus(100.0):.4f}, psi-(100)={psi_minus(100.0):.4f}, "
                      f"ratio {ratio:.5f}, jump {abs(a - b) / a:.1e}" + (f"; failed {failed}" if failed else ""))


def test_criterion_6_action(acceptance):
    rng = np.random.default_rng(2024)
    worst = 0.0
    for trial in range(20):
        d = 1 + trial % 2
        p = QUARTIC if d == 1 else builtin("doublewell2d")
        n = 400
        base = np.linspace(-1, 1, n + 1)[:, None] * np.ones(d)
        wiggle = np.cumsum(rng.normal(size=(n + 1, d)), axis=0) / math.sqrt(n)
        path = DiscretePath(3.0 / n, base + 0.3 * np.sin(np.linspace(0, math.pi, n + 1))[:, None] * wiggle)
        dec = gradient_decomposition(path, p)
        worst = max(worst, abs(dec.defect) / (path.dt ** 2 * (1 + dec.forward + dec.reversed)))
    a1 = minimize_action(QUARTIC, -1, 0, n=400).action
    a2 = minimize_action(builtin("doublewell2d"), [-1, 0], [0, 0], n=400).action
    ok = worst <= 50 and abs(a1 / 0.5 - 1) <= 0.02 and abs(a2 / 0.5 - 1) <= 0.05
    assert acceptance("6", ok, f"decomposition defect <= {worst:.2f} dt^2 on 20 random paths; "
                      f"action 1D {a1:.5f}, 2D {a2:.5f} (target 0.5)")


def test_criterion_7_spectral_gap(acceptance):
    parts, ok = [], True
    for eps in (0.2, 0.1):
        rep = generator_spectrum_1d(QUARTIC, eps)
        gap = float(np.max(rep.relative_gap()))
        small = rep.count_small(0.5)
        ok &= small == 1 and gap <= 1e-8 and 0.1 <= abs(rep.conjugated[1]) * math.exp(0.25 / eps) <= 10
        parts.append(f"eps {eps}: lambda1={rep.conjugated[1]:.4f}, {small} small, gap {gap:.1e}")
    assert acceptance("7", ok, "generator spectrum: " + "; ".join(parts))


def test_criterion_8_spde(acceptance):
    closed = spde_prefactor(1.0)
    prod_err = abs(truncated_product(1.0, 10 ** 4) / closed - 1)
    bif_err = abs(spde_prefactor_bifurcation(1.0, 1e-6) / closed - 1)
    ratio = spde_prefactor_bifurcation(math.pi, 1e-4) / spde_prefactor_bifurcation(math.pi, 16e-4)
    orders = []
    for base, state in ((-1.0, 0.0), (2.0, 1.0)):
        errs = []
        for N in (64, 128, 256):
            cp = discretize_allen_cahn(2.0, N)
            ev = linearization_spectrum(cp, cp.constant(state), m=6)
            errs.append(np.max(np.abs(ev - continuum_eigenvalues(2.0, base, 6))))
        orders += [errs[0] / errs[1], errs[1] / errs[2]]
    ok = (prod_err <= 1e-3 and bif_err <= 1e-3 and abs(ratio - 0.5) <= 0.01
          and all(abs(r / 4 - 1) <= 0.05 for r in orders))
    assert acceptance("8", ok, f"SPDE: product {prod_err:.1e}, bifurcation {bif_err:.1e}, "
                      f"C(eps)/C(16eps) at L=pi {ratio:.4f}, refinement ratios "
                      + ", ".join(f"{r:.3f}" for r in orders))


def test_criterion_9_cycling(acceptance):
    mass = kernel_mass()
    grid = np.arange(-40, 41) / 8
    periodic = all(periodic_p(t + 2.0 * k, 2.0) == periodic_p(t, 2.0) for t in grid for k in (-3, 1, 5))
    a = CyclingParams.from_scales(lambda_t=2.0, lambda_tk=1e6, theta0=0.0, eps=0.01)
    b = CyclingParams.from_scales(lambda_t=2.0, lambda_tk=1e6, theta0=0.0, eps=0.01 / math.e)
    shift = mode_in_period(b, 41.0) - mode_in_period(a, 40.0)
    truth = CyclingParams.from_scales(lambda_t=2.0, lambda_tk=10.0, theta0=1.0, eps=0.01)
    counts, edges = np.histogram(sample_angles(truth, 100000, np.random.default_rng(7)), bins=200, range=(0.0, 60.0))
    fit = fit_cycling(edges, counts, truth).params
    rec = max(abs(fit.lambda_t / 2 - 1), abs(fit.lambda_tk / 10 - 1), abs(fit.theta0 - 1))
    ok = abs(mass - 0.5) <= 1e-8 and periodic and abs(shift - 1) <= 1e-9 and rec <= 0.05
    assert acceptance("9", ok, f"cycling: kernel mass {mass:.12f}, exact periodicity {periodic}, "
                      f"mode shift {shift:.10f}, recovery error {100 * rec:.2f}%")


def test_criterion_10_hierarchy(acceptance):
    tw = builtin("threewell1d")
    order = metastable_order(minima(find_critical_points(tw, [(-3, 3)])), tw, theta=0.01)
    locs = [round(float(c.location[0]), 6) for c in order.order]
    try:
        metastable_order(minima(find_critical_points(QUARTIC, [(-2, 2)])), QUARTIC, theta=0.01)
        refused = False
    except HierarchyError:
        refused = True
    ok = locs == [2.2, -2.0, 0.0] and refused
    assert acceptance("10", ok, f"three-well order {locs} (x3 < x1 < x2); symmetric double well refused: {refused}")
