import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import qmc

from kramerslab.potential import (BUILTIN_NAMES, THREEWELL_CRITICAL_POINTS, Potential, PotentialError,
                                  PotentialParams, builtin, check_derivatives, make_builtin)

BUILTINS = [
    builtin("quartic1d"),
    builtin("threewell1d"),
    builtin("doublewell2d"),
    builtin("pitchfork_normal_form", lambda1=-1.0, lambda2=0.5, C4=1.0, d=3),
    builtin("custom_polynomial", dim=2, terms=[[1.0, [4, 0]], [-1.0, [2, 0]], [0.5, [1, 2]], [1.0, [0, 4]]]),
]


def test_quartic_values():
    p = builtin("quartic1d")
    assert p.v(1.0) == -0.25
    assert p.dv(1.0) == 0.0
    assert p.d2v(1.0) == 2.0
    assert p.v(0.0) == 0.0 and p.dv(0.0) == 0.0 and p.d2v(0.0) == -1.0


def test_pitchfork_origin():
    p = builtin("pitchfork_normal_form", lambda1=-1.0, lambda2=0.5, C4=1.0, d=2)
    x = np.zeros(2)
    assert p.value(x) == 0.0
    assert np.all(p.gradient(x) == 0.0)
    assert np.allclose(np.linalg.eigvalsh(p.hessian(x)), [-1.0, 0.5], atol=0, rtol=0)


def test_threewell_critical_points():
    p = builtin("threewell1d")
    for x in THREEWELL_CRITICAL_POINTS:
        assert abs(p.dv(x)) < 1e-12
    assert p.v(0.0) == 0.0


def test_threewell_values_against_exact_integration(oracle):
    p = builtin("threewell1d")
    for x, v in oracle["threewell_values"].items():
        assert p.v(float(x)) == pytest.approx(v, rel=1e-13, abs=1e-14)


def test_doublewell2d_separable():
    p = builtin("doublewell2d")
    x = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 0.0]])
    assert np.allclose(p.value(x), [-0.25, -0.25, 0.0])
    assert np.allclose(np.linalg.eigvalsh(p.hessian(x[2])), [-1.0, 1.0])


@pytest.mark.parametrize("name,x", [("quartic1d", [0.3]), ("doublewell2d", [0.2, -0.4])])
def test_check_derivatives_examples(name, x):
    r = check_derivatives(builtin(name), x, 1e-5)
    assert r["gradient"] <= 1e-6 and r["hessian"] <= 1e-6


def test_check_derivatives_symmetric_point():
    r = check_derivatives(builtin("quartic1d"), [0.0], 1e-5)
    assert r["gradient"] <= 1e-15


def test_check_derivatives_rejects_bad_step():
    with pytest.raises(ValueError):
        check_derivatives(builtin("quartic1d"), [0.0], 0.0)


@pytest.mark.parametrize("p", BUILTINS, ids=lambda p: p.name)
def test_derivatives_on_quasirandom_points(p):
    pts = qmc.scale(qmc.Sobol(p.dim, seed=0).random(128)[:100], [-2.0] * p.dim, [2.0] * p.dim)
    for x in pts:
        r = check_derivatives(p, x, 1e-5)
        tol = 1e-6 * (1 + r["grad_norm"])
        assert r["gradient"] <= tol and r["hessian"] <= tol


@pytest.mark.parametrize("p", BUILTINS, ids=lambda p: p.name)
def test_hessian_symmetric(p):
    pts = np.random.default_rng(0).uniform(-2, 2, size=(50, p.dim))
    H = p.hessian(pts)
    assert np.all(np.abs(H - np.swapaxes(H, -1, -2)) <= 1e-10 * (1 + np.abs(H)))


@given(st.floats(-50, 50, allow_nan=False))
def test_quartic_even(x):
    p = builtin("quartic1d")
    assert p.v(x) == pytest.approx(p.v(-x), rel=4e-16, abs=1e-300)
    assert p.dv(x) == pytest.approx(-p.dv(-x), rel=4e-16, abs=1e-300)


def test_batched_shapes():
    p = builtin("doublewell2d")
    x = np.zeros((4, 3, 2))
    assert p.value(x).shape == (4, 3)
    assert p.gradient(x).shape == (4, 3, 2)
    assert p.hessian(x).shape == (4, 3, 2, 2)
    assert p.laplacian(x).shape == (4, 3)


def test_finite_difference_fallback():
    q = builtin("quartic1d")
    p = Potential(1, lambda x: q.value(x))
    assert not p.analytic
    xs = np.linspace(-2, 2, 9)
    assert np.allclose(p.dv(xs), q.dv(xs), atol=1e-8)
    assert np.allclose(p.d2v(xs), q.d2v(xs), atol=1e-5)


@pytest.mark.parametrize("bad", [
    PotentialParams("nope"),
    PotentialParams("pitchfork_normal_form", {"lambda1": 1.0, "lambda2": 0.0, "C4": 1.0}),
    PotentialParams("pitchfork_normal_form", {"lambda1": -1.0, "lambda2": 0.0, "C4": 0.0}),
    PotentialParams("pitchfork_normal_form", {"lambda1": -1.0, "lambda2": 0.0, "C4": 1.0, "d": 1}),
    PotentialParams("pitchfork_normal_form", {"lambda1": -1.0, "lambda2": 0.0}),
])
def test_invalid_builtin(bad):
    with pytest.raises(PotentialError):
        make_builtin(bad)


def test_params_round_trip():
    rec = PotentialParams("custom_polynomial", {"dim": 1}, [[1.0, [2]]]).to_dict()
    again = PotentialParams.from_dict(rec)
    assert again.to_dict() == rec
    p = make_builtin(again)
    assert p.v(3.0) == 9.0


def test_builtin_names_complete():
    assert set(BUILTIN_NAMES) == {"quartic1d", "threewell1d", "doublewell2d", "pitchfork_normal_form",
                                  "custom_polynomial"}


def test_scalar_shorthand_requires_1d():
    with pytest.raises(ValueError):
        builtin("doublewell2d").v(0.0)


def test_point_shape_checked():
    with pytest.raises(ValueError):
        builtin("doublewell2d").value([1.0, 2.0, 3.0])


def test_pitchfork_quartic_term():
    p = builtin("pitchfork_normal_form", lambda1=-2.0, lambda2=0.0, C4=0.5, d=2)
    assert p.value([0.0, 2.0]) == pytest.approx(0.5 * 16)
    assert p.value([1.0, 0.0]) == pytest.approx(-1.0)
    assert math.isclose(p.hessian([0.0, 1.0])[1, 1], 12 * 0.5)
