"""
Exact one-dimensional oracles.

For :math:`dx_t = -V'(x_t)dt + \\sqrt{2\\varepsilon}dW_t` on the line, the
committor, the mean hitting time of a half-line and the capacity between two
points are explicit one- and two-fold integrals of :math:`e^{\\pm V/\\varepsilon}`.
They are evaluated here by adaptive quadrature (QUADPACK via
:func:`scipy.integrate.quad`), always with the extreme value of the exponent
factored out so that nothing overflows for small noise.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize

from .potential import Potential

_SCAN_POINTS = 4001
_TAIL_CUT = 50.0      # inner integral truncated where V - min V > 50 eps
_MAX_REACH = 1.0e3


class QuadratureError(ArithmeticError):
    """Quadrature failed or an integral does not converge."""


@dataclass(frozen=True)
class Interval1D:
    """Absorbing boundaries ``a < b``, start point ``x`` and noise ``eps``."""

    a: float
    b: float
    x: float
    eps: float

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError(f"eps must be positive, got {self.eps}")
        if not self.a < self.b:
            raise ValueError(f"need a < b, got a={self.a}, b={self.b}")


def _scalar(p: Potential):
    if p.dim != 1:
        raise ValueError("exact 1D oracles need a one-dimensional potential")
    return lambda y: float(p.v(y))


def _argext(f, lo, hi, maximize):
    """Location and value of the extremum of ``f`` on ``[lo, hi]``."""
    xs = np.linspace(lo, hi, _SCAN_POINTS)
    vals = np.array([f(x) for x in xs])
    k = int(np.argmax(vals) if maximize else np.argmin(vals))
    sgn = -1.0 if maximize else 1.0
    left, right = xs[max(k - 1, 0)], xs[min(k + 1, len(xs) - 1)]
    if right > left:
        res = optimize.minimize_scalar(lambda t: sgn * f(t), bounds=(left, right),
                                       method="bounded", options={"xatol": 1e-12})
        if sgn * res.fun < sgn * vals[k]:
            return float(res.x), float(res.fun) * sgn
    return float(xs[k]), float(vals[k])


def _quad(fun, lo, hi, points=()):
    pts = sorted({float(t) for t in points if lo < t < hi})
    val, err = integrate.quad(fun, lo, hi, points=pts or None, limit=400,
                              epsabs=0.0, epsrel=1e-12)
    if not np.isfinite(val):
        raise QuadratureError(f"non-finite quadrature on [{lo}, {hi}]")
    return val, err


def shifted_exp_integral(p: Potential, lo: float, hi: float, eps: float, sign: float = 1.0):
    """Compute :math:`\\int_{lo}^{hi} e^{\\mathrm{sign}\\cdot V/\\varepsilon}` in shifted form.

    Returns ``(integral, shift)`` with the true value ``integral * exp(shift)``;
    ``integral`` is at most ``hi - lo``.
    """
    f = _scalar(p)
    where, vext = _argext(f, lo, hi, maximize=sign > 0)
    shift = sign * vext / eps
    val, _ = _quad(lambda y: math.exp(sign * f(y) / eps - shift), lo, hi, points=(where,))
    return val, shift


def committor_1d(p: Potential, iv: Interval1D) -> float:
    """Probability of reaching ``a`` before ``b`` when starting at ``x``.

    Ratio of :math:`\\int_x^b e^{V/\\varepsilon}` to :math:`\\int_a^b e^{V/\\varepsilon}`,
    both shifted by the maximum of ``V`` on ``[a, b]``.
    """
    a, b, x, eps = iv.a, iv.b, iv.x, iv.eps
    if x <= a:
        return 1.0
    if x >= b:
        return 0.0
    f = _scalar(p)
    where, vmax = _argext(f, a, b, maximize=True)
    g = lambda y: math.exp((f(y) - vmax) / eps)
    num, _ = _quad(g, x, b, points=(where,))
    den, _ = _quad(g, a, b, points=(where,))
    return float(min(1.0, max(0.0, num / den)))


def capacity_1d(p: Potential, a: float, b: float, eps: float) -> float:
    """Capacity between the points ``a < b``: ``eps / int_a^b exp(V/eps)``.

    This is the weighted Dirichlet form ``eps * int |h'|^2 exp(-V/eps)`` of the
    exact committor between ``a`` and ``b``.
    """
    if not a < b:
        raise ValueError(f"need a < b, got a={a}, b={b}")
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    val, shift = shifted_exp_integral(p, a, b, eps, sign=1.0)
    return float(eps / val * math.exp(-shift))


def kramers_asymptotic_1d(p: Potential, ystar: float, zstar: float, eps: float) -> float:
    """Kramers' law for the 1D mean transition time from ``ystar`` over ``zstar``."""
    cy = float(p.d2v(ystar))
    cz = float(p.d2v(zstar))
    if not cy > 0:
        raise ValueError(f"V''({ystar}) = {cy} is not positive: not a minimum")
    if not cz < 0:
        raise ValueError(f"V''({zstar}) = {cz} is not negative: not a maximum")
    barrier = float(p.v(zstar) - p.v(ystar))
    return 2 * math.pi / math.sqrt(abs(cz) * cy) * math.exp(barrier / eps)


def _tail_cutoff(f, start, eps):
    """Point beyond ``start`` where the Boltzmann weight has become negligible.

    Marches away from ``start`` until ``V`` exceeds its running minimum by
    ``50 eps`` and every value seen so far, while increasing.
    """
    step = 0.01 * (1.0 + abs(start))
    y = start
    vmin = vmax = f(start)
    while y - start < _MAX_REACH:
        y += step
        vy = f(y)
        vmin = min(vmin, vy)
        rising = f(y + 1e-6 * (1 + abs(y))) > vy
        if vy - vmin > _TAIL_CUT * eps and vy >= vmax and rising:
            return y
        vmax = max(vmax, vy)
        step *= 1.05
    raise QuadratureError("inner integral diverges: potential is not confining on this side")


def mean_hitting_1d(p: Potential, a: float, x: float, eps: float, full_output: bool = False):
    """Mean first-hitting time of the half-line beyond ``a`` started at ``x``.

    For ``x > a`` the target is ``(-inf, a]`` and

    .. math:: w(x) = \\frac1\\varepsilon\\int_a^x\\int_z^\\infty e^{[V(z)-V(y)]/\\varepsilon}\\,dy\\,dz;

    for ``x < a`` the target is ``[a, inf)`` and the mirror-image formula is used.
    The inner integral is cut where ``V - min V > 50 eps``; the neglected tail
    is bounded and included in the error estimate.

    Returns
    -------
    float, or (float, float) if ``full_output``
        Mean hitting time and an absolute error estimate.
    """
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    if x == a:
        return (0.0, 0.0) if full_output else 0.0
    f0 = _scalar(p)
    if x > a:
        f = f0
        lo, hi = a, x
    else:
        f = lambda y: f0(-y)
        lo, hi = -a, -x

    ycut = _tail_cutoff(f, hi, eps)
    ys = np.linspace(lo, ycut, _SCAN_POINTS)
    vs = np.array([f(t) for t in ys])
    # largest exponent V(z) - V(y) over lo <= z <= y, z <= hi
    running_max = np.maximum.accumulate(np.where(ys <= hi, vs, -np.inf))
    shift = float(np.max(running_max - vs)) / eps
    wells = [float(ys[k]) for k in range(1, len(ys) - 1) if vs[k] <= vs[k - 1] and vs[k] <= vs[k + 1]]
    peaks = [float(ys[k]) for k in range(1, len(ys) - 1)
             if ys[k] < hi and vs[k] >= vs[k - 1] and vs[k] >= vs[k + 1]]

    def inner(z):
        vz = f(z)
        val, _ = _quad(lambda y: math.exp((vz - f(y)) / eps - shift), z, ycut,
                       points=[w for w in wells if w > z])
        return val

    total, err = _quad(inner, lo, hi, points=peaks)
    # tail beyond ycut: V' >= V'(ycut) > 0 there, so the tail is below exp(-gap/eps) eps/V'
    dv = (f(ycut + 1e-6) - f(ycut - 1e-6)) / 2e-6
    vmax_outer = float(np.max(vs[ys <= hi]))
    tail = (hi - lo) * math.exp((vmax_outer - f(ycut)) / eps - shift) * eps / max(dv, 1e-300)
    scale = math.exp(shift) / eps
    value = total * scale
    if full_output:
        return value, (err + tail) * scale
    return value
