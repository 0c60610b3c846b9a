"""
Arrhenius exponents and Eyring-Kramers prefactors.

Besides the quadratic formula ``C = 2 pi / |l1(z)| sqrt(|det H(z)| / det H(x))``
the module covers saddles undergoing a pitchfork bifurcation, where the
prefactor involves the crossover functions

.. math::

    \\Psi_+(\\alpha) = \\sqrt{\\alpha(1+\\alpha)/8\\pi}\\,e^{\\alpha^2/16}K_{1/4}(\\alpha^2/16),

    \\Psi_-(\\alpha) = \\sqrt{\\pi\\alpha(1+\\alpha)/32}\\,e^{-\\alpha^2/64}
    [I_{-1/4}(\\alpha^2/64) + I_{1/4}(\\alpha^2/64)].

Bessel functions of order 1/4 are computed here (no scipy.special):

=============  ===========================  ==========================
function       z below switchover           z above switchover
=============  ===========================  ==========================
K_{1/4}        series of I_{-1/4} - I_{1/4}  continued fraction (z<20),
               (z <= 2)                     asymptotic series (z>=20)
I_{+-1/4}      power series (z <= 20)       asymptotic series (z>20)
=============  ===========================  ==========================

All of them are evaluated in scaled form (``e^z K``, ``e^{-z} I``) so that the
crossover functions never overflow.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate

from .landscape import TransitionSpec

NU = 0.25
K_SERIES_MAX = 2.0
ASYMPTOTIC_MIN = 20.0
_EPS = 1e-17

QUADRATIC_ORDER = "O(sqrt(eps)*|log eps|^(3/2))"
DEGENERATE_ORDER = "O(eps^beta*|log eps|^(1+beta))"
REGIMES = ("quadratic_1d", "quadratic_nd", "pitchfork_pre", "pitchfork_post", "degenerate_general")


class DegenerateSaddleError(ValueError):
    """Quadratic prefactor requested at a critical point with singular Hessian."""


# ------------------------------------------------------------------- Gamma

_LANCZOS_G = 7
_LANCZOS = (
    0.99999999999980993, 676.5203681218851, -1259.1392167224028,
    771.32342877765313, -176.61502916214059, 12.507343278686905,
    -0.13857109526572012, 9.9843695780195716e-6, 1.5056327351493116e-7,
)


def lanczos_gamma(x: float) -> float:
    """Gamma function by the Lanczos approximation (g=7, 9 terms), ~1e-15 relative."""
    if x < 0.5:
        return math.pi / (math.sin(math.pi * x) * lanczos_gamma(1.0 - x))
    x -= 1.0
    s = _LANCZOS[0]
    for i in range(1, len(_LANCZOS)):
        s += _LANCZOS[i] / (x + i)
    t = x + _LANCZOS_G + 0.5
    return math.sqrt(2 * math.pi) * t ** (x + 0.5) * math.exp(-t) * s


def gamma_quarter() -> float:
    """``Gamma(1/4)``."""
    return GAMMA_QUARTER


GAMMA_QUARTER = lanczos_gamma(0.25)
GAMMA_THREE_QUARTERS = math.pi * math.sqrt(2.0) / GAMMA_QUARTER
PSI_ZERO = GAMMA_QUARTER / (2 ** 1.25 * math.sqrt(math.pi))


# ----------------------------------------------------------------- Bessel

def _series_sum(nu: float, z: float) -> float:
    """``sum_k (z/2)^{2k} / (k! Gamma(k + nu + 1))`` for ``nu = +-1/4``."""
    g = GAMMA_QUARTER / 4 if nu > 0 else GAMMA_THREE_QUARTERS
    q = 0.25 * z * z
    term = 1.0 / g
    total = term
    k = 0
    while True:
        k += 1
        term *= q / (k * (k + nu))
        total += term
        if term < _EPS * total:
            return total


def _asym_terms(mu: float, z: float, sign: float) -> float:
    """``sum_k sign^k a_k(nu) / z^k`` truncated at the smallest term, ``mu = 4 nu^2``."""
    total = 1.0
    term = 1.0
    k = 0
    while True:
        k += 1
        nxt = term * sign * (mu - (2 * k - 1) ** 2) / (k * 8 * z)
        if abs(nxt) >= abs(term) or k > 200:
            return total
        term = nxt
        total += term
        if abs(term) < _EPS * abs(total):
            return total


def _i_scaled(nu: float, z: float) -> float:
    """``exp(-z) I_nu(z)`` for ``nu = +-1/4``."""
    if z <= ASYMPTOTIC_MIN:
        return math.exp(-z) * (0.5 * z) ** nu * _series_sum(nu, z)
    return _asym_terms(4 * nu * nu, z, -1.0) / math.sqrt(2 * math.pi * z)


def _k_steed(nu: float, x: float) -> float:
    """``exp(x) K_nu(x)`` by Steed's continued fraction (Temme's CF2), ``x >= 2``."""
    b = 2.0 * (1.0 + x)
    d = 1.0 / b
    h = delh = d
    q1, q2 = 0.0, 1.0
    a1 = 0.25 - nu * nu
    q = c = a1
    a = -a1
    s = 1.0 + q * delh
    for i in range(2, 100000):
        a -= 2 * (i - 1)
        c = -a * c / i
        qnew = (q1 - b * q2) / a
        q1, q2 = q2, qnew
        q += c * qnew
        b += 2.0
        d = 1.0 / (b + a * d)
        delh = (b * d - 1.0) * delh
        h += delh
        dels = q * delh
        s += dels
        if abs(dels / s) < 1e-17:
            break
    return math.sqrt(math.pi / (2 * x)) / s


def _k_scaled(z: float) -> float:
    """``exp(z) K_{1/4}(z)``."""
    if z <= K_SERIES_MAX:
        diff = (0.5 * z) ** -NU * _series_sum(-NU, z) - (0.5 * z) ** NU * _series_sum(NU, z)
        return math.exp(z) * math.pi / (2 * math.sin(NU * math.pi)) * diff
    if z < ASYMPTOTIC_MIN:
        return _k_steed(NU, z)
    return math.sqrt(math.pi / (2 * z)) * _asym_terms(4 * NU * NU, z, 1.0)


def bessel_quarter(kind: str, z: float, scaled: bool = False) -> float:
    """Modified Bessel functions of order one quarter.

    Parameters
    ----------
    kind : {"K", "I", "I-"}
        ``K_{1/4}``, ``I_{1/4}`` or ``I_{-1/4}``.
    z : float
        Positive argument.
    scaled : bool
        Return ``exp(z) K(z)`` or ``exp(-z) I(z)`` instead.

    Returns
    -------
    float
        Accurate to about 1e-13 relative (see the module table for branches).
    """
    z = float(z)
    if not z > 0 or not math.isfinite(z):
        raise ValueError(f"Bessel argument must be positive and finite, got {z}")
    if kind == "K":
        v = _k_scaled(z)
        return v if scaled else v * math.exp(-z)
    if kind in ("I", "I-"):
        v = _i_scaled(NU if kind == "I" else -NU, z)
        return v if scaled else v * math.exp(z)
    raise ValueError(f"unknown Bessel kind {kind!r}")


# ------------------------------------------------------- crossover functions

def psi_plus(alpha: float) -> float:
    """Crossover function for a saddle before a pitchfork bifurcation.

    Equals ``Gamma(1/4) / (2^{5/4} sqrt(pi))`` at 0 and tends to 1 for large
    ``alpha``. For ``alpha^2 / 16 <= 2`` the ``sqrt(alpha)`` singularity of
    ``K`` is cancelled analytically.
    """
    a = float(alpha)
    if not a >= 0:
        raise ValueError(f"alpha must be non-negative, got {alpha}")
    z = a * a / 16
    if z <= K_SERIES_MAX:
        r = 32.0 ** 0.25
        br = r * _series_sum(-NU, z) - a / r * _series_sum(NU, z)
        return math.sqrt((1 + a) / (8 * math.pi)) * math.exp(z) * math.pi / (2 * math.sin(NU * math.pi)) * br
    return math.sqrt(a * (1 + a) / (8 * math.pi)) * _k_scaled(z)


def psi_minus(alpha: float) -> float:
    """Crossover function past a pitchfork bifurcation (two saddles).

    Same value as :func:`psi_plus` at 0; tends to 2 for large ``alpha``.
    """
    a = float(alpha)
    if not a >= 0:
        raise ValueError(f"alpha must be non-negative, got {alpha}")
    z = a * a / 64
    if z <= ASYMPTOTIC_MIN:
        r = 128.0 ** 0.25
        br = r * _series_sum(-NU, z) + a / r * _series_sum(NU, z)
        return math.sqrt(math.pi * (1 + a) / 32) * math.exp(-z) * br
    return math.sqrt(math.pi * a * (1 + a) / 32) * (_i_scaled(-NU, z) + _i_scaled(NU, z))


# -------------------------------------------------------------- predictions

@dataclass
class KramersPrediction:
    """Mean transition time ``prefactor * exp(exponent / epsilon)``."""

    exponent: float
    prefactor: float
    regime: str
    epsilon: float
    error_order: str

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ValueError(f"unknown regime {self.regime!r}")
        if not self.prefactor > 0:
            raise ValueError(f"prefactor must be positive, got {self.prefactor}")
        if self.exponent < 0:
            raise ValueError(f"negative exponent {self.exponent}")

    @property
    def mean_time(self) -> float:
        """``inf`` when the time exceeds the float range; see :attr:`log_mean_time`."""
        try:
            return self.prefactor * math.exp(self.exponent / self.epsilon)
        except OverflowError:
            return math.inf

    @property
    def log_mean_time(self) -> float:
        return math.log(self.prefactor) + self.exponent / self.epsilon

    def to_dict(self) -> dict:
        return {
            "exponent": float(self.exponent),
            "prefactor": float(self.prefactor),
            "regime": self.regime,
            "epsilon": float(self.epsilon),
            "error_order": self.error_order,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "KramersPrediction":
        return cls(d["exponent"], d["prefactor"], d["regime"], d["epsilon"], d["error_order"])


def quadratic_prefactor(saddle_eigs: Sequence[float], min_eigs: Sequence[float]) -> float:
    """``2 pi / |l1| * sqrt(|det H_z| / det H_x)`` from Hessian spectra."""
    zs = np.sort(np.asarray(saddle_eigs, dtype=float))
    xs = np.asarray(min_eigs, dtype=float)
    # ratio of products pairwise to keep it well scaled in high dimension
    ratio = np.prod(np.abs(zs) / np.sort(xs))
    return float(2 * math.pi / abs(zs[0]) * math.sqrt(ratio))


def eyring_kramers(spec: TransitionSpec, eps: float) -> KramersPrediction:
    """Eyring-Kramers prediction for the transition described by ``spec``.

    Raises
    ------
    DegenerateSaddleError
        If the start or saddle Hessian is singular; use
        :func:`pitchfork_prefactor` or :func:`degenerate_capacity` instead.
    """
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    if spec.start.degenerate or spec.start.index != 0:
        raise DegenerateSaddleError("start minimum has a singular Hessian: use the degenerate branch")
    if spec.saddle.degenerate:
        raise DegenerateSaddleError("saddle Hessian is singular: quadratic prefactor would be 0 or infinite; "
                                    "use the degenerate branch")
    if spec.saddle.index != 1:
        raise ValueError(f"relevant saddle has Morse index {spec.saddle.index}, expected 1")
    C = quadratic_prefactor(spec.saddle.eigenvalues, spec.start.eigenvalues)
    dim = spec.start.dim
    return KramersPrediction(spec.saddle.value - spec.start.value, C,
                             "quadratic_1d" if dim == 1 else "quadratic_nd", float(eps), QUADRATIC_ORDER)


def pitchfork_prefactor(lambda1: float, lambda2: float, others: Sequence[float], C4: float,
                        det_min: float, eps: float, mu: Optional[Sequence[float]] = None,
                        exponent: float = 0.0) -> KramersPrediction:
    """Kramers prefactor for a saddle with normal form ``u2 = l2 y^2/2 + C4 y^4``.

    Parameters
    ----------
    lambda1 : float
        Unstable eigenvalue at the symmetric saddle (negative).
    lambda2 : float
        Bifurcating eigenvalue; ``>= 0`` before and ``< 0`` after the pitchfork.
    others : sequence of float
        Stable eigenvalues ``l3..ld``.
    C4 : float
        Quartic coefficient, positive.
    det_min : float
        ``det Hess V`` at the starting minimum.
    eps : float
    mu : sequence of float, optional
        Eigenvalues ``mu1..mud`` at the two post-bifurcation saddles. By default
        ``(lambda1, 2|lambda2|, l3, ..., ld)``, the leading-order values for the
        normal form.
    exponent : float
        Barrier height carried into the returned prediction.
    """
    if not C4 > 0:
        raise ValueError(f"C4 must be positive, got {C4}")
    if not lambda1 < 0:
        raise ValueError(f"lambda1 must be negative, got {lambda1}")
    if not det_min > 0:
        raise ValueError("det Hess V at the minimum must be positive")
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    others = [float(v) for v in others]
    if any(v <= 0 for v in others):
        raise ValueError("stable eigenvalues l3..ld must be positive")
    s = math.sqrt(2 * eps * C4)
    if lambda2 >= 0:
        l1, l2, rest, psi, regime = lambda1, lambda2, others, psi_plus, "pitchfork_pre"
    else:
        m = list(mu) if mu is not None else [lambda1, -2.0 * lambda2] + others
        if len(m) != 2 + len(others):
            raise ValueError("mu must list all d saddle eigenvalues")
        l1, l2, rest = float(m[0]), float(m[1]), [float(v) for v in m[2:]]
        if not (l1 < 0 and l2 > 0 and all(v > 0 for v in rest)):
            raise ValueError("post-bifurcation saddle eigenvalues must have signs (-, +, ..., +)")
        psi, regime = psi_minus, "pitchfork_post"
    num = (l2 + s) * float(np.prod(rest)) if rest else (l2 + s)
    C = 2 * math.pi * math.sqrt(num / (abs(l1) * det_min)) / psi(l2 / s)
    return KramersPrediction(float(exponent), C, regime, float(eps), DEGENERATE_ORDER)


# ---------------------------------------------------------- general capacity

_TRUNC = -math.log(1e-16)


def _extent_1d(u: Callable, eps: float, guess: float = 0.0, reach: float = 1e4):
    """Interval outside which ``exp(-(u - min u)/eps) < 1e-16``, plus the argmin."""
    xs = np.linspace(-10, 10, 4001) + guess
    us = np.array([u(x) for x in xs])
    k = int(np.argmin(us))
    x0, umin = float(xs[k]), float(us[k])
    bounds = []
    for direction in (-1.0, 1.0):
        step = 0.01
        x = x0
        while True:
            x += direction * step
            if abs(x - x0) > reach:
                raise ValueError("integrand does not decay: u must grow at infinity")
            val = u(x)
            if val < umin:
                umin = val
            if val - umin > _TRUNC * eps:
                bounds.append(x)
                break
            step *= 1.1
    return bounds[0], bounds[1], x0, umin


def _gauss_integral(u: Callable, dim: int, eps: float) -> float:
    """``int exp(-u/eps)`` over ``R^dim`` (dim 1 or 2), domain truncated at 1e-16 of the max."""
    if dim == 1:
        lo, hi, x0, umin = _extent_1d(u, eps)
        f = lambda y: math.exp(-(u(y) - umin) / eps)
        val, _ = integrate.quad(f, lo, hi, points=[x0], limit=400, epsabs=1e-12,
                                epsrel=1e-12)
        return val * math.exp(-umin / eps)
    if dim == 2:
        lo0, hi0, x0, _ = _extent_1d(lambda t: u(np.array([t, 0.0])), eps)
        lo1, hi1, y0, _ = _extent_1d(lambda t: u(np.array([0.0, t])), eps)
        umin = min(float(u(np.array([x0, y0]))), float(u(np.zeros(2))))
        f = lambda y, x: math.exp(-(u(np.array([x, y])) - umin) / eps)
        val, _ = integrate.dblquad(f, lo0, hi0, lo1, hi1, epsabs=1e-12, epsrel=1e-10)
        return val * math.exp(-umin / eps)
    raise ValueError("degenerate_capacity supports k-1 in {1, 2}")


def degenerate_capacity(u1: Callable, u2: Callable, lambdas: Sequence[float], eps: float,
                        k: int = 2) -> float:
    """Leading-order capacity for a saddle of normal form
    ``V = -u1(y1) + u2(y2..yk) + sum_{j>k} lambda_j y_j^2 / 2``.

    Evaluates ``eps * int exp(-u2/eps) / int exp(-u1/eps) * prod sqrt(2 pi eps / lambda_j)``
    by adaptive quadrature (the ``exp(-V(z)/eps)`` factor is omitted).

    ``u1`` is the profile along the unstable direction written so that it grows,
    e.g. ``|lambda1| y^2 / 2`` for a quadratic saddle; its integral must
    converge. ``u2`` takes a scalar when ``k == 2`` and a length ``k-1`` array
    otherwise.
    """
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    lambdas = [float(v) for v in lambdas]
    if any(v <= 0 for v in lambdas):
        raise ValueError("Gaussian eigenvalues must be positive")
    den = _gauss_integral(u1, 1, eps)
    num = _gauss_integral(u2, k - 1, eps)
    prod = 1.0
    for lam in lambdas:
        prod *= math.sqrt(2 * math.pi * eps / lam)
    return eps * num / den * prod


def laplace_numerator(min_eigs: Sequence[float], eps: float) -> float:
    """``(2 pi eps)^{d/2} / sqrt(det Hess V(x))`` (times ``exp(-V(x)/eps)``, omitted)."""
    eigs = np.asarray(min_eigs, dtype=float)
    return float(np.prod(np.sqrt(2 * math.pi * eps / eigs)))


def prefactor_from_capacity(cap: float, min_eigs: Sequence[float], eps: float) -> float:
    """Prefactor ``numerator / capacity`` of the potential-theoretic estimate."""
    return laplace_numerator(min_eigs, eps) / cap
