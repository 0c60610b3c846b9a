"""Cycling law for first-exit locations through an unstable periodic orbit.

The exit angle density is a Gumbel-type periodic profile, shifted by
``log(1/eps)`` and modulated by an exponential envelope whose scale is the
product of the Lyapunov exponent and the Kramers time.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Callable, Optional

import numpy as np
from scipy import integrate, optimize, stats

TRUNCATION_RTOL = 1e-16
GOODNESS_PVALUE = 1e-3
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(8)


class CyclingFitError(ValueError):
    """Histogram too degenerate to fit."""


@dataclass(frozen=True)
class CyclingParams:
    """Parameters of the cycling density.

    Attributes
    ----------
    period : float
        Period ``T`` of the unstable orbit.
    lyapunov : float
        Lyapunov exponent ``lambda`` of the orbit.
    kramers_time : float
        Kramers time ``T_K``; taken as an input, never computed here.
    theta0 : float
        Angle offset; the density lives on ``theta > theta0``.
    eps : float
        Noise intensity.
    """

    period: float
    lyapunov: float
    kramers_time: float
    theta0: float
    eps: float

    def __post_init__(self):
        for name in ("period", "lyapunov", "kramers_time", "eps"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive, got {v}")
        if not np.isfinite(self.theta0):
            raise ValueError("theta0 must be finite")

    @property
    def lambda_t(self) -> float:
        """Angular period ``lambda T``."""
        return self.lyapunov * self.period

    @property
    def lambda_tk(self) -> float:
        """Envelope scale ``lambda T_K``."""
        return self.lyapunov * self.kramers_time

    @property
    def shift(self) -> float:
        """Phase shift ``log(1/eps)``."""
        return -math.log(self.eps)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "CyclingParams":
        return cls(**{k: float(d[k]) for k in ("period", "lyapunov", "kramers_time", "theta0", "eps")})

    @classmethod
    def from_scales(cls, lambda_t, lambda_tk, theta0, eps, lyapunov=1.0) -> "CyclingParams":
        return cls(lambda_t / lyapunov, lyapunov, lambda_tk / lyapunov, theta0, eps)


def gumbel_kernel(x):
    """Kernel ``A(x) = exp(-2x - exp(-2x)/2) / 2``.

    Parameters
    ----------
    x : float or array_like

    Returns
    -------
    float or ndarray
    """
    x = np.asarray(x, dtype=float)
    with np.errstate(over="ignore"):
        e = np.exp(-2.0 * x)
        out = 0.5 * np.exp(-2.0 * x - 0.5 * e)
    out = np.where(np.isfinite(e), out, 0.0)
    return out[()] if out.ndim == 0 else out


def _tail(r, lt, sign, total):
    """Add terms ``A(r + sign*j*lt)``, j = 1, 2, ..., per element until negligible."""
    active = np.ones(r.shape, dtype=bool)
    j = 1
    while active.any():
        term = gumbel_kernel(r[active] + sign * j * lt)
        total[active] += term
        idx = np.flatnonzero(active)
        active[idx[term <= TRUNCATION_RTOL * total[active]]] = False
        j += 1
    return total


def periodic_p(theta, lambda_t: float):
    """Periodic sum ``P(theta) = sum_k A(theta - k lambda_t)``.

    The argument is reduced to ``[0, lambda_t)`` first, so the result is
    periodic by construction; for arguments whose reduction is exact the
    values at ``theta`` and ``theta + lambda_t`` agree bit for bit.

    Parameters
    ----------
    theta : float or array_like
    lambda_t : float
        Period, must be positive.
    """
    if not lambda_t > 0:
        raise ValueError("lambda_t must be positive")
    th = np.asarray(theta, dtype=float)
    lt = float(lambda_t)
    r = np.fmod(th.ravel(), lt)
    r = np.where(r < 0, r + lt, r)
    total = np.atleast_1d(gumbel_kernel(r)).astype(float)
    # k < 0 gives an exponential tail, k > 0 a double-exponential one
    total = _tail(r, lt, 1.0, total)
    total = _tail(r, lt, -1.0, total)
    out = total.reshape(th.shape)
    return out[()] if out.ndim == 0 else out


def default_transient(theta, theta0):
    """Default transient factor ``max(0, 1 - exp(-(theta - theta0)))``."""
    return np.clip(-np.expm1(-(np.asarray(theta, dtype=float) - theta0)), 0.0, None)


def exit_density(theta, cp: CyclingParams, transient: Optional[Callable] = None):
    """Cycling density of the unfolded exit angle.

    Parameters
    ----------
    theta : float or array_like
        Angles, all strictly above ``cp.theta0``.
    cp : CyclingParams
    transient : callable, optional
        ``transient(theta, theta0)``; defaults to :func:`default_transient`.

    Returns
    -------
    float or ndarray
        Unnormalized density values.
    """
    th = np.asarray(theta, dtype=float)
    if np.any(th <= cp.theta0):
        raise ValueError("theta must exceed theta0")
    f = (transient or default_transient)(th, cp.theta0)
    lk = cp.lambda_tk
    env = np.exp(-(th - cp.theta0) / lk) / lk
    out = f * env * periodic_p(th - cp.shift, cp.lambda_t)
    return out[()] if np.ndim(out) == 0 else out


def mode_in_period(cp: CyclingParams, start: float) -> float:
    """Location of the density maximum within ``[start, start + lambda T)``.

    The periodic factor is unimodal per period, so a coarse scan followed
    by a bounded scalar search pins the maximum.
    """
    lt = cp.lambda_t
    grid = start + lt * np.linspace(0.0, 1.0, 401)
    vals = exit_density(grid, cp)
    i = int(np.argmax(vals))
    lo = grid[max(i - 1, 0)]
    hi = grid[min(i + 1, len(grid) - 1)]
    res = optimize.minimize_scalar(lambda t: -float(exit_density(t, cp)), bounds=(lo, hi),
                                   method="bounded", options={"xatol": 1e-12})
    return float(res.x)


def density_grid(cp: CyclingParams, span: float, n: int = 20001):
    """Density on a uniform grid from ``theta0`` to ``theta0 + span``.

    Returns
    -------
    theta, p : ndarray
        The grid starts just above ``theta0``, where the density vanishes.
    """
    theta = cp.theta0 + np.linspace(0.0, span, n)
    p = np.zeros_like(theta)
    p[1:] = exit_density(theta[1:], cp)
    return theta, p


def sample_angles(cp: CyclingParams, n: int, rng: np.random.Generator, span: Optional[float] = None,
                  grid: int = 200001) -> np.ndarray:
    """Draw exit angles from the density by inverse-CDF on a fine grid.

    The support is truncated at ``theta0 + span`` (default ``40 lambda T_K``),
    where the remaining mass is below ``e^-40``.
    """
    span = 40.0 * cp.lambda_tk if span is None else span
    theta, p = density_grid(cp, span, grid)
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (p[1:] + p[:-1]) * np.diff(theta))])
    cdf /= cdf[-1]
    return np.interp(rng.random(n), cdf, theta)


def kernel_mass() -> float:
    """Integral of the kernel over the real line (should be one half)."""
    return integrate.quad(gumbel_kernel, -np.inf, np.inf, epsabs=1e-13, epsrel=1e-12)[0]


@dataclass
class CyclingFit:
    """Fitted parameters and goodness of fit."""

    params: CyclingParams
    residual: float
    chi2: float
    dof: int
    pvalue: float
    mass: float

    @property
    def poor(self) -> bool:
        """True when the model is rejected at the ``GOODNESS_PVALUE`` level."""
        return self.pvalue < GOODNESS_PVALUE

    def to_dict(self) -> dict:
        return {"params": self.params.to_dict(), "residual": self.residual, "chi2": self.chi2,
                "dof": self.dof, "pvalue": self.pvalue, "mass": self.mass, "poor": self.poor}


def _bin_mass(edges, cp):
    """Unnormalized model mass per bin by Gauss-Legendre on each bin."""
    a, b = edges[:-1], edges[1:]
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    pts = mid[:, None] + half[:, None] * _GL_NODES[None, :]
    vals = np.zeros_like(pts)
    ok = pts > cp.theta0
    vals[ok] = exit_density(pts[ok], cp)
    return half * (vals @ _GL_WEIGHTS)


def fit_cycling(edges, counts, seed: CyclingParams) -> CyclingFit:
    """Least-squares fit of ``(theta0, lambda T, lambda T_K)`` to a histogram.

    The model is normalized over the histogram range, so only the shape is
    fitted. ``eps`` and ``lambda`` are held at their seed values.

    Parameters
    ----------
    edges : array_like
        Bin edges of the unfolded angle histogram.
    counts : array_like
        Counts per bin.
    seed : CyclingParams
        Starting point and fixed ``eps``, ``lambda``.

    Raises
    ------
    CyclingFitError
        Fewer than 20 occupied bins.
    """
    edges = np.asarray(edges, dtype=float)
    counts = np.asarray(counts, dtype=float)
    if edges.ndim != 1 or len(edges) != len(counts) + 1:
        raise CyclingFitError("edges must have one more entry than counts")
    occupied = np.flatnonzero(counts > 0)
    if occupied.size < 20:
        raise CyclingFitError(f"need at least 20 occupied bins, got {occupied.size}")
    total = counts.sum()
    # every sample exceeds theta0, so theta0 lies below the first occupied bin's right edge
    theta_cap = edges[occupied[0] + 1]

    def unpack(z):
        return CyclingParams.from_scales(math.exp(z[1]), math.exp(z[2]), float(z[0]), seed.eps, seed.lyapunov)

    def residuals(z):
        cp = unpack(z)
        m = _bin_mass(edges, cp)
        s = m.sum()
        if not (s > 0 and np.isfinite(s)):
            # model puts no mass on the histogram range
            return np.sqrt(counts) + 1.0
        expected = total * m / s
        return (counts - expected) / np.sqrt(np.maximum(expected, 1.0))

    z0 = np.array([min(seed.theta0, theta_cap - 1e-9), math.log(seed.lambda_t), math.log(seed.lambda_tk)])
    lower = [-np.inf, -30.0, -30.0]
    upper = [theta_cap, 30.0, 30.0]
    res = optimize.least_squares(residuals, z0, bounds=(lower, upper), x_scale="jac",
                                 xtol=1e-12, ftol=1e-12, gtol=1e-12)
    cp = unpack(res.x)
    chi2 = float(np.sum(res.fun ** 2))
    dof = max(int(np.count_nonzero(counts > 0)) - 3, 1)
    pvalue = float(stats.chi2.sf(chi2, dof))
    # empirical mass of the density over the histogram range, unnormalized
    mass = float(_bin_mass(edges, cp).sum())
    return CyclingFit(cp, float(math.sqrt(chi2 / dof)), chi2, dof, pvalue, mass)
