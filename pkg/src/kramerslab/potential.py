"""
Potential landscapes
====================

A :class:`Potential` bundles a scalar field :math:`V:\\mathbb{R}^d\\to\\mathbb{R}`
with its gradient and Hessian. Points are arrays whose last axis has length
``d``; a batch of points of shape ``(..., d)`` evaluates to values of shape
``(...)``, gradients of shape ``(..., d)`` and Hessians of shape ``(..., d, d)``.

One-dimensional potentials additionally expose the shorthands :meth:`Potential.v`,
:meth:`Potential.dv` and :meth:`Potential.d2v`, which accept plain arrays of
abscissae.

Builtin landscapes are all polynomials (see :func:`make_builtin`), so their
derivatives are exact. Potentials given only by a value map fall back to
central finite differences.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

_FD_STEP = np.finfo(float).eps ** (1.0 / 3.0)

BUILTIN_NAMES = (
    "quartic1d",
    "threewell1d",
    "doublewell2d",
    "pitchfork_normal_form",
    "custom_polynomial",
)

# threewell1d: V'(x) = 1/4 (x+2)(x+1) x (x-1)(x-2.2), V(0) = 0.
# Minima at -2, 0, 2.2 (labelled x1, x2, x3 left to right), saddles at -1, 1.
THREEWELL_CRITICAL_POINTS = (-2.0, -1.0, 0.0, 1.0, 2.2)
THREEWELL_SCALE = 0.25


class PotentialError(ValueError):
    """Unknown builtin name or inadmissible parameters."""


@dataclass
class PotentialParams:
    """Serializable description of a builtin potential.

    ``values`` is a flat mapping of named real parameters. ``terms`` is only
    used by ``custom_polynomial`` and holds ``[coefficient, [exponents...]]``
    pairs, one per monomial.
    """

    name: str
    values: dict = field(default_factory=dict)
    terms: Optional[list] = None

    def to_dict(self) -> dict:
        out = {"name": self.name, "parameters": dict(self.values)}
        if self.terms is not None:
            out["terms"] = [[float(c), [int(e) for e in exps]] for c, exps in self.terms]
        return out

    @classmethod
    def from_dict(cls, record: dict) -> "PotentialParams":
        if "name" not in record:
            raise PotentialError("potential record needs a 'name'")
        terms = record.get("terms")
        if terms is not None:
            terms = [[float(c), [int(e) for e in exps]] for c, exps in terms]
        return cls(str(record["name"]), dict(record.get("parameters", {})), terms)


class Potential:
    """Smooth potential with value, gradient and Hessian maps.

    Parameters
    ----------
    dim : int
        Dimension ``d`` of configuration space.
    value : callable
        Maps an array of points ``(n, d)`` to values ``(n,)``.
    gradient, hessian : callable, optional
        Batched derivative maps ``(n, d) -> (n, d)`` and ``(n, d) -> (n, d, d)``.
        Missing derivatives are replaced by central finite differences with
        step ``eps**(1/3) * (1 + |x|)``.
    name : str, optional
    params : PotentialParams, optional
    """

    def __init__(self, dim: int, value: Callable, gradient: Optional[Callable] = None,
                 hessian: Optional[Callable] = None, name: Optional[str] = None,
                 params: Optional[PotentialParams] = None):
        if int(dim) < 1:
            raise PotentialError(f"dimension must be positive, got {dim}")
        self.dim = int(dim)
        self._value = value
        self._gradient = gradient
        self._hessian = hessian
        self.analytic = gradient is not None and hessian is not None
        self.name = name
        self.params = params

    def __repr__(self):
        return f"{type(self).__name__}(name={self.name!r}, dim={self.dim})"

    def _points(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 0 or x.shape[-1] != self.dim:
            raise ValueError(f"expected points with last axis {self.dim}, got shape {x.shape}")
        return x.reshape(-1, self.dim), x.shape[:-1]

    def value(self, x):
        pts, shape = self._points(x)
        out = np.asarray(self._value(pts), dtype=float).reshape(shape)
        return out[()] if out.ndim == 0 else out

    def gradient(self, x):
        pts, shape = self._points(x)
        if self._gradient is not None:
            g = np.asarray(self._gradient(pts), dtype=float)
        else:
            g = self._fd_gradient(pts)
        return g.reshape(shape + (self.dim,))

    def hessian(self, x):
        pts, shape = self._points(x)
        if self._hessian is not None:
            H = np.asarray(self._hessian(pts), dtype=float)
        else:
            H = self._fd_hessian(pts)
        return H.reshape(shape + (self.dim, self.dim))

    def laplacian(self, x):
        return np.trace(self.hessian(x), axis1=-2, axis2=-1)

    # finite-difference fallbacks
    def _fd_gradient(self, pts):
        g = np.empty_like(pts)
        for j in range(self.dim):
            h = _FD_STEP * (1.0 + np.abs(pts[:, j]))
            e = np.zeros_like(pts)
            e[:, j] = h
            g[:, j] = (self._value(pts + e) - self._value(pts - e)) / (2 * h)
        return g

    def _fd_hessian(self, pts):
        grad = self._gradient if self._gradient is not None else self._fd_gradient
        H = np.empty(pts.shape + (self.dim,))
        for j in range(self.dim):
            h = _FD_STEP * (1.0 + np.abs(pts[:, j]))
            e = np.zeros_like(pts)
            e[:, j] = h
            H[:, :, j] = (grad(pts + e) - grad(pts - e)) / (2 * h[:, None])
        return 0.5 * (H + np.swapaxes(H, 1, 2))

    # one-dimensional shorthands
    def _require_1d(self):
        if self.dim != 1:
            raise ValueError("scalar shorthands are only defined for one-dimensional potentials")

    def v(self, x):
        """Value of a 1D potential at an array of abscissae."""
        self._require_1d()
        return self.value(np.asarray(x, dtype=float)[..., None])

    def dv(self, x):
        """First derivative of a 1D potential."""
        self._require_1d()
        return self.gradient(np.asarray(x, dtype=float)[..., None])[..., 0]

    def d2v(self, x):
        """Second derivative of a 1D potential."""
        self._require_1d()
        return self.hessian(np.asarray(x, dtype=float)[..., None])[..., 0, 0]


class PolynomialPotential(Potential):
    """Polynomial potential given as a list of monomials.

    Parameters
    ----------
    dim : int
    terms : sequence of (coefficient, exponents)
        ``exponents`` has length ``dim``; the monomial is
        ``coefficient * prod(x[j] ** exponents[j])``.
    """

    def __init__(self, dim: int, terms: Sequence, name: Optional[str] = None,
                 params: Optional[PotentialParams] = None):
        self.terms = _normalize_terms(dim, terms)
        self._gterms = [_differentiate(self.terms, j) for j in range(dim)]
        self._hterms = [[_differentiate(self._gterms[i], j) for j in range(dim)]
                        for i in range(dim)]
        super().__init__(dim, self._eval_value, self._eval_gradient, self._eval_hessian,
                         name=name, params=params)

    @staticmethod
    def _eval(terms, pts):
        out = np.zeros(pts.shape[0])
        for c, exps in terms:
            mono = np.full(pts.shape[0], c)
            for j, e in enumerate(exps):
                if e:
                    mono = mono * pts[:, j] ** e
            out += mono
        return out

    def _eval_value(self, pts):
        return self._eval(self.terms, pts)

    def _eval_gradient(self, pts):
        return np.stack([self._eval(t, pts) for t in self._gterms], axis=-1)

    def _eval_hessian(self, pts):
        d = self.dim
        H = np.empty((pts.shape[0], d, d))
        for i in range(d):
            for j in range(i, d):
                H[:, i, j] = self._eval(self._hterms[i][j], pts)
                H[:, j, i] = H[:, i, j]
        return H


def _normalize_terms(dim, terms):
    merged = {}
    for c, exps in terms:
        exps = tuple(int(e) for e in exps)
        if len(exps) != dim:
            raise PotentialError(f"monomial exponents {exps} do not match dimension {dim}")
        if any(e < 0 for e in exps):
            raise PotentialError(f"negative exponent in monomial {exps}")
        merged[exps] = merged.get(exps, 0.0) + float(c)
    return [(c, e) for e, c in sorted(merged.items()) if c != 0.0]


def _differentiate(terms, j):
    out = []
    for c, exps in terms:
        if exps[j] == 0:
            continue
        new = list(exps)
        new[j] -= 1
        out.append((c * exps[j], tuple(new)))
    return out


def _poly1d_terms(coeffs):
    """Ascending 1D coefficients to monomial terms."""
    return [(float(c), (k,)) for k, c in enumerate(coeffs) if c != 0.0]


def _threewell_coefficients():
    dcoef = THREEWELL_SCALE * np.polynomial.polynomial.polyfromroots(THREEWELL_CRITICAL_POINTS)
    return np.polynomial.polynomial.polyint(dcoef)


def _require(values, key, default=None):
    if key in values:
        return float(values[key])
    if default is None:
        raise PotentialError(f"missing parameter {key!r}")
    return float(default)


def make_builtin(params: PotentialParams) -> Potential:
    """Construct a builtin potential.

    Recognized names:

    ``quartic1d``
        :math:`V(x) = x^4/4 - x^2/2`.
    ``threewell1d``
        Sixth-degree polynomial with :math:`V'(x) = \\tfrac14(x+2)(x+1)x(x-1)(x-2.2)`
        and :math:`V(0)=0`. Minima at -2, 0, 2.2 with depths ordered so that
        the rightmost well is deepest and the middle one shallowest.
    ``doublewell2d``
        :math:`V(x,y) = x^4/4 - x^2/2 + y^2/2`.
    ``pitchfork_normal_form``
        :math:`V(y) = \\tfrac12\\lambda_1 y_1^2 + \\tfrac12\\lambda_2 y_2^2 + C_4 y_2^4
        + \\tfrac12\\sum_{j\\ge3}\\lambda_j y_j^2` with ``lambda1 < 0``, ``C4 > 0``,
        ``d >= 2`` and ``lambda3 ... lambdad > 0`` (default 1).
    ``custom_polynomial``
        ``values['dim']`` plus ``terms`` as monomial list.
    """
    name = params.name
    vals = params.values
    if name == "quartic1d":
        return PolynomialPotential(1, _poly1d_terms([0, 0, -0.5, 0, 0.25]), name=name, params=params)
    if name == "threewell1d":
        return PolynomialPotential(1, _poly1d_terms(_threewell_coefficients()), name=name, params=params)
    if name == "doublewell2d":
        terms = [(0.25, (4, 0)), (-0.5, (2, 0)), (0.5, (0, 2))]
        return PolynomialPotential(2, terms, name=name, params=params)
    if name == "pitchfork_normal_form":
        l1 = _require(vals, "lambda1")
        l2 = _require(vals, "lambda2")
        c4 = _require(vals, "C4")
        d = int(_require(vals, "d", 2))
        if l1 >= 0:
            raise PotentialError(f"lambda1 must be negative, got {l1}")
        if c4 <= 0:
            raise PotentialError(f"C4 must be positive, got {c4}")
        if d < 2:
            raise PotentialError(f"pitchfork normal form needs d >= 2, got {d}")
        unit = lambda j: tuple(2 if i == j else 0 for i in range(d))
        terms = [(0.5 * l1, unit(0)), (0.5 * l2, unit(1)),
                 (c4, tuple(4 if i == 1 else 0 for i in range(d)))]
        for j in range(2, d):
            lj = _require(vals, f"lambda{j + 1}", 1.0)
            if lj <= 0:
                raise PotentialError(f"lambda{j + 1} must be positive, got {lj}")
            terms.append((0.5 * lj, unit(j)))
        return PolynomialPotential(d, terms, name=name, params=params)
    if name == "custom_polynomial":
        d = int(_require(vals, "dim", 1))
        return PolynomialPotential(d, params.terms or [], name=name, params=params)
    raise PotentialError(f"unknown potential {name!r}; expected one of {BUILTIN_NAMES}")


def builtin(name: str, **values) -> Potential:
    """Shorthand for ``make_builtin(PotentialParams(name, values))``."""
    terms = values.pop("terms", None)
    return make_builtin(PotentialParams(name, values, terms))


def check_derivatives(p: Potential, x, h: float = 1e-5) -> dict:
    """Compare analytic derivatives against central finite differences.

    The gradient is checked against differences of the value map, the Hessian
    against differences of the gradient map (second differences of values at
    ``h = 1e-5`` are dominated by roundoff).

    Returns
    -------
    dict
        ``gradient`` and ``hessian`` hold the maximum absolute deviations,
        ``grad_norm`` the Euclidean norm of the analytic gradient at ``x``.
    """
    if not h > 0:
        raise ValueError(f"step must be positive, got {h}")
    x = np.asarray(x, dtype=float).reshape(p.dim)
    g = p.gradient(x)
    H = p.hessian(x)
    fd_g = np.empty(p.dim)
    fd_H = np.empty((p.dim, p.dim))
    for j in range(p.dim):
        e = np.zeros(p.dim)
        e[j] = h
        vp, vm = p.value(x + e), p.value(x - e)
        gp, gm = p.gradient(x + e), p.gradient(x - e)
        if not (np.isfinite(vp) and np.isfinite(vm) and np.all(np.isfinite(gp)) and np.all(np.isfinite(gm))):
            raise FloatingPointError(f"potential not finite near {x} along axis {j}")
        fd_g[j] = (vp - vm) / (2 * h)
        fd_H[:, j] = (gp - gm) / (2 * h)
    return {
        "gradient": float(np.max(np.abs(g - fd_g))),
        "hessian": float(np.max(np.abs(H - fd_H))),
        "grad_norm": float(np.linalg.norm(g)),
    }
