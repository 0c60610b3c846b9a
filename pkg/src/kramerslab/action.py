"""
Large-deviation rate functional on discrete paths.

A path is ``phi_0, ..., phi_n`` at uniform spacing ``dt``. The functional
``I = 1/2 int |phi' - f(phi)|^2 dt`` is discretized by the midpoint rule,

.. math:: I_n = \\frac{\\Delta t}{2}\\sum_k \\Big|\\frac{\\phi_{k+1}-\\phi_k}{\\Delta t}
          - f\\Big(\\frac{\\phi_k+\\phi_{k+1}}{2}\\Big)\\Big|^2,

which is a sum of squares. Minimization over interior points therefore uses
Levenberg-Marquardt steps with the exact (banded) Jacobian of the discrete
residuals, i.e. the adjoint of the midpoint rule. The outer infimum over the duration ``T`` is taken by a
bounded scalar search over ``log T``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy import optimize

from .potential import Potential

GRAD_TOL = 1e-8
T_BRACKET = (5.0, 200.0)


@dataclass
class DiscretePath:
    """Points ``phi_0..phi_n`` (shape ``(n+1, d)``) at time step ``dt``."""

    dt: float
    points: np.ndarray
    fixed_endpoints: bool = True

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        self.points = pts
        if pts.shape[0] < 3:
            raise ValueError("a path needs n >= 2 steps")
        if not self.dt > 0:
            raise ValueError("dt must be positive")

    @classmethod
    def linear(cls, start, end, T: float, n: int) -> "DiscretePath":
        a = np.atleast_1d(np.asarray(start, dtype=float))
        b = np.atleast_1d(np.asarray(end, dtype=float))
        s = np.linspace(0.0, 1.0, n + 1)[:, None]
        return cls(T / n, a + s * (b - a))

    @property
    def n(self) -> int:
        return self.points.shape[0] - 1

    @property
    def T(self) -> float:
        return self.n * self.dt

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.n + 1)

    @property
    def midpoints(self) -> np.ndarray:
        return 0.5 * (self.points[1:] + self.points[:-1])

    @property
    def velocities(self) -> np.ndarray:
        return np.diff(self.points, axis=0) / self.dt

    def rows(self):
        """``(t, phi_1, ..., phi_d)`` per point, for CSV output."""
        return np.column_stack([self.times, self.points])


def _drift_of(p_or_f) -> Callable:
    if isinstance(p_or_f, Potential):
        return lambda x: -p_or_f.gradient(x)
    return p_or_f


def rate_functional(path: DiscretePath, drift) -> float:
    """Midpoint discretization of ``1/2 int |phi' - f(phi)|^2 dt``.

    ``drift`` is a vector field (callable on ``(m, d)`` arrays) or a
    :class:`Potential`, meaning ``f = -grad V``.
    """
    f = _drift_of(drift)
    r = path.velocities - f(path.midpoints)
    return 0.5 * path.dt * float(np.sum(r * r))


@dataclass
class Decomposition:
    """Both sides of ``I = 1/2 int |phi' - grad V|^2 + 2 [V(end) - V(start)]``."""

    forward: float
    reversed: float
    boundary: float

    @property
    def defect(self) -> float:
        return self.forward - self.reversed - self.boundary


def gradient_decomposition(path: DiscretePath, p: Potential) -> Decomposition:
    """Split the action of a gradient system into the reversed-flow residual and a boundary term."""
    g = p.gradient(path.midpoints)
    v = path.velocities
    fwd = 0.5 * path.dt * float(np.sum((v + g) ** 2))
    rev = 0.5 * path.dt * float(np.sum((v - g) ** 2))
    vs = p.value(path.points[[0, -1]])
    return Decomposition(fwd, rev, 2.0 * float(vs[1] - vs[0]))


# --------------------------------------------------------------- minimizer

def _fd_jacobian(f, x, h=1e-7):
    m, d = x.shape
    out = np.empty((m, d, d))
    for j in range(d):
        e = np.zeros(d)
        e[j] = h * (1 + np.abs(x[:, j])).max()
        out[:, :, j] = (f(x + e) - f(x - e)) / (2 * e[j])
    return out


class _Problem:
    """Residuals ``sqrt(dt/2) (dphi/dt - f(mid))`` over interior unknowns."""

    def __init__(self, f, jac_f, a, b, n, dt):
        self.f, self.jac_f = f, jac_f
        self.a, self.b = a, b
        self.n, self.dt = n, dt
        self.d = a.size
        self.c = math.sqrt(0.5 * dt)

    def full(self, z):
        return np.vstack([self.a, z.reshape(self.n - 1, self.d), self.b])

    def residuals(self, z):
        phi = self.full(z)
        mid = 0.5 * (phi[1:] + phi[:-1])
        return (self.c * (np.diff(phi, axis=0) / self.dt - self.f(mid))).ravel()

    def jacobian(self, z):
        phi = self.full(z)
        mid = 0.5 * (phi[1:] + phi[:-1])
        Df = self.jac_f(mid)                 # (n, d, d)
        eye = np.eye(self.d)
        left = self.c * (-eye / self.dt - 0.5 * Df)    # d r_k / d phi_k
        right = self.c * (eye / self.dt - 0.5 * Df)    # d r_k / d phi_{k+1}
        n, d = self.n, self.d
        rows, cols, vals = [], [], []
        ii, jj = np.meshgrid(np.arange(d), np.arange(d), indexing="ij")
        for k in range(n):
            if k >= 1:
                rows.append(k * d + ii.ravel())
                cols.append((k - 1) * d + jj.ravel())
                vals.append(left[k].ravel())
            if k <= n - 2:
                rows.append(k * d + ii.ravel())
                cols.append(k * d + jj.ravel())
                vals.append(right[k].ravel())
        return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                             shape=(n * d, (n - 1) * d))

    def curvature(self, z, r):
        """Second-order part ``sum r . Hess(r)`` of the half-Hessian of ``|r|^2``.

        Needs ``sum_i r_i D^2 f_i`` at each midpoint, obtained by central
        differences of ``Df^T r`` along the coordinate axes.
        """
        phi = self.full(z)
        mid = 0.5 * (phi[1:] + phi[:-1])
        n, d = self.n, self.d
        rk = r.reshape(n, d)
        T = np.empty((n, d, d))
        for l in range(d):
            step = 1e-5 * (1.0 + np.abs(mid[:, l]))
            e = np.zeros((n, d))
            e[:, l] = step
            jp = np.einsum("kij,ki->kj", self.jac_f(mid + e), rk)
            jm = np.einsum("kij,ki->kj", self.jac_f(mid - e), rk)
            T[:, :, l] = (jp - jm) / (2 * step[:, None])
        T = 0.5 * (T + T.transpose(0, 2, 1))
        # d^2 r_k / d(phi_k, phi_{k+1})^2 = -(c/4) D^2 f on every 2x2 block
        B = -0.25 * self.c * T
        N = (n - 1) * d
        ii, jj = np.meshgrid(np.arange(d), np.arange(d), indexing="ij")
        rows, cols, vals = [], [], []
        k = np.arange(n)
        for da, db in ((-1, -1), (-1, 0), (0, -1), (0, 0)):
            a_, b_ = k + da, k + db
            ok = (a_ >= 0) & (a_ <= n - 2) & (b_ >= 0) & (b_ <= n - 2)
            rows.append((a_[ok, None] * d + ii.ravel()).ravel())
            cols.append((b_[ok, None] * d + jj.ravel()).ravel())
            vals.append(B[ok].reshape(-1, d * d).ravel())
        return sp.csc_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                             shape=(N, N))


@dataclass
class ActionResult:
    """Minimizing path and value; ``trace`` lists ``(T, I)`` pairs visited."""

    path: DiscretePath
    action: float
    T: float
    converged: bool
    grad_norm: float
    iterations: int
    bracket: Tuple[float, float]
    at_bracket_edge: bool
    trace: List[Tuple[float, float]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "action": self.action,
            "T": self.T,
            "n": self.path.n,
            "converged": self.converged,
            "grad_norm": self.grad_norm,
            "iterations": self.iterations,
            "bracket": list(self.bracket),
            "at_bracket_edge": self.at_bracket_edge,
            "trace": [[float(t), float(i)] for t, i in self.trace],
        }


def _minimize_fixed_T(f, jac_f, a, b, T, n, init, max_iter):
    dt = T / n
    prob = _Problem(f, jac_f, a, b, n, dt)
    if init is None:
        z0 = DiscretePath.linear(a, b, T, n).points[1:-1].ravel()
    else:
        pts = np.asarray(init.points if isinstance(init, DiscretePath) else init, dtype=float)
        pts = pts.reshape(pts.shape[0], -1)
        if pts.shape[0] != n + 1:
            s_old = np.linspace(0, 1, pts.shape[0])
            s_new = np.linspace(0, 1, n + 1)
            pts = np.column_stack([np.interp(s_new, s_old, pts[:, j]) for j in range(pts.shape[1])])
        z0 = pts[1:-1].ravel()
    z, cost, gnorm, it = _levenberg_marquardt(prob, z0, max_iter)
    return DiscretePath(dt, prob.full(z)), cost, gnorm, it


def _levenberg_marquardt(prob, z, max_iter):
    """Damped Newton iteration on the banded Hessian ``J^T J + sum r Hess r``.

    Falls back towards Gauss-Newton/gradient steps through the damping when
    the full Hessian is indefinite. Stops when the gradient of the discrete
    functional, ``2 J^T r``, has norm at most ``GRAD_TOL`` or no step reduces
    the cost any further.
    """
    r = prob.residuals(z)
    cost = float(r @ r)
    mu = 1e-3
    gnorm = math.inf
    it = 0
    for it in range(1, max_iter + 1):
        J = prob.jacobian(z)
        g = J.T @ r
        gnorm = 2.0 * float(np.linalg.norm(g))
        if gnorm <= GRAD_TOL:
            break
        JtJ = (J.T @ J).tocsc()
        H = JtJ + prob.curvature(z, r)
        dg = JtJ.diagonal()
        improved = False
        while mu < 1e16:
            step = spla.spsolve((H + sp.diags(mu * dg)).tocsc(), -g)
            z_new = z + step
            r_new = prob.residuals(z_new)
            c_new = float(r_new @ r_new)
            if np.isfinite(c_new) and c_new <= cost:
                improved = c_new < cost or np.linalg.norm(step) == 0
                z, r, cost = z_new, r_new, c_new
                mu = max(mu / 3.0, 1e-12)
                break
            mu *= 4.0
        if not improved:
            gnorm = 2.0 * float(np.linalg.norm(prob.jacobian(z).T @ r))
            break
    return z, cost, gnorm, it


def minimize_action(p_or_f, start, end, T: Optional[float] = None, n: int = 400,
                    init=None, bracket: Sequence[float] = T_BRACKET,
                    jacobian: Optional[Callable] = None, max_iter: int = 200,
                    t_tol: float = 1e-3) -> ActionResult:
    """Minimize the discrete action between fixed endpoints.

    With ``T`` given, only the path is optimized. Otherwise ``T`` is searched
    in ``bracket`` by bounded Brent minimization over ``log T`` (each
    evaluation warm-started from the previous path). Convergence means the
    gradient of the discrete functional has norm at most 1e-8.

    Parameters
    ----------
    p_or_f : Potential or callable
        Potential (drift ``-grad V``, exact Jacobian ``-Hess V``) or a drift
        vector field; for the latter ``jacobian`` may supply ``Df`` on
        ``(m, d)`` arrays, else central differences are used.
    """
    a = np.atleast_1d(np.asarray(start, dtype=float))
    b = np.atleast_1d(np.asarray(end, dtype=float))
    if a.shape != b.shape:
        raise ValueError("endpoints have different dimensions")
    if np.allclose(a, b):
        raise ValueError("endpoints must be distinct")
    if n < 2:
        raise ValueError("need n >= 2")
    if isinstance(p_or_f, Potential):
        f = lambda x: -p_or_f.gradient(x)
        jac_f = lambda x: -p_or_f.hessian(x)
    else:
        f = p_or_f
        jac_f = jacobian if jacobian is not None else (lambda x: _fd_jacobian(f, x))
    trace: List[Tuple[float, float]] = []
    if T is not None:
        path, I, g, it = _minimize_fixed_T(f, jac_f, a, b, float(T), n, init, max_iter)
        trace.append((float(T), I))
        return ActionResult(path, I, float(T), g <= GRAD_TOL, g, it, (float(T), float(T)), False, trace)

    lo, hi = map(float, bracket)
    if not 0 < lo < hi:
        raise ValueError("bad T bracket")
    cache = {}
    state = {"init": init}

    def objective(logT):
        T_ = math.exp(logT)
        out = _minimize_fixed_T(f, jac_f, a, b, T_, n, state["init"], max_iter)
        state["init"] = out[0]
        cache[logT] = (T_,) + out
        trace.append((T_, out[1]))
        return out[1]

    res = optimize.minimize_scalar(objective, bounds=(math.log(lo), math.log(hi)), method="bounded",
                                   options={"xatol": t_tol})
    for edge in (math.log(lo), math.log(hi)):
        objective(edge)
    best = min(cache.values(), key=lambda v: v[2])
    T_, path, I, g, it = best
    edge = math.isclose(T_, lo, rel_tol=1e-6) or math.isclose(T_, hi, rel_tol=1e-6)
    # polish the winner from its own path so the reported gradient is final
    path, I, g, it2 = _minimize_fixed_T(f, jac_f, a, b, T_, n, path, max_iter)
    return ActionResult(path, I, T_, g <= GRAD_TOL, g, it + it2, (lo, hi), edge, trace)


# ---------------------------------------------------------- quasipotential

@dataclass
class ExitQuasipotential:
    vbar: float
    boundary_point: np.ndarray
    action: Optional[float] = None

    def to_dict(self) -> dict:
        out = {"vbar": self.vbar, "boundary_point": [float(v) for v in self.boundary_point]}
        if self.action is not None:
            out["action"] = self.action
        return out


def quasipotential_exit(p: Potential, xstar, boundary_points, cross_check: bool = False,
                        n: int = 400) -> ExitQuasipotential:
    """``2 (min over sampled boundary of V - V(xstar))`` for a gradient system.

    With ``cross_check`` the action is also minimized from ``xstar`` to the
    boundary minimizer.
    """
    pts = np.asarray(boundary_points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None] if p.dim == 1 else pts[None, :]
    if pts.shape[-1] != p.dim:
        raise ValueError("boundary points have the wrong dimension")
    vals = p.value(pts)
    k = int(np.argmin(vals))
    x0 = np.atleast_1d(np.asarray(xstar, dtype=float))
    vbar = 2.0 * (float(vals[k]) - float(p.value(x0)))
    out = ExitQuasipotential(vbar, pts[k])
    if cross_check:
        out.action = minimize_action(p, x0, pts[k], n=n).action
    return out
