"""
Grid solvers for the committor, capacities and generator spectra.

Everything is assembled in the weighted divergence form
``L u = eps e^{V/eps} div(e^{-V/eps} grad u)``. Each lattice edge carries a
conductance ``w = exp(-V_mid/eps)``. Edges with cell Peclet number
``|dV|/eps > 2`` switch to the Scharfetter-Gummel weight
``exp(-V_i/eps) x / (e^x - 1)``, ``x = (V_j - V_i)/eps``: it is exact for a
linear potential along the edge and keeps the matrix an M-matrix. All weights
are divided by ``exp(-V_ref/eps)``, with ``V_ref`` the grid minimum, so
capacities are returned together with that shift.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, List, Optional, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .potential import Potential

PECLET_SWITCH = 2.0
RESIDUAL_TOL = 1e-10
OUTER_MARGIN = 20.0
DENSE_LIMIT = 2000

INTERIOR, IN_A, IN_B = 0, 1, 2


class SolverError(RuntimeError):
    """Linear or eigen-solver failure."""


# ------------------------------------------------------------- discrete walk

def _thomas(sub, diag, sup, rhs):
    """Tridiagonal elimination, exact when the inputs are Fractions."""
    n = len(diag)
    c = [Fraction(0)] * n
    d = [Fraction(0)] * n
    c[0] = sup[0] / diag[0] if n > 1 else Fraction(0)
    d[0] = rhs[0] / diag[0]
    for i in range(1, n):
        den = diag[i] - sub[i] * c[i - 1]
        c[i] = sup[i] / den if i < n - 1 else Fraction(0)
        d[i] = (rhs[i] - sub[i] * d[i - 1]) / den
    x = [Fraction(0)] * n
    x[-1] = d[-1]
    for i in range(n - 2, -1, -1):
        x[i] = d[i] - c[i] * x[i + 1]
    return x


def walk_committor(a: int, b: int, x: int) -> Fraction:
    """Probability that a simple random walk from ``x`` hits ``a`` before ``b``.

    Solves ``h(y) = (h(y-1) + h(y+1))/2`` on ``a < y < b``, ``h(a) = 1``,
    ``h(b) = 0`` exactly.
    """
    a, b, x = int(a), int(b), int(x)
    if not a < b:
        raise ValueError("need a < b")
    if not a <= x <= b:
        raise ValueError("x must lie in [a, b]")
    if x == a:
        return Fraction(1)
    if x == b:
        return Fraction(0)
    n = b - a - 1
    half = Fraction(1, 2)
    rhs = [Fraction(0)] * n
    rhs[0] = half
    h = _thomas([-half] * n, [Fraction(1)] * n, [-half] * n, rhs)
    return h[x - a - 1]


def walk_mean_time(N: int, x: int) -> Fraction:
    """Mean absorption time of a simple random walk on ``{0, ..., N}`` started at ``x``.

    Solves ``(w(y-1) - 2w(y) + w(y+1))/2 = -1`` with ``w(0) = w(N) = 0``.
    """
    N, x = int(N), int(x)
    if N < 1 or not 0 <= x <= N:
        raise ValueError("need 0 <= x <= N, N >= 1")
    if x in (0, N):
        return Fraction(0)
    n = N - 1
    half = Fraction(1, 2)
    w = _thomas([-half] * n, [Fraction(1)] * n, [-half] * n, [Fraction(1)] * n)
    return w[x - 1]


# ------------------------------------------------------------------- regions

@dataclass(frozen=True)
class Region:
    """Closed set used as a Dirichlet boundary.

    ``kind`` is one of ``ball`` (|x - c| <= r), ``outside`` (|x - c| >= r),
    ``halfspace`` (x[axis] >= r if ``upper`` else x[axis] <= r).
    """

    kind: str
    center: tuple = (0.0,)
    radius: float = 0.0
    axis: int = 0
    upper: bool = True

    def contains(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        if self.kind == "halfspace":
            x = pts[..., self.axis]
            return x >= self.radius if self.upper else x <= self.radius
        r = np.linalg.norm(pts - np.asarray(self.center, dtype=float), axis=-1)
        if self.kind == "ball":
            return r <= self.radius
        if self.kind == "outside":
            return r >= self.radius
        raise ValueError(f"unknown region kind {self.kind!r}")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "center": list(self.center), "radius": self.radius,
                "axis": self.axis, "upper": self.upper}

    @classmethod
    def from_dict(cls, d: dict) -> "Region":
        return cls(d["kind"], tuple(float(c) for c in d.get("center", (0.0,))), float(d.get("radius", 0.0)),
                   int(d.get("axis", 0)), bool(d.get("upper", True)))


def ball(center, radius) -> Region:
    return Region("ball", tuple(float(c) for c in np.atleast_1d(center)), float(radius))


def outside(center, radius) -> Region:
    return Region("outside", tuple(float(c) for c in np.atleast_1d(center)), float(radius))


# --------------------------------------------------------------------- grid

@dataclass
class GridField:
    """Scalar field on a uniform lattice with Dirichlet labels.

    ``labels`` uses 0 for interior, 1 for A (value 1) and 2 for B (value 0).
    ``edge_weights[k]`` are the scaled conductances of edges along axis ``k``;
    the true conductance is ``eps/h_k^2 * weight * exp(-v_ref/eps)``.
    """

    axes: List[np.ndarray]
    spacing: np.ndarray
    values: np.ndarray
    labels: np.ndarray
    eps: float
    v_ref: float
    edge_weights: List[np.ndarray] = field(repr=False)
    node_weights: np.ndarray = field(repr=False)
    residual: float = 0.0

    @property
    def shape(self):
        return self.values.shape

    @property
    def dim(self) -> int:
        return self.values.ndim

    @property
    def h(self) -> float:
        return float(np.max(self.spacing))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def points(self) -> np.ndarray:
        return np.stack(np.meshgrid(*self.axes, indexing="ij"), axis=-1)

    @property
    def extents(self):
        return [(float(ax[0]), float(ax[-1])) for ax in self.axes]

    def sidecar(self) -> dict:
        return {
            "dtype": "float64",
            "order": "C",
            "shape": list(self.shape),
            "extents": self.extents,
            "spacing": [float(v) for v in self.spacing],
            "eps": self.eps,
            "labels": {"interior": INTERIOR, "A": IN_A, "B": IN_B},
            "label_counts": {k: int(np.sum(self.labels == v))
                             for k, v in (("interior", INTERIOR), ("A", IN_A), ("B", IN_B))},
            "residual": self.residual,
        }

    def save(self, path: str) -> None:
        """Write ``path`` (raw float64, C order) and ``path.json`` (sidecar)."""
        np.ascontiguousarray(self.values, dtype="<f8").tofile(path)
        np.ascontiguousarray(self.labels, dtype="i1").tofile(path + ".labels")
        with open(path + ".json", "w") as fh:
            json.dump(self.sidecar(), fh, indent=2, sort_keys=True)


def _lattice(box, h):
    """Nodes ``linspace(lo, hi, n)`` per axis with spacing at most ``h``."""
    box = np.asarray(box, dtype=float).reshape(-1, 2)
    if not h > 0:
        raise ValueError("grid spacing must be positive")
    if np.any(box[:, 1] <= box[:, 0]):
        raise ValueError("degenerate box")
    counts = [int(math.ceil((hi - lo) / h - 1e-9)) + 1 for lo, hi in box]
    if min(counts) < 3:
        raise ValueError("grid needs at least 3 nodes per axis")
    axes = [np.linspace(lo, hi, n) for (lo, hi), n in zip(box, counts)]
    spacing = np.array([(hi - lo) / (n - 1) for (lo, hi), n in zip(box, counts)])
    return counts, spacing, axes


def _weights_from_values(vi, vj, vmid, eps, v_ref):
    x = (vj - vi) / eps
    if vmid is None:
        vmid = 0.5 * (vi + vj)
    mid = np.exp(-np.minimum((vmid - v_ref) / eps, 700.0))
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        bern = np.where(np.abs(x) > 1e-12, x / np.expm1(x), 1.0)
        sg = np.exp(-np.minimum((vi - v_ref) / eps, 700.0)) * bern
    return np.where(np.abs(x) > PECLET_SWITCH, np.nan_to_num(sg), mid)


def _midpoint_weights(p, axes, eps, v_ref, V):
    """Edge weights using the exact potential at edge midpoints."""
    d = len(axes)
    out = []
    for k in range(d):
        mid_axes = list(axes)
        mid_axes[k] = 0.5 * (axes[k][:-1] + axes[k][1:])
        mesh = np.stack(np.meshgrid(*mid_axes, indexing="ij"), axis=-1)
        vmid = p.value(mesh.reshape(-1, d)).reshape(mesh.shape[:-1])
        sl_lo = [slice(None)] * d
        sl_hi = [slice(None)] * d
        sl_lo[k] = slice(0, -1)
        sl_hi[k] = slice(1, None)
        out.append(_weights_from_values(V[tuple(sl_lo)], V[tuple(sl_hi)], vmid, eps, v_ref))
    return out


def _stiffness(weights, shape):
    """Sparse graph Laplacian ``sum_e w_e (u_j - u_i)^2`` as a matrix (positive semidefinite)."""
    n = int(np.prod(shape))
    idx = np.arange(n).reshape(shape)
    rows, cols, vals = [], [], []
    diag = np.zeros(n)
    for k, w in enumerate(weights):
        sl_lo = [slice(None)] * len(shape)
        sl_hi = [slice(None)] * len(shape)
        sl_lo[k] = slice(0, -1)
        sl_hi[k] = slice(1, None)
        i = idx[tuple(sl_lo)].ravel()
        j = idx[tuple(sl_hi)].ravel()
        wv = w.ravel()
        rows += [i, j]
        cols += [j, i]
        vals += [-wv, -wv]
        np.add.at(diag, i, wv)
        np.add.at(diag, j, wv)
    rows.append(np.arange(n))
    cols.append(np.arange(n))
    vals.append(diag)
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))


def committor_grid(p: Potential, box: Sequence, A, B, eps: float, h: float) -> GridField:
    """Committor ``P[hit A before B]`` on a uniform grid over ``box``.

    Solves ``eps Lap h - grad V . grad h = 0`` with ``h = 1`` on A, ``h = 0``
    on B and no-flux conditions on the box faces. ``A`` and ``B`` are
    :class:`Region` objects (anything with ``contains(points)``).

    The symmetric system is solved by sparse LU; the relative residual is
    stored on the result and must be below 1e-10.
    """
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    counts, spacing, axes = _lattice(box, h)
    d = len(counts)
    if d != p.dim:
        raise ValueError(f"box has {d} axes, potential has {p.dim}")
    if d > 2:
        raise ValueError("grid solves are limited to d <= 2")
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    V = p.value(pts.reshape(-1, d)).reshape(counts)
    v_ref = float(V.min())
    inA = np.asarray(A.contains(pts))
    inB = np.asarray(B.contains(pts))
    if not inA.any():
        raise ValueError("set A contains no grid node")
    if not inB.any():
        raise ValueError("set B contains no grid node")
    if (inA & inB).any():
        raise ValueError("sets A and B overlap on the grid")
    labels = np.zeros(counts, dtype=np.int8)
    labels[inA] = IN_A
    labels[inB] = IN_B
    weights = _midpoint_weights(p, axes, eps, v_ref, V)
    K = _stiffness([w * (spacing.prod() / spacing[k] ** 2) for k, w in enumerate(weights)], counts)
    free = (labels.ravel() == INTERIOR)
    fixed_vals = np.where(labels.ravel() == IN_A, 1.0, 0.0)
    Kff = K[free][:, free].tocsc()
    rhs = -(K[free][:, ~free] @ fixed_vals[~free])
    values = fixed_vals.copy()
    if free.any():
        # Jacobi scaling keeps the LU well conditioned when weights span many decades
        s = 1.0 / np.sqrt(Kff.diagonal())
        Ks = sp.diags(s) @ Kff @ sp.diags(s)
        try:
            y = spla.spsolve(Ks.tocsc(), s * rhs)
        except RuntimeError as exc:
            raise SolverError(str(exc)) from exc
        sol = s * y
        res = float(np.linalg.norm(Kff @ sol - rhs, np.inf) / max(np.linalg.norm(rhs, np.inf), 1e-300))
        if not np.isfinite(res) or res > RESIDUAL_TOL:
            raise SolverError(f"committor solve residual {res:.3e} exceeds {RESIDUAL_TOL}")
        values[free] = sol
    else:
        res = 0.0
    node_w = np.exp(-np.minimum((V - v_ref) / eps, 700.0))
    return GridField(axes, spacing, values.reshape(counts), labels, float(eps), v_ref,
                     weights, node_w, res)


def dirichlet_form(field: GridField, u: Optional[np.ndarray] = None) -> float:
    """``eps * sum_k (prod h)/h_k^2 * sum_e w_e (u_j - u_i)^2`` in scaled units.

    The factor ``exp(-v_ref/eps)`` is omitted.
    """
    u = field.values if u is None else u
    total = 0.0
    for k, w in enumerate(field.edge_weights):
        du = np.diff(u, axis=k)
        total += field.cell_volume / field.spacing[k] ** 2 * float(np.sum(w * du * du))
    return field.eps * total


def capacity_from_field(field: GridField, p: Optional[Potential] = None, scaled: bool = False) -> float:
    """Capacity as the weighted Dirichlet form of the committor field.

    Equals ``eps * sum |grad h|^2 exp(-V/eps) h^d`` with gradients on lattice
    edges. ``scaled=True`` omits the factor ``exp(-v_ref/eps)``.
    """
    cap = dirichlet_form(field)
    return cap if scaled else cap * math.exp(-field.v_ref / field.eps)


def _trapezoid_weights(shape, cell_volume):
    w = np.ones(shape)
    for k, n in enumerate(shape):
        edge = [1.0] * n
        edge[0] = edge[-1] = 0.5
        sh = [1] * len(shape)
        sh[k] = n
        w = w * np.asarray(edge).reshape(sh)
    return w * cell_volume


@dataclass
class PotentialTheoryEstimate:
    """Mean transition time as (numerator / capacity), with the Laplace numerator alongside.

    ``numerator`` and ``capacity`` are scaled by ``exp(v_ref/eps)``; ratios
    are in true units.
    """

    mean_time: float
    numerator: float
    capacity: float
    laplace_numerator: float
    laplace_mean_time: float
    v_ref: float
    field: GridField = field(repr=False)

    def to_dict(self) -> dict:
        return {
            "mean_time": self.mean_time,
            "laplace_mean_time": self.laplace_mean_time,
            "numerator_scaled": self.numerator,
            "capacity_scaled": self.capacity,
            "laplace_numerator_scaled": self.laplace_numerator,
            "v_ref": self.v_ref,
            "eps": self.field.eps,
            "h": self.field.h,
        }


def mean_time_potential_theory(p: Potential, xstar, target, eps: float, h: float, box: Sequence,
                               radius: Optional[float] = None) -> PotentialTheoryEstimate:
    """Mean time to reach ``target`` from the minimum ``xstar``.

    Solves for the committor between the ball ``C`` of given ``radius``
    (default ``eps``) around ``xstar`` and ``target``, then returns
    ``int_{A^c} h_{C,A} exp(-V/eps) / cap_C(A)``.
    """
    xstar = np.atleast_1d(np.asarray(xstar, dtype=float))
    r = float(eps if radius is None else radius)
    C = ball(xstar, r)
    counts, spacing, axes = _lattice(box, h)
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    if np.any(C.contains(pts) & target.contains(pts)):
        raise ValueError("the ball around the minimum overlaps the target set")
    fld = committor_grid(p, box, C, target, eps, h)
    cap = capacity_from_field(fld, scaled=True)
    keep = fld.labels != IN_B
    num = float(np.sum((fld.values * fld.node_weights * _trapezoid_weights(fld.shape, fld.cell_volume))[keep]))
    hess = p.hessian(xstar)
    eigs = np.linalg.eigvalsh(0.5 * (hess + hess.T))
    if np.any(eigs <= 0):
        raise ValueError("xstar is not a nondegenerate minimum")
    lap = float(np.prod(np.sqrt(2 * math.pi * eps / eigs)) * math.exp(-(float(p.value(xstar)) - fld.v_ref) / eps))
    return PotentialTheoryEstimate(num / cap, num, cap, lap, lap / cap, fld.v_ref, fld)


# ------------------------------------------------------------------- spectra

def schrodinger_potential(p: Potential, eps: float) -> Callable:
    """``U(x) = eps V''(x)/2 - V'(x)^2/4`` for a one-dimensional potential.

    The generator ``eps d^2 - V' d`` is conjugate, via ``exp(-V/2eps)``, to
    ``eps d^2 + U/eps``.
    """
    if p.dim != 1:
        raise ValueError("schrodinger_potential is one-dimensional")
    return lambda x: 0.5 * eps * p.d2v(x) - 0.25 * p.dv(x) ** 2


def confining_span(p: Potential, eps: float, margin: float = OUTER_MARGIN, reach: float = 50.0):
    """Interval whose ends satisfy ``V >= V(highest interior max) + margin*eps``."""
    xs = np.linspace(-reach, reach, 400001)
    vs = p.v(xs)
    interior = np.nonzero((vs[1:-1] <= vs[:-2]) & (vs[1:-1] <= vs[2:]))[0] + 1
    if interior.size == 0:
        raise ValueError("no local minimum found")
    k0, k1 = interior[0], interior[-1]
    top = float(vs[k0:k1 + 1].max()) + margin * eps
    left = np.nonzero(vs[:k0] >= top)[0]
    right = np.nonzero(vs[k1:] >= top)[0]
    if left.size == 0 or right.size == 0:
        raise ValueError("potential is not confining within reach")
    return float(xs[left[-1]]), float(xs[k1 + right[0]])


@dataclass
class SpectrumReport:
    """Lowest eigenvalues of the discretized generator and its symmetric conjugate.

    Eigenvalues are non-positive and sorted by magnitude; ``generator`` comes
    from the non-symmetric matrix ``M^{-1} K``, ``conjugated`` from the
    symmetric ``M^{-1/2} K M^{-1/2}`` and ``schrodinger`` from finite
    differences of ``eps d^2 + U/eps`` with zero Dirichlet data.
    """

    generator: np.ndarray
    conjugated: np.ndarray
    schrodinger: np.ndarray
    h: float
    span: tuple
    eps: float

    def relative_gap(self) -> np.ndarray:
        """Relative difference of generator and conjugated eigenvalues (index 0 skipped)."""
        g, c = self.generator[1:], self.conjugated[1:]
        return np.abs(g - c) / np.abs(c)

    def count_small(self, threshold: float, zero_tol: float = 1e-10) -> int:
        """Number of eigenvalues with ``zero_tol < |lambda| < threshold``."""
        mags = np.abs(self.conjugated)
        return int(np.sum((mags > zero_tol) & (mags < threshold)))

    def to_dict(self) -> dict:
        return {
            "generator": [float(v) for v in self.generator],
            "conjugated": [float(v) for v in self.conjugated],
            "schrodinger": [float(v) for v in self.schrodinger],
            "h": self.h,
            "span": list(self.span),
            "eps": self.eps,
        }


def generator_matrices(p: Potential, eps: float, span, n: int):
    """Stiffness ``K`` (symmetric, scaled) and lumped masses ``m`` on ``n`` nodes.

    ``(M^{-1} K) u`` approximates ``eps u'' - V' u'`` with no-flux ends.
    """
    x = np.linspace(span[0], span[1], n)
    h = x[1] - x[0]
    V = p.v(x)
    v_ref = float(V.min())
    w = _weights_from_values(V[:-1], V[1:], p.v(0.5 * (x[:-1] + x[1:])), eps, v_ref)
    K = -(eps / h) * _stiffness([w], (n,)).toarray()
    m = np.exp(-(V - v_ref) / eps) * h
    m[0] *= 0.5
    m[-1] *= 0.5
    return x, K, m


def raw_generator_1d(p: Potential, eps: float, x: np.ndarray) -> sp.csr_matrix:
    """Central-difference advection form ``eps u'' - V' u'`` on interior nodes (rows 1..n-2)."""
    h = x[1] - x[0]
    n = len(x)
    dv = p.dv(x[1:-1])
    rows = np.repeat(np.arange(1, n - 1), 3)
    cols = np.stack([np.arange(0, n - 2), np.arange(1, n - 1), np.arange(2, n)], axis=1).ravel()
    vals = np.stack([eps / h ** 2 + dv / (2 * h), np.full(n - 2, -2 * eps / h ** 2),
                     eps / h ** 2 - dv / (2 * h)], axis=1).ravel()
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def _lowest(vals, m):
    vals = np.real_if_close(vals)
    vals = np.real(vals)
    return np.sort(vals)[::-1][:m]


def generator_spectrum_1d(p: Potential, eps: float, n: int = 1201, m: int = 6,
                          span: Optional[tuple] = None) -> SpectrumReport:
    """Lowest-magnitude eigenvalues of the generator on a reflecting interval.

    Two assemblies of the same discretization are diagonalized: the balanced
    non-symmetric generator and its symmetric conjugate. A direct finite
    difference of the Schrödinger form is reported as a third, independent
    discretization.
    """
    if p.dim != 1:
        raise ValueError("generator_spectrum_1d is one-dimensional")
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    span = confining_span(p, eps) if span is None else tuple(map(float, span))
    x, K, mass = generator_matrices(p, eps, span, n)
    h = x[1] - x[0]
    root = np.sqrt(mass)
    S = K / np.outer(root, root)
    S = 0.5 * (S + S.T)
    try:
        if n < DENSE_LIMIT:
            conj = sla.eigh(S, eigvals_only=True, subset_by_index=[n - m, n - 1])
            gen = sla.eigvals(K / mass[:, None])
        else:
            Ss = sp.csr_matrix(S)
            conj = spla.eigsh(Ss, k=m, sigma=1e-3, which="LM", return_eigenvectors=False)
            gen = spla.eigs(sp.csr_matrix(K / mass[:, None]), k=m, sigma=1e-3, which="LM",
                            return_eigenvectors=False)
    except (np.linalg.LinAlgError, spla.ArpackError) as exc:
        raise SolverError(str(exc)) from exc
    gen = _lowest(gen, m)
    conj = _lowest(conj, m)
    # direct Schrodinger form on the same nodes, Dirichlet ends
    U = schrodinger_potential(p, eps)(x[1:-1])
    k = len(U)
    Hs = sp.diags([np.full(k - 1, eps / h ** 2), -2 * eps / h ** 2 + U / eps, np.full(k - 1, eps / h ** 2)],
                  [-1, 0, 1]).toarray()
    schro = sla.eigh(Hs, eigvals_only=True, subset_by_index=[k - m, k - 1])
    return SpectrumReport(gen, conj, _lowest(schro, m), float(h), span, float(eps))
