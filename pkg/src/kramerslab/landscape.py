"""
Critical points, communication heights and the metastable hierarchy.

The communication height between two minima is the lowest level ``H`` such
that a path joining them stays in ``{V <= H}``. In one dimension it is the
maximum of ``V`` between the points. In the plane it is found by flooding a
grid: cells are added in order of increasing ``V`` and merged with their
already-flooded neighbours (union-find) until both minima share a component.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from scipy import optimize

from .potential import Potential

NEWTON_TOL = 1e-10
DEDUPE_TOL = 1e-6
DEGENERACY_RTOL = 1e-6
FLOOD_CELLS = 256


class ResolutionError(ValueError):
    """The flooding grid cannot separate the requested basins."""


class HierarchyError(ValueError):
    """No metastable ordering satisfies the separation condition at this theta."""


@dataclass
class CriticalPoint:
    """A critical point of ``V`` with its Hessian spectrum.

    ``index`` is the number of negative Hessian eigenvalues; ``degenerate``
    is set when some eigenvalue is below ``1e-6 * max |eigenvalue|`` in size.
    """

    location: np.ndarray
    value: float
    eigenvalues: np.ndarray
    index: int = field(init=False)
    degenerate: bool = field(init=False)

    def __post_init__(self):
        self.location = np.atleast_1d(np.asarray(self.location, dtype=float))
        self.eigenvalues = np.sort(np.atleast_1d(np.asarray(self.eigenvalues, dtype=float)))
        self.value = float(self.value)
        scale = float(np.max(np.abs(self.eigenvalues))) if self.eigenvalues.size else 0.0
        self.degenerate = bool(np.any(np.abs(self.eigenvalues) <= DEGENERACY_RTOL * scale)) or scale == 0.0
        self.index = int(np.sum(self.eigenvalues < 0))

    @classmethod
    def at(cls, p: Potential, x) -> "CriticalPoint":
        x = np.atleast_1d(np.asarray(x, dtype=float))
        h = p.hessian(x)
        return cls(x, float(p.value(x)), np.linalg.eigvalsh(0.5 * (h + h.T)))

    @property
    def is_minimum(self) -> bool:
        return self.index == 0 and not self.degenerate

    @property
    def is_saddle(self) -> bool:
        return self.index == 1

    @property
    def dim(self) -> int:
        return self.location.size

    def to_row(self) -> dict:
        row = {f"x{i}": float(v) for i, v in enumerate(self.location)}
        row["value"] = self.value
        row.update({f"lambda{i}": float(v) for i, v in enumerate(self.eigenvalues)})
        row["index"] = self.index
        row["degenerate"] = int(self.degenerate)
        return row


@dataclass
class TransitionSpec:
    """Start minimum, target minimum (ball radius ``delta``), relevant saddle and height."""

    start: CriticalPoint
    target: CriticalPoint
    saddle: CriticalPoint
    height: float
    delta: float = 0.1

    def __post_init__(self):
        if self.start.index != 0 or self.target.index != 0:
            raise ValueError("start and target must be local minima")
        if self.barrier < -1e-12:
            raise ValueError(f"negative barrier {self.barrier}")

    @property
    def barrier(self) -> float:
        return self.height - self.start.value

    def to_dict(self) -> dict:
        return {
            "start": self.start.location.tolist(),
            "target": self.target.location.tolist(),
            "saddle": self.saddle.location.tolist(),
            "height": self.height,
            "barrier": self.barrier,
            "delta": self.delta,
        }


# ------------------------------------------------------------ critical points

def _polish(p: Potential, x, gn, steps: int = 3):
    """Extra Newton steps at a nondegenerate point, kept only while they shrink the gradient."""
    for _ in range(steps):
        h = p.hessian(x)
        if gn == 0 or np.linalg.cond(h) > 1e8:
            break
        y = x - np.linalg.solve(h, p.gradient(x))
        gy = float(np.linalg.norm(p.gradient(y)))
        if not gy < gn:
            break
        x, gn = y, gy
    return x


def refine(p: Potential, x0, tol: float = NEWTON_TOL, max_iter: int = 100):
    """Newton iteration on ``grad V = 0``; returns the point or ``None``.

    Near-singular Hessians are handled by steps along ``-H grad V``, the descent
    direction of ``|grad V|^2 / 2``.
    """
    x = np.atleast_1d(np.asarray(x0, dtype=float)).copy()
    for _ in range(max_iter):
        g = p.gradient(x)
        gn = float(np.linalg.norm(g))
        if not np.isfinite(gn):
            return None
        if gn <= tol:
            return _polish(p, x, gn)
        h = p.hessian(x)
        try:
            if np.linalg.cond(h) > 1e12:
                raise np.linalg.LinAlgError
            step = np.linalg.solve(h, g)
        except np.linalg.LinAlgError:
            step = h @ g
            nrm = np.linalg.norm(step)
            step = step / nrm * min(nrm, 0.1) if nrm > 0 else g * 0.1
        # damp wild jumps
        sn = np.linalg.norm(step)
        if sn > 1.0:
            step *= 1.0 / sn
        x = x - step
    return x if np.linalg.norm(p.gradient(x)) <= tol else None


def find_critical_points(p: Potential, box: Sequence, n_seeds: int = 21,
                         newton_tol: float = NEWTON_TOL,
                         dedupe_tol: float = DEDUPE_TOL) -> List[CriticalPoint]:
    """Critical points of ``p`` reachable by Newton from a seed grid in ``box``.

    Parameters
    ----------
    box : sequence of (lo, hi)
        One pair per axis.
    n_seeds : int
        Seeds per axis (at least 2).

    Returns
    -------
    list of CriticalPoint
        Sorted lexicographically by location, duplicates within ``dedupe_tol``
        merged. Points outside the box are dropped. Seeds where Newton fails are
        silently skipped, so the result may be empty.
    """
    box = np.asarray(box, dtype=float).reshape(-1, 2)
    if box.shape[0] != p.dim:
        raise ValueError(f"box has {box.shape[0]} axes, potential has {p.dim}")
    if np.any(box[:, 1] <= box[:, 0]):
        raise ValueError("degenerate box")
    if n_seeds < 2:
        raise ValueError("need at least 2 seeds per axis")
    axes = [np.linspace(lo, hi, n_seeds) for lo, hi in box]
    slack = 1e-9 * (1 + np.abs(box).max())
    found = []
    for seed in itertools.product(*axes):
        x = refine(p, np.array(seed), newton_tol)
        if x is None:
            continue
        if np.all(x >= box[:, 0] - slack) and np.all(x <= box[:, 1] + slack):
            found.append(x)
    found.sort(key=lambda v: tuple(v))
    unique: List[np.ndarray] = []
    for x in found:
        if all(np.linalg.norm(x - u) > dedupe_tol for u in unique):
            unique.append(x)
    return [CriticalPoint.at(p, x) for x in unique]


def minima(points: Sequence[CriticalPoint]) -> List[CriticalPoint]:
    return [c for c in points if c.index == 0]


def saddles(points: Sequence[CriticalPoint]) -> List[CriticalPoint]:
    return [c for c in points if c.index == 1]


# ------------------------------------------------------ communication height

def _scan_max(p: Potential, a: float, b: float, n: int = 20001):
    lo, hi = min(a, b), max(a, b)
    xs = np.linspace(lo, hi, n)
    vs = p.v(xs)
    k = int(np.argmax(vs))
    if 0 < k < n - 1:
        res = optimize.minimize_scalar(lambda t: -float(p.v(t)), bounds=(xs[k - 1], xs[k + 1]),
                                       method="bounded", options={"xatol": 1e-13})
        if -res.fun >= vs[k]:
            return float(-res.fun), float(res.x)
    return float(vs[k]), float(xs[k])


class _DisjointSet:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, i):
        root = i
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[i] != root:
            self.parent[i], i = root, self.parent[i]
        return root

    def union(self, i, j):
        ri, rj = self.find(i), self.find(j)
        if ri != rj:
            self.parent[max(ri, rj)] = min(ri, rj)


def _default_box(a, b):
    lo = np.minimum(a, b)
    hi = np.maximum(a, b)
    pad = np.maximum(1.0, 0.5 * (hi - lo).max())
    return np.stack([lo - pad, hi + pad], axis=1)


def flood(p: Potential, a, b, box=None, cells: int = FLOOD_CELLS):
    """Sublevel-set flooding on a grid of cell centres.

    Returns ``(level, merge_point, cell_size)``: the grid value at which the
    components containing ``a`` and ``b`` first join, and the cell whose
    addition joined them.
    """
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    d = a.size
    if d > 3:
        raise ValueError("grid flooding is limited to d <= 3")
    box = _default_box(a, b) if box is None else np.asarray(box, dtype=float).reshape(d, 2)
    n = cells if d > 1 else max(cells, 4096)
    axes = [np.linspace(lo, hi, n) for lo, hi in box]
    h = np.array([ax[1] - ax[0] for ax in axes])
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    shape = mesh.shape[:-1]
    vals = p.value(mesh.reshape(-1, d))
    cell_of = lambda x: int(np.ravel_multi_index(tuple(np.clip(np.rint((x - box[:, 0]) / h).astype(int), 0, n - 1)), shape))
    ia, ib = cell_of(a), cell_of(b)
    if ia == ib:
        raise ResolutionError("both minima fall in the same grid cell")
    ds = _DisjointSet(vals.size)
    added = np.zeros(vals.size, dtype=bool)
    strides = [int(np.prod(shape[k + 1:])) for k in range(d)]
    order = np.argsort(vals, kind="stable")
    for c in order:
        c = int(c)
        added[c] = True
        idx = np.unravel_index(c, shape)
        for k in range(d):
            for sgn in (-1, 1):
                j = idx[k] + sgn
                if 0 <= j < n:
                    nb = c + sgn * strides[k]
                    if added[nb]:
                        ds.union(c, nb)
        if added[ia] and added[ib] and ds.find(ia) == ds.find(ib):
            if c in (ia, ib):
                raise ResolutionError("basins merge at a minimum cell; grid too coarse")
            return float(vals[c]), mesh.reshape(-1, d)[c], h
    raise ResolutionError("basins never merged inside the box")


def communication_height(p: Potential, a, b, method: Optional[str] = None, box=None,
                         cells: int = FLOOD_CELLS):
    """Communication height between minima ``a`` and ``b`` and the saddle location.

    ``method`` is ``"scan"`` (1D default) or ``"flood"`` (default for d >= 2).
    After flooding, the merge cell is refined by Newton; the refined saddle is
    kept if it lies within two cell diameters, otherwise the grid value is
    returned.
    """
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    if method is None:
        method = "scan" if p.dim == 1 else "flood"
    if method == "scan":
        if p.dim != 1:
            raise ValueError("scan method is one-dimensional")
        H, z = _scan_max(p, float(a[0]), float(b[0]))
        return H, np.array([z])
    if method != "flood":
        raise ValueError(f"unknown method {method!r}")
    level, where, h = flood(p, a, b, box, cells)
    z = refine(p, where)
    if z is not None and np.linalg.norm(z - where) <= 2 * np.linalg.norm(h):
        H = float(p.value(z))
        if H >= max(float(p.value(a)), float(p.value(b))):
            return H, z
    return level, where


def set_height(p: Potential, x, targets, **kw) -> float:
    """Communication height between ``x`` and the nearest-in-height of ``targets``."""
    return min(communication_height(p, x, t, **kw)[0] for t in targets)


def transition_spec(p: Potential, start, target, delta: float = 0.1, **kw) -> TransitionSpec:
    """Assemble a :class:`TransitionSpec` with the saddle classified at its refined location."""
    H, z = communication_height(p, start, target, **kw)
    return TransitionSpec(CriticalPoint.at(p, start), CriticalPoint.at(p, target),
                          CriticalPoint.at(p, z), H, delta)


# ----------------------------------------------------------------- hierarchy

@dataclass
class Hierarchy:
    """Minima ordered deepest first, with per-level heights.

    ``heights[k]`` is ``H(x_{k+1}, M_k)`` for the ``(k+1)``-th point (0-based
    ``heights[0]`` is ``nan``, the deepest minimum has no target).
    ``depths`` stores the corresponding ``H - V`` barriers.
    """

    order: List[CriticalPoint]
    heights: List[float]
    depths: List[float]
    theta: float
    table: dict = field(default_factory=dict, repr=False)

    def labels(self):
        return [tuple(np.round(c.location, 6)) for c in self.order]

    def verify(self) -> bool:
        # every level: the removed point's depth beats all competitors by theta
        for k in range(len(self.order) - 1, 0, -1):
            members = self.order[: k + 1]
            own = self.depths[k]
            for i in range(k):
                rest = [m for j, m in enumerate(members) if j != i]
                other = _depth(self.table, members[i], rest)
                if own > other - self.theta:
                    return False
        return True


def _key(c):
    return tuple(c.location)


def _depth(table, x, others):
    return min(table[(_key(x), _key(o))] for o in others) - x.value


def metastable_order(minima: Sequence[CriticalPoint], p: Potential, theta: float, **kw) -> Hierarchy:
    """Order minima from deepest to shallowest with separation ``theta``.

    Starting from the full set ``M_n``, the point removed at each level is the
    one whose barrier ``H(x, M_k minus x) - V(x)`` is smallest; it must beat
    every other member of ``M_k`` by at least ``theta``, otherwise
    :class:`HierarchyError` is raised.
    """
    if not theta > 0:
        raise ValueError("theta must be positive")
    pts = list(minima)
    if len(pts) < 2:
        raise ValueError("need at least two minima")
    if any(c.index != 0 for c in pts):
        raise ValueError("all points must be local minima")
    table = {}
    for x, y in itertools.combinations(pts, 2):
        H = communication_height(p, x.location, y.location, **kw)[0]
        table[(_key(x), _key(y))] = table[(_key(y), _key(x))] = H
    remaining = pts[:]
    tail, tail_heights, tail_depths = [], [], []
    while len(remaining) > 1:
        scores = []
        for i, x in enumerate(remaining):
            rest = remaining[:i] + remaining[i + 1:]
            scores.append(_depth(table, x, rest))
        k = int(np.argmin(scores))
        others = [s for j, s in enumerate(scores) if j != k]
        if scores[k] > min(others) - theta:
            raise HierarchyError(
                f"hierarchy not resolvable at theta={theta}: barriers {sorted(scores)} tie within theta")
        x = remaining.pop(k)
        tail.append(x)
        tail_depths.append(scores[k])
        tail_heights.append(scores[k] + x.value)
    order = remaining + tail[::-1]
    heights = [math.nan] + tail_heights[::-1]
    depths = [math.nan] + tail_depths[::-1]
    return Hierarchy(order, heights, depths, float(theta), table)
