"""
Monte Carlo engine for :math:`dx_t = f(x_t)dt + \\sqrt{2\\varepsilon}dW_t`.

Euler-Maruyama steps ``x <- x + f(x) dt + sqrt(2 eps dt) xi``. Replicas advance
in lockstep as numpy arrays, but each replica owns an independent random
stream, so results do not depend on batching or threading.

RNG splitting rule: replica ``i`` of master seed ``s`` uses
``numpy.random.PCG64(SeedSequence(s, spawn_key=(i,)))``, which is the ``i``-th
child of ``SeedSequence(s).spawn(n)``. Normals are drawn in blocks of
:data:`BLOCK` steps per replica.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate, stats

from .potential import Potential

BLOCK = 512
GUARD_RADIUS = 1.0e3
RNG_FAMILY = "numpy.random.PCG64 / SeedSequence(seed, spawn_key=(replica,))"
VALID_CENSOR_FRACTION = 0.01


class SimulationError(RuntimeError):
    """Raised when no replica produced a usable sample."""


@dataclass(frozen=True)
class Ball:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", np.atleast_1d(np.asarray(self.center, dtype=float)))
        if not self.radius > 0:
            raise ValueError(f"target radius must be positive, got {self.radius}")

    def contains(self, x):
        return np.linalg.norm(x - self.center, axis=-1) <= self.radius


@dataclass
class SimConfig:
    """Simulation parameters.

    ``target`` is required for hitting-time sampling, where the step must
    satisfy ``dt <= radius**2 / (10 eps)`` so that ball entries are resolved.
    """

    eps: float
    dt: float
    max_time: float
    target: Optional[Ball] = None
    seed: int = 0
    n: int = 1000

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.eps < 0:
            raise ValueError(f"eps must be non-negative, got {self.eps}")
        if not self.max_time > 0:
            raise ValueError(f"max_time must be positive, got {self.max_time}")
        if int(self.n) < 1:
            raise ValueError(f"replica count must be positive, got {self.n}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if self.target is not None and self.eps > 0:
            bound = self.target.radius ** 2 / (10 * self.eps)
            if self.dt > bound:
                raise ValueError(f"dt={self.dt} exceeds the resolution bound radius^2/(10 eps)={bound:.3g}")

    @property
    def n_steps(self) -> int:
        return int(math.ceil(self.max_time / self.dt - 1e-9))


def replica_rng(seed: int, replica: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(int(replica),))))


def gradient_drift(p: Potential) -> Callable:
    return lambda x: -p.gradient(x)


# ----------------------------------------------------------------- domains

class Interval:
    """Open interval ``(lo, hi)`` of the real line (either end may be infinite)."""

    def __init__(self, lo=-np.inf, hi=np.inf):
        self.lo, self.hi = float(lo), float(hi)
        self.center = np.array([0.5 * (lo + hi) if np.isfinite(lo + hi) else (lo if np.isfinite(lo) else hi)])

    def contains(self, x):
        return (x[..., 0] > self.lo) & (x[..., 0] < self.hi)

    def crossing(self, x0, x1):
        a, b = x0[..., 0], x1[..., 0]
        edge = np.where(b >= self.hi, self.hi, self.lo)
        with np.errstate(divide="ignore", invalid="ignore"):
            s = (edge - a) / (b - a)
        return np.clip(np.nan_to_num(s, nan=1.0), 0.0, 1.0)


class Disk:
    """Open disk of given center and radius in the plane."""

    def __init__(self, center, radius):
        self.center = np.asarray(center, dtype=float)
        self.radius = float(radius)

    def contains(self, x):
        return np.linalg.norm(x - self.center, axis=-1) < self.radius

    def crossing(self, x0, x1):
        # smallest s in [0, 1] with |x0 + s(x1 - x0) - c| = R
        u = x0 - self.center
        v = x1 - x0
        A = np.sum(v * v, axis=-1)
        B = 2 * np.sum(u * v, axis=-1)
        C = np.sum(u * u, axis=-1) - self.radius ** 2
        disc = np.sqrt(np.maximum(B * B - 4 * A * C, 0.0))
        with np.errstate(divide="ignore", invalid="ignore"):
            s = (-B + disc) / (2 * A)
        return np.clip(np.nan_to_num(s, nan=1.0), 0.0, 1.0)


class Polygon:
    """Simple polygon given by its vertices in counter-clockwise order."""

    def __init__(self, vertices, center=None):
        self.vertices = np.asarray(vertices, dtype=float)
        self.center = (np.asarray(center, dtype=float) if center is not None
                       else self.vertices.mean(axis=0))

    @classmethod
    def box(cls, lo, hi, center=None):
        (x0, y0), (x1, y1) = lo, hi
        return cls([(x0, y0), (x1, y0), (x1, y1), (x0, y1)], center=center)

    def contains(self, x):
        px, py = x[..., 0], x[..., 1]
        inside = np.zeros(px.shape, dtype=bool)
        vx, vy = self.vertices[:, 0], self.vertices[:, 1]
        for i in range(len(vx)):
            j = i - 1
            cond = (vy[i] > py) != (vy[j] > py)
            with np.errstate(divide="ignore", invalid="ignore"):
                xint = (vx[j] - vx[i]) * (py - vy[i]) / (vy[j] - vy[i]) + vx[i]
            inside ^= cond & (px < xint)
        return inside

    def crossing(self, x0, x1):
        best = np.ones(x0.shape[:-1])
        d = x1 - x0
        for i in range(len(self.vertices)):
            a = self.vertices[i - 1]
            e = self.vertices[i] - a
            den = d[..., 0] * e[1] - d[..., 1] * e[0]
            w = a - x0
            with np.errstate(divide="ignore", invalid="ignore"):
                s = (w[..., 0] * e[1] - w[..., 1] * e[0]) / den
                t = (w[..., 0] * d[..., 1] - w[..., 1] * d[..., 0]) / den
            hit = (den != 0) & (s >= 0) & (s <= 1) & (t >= 0) & (t <= 1)
            best = np.where(hit & (s < best), s, best)
        return best


# ------------------------------------------------------------------ engine

def _lockstep(drift, x0, eps, dt, n_steps, replicas, seed, stop=None, guard=GUARD_RADIUS):
    """Advance replicas until ``stop(x_new)`` fires, the step budget runs out,
    or a replica leaves the guard ball.

    Returns per-replica arrays: number of steps taken when stopped (or -1),
    aborted flags, and the state before and after the stopping step.
    """
    replicas = np.asarray(replicas, dtype=np.int64)
    n = len(replicas)
    d = len(x0)
    gens = [replica_rng(seed, r) for r in replicas]
    x = np.tile(np.asarray(x0, dtype=float), (n, 1))
    steps = np.full(n, -1, dtype=np.int64)
    aborted = np.zeros(n, dtype=bool)
    before = np.full((n, d), np.nan)
    after = np.full((n, d), np.nan)
    active = np.arange(n)
    amp = math.sqrt(2 * eps * dt)
    k = 0
    while k < n_steps and active.size:
        nb = min(BLOCK, n_steps - k)
        noise = np.stack([gens[i].standard_normal((BLOCK, d)) for i in active], axis=1)[:nb]
        xa = x[active]
        live = np.ones(active.size, dtype=bool)
        for j in range(nb):
            xn = xa + drift(xa) * dt + amp * noise[j]
            if stop is not None:
                hit = live & stop(xa, xn)
                if hit.any():
                    idx = active[hit]
                    steps[idx] = k + j + 1
                    before[idx] = xa[hit]
                    after[idx] = xn[hit]
                    live &= ~hit
            blown = live & ~(np.linalg.norm(xn, axis=-1) < guard)
            if blown.any():
                aborted[active[blown]] = True
                live &= ~blown
            xa = np.where(live[:, None], xn, xa)
        x[active] = xa
        active = active[live]
        k += nb
    return steps, aborted, before, after


def _split(n, threads):
    threads = max(1, int(threads))
    return [c for c in np.array_split(np.arange(n), threads) if c.size]


def _run(drift, x0, cfg, stop, threads=1):
    chunks = _split(cfg.n, threads)
    job = lambda c: _lockstep(drift, x0, cfg.eps, cfg.dt, cfg.n_steps, c, cfg.seed, stop)
    if len(chunks) == 1:
        parts = [job(chunks[0])]
    else:
        with ThreadPoolExecutor(len(chunks)) as pool:
            parts = list(pool.map(job, chunks))
    return tuple(np.concatenate(arrs) for arrs in zip(*parts))


def simulate_em(p, x0, cfg: SimConfig, replica: int = 0, drift: Optional[Callable] = None):
    """Single Euler-Maruyama trajectory of length ``cfg.max_time``.

    Uses the random stream of ``replica`` under ``cfg.seed``; identical inputs
    give bit-identical output.

    Returns
    -------
    t : ndarray, shape (n_steps + 1,)
    x : ndarray, shape (n_steps + 1, d)
    aborted : bool
        True if the trajectory left the guard ball; it is truncated there.
    """
    f = drift if drift is not None else gradient_drift(p)
    x = np.atleast_1d(np.asarray(x0, dtype=float))
    d = x.size
    n_steps = cfg.n_steps
    rng = replica_rng(cfg.seed, replica)
    amp = math.sqrt(2 * cfg.eps * cfg.dt)
    out = np.empty((n_steps + 1, d))
    out[0] = x
    k = 0
    while k < n_steps:
        nb = min(BLOCK, n_steps - k)
        noise = rng.standard_normal((BLOCK, d))[:nb]
        for j in range(nb):
            x = x + f(x[None, :])[0] * cfg.dt + amp * noise[j]
            out[k + j + 1] = x
            if not np.linalg.norm(x) < GUARD_RADIUS:
                last = k + j + 1
                return np.arange(last + 1) * cfg.dt, out[: last + 1], True
        k += nb
    return np.arange(n_steps + 1) * cfg.dt, out, False


@dataclass
class HittingStats:
    """First-hitting (or exit) time samples and their summary.

    ``times`` holds one entry per replica in replica order, ``nan`` where the
    replica was censored at ``max_time`` or aborted. Summary statistics use
    the sorted uncensored samples.
    """

    times: np.ndarray
    censored: np.ndarray
    aborted: np.ndarray
    max_time: float
    mean: float = field(init=False)
    stderr: float = field(init=False)
    ks: float = field(init=False)

    def __post_init__(self):
        s = self.samples
        if s.size == 0:
            raise SimulationError("all replicas were censored or aborted")
        self.mean = math.fsum(s) / s.size
        self.stderr = float(np.std(s, ddof=1) / math.sqrt(s.size)) if s.size > 1 else float("inf")
        self.ks = float(stats.kstest(s / self.mean, "expon").statistic)

    @property
    def samples(self) -> np.ndarray:
        return np.sort(self.times[np.isfinite(self.times)])

    @property
    def censored_fraction(self) -> float:
        return float(np.mean(self.censored | self.aborted))

    @property
    def valid(self) -> bool:
        return self.censored_fraction < VALID_CENSOR_FRACTION

    def to_dict(self) -> dict:
        return {
            "n": int(self.times.size),
            "n_censored": int(self.censored.sum()),
            "n_aborted": int(self.aborted.sum()),
            "censored_fraction": self.censored_fraction,
            "max_time": float(self.max_time),
            "mean": self.mean,
            "stderr": self.stderr,
            "ks": self.ks,
            "valid": self.valid,
        }


def _stats_from_steps(steps, aborted, cfg):
    times = np.where(steps > 0, steps * cfg.dt, np.nan)
    censored = (steps < 0) & ~aborted
    return HittingStats(times, censored, aborted, cfg.max_time)


def sample_hitting_times(p: Potential, x0, cfg: SimConfig, threads: int = 1,
                         drift: Optional[Callable] = None) -> HittingStats:
    """First entrance times of ``cfg.target`` for ``cfg.n`` independent replicas.

    Entry is detected when the state after a step lies in the closed ball.
    """
    if cfg.target is None:
        raise ValueError("hitting-time sampling needs cfg.target")
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if cfg.target.contains(x0):
        raise ValueError("start point lies inside the target ball")
    f = drift if drift is not None else gradient_drift(p)
    steps, aborted, _, _ = _run(f, x0, cfg, lambda xo, xn: cfg.target.contains(xn), threads)
    return _stats_from_steps(steps, aborted, cfg)


@dataclass
class ExitSample:
    """First-exit data: times plus interpolated crossing points and their angles."""

    stats: HittingStats
    points: np.ndarray
    angles: np.ndarray
    edges: np.ndarray
    counts: np.ndarray


def sample_exit(drift: Callable, x0, domain, cfg: SimConfig, threads: int = 1) -> tuple:
    """First exit of ``domain`` for ``cfg.n`` replicas.

    Returns ``(stats, points)`` where ``points`` are the boundary crossings
    reconstructed by linear interpolation within the exit step (``nan`` rows
    for censored replicas).
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if not domain.contains(x0[None, :])[0]:
        raise ValueError("start point lies outside the domain")
    steps, aborted, before, after = _run(drift, x0, cfg,
                                         lambda xo, xn: ~domain.contains(xn), threads)
    ok = steps > 0
    s = np.full(steps.shape, np.nan)
    if ok.any():
        s[ok] = domain.crossing(before[ok], after[ok])
    points = before + s[:, None] * (after - before)
    # crossing happens during the last step; refine the time accordingly
    steps_f = np.where(ok, steps - 1 + np.nan_to_num(s, nan=1.0), steps)
    times = np.where(ok, steps_f * cfg.dt, np.nan)
    hs = HittingStats(times, (steps < 0) & ~aborted, aborted, cfg.max_time)
    return hs, points


def exit_location_histogram(drift: Callable, x0, domain, cfg: SimConfig, bins: int = 36,
                            threads: int = 1) -> ExitSample:
    """Angular histogram of first-exit points about ``domain.center``.

    Angles are in ``[-pi, pi)``; the histogram has ``bins`` equal bins.
    """
    hs, points = sample_exit(drift, x0, domain, cfg, threads)
    ok = np.all(np.isfinite(points), axis=-1)
    rel = points[ok] - domain.center
    if rel.shape[-1] < 2:
        raise ValueError("angular histograms need a planar domain")
    angles = np.arctan2(rel[:, 1], rel[:, 0])
    counts, edges = np.histogram(angles, bins=bins, range=(-math.pi, math.pi))
    return ExitSample(hs, points, angles, edges, counts)


@dataclass
class InvariantHistogram:
    edges: np.ndarray
    density: np.ndarray
    exact: np.ndarray
    l1: float
    samples_per_bin: float
    warning: Optional[str] = None


def invariant_histogram(p: Potential, cfg: SimConfig, bins: int = 50, x0=None,
                        burn_in: float = 0.1, span: Optional[tuple] = None,
                        periodic: Optional[tuple] = None) -> InvariantHistogram:
    """Occupation histogram of a 1D diffusion against :math:`e^{-V/\\varepsilon}/Z`.

    The run consists of ``cfg.n`` independent chains of length ``cfg.max_time``
    each (total occupation time ``n * max_time``), the first ``burn_in``
    fraction of every chain being discarded. ``periodic=(lo, hi)`` wraps the
    state onto a circle. Returns the normalized histogram, the exact bin
    averages of the Gibbs density, and their L1 distance.
    """
    if p.dim != 1:
        raise ValueError("invariant_histogram supports one-dimensional potentials")
    if periodic is not None:
        lo, hi = map(float, periodic)
    elif span is not None:
        lo, hi = map(float, span)
    else:
        lo, hi = _gibbs_span(p, cfg.eps)
    if x0 is None:
        starts = np.linspace(lo, hi, cfg.n + 2)[1:-1] if periodic else None
    n_steps = cfg.n_steps
    keep_from = int(burn_in * n_steps)
    counts = np.zeros(bins)
    edges = np.linspace(lo, hi, bins + 1)
    gens = [replica_rng(cfg.seed, r) for r in range(cfg.n)]
    if x0 is not None:
        x = np.full(cfg.n, float(np.atleast_1d(x0)[0]))
    elif starts is not None:
        x = starts.copy()
    else:
        x = _gibbs_starts(p, cfg.eps, lo, hi, cfg.n)
    amp = math.sqrt(2 * cfg.eps * cfg.dt)
    k = 0
    while k < n_steps:
        nb = min(BLOCK, n_steps - k)
        noise = np.stack([g.standard_normal(BLOCK) for g in gens], axis=1)[:nb]
        block = np.empty((nb, cfg.n))
        for j in range(nb):
            x = x - p.dv(x) * cfg.dt + amp * noise[j]
            if periodic is not None:
                x = lo + np.mod(x - lo, hi - lo)
            block[j] = x
        first = max(0, keep_from - k)
        if first < nb:
            counts += np.histogram(block[first:], bins=edges)[0]
        k += nb
    total = counts.sum()
    width = np.diff(edges)
    density = counts / (total * width) if total else counts
    exact = _gibbs_bins(p, cfg.eps, edges, periodic is not None)
    l1 = float(np.sum(np.abs(density - exact) * width))
    per_bin = total / bins
    warning = None
    if per_bin < 10:
        warning = f"only {per_bin:.1f} samples per bin on average"
    return InvariantHistogram(edges, density, exact, l1, per_bin, warning)


def _gibbs_span(p, eps, cut=30.0):
    xs = np.linspace(-50, 50, 200001)
    vs = p.v(xs)
    keep = np.nonzero(vs - vs.min() < cut * eps)[0]
    return float(xs[keep[0]]), float(xs[keep[-1]])


def _gibbs_starts(p, eps, lo, hi, n):
    # deterministic quantiles of the Gibbs law, so chains start in equilibrium
    xs = np.linspace(lo, hi, 20001)
    w = np.exp(-(p.v(xs) - p.v(xs).min()) / eps)
    cdf = np.cumsum(w)
    cdf /= cdf[-1]
    return np.interp((np.arange(n) + 0.5) / n, cdf, xs)


def _gibbs_bins(p, eps, edges, periodic):
    vmin = float(np.min(p.v(np.linspace(edges[0], edges[-1], 4001))))
    g = lambda y: math.exp(-(float(p.v(y)) - vmin) / eps)
    masses = np.array([integrate.quad(g, a, b, epsabs=0, epsrel=1e-10)[0]
                       for a, b in zip(edges[:-1], edges[1:])])
    if not periodic:
        lo, hi = edges[0], edges[-1]
        z = integrate.quad(g, lo - 50, hi + 50, points=[lo, hi], limit=400)[0]
    else:
        z = masses.sum()
    return masses / (z * np.diff(edges))
