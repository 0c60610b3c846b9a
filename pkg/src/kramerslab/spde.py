"""Allen-Cahn chain: lattice energy, stationary states, spectra and prefactors.

The field ``u`` on ``[0, L]`` is sampled at ``N`` cell centres with spacing
``a = L / N``. The lattice energy

    V[u] = sum_i a * ( (u_{i+1} - u_i)^2 / (2 a^2) + U(u_i) ),  U(u) = u^4/4 - u^2/2,

has Hessian ``a * Q`` where ``Q`` is the discrete linearization
``-v'' - f'(u) v``. The Langevin chain that approximates space-time white
noise is the gradient flow of ``V / a`` with per-site noise ``eps / a``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy import linalg

from .landscape import refine
from .potential import Potential, PotentialParams
from .rate import psi_plus, quadratic_prefactor
from .sde import Ball, HittingStats, SimConfig, sample_hitting_times

BOUNDARY_CONDITIONS = ("neumann", "periodic")
MIN_SITES = 8


class SPDEError(RuntimeError):
    """Newton or eigensolver failure on the chain."""


def local_potential(u):
    return 0.25 * u ** 4 - 0.5 * u ** 2


def local_force(u):
    """``f(u) = -U'(u) = u - u^3``."""
    return u - u ** 3


class ChainPotential(Potential):
    """Lattice energy of the Allen-Cahn field.

    Parameters
    ----------
    L : float
        Interval length.
    N : int
        Number of sites, at least 8.
    bc : {"neumann", "periodic"}
    """

    def __init__(self, L: float, N: int, bc: str = "neumann"):
        if bc not in BOUNDARY_CONDITIONS:
            raise ValueError(f"unknown boundary condition {bc!r}; expected one of {BOUNDARY_CONDITIONS}")
        if int(N) < MIN_SITES:
            raise ValueError(f"need N >= {MIN_SITES}, got {N}")
        if not L > 0:
            raise ValueError("L must be positive")
        self.L = float(L)
        self.N = int(N)
        self.bc = bc
        self.a = self.L / self.N
        self.x = (np.arange(self.N) + 0.5) * self.a
        self.laplacian = self._graph_laplacian()
        params = PotentialParams("allen_cahn_chain", {"L": self.L, "N": self.N, "bc": bc})
        super().__init__(self.N, self._value, self._gradient, self._hessian,
                         name=f"allen_cahn_{bc}_L{self.L:g}_N{self.N}", params=params)

    def _graph_laplacian(self) -> np.ndarray:
        n = self.N
        lap = 2 * np.eye(n) - np.eye(n, k=1) - np.eye(n, k=-1)
        if self.bc == "neumann":
            lap[0, 0] = lap[-1, -1] = 1.0
        else:
            lap[0, -1] = lap[-1, 0] = -1.0
        return lap

    def _differences(self, u):
        d = np.diff(u, axis=-1)
        if self.bc == "periodic":
            d = np.concatenate([d, u[..., :1] - u[..., -1:]], axis=-1)
        return d

    def _value(self, u):
        d = self._differences(u)
        return np.sum(d * d, axis=-1) / (2 * self.a) + self.a * np.sum(local_potential(u), axis=-1)

    def _gradient(self, u):
        return u @ self.laplacian / self.a - self.a * local_force(u)

    def _hessian(self, u):
        return self.laplacian / self.a + self.a * np.einsum("ni,ij->nij", 3 * u ** 2 - 1, np.eye(self.N))

    def q_operator(self, u) -> np.ndarray:
        """Discrete linearization ``Q[u] = Hess V / a`` at one state."""
        u = np.asarray(u, dtype=float)
        return self.laplacian / self.a ** 2 + np.diag(3 * u ** 2 - 1)

    def langevin(self) -> Potential:
        """Potential ``V / a`` whose gradient flow is the lattice Allen-Cahn drift."""
        s = 1.0 / self.a
        return Potential(self.N, lambda u: s * self._value(u), lambda u: s * self._gradient(u),
                         lambda u: s * self._hessian(u), name=self.name + "_langevin", params=self.params)

    def constant(self, c: float) -> np.ndarray:
        return np.full(self.N, float(c))

    def to_dict(self) -> dict:
        return {"L": self.L, "N": self.N, "bc": self.bc}


def l2_norm(cp: ChainPotential, u) -> float:
    """Lattice ``L^2`` norm ``sqrt(a sum u_i^2)``."""
    return float(math.sqrt(cp.a * np.sum(np.asarray(u, dtype=float) ** 2)))


def discretize_allen_cahn(L: float, N: int, bc: str = "neumann") -> ChainPotential:
    """Lattice potential for the Allen-Cahn energy on ``[0, L]``."""
    return ChainPotential(L, N, bc)


@dataclass
class StationaryState:
    """Stationary field with its energy and Morse index."""

    label: str
    u: np.ndarray
    energy: float
    eigenvalues: np.ndarray = field(repr=False)

    @property
    def index(self) -> int:
        return int(np.sum(self.eigenvalues < 0))

    def rows(self):
        return [(i, float(v)) for i, v in enumerate(self.u)]


def _classify(cp: ChainPotential, label: str, u) -> StationaryState:
    u = np.asarray(u, dtype=float)
    ev = linalg.eigh(cp.q_operator(u), eigvals_only=True)
    return StationaryState(label, u, float(cp.value(u)), ev)


def instanton_seed(cp: ChainPotential, sign: float = 1.0) -> np.ndarray:
    """Cosine profile with the weakly nonlinear amplitude ``sqrt(4/3 (1 - (pi/L)^2))``.

    Deep in the ``L > pi`` range the amplitude is capped at 1.
    """
    delta = 1.0 - (math.pi / cp.L) ** 2
    amp = min(math.sqrt(max(4.0 * delta / 3.0, 0.0)), 1.0)
    return sign * amp * np.cos(math.pi * cp.x / cp.L)


def stationary_states(cp: ChainPotential) -> List[StationaryState]:
    """The minima ``u+``, ``u-`` and the relevant saddle ``u0``.

    For ``L`` up to the discrete bifurcation point the saddle is ``u0 = 0``;
    beyond it the nonconstant instanton is found by Newton from a cosine
    seed. The constant zero state is appended as ``"zero"`` in that case.

    Raises
    ------
    SPDEError
        Newton does not converge from the seed.
    """
    if cp.bc != "neumann" and cp.L >= 2 * math.pi:
        raise SPDEError("periodic chains are handled only for L < 2 pi")
    plus = _classify(cp, "plus", cp.constant(1.0))
    minus = _classify(cp, "minus", cp.constant(-1.0))
    zero = _classify(cp, "zero", cp.constant(0.0))
    if zero.index <= 1:
        zero.label = "saddle"
        return [plus, minus, zero]
    u = refine(cp, instanton_seed(cp), tol=1e-10 * math.sqrt(cp.N), max_iter=200)
    if u is None:
        raise SPDEError(f"Newton failed for the instanton at L={cp.L}, N={cp.N}")
    inst = _classify(cp, "saddle", u)
    if inst.index != 1 or np.max(np.abs(u)) < 1e-6:
        raise SPDEError(f"Newton converged to a state of index {inst.index}, not the instanton")
    return [plus, minus, inst, zero]


def saddle_state(cp: ChainPotential) -> StationaryState:
    return next(s for s in stationary_states(cp) if s.label == "saddle")


def barrier(cp: ChainPotential) -> float:
    """Energy barrier ``V[u0] - V[u-]``."""
    states = {s.label: s for s in stationary_states(cp)}
    return states["saddle"].energy - states["minus"].energy


def linearization_spectrum(cp: ChainPotential, u, m: int = 6) -> np.ndarray:
    """Lowest ``m`` eigenvalues of the discrete linearization at ``u``.

    Raises
    ------
    ValueError
        ``u`` is not stationary.
    """
    u = np.asarray(u, dtype=float)
    g = cp.gradient(u) / cp.a
    if np.max(np.abs(g)) > 1e-6 * max(1.0, np.max(np.abs(u))):
        raise ValueError("linearization requested at a non-stationary state")
    m = min(int(m), cp.N)
    try:
        return linalg.eigh(cp.q_operator(u), eigvals_only=True, subset_by_index=[0, m - 1])
    except linalg.LinAlgError as exc:
        raise SPDEError(str(exc)) from exc


def continuum_eigenvalues(L: float, base: float, m: int) -> np.ndarray:
    """``base + (pi k / L)^2`` for ``k = 0 .. m-1`` (Neumann)."""
    k = np.arange(m)
    return base + (math.pi * k / L) ** 2


def _check_neumann(bc: str):
    if bc != "neumann":
        raise NotImplementedError("closed-form prefactors are implemented for Neumann chains only")


def spde_prefactor(L: float, bc: str = "neumann") -> float:
    """Closed-form prefactor ``2^{3/4} pi sqrt(sin L / sinh(sqrt2 L))`` for ``L < pi``.

    Raises
    ------
    ValueError
        ``L`` outside ``(0, pi)``; use :func:`spde_prefactor_bifurcation`.
    """
    _check_neumann(bc)
    if not 0 < L < math.pi:
        raise ValueError(f"closed form needs 0 < L < pi, got {L}")
    return 2 ** 0.75 * math.pi * math.sqrt(math.sin(L) / math.sinh(math.sqrt(2) * L))


def truncated_product(L: float, K: int) -> float:
    """Prefactor from the spectral product cut at ``k = K``.

    Each factor pairs the saddle mode ``k`` with the minimum mode ``k``;
    the ``k = 0`` ratio contributes the ``1/2``.
    """
    k = np.arange(1, int(K) + 1, dtype=float)
    r = (L / (math.pi * k)) ** 2
    log_prod = np.sum(np.log1p(-r) - np.log1p(2 * r))
    return 2 * math.pi * math.sqrt(0.5 * math.exp(log_prod))


def spde_prefactor_bifurcation(L: float, eps: float, bc: str = "neumann") -> float:
    """Prefactor valid up to and including ``L = pi``.

    Uses ``sin L / lambda1 = sinc(1 - L/pi) * L^2 / (pi + L)`` so the
    removable singularity at ``L = pi`` is evaluated without cancellation.
    """
    _check_neumann(bc)
    if not 0 < L <= math.pi:
        raise ValueError(f"bifurcation formula needs 0 < L <= pi, got {L}")
    if not eps > 0:
        raise ValueError("eps must be positive")
    lam1 = (math.pi - L) * (math.pi + L) / L ** 2
    s = math.sqrt(3 * eps / (4 * L))
    sin_over_lam = float(np.sinc(1 - L / math.pi)) * L ** 2 / (math.pi + L)
    return (2 ** 0.75 * math.pi / psi_plus(lam1 / s)
            * math.sqrt((lam1 + s) * sin_over_lam / math.sinh(math.sqrt(2) * L)))


def chain_prefactor(cp: ChainPotential) -> float:
    """Eyring-Kramers prefactor of the Langevin chain from its discrete spectra."""
    states = {s.label: s for s in stationary_states(cp)}
    return quadratic_prefactor(states["saddle"].eigenvalues, states["minus"].eigenvalues)


@dataclass
class SPDEValidation:
    """Monte Carlo transition time of the chain versus the prediction."""

    L: float
    N: int
    eps: float
    barrier: float
    chain_prefactor: float
    continuum_prefactor: Optional[float]
    prediction: float
    stats: HittingStats

    @property
    def mc_mean(self) -> float:
        return self.stats.mean

    @property
    def ratio(self) -> float:
        return self.stats.mean / self.prediction

    def to_dict(self) -> dict:
        return {"L": self.L, "N": self.N, "eps": self.eps, "barrier": self.barrier,
                "chain_prefactor": self.chain_prefactor, "continuum_prefactor": self.continuum_prefactor,
                "prediction": self.prediction, "mc_mean": self.mc_mean, "ratio": self.ratio,
                "stats": self.stats.to_dict()}


def spde_mc_validation(L: float, N: int, eps: float, dt: float = 1e-3, n: int = 400, seed: int = 0,
                       radius: Optional[float] = None, max_time: Optional[float] = None,
                       threads: int = 1) -> SPDEValidation:
    """Transition time from ``u-`` to an ``L^2`` ball around ``u+``.

    The chain runs with potential ``V / a`` and noise ``eps / a``, so the
    per-site noise variance is ``2 eps N / L``. ``radius`` is measured in
    the lattice ``L^2`` norm ``sqrt(a sum u_i^2)`` and defaults to half the
    distance from ``u+`` to the saddle.
    """
    cp = discretize_allen_cahn(L, N, "neumann")
    if N > 32:
        raise ValueError("Monte Carlo validation is limited to N <= 32")
    states = {s.label: s for s in stationary_states(cp)}
    dv = states["saddle"].energy - states["minus"].energy
    if radius is None:
        radius = 0.5 * l2_norm(cp, states["plus"].u - states["saddle"].u)
    if eps < 0.25 * dv:
        raise ValueError(f"eps={eps} is below the desk-scale bound 0.25 * barrier = {0.25 * dv:.3g}")
    c_chain = quadratic_prefactor(states["saddle"].eigenvalues, states["minus"].eigenvalues)
    c_cont = spde_prefactor(L) if L < math.pi else None
    prediction = c_chain * math.exp(dv / eps)
    max_time = 50 * prediction if max_time is None else max_time
    target = Ball(cp.constant(1.0), radius / math.sqrt(cp.a))
    cfg = SimConfig(eps=eps / cp.a, dt=dt, max_time=max_time, target=target, seed=seed, n=n)
    stats = sample_hitting_times(cp.langevin(), cp.constant(-1.0), cfg, threads=threads)
    return SPDEValidation(cp.L, cp.N, eps, dv, c_chain, c_cont, prediction, stats)
