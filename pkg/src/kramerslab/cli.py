"""Command line entry point: ``kramerslab run`` and ``kramerslab report``.

A run reads one strict JSON config, executes a workflow and writes CSV/JSON
(and, for grid fields, raw binary) artifacts plus ``manifest.json``. Outputs
are staged in a scratch directory and moved into place only on success.

Exit codes: 0 success, 2 parse error, 3 validation error, 4 numerical
failure. Errors are reported as a single JSON line on stderr.
"""
from __future__ import annotations

import argparse
import copy
import json
import math
import os
import shutil
import sys
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, Optional

import numpy as np
from scipy import integrate

from . import __version__
from . import records
from .action import minimize_action
from .cycling import CyclingFitError, CyclingParams, density_grid, fit_cycling, sample_angles
from .exact1d import QuadratureError, mean_hitting_1d
from .fieldsolver import Region, SolverError, capacity_from_field, committor_grid, mean_time_potential_theory
from .landscape import (HierarchyError, ResolutionError, communication_height, find_critical_points,
                        metastable_order, minima, refine, transition_spec)
from .potential import Potential, PotentialError, PotentialParams, make_builtin
from .rate import DegenerateSaddleError, eyring_kramers, pitchfork_prefactor
from .sde import RNG_FAMILY, Ball, SimConfig, SimulationError, sample_hitting_times, simulate_em
from .spde import (SPDEError, continuum_eigenvalues, discretize_allen_cahn, linearization_spectrum,
                   spde_mc_validation, spde_prefactor, spde_prefactor_bifurcation, stationary_states)

FORMAT_VERSION = "1"
WORKFLOWS = ("analyze", "predict", "simulate", "committor", "action", "cycling", "spde", "validate")
NO_POTENTIAL = ("cycling", "spde")
EXIT_OK, EXIT_PARSE, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 2, 3, 4
MANIFEST = "manifest.json"
REQUIRED = object()

NUMERICAL_ERRORS = (SolverError, QuadratureError, SPDEError, SimulationError, HierarchyError, ResolutionError,
                    DegenerateSaddleError, CyclingFitError, ArithmeticError, np.linalg.LinAlgError)


class ParseError(ValueError):
    """Config file unreadable or not valid JSON."""


class ConfigError(ValueError):
    """Config parsed but violates the schema."""


# ------------------------------------------------------------------ config

PARAMS: Dict[str, dict] = {
    "analyze": {"box": None, "n_seeds": 21, "theta": 0.05},
    "predict": {"eps": REQUIRED, "start": None, "target": None, "delta": 0.1, "box": None,
                "det_min": None, "pitchfork_sweep": None},
    "simulate": {"eps": REQUIRED, "dt": REQUIRED, "n": 1000, "x0": REQUIRED, "target": REQUIRED,
                 "max_time": REQUIRED, "trajectory_time": None},
    "committor": {"eps": REQUIRED, "h": REQUIRED, "box": REQUIRED, "A": REQUIRED, "B": REQUIRED},
    "action": {"start": REQUIRED, "end": REQUIRED, "n": 400, "T": None, "bracket": [5.0, 200.0]},
    "cycling": {"period": REQUIRED, "lyapunov": REQUIRED, "kramers_time": REQUIRED, "theta0": 0.0,
                "eps": REQUIRED, "span": None, "points": 2001, "samples": 0, "bins": 200},
    "spde": {"L": REQUIRED, "N": 64, "bc": "neumann", "eps": None, "m": 6, "mc": None},
    "validate": {"eps": [0.2, 0.15], "x0": -1.0, "target": 1.0, "radius": 0.1, "n": 500, "dt": 1e-3,
                 "h": 1.0 / 256, "box": [[-2.5, 2.5]]},
}
SWEEP_KEYS = {"lambda1": REQUIRED, "C4": REQUIRED, "others": [], "det_min": REQUIRED,
              "lambda2_min": -1.0, "lambda2_max": 1.0, "points": 201}
MC_KEYS = {"dt": 1e-3, "n": 400, "radius": None, "max_time": None}
TOP_KEYS = {"format_version", "workflow", "potential", "params", "seed", "output"}


def _fill(block, schema, where):
    if block is None:
        block = {}
    if not isinstance(block, dict):
        raise ConfigError(f"{where} must be an object")
    unknown = sorted(set(block) - set(schema))
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {unknown}")
    out = {}
    for k, default in schema.items():
        if k in block:
            out[k] = block[k]
        elif default is REQUIRED:
            raise ConfigError(f"missing required key {where}.{k}")
        else:
            out[k] = copy.deepcopy(default)
    return out


def _seed(value) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or not 0 <= value < 2 ** 64:
        raise ConfigError(f"seed must be an unsigned 64-bit integer, got {value!r}")
    return value


@dataclass
class RunConfig:
    """Validated run description."""

    workflow: str
    potential: Optional[PotentialParams]
    params: dict
    seed: int = 0
    output: Optional[str] = None
    format_version: str = FORMAT_VERSION
    raw: dict = field(default_factory=dict, repr=False)

    @classmethod
    def from_dict(cls, d) -> "RunConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        unknown = sorted(set(d) - TOP_KEYS)
        if unknown:
            raise ConfigError(f"unknown top-level keys: {unknown}")
        version = d.get("format_version")
        if version != FORMAT_VERSION:
            raise ConfigError(f"format_version must be {FORMAT_VERSION!r}, got {version!r}")
        wf = d.get("workflow")
        if wf not in WORKFLOWS:
            raise ConfigError(f"workflow must be one of {WORKFLOWS}, got {wf!r}")
        pot = None
        if wf not in NO_POTENTIAL or "potential" in d:
            if not isinstance(d.get("potential"), dict):
                raise ConfigError("potential record {name, parameters} is required")
            try:
                pot = PotentialParams.from_dict(d["potential"])
                make_builtin(pot)
            except (PotentialError, TypeError, ValueError) as exc:
                raise ConfigError(f"potential: {exc}") from exc
        params = _fill(d.get("params"), PARAMS[wf], "params")
        output = d.get("output")
        if output is not None and not isinstance(output, str):
            raise ConfigError("output must be a string")
        return cls(wf, pot, params, _seed(d.get("seed", 0)), output, version, d)

    def to_dict(self) -> dict:
        out = {"format_version": self.format_version, "workflow": self.workflow,
               "params": self.params, "seed": self.seed}
        if self.potential is not None:
            out["potential"] = self.potential.to_dict()
        return out


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read config {path}: {exc.strerror}") from exc
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON in {path}: {exc}") from exc
    return RunConfig.from_dict(d)


# --------------------------------------------------------------- helpers

def _positive(params, key):
    v = params[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not v > 0:
        raise ConfigError(f"params.{key} must be a positive number, got {v!r}")
    return float(v)


def _vector(v, dim, key):
    arr = np.atleast_1d(np.asarray(v, dtype=float))
    if arr.shape != (dim,):
        raise ConfigError(f"params.{key} must have {dim} components")
    return arr


def _box(params, p, default=3.0):
    box = params.get("box")
    if box is None:
        return [(-default, default)] * p.dim
    try:
        box = [(float(lo), float(hi)) for lo, hi in box]
    except (TypeError, ValueError) as exc:
        raise ConfigError("params.box must be a list of [lo, hi] pairs") from exc
    if len(box) != p.dim or any(lo >= hi for lo, hi in box):
        raise ConfigError(f"params.box needs {p.dim} increasing pairs")
    return box


def _region(d, key):
    if not isinstance(d, dict):
        raise ConfigError(f"params.{key} must be a region object")
    try:
        r = Region.from_dict(d)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"params.{key}: {exc}") from exc
    if r.kind not in ("ball", "outside", "halfspace"):
        raise ConfigError(f"params.{key}.kind must be ball, outside or halfspace")
    return r


def _minimum_near(p, x):
    loc = refine(p, x)
    if loc is None:
        raise ResolutionError(f"no critical point found near {np.atleast_1d(x).tolist()}")
    return loc


# -------------------------------------------------------------- workflows

def wf_analyze(cfg, p, out, threads):
    prm = cfg.params
    box = _box(prm, p)
    pts = find_critical_points(p, box, n_seeds=int(prm["n_seeds"]))
    d = p.dim
    header = [f"x{i}" for i in range(d)] + ["value"] + [f"lambda{i}" for i in range(d)] + ["index", "degenerate"]
    records.write_csv(out / "critical_points.csv", header,
                      [list(c.location) + [c.value] + list(c.eigenvalues) + [c.index, int(c.degenerate)]
                       for c in pts])
    mins = minima(pts)
    heights = []
    for i in range(len(mins)):
        for j in range(i + 1, len(mins)):
            H, z = communication_height(p, mins[i].location, mins[j].location, box=box)
            heights.append({"a": mins[i].location, "b": mins[j].location, "height": H, "saddle": z})
    hierarchy = None
    if len(mins) >= 2:
        try:
            h = metastable_order(mins, p, float(prm["theta"]), box=box)
            hierarchy = {"order": [c.location for c in h.order], "depths": h.depths, "theta": h.theta}
        except HierarchyError as exc:
            hierarchy = {"error": str(exc)}
    if d == 1:
        x = np.linspace(box[0][0], box[0][1], 1001)
        records.write_csv(out / "potential_profile.csv", ["x", "V"], zip(x, p.v(x)))
    summary = {"critical_points": [c.to_row() for c in pts], "communication_heights": heights,
               "hierarchy": hierarchy}
    records.write_json(out / "analyze.json", summary)
    return {"n_critical_points": len(pts), "n_minima": len(mins)}


def _pitchfork_sweep(sweep, eps, out):
    s = _fill(sweep, SWEEP_KEYS, "params.pitchfork_sweep")
    l2 = np.linspace(float(s["lambda2_min"]), float(s["lambda2_max"]), int(s["points"]))
    rows = []
    for v in l2:
        k = pitchfork_prefactor(float(s["lambda1"]), float(v), s["others"], float(s["C4"]),
                                float(s["det_min"]), eps)
        rows.append((float(v), k.prefactor))
    records.write_csv(out / "pitchfork_sweep.csv", ["lambda2", "prefactor"], rows)
    i = int(np.argmin([r[1] for r in rows]))
    return {"min_prefactor": rows[i][1], "argmin_lambda2": rows[i][0], "eps": eps}


def wf_predict(cfg, p, out, threads):
    prm = cfg.params
    eps = _positive(prm, "eps")
    result = {"eps": eps}
    if cfg.potential.name == "pitchfork_normal_form":
        v = cfg.potential.values
        if prm["det_min"] is None:
            raise ConfigError("params.det_min is required for the pitchfork normal form")
        others = [float(v.get(f"lambda{j + 1}", 1.0)) for j in range(2, int(v.get("d", 2)))]
        pred = pitchfork_prefactor(float(v["lambda1"]), float(v["lambda2"]), others, float(v["C4"]),
                                   float(prm["det_min"]), eps)
        result["prediction"] = pred.to_dict()
    else:
        box = _box(prm, p)
        if prm["start"] is None or prm["target"] is None:
            mins = sorted(minima(find_critical_points(p, box)), key=lambda c: tuple(c.location))
            if len(mins) < 2:
                raise ResolutionError("need two minima to predict a transition")
            start = mins[0].location if prm["start"] is None else _vector(prm["start"], p.dim, "start")
            target = mins[-1].location if prm["target"] is None else _vector(prm["target"], p.dim, "target")
        else:
            start = _vector(prm["start"], p.dim, "start")
            target = _vector(prm["target"], p.dim, "target")
        spec = transition_spec(p, _minimum_near(p, start), _minimum_near(p, target), float(prm["delta"]), box=box)
        pred = eyring_kramers(spec, eps)
        result["prediction"] = pred.to_dict()
        result["transition"] = spec.to_dict()
        result["mean_time"] = pred.mean_time
        result["log_mean_time"] = pred.log_mean_time
    if prm["pitchfork_sweep"] is not None:
        result["pitchfork_sweep"] = _pitchfork_sweep(prm["pitchfork_sweep"], eps, out)
    records.write_json(out / "prediction.json", result)
    return {"prefactor": result["prediction"]["prefactor"], "exponent": result["prediction"]["exponent"]}


def _sim_config(prm, dim, seed):
    tgt = prm["target"]
    if not isinstance(tgt, dict) or "center" not in tgt or "radius" not in tgt:
        raise ConfigError("params.target must be {center, radius}")
    target = Ball(_vector(tgt["center"], dim, "target.center"), float(tgt["radius"]))
    return SimConfig(eps=_positive(prm, "eps"), dt=_positive(prm, "dt"), max_time=_positive(prm, "max_time"),
                     target=target, seed=seed, n=int(prm["n"]))


def wf_simulate(cfg, p, out, threads):
    prm = cfg.params
    sc = _sim_config(prm, p.dim, cfg.seed)
    stats = sample_hitting_times(p, _vector(prm["x0"], p.dim, "x0"), sc, threads=threads)
    records.write_csv(out / "hitting_times.csv", ["replica", "time", "censored", "aborted"],
                      [(i, t, c, a) for i, (t, c, a) in enumerate(zip(stats.times, stats.censored, stats.aborted))])
    result = {"stats": stats.to_dict(), "rng": RNG_FAMILY, "seed": cfg.seed}
    if prm["trajectory_time"] is not None:
        tc = SimConfig(eps=sc.eps, dt=sc.dt, max_time=_positive(prm, "trajectory_time"), seed=cfg.seed, n=1)
        t, x, aborted = simulate_em(p, _vector(prm["x0"], p.dim, "x0"), tc)
        np.ascontiguousarray(x, dtype="<f8").tofile(out / "trajectory.f64")
        records.write_json(out / "trajectory.f64.json", {"dtype": "float64", "order": "C", "shape": list(x.shape),
                                                         "dt": sc.dt, "replica": 0, "aborted": bool(aborted)})
    records.write_json(out / "simulate.json", result)
    return {"mean": stats.mean, "stderr": stats.stderr}


def wf_committor(cfg, p, out, threads):
    prm = cfg.params
    box = _box(prm, p)
    A, B = _region(prm["A"], "A"), _region(prm["B"], "B")
    fld = committor_grid(p, box, A, B, _positive(prm, "eps"), _positive(prm, "h"))
    fld.save(str(out / "committor.f64"))
    cap = capacity_from_field(fld)
    if fld.dim == 1:
        records.write_csv(out / "committor.csv", ["x", "q"], zip(fld.axes[0], fld.values))
    result = {"capacity": cap, "residual": fld.residual, "shape": list(fld.shape), "h": fld.h,
              "A": A.to_dict(), "B": B.to_dict()}
    records.write_json(out / "committor.json", result)
    return {"capacity": cap}


def wf_action(cfg, p, out, threads):
    prm = cfg.params
    a, b = _vector(prm["start"], p.dim, "start"), _vector(prm["end"], p.dim, "end")
    T = None if prm["T"] is None else _positive(prm, "T")
    res = minimize_action(p, a, b, T=T, n=int(prm["n"]), bracket=tuple(float(v) for v in prm["bracket"]))
    header = ["t"] + [f"x{i}" for i in range(p.dim)]
    records.write_csv(out / "action_path.csv", header, res.path.rows())
    records.write_json(out / "action.json", res.to_dict())
    return {"action": res.action, "T": res.T}


def wf_cycling(cfg, p, out, threads):
    prm = cfg.params
    cp = CyclingParams(_positive(prm, "period"), _positive(prm, "lyapunov"), _positive(prm, "kramers_time"),
                       float(prm["theta0"]), _positive(prm, "eps"))
    span = 10 * cp.lambda_tk if prm["span"] is None else _positive(prm, "span")
    theta, dens = density_grid(cp, span, int(prm["points"]))
    records.write_csv(out / "cycling_density.csv", ["theta", "p"], zip(theta, dens))
    result = {"params": cp.to_dict(), "lambda_t": cp.lambda_t, "lambda_tk": cp.lambda_tk, "span": span,
              "mass_on_span": float(integrate.trapezoid(dens, theta))}
    n = int(prm["samples"])
    if n > 0:
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(cfg.seed)))
        s = sample_angles(cp, n, rng)
        edges = np.linspace(cp.theta0, float(s.max()), int(prm["bins"]) + 1)
        counts, _ = np.histogram(s, edges)
        fit = fit_cycling(edges, counts, cp)
        records.write_csv(out / "cycling_histogram.csv", ["left", "right", "count"],
                          zip(edges[:-1], edges[1:], counts))
        result["fit"] = fit.to_dict()
    records.write_json(out / "cycling.json", result)
    return {"lambda_t": cp.lambda_t}


def wf_spde(cfg, p, out, threads):
    prm = cfg.params
    L = _positive(prm, "L")
    chain = discretize_allen_cahn(L, int(prm["N"]), str(prm["bc"]))
    states = {s.label: s for s in stationary_states(chain)}
    labels = [k for k in ("plus", "minus", "saddle", "zero") if k in states]
    records.write_csv(out / "spde_states.csv", ["site", "x"] + labels,
                      [[i, chain.x[i]] + [states[k].u[i] for k in labels] for i in range(chain.N)])
    m = int(prm["m"])
    sad = linearization_spectrum(chain, states["saddle"].u, m)
    low = linearization_spectrum(chain, states["minus"].u, m)
    rows = [(k, sad[k], low[k], continuum_eigenvalues(L, -1.0, m)[k], continuum_eigenvalues(L, 2.0, m)[k])
            for k in range(m)]
    records.write_csv(out / "spde_spectrum.csv",
                      ["k", "saddle", "minimum", "continuum_zero", "continuum_minimum"], rows)
    result = {"chain": chain.to_dict(), "barrier": states["saddle"].energy - states["minus"].energy,
              "saddle_index": states["saddle"].index,
              "energies": {k: states[k].energy for k in labels}}
    if chain.bc == "neumann" and L < math.pi:
        result["prefactor"] = spde_prefactor(L)
    if prm["eps"] is not None:
        eps = _positive(prm, "eps")
        if chain.bc == "neumann" and L <= math.pi:
            result["prefactor_bifurcation"] = spde_prefactor_bifurcation(L, eps)
        if prm["mc"] is not None:
            mc = _fill(prm["mc"], MC_KEYS, "params.mc")
            v = spde_mc_validation(L, chain.N, eps, dt=float(mc["dt"]), n=int(mc["n"]), seed=cfg.seed,
                                   radius=mc["radius"], max_time=mc["max_time"], threads=threads)
            result["mc"] = v.to_dict()
    records.write_json(out / "spde.json", result)
    return {"barrier": result["barrier"]}


def wf_validate(cfg, p, out, threads):
    prm = cfg.params
    if p.dim != 1:
        raise ConfigError("validate compares one-dimensional oracles only")
    eps_list = [float(e) for e in np.atleast_1d(prm["eps"])]
    if not eps_list or any(e <= 0 for e in eps_list):
        raise ConfigError("params.eps must list positive values")
    x0 = float(_minimum_near(p, float(prm["x0"]))[0])
    c = float(_minimum_near(p, float(prm["target"]))[0])
    r = _positive(prm, "radius")
    edge = c - r if x0 < c else c + r
    box = _box(prm, p)
    spec = transition_spec(p, np.array([x0]), np.array([c]), box=box)
    rows, table = [], []
    for k, eps in enumerate(eps_list):
        quad = mean_hitting_1d(p, edge, x0, eps)
        grid = mean_time_potential_theory(p, x0, Region("ball", (c,), r), eps, _positive(prm, "h"), box)
        kram = eyring_kramers(spec, eps).mean_time
        sc = SimConfig(eps=eps, dt=_positive(prm, "dt"), max_time=50 * quad, target=Ball([c], r),
                       seed=(cfg.seed + k) % 2 ** 64, n=int(prm["n"]))
        st = sample_hitting_times(p, [x0], sc, threads=threads)
        rows.append((eps, st.mean, st.stderr, quad, grid.mean_time, kram))
        table.append({"eps": eps, "mc_mean": st.mean, "mc_stderr": st.stderr, "mc_ks": st.ks,
                      "quadrature": quad, "grid": grid.mean_time, "kramers": kram,
                      "mc_deviation_se": (st.mean - quad) / st.stderr})
    records.write_csv(out / "validate.csv", ["eps", "mc_mean", "mc_stderr", "quadrature", "grid", "kramers"], rows)
    records.write_json(out / "validate.json", {"table": table, "transition": spec.to_dict()})
    return {"rows": len(rows)}


RUNNERS: Dict[str, Callable] = {
    "analyze": wf_analyze, "predict": wf_predict, "simulate": wf_simulate, "committor": wf_committor,
    "action": wf_action, "cycling": wf_cycling, "spde": wf_spde, "validate": wf_validate,
}


# ------------------------------------------------------------------- run

def run(config_path, out: Optional[str] = None, seed: Optional[int] = None, threads: int = 1) -> Path:
    """Execute a workflow; returns the output directory.

    Raises
    ------
    ParseError, ConfigError, or a numerical error class.
    """
    cfg = load_config(config_path)
    if seed is not None:
        cfg.seed = _seed(seed)
    target = out or cfg.output
    if not target:
        raise ConfigError("no output directory: pass --out or set 'output'")
    if int(threads) < 1:
        raise ConfigError("threads must be positive")
    p = make_builtin(cfg.potential) if cfg.potential is not None else None
    target = Path(target)
    parent = target.resolve().parent
    parent.mkdir(parents=True, exist_ok=True)
    stage = Path(tempfile.mkdtemp(prefix=".kramerslab-", dir=parent))
    try:
        t0 = time.perf_counter()
        with np.errstate(all="ignore"):
            summary = RUNNERS[cfg.workflow](cfg, p, stage, int(threads))
        wall = time.perf_counter() - t0
        outputs = sorted(f.name for f in stage.iterdir())
        manifest = {"format_version": FORMAT_VERSION, "tool": {"name": "kramerslab", "version": __version__},
                    "workflow": cfg.workflow, "seed": cfg.seed, "threads": int(threads),
                    "config": cfg.to_dict(), "outputs": outputs, "summary": summary, "wall_time_s": wall}
        records.write_json(stage / MANIFEST, manifest)
        target.mkdir(parents=True, exist_ok=True)
        for f in sorted(stage.iterdir()):
            os.replace(f, target / f.name)
    finally:
        shutil.rmtree(stage, ignore_errors=True)
    return target


# ---------------------------------------------------------------- report

def _curves_for(workflow, d: Path):
    """Yield ``(stem, x, y, xlabel, ylabel, opts)`` per curve available in ``d``."""
    def csv(name):
        return records.read_csv(d / name)[1] if (d / name).exists() else None

    if workflow == "predict" and (c := csv("pitchfork_sweep.csv")) is not None:
        yield "pitchfork_prefactor", c["lambda2"], c["prefactor"], "lambda2", "prefactor C", {}
    if workflow == "cycling" and (c := csv("cycling_density.csv")) is not None:
        yield "cycling_density", c["theta"], c["p"], "theta", "density", {}
    if workflow == "simulate" and (c := csv("hitting_times.csv")) is not None:
        t = np.sort(c["time"][np.isfinite(c["time"])])
        surv = 1.0 - np.arange(1, t.size + 1) / c["time"].size
        yield "survival", t, surv, "t", "P(tau > t)", {"logy": True}
    if workflow == "action" and (c := csv("action_path.csv")) is not None:
        if "x1" in c:
            yield "action_path", c["x0"], c["x1"], "x0", "x1", {}
        else:
            yield "action_path", c["t"], c["x0"], "t", "x", {}
    if workflow == "committor" and (c := csv("committor.csv")) is not None:
        yield "committor", c["x"], c["q"], "x", "q", {}
    if workflow == "spde" and (c := csv("spde_states.csv")) is not None:
        yield "spde_saddle", c["x"], c["saddle"], "x", "u", {}
    if workflow == "analyze" and (c := csv("potential_profile.csv")) is not None:
        yield "potential", c["x"], c["V"], "x", "V", {}
    if workflow == "validate" and (c := csv("validate.csv")) is not None:
        for col in ("mc_mean", "quadrature", "grid", "kramers"):
            yield f"validate_{col}", c["eps"], c[col], "eps", "mean time", {"logy": True, "markers": True}


def _flatten(prefix, obj, lines):
    if isinstance(obj, dict):
        for k in sorted(obj):
            _flatten(f"{prefix}.{k}" if prefix else k, obj[k], lines)
    elif isinstance(obj, list) and len(obj) > 8:
        lines.append(f"{prefix}: [{len(obj)} entries]")
    else:
        lines.append(f"{prefix}: {obj}")


def report(directory, out: Optional[str] = None, plots: bool = True) -> str:
    """Write ``summary.txt``, gnuplot ``.dat`` curves and PNG figures; returns the summary text.

    Raises
    ------
    ConfigError
        No manifest in ``directory``.
    """
    d = Path(directory)
    if not (d / MANIFEST).is_file():
        raise ConfigError(f"no {MANIFEST} in {d}")
    manifest = records.read_json(d / MANIFEST)
    missing = [f for f in manifest.get("outputs", []) if not (d / f).exists()]
    if missing:
        raise ConfigError(f"artifacts missing from {d}: {missing}")
    dest = Path(out) if out else d
    dest.mkdir(parents=True, exist_ok=True)
    wf = manifest["workflow"]
    lines = [f"workflow: {wf}", f"tool: {manifest['tool']['name']} {manifest['tool']['version']}",
             f"seed: {manifest['seed']}"]
    _flatten("summary", manifest.get("summary", {}), lines)
    detail = d / f"{'prediction' if wf == 'predict' else wf}.json"
    if detail.exists():
        _flatten(wf, records.read_json(detail), lines)
    curves = []
    for stem, x, y, xl, yl, opts in _curves_for(wf, d):
        records.write_dat(dest / f"{stem}.dat", [x, y], [xl, yl], comment=f"{wf}: {stem}")
        if plots:
            from .plotting import plot_curves
            plot_curves(dest / f"{stem}.png", [(x, y, "")], xl, yl, title=stem.replace("_", " "),
                        logy=opts.get("logy", False), markers=opts.get("markers", False))
        curves.append(stem)
    lines.append("curves: " + (", ".join(curves) if curves else "none"))
    text = "\n".join(lines) + "\n"
    (dest / "summary.txt").write_text(text, encoding="utf-8")
    return text


# ------------------------------------------------------------------ main

def _fail(kind, code, exc) -> int:
    msg = " ".join(str(exc).split()) or type(exc).__name__
    sys.stderr.write(json.dumps({"status": "error", "kind": kind, "exit_code": code,
                                 "error": type(exc).__name__, "message": msg}, sort_keys=True) + "\n")
    return code


class _Parser(argparse.ArgumentParser):
    """Argument errors become the single-line JSON diagnostic with exit code 2."""

    def error(self, message):
        sys.exit(_fail("parse", EXIT_PARSE, ParseError(message)))


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="kramerslab", description="Metastable transition-time workflows.")
    ap.add_argument("--version", action="version", version=f"kramerslab {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="execute a workflow from a JSON config")
    r.add_argument("--config", required=True, help="path to the JSON run config")
    r.add_argument("--out", help="output directory (overrides the config)")
    r.add_argument("--seed", type=int, help="master seed (overrides the config)")
    r.add_argument("--threads", type=int, default=1, help="worker threads for Monte Carlo")
    rep = sub.add_parser("report", help="summarize a run directory")
    rep.add_argument("directory", help="directory holding manifest.json")
    rep.add_argument("--out", help="where to write summary and curves (default: the run directory)")
    rep.add_argument("--no-plots", action="store_true", help="write .dat files only")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            path = run(args.config, args.out, args.seed, args.threads)
            sys.stdout.write(f"{path / MANIFEST}\n")
        else:
            sys.stdout.write(report(args.directory, args.out, plots=not args.no_plots))
    except ParseError as exc:
        return _fail("parse", EXIT_PARSE, exc)
    except NUMERICAL_ERRORS as exc:
        return _fail("numerical", EXIT_NUMERICAL, exc)
    except (ConfigError, PotentialError, ValueError, TypeError, KeyError, NotImplementedError) as exc:
        return _fail("validation", EXIT_VALIDATION, exc)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
