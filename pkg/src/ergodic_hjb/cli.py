"""Command-line front end: ``ergodic-hjb <subcommand> --config <path> [--set key=value]...``.

Configuration is flat ``key = value`` text with dotted section prefixes,
``#`` comments and JSON-style values (numbers, strings, ``[..]`` lists,
``true``/``false``/``null``); bare comma lists and bare words are accepted
as well.  Every run writes into the output directory:

* ``result.json``: deterministic result document (config echo included);
* ``run_info.json``: wall time, timestamp and paths, kept apart so that
  ``result.json`` is byte-identical across repeated runs;
* ``config.echo``: the fully resolved configuration, which parses back to
  the same run;
* ``*.tsv``: field and profile tables, coordinates first and value last;
* ``summary.txt``: one human-readable line per estimate (also printed).

Exit codes: 0 success, 2 validation error, 3 solver failure, 4 acceptance failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .bounds import certify
from .core import Grid, SolverError, SolverTolerances, ValidationError, make_cost
from .direct import (
    convexity_defect,
    curvature_reference,
    gradient_excess,
    lipschitz_extension_residual,
    solve_constrained,
    subsolution_gap,
)
from .discount import default_deltas, free_boundary_radius, run_vanishing_discount
from .penalty import PenaltyConfig, continuation
from .radial import radial_discounted, radial_eigen, radial_profile
from .simulate import SimConfig, policy_sweep, simulate_ball_policy

log = logging.getLogger(__name__)

SUBCOMMANDS = ("eigen", "radial", "bounds", "simulate", "sweep", "crosscheck")
OUTPUT_ENV = "ERGODIC_HJB_OUTPUT"

EXIT_OK, EXIT_VALIDATION, EXIT_SOLVER, EXIT_ACCEPTANCE = 0, 2, 3, 4

# keys with a fixed default; cost.* parameters beyond family/n are free-form
DEFAULTS: dict[str, object] = {
    "seed": 0,
    "cost.family": "quadratic",
    "cost.n": 1,
    "grid.R": 4.0,
    "grid.h": None,
    "grid.m": None,
    "discount.backends": ["direct"],
    "discount.k_max": 20,
    "discount.deltas": None,
    "discount.tol_lambda": None,
    "penalty.eps_max": 0.1,
    "penalty.eps_min": 1e-4,
    "penalty.ratio": 0.5,
    "tol.newton": 1e-9,
    "tol.max_iters": 200,
    "tol.gradient_slack": 1e-2,
    "tol.convexity_slack": 1e-8,
    "bounds.radii": None,
    "bounds.gradient_slack": 1e-2,
    "bounds.edge_slack": 1e-6,
    "radial.samples": 401,
    "sim.radius": None,
    "sim.dt": 1e-4,
    "sim.horizon": 200.0,
    "sim.paths": 32,
    "sim.burn_in": 0.1,
    "sweep.radii": None,
    "crosscheck.lambda_tol": None,
    "crosscheck.profile_tol": None,
    "crosscheck.equivalence_tol": 1e-3,
    "crosscheck.gap_tol": None,
    "crosscheck.mc_allowance": 0.05,
    "output.dir": None,
}

_SECTIONS = {k.split(".")[0] for k in DEFAULTS if "." in k} | {"cost"}
_DEFAULT_H = {1: 0.01, 2: 0.05}
_LAMBDA_TOL = {1: 1e-2, 2: 2e-2}
_PROFILE_TOL = {1: 1e-3, 2: 5e-2}
_SWEEP_FACTORS = (0.7, 0.875, 1.0, 1.135, 1.4)
EQUIVALENCE_DELTAS = (1.0, 2.0**-6)


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


def parse_value(text: str):
    text = text.strip()
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        pass
    if "," in text:
        return [parse_value(p) for p in text.split(",") if p.strip()]
    return text


def format_value(value) -> str:
    return json.dumps(value)


def parse_config_text(text: str) -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise ValidationError(f"line {lineno}: empty key")
        out[key] = parse_value(value)
    return out


def echo_config(config: dict) -> str:
    return "".join(f"{k} = {format_value(config[k])}\n" for k in sorted(config))


@dataclass
class RunConfig:
    subcommand: str
    values: dict

    def __getitem__(self, key):
        return self.values[key]

    @property
    def n(self) -> int:
        return int(self.values["cost.n"])

    def echo(self) -> str:
        return echo_config(self.values)

    def result_echo(self) -> dict:
        """Config as stored in ``result.json`` (output location left out so documents compare across dirs)."""
        return {k: v for k, v in sorted(self.values.items()) if not k.startswith("output.")}


def _require(cond: bool, key: str, msg: str):
    if not cond:
        raise ValidationError(f"{key}: {msg}")


def _as_float(values: dict, key: str, positive: bool = False) -> float:
    v = values[key]
    try:
        x = float(v)
    except (TypeError, ValueError):
        raise ValidationError(f"{key}: expected a number, got {v!r}") from None
    _require(math.isfinite(x), key, f"must be finite, got {v!r}")
    if positive:
        _require(x > 0, key, f"must be positive, got {v!r}")
    return x


def _as_int(values: dict, key: str, minimum: int | None = None) -> int:
    v = values[key]
    _require(isinstance(v, (int, float)) and not isinstance(v, bool) and float(v) == int(v), key,
             f"expected an integer, got {v!r}")
    v = int(v)
    if minimum is not None:
        _require(v >= minimum, key, f"must be >= {minimum}, got {v}")
    return v


def _as_list(values: dict, key: str) -> list[float] | None:
    v = values[key]
    if v is None:
        return None
    if not isinstance(v, list):
        v = [v]
    try:
        return [float(x) for x in v]
    except (TypeError, ValueError):
        raise ValidationError(f"{key}: expected a list of numbers, got {values[key]!r}") from None


def resolve_config(subcommand: str, raw: dict) -> RunConfig:
    """Merge defaults, validate every key and pin the grid so the echo reproduces the run."""
    if subcommand not in SUBCOMMANDS:
        raise ValidationError(f"subcommand: unknown {subcommand!r}; expected one of {SUBCOMMANDS}")
    for key in raw:
        section = key.split(".")[0]
        if key not in DEFAULTS and not key.startswith("cost."):
            hint = "unknown key" if section in _SECTIONS or "." not in key else f"unknown section {section!r}"
            raise ValidationError(f"{key}: {hint}")
    values = dict(DEFAULTS)
    values.update(raw)

    n = _as_int(values, "cost.n", 1)
    values["cost.n"] = n
    _require(isinstance(values["cost.family"], str), "cost.family", "must be a string")
    _as_int(values, "seed", 0)

    R = _as_float(values, "grid.R", positive=True)
    if values["grid.m"] is not None:
        m = _as_int(values, "grid.m")
    else:
        h = _as_float(values, "grid.h", positive=True) if values["grid.h"] is not None else _DEFAULT_H.get(n, 0.05)
        m = int(round(2 * R / h)) + 1
    if n > 2 and subcommand in ("eigen", "bounds", "crosscheck"):
        raise ValidationError(f"cost.n: grid solvers support n in (1, 2), got {n}")
    if n <= 2:
        try:
            Grid(n, R, m)
        except ValidationError as exc:
            raise ValidationError(f"grid.m: {exc}") from None
    values["grid.m"] = m
    values["grid.h"] = 2 * R / (m - 1)

    backends = values["discount.backends"]
    if isinstance(backends, str):
        backends = [backends]
    _require(isinstance(backends, list) and backends and all(b in ("direct", "penalty") for b in backends),
             "discount.backends", f"expected a list drawn from ['direct', 'penalty'], got {values['discount.backends']!r}")
    values["discount.backends"] = list(dict.fromkeys(backends))
    _as_int(values, "discount.k_max", 1)
    deltas = _as_list(values, "discount.deltas")
    if deltas is not None:
        _require(len(deltas) >= 2 and all(d > 0 for d in deltas) and all(b < a for a, b in zip(deltas, deltas[1:])),
                 "discount.deltas", "must be a strictly decreasing positive list of length >= 2")
        values["discount.deltas"] = deltas
    if values["discount.tol_lambda"] is not None:
        _as_float(values, "discount.tol_lambda", positive=True)

    for key in ("penalty.eps_max", "penalty.eps_min", "tol.newton", "tol.gradient_slack",
                "tol.convexity_slack", "bounds.gradient_slack", "bounds.edge_slack",
                "sim.dt", "sim.horizon", "crosscheck.equivalence_tol", "crosscheck.mc_allowance"):
        _as_float(values, key, positive=True)
    ratio = _as_float(values, "penalty.ratio", positive=True)
    _require(ratio < 1, "penalty.ratio", f"must lie in (0, 1), got {ratio}")
    _require(values["penalty.eps_min"] <= values["penalty.eps_max"], "penalty.eps_min", "must not exceed penalty.eps_max")
    _as_int(values, "tol.max_iters", 1)
    _as_int(values, "radial.samples", 2)
    _as_int(values, "sim.paths", 1)
    burn = _as_float(values, "sim.burn_in")
    _require(0 <= burn < 1, "sim.burn_in", f"must lie in [0, 1), got {burn}")
    for key in ("crosscheck.lambda_tol", "crosscheck.profile_tol", "crosscheck.gap_tol", "sim.radius"):
        if values[key] is not None:
            _as_float(values, key, positive=True)
    for key in ("bounds.radii", "sweep.radii"):
        lst = _as_list(values, key)
        if lst is not None:
            _require(all(x > 0 for x in lst), key, "entries must be positive")
            values[key] = lst

    cfg = RunConfig(subcommand, values)
    cost = build_cost(cfg)
    if subcommand in ("radial", "crosscheck"):
        _require(cost.is_radial, "cost.family", f"{subcommand} needs a rotationally symmetric cost")
    if subcommand in ("simulate", "sweep") and not cost.is_radial:
        _require(values["sim.radius"] is not None or subcommand == "sweep", "sim.radius",
                 "required for a non-radial cost (no oracle radius)")
        _require(values["sweep.radii"] is not None or subcommand == "simulate", "sweep.radii",
                 "required for a non-radial cost (no oracle radius)")
    SimConfig(n, values["sim.radius"] or 1.0, values["sim.dt"], values["sim.horizon"],
              values["sim.paths"], values["seed"], values["sim.burn_in"])
    return cfg


def build_cost(cfg: RunConfig):
    params = {k[len("cost."):]: v for k, v in cfg.values.items() if k.startswith("cost.") and k not in ("cost.family", "cost.n")}
    try:
        return make_cost(cfg["cost.family"], params, cfg.n)
    except ValidationError as exc:
        raise ValidationError(f"cost.family={cfg['cost.family']!r}: {exc}") from None
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"cost: {exc}") from None


def build_grid(cfg: RunConfig) -> Grid:
    return Grid(cfg.n, float(cfg["grid.R"]), int(cfg["grid.m"]))


def build_tolerances(cfg: RunConfig) -> SolverTolerances:
    return SolverTolerances(
        newton_tol=float(cfg["tol.newton"]),
        max_iters=int(cfg["tol.max_iters"]),
        gradient_slack=float(cfg["tol.gradient_slack"]),
        convexity_slack=float(cfg["tol.convexity_slack"]),
    )


def epsilon_schedule(eps_max: float, eps_min: float, ratio: float) -> tuple[float, ...]:
    out = [eps_max]
    while out[-1] * ratio >= eps_min * (1 - 1e-12):
        out.append(out[-1] * ratio)
    return tuple(out)


def build_penalty(cfg: RunConfig, gradient_slack: float | None = None, eps_min: float | None = None) -> PenaltyConfig:
    tol = build_tolerances(cfg)
    if gradient_slack is not None:
        tol = SolverTolerances(tol.newton_tol, tol.max_iters, gradient_slack, tol.convexity_slack)
    sched = epsilon_schedule(float(cfg["penalty.eps_max"]), eps_min or float(cfg["penalty.eps_min"]),
                             float(cfg["penalty.ratio"]))
    return PenaltyConfig(epsilon_schedule=sched, tolerances=tol)


def build_sim(cfg: RunConfig, radius: float) -> SimConfig:
    return SimConfig(cfg.n, float(radius), float(cfg["sim.dt"]), float(cfg["sim.horizon"]),
                     int(cfg["sim.paths"]), int(cfg["seed"]), float(cfg["sim.burn_in"]))


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else ("nan" if math.isnan(x) else ("inf" if x > 0 else "-inf"))
    return obj


def write_json(path: Path, doc: dict):
    path.write_text(json.dumps(_clean(doc), indent=2, sort_keys=True) + "\n")


def write_table(path: Path, header: list[str], columns: list[np.ndarray]):
    cols = [np.asarray(c, dtype=float).ravel() for c in columns]
    lines = ["\t".join(header)]
    for row in zip(*cols):
        lines.append("\t".join(f"{v:.12g}" for v in row))
    path.write_text("\n".join(lines) + "\n")


def write_field(path: Path, field_, name: str):
    grid = field_.grid
    coords = [c.ravel() for c in grid.coords]
    header = ["x", "y"][: grid.n] + [name]
    write_table(path, header, coords + [field_.values.ravel()])


def _estimate(method: str, value: float, tolerance: float | None, **extra) -> dict:
    return {"method": method, "value": float(value), "tolerance": tolerance, **extra}


# ---------------------------------------------------------------------------
# pipelines
# ---------------------------------------------------------------------------


@dataclass
class Outcome:
    doc: dict
    summary: list[str]
    tables: dict  # filename -> callable(path)
    failed: list[str]


def _eigen_runs(cfg: RunConfig, cost, grid, backends):
    tol = build_tolerances(cfg)
    deltas = cfg["discount.deltas"] or default_deltas(int(cfg["discount.k_max"]))
    runs = {}
    for b in backends:
        runs[b] = run_vanishing_discount(
            cost, grid, deltas=deltas, backend=b, tolerances=tol,
            penalty_config=build_penalty(cfg) if b == "penalty" else None,
            tol_lambda=cfg["discount.tol_lambda"],
        )
    return runs


def _eigen_doc(label: str, e) -> dict:
    fin = e.final
    return {
        "estimate": _estimate(f"vanishing-discount/{label}", e.lambda_original, e.tol_lambda,
                              richardson=e.lambda_richardson + e.offset, cauchy=e.cauchy),
        "deltas": e.deltas,
        "lambdas": e.lambdas,
        "free_boundary_radius": free_boundary_radius(e.free_boundary_mask, e.grid),
        "residuals": {k: v for k, v in fin.residuals.items()},
        "iterations": [s.iterations for s in e.history],
        "bounds": fin.bounds,
    }


def run_eigen(cfg: RunConfig, with_certificate: bool = True) -> Outcome:
    cost, grid = build_cost(cfg), build_grid(cfg)
    runs = _eigen_runs(cfg, cost, grid, cfg["discount.backends"])
    doc = {"estimates": [], "runs": {}}
    summary, tables = [], {}
    for b, e in runs.items():
        d = _eigen_doc(b, e)
        doc["runs"][b] = d
        doc["estimates"].append(d["estimate"])
        summary.append(f"lambda* [{b}] = {e.lambda_original:.6f} (tol {e.tol_lambda:.1e}, "
                       f"richardson {e.lambda_richardson + e.offset:.6f}, delta_min {e.deltas[-1]:.3g})")
        tables[f"u_star_{b}.tsv"] = (lambda path, e=e: write_field(path, e.u_star, "u"))
    if with_certificate:
        first = runs[cfg["discount.backends"][0]]
        cert = certify(first, cost, radii=cfg["bounds.radii"], gradient_slack=float(cfg["bounds.gradient_slack"]),
                       edge_slack=float(cfg["bounds.edge_slack"]))
        doc["certificate"] = _shift_cert(cert.as_dict(), cost.offset)
        summary.append(f"certificate: {cert.lambda_minus + cost.offset:.6f} <= lambda* <= "
                       f"{cert.lambda_plus + cost.offset:.6f} (gap {cert.gap:.4e})")
    return Outcome(doc, summary, tables, [])


def _shift_cert(d: dict, offset: float) -> dict:
    d = dict(d)
    d["lambda_minus"] += offset
    d["lambda_plus"] += offset
    return d


def run_radial(cfg: RunConfig) -> Outcome:
    cost = build_cost(cfg)
    lam, r0 = radial_eigen(cost.radial, cfg.n)
    r = np.linspace(0.0, float(cfg["grid.R"]), int(cfg["radial.samples"]))
    prof = radial_profile(cost.radial, cfg.n, lam, r0, r)
    doc = {
        "estimates": [_estimate("radial-oracle", lam + cost.offset, 1e-10)],
        "r0": r0,
        "pasting_defect": prof.pasting_defect,
    }
    summary = [f"lambda* [radial-oracle] = {lam + cost.offset:.6f}, r0 = {r0:.6f} "
               f"(pasting defect {prof.pasting_defect:.1e})"]
    tables = {"radial_profile.tsv": lambda p: write_table(p, ["r", "dphi", "d2phi", "phi"],
                                                          [prof.r, prof.dphi, prof.d2phi, prof.phi])}
    return Outcome(doc, summary, tables, [])


def run_bounds(cfg: RunConfig) -> Outcome:
    return run_eigen(cfg, with_certificate=True)


def _oracle_radius(cfg: RunConfig, cost) -> float:
    if cfg["sim.radius"] is not None:
        return float(cfg["sim.radius"])
    return radial_eigen(cost.radial, cfg.n)[1]


def run_simulate(cfg: RunConfig) -> Outcome:
    cost = build_cost(cfg)
    r = _oracle_radius(cfg, cost)
    est = simulate_ball_policy(cost, build_sim(cfg, r))
    mean = est.mean + cost.offset
    doc = {
        "estimates": [_estimate("monte-carlo/ball", mean, 3 * est.stderr, radius=r)],
        "simulation": {"radius": r, **est.as_dict(), "mean": mean, "running_cost": est.running_cost + cost.offset},
    }
    summary = [f"ergodic cost [monte-carlo, r={r:.6f}] = {mean:.6f} +- {est.stderr:.2e} "
               f"(running {est.running_cost + cost.offset:.6f}, local time {est.local_time:.6f})"]
    return Outcome(doc, summary, {}, [])


def _sweep_radii(cfg: RunConfig, cost) -> list[float]:
    if cfg["sweep.radii"] is not None:
        return list(cfg["sweep.radii"])
    r0 = radial_eigen(cost.radial, cfg.n)[1]
    return [round(r0 * f, 3) for f in _SWEEP_FACTORS]


def run_sweep(cfg: RunConfig) -> Outcome:
    cost = build_cost(cfg)
    radii = _sweep_radii(cfg, cost)
    res = policy_sweep(cost, radii, build_sim(cfg, 1.0))
    rows = [{"radius": r, **e.as_dict(), "mean": e.mean + cost.offset} for r, e in res]
    best = min(rows, key=lambda d: d["mean"]) if rows else None
    doc = {"sweep": rows, "argmin_radius": best["radius"] if best else None,
           "estimates": [_estimate("monte-carlo/sweep-min", best["mean"], 3 * best["stderr"], radius=best["radius"])]
           if best else []}
    summary = [f"ergodic cost [r={d['radius']:.4g}] = {d['mean']:.6f} +- {d['stderr']:.2e}" for d in rows]
    if best:
        summary.append(f"sweep minimum at r = {best['radius']:.4g}")
    cols = [np.array([d[k] for d in rows]) for k in ("radius", "stderr", "running_cost", "local_time", "mean")]
    tables = {"sweep.tsv": lambda p: write_table(p, ["r", "stderr", "running_cost", "local_time", "mean"], cols)}
    return Outcome(doc, summary, tables, [])


def run_crosscheck(cfg: RunConfig) -> Outcome:
    """Oracle, both grid backends, certificate and simulation, with a named pass/fail per criterion."""
    cost, grid = build_cost(cfg), build_grid(cfg)
    n, h = cfg.n, grid.h
    f0 = cost.radial
    lam_tol = cfg["crosscheck.lambda_tol"] or _LAMBDA_TOL.get(n, 2e-2)
    prof_tol = cfg["crosscheck.profile_tol"] or _PROFILE_TOL.get(n, 5e-2)
    gap_tol = cfg["crosscheck.gap_tol"] or (5e-2 if n == 1 else None)
    eq_tol = float(cfg["crosscheck.equivalence_tol"])
    allowance = float(cfg["crosscheck.mc_allowance"])
    tol = build_tolerances(cfg)
    criteria = []

    def record(name, ok, **detail):
        criteria.append({"criterion": name, "pass": bool(ok), **detail})

    # oracle
    lam_o, r0 = radial_eigen(f0, n)
    defect = radial_profile(f0, n, lam_o, r0, np.array([0.0, r0])).pasting_defect
    record("radial-oracle", defect <= 1e-8, lambda_star=lam_o, r0=r0, pasting_defect=defect)

    # grid eigenvalues, both backends
    runs = _eigen_runs(cfg, cost, grid, ["direct", "penalty"])
    for b, e in runs.items():
        err = e.lambda_star - lam_o
        record(f"eigenvalue-agreement/{b}", abs(err) <= lam_tol, value=e.lambda_star, error=err, tolerance=lam_tol)

    # discounted profile at delta = 1 on |x| <= R/2
    sol1 = solve_constrained(cost, 1.0, grid, tol)
    near = grid.radius <= grid.half_width / 2
    prof = radial_discounted(f0, n, 1.0, grid.radius[near])
    perr = float(np.max(np.abs(sol1.u.values[near] - prof.phi)))
    record("oracle-agreement/profile", perr <= prof_tol, error=perr, tolerance=prof_tol)

    # backend equivalence on matched (delta, grid); the penalty stopping slack sits a decade below the tolerance
    pcfg = build_penalty(cfg, gradient_slack=0.1 * eq_tol, eps_min=1e-8)
    gaps, final_eps = [], []
    for d in EQUIVALENCE_DELTAS:
        u_d = sol1.u if d == 1.0 else solve_constrained(cost, d, grid, tol).u
        v, pdiag = continuation(cost, d, grid, pcfg)
        gaps.append(float(np.max(np.abs(v.values - u_d.values))))
        final_eps.append(pdiag.epsilons[-1])
    record("backend-equivalence", max(gaps) <= eq_tol, deltas=list(EQUIVALENCE_DELTAS), sup_distance=gaps,
           tolerance=eq_tol, final_eps=final_eps)

    # invariants on u_delta (delta <= 2^-6 window) and u*
    K = grid.n + cost.max_on_unit_ball()
    inv = {}
    for b, e in runs.items():
        window = [s for s in e.history if s.delta >= 2.0**-6 * (1 - 1e-12)]
        fields = [s.u for s in window] + [e.u_star]
        conv = [convexity_defect(u) for u in fields]
        worst_axis = min(c["axis"] / max(c["scale"], 1.0) for c in conv)
        worst_diag = min(c["diagonal"] / max(c["scale"], 1.0) for c in conv)
        grad = max(gradient_excess(u) for u in fields)
        sand = min(subsolution_gap(u, K) for u in fields)
        Ls = [s.bounds["L"] for s in window]
        L_ref = curvature_reference(cost, max(s.bounds["C"] for s in window))
        lip = lipschitz_extension_residual(e.final)
        inv[b] = dict(convexity_axis=worst_axis, convexity_diagonal=worst_diag, gradient_excess=grad,
                      sandwich=sand, curvature=Ls, curvature_reference=L_ref, lipschitz_extension=lip)
        ok = (worst_axis >= -1e-8 and worst_diag >= -1e-8 and grad <= 3 * h and sand >= -1e-9
              and max(Ls) <= L_ref and lip <= 2 * h)
        record(f"invariants/{b}", ok, **inv[b])
    shifted = run_vanishing_discount(cost.shifted(1.0), grid,
                                     deltas=cfg["discount.deltas"] or default_deltas(int(cfg["discount.k_max"])),
                                     tolerances=tol, tol_lambda=cfg["discount.tol_lambda"])
    shift_err = shifted.lambda_star - runs["direct"].lambda_star - 1.0
    record("invariants/shift", abs(shift_err) <= runs["direct"].tol_lambda, error=shift_err,
           tolerance=runs["direct"].tol_lambda)

    # free boundary
    for b, e in runs.items():
        rad = free_boundary_radius(e.free_boundary_mask, grid)
        record(f"free-boundary/{b}", abs(rad - r0) <= 2 * h, radius=rad, r0=r0, tolerance=2 * h)

    # certificate
    cert = certify(runs["direct"], cost, radii=cfg["bounds.radii"], gradient_slack=float(cfg["bounds.gradient_slack"]),
                   edge_slack=float(cfg["bounds.edge_slack"]))
    lam_d = runs["direct"].lambda_star
    ok = cert.lambda_minus <= lam_d <= cert.lambda_plus and (gap_tol is None or cert.gap <= gap_tol)
    record("certificate", ok, lambda_minus=cert.lambda_minus, lambda_plus=cert.lambda_plus, gap=cert.gap,
           gap_tolerance=gap_tol)

    # Monte Carlo at the oracle radius and over the sweep
    est = simulate_ball_policy(cost, build_sim(cfg, r0))
    record("monte-carlo", abs(est.mean - lam_o) <= 3 * est.stderr + allowance, mean=est.mean, stderr=est.stderr,
           allowance=allowance)
    radii = _sweep_radii(cfg, cost)
    sweep = policy_sweep(cost, radii, build_sim(cfg, 1.0))
    means = [e.mean for _, e in sweep]
    arg = radii[int(np.argmin(means))] if means else None
    closest = min(radii, key=lambda r: abs(r - r0)) if radii else None
    record("monte-carlo/sweep", arg is not None and arg == closest, radii=radii, means=means, argmin=arg)

    off = cost.offset
    doc = {
        "estimates": [
            _estimate("radial-oracle", lam_o + off, 1e-10),
            *[_estimate(f"vanishing-discount/{b}", e.lambda_original, e.tol_lambda) for b, e in runs.items()],
            _estimate("monte-carlo/ball", est.mean + off, 3 * est.stderr + allowance, radius=r0),
        ],
        "certificate": _shift_cert(cert.as_dict(), off),
        "runs": {b: _eigen_doc(b, e) for b, e in runs.items()},
        "criteria": criteria,
    }
    failed = [c["criterion"] for c in criteria if not c["pass"]]
    summary = [f"{'PASS' if c['pass'] else 'FAIL'} {c['criterion']}" for c in criteria]
    summary += [f"lambda* [{d['method']}] = {d['value']:.6f}" for d in doc["estimates"]]
    summary.append(f"certificate gap {cert.gap:.4e}")
    tables = {f"u_star_{b}.tsv": (lambda p, e=e: write_field(p, e.u_star, "u")) for b, e in runs.items()}
    return Outcome(doc, summary, tables, failed)


PIPELINES = {
    "eigen": run_eigen,
    "radial": run_radial,
    "bounds": run_bounds,
    "simulate": run_simulate,
    "sweep": run_sweep,
    "crosscheck": run_crosscheck,
}


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def _output_dir(cfg: RunConfig) -> Path:
    d = cfg["output.dir"] or os.environ.get(OUTPUT_ENV) or "ergodic_hjb_output"
    return Path(d)


def run(subcommand: str, config_path: str | None = None, overrides: list[str] | None = None,
        stream=None) -> int:
    """Parse, validate, execute and emit; returns the process exit code."""
    stream = stream or sys.stdout
    try:
        raw = parse_config_text(Path(config_path).read_text()) if config_path else {}
        for item in overrides or []:
            if "=" not in item:
                raise ValidationError(f"--set {item!r}: expected key=value")
            k, v = item.split("=", 1)
            raw[k.strip()] = parse_value(v)
        cfg = resolve_config(subcommand, raw)
    except OSError as exc:
        print(f"validation error: config: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION

    out = _output_dir(cfg)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"validation error: output.dir: {exc}", file=sys.stderr)
        return EXIT_VALIDATION

    t0 = time.perf_counter()
    status, code, error = "ok", EXIT_OK, None
    try:
        outcome = PIPELINES[subcommand](cfg)
        if outcome.failed:
            status, code = "acceptance-failure", EXIT_ACCEPTANCE
    except ValidationError as exc:
        outcome, status, code, error = Outcome({}, [], {}, []), "validation-error", EXIT_VALIDATION, str(exc)
    except (SolverError, FloatingPointError, np.linalg.LinAlgError) as exc:
        outcome, status, code, error = Outcome({}, [], {}, []), "solver-failure", EXIT_SOLVER, str(exc)
    wall = time.perf_counter() - t0

    doc = {
        "subcommand": subcommand,
        "status": status,
        "error": error,
        "failed_criteria": outcome.failed,
        "version": __version__,
        "config": cfg.result_echo(),
        **outcome.doc,
    }
    write_json(out / "result.json", doc)
    write_json(out / "run_info.json", {
        "wall_time_s": wall,
        "timestamp": datetime.now(timezone.utc).isoformat(),
        "output_dir": str(out.resolve()),
        "config_path": str(Path(config_path).resolve()) if config_path else None,
    })
    (out / "config.echo").write_text(cfg.echo())
    for name, writer in outcome.tables.items():
        writer(out / name)
    lines = list(outcome.summary)
    if error:
        lines.append(f"{status}: {error}")
    if outcome.failed:
        lines.append("failed criteria: " + ", ".join(outcome.failed))
    (out / "summary.txt").write_text("".join(line + "\n" for line in lines))
    for line in lines:
        print(line, file=stream)
    if code == EXIT_SOLVER:
        print(f"solver failure: {error}", file=sys.stderr)
    return code


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="ergodic-hjb", description=__doc__.split("\n\n")[0])
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--config", help="flat key = value config file")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config key (repeatable)")
    parser.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    return run(args.subcommand, args.config, args.overrides)


if __name__ == "__main__":
    sys.exit(main())
