"""Experiment orchestration: config loading, single runs, eps-sweeps, reports.

A run is described by one JSON file (see ``CONFIG_SCHEMA`` and README.md).
Every public entry point returns a process exit code:

    0  success
    2  configuration, schema or compatibility problem (or missing artifacts)
    3  solver failure (divergence, instability, lifespan exceeded)
    4  the eps^2 energy threshold was crossed
"""
from __future__ import annotations

import copy
import csv
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import jsonschema
import numpy as np

from .diagnostics import EnergyReport, ITermLedger, ScalingFit, scaling_study
from .dispersive import SolverConfig, solve_remainder, write_snapshot_csv
from .errors import (ConfigError, DegenerateFitError, DivergenceError, KdVLayerError,
                     LifespanExceededError, StabilityError, ThresholdCrossedError)
from .flux import make_flux
from .functions import make_function
from .hyperbolic import (estimate_lifespan, solve_characteristics,
                         validate_compatibility)
from .layer import LayerHistory, fit_decay_rate, write_layer_csv

log = logging.getLogger("kdvlayer")

SPEC_VERSION = "1.0"
EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_THRESHOLD = 0, 2, 3, 4

_FUNC = {
    "type": "object",
    "required": ["name"],
    "properties": {
        "name": {"enum": ["constant", "exp-poly"]},
        "value": {"type": "number"},
        "constant": {"type": "number"},
        "terms": {"type": "array", "items": {"type": ["array", "object"]}},
    },
    "additionalProperties": False,
}

CONFIG_SCHEMA = {
    "type": "object",
    "required": ["spec_version", "flux", "u_in", "u_b", "eps_list", "grid"],
    "properties": {
        "spec_version": {"const": SPEC_VERSION},
        "flux": {
            "type": "object",
            "required": ["name"],
            "properties": {"name": {"type": "string"}, "params": {"type": "object"}},
            "additionalProperties": False,
        },
        "u_in": _FUNC,
        "u_b": _FUNC,
        "eps_list": {"type": "array", "minItems": 1,
                     "items": {"type": "number", "exclusiveMinimum": 0}},
        "nu": {"type": "number", "minimum": 0},
        "grid": {
            "type": "object",
            "required": ["L", "dt", "T"],
            "properties": {
                "L": {"type": "number", "exclusiveMinimum": 0},
                "N": {"type": "integer", "minimum": 16},
                "points_per_eps": {"type": "number", "exclusiveMinimum": 0},
                "dt": {"type": "number", "exclusiveMinimum": 0},
                "T": {"oneOf": [{"type": "number", "minimum": 0}, {"const": "auto"}]},
            },
            "additionalProperties": False,
        },
        "outputs": {
            "type": "object",
            "properties": {
                "snapshots": {"type": "boolean"},
                "snapshot_stride": {"type": "integer", "minimum": 1},
                "layer_dump": {"type": "boolean"},
                "hyperbolic_dump": {"type": "boolean"},
            },
            "additionalProperties": False,
        },
        "gates": {
            "type": "object",
            "properties": {
                "slope": {"type": "number"},
                "self_convergence": {"type": "number", "exclusiveMinimum": 0},
            },
            "additionalProperties": False,
        },
        "replay": {
            "type": "object",
            "required": ["eps", "sup_energies"],
            "properties": {
                "eps": {"type": "array", "items": {"type": "number"}},
                "sup_energies": {"type": "array", "items": {"type": "number"}},
            },
            "additionalProperties": False,
        },
    },
    "additionalProperties": False,
}

DEFAULT_OUTPUTS = {"snapshots": False, "snapshot_stride": 50,
                   "layer_dump": False, "hyperbolic_dump": False}
DEFAULT_GATES = {"slope": 2.7, "self_convergence": 0.10}


@dataclass
class RunConfig:
    raw: dict
    model: object
    u_in: object
    u_b: object
    eps_list: list
    nu: float
    grid: dict
    outputs: dict
    gates: dict
    lifespan: float
    T: float

    def solver_config(self, eps, refine=1):
        g = self.grid
        L = float(g["L"])
        N = int(g["N"]) if "N" in g else int(math.ceil(L * g["points_per_eps"] / eps))
        stride = self.outputs["snapshot_stride"] if self.outputs["snapshots"] else 0
        return SolverConfig(eps=float(eps), L=L, N=N * refine, dt=float(g["dt"]) / refine,
                            T=self.T, nu=self.nu,
                            scheme="nu-regularized" if self.nu > 0 else "imex-dispersion",
                            stride=stride * refine)

    def compatibility(self):
        return validate_compatibility(self.u_in, self.u_b)


def _flux_params(params):
    return {k: tuple(v) if isinstance(v, list) else v for k, v in (params or {}).items()}


def load_config(source):
    """Parse and validate a config (path, JSON text or dict) into a RunConfig."""
    if isinstance(source, dict):
        raw = copy.deepcopy(source)
    else:
        text = source
        if os.path.exists(str(source)):
            with open(source) as fh:
                text = fh.read()
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
    try:
        jsonschema.validate(raw, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"schema violation at {where}: {exc.message}") from None
    g = raw["grid"]
    if ("N" in g) == ("points_per_eps" in g):
        raise ConfigError("grid needs exactly one of N or points_per_eps")
    model = make_flux(raw["flux"]["name"], **_flux_params(raw["flux"].get("params")))
    u_in = make_function(raw["u_in"])
    u_b = make_function(raw["u_b"])
    lifespan = estimate_lifespan(model, u_in)
    T = min(0.5, lifespan) if g["T"] == "auto" else float(g["T"])
    if T > lifespan:
        raise ConfigError(f"T={T} exceeds the estimated lifespan {lifespan:.6g}")
    return RunConfig(raw=raw, model=model, u_in=u_in, u_b=u_b,
                     eps_list=[float(e) for e in raw["eps_list"]], nu=float(raw.get("nu", 0.0)),
                     grid=g, outputs={**DEFAULT_OUTPUTS, **raw.get("outputs", {})},
                     gates={**DEFAULT_GATES, **raw.get("gates", {})},
                     lifespan=lifespan, T=T)


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _simulate(cfg, eps, history=None, refine=1, with_ledger=True):
    scfg = cfg.solver_config(eps, refine)
    scfg.check(cfg.model, cfg.lifespan)
    if history is None:
        history = LayerHistory(cfg.model, cfg.u_in, cfg.u_b, lifespan=cfg.lifespan)
    history.require_coverage(scfg.L, eps)
    ledger = ITermLedger(nu=scfg.nu) if with_ledger else None
    traj = solve_remainder(scfg, cfg.model, cfg.u_in, cfg.u_b, history=history,
                           lifespan=cfg.lifespan, ledger=ledger, force=True,
                           store_fields=cfg.outputs["snapshots"])
    return traj, history


def _layer_meta(cfg, history):
    snap = history.at(cfg.T)
    out = {"sqrt_c": math.sqrt(cfg.model.c), "t": cfg.T}
    for name in ("V", "dtV"):
        try:
            out[f"decay_rate_{name}"] = fit_decay_rate(getattr(snap, name))
        except DegenerateFitError:
            out[f"decay_rate_{name}"] = None
    return out


def _write_dumps(cfg, traj, history, out):
    if cfg.outputs["snapshots"]:
        d = os.path.join(out, "snapshots")
        os.makedirs(d, exist_ok=True)
        for k, s in enumerate(traj.snapshots):
            write_snapshot_csv(os.path.join(d, f"w_{k:04d}_t{s.t:.4f}.csv"), s, traj.cfg.eps)
    if cfg.outputs["layer_dump"]:
        write_layer_csv(os.path.join(out, "layer_T.csv"), history.at(cfg.T))
    if cfg.outputs["hyperbolic_dump"]:
        fld = solve_characteristics(cfg.model, cfg.u_in, cfg.T, traj.cfg.x, cfg.lifespan)
        with open(os.path.join(out, "hyperbolic_T.csv"), "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["x", "u", "ux", "uxx", "uxxx"])
            for row in zip(fld.x, fld.u, fld.ux, fld.uxx, fld.uxxx):
                wr.writerow([repr(float(v)) for v in row])


def run_single(config, out, force=False, eps=None):
    """Run one eps (the first of ``eps_list`` unless given) and write its artifacts."""
    try:
        cfg = config if isinstance(config, RunConfig) else load_config(config)
    except (ConfigError, KdVLayerError, ValueError) as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    report = cfg.compatibility()
    if not report.passed:
        if not force:
            log.error("compatibility conditions at (t, x) = (0, 0) violated:\n%s", report)
            return EXIT_CONFIG
        log.warning("*** --force: running with VIOLATED compatibility conditions ***\n%s", report)
    eps = cfg.eps_list[0] if eps is None else eps
    os.makedirs(out, exist_ok=True)
    try:
        traj, history = _simulate(cfg, eps)
    except ThresholdCrossedError as exc:
        log.error("threshold crossed: %s", exc)
        traj = getattr(exc, "trajectory", None)
        if traj is not None:
            EnergyReport.from_trajectory(traj).to_json(os.path.join(out, "energy_report.json"))
        return EXIT_THRESHOLD
    except (DivergenceError, StabilityError, LifespanExceededError) as exc:
        log.error("solver failure: %s", exc)
        return EXIT_SOLVER
    except (ConfigError, ValueError) as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    log.info("eps=%g: sup energy %.6e in %.2fs", eps, traj.sup_weighted, traj.wall_time)
    rep = EnergyReport.from_trajectory(traj, meta={"layer": _layer_meta(cfg, history)})
    rep.to_json(os.path.join(out, "energy_report.json"))
    _write_dumps(cfg, traj, history, out)
    return EXIT_OK


def _member(args):
    """Sweep member: base run plus a run on the halved grid (worker process)."""
    raw, eps, out = args
    cfg = load_config(raw)
    history = LayerHistory(cfg.model, cfg.u_in, cfg.u_b, lifespan=cfg.lifespan)
    result = {"eps": eps, "status": "ok"}
    try:
        traj, _ = _simulate(cfg, eps, history)
        fine, _ = _simulate(cfg, eps, history, refine=2, with_ledger=False)
    except ThresholdCrossedError as exc:
        return {**result, "status": "threshold-crossed", "error": str(exc)}
    except (KdVLayerError, ValueError) as exc:
        return {**result, "status": "failed", "error": f"{type(exc).__name__}: {exc}"}
    change = abs(fine.sup_weighted - traj.sup_weighted) / fine.sup_weighted
    result.update(sup_energy=traj.sup_weighted, sup_energy_refined=fine.sup_weighted,
                  self_convergence=change,
                  converged=bool(change <= cfg.gates["self_convergence"]))
    member_dir = os.path.join(out, f"eps_{eps:g}")
    os.makedirs(member_dir, exist_ok=True)
    rep = EnergyReport.from_trajectory(traj, meta={
        "layer": _layer_meta(cfg, history),
        "self_convergence": {"refined_sup_weighted": fine.sup_weighted,
                             "relative_change": change, "converged": result["converged"]}})
    rep.to_json(os.path.join(member_dir, "energy_report.json"))
    _write_dumps(cfg, traj, history, member_dir)
    return result


def run_sweep(config, out, threads=1, force=False):
    """Run all eps members, check self-convergence, fit the scaling exponent."""
    try:
        cfg = config if isinstance(config, RunConfig) else load_config(config)
    except (ConfigError, KdVLayerError, ValueError) as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    os.makedirs(out, exist_ok=True)
    gate = cfg.gates["slope"]
    if "replay" in cfg.raw:
        rp = cfg.raw["replay"]
        if len(rp["eps"]) != len(rp["sup_energies"]):
            log.error("replay: eps and sup_energies differ in length")
            return EXIT_CONFIG
        rows = [(e, s, True) for e, s in zip(rp["eps"], rp["sup_energies"])]
    else:
        if len(cfg.eps_list) < 4:
            log.error("a sweep needs at least 4 eps values")
            return EXIT_CONFIG
        report = cfg.compatibility()
        if not report.passed:
            if not force:
                log.error("compatibility conditions violated:\n%s", report)
                return EXIT_CONFIG
            log.warning("*** --force: running with VIOLATED compatibility conditions ***")
        jobs = [(cfg.raw, e, out) for e in cfg.eps_list]
        if threads > 1:
            with ProcessPoolExecutor(max_workers=threads) as pool:
                results = list(pool.map(_member, jobs))
        else:
            results = [_member(j) for j in jobs]
        bad = [r for r in results if r["status"] == "failed"]
        if bad:
            for r in bad:
                log.error("member eps=%g failed: %s", r["eps"], r["error"])
            return EXIT_SOLVER
        rows = []
        for r in results:
            if r["status"] == "threshold-crossed":
                rows.append((r["eps"], float("inf"), True, True))
            else:
                rows.append((r["eps"], r["sup_energy"], r["converged"], False))
        _write_json(os.path.join(out, "members.json"), results)
    try:
        fit = scaling_study(rows, gate=gate)
    except DegenerateFitError as exc:
        log.error("scaling fit refused: %s", exc)
        return EXIT_SOLVER
    fit.to_json(os.path.join(out, "scaling_fit.json"))
    fit.to_csv(os.path.join(out, "sweep_table.csv"))
    log.info("slope %.4f (gate %.2f): %s", fit.slope, gate, "PASS" if fit.passed else "FAIL")
    return EXIT_OK if fit.passed else EXIT_SOLVER


def _collect(out):
    reports = []
    for root, _, files in sorted(os.walk(out)):
        if "energy_report.json" in files:
            with open(os.path.join(root, "energy_report.json")) as fh:
                reports.append(json.load(fh))
    reports.sort(key=lambda r: -r["eps"])
    fit = None
    p = os.path.join(out, "scaling_fit.json")
    if os.path.exists(p):
        with open(p) as fh:
            fit = json.load(fh)
    return reports, fit


def emit_report(out, as_json=False, stream=None):
    """Summarize the artifacts in ``out`` (text or JSON) and write report_table.csv."""
    stream = stream or sys.stdout
    if not os.path.isdir(out):
        log.error("artifact directory %s does not exist", out)
        return EXIT_CONFIG
    reports, fit = _collect(out)
    if not reports and fit is None:
        log.error("no artifacts found in %s", out)
        return EXIT_CONFIG
    rows = []
    for r in reports:
        lay = r.get("meta", {}).get("layer", {})
        rows.append({
            "eps": r["eps"], "sup_energy": r["sup_weighted"],
            "ledger_sum": r.get("iterms", {}).get("sum"),
            "decay_rate_V": lay.get("decay_rate_V"),
            "decay_rate_dtV": lay.get("decay_rate_dtV"),
            "sqrt_c": lay.get("sqrt_c"),
            "self_convergence": r.get("meta", {}).get("self_convergence", {}).get("relative_change"),
        })
    summary = {"members": rows}
    if fit is not None:
        summary["fit"] = {k: fit[k] for k in ("slope", "intercept", "gate", "passed")}
    with open(os.path.join(out, "report_table.csv"), "w", newline="") as fh:
        wr = csv.writer(fh)
        keys = ["eps", "sup_energy", "ledger_sum", "decay_rate_V", "decay_rate_dtV",
                "sqrt_c", "self_convergence"]
        wr.writerow(keys)
        for row in rows:
            wr.writerow(["" if row[k] is None else repr(row[k]) for k in keys])
    if as_json:
        stream.write(json.dumps(summary, indent=2, sort_keys=True) + "\n")
        return EXIT_OK
    fmt = lambda v, f: "-" if v is None else format(v, f)
    stream.write(f"{'eps':>8} {'sup energy':>12} {'ledger sum':>11} {'rate V':>8} "
                 f"{'rate dtV':>8} {'sqrt c':>7} {'self-conv':>9}\n")
    for row in rows:
        stream.write(f"{row['eps']:>8g} {row['sup_energy']:>12.4e} "
                     f"{fmt(row['ledger_sum'], '>11.2e')} {fmt(row['decay_rate_V'], '>8.4f')} "
                     f"{fmt(row['decay_rate_dtV'], '>8.4f')} {fmt(row['sqrt_c'], '>7.4f')} "
                     f"{fmt(row['self_convergence'], '>9.2e')}\n")
    if fit is not None:
        stream.write(f"fit: sup energy ~ {math.exp(fit['intercept']):.4g} * eps^{fit['slope']:.4f}"
                     f"  (gate {fit['gate']}: {'PASS' if fit['passed'] else 'FAIL'})\n")
    return EXIT_OK


def validate(config, stream=None):
    """Schema and compatibility check only."""
    stream = stream or sys.stdout
    try:
        cfg = load_config(config)
    except (ConfigError, KdVLayerError, ValueError) as exc:
        stream.write(f"config error: {exc}\n")
        return EXIT_CONFIG
    report = cfg.compatibility()
    stream.write(f"schema OK (spec_version {SPEC_VERSION}), lifespan estimate "
                 f"{cfg.lifespan:.6g}, T = {cfg.T:g}\n{report}\n")
    return EXIT_OK if report.passed else EXIT_CONFIG


def reference_config(**overrides):
    """The reference experiment as a config dict (quadratic flux, eps-sweep)."""
    cfg = {
        "spec_version": SPEC_VERSION,
        "flux": {"name": "quadratic", "params": {"k": 3.0, "J": [-3.0, -0.5]}},
        "u_in": {"name": "exp-poly", "constant": -1.0, "terms": [[-0.1, 4, 1.0]]},
        "u_b": {"name": "exp-poly", "constant": -1.0, "terms": [[0.3, 2, 1.0]]},
        "eps_list": [0.08, 0.04, 0.02, 0.01],
        "nu": 0.0,
        "grid": {"L": 40.0, "points_per_eps": 16, "dt": 0.005, "T": "auto"},
        "gates": dict(DEFAULT_GATES),
    }
    cfg.update(overrides)
    return cfg
