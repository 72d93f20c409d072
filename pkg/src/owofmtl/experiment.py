"""Experiment configuration files, CSV/manifest artifacts, and the run/sweep/check drivers.

Config files are flat ``key = value`` text; keys carry dotted section
prefixes (``env.m = 128``).  Lists are comma separated, per-user
``(mean, std)`` tables are written ``mean std; mean std``.  Lines starting
with ``#`` are comments.  Unknown keys are rejected with their line number.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from .benchmark import SolverConfig
from .engine import (
    HorizonTrace,
    KernelRegressionEnv,
    RunConfig,
    appendix_chain_check,
    dual_regret_bound,
    outer_regret_bound,
    run_horizon,
)
from .environments import EnvConfig
from .fairness import alpha_fairness, conjugate_value

SCHEMA_VERSION = "1"
TRACE_COLUMNS = ("t", "i", "k", "loss_k", "utility_k", "w_k", "utility_star_k",
                 "psi_slot", "fairness_slot")
REPORT_COLUMNS = ("algorithm", "m", "alpha", "regime", "seed", "T", "raf_regret", "solver_tol",
                  "bound", "residual", "R_x", "R_x_bound", "R_theta_mean", "R_theta_over_U_max",
                  "R_w_mean", "R_w_bound", "G_theta", "g_theta_max", "clamp_lower", "clamp_upper")
SWEEP_COLUMNS = ("m", "alpha", "regime", "seed", "raf_regret", "bound", "residual",
                 "solver_tol", "status")
SUMMARY_COLUMNS = ("m", "alpha", "regime", "n_seeds", "raf_mean", "raf_std", "bound_mean",
                   "residual_mean")


class ConfigError(ValueError):
    pass


def fmt(x) -> str:
    """Text form used in every artifact: 17 significant digits for floats."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def _parse_bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("true", "1", "yes", "on"):
        return True
    if v in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _opt(parse):
    def inner(s: str):
        return None if s.strip().lower() in ("none", "") else parse(s)
    return inner


def _list(parse):
    def inner(s: str):
        items = [p.strip() for p in s.split(",") if p.strip()]
        if not items:
            raise ValueError("empty list")
        return tuple(parse(p) for p in items)
    return inner


def _table(s: str):
    rows = []
    for part in s.split(";"):
        vals = part.replace(",", " ").split()
        if len(vals) != 2:
            raise ValueError(f"expected 'mean std', got {part.strip()!r}")
        rows.append((float(vals[0]), float(vals[1])))
    return tuple(rows)


def _fmt_value(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, tuple):
        if v and isinstance(v[0], tuple):
            return "; ".join(" ".join(fmt(x) for x in row) for row in v)
        return ",".join(fmt(x) for x in v)
    return fmt(v)


# key -> (section, attribute, parser)
KEYS = {
    "algorithm": ("run", "algorithm", str),
    "seed": ("env", "seed", int),
    "fairness.alpha": ("run", "alpha", float),
    "fairness.u_min": ("run", "u_min", float),
    "fairness.u_max": ("run", "u_max", _opt(float)),
    "fairness.loss_cap": ("run", "loss_cap", _opt(float)),
    "schedule.G_theta": ("run", "G_theta", _opt(float)),
    "schedule.D_star": ("run", "D_star", _opt(float)),
    "schedule.gamma_exponent": ("run", "gamma_exponent", _opt(float)),
    "schedule.slot_order": ("run", "slot_order", str),
    "schedule.warm_start_dual": ("run", "warm_start_dual", _parse_bool),
    "schedule.outer_update": ("run", "outer_update", _opt(_parse_bool)),
    "cws.weights": ("run", "cws_weights", _opt(_list(float))),
    "domain.x_low": ("run", "x_low", _opt(float)),
    "domain.x_high": ("run", "x_high", _opt(float)),
    "solver.tol": ("solver", "tol", float),
    "solver.max_iter": ("solver", "max_iter", int),
    "env.regime": ("env", "regime", str),
    "env.K": ("env", "K", int),
    "env.m": ("env", "m", int),
    "env.T": ("env", "T", int),
    "env.n": ("env", "n", int),
    "env.degree": ("env", "degree", int),
    "env.truncation": ("env", "truncation", float),
    "env.theta_low": ("env", "theta_low", float),
    "env.theta_high": ("env", "theta_high", float),
    "env.frozen": ("env", "frozen", _parse_bool),
    "env.flip_pattern": ("env", "flip_pattern", str),
    "env.amplitude": ("env", "amplitude", _table),
    "env.frequency": ("env", "frequency", _table),
    "env.phase": ("env", "phase", _table),
    "env.noise": ("env", "noise", _table),
    "env.user_streams": ("env", "user_streams", _opt(_list(int))),
    "sweep.m": ("sweep", "m", _list(int)),
    "sweep.alpha": ("sweep", "alpha", _list(float)),
    "sweep.regime": ("sweep", "regime", _list(str)),
    "sweep.seeds": ("sweep", "seeds", _list(int)),
}
IGNORED_PREFIXES = ("manifest.",)


@dataclass(frozen=True)
class SweepAxes:
    m: tuple = (4, 8, 16, 32, 64, 128)
    alpha: tuple = (1.0, 2.0)
    regime: tuple = ("stochastic", "adversarial")
    seeds: tuple = (0, 1, 2, 3, 4)


@dataclass(frozen=True)
class ExperimentConfig:
    run: RunConfig = field(default_factory=RunConfig)
    env: EnvConfig = field(default_factory=EnvConfig)
    sweep: SweepAxes = field(default_factory=SweepAxes)

    def to_text(self) -> str:
        lines = []
        for key, (section, attr, _) in KEYS.items():
            obj = self.run.solver if section == "solver" else getattr(self, section)
            lines.append(f"{key} = {_fmt_value(getattr(obj, attr))}")
        return "\n".join(lines) + "\n"

    def cell(self, m: int, alpha: float, regime: str, seed: int) -> "ExperimentConfig":
        return replace(self, run=replace(self.run, alpha=alpha),
                       env=replace(self.env, m=m, regime=regime, seed=seed))


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    values = {"run": {}, "env": {}, "sweep": {}, "solver": {}}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, val = (p.strip() for p in line.split("=", 1))
        if key.startswith(IGNORED_PREFIXES):
            continue
        if key not in KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        section, attr, parse = KEYS[key]
        try:
            values[section][attr] = parse(val)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key!r}: {exc}") from None
    try:
        solver = replace(SolverConfig(), **values["solver"])
        run = replace(RunConfig(), solver=solver, **values["run"])
        env = replace(EnvConfig(), **values["env"])
        sweep = replace(SweepAxes(), **values["sweep"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{source}: {exc}") from None
    return ExperimentConfig(run, env, sweep)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    return parse_config(path.read_text(), str(path))


# ---------------------------------------------------------------- artifacts


def trace_rows(trace: HorizonTrace):
    spec = trace.problem.spec
    for r in trace.rounds:
        for i in range(r.m):
            w, u = r.dual_played[i], r.utilities[i]
            psi = conjugate_value(w, spec) - float(w @ u)
            fair = alpha_fairness(u, spec)
            for k in range(u.size):
                yield (r.t, i + 1, k + 1, r.losses[i, k], u[k], r.weights[i, k],
                       r.utilities_star[i, k], psi, fair)


def write_csv(path, columns, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    Path(path).write_text(buf.getvalue())


def report_row(trace: HorizonTrace, cfg: ExperimentConfig) -> tuple:
    p = trace.problem
    sch = p.schedule
    Rth = np.array([r.R_theta for r in trace.rounds])
    U = np.array([r.U_x for r in trace.rounds])
    Rw = np.array([r.R_w for r in trace.rounds])
    return (trace.algorithm, trace.m, p.spec.alpha, cfg.env.regime, cfg.env.seed, trace.T,
            trace.raf, cfg.run.solver.tol, trace.bound, trace.residual_mean, trace.R_x,
            outer_regret_bound(sch, _outer_diameter(p), trace.T), Rth.mean(),
            float(np.max(Rth / U)), Rw.mean(), dual_regret_bound(sch, trace.m), sch.G_theta,
            trace.g_theta_max, trace.clamp.lower, trace.clamp.upper)


def _outer_diameter(p) -> float:
    lo = np.minimum(p.theta_box.lower, p.x_box.lower)
    hi = np.maximum(p.theta_box.upper, p.x_box.upper)
    return float(np.linalg.norm(hi - lo))


def execute(cfg: ExperimentConfig) -> HorizonTrace:
    return run_horizon(cfg.run, KernelRegressionEnv(cfg.env))


def write_manifest(path, cfg: ExperimentConfig, extra: dict):
    head = [f"manifest.version = {__version__}", f"manifest.schema = {SCHEMA_VERSION}"]
    head += [f"manifest.{k} = {fmt(v)}" for k, v in extra.items()]
    Path(path).write_text("\n".join(head) + "\n" + cfg.to_text())


def cmd_run(cfg: ExperimentConfig, out_dir) -> HorizonTrace:
    """One horizon: writes trace.csv, report.csv and manifest.txt into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    trace = execute(cfg)
    wall = time.perf_counter() - t0
    write_csv(out / "trace.csv", TRACE_COLUMNS, trace_rows(trace))
    write_csv(out / "report.csv", REPORT_COLUMNS, [report_row(trace, cfg)])
    write_manifest(out / "manifest.txt", cfg, {
        "command": "run",
        "files": "trace.csv,report.csv",
        "trace_columns": ",".join(TRACE_COLUMNS),
        "report_columns": ",".join(REPORT_COLUMNS),
        "wall_clock_s": round(wall, 3),
    })
    return trace


@dataclass
class CellResult:
    key: tuple
    raf: float = math.nan
    bound: float = math.nan
    residual: float = math.nan
    status: str = "ok"
    wall: float = 0.0


def run_cell(args) -> CellResult:
    cfg, key = args
    t0 = time.perf_counter()
    try:
        tr = execute(cfg.cell(*key))
        return CellResult(key, tr.raf, tr.bound, tr.residual_mean, "ok", time.perf_counter() - t0)
    except Exception as exc:  # recorded per cell; the sweep goes on
        return CellResult(key, status=f"error: {type(exc).__name__}: {exc}",
                          wall=time.perf_counter() - t0)


def sweep_keys(cfg: ExperimentConfig):
    ax = cfg.sweep
    return list(itertools.product(ax.m, ax.alpha, ax.regime, ax.seeds))


def run_sweep(cfg: ExperimentConfig, jobs: int = 1) -> list[CellResult]:
    keys = sweep_keys(cfg)
    if not keys:
        raise ConfigError("sweep axes must be nonempty")
    work = [(cfg, k) for k in keys]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run_cell, work))
    else:
        results = [run_cell(w) for w in work]
    return sorted(results, key=lambda r: r.key)


def summarize(results: list[CellResult]) -> list[tuple]:
    groups: dict = {}
    for r in results:
        if r.status == "ok":
            groups.setdefault(r.key[:3], []).append(r)
    rows = []
    for (m, a, reg), rs in sorted(groups.items()):
        raf = np.array([r.raf for r in rs])
        rows.append((m, a, reg, len(rs), raf.mean(), raf.std(ddof=1) if len(rs) > 1 else 0.0,
                     np.mean([r.bound for r in rs]), np.mean([r.residual for r in rs])))
    return rows


def loglog_slope(ms, values) -> float:
    return float(np.polyfit(np.log(ms), np.log(values), 1)[0])


def cmd_sweep(cfg: ExperimentConfig, out_dir, jobs: int = 1) -> list[CellResult]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    results = run_sweep(cfg, jobs)
    rows = [(*r.key[:3], r.key[3], r.raf, r.bound, r.residual, cfg.run.solver.tol, r.status)
            for r in results]
    write_csv(out / "sweep.csv", SWEEP_COLUMNS, rows)
    write_csv(out / "summary.csv", SUMMARY_COLUMNS, summarize(results))
    write_manifest(out / "manifest.txt", cfg, {
        "command": "sweep",
        "files": "sweep.csv,summary.csv",
        "cells": len(results),
        "failed_cells": sum(r.status != "ok" for r in results),
        "wall_clock_s": round(time.perf_counter() - t0, 3),
    })
    return results


# ---------------------------------------------------------------- checks


@dataclass
class CheckLine:
    name: str
    status: str  # pass | FAIL | skipped | reported
    detail: str = ""

    @property
    def failed(self) -> bool:
        return self.status == "FAIL"


def run_checks(cfg: ExperimentConfig) -> list[CheckLine]:
    """Per-round regret inequalities and run invariants on a fresh horizon."""
    trace = execute(cfg)
    p = trace.problem
    sch, spec = p.schedule, p.spec
    reps = [appendix_chain_check(r, p) for r in trace.rounds]
    lines = []

    def add(name, ok, detail="", enforced=True):
        status = "pass" if ok else ("FAIL" if enforced else "reported")
        lines.append(CheckLine(name, status, detail))

    n_primal = sum(r.primal_ok for r in reps)
    add("primal regret <= U_t(x_t)", n_primal == len(reps), f"{n_primal}/{len(reps)} rounds")
    if spec.degenerate or cfg.run.algorithm == "cws":
        why = "alpha = 0, dual box is a point" if spec.degenerate else "dual player frozen (CWS)"
        lines.append(CheckLine("dual regret <= log bound", "skipped", why))
    else:
        n_dual = sum(r.dual_ok for r in reps)
        add("dual regret <= log bound", n_dual == len(reps), f"{n_dual}/{len(reps)} rounds",
            enforced=reps[0].dual_enforced)
    n_chain = sum(r.chain_ok for r in reps)
    add("per-round assembled inequality", n_chain == len(reps), f"{n_chain}/{len(reps)} rounds",
        enforced=cfg.run.slot_order == "simultaneous")
    add("G_theta monitor", trace.g_theta_violations == 0,
        f"max |g| = {trace.g_theta_max:.6g}, G_theta = {sch.G_theta:.6g}")
    add("lower utility clamp never binds", trace.clamp.lower == 0, f"{trace.clamp.lower} events")
    inside = all(p.theta_box.contains(r.thetas, 1e-12) and p.theta_box.contains(r.theta_final, 1e-12)
                 for r in trace.rounds)
    inside &= p.x_box.contains(trace.xs, 1e-12) and p.x_box.contains(trace.x_next, 1e-12)
    add("iterates stay in their domains", inside)
    outer = cfg.run.outer_update if cfg.run.outer_update is not None else cfg.run.algorithm != "srl"
    if outer:
        rx_bound = outer_regret_bound(sch, _outer_diameter(p), trace.T)
        add("outer regret <= log bound", trace.R_x <= rx_bound * (1 + 1e-9),
            f"R_x = {trace.R_x:.6g}, bound = {rx_bound:.6g}")
    lim = trace.bound + trace.residual_mean + cfg.run.solver.tol
    # constant weights carry no fairness guarantee; their bound line is informative only
    add("RAF regret <= bound + residual", trace.raf <= lim,
        f"RAF = {trace.raf:.6g}, bound + residual = {lim:.6g}", enforced=cfg.run.algorithm != "cws")
    add("RAF regret >= -solver tolerance", trace.raf >= -cfg.run.solver.tol, f"RAF = {trace.raf:.6g}")
    return lines


def format_checks(lines: list[CheckLine]) -> str:
    width = max(len(l.name) for l in lines)
    return "\n".join(f"{l.name:<{width}}  {l.status:<8}  {l.detail}" for l in lines)
