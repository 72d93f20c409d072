"""Acceptance criteria, one recorded PASS/FAIL line each (printed in the terminal summary).

Tolerances and budgets are pinned here and never loosened to make a run pass.
"""

import os
import time

import numpy as np
import pytest

from conftest import record_acceptance
from owofmtl.baselines import run_srl
from owofmtl.benchmark import RoundObjective, grid_oracle, solve_round_benchmark
from owofmtl.cli import main
from owofmtl.engine import KernelRegressionEnv, RunConfig, appendix_chain_check, run_horizon
from owofmtl.environments import EnvConfig, evaluate_slot, loss_bounds, sample_round
from owofmtl.experiment import loglog_slope, parse_config, run_sweep, summarize
from owofmtl.fairness import FairnessSpec, alpha_fairness, dual_minimizer, psi_dual_grad, psi_value
from owofmtl.oco import BoxDomain

BICONJ_TOL = 1e-9
GRAD_REL_TOL = 1e-6
GRID_TOL = 1e-4
SLOPE_RANGE = (-1.1, -0.35)
SRL_FACTOR = 0.5
RAF_SLACK = 1e-8  # solver tolerance band on the bound comparison

SWEEP_M = (4, 8, 16, 32, 64, 128)
SWEEP_ALPHA = (1.0, 2.0)
REGIMES = ("stochastic", "adversarial")
SWEEP_SEEDS = (0, 1, 2, 3, 4)


def check(n, name, ok, detail, elapsed=None, budget=None):
    if budget is not None:
        ok = ok and elapsed < budget
        detail = f"{detail}; {elapsed:.2f}s (budget {budget:g}s)"
    record_acceptance(n, name, ok, detail)
    assert ok, detail


def test_c1_biconjugate_identity():
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    worst = 0.0
    for alpha in (0.5, 1.0, 2.0):
        spec = FairnessSpec(alpha, 1.0, 3.3, 2)
        for u in rng.uniform(1.0, 3.3, size=(1000, 2)):
            worst = max(worst, abs(psi_value(dual_minimizer(u, spec), u, spec) - alpha_fairness(u, spec)))
    el = time.perf_counter() - t0
    check(1, "biconjugate identity", worst <= BICONJ_TOL, f"max gap {worst:.2e} <= {BICONJ_TOL:g}", el, 1.0)


def test_c2_gradient_oracles():
    rng = np.random.default_rng(2)
    t0 = time.perf_counter()
    spec = FairnessSpec(2.0, 1.0, 3.3, 2)
    worst_dual = 0.0
    for _ in range(100):
        u = rng.uniform(1.0, 3.3, 2)
        w = rng.uniform(spec.w_lower * 0.95, spec.w_upper * 1.05, 2)
        g = psi_dual_grad(w, u, spec)
        fd = np.empty(2)
        for k in range(2):
            e = np.zeros(2)
            e[k] = 1e-5 * abs(w[k])
            fd[k] = (psi_value(w + e, u, spec) - psi_value(w - e, u, spec)) / (2 * e[k])
        worst_dual = max(worst_dual, np.linalg.norm(fd - g) / max(np.linalg.norm(g), 1e-3))
    task = sample_round(1, EnvConfig(m=50, regime="adversarial"))
    worst_env = 0.0
    for _ in range(100):
        theta = rng.uniform(-1, 1, 4)
        i, k = int(rng.integers(50)), int(rng.integers(2))
        _, g = evaluate_slot(theta, task, i, k)
        fd = np.array([(evaluate_slot(theta + 1e-6 * e, task, i, k)[0]
                        - evaluate_slot(theta - 1e-6 * e, task, i, k)[0]) / 2e-6 for e in np.eye(4)])
        worst_env = max(worst_env, np.linalg.norm(fd - g) / max(np.linalg.norm(g), 1.0))
    el = time.perf_counter() - t0
    ok = worst_dual <= GRAD_REL_TOL and worst_env <= GRAD_REL_TOL
    check(2, "gradient oracles vs central differences", ok,
          f"dual {worst_dual:.1e}, loss {worst_env:.1e} <= {GRAD_REL_TOL:g}", el, 1.0)


def test_c3_benchmark_vs_grid():
    t0 = time.perf_counter()
    dom = BoxDomain.cube(2)
    worst = 0.0
    for j in range(20):
        cfg = EnvConfig(degree=1, m=16, seed=100 + j, regime=REGIMES[j % 2])
        alpha = (1.0, 2.0)[(j // 2) % 2]
        cap = loss_bounds(cfg)[0] + 100.0
        spec = FairnessSpec(alpha, 100.0, cap, 2)
        task = sample_round(j + 1, cfg)
        obj = RoundObjective(task, spec, cap)
        theta = solve_round_benchmark(task, spec, cap, dom)
        _, best = grid_oracle(obj.values, dom, 400)
        worst = max(worst, abs(obj.value(theta) - best))
    el = time.perf_counter() - t0
    check(3, "benchmark solver vs 400^2 grid", worst <= GRID_TOL, f"max gap {worst:.2e} <= {GRID_TOL:g}",
          el, 30.0)


def test_c4_per_round_inequalities():
    t0 = time.perf_counter()
    tr = run_horizon(RunConfig(alpha=1.0), KernelRegressionEnv(EnvConfig(m=64, T=50, seed=0)))
    reps = [appendix_chain_check(r, tr.problem) for r in tr.rounds]
    n_p = sum(r.primal_ok for r in reps)
    n_d = sum(r.dual_ok for r in reps)
    el = time.perf_counter() - t0
    honest = tr.problem.schedule.G_theta == tr.problem.G_theta_honest and tr.g_theta_violations == 0
    check(4, "per-round regret inequalities on 50 stochastic rounds", n_p == 50 and n_d == 50 and honest,
          f"primal {n_p}/50, dual {n_d}/50, honest G_theta {honest}", el, 60.0)


@pytest.fixture(scope="module")
def sweep():
    cfg = parse_config(
        "env.T = 512\n"
        f"sweep.m = {','.join(map(str, SWEEP_M))}\n"
        f"sweep.alpha = {','.join(map(str, SWEEP_ALPHA))}\n"
        f"sweep.regime = {','.join(REGIMES)}\n"
        f"sweep.seeds = {','.join(map(str, SWEEP_SEEDS))}\n"
    )
    t0 = time.perf_counter()
    results = run_sweep(cfg, jobs=os.cpu_count() or 1)
    return results, summarize(results), time.perf_counter() - t0


@pytest.mark.slow
def test_c5_regret_vs_m_shape(sweep):
    results, rows, el = sweep
    failed = [r.key for r in results if r.status != "ok"]
    ok = not failed and len(results) == len(SWEEP_M) * len(SWEEP_ALPHA) * len(REGIMES) * len(SWEEP_SEEDS)
    parts = []
    for a in SWEEP_ALPHA:
        for reg in REGIMES:
            cell = sorted((r for r in rows if r[1] == a and r[2] == reg), key=lambda r: r[0])
            means = [r[4] for r in cell]
            dec = all(x > y for x, y in zip(means, means[1:]))
            slope = loglog_slope([r[0] for r in cell], means)
            in_range = SLOPE_RANGE[0] <= slope <= SLOPE_RANGE[1]
            ok = ok and dec and in_range and len(cell) == len(SWEEP_M)
            parts.append(f"a={a:g}/{reg[:3]} slope {slope:+.3f}{'' if dec else ' NOT decreasing'}")
    check(5, "RAF vs m shape (decreasing in m, slope in [-1.1, -0.35])", ok, "; ".join(parts), el, 600.0)


@pytest.mark.slow
def test_c6_stochastic_below_adversarial(sweep):
    _, rows, _ = sweep
    ok, parts = True, []
    for a in SWEEP_ALPHA:
        for m in (64, 128):
            s = next(r for r in rows if r[:3] == (m, a, "stochastic"))
            adv = next(r for r in rows if r[:3] == (m, a, "adversarial"))
            good = adv[4] >= s[4] - 2 * s[5]
            ok &= good
            parts.append(f"a={a:g} m={m}: adv {adv[4]:.3g} vs sto {s[4]:.3g} - 2*{s[5]:.2g}")
    check(6, "adversarial >= stochastic - 2 std at m in {64, 128}", ok, "; ".join(parts))


def test_c7_owo_beats_srl_on_frozen_rounds():
    env = KernelRegressionEnv(EnvConfig(m=16, T=128, frozen=True, seed=0))
    owo = run_horizon(RunConfig(), env).raf_series()[-32:].mean()
    srl = run_srl(RunConfig(), env).raf_series()[-32:].mean()
    ratio = owo / srl
    check(7, "OWO vs SRL on frozen rounds, last 32 of T=128", ratio <= SRL_FACTOR,
          f"ratio {ratio:.3g} <= {SRL_FACTOR:g} (OWO {owo:.3g}, SRL {srl:.3g})")


def test_c8_determinism(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("env.m = 16\nenv.T = 16\nenv.regime = adversarial\nfairness.alpha = 2\nseed = 3\n")
    assert main(["run", str(cfg), "--out", str(tmp_path / "first")]) == 0
    manifest = tmp_path / "first" / "manifest.txt"
    for name in ("a", "b"):
        assert main(["run", str(manifest), "--out", str(tmp_path / name)]) == 0
    traces = [(tmp_path / d / "trace.csv").read_bytes() for d in ("first", "a", "b")]
    check(8, "run twice from a manifest gives identical trace CSVs", traces[0] == traces[1] == traces[2],
          f"{len(traces[0])} bytes each")


@pytest.mark.slow
def test_c9_bound_dominance(sweep):
    results, _, _ = sweep
    cells = [r for r in results if r.key[2] == "stochastic"]
    bad = [r.key for r in cells if not (r.status == "ok" and r.raf <= r.bound + r.residual + RAF_SLACK)]
    worst = max(r.raf / (r.bound + r.residual) for r in cells if r.status == "ok")
    check(9, "RAF <= regret bound + residual on every stochastic cell", not bad,
          f"{len(cells) - len(bad)}/{len(cells)} cells, max RAF/(bound+residual) {worst:.3g}")
