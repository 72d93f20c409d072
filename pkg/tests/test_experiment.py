import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from owofmtl.experiment import (
    REPORT_COLUMNS,
    SWEEP_COLUMNS,
    TRACE_COLUMNS,
    ConfigError,
    ExperimentConfig,
    cmd_run,
    cmd_sweep,
    fmt,
    load_config,
    loglog_slope,
    parse_config,
    run_checks,
)

SMALL = """
env.m = 4
env.T = 3
"""


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


class TestParse:
    def test_empty_config_is_all_defaults(self):
        assert parse_config("") == ExperimentConfig()

    def test_values_and_comments(self):
        cfg = parse_config("""
            # a comment
            algorithm = srl
            fairness.alpha = 2   # trailing comment
            env.m = 32
            env.regime = adversarial
            env.noise = 0 0.1; 0.05 0.2
            sweep.m = 4, 8
            schedule.G_theta = none
            solver.tol = 1e-9
        """)
        assert cfg.run.algorithm == "srl" and cfg.run.alpha == 2.0
        assert cfg.env.m == 32 and cfg.env.regime == "adversarial"
        assert cfg.env.noise == ((0.0, 0.1), (0.05, 0.2))
        assert cfg.sweep.m == (4, 8)
        assert cfg.run.G_theta is None
        assert cfg.run.solver.tol == 1e-9

    def test_unknown_key_named(self):
        with pytest.raises(ConfigError, match="env.mm"):
            parse_config("env.m = 4\nenv.mm = 5\n", "x.cfg")
        with pytest.raises(ConfigError, match="x.cfg:2"):
            parse_config("env.m = 4\nenv.mm = 5\n", "x.cfg")

    @pytest.mark.parametrize("text", ["env.m = four", "env.m", "env.regime = sideways",
                                      "env.frozen = maybe", "algorithm = pcgrad", "sweep.m = ,"])
    def test_bad_values_rejected(self, text):
        with pytest.raises(ConfigError):
            parse_config(text)

    def test_text_round_trip(self):
        cfg = parse_config("fairness.alpha = 0.5\nenv.user_streams = 3, 9\ncws.weights = -0.008, -0.009\n"
                           "domain.x_low = -0.5\nenv.amplitude = 1 0.2; 0.6 0.5\n")
        assert parse_config(cfg.to_text()) == cfg

    @settings(max_examples=100, deadline=None)
    @given(alpha=st.floats(0.0, 5.0), m=st.integers(1, 512), seed=st.integers(0, 2**31),
           u_min=st.floats(0.01, 1e3), tol=st.floats(1e-14, 1e-2))
    def test_round_trip_property(self, alpha, m, seed, u_min, tol):
        text = f"fairness.alpha = {alpha!r}\nenv.m = {m}\nseed = {seed}\nfairness.u_min = {u_min!r}\n" \
               f"solver.tol = {tol!r}\n"
        cfg = parse_config(text)
        assert parse_config(cfg.to_text()) == cfg

    def test_fmt(self):
        assert fmt(0.1) == "0.10000000000000001"
        assert fmt(True) == "true"
        assert fmt(np.float64(2.5)) == "2.5"
        assert fmt(3) == "3"


class TestRun:
    def test_emits_three_files(self, tmp_path):
        cmd_run(parse_config(SMALL), tmp_path)
        assert sorted(p.name for p in tmp_path.iterdir()) == ["manifest.txt", "report.csv", "trace.csv"]
        rows = read_csv(tmp_path / "trace.csv")
        assert tuple(rows[0]) == TRACE_COLUMNS
        assert len(rows) == 3 * 4 * 2
        report = read_csv(tmp_path / "report.csv")
        assert tuple(report[0]) == REPORT_COLUMNS and len(report) == 1
        assert float(report[0]["solver_tol"]) == 1e-8

    def test_csvs_byte_identical(self, tmp_path):
        cfg = parse_config(SMALL + "env.regime = adversarial\nfairness.alpha = 2\n")
        cmd_run(cfg, tmp_path / "a")
        cmd_run(cfg, tmp_path / "b")
        for name in ("trace.csv", "report.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_manifest_round_trip(self, tmp_path):
        cfg = parse_config(SMALL + "seed = 5\nfairness.alpha = 2\n")
        cmd_run(cfg, tmp_path / "a")
        again = load_config(tmp_path / "a" / "manifest.txt")
        assert again == cfg
        cmd_run(again, tmp_path / "b")
        assert (tmp_path / "a" / "trace.csv").read_bytes() == (tmp_path / "b" / "trace.csv").read_bytes()

    def test_trace_values_match_run(self, tmp_path):
        trace = cmd_run(parse_config(SMALL), tmp_path)
        rows = read_csv(tmp_path / "trace.csv")
        r = trace.rounds[1]
        row = next(x for x in rows if x["t"] == "2" and x["i"] == "3" and x["k"] == "2")
        assert float(row["loss_k"]) == r.losses[2, 1]
        assert float(row["w_k"]) == r.weights[2, 1]
        assert float(row["utility_star_k"]) == r.utilities_star[2, 1]


class TestSweep:
    def test_cardinality(self, tmp_path):
        cfg = parse_config("env.T = 2\nsweep.m = 4, 128\nsweep.alpha = 1, 2\nsweep.seeds = 0\n")
        results = cmd_sweep(cfg, tmp_path, jobs=2)
        rows = read_csv(tmp_path / "sweep.csv")
        assert len(rows) == 8 == len(results)
        assert tuple(rows[0]) == SWEEP_COLUMNS
        assert {(r["m"], r["alpha"], r["regime"]) for r in rows} == {
            (m, a, g) for m in ("4", "128") for a in ("1", "2") for g in ("stochastic", "adversarial")}
        assert all(r["status"] == "ok" for r in rows)
        assert len(read_csv(tmp_path / "summary.csv")) == 8

    def test_parallel_matches_serial(self, tmp_path):
        cfg = parse_config("env.T = 2\nsweep.m = 4, 8\nsweep.alpha = 1\nsweep.seeds = 0, 1\n")
        cmd_sweep(cfg, tmp_path / "s", jobs=1)
        cmd_sweep(cfg, tmp_path / "p", jobs=3)
        assert (tmp_path / "s" / "sweep.csv").read_bytes() == (tmp_path / "p" / "sweep.csv").read_bytes()

    def test_failed_cell_recorded(self, tmp_path):
        cfg = parse_config("env.T = 2\nsweep.m = 4\nsweep.alpha = 1\nsweep.regime = stochastic\n"
                           "sweep.seeds = 0\nsolver.max_iter = 0\n")
        results = cmd_sweep(cfg, tmp_path)
        assert results[0].status.startswith("error")
        assert read_csv(tmp_path / "sweep.csv")[0]["status"].startswith("error")

    def test_slope(self):
        ms = np.array([4, 8, 16, 32])
        assert loglog_slope(ms, 3.0 / np.sqrt(ms)) == pytest.approx(-0.5)


class TestChecks:
    def test_default_all_pass(self):
        lines = run_checks(parse_config("env.m = 16\nenv.T = 20\n"))
        assert not any(l.failed for l in lines)
        assert all(l.status == "pass" for l in lines)

    def test_understated_gradient_bound_fails(self):
        lines = run_checks(parse_config(SMALL + "schedule.G_theta = 1e-4\n"))
        mon = next(l for l in lines if l.name == "G_theta monitor")
        assert mon.failed

    def test_alpha_zero_skips_dual(self):
        lines = run_checks(parse_config(SMALL + "fairness.alpha = 0\n"))
        dual = next(l for l in lines if l.name.startswith("dual"))
        assert dual.status == "skipped"
        assert not any(l.failed for l in lines)

    def test_unenforced_dual_is_reported(self):
        # alpha = 0.5 with u_min = 100: the printed rate undershoots the modulus
        lines = run_checks(parse_config(SMALL + "fairness.alpha = 0.5\n"))
        dual = next(l for l in lines if l.name.startswith("dual"))
        assert dual.status in ("pass", "reported")
        assert not dual.failed
