"""Comparison learners run on the same environment realisations as OWO-FMTL.

SRL restarts every round from the fixed initialization ``x_1``; CWS freezes
the user weights.  Because environments are pure functions of their seed,
running any of these on the same ``env`` reuses identical data streams.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .engine import HorizonTrace, RunConfig, run_horizon


@dataclass(frozen=True)
class BaselineSpec:
    kind: str
    weights: tuple | None = None

    def __post_init__(self):
        if self.kind not in ("SRL", "CWS"):
            raise ValueError(f"unknown baseline {self.kind!r}")
        if self.kind == "CWS" and self.weights is not None:
            if np.any(np.asarray(self.weights) >= 0):
                raise ValueError("CWS weights must be negative")


def run_srl(cfg: RunConfig, env, keep_tasks: bool = False) -> HorizonTrace:
    return run_horizon(replace(cfg, algorithm="srl", outer_update=False), env, keep_tasks=keep_tasks)


def run_cws(cfg: RunConfig, env, weights=None, outer_update: bool = True,
            keep_tasks: bool = False) -> HorizonTrace:
    """Constant weighting; ``weights=None`` means equal weights at the dual box midpoint."""
    w = None if weights is None else tuple(float(v) for v in np.atleast_1d(weights))
    cfg = replace(cfg, algorithm="cws", cws_weights=w, outer_update=outer_update)
    return run_horizon(cfg, env, keep_tasks=keep_tasks)


def matched_equal_weights(trace: HorizonTrace) -> tuple:
    """Equal weights with the mean magnitude of the weights ``trace`` actually used.

    The weight magnitude scales the primal step, so comparing against equal
    weights of a different size mixes a step-size effect into the comparison.
    """
    wbar = float(np.mean([r.weights.mean() for r in trace.rounds]))
    return (wbar,) * trace.problem.spec.num_users


def run_baseline(cfg: RunConfig, env, baseline: BaselineSpec) -> HorizonTrace:
    if baseline.kind == "SRL":
        return run_srl(cfg, env)
    return run_cws(cfg, env, baseline.weights)


def accumulated_fairness(trace: HorizonTrace) -> np.ndarray:
    """Running sum over rounds of the fairness of the round-mean utilities."""
    return np.cumsum([r.fairness_alg for r in trace.rounds])
