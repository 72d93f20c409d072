"""Hindsight benchmarks: the fairest model of a round and the best initialization.

The round objective ``F_alpha(ubar(theta))`` is concave, where
``ubar_k(theta) = loss_cap - mean_i loss_ik(theta)`` is quadratic in theta.
It is maximised with a projected Newton method (Bertsekas' active-set
variant) using a backtracking line search along the projection arc, which
reaches gradient-mapping norms near machine precision in a handful of
iterations even for the badly conditioned polynomial Gram matrices.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .environments import RoundTaskSet
from .fairness import FairnessSpec, alpha_fairness
from .oco import BoxDomain, project_box


@dataclass(frozen=True)
class SolverConfig:
    tol: float = 1e-8
    max_iter: int = 500
    armijo: float = 1e-4
    backtrack: float = 0.5
    max_backtracks: int = 60
    grid_resolution: int = 400

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.grid_resolution < 2:
            raise ValueError("grid_resolution must be at least 2")


class BenchmarkError(RuntimeError):
    """The solver hit ``max_iter``; carries the best iterate found."""

    def __init__(self, msg, best, mapping_norm):
        super().__init__(msg)
        self.best = best
        self.mapping_norm = mapping_norm


class RoundObjective:
    """Fairness of the round-mean utilities as a function of the shared model."""

    def __init__(self, task: RoundTaskSet, spec: FairnessSpec, loss_cap: float):
        self.Q, self.b, self.c = task.quadratic_forms()
        self.spec = spec
        self.loss_cap = loss_cap

    def mean_utilities(self, theta) -> np.ndarray:
        th = np.asarray(theta, dtype=float)
        Qth = np.einsum("ksr,...r->...ks", self.Q, th)
        loss = np.einsum("...ks,...s->...k", Qth, th) - 2.0 * (th @ self.b.T) + self.c
        return self.loss_cap - loss

    def value(self, theta) -> float:
        return alpha_fairness(self.mean_utilities(theta), self.spec)

    def values(self, thetas) -> np.ndarray:
        """Vectorised value for a batch of models, shape ``(N, d)``."""
        u = self.mean_utilities(thetas)
        a = self.spec.alpha
        if np.any(u <= 0):
            raise ValueError("utilities became nonpositive: loss_cap too small")
        if self.spec.is_log:
            return np.log(u).sum(axis=-1)
        return (np.expm1((1.0 - a) * np.log(u)) / (1.0 - a)).sum(axis=-1)

    def grad_hess(self, theta):
        u = self.mean_utilities(theta)
        a = self.spec.alpha
        du = -2.0 * (self.Q @ theta - self.b)  # (K, d), gradient of ubar_k
        fp = u ** (-a)
        fpp = -a * u ** (-a - 1.0)
        g = fp @ du
        H = np.einsum("k,ks,kr->sr", fpp, du, du) - 2.0 * np.einsum("k,ksr->sr", fp, self.Q)
        return g, H


def gradient_mapping_norm(theta, g, dom: BoxDomain) -> float:
    return float(np.linalg.norm(theta - project_box(theta + g, dom)))


def solve_round_benchmark(
    task: RoundTaskSet,
    spec: FairnessSpec,
    loss_cap: float,
    dom: BoxDomain,
    solver: SolverConfig = SolverConfig(),
    x0=None,
    history: list | None = None,
) -> np.ndarray:
    """Fairest fixed model of the round, maximising F_alpha(ubar(theta)) over ``dom``."""
    obj = RoundObjective(task, spec, loss_cap)
    theta = dom.center.copy() if x0 is None else project_box(x0, dom)
    f = obj.value(theta)
    if history is not None:
        history.append(f)
    eps_active = 1e-12
    for _ in range(solver.max_iter):
        g, H = obj.grad_hess(theta)
        gm = gradient_mapping_norm(theta, g, dom)
        if gm <= solver.tol:
            return theta
        at_lo = (theta <= dom.lower + eps_active) & (g < 0)
        at_hi = (theta >= dom.upper - eps_active) & (g > 0)
        free = ~(at_lo | at_hi)
        direction = g.copy()
        if free.any():
            Hf = H[np.ix_(free, free)]
            scale = max(np.abs(Hf).max(), 1e-300)
            try:
                step = np.linalg.solve(-Hf + 1e-13 * scale * np.eye(free.sum()), g[free])
            except np.linalg.LinAlgError:
                step = g[free]
            if step @ g[free] <= 0 or not np.all(np.isfinite(step)):
                step = g[free]
            direction[free] = step
        s = 1.0
        for _ in range(solver.max_backtracks):
            cand = project_box(theta + s * direction, dom)
            fc = obj.value(cand)
            # rounding slack: near the optimum f changes below machine precision
            if fc >= f + solver.armijo * (g @ (cand - theta)) - 1e-15 * max(1.0, abs(f)):
                break
            s *= solver.backtrack
        else:
            # Newton direction failed to ascend; fall back to a gradient step
            s = 1.0 / max(np.abs(H).sum(axis=1).max(), 1e-300)
            cand = project_box(theta + s * g, dom)
            fc = obj.value(cand)
            if fc < f:
                raise BenchmarkError("line search failed", theta, gm)
        theta, f = cand, fc
        if history is not None:
            history.append(f)
    g, _ = obj.grad_hess(theta)
    gm = gradient_mapping_norm(theta, g, dom)
    if gm <= solver.tol:
        return theta
    raise BenchmarkError(f"no convergence after {solver.max_iter} iterations", theta, gm)


def grid_oracle(objective, dom: BoxDomain, resolution: int):
    """Brute-force argmax of a vectorised objective over a regular grid (d <= 2)."""
    if dom.dim > 2:
        raise ValueError("grid_oracle supports at most two dimensions")
    axes = [np.linspace(lo, hi, resolution) for lo, hi in zip(dom.lower, dom.upper)]
    pts = np.array(list(itertools.product(*axes)))
    vals = np.asarray(objective(pts), dtype=float)
    j = int(np.argmax(vals))
    return pts[j], float(vals[j])


def best_initialization(benchmarks, eta: float, dom_X: BoxDomain, G_theta: float = 0.0, m: int = 0):
    """Minimiser over X of sum_t U_t(x) and the attained value.

    U_t(x) = |x - theta*_t|^2 / (2 eta) + eta G^2 m / 2 is separable and
    isotropic, so the box-constrained minimiser is the projected mean.
    """
    B = np.atleast_2d(np.asarray(benchmarks, dtype=float))
    if B.shape[0] == 0:
        raise ValueError("need at least one benchmark")
    x_star = project_box(B.mean(axis=0), dom_X)
    return x_star, float(sum_outer_bounds(x_star, B, eta, G_theta, m))


def sum_outer_bounds(x, benchmarks, eta: float, G_theta: float = 0.0, m: int = 0) -> float:
    B = np.atleast_2d(benchmarks)
    quad = np.sum((B - x) ** 2) / (2.0 * eta)
    return quad + B.shape[0] * eta * G_theta**2 * m / 2.0
