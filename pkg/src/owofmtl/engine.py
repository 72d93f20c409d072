"""The nested primal-dual learner: inner slots per round, outer initialization across rounds.

Slot semantics: in slot ``i`` of round ``t`` the model ``theta_{t,i-1}`` (with
``theta_{t,0} = x_t``) serves the users and their feedback is collected at
it.  With the default ``slot_order="simultaneous"`` both gradients are taken
at the played pair ``(w_{t,i-1}, theta_{t,i-1})``; with ``"dual_first"`` the
primal gradient uses the freshly updated weights ``w_{t,i}``.

Regret bookkeeping follows the played sequences: ``R_theta`` is measured on
the weights actually used in the primal gradient, ``R_w`` on the weights at
which the dual gradient was taken.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .benchmark import SolverConfig, best_initialization, solve_round_benchmark, sum_outer_bounds
from .environments import (
    EnvConfig,
    RoundTaskSet,
    evaluate_slot_users,
    loss_bounds,
    replay_losses,
    sample_round,
)
from .fairness import (
    ClampCounter,
    FairnessSpec,
    alpha_fairness,
    conjugate_rows,
    conjugate_value,
    dual_minimizer,
    psi_dual_grad,
    utility_from_loss,
)
from .oco import BoxDomain, StepSchedule, dual_step, outer_step, primal_step, schedules

log = logging.getLogger(__name__)

ALGORITHMS = ("owo_fmtl", "srl", "cws")
SLOT_ORDERS = ("simultaneous", "dual_first")
# utility floor for the kernel testbed; keeps the inner step visible with honest G_theta
DEFAULT_U_MIN = 100.0


class KernelRegressionEnv:
    """Adapter exposing the sinusoidal regression generator to the engine."""

    def __init__(self, cfg: EnvConfig):
        self.cfg = cfg

    def sample_round(self, t: int) -> RoundTaskSet:
        return sample_round(t, self.cfg)

    def evaluate(self, theta, task: RoundTaskSet, i: int):
        return evaluate_slot_users(theta, task, i)

    def replay(self, theta, task: RoundTaskSet) -> np.ndarray:
        return replay_losses(theta, task)

    def loss_bounds(self):
        return loss_bounds(self.cfg)

    def theta_box(self) -> BoxDomain:
        return self.cfg.theta_box()


@dataclass(frozen=True)
class RunConfig:
    """Everything one horizon run needs besides the environment."""

    algorithm: str = "owo_fmtl"
    alpha: float = 1.0
    u_min: float = DEFAULT_U_MIN
    u_max: float | None = None
    loss_cap: float | None = None
    G_theta: float | None = None
    D_star: float | None = None
    gamma_exponent: float | None = None
    slot_order: str = "simultaneous"
    warm_start_dual: bool = False
    outer_update: bool | None = None
    cws_weights: tuple | None = None
    x_low: float | None = None
    x_high: float | None = None
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.slot_order not in SLOT_ORDERS:
            raise ValueError(f"unknown slot order {self.slot_order!r}")


@dataclass(frozen=True)
class Problem:
    """Constants derived from a RunConfig and an environment."""

    spec: FairnessSpec
    loss_cap: float
    schedule: StepSchedule
    theta_box: BoxDomain
    x_box: BoxDomain
    loss_sup: float
    grad_sup: float
    G_theta_honest: float

    @property
    def D_theta(self) -> float:
        return self.theta_box.diameter


def build_problem(cfg: RunConfig, env: KernelRegressionEnv) -> Problem:
    """Resolve defaults: honest loss cap, utility box, gradient bound, diameter."""
    loss_sup, grad_sup = env.loss_bounds()
    loss_cap = cfg.loss_cap if cfg.loss_cap is not None else loss_sup + cfg.u_min
    u_max = cfg.u_max if cfg.u_max is not None else max(loss_cap, cfg.u_min * (1 + 1e-9))
    spec = FairnessSpec(cfg.alpha, cfg.u_min, u_max, env.cfg.K)
    theta_box = env.theta_box()
    lo = theta_box.lower if cfg.x_low is None else np.full(theta_box.dim, cfg.x_low)
    hi = theta_box.upper if cfg.x_high is None else np.full(theta_box.dim, cfg.x_high)
    x_box = BoxDomain(lo, hi)
    g_honest = spec.num_users * abs(spec.w_lower) * grad_sup
    G_theta = cfg.G_theta if cfg.G_theta is not None else g_honest
    D_star = cfg.D_star if cfg.D_star is not None else theta_box.diameter
    sched = schedules(spec, D_star, G_theta, env.cfg.m, cfg.gamma_exponent)
    return Problem(spec, loss_cap, sched, theta_box, x_box, loss_sup, grad_sup, g_honest)


@dataclass
class SlotFeedback:
    t: int
    i: int
    losses: np.ndarray
    grads: np.ndarray
    utilities: np.ndarray


def weighted_primal_gradient(w, feedback: SlotFeedback) -> np.ndarray:
    """Weighted sum of the users' loss gradients, sum_k w_k grad loss_k.

    The gradient of the proxy in theta; with negative weights an ascent step
    on it descends the priority-weighted loss.
    """
    w = np.asarray(w, dtype=float)
    grads = feedback.grads
    if grads.ndim != 2 or grads.shape[0] != w.size:
        raise ValueError(f"weights of length {w.size} do not match gradients {grads.shape}")
    return w @ grads


@dataclass
class RoundTrace:
    t: int
    x: np.ndarray
    thetas: np.ndarray  # (m, d) models at which feedback was collected
    weights: np.ndarray  # (m, K) weights used in the primal gradient
    dual_played: np.ndarray  # (m, K) weights at which the dual gradient was taken
    losses: np.ndarray  # (m, K)
    utilities: np.ndarray  # (m, K)
    g_theta_norm: np.ndarray  # (m,)
    theta_final: np.ndarray
    w_final: np.ndarray
    theta_star: np.ndarray | None = None
    utilities_star: np.ndarray | None = None
    R_theta: float = math.nan
    R_w: float = math.nan
    U_x: float = math.nan
    residual: float = math.nan
    fairness_star: float = math.nan
    fairness_alg: float = math.nan

    @property
    def m(self) -> int:
        return self.thetas.shape[0]

    @property
    def raf_term(self) -> float:
        return self.fairness_star - self.fairness_alg


@dataclass
class HorizonTrace:
    rounds: list
    xs: np.ndarray  # (T, d) played initializations x_1 .. x_T
    x_next: np.ndarray  # x_{T+1}, the initialization a further round would use
    problem: Problem
    algorithm: str
    x_star: np.ndarray | None = None
    R_x: float = math.nan
    raf: float = math.nan
    bound: float = math.nan
    clamp: ClampCounter = field(default_factory=ClampCounter)
    g_theta_max: float = 0.0
    g_theta_violations: int = 0
    tasks: list = field(default_factory=list, repr=False)

    @property
    def T(self) -> int:
        return len(self.rounds)

    @property
    def m(self) -> int:
        return self.rounds[0].m

    @property
    def residual_mean(self) -> float:
        return float(np.mean([r.residual for r in self.rounds]))

    def raf_series(self) -> np.ndarray:
        return np.array([r.raf_term for r in self.rounds])


def _psi_terms(weights, utilities, spec) -> np.ndarray:
    """Per-slot proxy values psi(w_i, u_i)."""
    return conjugate_rows(weights, spec) - np.einsum("ik,ik->i", weights, utilities)


def score_round(rt: RoundTrace, task: RoundTaskSet, problem: Problem, env) -> RoundTrace:
    """Attach the hindsight benchmark and the per-round regret terms to ``rt``."""
    spec, sch = problem.spec, problem.schedule
    rt.utilities_star = utility_from_loss(env.replay(rt.theta_star, task), problem.loss_cap, spec)
    ubar = rt.utilities.mean(axis=0)
    ubar_star = rt.utilities_star.mean(axis=0)
    rt.fairness_alg = alpha_fairness(ubar, spec)
    rt.fairness_star = alpha_fairness(ubar_star, spec)
    # conjugate terms cancel in the primal regret
    rt.R_theta = float(-np.einsum("ik,ik->", rt.weights, rt.utilities_star - rt.utilities))
    w_opt = dual_minimizer(ubar, spec)
    best = rt.m * (conjugate_value(w_opt, spec) - w_opt @ ubar)
    rt.R_w = float(_psi_terms(rt.dual_played, rt.utilities, spec).sum() - best)
    rt.U_x = float(
        np.sum((rt.x - rt.theta_star) ** 2) / (2 * sch.eta) + sch.eta * sch.G_theta**2 * rt.m / 2
    )
    # centring on the first row first makes constant weights give exactly zero
    dw = rt.weights - rt.weights[0]
    rt.residual = float(np.einsum("ik,ik->", dw - dw.mean(axis=0), rt.utilities_star) / rt.m)
    return rt


def run_round(
    x_t,
    task: RoundTaskSet,
    problem: Problem,
    env,
    w_init=None,
    fixed_weights=None,
    slot_order: str = "simultaneous",
    clamp: ClampCounter | None = None,
) -> RoundTrace:
    """Play the ``m`` slots of one round starting from the initialization ``x_t``.

    With ``fixed_weights`` the dual player is frozen (constant weighting).
    The returned trace has no benchmark yet; see :func:`score_round`.
    """
    spec, sch = problem.spec, problem.schedule
    dualbox = spec.dual_box()
    m, K = task.m, task.K
    d = problem.theta_box.dim
    thetas = np.empty((m, d))
    weights = np.empty((m, K))
    played = np.empty((m, K))
    losses = np.empty((m, K))
    utils = np.empty((m, K))
    gnorm = np.empty(m)

    theta = np.asarray(x_t, dtype=float).copy()
    if fixed_weights is not None:
        w = np.asarray(fixed_weights, dtype=float)
    elif w_init is not None:
        w = np.asarray(w_init, dtype=float)
    else:
        w = spec.dual_midpoint()
    for i in range(m):
        loss, grads = env.evaluate(theta, task, i)
        u = utility_from_loss(loss, problem.loss_cap, spec, clamp)
        fb = SlotFeedback(task.t, i, loss, grads, u)
        thetas[i], played[i], losses[i], utils[i] = theta, w, loss, u
        if fixed_weights is None and not spec.degenerate:
            w_next = dual_step(w, psi_dual_grad(w, u, spec), sch.gamma(i + 1), dualbox)
        else:
            w_next = w
        w_primal = w_next if slot_order == "dual_first" else w
        g = weighted_primal_gradient(w_primal, fb)
        weights[i] = w_primal
        gnorm[i] = math.sqrt(g @ g)
        theta = primal_step(theta, g, sch.eta, problem.theta_box)
        w = w_next
    return RoundTrace(task.t, np.asarray(x_t, float).copy(), thetas, weights, played, losses,
                      utils, gnorm, theta, w)


def run_horizon(
    cfg: RunConfig,
    env,
    problem: Problem | None = None,
    keep_tasks: bool = False,
) -> HorizonTrace:
    """Run T rounds of ``cfg.algorithm`` on ``env`` and score the result."""
    problem = build_problem(cfg, env) if problem is None else problem
    spec, sch = problem.spec, problem.schedule
    T = env.cfg.T
    outer = cfg.outer_update
    if outer is None:
        outer = cfg.algorithm != "srl"
    fixed = None
    if cfg.algorithm == "cws":
        fixed = _cws_weights(cfg, spec)
    x = problem.x_box.center.copy()
    xs = [x.copy()]
    rounds = []
    tasks = []
    clamp = ClampCounter()
    w_carry = None
    for t in range(1, T + 1):
        task = env.sample_round(t)
        rt = run_round(x, task, problem, env, w_init=w_carry, fixed_weights=fixed,
                       slot_order=cfg.slot_order, clamp=clamp)
        if cfg.warm_start_dual:
            w_carry = rt.w_final
        rt.theta_star = solve_round_benchmark(task, spec, problem.loss_cap, problem.theta_box,
                                              cfg.solver, x0=rt.theta_final)
        score_round(rt, task, problem, env)
        rounds.append(rt)
        if keep_tasks:
            tasks.append(task)
        if outer:
            x = outer_step(x, rt.theta_star, sch.eta, sch.beta(t), problem.x_box)
        xs.append(x.copy())
    trace = HorizonTrace(rounds, np.array(xs[:-1]), xs[-1], problem, cfg.algorithm, clamp=clamp,
                         tasks=tasks)
    gmax = max(float(r.g_theta_norm.max()) for r in rounds)
    trace.g_theta_max = gmax
    trace.g_theta_violations = int(sum(np.count_nonzero(r.g_theta_norm > sch.G_theta * (1 + 1e-12))
                                       for r in rounds))
    if trace.g_theta_violations:
        log.warning("observed |g_theta| = %.4g exceeds G_theta = %.4g", gmax, sch.G_theta)
    if clamp.lower:
        log.warning("lower utility clamp bound %d times; loss_cap too small", clamp.lower)
    stars = np.array([r.theta_star for r in rounds])
    trace.x_star, best = best_initialization(stars, sch.eta, problem.x_box, sch.G_theta, trace.m)
    trace.R_x = float(sum(r.U_x for r in rounds) - best)
    trace.raf = raf_regret(trace)
    if outer:
        trace.bound = theorem1_bound(sch, spec, trace.m, T, problem.D_theta)
    else:
        trace.bound = restart_bound(sch, spec, trace.m, problem.D_theta)
    return trace


def _cws_weights(cfg: RunConfig, spec: FairnessSpec) -> np.ndarray:
    if cfg.cws_weights is None:
        # equal weights at the box midpoint: plain average-loss training
        return spec.dual_midpoint()
    w = np.asarray(cfg.cws_weights, dtype=float)
    if w.size != spec.num_users:
        raise ValueError(f"need {spec.num_users} CWS weights, got {w.size}")
    tol = 1e-12 * max(1.0, abs(spec.w_lower))
    if np.any(w < spec.w_lower - tol) or np.any(w > spec.w_upper + tol):
        raise ValueError(f"CWS weights {w} outside [{spec.w_lower}, {spec.w_upper}]")
    return w


def raf_regret(trace: HorizonTrace) -> float:
    """Round-average fairness regret against the per-round fairest models."""
    if any(r.theta_star is None for r in trace.rounds):
        raise ValueError("every round needs a solved benchmark")
    return float(np.mean([r.raf_term for r in trace.rounds]))


def theorem1_bound(sch: StepSchedule, spec: FairnessSpec, m: int, T: int, D_theta: float) -> float:
    G, Ds = sch.G_theta, sch.D_star
    primal = (G * Ds + G * D_theta**2 / (2 * Ds) * (1 + math.log(T)) / T) / math.sqrt(m)
    if spec.degenerate:
        return primal
    return primal + dual_regret_bound(sch, m) / m


def restart_bound(sch: StepSchedule, spec: FairnessSpec, m: int, D_theta: float) -> float:
    """Per-round bound when every round restarts from x_1: U(x_1) / m plus the dual term."""
    G, Ds = sch.G_theta, sch.D_star
    primal = G * (D_theta**2 / (2 * Ds) + Ds / 2) / math.sqrt(m)
    if spec.degenerate:
        return primal
    return primal + dual_regret_bound(sch, m) / m


def dual_regret_bound(sch: StepSchedule, m: int) -> float:
    """Logarithmic dual regret bound G_w^2 / (2 c) (1 + log m), c the assumed modulus."""
    if sch.alpha == 0:
        return 0.0
    return sch.G_w**2 / (2 * sch.dual_modulus) * (1 + math.log(m))


def outer_regret_bound(sch: StepSchedule, D_theta: float, T: int) -> float:
    return D_theta**2 / (2 * sch.eta) * (1 + math.log(T))


@dataclass
class ChainReport:
    t: int
    R_theta: float
    U_x: float
    R_w: float
    dual_bound: float
    dual_enforced: bool
    lhs: float
    rhs: float
    residual: float
    primal_ok: bool = field(init=False)
    dual_ok: bool = field(init=False)
    chain_ok: bool = field(init=False)

    def __post_init__(self):
        slack = 1e-9
        self.primal_ok = self.R_theta <= self.U_x + slack * max(1.0, abs(self.U_x))
        self.dual_ok = self.R_w <= self.dual_bound + slack * max(1.0, abs(self.dual_bound))
        self.chain_ok = self.lhs <= self.rhs + slack

    @property
    def passed(self) -> bool:
        return self.primal_ok and (self.dual_ok or not self.dual_enforced) and self.chain_ok


def dual_check_enforced(sch: StepSchedule, spec: FairnessSpec) -> bool:
    """The logarithmic dual bound is guaranteed when the step never undershoots 1/(modulus j)."""
    if spec.degenerate:
        return False
    return sch.dual_modulus <= spec.strong_convexity() * (1 + 1e-12)


def appendix_chain_check(rt: RoundTrace, problem: Problem) -> ChainReport:
    """Evaluate the per-round inequalities behind the regret bound on one scored round."""
    sch, spec = problem.schedule, problem.spec
    m = rt.m
    bound = dual_regret_bound(sch, m)
    lhs = rt.fairness_star - rt.fairness_alg
    rhs = rt.U_x / m + rt.R_w / m + rt.residual
    return ChainReport(rt.t, rt.R_theta, rt.U_x, rt.R_w, bound, dual_check_enforced(sch, spec),
                       lhs, rhs, rt.residual)
