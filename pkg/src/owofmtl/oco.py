"""Box projections, the three projected gradient steps, and their step-size schedules."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fairness import FairnessSpec


@dataclass(frozen=True)
class BoxDomain:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape:
            raise ValueError("lower and upper must have the same shape")
        if np.any(lo > hi):
            raise ValueError("lower must not exceed upper")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def cube(cls, d: int, low: float = -1.0, high: float = 1.0) -> "BoxDomain":
        return cls(np.full(d, low), np.full(d, high))

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.upper - self.lower))

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    def contains(self, v, tol: float = 0.0) -> bool:
        v = np.asarray(v, dtype=float)
        return bool(np.all(v >= self.lower - tol) and np.all(v <= self.upper + tol))


def project_box(v, dom: BoxDomain) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if np.isnan(v.sum()):
        raise ValueError("cannot project a vector containing NaN")
    return np.minimum(np.maximum(v, dom.lower), dom.upper)


def primal_step(theta, g_theta, eta: float, dom: BoxDomain) -> np.ndarray:
    """Projected gradient *ascent* on the proxy in the model parameters."""
    return project_box(np.asarray(theta) + eta * np.asarray(g_theta), dom)


def dual_step(w, g_w, gamma: float, dualbox: BoxDomain) -> np.ndarray:
    """Projected gradient descent on the proxy in the dual weights."""
    return project_box(np.asarray(w) - gamma * np.asarray(g_w), dualbox)


def outer_step(x, theta_star, eta: float, beta: float, dom: BoxDomain) -> np.ndarray:
    """One OGD step on U_t(x) = |x - theta*|^2 / (2 eta) + const."""
    x = np.asarray(x, dtype=float)
    g_x = (x - np.asarray(theta_star)) / eta
    return project_box(x - beta * g_x, dom)


def dual_grad_bound(spec: FairnessSpec) -> float:
    """Bound on the dual gradient norm.

    Returns the larger of the closed-form constant used in the theory and the
    exact range bound sqrt(K) (u_max - u_min), so the constant never
    understates the true gradient.
    """
    k = spec.num_users
    if spec.degenerate:
        return 0.0
    a = spec.alpha
    printed = np.sqrt(k) * max(
        spec.u_min ** (-1.0 / a) - spec.u_min, spec.u_max - spec.u_max ** (-1.0 / a)
    )
    exact = np.sqrt(k) * (spec.u_max - spec.u_min)
    return float(max(printed, exact))


@dataclass(frozen=True)
class StepSchedule:
    """Learning rates of the inner and outer loops.

    ``gamma_exponent`` is the power applied to ``u_min`` in the dual rate; the
    default ``None`` uses ``1 + 1/alpha``.  Pass ``alpha + 1`` to step at the
    conjugate's exact strong-convexity modulus.
    """

    eta: float
    G_theta: float
    G_w: float
    D_star: float
    alpha: float
    u_min: float
    m: int
    gamma_exponent: float | None = None

    @property
    def dual_modulus(self) -> float:
        """Strong-convexity constant the dual rate assumes: u_min^p / alpha."""
        if self.alpha == 0:
            return np.inf
        p = 1.0 + 1.0 / self.alpha if self.gamma_exponent is None else self.gamma_exponent
        return self.u_min**p / self.alpha

    def beta(self, t: int) -> float:
        return self.eta / t

    def gamma(self, j: int) -> float:
        if self.alpha == 0:
            return 0.0
        return 1.0 / (self.dual_modulus * j)


def schedules(
    spec: FairnessSpec,
    D_star: float,
    G_theta: float,
    m: int,
    gamma_exponent: float | None = None,
) -> StepSchedule:
    if D_star <= 0 or G_theta <= 0 or m <= 0:
        raise ValueError("D_star, G_theta and m must be positive")
    eta = D_star / (G_theta * np.sqrt(m))
    return StepSchedule(
        eta=float(eta),
        G_theta=float(G_theta),
        G_w=dual_grad_bound(spec),
        D_star=float(D_star),
        alpha=spec.alpha,
        u_min=spec.u_min,
        m=int(m),
        gamma_exponent=gamma_exponent,
    )
