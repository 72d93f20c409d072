"""Alpha-fairness, its conjugate, and the linearised proxy used by the dual player.

All functions are pure and work on 1-D numpy arrays of length ``K`` (one
entry per user).  The proxy

    psi(w, u) = conj(w) - w @ u

is convex in ``w`` on the dual box and its minimum over the box equals
``alpha_fairness(u)`` whenever ``u`` lies in ``[u_min, u_max]^K``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ALPHA_ONE_ATOL = 1e-12


class FairnessDomainError(ValueError):
    """Raised when a utility or dual vector leaves its admissible domain."""


@dataclass(frozen=True)
class FairnessSpec:
    alpha: float
    u_min: float
    u_max: float
    num_users: int = 2

    def __post_init__(self):
        if not self.alpha >= 0:
            raise ValueError(f"alpha must be nonnegative, got {self.alpha}")
        if not 0 < self.u_min < self.u_max:
            raise ValueError(f"need 0 < u_min < u_max, got [{self.u_min}, {self.u_max}]")
        if self.num_users < 1:
            raise ValueError("num_users must be positive")

    @property
    def is_log(self) -> bool:
        return abs(self.alpha - 1.0) <= ALPHA_ONE_ATOL

    @property
    def degenerate(self) -> bool:
        """alpha = 0: the dual box collapses to the point -1."""
        return self.alpha == 0

    @property
    def w_lower(self) -> float:
        return -1.0 / self.u_min**self.alpha

    @property
    def w_upper(self) -> float:
        return -1.0 / self.u_max**self.alpha

    def dual_box(self):
        from .oco import BoxDomain

        k = self.num_users
        return BoxDomain(np.full(k, self.w_lower), np.full(k, self.w_upper))

    def dual_midpoint(self) -> np.ndarray:
        return np.full(self.num_users, 0.5 * (self.w_lower + self.w_upper))

    def strong_convexity(self) -> float:
        """Smallest curvature of the conjugate over the dual box, u_min^(alpha+1)/alpha."""
        if self.degenerate:
            return np.inf
        return self.u_min ** (self.alpha + 1.0) / self.alpha


@dataclass
class ClampCounter:
    """Counts how often the lower (safety) and upper utility clamps bind."""

    lower: int = 0
    upper: int = 0

    def record(self, n_lower: int, n_upper: int):
        self.lower += int(n_lower)
        self.upper += int(n_upper)


def _as_vec(x) -> np.ndarray:
    return np.atleast_1d(np.asarray(x, dtype=float))


def _check_dual(w: np.ndarray, spec: FairnessSpec, tol: float = 1e-12):
    scale = max(1.0, abs(spec.w_lower))
    if w.min() < spec.w_lower - tol * scale or w.max() > spec.w_upper + tol * scale:
        raise FairnessDomainError(
            f"dual weights {w} outside [{spec.w_lower}, {spec.w_upper}]"
        )


def alpha_fairness(u, spec: FairnessSpec) -> float:
    """Sum over users of (u^(1-a) - 1)/(1-a), or of log(u) when a = 1."""
    u = _as_vec(u)
    if np.any(~(u > 0)):
        raise FairnessDomainError(f"utilities must be positive, got {u}")
    a = spec.alpha
    if spec.is_log:
        return float(np.sum(np.log(u)))
    # expm1 keeps the alpha -> 1 limit accurate
    return float(np.sum(np.expm1((1.0 - a) * np.log(u)) / (1.0 - a)))


def fairness_grad(u, spec: FairnessSpec) -> np.ndarray:
    """Gradient of alpha_fairness with respect to the utilities: u^(-alpha)."""
    return _as_vec(u) ** (-spec.alpha)


def conjugate_value(w, spec: FairnessSpec) -> float:
    """Convex conjugate of the negated fairness, evaluated on the dual box."""
    return float(conjugate_rows(_as_vec(w), spec))


def conjugate_rows(W, spec: FairnessSpec):
    """Conjugate summed over the last axis; ``W`` may hold one weight vector per row."""
    W = np.asarray(W, dtype=float)
    _check_dual(W, spec)
    a = spec.alpha
    if spec.degenerate:
        # conjugate of -sum(u - 1) is finite only at w = -1, where it equals -K
        return np.full(W.shape[:-1], -float(W.shape[-1]))
    if spec.is_log:
        return np.sum(-np.log(-W) - 1.0, axis=-1)
    return np.sum((a * (-W) ** (1.0 - 1.0 / a) - 1.0) / (1.0 - a), axis=-1)


def psi_value(w, u, spec: FairnessSpec) -> float:
    w, u = _as_vec(w), _as_vec(u)
    return conjugate_value(w, spec) - float(w @ u)


def psi_dual_grad(w, u, spec: FairnessSpec) -> np.ndarray:
    """Gradient in w of psi: (-w)^(-1/alpha) - u, componentwise."""
    w, u = _as_vec(w), _as_vec(u)
    _check_dual(w, spec)
    if spec.degenerate:
        return np.zeros_like(u)
    return (-w) ** (-1.0 / spec.alpha) - u


def dual_minimizer(u, spec: FairnessSpec) -> np.ndarray:
    """Stationary point of psi(., u): w = -u^(-alpha), clipped into the dual box."""
    u = _as_vec(u)
    w = -(u ** (-spec.alpha))
    return np.clip(w, spec.w_lower, spec.w_upper)


def utility_from_loss(loss, loss_cap: float, spec: FairnessSpec, counter: ClampCounter | None = None):
    """Map losses to utilities ``clamp(loss_cap - loss, u_min, u_max)``.

    Accepts a scalar or an array.  When ``counter`` is given, clamp events are
    recorded on it; the lower clamp is a safety net and should never bind when
    ``loss_cap`` comes from honest loss bounds.
    """
    raw = loss_cap - np.asarray(loss, dtype=float)
    if counter is not None and (raw.min() < spec.u_min or raw.max() > spec.u_max):
        counter.record(np.count_nonzero(raw < spec.u_min), np.count_nonzero(raw > spec.u_max))
    out = np.minimum(np.maximum(raw, spec.u_min), spec.u_max)
    return float(out) if out.ndim == 0 else out
