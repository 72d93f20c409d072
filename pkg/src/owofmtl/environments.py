"""Kernel sinusoidal regression tasks for K users over T rounds of m slots.

Every user predicts its label with the shared linear model ``theta @ mu(tau)``
on the polynomial features ``mu(tau) = [1, tau, ..., tau^degree]``.  User
``k`` follows ``A sin(omega tau + phi) + eps`` for even ``k`` and the cosine
wave for odd ``k``; the wave parameters are redrawn every round.  In the
adversarial regime the first user's labels change sign on blocks of
``ceil(sqrt(m))`` slots, following a round-dependent pattern.

Random draws are a pure function of ``(seed, t, k)``: each (round, user)
pair owns a substream, so regenerating one user never perturbs another.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .oco import BoxDomain

DEFAULT_PARAMS = {
    # (mean, std) per user; user k uses entry k % 2
    "amplitude": ((1.0, 0.2), (0.6, 0.5)),
    "frequency": ((1.0, 1.0), (0.75, 1.0)),
    "phase": ((math.pi / 3, 0.01), (math.pi / 4, 0.01)),
    "noise": ((0.05, 0.1), (0.05, 0.1)),
}

REGIMES = ("stochastic", "adversarial")


def alternate_pattern(t: int, block: int) -> bool:
    return (block + t) % 2 == 0


FLIP_PATTERNS = {
    "alternate": alternate_pattern,
    "none": lambda t, block: False,
}


@dataclass(frozen=True)
class EnvConfig:
    regime: str = "stochastic"
    K: int = 2
    m: int = 16
    T: int = 512
    n: int = 1
    seed: int = 0
    degree: int = 3
    truncation: float = 3.0
    theta_low: float = -1.0
    theta_high: float = 1.0
    frozen: bool = False
    flip_pattern: str = "alternate"
    amplitude: tuple = DEFAULT_PARAMS["amplitude"]
    frequency: tuple = DEFAULT_PARAMS["frequency"]
    phase: tuple = DEFAULT_PARAMS["phase"]
    noise: tuple = DEFAULT_PARAMS["noise"]
    user_streams: tuple | None = None

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ValueError(f"unknown regime {self.regime!r}; expected one of {REGIMES}")
        if self.n < 1 or self.m < 1 or self.T < 1 or self.K < 1:
            raise ValueError("K, m, T and n must be positive")
        if self.flip_pattern not in FLIP_PATTERNS:
            raise ValueError(f"unknown flip pattern {self.flip_pattern!r}")
        if self.truncation <= 0:
            raise ValueError("truncation must be positive")
        if self.user_streams is not None and len(self.user_streams) != self.K:
            raise ValueError("user_streams needs one entry per user")

    @property
    def d(self) -> int:
        return self.degree + 1

    def theta_box(self) -> BoxDomain:
        return BoxDomain.cube(self.d, self.theta_low, self.theta_high)

    def user_param(self, name: str, k: int) -> tuple[float, float]:
        table = getattr(self, name)
        return tuple(table[k % len(table)])

    def stream_id(self, k: int) -> int:
        return k if self.user_streams is None else int(self.user_streams[k])


def block_size(m: int) -> int:
    return math.isqrt(m - 1) + 1 if m > 1 else 1


def flip_mask(t: int, m: int, pattern: str = "alternate") -> np.ndarray:
    """Per-slot sign-flip indicator for the first user in round ``t``."""
    fn = FLIP_PATTERNS[pattern]
    bs = block_size(m)
    return np.array([fn(t, i // bs) for i in range(m)], dtype=bool)


def features(tau, degree: int = 3) -> np.ndarray:
    """Polynomial features, shape ``tau.shape + (degree + 1,)``."""
    tau = np.asarray(tau, dtype=float)
    return tau[..., None] ** np.arange(degree + 1)


def truncated_normal(rng: np.random.Generator, mean: float, std: float, size, width: float):
    """Gaussian draws conditioned on |x - mean| <= width * std (rejection)."""
    if std == 0:
        return np.full(size, float(mean))
    out = rng.normal(mean, std, size)
    bad = np.abs(out - mean) > width * std
    while bad.any():
        out[bad] = rng.normal(mean, std, int(bad.sum()))
        bad = np.abs(out - mean) > width * std
    return out


def _substream(seed: int, t: int, k: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(t, k)))


@dataclass
class RoundTaskSet:
    """All data of one round: wave parameters and the sampled slot data.

    ``tau`` and ``y`` have shape ``(m, K, n)``; ``y`` already carries the
    adversarial sign flips recorded in ``flip``.
    """

    t: int
    amplitude: np.ndarray
    frequency: np.ndarray
    phase: np.ndarray
    tau: np.ndarray
    y: np.ndarray
    flip: np.ndarray
    degree: int = 3
    _mu: np.ndarray | None = field(default=None, repr=False)
    _quad: tuple | None = field(default=None, repr=False)

    @property
    def m(self) -> int:
        return self.tau.shape[0]

    @property
    def K(self) -> int:
        return self.tau.shape[1]

    @property
    def d(self) -> int:
        return self.degree + 1

    @property
    def mu(self) -> np.ndarray:
        """Features, shape ``(m, K, n, d)``."""
        if self._mu is None:
            self._mu = features(self.tau, self.degree)
        return self._mu

    def quadratic_forms(self):
        """Round-mean loss of user k is ``theta Q_k theta - 2 b_k theta + c_k``."""
        if self._quad is None:
            mu, y = self.mu, self.y
            cnt = self.m * y.shape[2]
            Q = np.einsum("ikns,iknr->ksr", mu, mu) / cnt
            b = np.einsum("ikns,ikn->ks", mu, y) / cnt
            c = np.einsum("ikn,ikn->k", y, y) / cnt
            self._quad = (Q, b, c)
        return self._quad


def sample_round(t: int, cfg: EnvConfig) -> RoundTaskSet:
    """Draw the parameters and slot data of round ``t`` (1-based)."""
    src_t = 1 if cfg.frozen else t
    K, m, n, w = cfg.K, cfg.m, cfg.n, cfg.truncation
    A, om, ph = np.empty(K), np.empty(K), np.empty(K)
    tau = np.empty((m, K, n))
    y = np.empty((m, K, n))
    for k in range(K):
        rng = _substream(cfg.seed, src_t, cfg.stream_id(k))
        A[k] = truncated_normal(rng, *cfg.user_param("amplitude", k), 1, w)[0]
        om[k] = truncated_normal(rng, *cfg.user_param("frequency", k), 1, w)[0]
        ph[k] = truncated_normal(rng, *cfg.user_param("phase", k), 1, w)[0]
        tau[:, k, :] = rng.uniform(0.0, 1.0, (m, n))
        eps = truncated_normal(rng, *cfg.user_param("noise", k), (m, n), w)
        wave = np.sin if k % 2 == 0 else np.cos
        y[:, k, :] = A[k] * wave(om[k] * tau[:, k, :] + ph[k]) + eps
    if cfg.regime == "adversarial":
        flip = flip_mask(src_t, m, cfg.flip_pattern)
        y[flip, 0, :] *= -1.0
    else:
        flip = np.zeros(m, dtype=bool)
    return RoundTaskSet(t, A, om, ph, tau, y, flip, cfg.degree)


def evaluate_slot(theta, task: RoundTaskSet, i: int, k: int) -> tuple[float, np.ndarray]:
    """Squared-error loss of user ``k`` in slot ``i`` and its gradient at ``theta``."""
    if not (0 <= i < task.m and 0 <= k < task.K):
        raise IndexError(f"slot {i} / user {k} out of range for m={task.m}, K={task.K}")
    mu = task.mu[i, k]  # (n, d)
    r = mu @ theta - task.y[i, k]
    return float(np.mean(r * r)), (2.0 / r.size) * (r @ mu)


def evaluate_slot_users(theta, task: RoundTaskSet, i: int) -> tuple[np.ndarray, np.ndarray]:
    """Losses ``(K,)`` and gradients ``(K, d)`` of every user in slot ``i``."""
    mu = task.mu[i]  # (K, n, d)
    r = mu @ theta - task.y[i]  # (K, n)
    n = r.shape[1]
    if n == 1:
        return r[:, 0] * r[:, 0], 2.0 * r * mu[:, 0, :]
    return np.mean(r * r, axis=1), (2.0 / n) * np.einsum("kn,knd->kd", r, mu)


def replay_losses(theta, task: RoundTaskSet) -> np.ndarray:
    """Losses ``(m, K)`` of every slot re-evaluated at a fixed model."""
    r = task.mu @ theta - task.y
    return np.mean(r * r, axis=2)


def _abs_sup(mean: float, std: float, width: float) -> float:
    return abs(mean) + width * std


def loss_bounds(cfg: EnvConfig) -> tuple[float, float]:
    """Provable sup of the per-slot loss and per-user gradient norm.

    Uses |theta_j| <= max(|low|, |high|), features in [0, 1], |sin|, |cos| <= 1
    and the truncated support of every Gaussian draw.
    """
    w = cfg.truncation
    y_sup = max(
        _abs_sup(*cfg.user_param("amplitude", k), w) + _abs_sup(*cfg.user_param("noise", k), w)
        for k in range(cfg.K)
    )
    th = max(abs(cfg.theta_low), abs(cfg.theta_high))
    p_sup = th * cfg.d
    mu_norm = math.sqrt(cfg.d)
    resid = p_sup + y_sup
    return resid**2, 2.0 * resid * mu_norm
