"""Closed-form evaluators for the variance bounds, stepsize conditions and error bounds."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

KAPPA_CAP = 10**9


@dataclass(frozen=True)
class TheoryConstants:
    mu: float
    L: float
    rho2: float
    rhoN: float
    lam_star: float
    N: int
    dm: float
    grad_star: float = 0.0
    zeta: float = math.inf
    sigma1: float = 0.0
    sigma2: float = 0.0
    theta: float = 1.0
    varpi: float = 1.0
    M: int = 1
    Q: int = 1
    E: float = 1.0
    N0: float = 0.0
    p_tx: float = 0.5

    def with_(self, **kw) -> "TheoryConstants":
        return replace(self, **kw)


@dataclass(frozen=True)
class Schedule:
    """Stepsizes ``eta_k = eta0 / (1 + delta k)``, ``gamma_k = gamma0 / (1 + delta k)^(3/4)``.

    ``mode="constant"`` ignores ``delta``.
    """

    eta0: float
    gamma0: float
    delta: float = 0.0
    mode: str = "decreasing"

    def __post_init__(self):
        if not (self.eta0 > 0 and self.gamma0 >= 0):
            raise ValueError("need eta0 > 0 and gamma0 >= 0")
        if self.delta < 0:
            raise ValueError("decay rate must be >= 0")
        if self.mode not in ("decreasing", "constant"):
            raise ValueError(f"unknown schedule mode {self.mode!r}")

    def at(self, k):
        """(eta_k, gamma_k); ``k`` may be an array."""
        if isinstance(k, (int, np.integer)):
            if self.mode == "constant":
                return self.eta0, self.gamma0
            base = 1.0 + self.delta * k
            return self.eta0 / base, self.gamma0 * base ** -0.75
        if self.mode == "constant":
            k = np.asarray(k, dtype=float)
            if k.ndim == 0:
                return self.eta0, self.gamma0
            return np.full(k.shape, self.eta0), np.full(k.shape, self.gamma0)
        base = 1.0 + self.delta * np.asarray(k, dtype=float)
        eta, gamma = self.eta0 / base, self.gamma0 * base ** -0.75
        if np.ndim(eta) == 0:
            return float(eta), float(gamma)
        return eta, gamma


def stepsizes(schedule: Schedule, k):
    if (k < 0) if isinstance(k, (int, np.integer)) else np.any(np.asarray(k) < 0):
        raise ValueError("iteration index must be >= 0")
    return schedule.at(k)


def baseline_schedule(mu: float, L: float, rho2: float) -> Schedule:
    eta0 = 2.0 / (mu + L)
    return Schedule(eta0=eta0, gamma0=0.05 / rho2, delta=0.8 * mu * eta0)


def sigma1_bound(c: TheoryConstants, max_codeword_dist: float) -> float:
    """Upper bound on the per-node average variance of the disagreement estimate."""
    p = c.p_tx
    if not 0.0 < p < 1.0:
        raise ValueError(f"p_tx must lie in (0, 1), got {p}")
    ratio = math.sqrt(c.M / c.Q)
    bracket = (ratio * math.sqrt(2.0 * (1.0 + 2.0 * c.theta**2)) * c.lam_star
               + math.sqrt(1.0 + c.varpi**2) / math.sqrt(p) * c.lam_star
               + ratio * c.N0 / (c.E * p))
    return max_codeword_dist**2 / (1.0 - p) * bracket**2


def _c2_threshold(c: TheoryConstants) -> float:
    if c.grad_star == 0:
        return math.inf
    return c.zeta * c.mu * c.rho2 / (math.sqrt(c.N) * c.grad_star * c.L)


def check_conditions(c: TheoryConstants, schedule: Schedule, k: int):
    eta, gamma = schedule.at(k)
    eta1, gamma1 = schedule.at(k + 1)
    c1 = eta * (c.mu + c.L) + gamma * c.rhoN <= 2.0
    c2 = gamma > 0 and eta / gamma <= _c2_threshold(c)
    c3 = gamma / eta <= gamma1 / eta1 * (1 + 1e-15)
    return bool(c1), bool(c2), bool(c3)


def kappa_bar(c: TheoryConstants, schedule: Schedule, cap: int = KAPPA_CAP) -> int:
    """Smallest k at which C1 and C2 hold.

    Both left-hand sides are nonincreasing in k for the decreasing schedule,
    so the first feasible index is found by doubling then bisection.
    """
    def ok(k):
        c1, c2, _ = check_conditions(c, schedule, k)
        return c1 and c2

    if ok(0):
        return 0
    if schedule.mode == "constant" or schedule.delta == 0:
        raise ValueError("constant stepsizes violate C1/C2 and never recover")
    hi = 1
    while not ok(hi):
        hi *= 2
        if hi > cap:
            raise ValueError(f"C1/C2 not met below k={cap}")
    lo = hi // 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


def theorem1_curve(c: TheoryConstants, schedule: Schedule, kbar: int, k_max: int):
    """Fixed-schedule bound right-hand sides for every k in [kbar, k_max].

    Uses the recursions B1^2(k+1) = (1 - mu eta_k)^2 B1^2(k) + gamma_k^2 S1 + eta_k^2 S2
    and its analogue for the tracking sum, with empty products equal to 1.
    Returns ``(ks, B1, B2, B3)`` arrays.
    """
    ks = np.arange(kbar, k_max + 1)
    eta, gamma = schedule.at(np.arange(kbar, k_max + 2))
    eta, gamma = np.atleast_1d(eta), np.atleast_1d(gamma)
    if eta.size == 1:
        eta = np.full(ks.size + 1, eta)
        gamma = np.full(ks.size + 1, gamma)
    decay = 1.0 - c.mu * eta
    ratio = eta / gamma
    scale = c.grad_star * c.L / (c.mu * c.rho2)
    noise_sq = np.empty(ks.size)
    track = np.empty(ks.size)
    init = np.empty(ks.size)
    a, b, p = 0.0, 0.0, 1.0
    for n in range(ks.size):
        noise_sq[n], track[n], init[n] = a, b, p
        t = n  # index into eta/gamma for iteration kbar + n
        a = decay[t] ** 2 * a + gamma[t] ** 2 * c.sigma1 + eta[t] ** 2 * c.sigma2
        b = decay[t] * b + (1.0 + c.L**2 / (c.mu * c.rho2) * ratio[t]) * (ratio[t] - ratio[t + 1])
        p = decay[t] * p
    B1 = np.sqrt(noise_sq)
    B2 = c.dm * init + scale * track
    B3 = scale * ratio[: ks.size]
    return ks, B1, B2, B3


def theorem1_bounds(c: TheoryConstants, schedule: Schedule, kbar: int, k: int,
                    check: bool = True):
    if k < kbar:
        raise ValueError(f"k={k} precedes kbar={kbar}")
    if check:
        for t in range(kbar, k + 1):
            if not all(check_conditions(c, schedule, t)):
                raise ValueError(f"stepsize conditions violated at k={t}")
    _, B1, B2, B3 = theorem1_curve(c, schedule, kbar, k)
    return float(B1[-1]), float(B2[-1]), float(B3[-1])


def constant_stepsize_bounds(c: TheoryConstants, eta: float, gamma: float, K: int):
    """Simplified constant-stepsize bounds at horizon ``K`` (with kbar = 0)."""
    scale = c.grad_star * c.L / (c.mu * c.rho2)
    return (math.sqrt(c.sigma1) * gamma / math.sqrt(eta * c.mu),
            c.dm * (1.0 - c.mu * eta) ** K,
            scale * eta / gamma)


def theorem2_bounds(c: TheoryConstants, eta0: float, gamma0: float, delta: float,
                    kbar: int, k):
    """Closed-form decreasing-stepsize bounds; ``k`` may be an array."""
    limit = 0.8 * c.mu * eta0
    if delta > limit * (1 + 1e-12):
        raise ValueError(f"decay rate {delta} exceeds 4/5 mu eta0 = {limit}")
    k = np.asarray(k, dtype=float)
    if np.any(k < kbar):
        raise ValueError("k must be >= kbar")
    g = (1.0 + delta * k) ** -0.25
    scale = c.grad_star * c.L / (c.mu * c.rho2)
    ratio0 = eta0 / gamma0
    B1 = (math.sqrt(5.0) * math.e / (2.0 * math.sqrt(c.mu))
          * (gamma0 / math.sqrt(eta0) * math.sqrt(c.sigma1)
             + math.sqrt(eta0 * c.sigma2) * g) * g)
    B2 = (c.dm * (1.0 + delta * (k - kbar) / (1.0 + delta * kbar)) ** -1.25
          + scale * math.e / 4.0 * ratio0 * (1.0 + c.L**2 / (c.mu * c.rho2) * ratio0 * g) * g)
    B3 = scale * ratio0 * g
    if B1.ndim == 0:
        return float(B1), float(B2), float(B3)
    return B1, B2, B3


def lyapunov_value(W, laplacian, eta: float, gamma: float, problem) -> float:
    """f(W) + gamma / (2 eta) * W^T (L kron I) W, evaluated blockwise."""
    W = np.asarray(W, dtype=float)
    quad = float(np.sum(W * (np.asarray(laplacian) @ W)))
    return float(np.sum(problem.values(W))) + gamma / (2.0 * eta) * quad


def measure_noise(diag, laplacian, problem, W):
    """Consensus and gradient noise of one frame.

    ``diag`` carries the realized disagreement estimates ``dtilde`` and
    gradients ``g`` at states ``W``; the conditional means are ``-L W`` and the
    exact local gradients.
    """
    W = np.asarray(W, dtype=float)
    eps1 = diag["dtilde"] + np.asarray(laplacian) @ W
    eps2 = diag["g"] - problem.grads(W)
    return eps1, eps2
