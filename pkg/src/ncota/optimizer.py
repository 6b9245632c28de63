"""The NCOTA-DGD iteration: random half-duplex decisions, simultaneous energy
transmissions, disagreement estimation and the projected noisy DGD update."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ncota import phy
from ncota.channel import ChannelProcess, ChannelSpec, GainLaplacian
from ncota.codec import Codebook, encode_cp
from ncota.core import ParamDomain, SeedSpec, project
from ncota.theory import Schedule, stepsizes

STREAMS = ("decisions", "shift", "phase", "noise", "minibatch")


def ptx_equation(p, theta, varpi, M, Q, noise_ratio):
    """Left-hand side of the variance-minimizing transmit-probability equation.

    ``noise_ratio`` is N0 / (Lambda* E).
    """
    p = np.asarray(p, dtype=float)
    with np.errstate(divide="ignore"):
        noise = np.where(p > 0, (3.0 * p - 2.0) / np.sqrt(np.where(p > 0, p, 1.0)), -np.inf)
    noise = noise_ratio * noise if noise_ratio > 0 else 0.0
    return (math.sqrt(2.0 * (1.0 + 2.0 * theta**2)) * p**1.5
            + math.sqrt(Q / M) * math.sqrt(1.0 + varpi**2) * (2.0 * p - 1.0)
            + noise)


def solve_ptx(theta: float, varpi: float, M: int, Q: int, N0: float, E: float,
              lam_star: float, grid_points: int = 1000) -> float:
    """Unique root in (0, 1) of :func:`ptx_equation`, by bisection to machine precision."""
    if min(theta, varpi) < 0 or min(M, Q, E, lam_star) <= 0 or N0 < 0:
        raise ValueError("invalid transmit-probability inputs")
    ratio = N0 / (lam_star * E)
    h = lambda p: float(ptx_equation(p, theta, varpi, M, Q, ratio))
    grid = np.linspace(0.0, 1.0, grid_points)
    grid[0] = np.nextafter(0.0, 1.0)
    signs = np.sign(ptx_equation(grid, theta, varpi, M, Q, ratio))
    changes = int(np.count_nonzero(np.diff(signs[signs != 0])))
    if changes != 1:
        raise ValueError(f"expected one sign change on the grid, found {changes}")
    lo, hi = 0.0, 1.0
    while True:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        hm = h(mid)
        if hm == 0.0:
            return mid
        if hm < 0:
            lo = mid
        else:
            hi = mid
    if lo == 0.0:
        return hi
    return lo if abs(h(lo)) <= abs(h(hi)) else hi


@dataclass
class RunConfig:
    plan: phy.FramePlan
    channel: ChannelSpec
    schedule: Schedule
    p_tx: float
    E: float = 1.0
    N0: float = 0.0
    phi: float = 0.0
    shifts: bool = True
    batch: int | None = None
    K: int = 1000
    trials: int = 1
    seed: int = 0
    stride: int = 50
    mean_field: bool = False

    def __post_init__(self):
        if not 0.0 < self.p_tx < 1.0:
            raise ValueError(f"p_tx must lie in (0, 1), got {self.p_tx}")
        if self.K < 0:
            raise ValueError("K must be >= 0")


@dataclass
class Simulation:
    """Everything one trial needs: problem, domain, codebook, ground-truth Laplacian."""

    config: RunConfig
    problem: object
    domain: ParamDomain
    codebook: Codebook
    laplacian: GainLaplacian

    @property
    def N(self) -> int:
        return self.problem.N


class TrialState:
    """Per-trial random streams and channel process."""

    def __init__(self, sim: Simulation, trial: int = 0):
        seeds = SeedSpec(sim.config.seed)
        self.streams = seeds.trial_streams(trial, STREAMS)
        self.channel = ChannelProcess(sim.config.channel, sim.config.plan, seeds, trial)


def iterate(W, sim: Simulation, k: int, state: TrialState, chi=None):
    """One synchronous frame; returns the next states and per-node diagnostics.

    ``chi`` forces the transmit decisions (boolean array) when given.
    """
    cfg, prob = sim.config, sim.problem
    W = np.asarray(W, dtype=float)
    N = W.shape[0]
    eta, gamma = stepsizes(cfg.schedule, k)
    s = state.streams

    if cfg.mean_field:
        g = prob.grads(W)
        dtilde = -sim.laplacian.apply(W)
        chi = np.zeros(N, dtype=bool)
    else:
        if cfg.batch is None or cfg.batch >= prob.D:
            g = prob.grads(W)
        else:
            g = prob.stochastic_grads(W, cfg.batch, s["minibatch"])
        if chi is None:
            chi = s["decisions"].random(N) < cfg.p_tx
        chi = np.asarray(chi, dtype=bool)
        dtilde = estimate_disagreement(W, chi, sim, k, state)

    W_next = project(W + gamma * dtilde - eta * g, sim.domain)
    return W_next, {"dtilde": dtilde, "g": g, "chi": chi}


def estimate_disagreement(W, chi, sim: Simulation, k: int, state: TrialState) -> np.ndarray:
    """Disagreement estimates of all nodes for one frame (zero rows for transmitters)."""
    cfg, plan = sim.config, sim.config.plan
    s = state.streams
    tx = np.flatnonzero(chi)
    rx = np.flatnonzero(~chi)
    if cfg.shifts:
        shift = phy.draw_shift(s["shift"], plan.M)
        phases = phy.draw_phases(s["phase"], tx.size, plan.Q)
    else:
        shift, phases = 0, None
    dtilde = np.zeros_like(W)
    if rx.size == 0:
        return dtilde
    P = encode_cp(W[tx], cfg.phi, sim.codebook, clip_phi=True)
    x = phy.tx_signals(P, cfg.E, plan, shift, phases)
    h = state.channel.at(k).block(rx, tx)
    y = phy.rx_signals(x, h, cfg.N0, s["noise"])
    r = phy.energy_estimates(y, 0, plan, shift, cfg.p_tx, cfg.E, cfg.N0)
    dtilde[rx] = phy.disagreement(r, sim.codebook, W[rx])
    return dtilde


def sample_iterations(K: int, stride: int):
    ks = list(range(0, K + 1, max(1, stride)))
    if ks[-1] != K:
        ks.append(K)
    return ks


def run(sim: Simulation, trial: int = 0, record=None, ks=None):
    """Run ``K`` frames from the all-zero state.

    ``record(k, W)`` is evaluated at k = 0, every ``stride`` frames and at K
    (or at the explicit iteration list ``ks``). Returns a list of ``(k, value)``.
    """
    cfg = sim.config
    state = TrialState(sim, trial)
    W = np.zeros((sim.N, sim.problem.d))
    if record is None:
        record = lambda k, W: W.copy()
    wanted = set(sample_iterations(cfg.K, cfg.stride) if ks is None else ks)
    out = []
    if 0 in wanted:
        out.append((0, record(0, W)))
    for k in range(cfg.K):
        W, _ = iterate(W, sim, k, state)
        if k + 1 in wanted:
            out.append((k + 1, record(k + 1, W)))
    return out
