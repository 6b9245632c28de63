"""Self-check suites that exercise the estimator, bounds and solver against
independent oracles. Each suite returns report entries; nothing raises on a
failed check."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from ncota import phy
from ncota.channel import ChannelSpec, GainLaplacian, component_gains, draw_realization
from ncota.codec import build_cp_codebook, encode_cp
from ncota.core import SeedSpec
from ncota.montecarlo import simulate_frames
from ncota.optimizer import ptx_equation, solve_ptx
from ncota.theory import TheoryConstants, sigma1_bound

SUITES = ("unbiasedness", "variance", "bias", "rate", "solver")


@dataclass
class Entry:
    suite: str
    statistic: str
    value: float
    threshold: float
    verdict: str

    def as_dict(self) -> dict:
        return asdict(self)


def _entry(suite, statistic, value, threshold, ok):
    return Entry(suite, statistic, float(value), float(threshold), "pass" if ok else "fail")


def random_gains(rng, N, low=0.1, high=1.0):
    upper = np.triu(rng.uniform(low, high, (N, N)), 1)
    return upper + upper.T


def random_states(rng, N, d, r, max_frac=0.9):
    W = rng.standard_normal((N, d))
    W /= np.linalg.norm(W, axis=1, keepdims=True)
    return W * r * rng.uniform(0.1, max_frac, (N, 1))


def z_scores(samples, target):
    """|sample mean - target| in standard errors, per component."""
    n = samples.shape[0]
    se = samples.std(axis=0, ddof=1) / math.sqrt(n)
    dev = np.abs(samples.mean(axis=0) - target)
    return np.where(se > 0, dev / np.where(se > 0, se, 1.0), np.where(dev > 0, np.inf, 0.0))


def unbiasedness(seed: int = 0, frames: int = 200_000, n0_scale: float = 1.0, N: int = 5,
                 d: int = 3, N0: float = 0.3, p_tx: float = 0.4) -> list:
    """Sample mean of the disagreement estimates against -L W over i.i.d.
    Rayleigh frames with Q = M. ``n0_scale`` mis-scales the receiver's noise
    level to inject a fault."""
    rng = np.random.default_rng(seed)
    M = 2 * d + 1
    plan = phy.FramePlan(O=1, SC=M, CP=0, M=M)
    gains = random_gains(rng, N)
    cb = build_cp_codebook(d, 1.0)
    W = random_states(rng, N, d, 1.0)
    batch = simulate_frames(W, cb, plan, frames, rng, p_tx=p_tx, N0=N0, gains=gains,
                            n0_assumed=N0 * n0_scale)
    target = -GainLaplacian.from_gains(gains).apply(W)
    z = float(np.max(z_scores(batch.dtilde, target)))
    return [_entry("unbiasedness", "max |mean - d_i| / SE", z, 4.0, z <= 4.0)]


VARIANCE_CONFIGS = (
    dict(p_tx=0.4, N0=0.3, Q_factor=1),
    dict(p_tx=0.25, N0=1.0, Q_factor=2),
    dict(p_tx=0.6, N0=0.05, Q_factor=2),
)


def variance(seed: int = 0, frames: int = 100_000, N: int = 5, d: int = 3,
             configs=VARIANCE_CONFIGS) -> list:
    """Empirical per-node average variance against the closed-form bound."""
    out = []
    M = 2 * d + 1
    for n, c in enumerate(configs):
        rng = np.random.default_rng([seed, n])
        plan = phy.FramePlan(O=1, SC=M * c["Q_factor"], CP=0, M=M)
        gains = random_gains(rng, N)
        lap = GainLaplacian.from_gains(gains)
        cb = build_cp_codebook(d, 1.0)
        W = random_states(rng, N, d, 1.0)
        batch = simulate_frames(W, cb, plan, frames, rng, p_tx=c["p_tx"], N0=c["N0"], gains=gains)
        emp = float(np.mean(np.sum(batch.dtilde.var(axis=0, ddof=1), axis=-1)))
        const = TheoryConstants(mu=1, L=1, rho2=lap.rho2, rhoN=lap.rhoN, lam_star=lap.lam_star,
                                N=N, dm=2.0, theta=1.0,
                                varpi=float(np.sqrt(np.mean(1.0 / plan.sizes))),
                                M=M, Q=plan.Q, E=1.0, N0=c["N0"], p_tx=c["p_tx"])
        bound = sigma1_bound(const, cb.max_pairwise_distance())
        out.append(_entry("variance", f"config {n}: empirical / bound", emp / bound, 1.0,
                          emp <= bound))
    return out


def bias_prediction(h, P, plan: phy.FramePlan, p_tx: float):
    """Mean energy estimate at a receiver facing a fixed channel without shifts.

    ``h`` has shape (n_tx, Q), ``P`` (n_tx, M). Returns ``(direct, cross)``:
    the per-set gain term sum_j Lambda_j^(m) p_jm and the phase-coherent
    cross term 2 p sum_{j<j'} (1/R_m) sum_q Re(h_j h_j'^*) sqrt(p_jm p_j'm).
    """
    direct = np.sum(component_gains(h, plan) * P, axis=0)
    cross = np.zeros(plan.M)
    n = h.shape[0]
    for j in range(n):
        for jj in range(j + 1, n):
            per_unit = np.real(h[j] * np.conj(h[jj]))
            per_set = phy.set_sums(per_unit[None, :], plan)[0] / plan.sizes
            cross += 2.0 * p_tx * per_set * np.sqrt(P[j] * P[jj])
    return direct, cross


def bias(seed: int = 0, frames: int = 200_000, d: int = 2, p_tx: float = 0.5) -> list:
    """Static channel, receiver 0 and two potential transmitters.

    Without shifts the mean estimate carries the cross term; with shifts it
    matches the average-gain mixture.
    """
    rng = np.random.default_rng(seed)
    N, M = 3, 2 * d + 1
    plan = phy.FramePlan(O=1, SC=M, CP=0, M=M)
    spec = ChannelSpec(model="rayleigh", fading="static", gains=random_gains(rng, N, 0.5, 1.0))
    h = draw_realization(spec, 0, plan, SeedSpec(seed)).full()
    cb = build_cp_codebook(d, 1.0)
    W = random_states(rng, N, d, 1.0)
    P = encode_cp(W, 0.0, cb)
    lam = component_gains(h[0, 1:], plan).mean(axis=-1)
    plain_target = lam @ P[1:]
    direct, cross = bias_prediction(h[0, 1:], P[1:], plan, p_tx)
    out = []
    fixed = simulate_frames(W, cb, plan, frames, rng, p_tx=p_tx, h_static=h, shifts=False)
    z_fixed = float(np.max(z_scores(fixed.energy[:, 0], direct + cross)))
    out.append(_entry("bias", "no shift: max |mean - (direct + cross)| / SE", z_fixed, 4.0,
                      z_fixed <= 4.0))
    z_plain = float(np.max(z_scores(fixed.energy[:, 0], plain_target)))
    out.append(_entry("bias", "no shift: max |mean - Lambda p| / SE (must be large)", z_plain,
                      4.0, z_plain > 4.0))
    shifted = simulate_frames(W, cb, plan, frames, rng, p_tx=p_tx, h_static=h, shifts=True)
    z_shift = float(np.max(z_scores(shifted.energy[:, 0], plain_target)))
    out.append(_entry("bias", "shift: max |mean - Lambda p| / SE", z_shift, 4.0, z_shift <= 4.0))
    return out


def solver(seed: int = 0, tuples: int = 100) -> list:
    """Residuals and grid sign changes on random inputs, plus the two limits."""
    rng = np.random.default_rng(seed)
    worst_res, worst_changes = 0.0, 1
    for _ in range(tuples):
        theta, varpi = rng.uniform(0, 3), rng.uniform(0, 3)
        M = int(rng.integers(3, 50))
        Q = M * int(rng.integers(1, 5))
        ratio = 10 ** rng.uniform(-3, 2)
        p = solve_ptx(theta, varpi, M, Q, ratio, 1.0, 1.0)
        worst_res = max(worst_res, abs(float(ptx_equation(p, theta, varpi, M, Q, ratio))))
        grid = np.linspace(0.0, 1.0, 1000)
        grid[0] = np.nextafter(0.0, 1.0)
        s = np.sign(ptx_equation(grid, theta, varpi, M, Q, ratio))
        changes = int(np.count_nonzero(np.diff(s[s != 0])))
        if changes != 1:
            worst_changes = changes
    noise_lim = solve_ptx(1.0, 1.0, 1, 1, 1e6, 1.0, 1.0)
    rep_lim = solve_ptx(1.0, 1.0, 1, 10**6, 0.0, 1.0, 1.0)
    return [
        _entry("solver", "max residual |h(p*)|", worst_res, 1e-12, worst_res < 1e-12),
        _entry("solver", "grid sign changes (all cases)", worst_changes, 1, worst_changes == 1),
        _entry("solver", "|p* - 2/3| at noise ratio 1e6", abs(noise_lim - 2 / 3), 1e-3,
               abs(noise_lim - 2 / 3) <= 1e-3),
        _entry("solver", "|p* - 1/2| at Q/M = 1e6", abs(rep_lim - 0.5), 1e-3,
               abs(rep_lim - 0.5) <= 1e-3),
    ]


RATE_CONFIG = """\
[run]
trials = 10
iterations = 200000
seed = 0

[network]
nodes = 10

[channel]
kind = iid-rayleigh
gain_low = 0.1
gain_high = 1.0

[frame]
symbols = 1
subcarriers = 16
cyclic_prefix = 4

[radio]
energy = 1.0
noise = 0.1

[problem]
kind = linreg
dimension = 5
heterogeneity = 0.0
noise = 0.0
"""


def rate_iterations(K: int) -> list:
    ks = {0, 100, K}
    ks.update(int(k) for k in np.logspace(2, math.log10(K), 40))
    ks.update(int(k) for k in np.linspace(1e4, K, 20) if 1e4 <= k <= K)
    return sorted(k for k in ks if k <= K)


def rate_trajectories(trials: int = 10, K: int = 200_000, text: str = RATE_CONFIG):
    """Normalized-error trajectories of the rate instance, shape (trials, len(ks))."""
    from ncota.config import parse_config
    from ncota.harness import normalized_error, setup_trial, trajectory

    cfg = parse_config(text, "<rate>")
    ks = rate_iterations(K)
    errs = np.empty((trials, len(ks)))
    states = []
    for t in range(trials):
        setup = setup_trial(cfg, t)
        Ws = []
        for n, (k, W) in enumerate(trajectory(cfg, setup, ks)):
            errs[t, n] = normalized_error(W, setup.wstar)
            Ws.append(W)
        states.append((setup, Ws))
    return np.array(ks), errs, states


def rate_statistics(ks, errs, fit_lo: float = 1e4):
    med = np.median(errs, axis=0)
    ratio = float(med[-1] / med[list(ks).index(100)])
    sel = ks >= fit_lo
    slope = float(np.polyfit(np.log(ks[sel]), np.log(np.mean(errs[:, sel], axis=0)), 1)[0])
    return ratio, slope


def rate(trials: int = 10, K: int = 200_000) -> list:
    ks, errs, _ = rate_trajectories(trials, K)
    ratio, slope = rate_statistics(ks, errs)
    return [
        _entry("rate", "median error at K / at k=100", ratio, 0.1, ratio < 0.1),
        _entry("rate", "log-log slope over [1e4, K]", slope, -0.25, -0.9 <= slope <= -0.25),
    ]


def run_suite(name: str, **kw) -> list:
    if name not in SUITES:
        raise ValueError(f"unknown suite {name!r}; expected one of {SUITES}")
    return globals()[name](**kw)
