"""Experiment orchestration: optimum oracle, metrics, trial setup and CSV output."""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ncota import baselines, phy
from ncota.channel import (ChannelProcess, ChannelSpec, Deployment, GainLaplacian,
                           average_gain_laplacian, channel_dispersion, deploy_uniform_disc,
                           friis_gain)
from ncota.codec import Codebook, build_cp_codebook
from ncota.config import ExperimentConfig, to_db
from ncota.core import ParamDomain, SeedSpec
from ncota.optimizer import RunConfig, Simulation, TrialState, iterate, sample_iterations, solve_ptx
from ncota.problems import (CrossEntropyProblem, LabeledDataset, Problem, deploy_labels,
                            distribute_samples, load_feature_file, minibatch_size,
                            sigma2_bound, synthetic_classification, synthetic_linreg,
                            compute_radius)
from ncota.theory import Schedule, TheoryConstants, sigma1_bound

log = logging.getLogger("ncota")

COLUMNS = ("trial", "k", "time_s", "norm_err", "subopt_gap", "test_err")
WSTAR_MAX_ITER = 1_000_000


def compute_wstar(problem: Problem, tol: float = 1e-10, max_iter: int = WSTAR_MAX_ITER):
    """Minimizer of the global objective.

    Linear regression uses its normal equations; otherwise full-gradient
    descent with stepsize 2/(mu+L) runs until
    ``||grad F|| <= tol * max(1, ||grad F(0)||)``.
    """
    solve = getattr(problem, "solve", None)
    if solve is not None:
        return solve()
    w = np.zeros(problem.d)
    g = problem.global_grad(w)
    stop = tol * max(1.0, float(np.linalg.norm(g)))
    step = 2.0 / (problem.mu + problem.L)
    for _ in range(max_iter):
        if np.linalg.norm(g) <= stop:
            return w
        w = w - step * g
        g = problem.global_grad(w)
    if np.linalg.norm(g) <= stop:
        return w
    raise RuntimeError(f"optimum solver did not converge in {max_iter} iterations")


def normalized_error(states, wstar) -> float:
    wstar = np.asarray(wstar, dtype=float)
    ref = float(wstar @ wstar)
    if ref == 0.0:
        raise ValueError("normalized error is undefined for w* = 0")
    states = np.atleast_2d(np.asarray(states, dtype=float))
    return float(np.sum((states - wstar) ** 2) / (states.shape[0] * ref))


def suboptimality_gap(problem: Problem, states, f_star: float) -> float:
    return problem.global_value(np.mean(np.atleast_2d(states), axis=0)) - f_star


def test_error(problem: CrossEntropyProblem, w_avg, test_set: LabeledDataset) -> float:
    """Misclassification rate of the average model; ties go to the lowest class."""
    if len(test_set) == 0:
        raise ValueError("empty test set")
    return float(np.mean(problem.predict(w_avg, test_set.features) != test_set.labels))


def gradient_divergence(problem: Problem, wstar) -> float:
    """max_i ||grad f_i(w*)||."""
    return float(np.max(np.linalg.norm(problem.grads(np.broadcast_to(wstar, (problem.N, problem.d))),
                                       axis=1)))


@dataclass
class TrialSetup:
    trial: int
    problem: Problem
    wstar: np.ndarray
    f_star: float
    domain: ParamDomain
    codebook: Codebook
    plan: phy.FramePlan
    channel: ChannelSpec
    laplacian: GainLaplacian
    schedule: Schedule
    frame_time: float
    E: float
    N0: float
    p_tx: float
    theta: float
    varpi: float
    batch: int | None
    test_set: LabeledDataset | None = None


def radio_levels(cfg: ExperimentConfig):
    """Dimensionless (E, N0). With physical power and noise density the energy
    per sample is normalized to 1 and N0 becomes the noise-to-energy ratio."""
    P, psd = cfg.get("radio", "tx_power"), cfg.get("radio", "noise_psd")
    if P is None and psd is None:
        return cfg.get("radio", "energy"), cfg.get("radio", "noise")
    if P is None or psd is None:
        raise ValueError("tx_power and noise_psd must be given together")
    W_tot = cfg.get("channel", "bandwidth")
    E_phys = P / W_tot
    N0 = psd / E_phys
    log.info("radio: P=%.3g W (%.1f dBm), W_tot=%.3g Hz -> E=%.3g J per sample; "
             "N0=%.3g W/Hz (%.1f dBm/Hz) -> normalized E=1, N0=%.3g",
             P, to_db(P), W_tot, E_phys, psd, to_db(psd), N0)
    return 1.0, N0


def _dataset(cfg: ExperimentConfig, seeds: SeedSpec):
    feat = cfg.get("problem", "feature_file")
    if feat:
        train = load_feature_file(feat)
        test_path = cfg.get("problem", "test_file")
        return train, (load_feature_file(test_path) if test_path else None)
    n_tr, n_te = cfg.get("problem", "samples_per_class"), cfg.get("problem", "test_per_class")
    full = synthetic_classification(n_tr + n_te, seeds.generator(purpose="dataset"))
    is_test = np.zeros(len(full), dtype=bool)
    for c in np.unique(full.labels):
        is_test[np.flatnonzero(full.labels == c)[n_tr:]] = True
    train = LabeledDataset(full.features[~is_test], full.labels[~is_test])
    test = LabeledDataset(full.features[is_test], full.labels[is_test]) if n_te > 0 else None
    return train, test


def build_problem(cfg: ExperimentConfig, seeds: SeedSpec, layout_trial: int,
                  deployment: Deployment):
    N = cfg.get("network", "nodes")
    mu = cfg.get("problem", "mu")
    if cfg.get("problem", "kind") == "linreg":
        # the data set is common to all trials
        prob = synthetic_linreg(N, cfg.get("problem", "dimension"), seeds.generator(purpose="problem"),
                                mu=1.0 if mu is None else mu, L=cfg.get("problem", "L"),
                                heterogeneity=cfg.get("problem", "heterogeneity"),
                                noise=cfg.get("problem", "noise"))
        return prob, None
    train, test = _dataset(cfg, seeds)
    labels = deploy_labels(N, cfg.get("network", "label_mode"),
                           seeds.generator(layout_trial, purpose="labels"), deployment)
    samples = distribute_samples(train, labels, seeds.generator(layout_trial, purpose="samples"))
    return CrossEntropyProblem(train, samples, mu=1e-3 if mu is None else mu), test


def build_channel(cfg: ExperimentConfig, seeds: SeedSpec, layout_trial: int, deployment):
    N = deployment.N
    kind = cfg.get("channel", "kind")
    if cfg.get("channel", "gains") == "friis":
        dist = np.linalg.norm(deployment.nodes[:, None] - deployment.nodes[None], axis=-1)
        np.fill_diagonal(dist, 1.0)
        gains = friis_gain(dist, cfg.get("channel", "carrier"))
    else:
        lo, hi = cfg.get("channel", "gain_low"), cfg.get("channel", "gain_high")
        if not 0 < lo <= hi:
            raise ValueError("need 0 < gain_low <= gain_high")
        upper = np.triu(seeds.generator(layout_trial, purpose="gains").uniform(lo, hi, (N, N)), 1)
        gains = upper + upper.T
    np.fill_diagonal(gains, 0.0)
    kw = dict(gains=gains, deployment=deployment, f_c=cfg.get("channel", "carrier"),
              W_tot=cfg.get("channel", "bandwidth"), coherence_time=cfg.get("channel", "coherence"))
    if kind in ("block-fading", "static"):
        kw["model"] = cfg.get("channel", "model")
    if kind == "reflector-multipath":
        kw["fading"] = cfg.get("channel", "fading")
    return ChannelSpec.from_kind(kind, **kw)


def setup_trial(cfg: ExperimentConfig, trial: int) -> TrialSetup:
    seeds = SeedSpec(cfg.get("run", "seed"))
    layout = 0 if cfg.get("run", "pin_deployment") else trial
    N = cfg.get("network", "nodes")
    deployment = deploy_uniform_disc(N, cfg.get("network", "area_radius"),
                                     seeds.generator(layout, purpose="deployment"))
    problem, test_set = build_problem(cfg, seeds, layout, deployment)
    wstar = compute_wstar(problem)
    r = compute_radius(problem)
    if r <= 0:
        raise ValueError("degenerate problem: grad F(0) = 0")
    domain = ParamDomain(problem.d, r)
    codebook = build_cp_codebook(problem.d, r)
    plan = phy.FramePlan(O=cfg.get("frame", "symbols"), SC=cfg.get("frame", "subcarriers"),
                         CP=cfg.get("frame", "cyclic_prefix"), M=codebook.size)
    spec = build_channel(cfg, seeds, layout, deployment)
    budget = cfg.get("channel", "lambda_budget")
    lap = average_gain_laplacian(spec, plan, budget, seeds, trial, cfg.get("channel", "lambda_method"))
    E, N0 = radio_levels(cfg)

    theta, varpi = cfg.get("algorithm", "theta"), cfg.get("algorithm", "varpi")
    if theta is None or varpi is None:
        th, vp = channel_dispersion(spec, plan, budget, seeds, trial, gains=lap.gains)
        theta = th if theta is None else theta
        varpi = vp if varpi is None else varpi
    p_tx = cfg.get("algorithm", "p_tx")
    if p_tx is None:
        p_tx = solve_ptx(theta, varpi, plan.M, plan.Q, N0, E, lap.lam_star)

    eta0 = cfg.get("algorithm", "eta0")
    eta0 = 2.0 / (problem.mu + problem.L) if eta0 is None else eta0
    gamma0 = cfg.get("algorithm", "gamma0")
    gamma0 = 0.05 / lap.rho2 if gamma0 is None else gamma0
    delta = cfg.get("algorithm", "delta")
    delta = 0.8 * problem.mu * eta0 if delta is None else delta
    schedule = Schedule(eta0, gamma0, delta, cfg.get("algorithm", "schedule"))
    if gamma0 * lap.rhoN > 2.0:
        log.warning("trial %d: gamma0*rhoN=%.3g; the consensus step is unstable until the "
                    "schedule decays (consider a smaller gamma0)", trial, gamma0 * lap.rhoN)

    algorithm = cfg.get("run", "algorithm")
    W_tot = cfg.get("channel", "bandwidth")
    T_ofdm = (plan.SC + plan.CP) / W_tot
    if algorithm.startswith("qdgd"):
        T = _allocation(cfg, N).frame_duration(T_ofdm)
    else:
        T = phy.frame_duration(plan, W_tot)
    batch = cfg.get("problem", "batch")
    if batch == "full":
        batch = None
    elif batch == "auto":
        batch = minibatch_size(T, cfg.get("problem", "gradient_time"), problem.D)
    elif not 1 <= batch <= problem.D:
        raise ValueError(f"batch {batch} outside [1, {problem.D}]")
    log.info("trial %d: N=%d d=%d r=%.4g rho2=%.4g rhoN=%.4g Lambda*=%.4g p_tx=%.4f "
             "theta=%.3g varpi=%.3g T=%.4g s batch=%s", trial, N, problem.d, r, lap.rho2,
             lap.rhoN, lap.lam_star, p_tx, theta, varpi, T, batch)
    return TrialSetup(trial, problem, wstar, problem.global_value(wstar), domain, codebook, plan,
                      spec, lap, schedule, T, E, N0, p_tx, theta, varpi, batch, test_set)


def _allocation(cfg, N):
    return baselines.OfdmaAllocation(N, cfg.get("frame", "subcarriers"),
                                     cfg.get("algorithm", "subcarriers_per_node"))


def theory_constants(setup: TrialSetup) -> TheoryConstants:
    """Bound constants from the oracles of one trial (Sigma2 from the minibatch lemma)."""
    prob = setup.problem
    dm = setup.domain.diameter
    grad_star = gradient_divergence(prob, setup.wstar)
    lap = setup.laplacian
    c = TheoryConstants(mu=prob.mu, L=prob.L, rho2=lap.rho2, rhoN=lap.rhoN, lam_star=lap.lam_star,
                        N=prob.N, dm=dm, grad_star=grad_star,
                        zeta=setup.domain.radius - float(np.linalg.norm(setup.wstar)),
                        theta=setup.theta, varpi=setup.varpi, M=setup.plan.M, Q=setup.plan.Q,
                        E=setup.E, N0=setup.N0, p_tx=setup.p_tx)
    s1 = sigma1_bound(c, setup.codebook.max_pairwise_distance())
    s2 = 0.0 if setup.batch is None else sigma2_bound(prob.D, setup.batch,
                                                        _sample_grad_star(prob, setup.wstar),
                                                        prob.L, dm)
    return c.with_(sigma1=s1, sigma2=s2)


def _sample_grad_star(prob, wstar) -> float:
    """Largest per-sample gradient norm at w* over all nodes and samples."""
    W = np.broadcast_to(wstar, (prob.N, prob.d))
    return float(max(np.max(np.linalg.norm(prob.sample_grads(W, np.full((prob.N, 1), s)), axis=1))
                     for s in range(prob.D)))


def simulation(setup: TrialSetup, cfg: ExperimentConfig) -> Simulation:
    rc = RunConfig(plan=setup.plan, channel=setup.channel, schedule=setup.schedule,
                   p_tx=setup.p_tx, E=setup.E, N0=setup.N0, phi=cfg.get("algorithm", "phi"),
                   shifts=cfg.get("algorithm", "shifts"), batch=setup.batch,
                   K=cfg.get("run", "iterations"), trials=cfg.get("run", "trials"),
                   seed=cfg.get("run", "seed"), stride=cfg.get("run", "stride"))
    return Simulation(rc, setup.problem, setup.domain, setup.codebook, setup.laplacian)


def _metrics(setup: TrialSetup, k: int, W) -> tuple:
    w_avg = W.mean(axis=0)
    te = math.nan if setup.test_set is None else test_error(setup.problem, w_avg, setup.test_set)
    return (setup.trial, k, k * setup.frame_time, normalized_error(W, setup.wstar),
            setup.problem.global_value(w_avg) - setup.f_star, te)


def trajectory(cfg: ExperimentConfig, setup: TrialSetup, ks):
    """Yield ``(k, W)`` at the iterations in ``ks`` for the configured algorithm."""
    algorithm = cfg.get("run", "algorithm")
    K = max(ks)
    wanted = set(ks)
    prob, trial = setup.problem, setup.trial
    W = np.zeros((prob.N, prob.d))
    if 0 in wanted:
        yield 0, W.copy()
    if algorithm == "ncota":
        sim = simulation(setup, cfg)
        state = TrialState(sim, trial)
        for k in range(K):
            W, _ = iterate(W, sim, k, state)
            if k + 1 in wanted:
                yield k + 1, W.copy()
        return
    seeds = SeedSpec(cfg.get("run", "seed"))
    streams = seeds.trial_streams(trial, ("minibatch", "quantizer"))
    if algorithm == "local":
        for k in range(K):
            eta, _ = setup.schedule.at(k)
            W = baselines.local_only_iterate(W, eta, _grads(prob, W, setup.batch, streams), setup.domain)
            if k + 1 in wanted:
                yield k + 1, W.copy()
        return
    alloc = _allocation(cfg, prob.N)
    qplan = phy.FramePlan(O=1, SC=alloc.SC, CP=setup.plan.CP, M=1)
    process = ChannelProcess(setup.channel, qplan, seeds, trial, frame_time=setup.frame_time)
    if algorithm == "qdgd-lpq":
        b = cfg.get("algorithm", "bits")
        bits = baselines.lpq_payload_bits(prob.d, b)
        quantize = lambda w: baselines.lpq_quantize(w, b, streams["quantizer"])
    else:
        rep = cfg.get("algorithm", "repetitions")
        bits = baselines.vq_payload_bits(prob.d, rep)
        quantize = lambda w: baselines.vq_quantize(w, rep, setup.codebook, streams["quantizer"])
    for k in range(K):
        eta, gamma = setup.schedule.at(k)
        if setup.N0 == 0:
            success = np.ones((prob.N, prob.N), dtype=bool)
        else:
            success = baselines.success_matrix(bits, process.at(k), alloc, setup.E / setup.N0)
        W = baselines.qdgd_iterate(W, quantize, gamma, eta, _grads(prob, W, setup.batch, streams),
                                   success, setup.domain)
        if k + 1 in wanted:
            yield k + 1, W.copy()


def _grads(prob, W, batch, streams):
    if batch is None:
        return prob.grads(W)
    return prob.stochastic_grads(W, batch, streams["minibatch"])


def run_trial(cfg: ExperimentConfig, trial: int, ks=None) -> list:
    """Metric rows ``(trial, k, time_s, norm_err, subopt_gap, test_err)`` of one trial."""
    setup = setup_trial(cfg, trial)
    if ks is None:
        ks = sample_iterations(cfg.get("run", "iterations"), cfg.get("run", "stride"))
    return [_metrics(setup, k, W) for k, W in trajectory(cfg, setup, ks)]


def _run_trial_text(args):
    from ncota.config import parse_config
    text, path, trial, ks = args
    return run_trial(parse_config(text, path), trial, ks)


def run_trials(cfg: ExperimentConfig, ks=None) -> list:
    """All trials' rows in trial order; trials run in worker processes when
    ``workers > 1``."""
    trials = cfg.get("run", "trials")
    if trials < 1:
        raise ValueError("need at least one trial")
    workers = min(cfg.get("run", "workers"), trials)
    if workers <= 1:
        return [run_trial(cfg, t, ks) for t in range(trials)]
    jobs = [(cfg.to_text(), cfg.path, t, ks) for t in range(trials)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_trial_text, jobs))


def aggregate(per_trial: list) -> list:
    """Across-trial means per sampled iteration: ``(k, time_s, norm_err, subopt_gap, test_err)``."""
    table = np.array([[row[1:] for row in rows] for rows in per_trial], dtype=float)
    mean = table.mean(axis=0)
    return [(int(m[0]),) + tuple(float(v) for v in m[1:]) for m in mean]


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_csv(path, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def aggregate_path(out) -> Path:
    out = Path(out)
    return out.with_name(out.stem + ".aggregate" + (out.suffix or ".csv"))


def run_experiment(cfg: ExperimentConfig, out) -> tuple:
    """Run all trials and write the per-trial and aggregate CSV files.

    Returns ``(per_trial_rows, aggregate_rows)``.
    """
    per_trial = run_trials(cfg)
    rows = [row for rows in per_trial for row in rows]
    agg = aggregate(per_trial)
    write_csv(out, COLUMNS, rows)
    write_csv(aggregate_path(out), COLUMNS[1:], agg)
    return rows, agg


def bound_table(cfg: ExperimentConfig, trial: int = 0, ks=None):
    """Sigma1, Sigma2 and the decreasing-stepsize bound curves for one trial's setup.

    Returns ``(constants, kbar, rows)`` with rows ``(k, B1, B2, B3, total)``.
    """
    from ncota.theory import kappa_bar, theorem2_bounds

    setup = setup_trial(cfg, trial)
    c = theory_constants(setup)
    s = setup.schedule
    try:
        kbar = kappa_bar(c, s)
    except ValueError as exc:
        raise ValueError(f"{exc} (grad*={c.grad_star:.3g}, zeta={c.zeta:.3g}); the bounds "
                         "apply only once the stepsize conditions hold") from None
    if ks is None:
        ks = [k for k in sample_iterations(cfg.get("run", "iterations"), cfg.get("run", "stride"))
              if k >= kbar] or [kbar]
    B1, B2, B3 = theorem2_bounds(c, s.eta0, s.gamma0, s.delta, kbar, np.asarray(ks))
    rows = [(int(k), float(a), float(b), float(e), float(a + b + e))
            for k, a, b, e in zip(ks, np.atleast_1d(B1), np.atleast_1d(B2), np.atleast_1d(B3))]
    return c, kbar, rows
