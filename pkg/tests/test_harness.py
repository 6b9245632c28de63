import csv
import math

import numpy as np
import pytest

from ncota import harness
from ncota.config import parse_config
from ncota.problems import synthetic_linreg


def test_compute_wstar_descent_matches_normal_equations(rng):
    prob = synthetic_linreg(4, 3, rng)
    exact = prob.solve()
    prob.solve = None
    w = harness.compute_wstar(prob)
    assert np.max(np.abs(w - exact)) <= 1e-8
    with pytest.raises(RuntimeError):
        harness.compute_wstar(prob, tol=1e-300, max_iter=3)


def test_metric_examples():
    wstar = np.array([1.0, 0.0])
    W = np.array([[1.0, 0.0], [3.0, 0.0]])
    assert harness.normalized_error(W, wstar) == pytest.approx(2.0)
    assert harness.normalized_error(wstar, wstar) == 0.0
    with pytest.raises(ValueError):
        harness.normalized_error(W, np.zeros(2))


def test_gap_and_divergence(rng):
    prob = synthetic_linreg(3, 2, rng, heterogeneity=0.0, noise=0.0)
    wstar = prob.solve()
    f_star = prob.global_value(wstar)
    assert harness.suboptimality_gap(prob, np.tile(wstar, (3, 1)), f_star) == 0.0
    assert harness.suboptimality_gap(prob, np.zeros((3, 2)), f_star) > 0
    assert harness.gradient_divergence(prob, wstar) < 1e-10
    het = synthetic_linreg(3, 2, rng)
    assert harness.gradient_divergence(het, het.solve()) > 1e-3


def test_radio_levels():
    cfg = parse_config("[radio]\ntx_power = 20dBm\nnoise_psd = -174dBm/Hz\n"
                       "[channel]\nbandwidth = 5MHz\n")
    E, N0 = harness.radio_levels(cfg)
    assert E == 1.0
    assert N0 == pytest.approx(10 ** -20.4 / (0.1 / 5e6), rel=1e-12)
    with pytest.raises(ValueError):
        harness.radio_levels(parse_config("[radio]\ntx_power = 1W\n"))
    assert harness.radio_levels(parse_config("[radio]\nenergy = 2\nnoise = 0.5\n")) == (2.0, 0.5)


def test_setup_defaults(small_cfg):
    s = harness.setup_trial(small_cfg, 0)
    assert s.plan.M == 2 * 3 + 1 and s.plan.Q == 14
    assert s.schedule.eta0 == pytest.approx(2.0 / (s.problem.mu + s.problem.L))
    assert s.schedule.gamma0 == pytest.approx(0.05 / s.laplacian.rho2)
    assert s.schedule.delta == pytest.approx(0.8 * s.problem.mu * s.schedule.eta0)
    assert 0 < s.p_tx < 1
    assert s.frame_time == pytest.approx(18 / 5e6)
    other = harness.setup_trial(small_cfg, 1)
    assert not np.array_equal(s.laplacian.gains, other.laplacian.gains)
    pinned = small_cfg.set("run", "pin_deployment", "true")
    assert np.array_equal(harness.setup_trial(pinned, 1).laplacian.gains,
                          harness.setup_trial(pinned, 0).laplacian.gains)


def test_run_experiment_outputs(small_cfg, tmp_path):
    out = tmp_path / "res.csv"
    rows, agg = harness.run_experiment(small_cfg, out)
    assert len(rows) == 2 * 4
    with open(out, newline="") as fh:
        table = list(csv.reader(fh))
    assert tuple(table[0]) == harness.COLUMNS
    assert len(table) == 9
    with open(harness.aggregate_path(out), newline="") as fh:
        at = list(csv.reader(fh))
    assert tuple(at[0]) == harness.COLUMNS[1:]
    for n, row in enumerate(agg):
        mean = np.mean([rows[n][3], rows[4 + n][3]])
        assert abs(row[2] - mean) <= 1e-12 * max(1.0, mean)
        assert float(at[n + 1][2]) == row[2]
    assert agg[0][2] == pytest.approx(1.0)
    assert agg[-1][2] < agg[0][2]
    rows2, _ = harness.run_experiment(small_cfg, tmp_path / "again.csv")
    assert rows2 == rows


def test_parallel_trials_match_serial(small_cfg):
    serial = harness.run_trials(small_cfg)
    parallel = harness.run_trials(small_cfg.set("run", "workers", 2))
    assert np.array_equal(np.array(serial), np.array(parallel), equal_nan=True)


@pytest.mark.parametrize("algorithm", ["local", "qdgd-lpq", "qdgd-vq"])
def test_baseline_trajectories(small_cfg, algorithm):
    # a common minimizer lets local-only training approach w* as well
    cfg = (small_cfg.set("run", "algorithm", algorithm).set("algorithm", "subcarriers_per_node", 2)
           .set("problem", "heterogeneity", 0).set("problem", "noise", 0))
    rows = harness.run_trial(cfg, 0)
    assert [r[1] for r in rows] == [0, 20, 40, 60]
    assert rows[-1][3] < rows[0][3]
    setup = harness.setup_trial(cfg, 0)
    if algorithm.startswith("qdgd"):
        assert setup.frame_time == pytest.approx(5 * (2 / 14) * 18 / 5e6)
    assert rows[1][2] == pytest.approx(20 * setup.frame_time)


def test_classification_run_reports_test_error():
    cfg = parse_config("[run]\ntrials = 1\niterations = 20\nstride = 10\n[network]\nnodes = 4\n"
                       "[frame]\nsymbols = 1\nsubcarriers = 1024\ncyclic_prefix = 72\n"
                       "[radio]\nnoise = 0.1\n[problem]\nkind = classification\n"
                       "samples_per_class = 5\ntest_per_class = 3\n")
    rows = harness.run_trial(cfg, 0)
    assert all(0.0 <= r[5] <= 1.0 for r in rows)
    assert rows[-1][4] < rows[0][4]


def test_bound_table(small_cfg):
    cfg = small_cfg.set("problem", "heterogeneity", 0).set("problem", "noise", 0)
    c, kbar, rows = harness.bound_table(cfg)
    assert c.sigma2 == 0.0 and c.sigma1 > 0
    assert rows and all(r[0] >= kbar for r in rows)
    assert all(math.isclose(r[4], r[1] + r[2] + r[3]) for r in rows)
