import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ncota.theory import (Schedule, TheoryConstants, baseline_schedule, check_conditions,
                          constant_stepsize_bounds, kappa_bar, lyapunov_value, measure_noise,
                          sigma1_bound, stepsizes, theorem1_bounds, theorem1_curve,
                          theorem2_bounds)


def _consts(**kw):
    base = dict(mu=1.0, L=4.0, rho2=0.8, rhoN=3.0, lam_star=2.0, N=10, dm=6.0, grad_star=0.5,
                zeta=1.0, sigma1=2.0, sigma2=0.5, M=11, Q=16, E=1.0, N0=0.1, p_tx=0.35)
    base.update(kw)
    return TheoryConstants(**base)


def test_schedule_values():
    s = Schedule(0.4, 0.1, 0.32)
    eta, gamma = s.at(10)
    assert eta == pytest.approx(0.4 / 4.2)
    assert gamma == pytest.approx(0.1 * 4.2 ** -0.75)
    e, g = s.at(np.array([0, 10]))
    assert e[1] == pytest.approx(eta) and g[0] == 0.1
    c = Schedule(0.4, 0.1, 0.32, mode="constant")
    assert c.at(1000) == (0.4, 0.1)
    with pytest.raises(ValueError):
        stepsizes(s, -1)
    with pytest.raises(ValueError):
        Schedule(0.0, 0.1)
    with pytest.raises(ValueError):
        Schedule(0.1, 0.1, mode="bogus")


def test_baseline_schedule():
    s = baseline_schedule(1.0, 4.0, 0.5)
    assert s.eta0 == pytest.approx(0.4)
    assert s.gamma0 == pytest.approx(0.1)
    assert s.delta == pytest.approx(0.32)


def test_sigma1_worked_example():
    c = _consts(N0=0.0, theta=0.0, varpi=0.0, p_tx=0.5, M=7, Q=7, lam_star=1.3)
    md = 2.0
    assert sigma1_bound(c, md) == pytest.approx(16 * md**2 * 1.3**2, rel=1e-12)
    assert sigma1_bound(c.with_(N0=0.1), md) > sigma1_bound(c, md)
    with pytest.raises(ValueError):
        sigma1_bound(c.with_(p_tx=1.0), md)


def test_conditions():
    c = _consts()
    eta = 2.0 / (c.mu + c.L)
    c1, _, _ = check_conditions(c, Schedule(eta, 1e-300, mode="constant"), 0)
    assert c1
    thr = c.zeta * c.mu * c.rho2 / (math.sqrt(c.N) * c.grad_star * c.L)
    _, c2, _ = check_conditions(c, Schedule(0.01, 0.01 / (thr * 1.01), mode="constant"), 0)
    assert not c2
    _, c2, _ = check_conditions(c, Schedule(0.01, 0.01 / (thr * 0.99), mode="constant"), 0)
    assert c2
    s = baseline_schedule(c.mu, c.L, c.rho2)
    assert all(check_conditions(c, s, k)[2] for k in range(0, 5000, 7))


def test_kappa_bar_matches_linear_scan():
    c = _consts(grad_star=0.05)
    s = Schedule(0.4, 0.05, 0.05)
    kb = kappa_bar(c, s)
    scan = next(k for k in range(100000) if all(check_conditions(c, s, k)[:2]))
    assert kb == scan
    assert kappa_bar(c.with_(grad_star=0.1), s) > kb
    assert kappa_bar(c.with_(grad_star=0.0), Schedule(0.1, 0.1, 0.01)) == 0


def test_kappa_bar_constant_infeasible():
    with pytest.raises(ValueError):
        kappa_bar(_consts(), Schedule(1.0, 1.0, mode="constant"))


def _direct_theorem1(c, s, kbar, k):
    eta = lambda t: s.at(t)[0]
    gamma = lambda t: s.at(t)[1]
    P = lambda t: math.prod(1 - c.mu * eta(j) for j in range(t + 1, k))
    b1 = math.sqrt(sum(P(t) ** 2 * (gamma(t) ** 2 * c.sigma1 + eta(t) ** 2 * c.sigma2)
                       for t in range(kbar, k)))
    scale = c.grad_star * c.L / (c.mu * c.rho2)
    r = lambda t: eta(t) / gamma(t)
    b2 = c.dm * P(kbar - 1) + scale * sum(
        P(t) * (1 + c.L**2 / (c.mu * c.rho2) * r(t)) * (r(t) - r(t + 1)) for t in range(kbar, k))
    return b1, b2, scale * r(k)


@pytest.mark.parametrize("k", [3, 4, 10, 40])
def test_theorem1_against_direct_products(k):
    c = _consts(grad_star=0.2)
    s = Schedule(0.2, 0.1, 0.1)
    kbar = 3
    got = theorem1_bounds(c, s, kbar, k, check=False)
    assert np.allclose(got, _direct_theorem1(c, s, kbar, k), rtol=1e-12, atol=1e-14)


def test_theorem1_at_kbar():
    c = _consts()
    s = Schedule(0.2, 0.1, 0.1)
    b1, b2, _ = theorem1_bounds(c, s, 5, 5, check=False)
    assert b1 == 0 and b2 == c.dm


def test_theorem1_noise_free_constant_ratio():
    c = _consts(sigma1=0.0, sigma2=0.0)
    s = Schedule(0.1, 0.5, mode="constant")
    b1, b2, _ = theorem1_bounds(c, s, 0, 20, check=False)
    assert b1 == 0
    assert b2 == pytest.approx(c.dm * (1 - c.mu * 0.1) ** 20, rel=1e-12)


def test_theorem1_condition_check():
    c = _consts()
    with pytest.raises(ValueError):
        theorem1_bounds(c, Schedule(1.0, 1.0, mode="constant"), 0, 3)
    with pytest.raises(ValueError):
        theorem1_bounds(c, Schedule(0.1, 0.1, mode="constant"), 5, 3)


def test_constant_stepsize_specialization():
    c = _consts(sigma2=0.0, grad_star=0.01)
    eta, gamma, K = 0.05, 0.3, 200
    b1, b2, b3 = theorem1_bounds(c, Schedule(eta, gamma, mode="constant"), 0, K)
    k1, k2, k3 = constant_stepsize_bounds(c, eta, gamma, K)
    assert abs(b2 - k2) <= 1e-12 * k2
    assert abs(b3 - k3) <= 1e-12 * k3
    geometric = math.sqrt(c.sigma1 * gamma**2 * (1 - (1 - c.mu * eta) ** (2 * K))
                          / (1 - (1 - c.mu * eta) ** 2))
    assert b1 == pytest.approx(geometric, rel=1e-12)
    assert b1 <= k1


def test_theorem2_properties():
    c = _consts()
    eta0, gamma0 = 0.4, 0.1
    delta = 0.8 * c.mu * eta0
    ks = np.array([0, 10, 100, 1000, 10000])
    B1, B2, B3 = theorem2_bounds(c, eta0, gamma0, delta, 0, ks)
    assert np.all(np.diff(B1) <= 0) and np.all(np.diff(B3) <= 0)
    k = 100
    k2 = 16 * k + 15 / delta
    assert theorem2_bounds(c, eta0, gamma0, delta, 0, k)[2] / \
        theorem2_bounds(c, eta0, gamma0, delta, 0, k2)[2] == pytest.approx(2.0, rel=1e-12)
    assert theorem2_bounds(c.with_(sigma1=0, sigma2=0), eta0, gamma0, delta, 0, 50)[0] == 0
    with pytest.raises(ValueError):
        theorem2_bounds(c, eta0, gamma0, delta * 1.01, 0, 10)
    with pytest.raises(ValueError):
        theorem2_bounds(c, eta0, gamma0, delta, 20, 10)


def test_theorem2_dominates_theorem1():
    c = _consts(grad_star=0.05)
    eta0, gamma0 = 0.4, 0.5
    delta = 0.8 * c.mu * eta0
    s = Schedule(eta0, gamma0, delta)
    kbar = kappa_bar(c, s)
    ks, B1, B2, B3 = theorem1_curve(c, s, kbar, kbar + 3000)
    T1, T2, T3 = theorem2_bounds(c, eta0, gamma0, delta, kbar, ks)
    assert np.all(B1 <= T1 * (1 + 1e-12))
    assert np.all(B2 <= T2 * (1 + 1e-12))
    assert np.all(B3 <= T3 * (1 + 1e-12))


class _Quad:
    N, d = 3, 2

    def values(self, W):
        return 0.5 * np.sum(W * W, axis=1)

    def grads(self, W):
        return np.asarray(W, dtype=float)


@given(st.integers(0, 2**31))
def test_lyapunov_pairwise_identity(seed):
    rng = np.random.default_rng(seed)
    G = np.triu(rng.uniform(0.1, 1, (3, 3)), 1)
    G = G + G.T
    L = np.diag(G.sum(1)) - G
    W = rng.standard_normal((3, 2))
    eta, gamma = 0.3, 0.7
    pair = sum(G[i, j] * np.sum((W[i] - W[j]) ** 2) for i in range(3) for j in range(i + 1, 3))
    want = np.sum(_Quad().values(W)) + gamma / (2 * eta) * pair
    assert lyapunov_value(W, L, eta, gamma, _Quad()) == pytest.approx(want, rel=1e-12)
    same = np.tile(W[0], (3, 1))
    assert lyapunov_value(same, L, eta, gamma, _Quad()) == pytest.approx(np.sum(_Quad().values(same)))


def test_measure_noise_zero_in_mean_field():
    W = np.arange(6.0).reshape(3, 2)
    L = np.array([[1.0, -1, 0], [-1, 2, -1], [0, -1, 1]])
    e1, e2 = measure_noise({"dtilde": -L @ W, "g": W}, L, _Quad(), W)
    assert np.all(e1 == 0) and np.all(e2 == 0)
