"""Deployments, fading channel realizations and the average-gain Laplacian.

Channel arrays are indexed ``h[i, j, q]`` = gain from transmitter ``j`` to
receiver ``i`` on resource unit ``q``. Self-links ``h[i, i]`` are zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ncota.phy import FramePlan, frame_duration, set_sums

SPEED_OF_LIGHT = 299792458.0
N_REFLECTORS = 3

KINDS = ("iid-rayleigh", "block-fading", "static", "reflector-multipath")
SCHEDULES = ("iid", "block", "static")


class DisconnectedGraphError(ValueError):
    """The average-gain graph has (numerically) zero algebraic connectivity."""


@dataclass(frozen=True)
class Deployment:
    nodes: np.ndarray  # (N, 2) metres
    reflectors: np.ndarray  # (3, 2) metres
    radius: float

    @property
    def N(self) -> int:
        return self.nodes.shape[0]

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"# radius_m={float(self.radius)!r}\n")
            fh.write("index,x,y\n")
            for i, (x, y) in enumerate(self.nodes):
                fh.write(f"{i},{float(x)!r},{float(y)!r}\n")
            for p, (x, y) in enumerate(self.reflectors):
                fh.write(f"R{p},{float(x)!r},{float(y)!r}\n")

    @classmethod
    def load(cls, path) -> "Deployment":
        radius, nodes, refl = None, [], []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.strip()
                if not line:
                    continue
                if line.startswith("#"):
                    if "radius_m=" in line:
                        radius = float(line.split("radius_m=", 1)[1])
                    continue
                if line.startswith("index"):
                    continue
                parts = line.split(",")
                if len(parts) != 3:
                    raise ValueError(f"{path}:{lineno}: expected 'index,x,y', got {line!r}")
                xy = (float(parts[1]), float(parts[2]))
                (refl if parts[0].startswith("R") else nodes).append(xy)
        nodes = np.array(nodes, dtype=float).reshape(-1, 2)
        refl = np.array(refl, dtype=float).reshape(-1, 2)
        if radius is None:
            radius = float(np.max(np.linalg.norm(nodes, axis=1)))
        return cls(nodes=nodes, reflectors=refl, radius=radius)


def _uniform_disc(rng, n, radius):
    rho = radius * np.sqrt(rng.uniform(size=n))
    ang = rng.uniform(0.0, 2.0 * np.pi, size=n)
    return np.column_stack([rho * np.cos(ang), rho * np.sin(ang)])


def deploy_uniform_disc(N: int, radius: float, rng: np.random.Generator) -> Deployment:
    if N < 2:
        raise ValueError(f"need at least 2 nodes, got {N}")
    nodes = _uniform_disc(rng, N, radius)
    reflectors = _uniform_disc(rng, N_REFLECTORS, radius)
    return Deployment(nodes=nodes, reflectors=reflectors, radius=float(radius))


def friis_gain(distance, f_c: float):
    distance = np.asarray(distance, dtype=float)
    if np.any(distance <= 0):
        raise ValueError("distance must be positive")
    g = (SPEED_OF_LIGHT / (4.0 * np.pi * f_c * distance)) ** 2
    return float(g) if g.ndim == 0 else g


def path_distances(deployment: Deployment) -> np.ndarray:
    """(N, N, 1 + n_reflectors) path lengths: direct, then single-bounce paths."""
    pos = deployment.nodes
    direct = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=-1)
    to_refl = np.linalg.norm(pos[:, None, :] - deployment.reflectors[None, :, :], axis=-1)
    bounce = to_refl[:, None, :] + to_refl[None, :, :]
    return np.concatenate([direct[..., None], bounce], axis=-1)


def reflector_channel(deployment: Deployment, i: int, j: int, draws, plan: FramePlan,
                      W_tot: float, f_c: float, alphas=None) -> np.ndarray:
    """Frequency response of pair (i, j) on the ``Q`` resource units of a frame.

    ``draws`` holds the fading coefficient of each path, LOS first. ``alphas``
    overrides the Friis path gains (e.g. to switch paths off).
    """
    if i == j:
        raise ValueError("no channel from a node to itself")
    pos = deployment.nodes
    d = [np.linalg.norm(pos[i] - pos[j])]
    for refl in deployment.reflectors:
        d.append(np.linalg.norm(pos[j] - refl) + np.linalg.norm(refl - pos[i]))
    d = np.asarray(d)
    alpha = friis_gain(d, f_c) if alphas is None else np.asarray(alphas, dtype=float)
    tau = d / SPEED_OF_LIGHT
    draws = np.asarray(draws, dtype=complex)
    return _multipath_response(np.sqrt(alpha) * draws, tau, plan, W_tot)


def _multipath_response(amp, tau, plan: FramePlan, W_tot: float):
    """sum_p amp[..., p] exp(-j 2 pi tau[..., p] W_tot s / SC), tiled over symbols."""
    s = np.arange(plan.SC)
    phase = np.exp(-2j * np.pi * (tau[..., None] * (W_tot / plan.SC)) * s)
    per_sc = np.sum(amp[..., None] * phase, axis=-2)
    return np.tile(per_sc, (1,) * (per_sc.ndim - 1) + (plan.O,))


@dataclass(frozen=True)
class ChannelSpec:
    """Channel model.

    ``model`` is ``"rayleigh"`` (per-unit i.i.d. CN(0, gains[i, j])) or
    ``"reflector"`` (LOS plus three single-bounce paths over ``deployment``).
    ``fading`` sets the redraw schedule: every frame, every coherence interval,
    or once.
    """

    model: str = "rayleigh"
    fading: str = "iid"
    gains: np.ndarray | None = None
    deployment: Deployment | None = None
    f_c: float = 3e9
    W_tot: float = 5e6
    coherence_time: float = 2e-3

    def __post_init__(self):
        if self.model not in ("rayleigh", "reflector"):
            raise ValueError(f"unsupported channel model {self.model!r}")
        if self.fading not in SCHEDULES:
            raise ValueError(f"unsupported fading schedule {self.fading!r}")
        if self.model == "rayleigh":
            if self.gains is None:
                raise ValueError("rayleigh model needs a gains matrix")
            g = np.asarray(self.gains, dtype=float)
            if g.ndim != 2 or g.shape[0] != g.shape[1]:
                raise ValueError("gains must be a square matrix")
            if not np.allclose(g, g.T, rtol=1e-12, atol=0):
                raise ValueError("average gains must be reciprocal (symmetric)")
            g = 0.5 * (g + g.T)
            np.fill_diagonal(g, 0.0)
            object.__setattr__(self, "gains", g)
        elif self.deployment is None:
            raise ValueError("reflector model needs a deployment")

    @classmethod
    def from_kind(cls, kind: str, **kw) -> "ChannelSpec":
        """Build from one of the named scenarios in ``KINDS``.

        ``reflector-multipath`` takes its schedule from the ``fading`` keyword.
        """
        if kind == "iid-rayleigh":
            return cls(model="rayleigh", fading="iid", **kw)
        if kind == "block-fading":
            return cls(model=kw.pop("model", "rayleigh"), fading="block", **kw)
        if kind == "static":
            return cls(model=kw.pop("model", "rayleigh"), fading="static", **kw)
        if kind == "reflector-multipath":
            return cls(model="reflector", **kw)
        raise ValueError(f"unsupported channel kind {kind!r}; expected one of {KINDS}")

    @property
    def N(self) -> int:
        return self.gains.shape[0] if self.model == "rayleigh" else self.deployment.N


def realization_index(spec: ChannelSpec, k: int, plan: FramePlan,
                      frame_time: float | None = None) -> int:
    """Index of the fading draw in force during frame ``k``.

    ``frame_time`` overrides the frame duration implied by ``plan``.
    """
    if spec.fading == "iid":
        return int(k)
    if spec.fading == "static":
        return 0
    T = frame_duration(plan, spec.W_tot) if frame_time is None else frame_time
    # guard against k*T/coh landing a hair below an integer
    return int(np.floor(k * T / spec.coherence_time * (1 + 1e-12)))


class ChannelRealization:
    """Per-frame channel state for all ordered pairs.

    Rayleigh realizations hold a dense (N, N, Q) array. Reflector realizations
    hold per-path amplitudes and delays and synthesize responses on demand, so
    large networks never materialize the full array.
    """

    def __init__(self, h=None, path_amp=None, path_tau=None, plan=None, W_tot=None):
        self._h = h
        self._amp = path_amp
        self._tau = path_tau
        self._plan = plan
        self._W_tot = W_tot

    @property
    def N(self) -> int:
        return (self._h if self._h is not None else self._amp).shape[0]

    def block(self, rx, tx) -> np.ndarray:
        rx = np.asarray(rx, dtype=int)
        tx = np.asarray(tx, dtype=int)
        if self._h is not None:
            return self._h[np.ix_(rx, tx)]
        amp = self._amp[np.ix_(rx, tx)]
        tau = self._tau[np.ix_(rx, tx)]
        return _multipath_response(amp, tau, self._plan, self._W_tot)

    def pair(self, i: int, j: int) -> np.ndarray:
        return self.block([i], [j])[0, 0]

    def full(self) -> np.ndarray:
        idx = np.arange(self.N)
        return self.block(idx, idx)


class LazyRayleighRealization(ChannelRealization):
    """I.i.d. Rayleigh realization whose pairs are drawn on first access.

    Drawing only the requested receiver-transmitter pairs gives the same
    distribution as a dense draw at a fraction of the cost; pairs once drawn
    keep their values.
    """

    def __init__(self, spec: ChannelSpec, plan: FramePlan, rng):
        N = spec.N
        super().__init__(h=np.zeros((N, N, plan.Q), dtype=complex))
        self._scale = np.sqrt(spec.gains / 2.0)
        self._drawn = np.eye(N, dtype=bool)
        self._rng = rng
        self._Q = plan.Q

    def block(self, rx, tx) -> np.ndarray:
        rx = np.asarray(rx, dtype=int)
        tx = np.asarray(tx, dtype=int)
        sub = np.ix_(rx, tx)
        need = ~self._drawn[sub]
        if need.any():
            ii, jj = rx[np.nonzero(need)[0]], tx[np.nonzero(need)[1]]
            g = self._rng.standard_normal(2 * ii.size * self._Q).view(complex)
            self._h[ii, jj] = g.reshape(ii.size, self._Q) * self._scale[ii, jj][:, None]
            self._drawn[ii, jj] = True
        return self._h[sub]


def _draw_rayleigh(spec: ChannelSpec, plan: FramePlan, rng) -> np.ndarray:
    N, Q = spec.N, plan.Q
    g = rng.standard_normal((N, N, Q, 2))
    h = (g[..., 0] + 1j * g[..., 1]) * np.sqrt(spec.gains[:, :, None] / 2.0)
    h[np.arange(N), np.arange(N)] = 0.0
    return h


def draw_reflector_fading(N: int, rng) -> np.ndarray:
    """(N, N, 4) reciprocal fading coefficients: unit-modulus LOS, CN(0,1) bounces."""
    phi = np.zeros((N, N, 1 + N_REFLECTORS), dtype=complex)
    iu = np.triu_indices(N, 1)
    n = len(iu[0])
    los = np.exp(1j * rng.uniform(0.0, 2.0 * np.pi, size=n))
    g = rng.standard_normal((n, N_REFLECTORS, 2))
    bounce = (g[..., 0] + 1j * g[..., 1]) / np.sqrt(2.0)
    vals = np.concatenate([los[:, None], bounce], axis=1)
    phi[iu] = vals
    phi[iu[1], iu[0]] = vals
    return phi


def reflector_geometry(spec: ChannelSpec):
    d = path_distances(spec.deployment)
    N = d.shape[0]
    eye = np.eye(N, dtype=bool)
    d_safe = np.where(eye[..., None], 1.0, d)
    alpha = friis_gain(d_safe, spec.f_c)
    alpha[eye] = 0.0
    return alpha, d / SPEED_OF_LIGHT


def draw_realization(spec: ChannelSpec, k: int, plan: FramePlan, seeds, trial: int = 0,
                     geometry=None, frame_time: float | None = None) -> ChannelRealization:
    """Channel state during frame ``k``.

    The fading draw is keyed on (trial, realization index), so block-fading and
    static channels return the same realization for every frame in a block.
    """
    idx = realization_index(spec, k, plan, frame_time)
    rng = seeds.generator(trial=trial, iteration=idx, purpose="channel")
    if spec.model == "rayleigh":
        return ChannelRealization(h=_draw_rayleigh(spec, plan, rng))
    alpha, tau = geometry if geometry is not None else reflector_geometry(spec)
    phi = draw_reflector_fading(spec.N, rng)
    return ChannelRealization(path_amp=np.sqrt(alpha) * phi, path_tau=tau, plan=plan,
                              W_tot=spec.W_tot)


class ChannelProcess:
    """Caches the current realization of a trial while frames advance.

    Fading channels draw each new realization from one sequential per-trial
    stream, so frames must be visited in increasing order; this avoids
    building a generator per frame. Static channels use the keyed draw of
    :func:`draw_realization`, matching :func:`average_gains`.
    """

    def __init__(self, spec: ChannelSpec, plan: FramePlan, seeds, trial: int = 0,
                 frame_time: float | None = None):
        self.spec, self.plan, self.seeds, self.trial = spec, plan, seeds, trial
        self.frame_time = frame_time
        self._geometry = reflector_geometry(spec) if spec.model == "reflector" else None
        self._rng = seeds.generator(trial=trial, purpose="channel-process")
        self._idx = None
        self._real = None

    def at(self, k: int) -> ChannelRealization:
        idx = realization_index(self.spec, k, self.plan, self.frame_time)
        if idx == self._idx:
            return self._real
        if self._idx is not None and idx < self._idx:
            raise ValueError(f"frames must advance: realization {idx} after {self._idx}")
        if self.spec.fading == "static":
            self._real = draw_realization(self.spec, k, self.plan, self.seeds, self.trial,
                                          geometry=self._geometry, frame_time=self.frame_time)
        elif self.spec.model == "rayleigh":
            self._real = LazyRayleighRealization(self.spec, self.plan, self._rng)
        else:
            alpha, tau = self._geometry
            phi = draw_reflector_fading(self.spec.N, self._rng)
            self._real = ChannelRealization(path_amp=np.sqrt(alpha) * phi, path_tau=tau,
                                            plan=self.plan, W_tot=self.spec.W_tot)
        self._idx = idx
        return self._real


def component_gains(h, plan: FramePlan) -> np.ndarray:
    """(..., M) sample-average gain of each partition set, from |h|^2 of shape (..., Q)."""
    p2 = np.abs(h) ** 2
    lead = p2.shape[:-1]
    sums = set_sums(p2.reshape(-1, plan.Q), plan)
    return (sums / plan.sizes).reshape(lead + (plan.M,))


@dataclass(frozen=True)
class GainLaplacian:
    gains: np.ndarray
    laplacian: np.ndarray
    eigenvalues: np.ndarray

    @property
    def rho2(self) -> float:
        return float(self.eigenvalues[1])

    @property
    def rhoN(self) -> float:
        return float(self.eigenvalues[-1])

    @property
    def lam_star(self) -> float:
        return float(np.max(self.gains.sum(axis=1)))

    @property
    def N(self) -> int:
        return self.gains.shape[0]

    @classmethod
    def from_gains(cls, gains, check_connected: bool = True) -> "GainLaplacian":
        g = np.array(gains, dtype=float)
        if g.ndim != 2 or g.shape[0] != g.shape[1] or g.shape[0] < 2:
            raise ValueError("gains must be a square matrix with N >= 2")
        if np.any(g < 0):
            raise ValueError("average gains must be nonnegative")
        g = 0.5 * (g + g.T)
        np.fill_diagonal(g, 0.0)
        lap = -g
        np.fill_diagonal(lap, g.sum(axis=1))
        eig = np.linalg.eigvalsh(lap)
        if check_connected and not eig[1] > 1e-10 * eig[-1]:
            raise DisconnectedGraphError(
                f"average-gain graph is disconnected: rho2={eig[1]:.3e}, rhoN={eig[-1]:.3e}")
        return cls(gains=g, laplacian=lap, eigenvalues=eig)

    def apply(self, W) -> np.ndarray:
        """L-hat W for stacked states W of shape (N, d), without forming L kron I."""
        return self.laplacian @ np.asarray(W)


def average_gains(spec: ChannelSpec, plan: FramePlan, budget: int = 2000, seeds=None,
                  trial: int = 0, method: str = "exact") -> np.ndarray:
    """Average channel gain matrix.

    Static channels: the deterministic per-set average of the trial's single
    realization. Rayleigh with redraws: the configured gains. Reflector channels with
    fading: ``method="exact"`` uses the expectation (sum of path gains, since
    all fading coefficients are zero-mean and independent); ``"monte-carlo"``
    averages ``budget`` independent draws.
    """
    if spec.fading == "static":
        if seeds is None:
            raise ValueError("a SeedSpec is required to realize a static channel")
        lam = _realized_gains(draw_realization(spec, 0, plan, seeds, trial), plan)
        np.fill_diagonal(lam, 0.0)
        return lam
    if spec.model == "rayleigh":
        return spec.gains.copy()
    if seeds is None and method == "monte-carlo":
        raise ValueError("a SeedSpec is required for Monte Carlo estimation")
    alpha, tau = reflector_geometry(spec)
    if method == "exact":
        lam = alpha.sum(axis=-1)
    elif method == "monte-carlo":
        rng = seeds.generator(trial=trial, purpose="gain-estimate")
        lam = np.zeros((spec.N, spec.N))
        for _ in range(budget):
            phi = draw_reflector_fading(spec.N, rng)
            real = ChannelRealization(path_amp=np.sqrt(alpha) * phi, path_tau=tau, plan=plan,
                                      W_tot=spec.W_tot)
            lam += _realized_gains(real, plan)
        lam /= budget
    else:
        raise ValueError(f"unknown estimation method {method!r}")
    np.fill_diagonal(lam, 0.0)
    return lam


def _realized_gains(real: ChannelRealization, plan: FramePlan) -> np.ndarray:
    """(1/M) sum_m (1/R_m) sum_{q in R_m} |h_q|^2 for every pair."""
    out = np.zeros((real.N, real.N))
    idx = np.arange(real.N)
    for i in idx:
        out[i] = component_gains(real.block([i], idx)[0], plan).mean(axis=-1)
    return out


def average_gain_laplacian(spec: ChannelSpec, plan: FramePlan, budget: int = 2000, seeds=None,
                           trial: int = 0, method: str = "exact") -> GainLaplacian:
    lam = average_gains(spec, plan, budget, seeds, trial, method)
    return GainLaplacian.from_gains(lam)


def channel_dispersion(spec: ChannelSpec, plan: FramePlan, budget: int = 2000, seeds=None,
                       trial: int = 0, gains=None):
    """Normalized per-unit power spread and per-set average-gain spread.

    Returns ``(theta, varpi)`` maximized over ordered pairs. I.i.d. Rayleigh
    uses the closed forms for units independent across ``q``; other models
    are estimated from ``budget`` draws (one draw for static channels).
    """
    if spec.model == "rayleigh" and spec.fading != "static":
        return 1.0, float(np.sqrt(np.mean(1.0 / plan.sizes)))
    lam = average_gains(spec, plan, budget, seeds, trial) if gains is None else np.asarray(gains)
    N = spec.N
    off = ~np.eye(N, dtype=bool)
    if np.any(lam[off] <= 0):
        raise ValueError("zero average gain between a pair of nodes")
    n_draws = 1 if spec.fading == "static" else budget
    geometry = reflector_geometry(spec) if spec.model == "reflector" else None
    acc_unit = np.zeros((N, N))
    acc_set = np.zeros((N, N))
    idx = np.arange(N)
    for b in range(n_draws):
        # static: index 0 reproduces the trial's realization
        real = draw_realization(spec, 0, plan, seeds, trial, geometry) if b == 0 and \
            spec.fading == "static" else _fresh_realization(spec, plan, seeds, trial, b, geometry)
        for i in idx:
            h = real.block([i], idx)[0]
            p2 = np.abs(h) ** 2
            acc_unit[i] += np.mean((p2 - lam[i][:, None]) ** 2, axis=-1)
            lam_hat = component_gains(h, plan)
            acc_set[i] += np.mean((lam_hat - lam[i][:, None]) ** 2, axis=-1)
    safe = np.where(off, lam, 1.0)
    theta = np.sqrt(acc_unit / n_draws) / safe
    varpi = np.sqrt(acc_set / n_draws) / safe
    return float(np.max(theta[off])), float(np.max(varpi[off]))


def _fresh_realization(spec, plan, seeds, trial, b, geometry):
    rng = seeds.generator(trial=trial, iteration=b, purpose="dispersion")
    if spec.model == "rayleigh":
        return ChannelRealization(h=_draw_rayleigh(spec, plan, rng))
    alpha, tau = geometry
    phi = draw_reflector_fading(spec.N, rng)
    return ChannelRealization(path_amp=np.sqrt(alpha) * phi, path_tau=tau, plan=plan,
                              W_tot=spec.W_tot)
