"""Batched simulation of many independent frames at fixed node states.

Used to check the statistics of the disagreement estimator (mean, variance,
static-channel bias) without running the optimizer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ncota import phy
from ncota.codec import Codebook, encode_cp


@dataclass
class FrameBatch:
    dtilde: np.ndarray  # (F, N, d)
    energy: np.ndarray  # (F, N, M)
    chi: np.ndarray  # (F, N) transmit decisions


def _rayleigh(rng, gains, F, Q):
    N = gains.shape[0]
    scale = np.sqrt(gains / 2.0)[None, :, :, None]
    h = scale * (rng.standard_normal((F, N, N, Q)) + 1j * rng.standard_normal((F, N, N, Q)))
    h[:, np.arange(N), np.arange(N), :] = 0.0
    return h


def simulate_frames(W, codebook: Codebook, plan: phy.FramePlan, n_frames: int,
                    rng: np.random.Generator, *, p_tx: float, E: float = 1.0,
                    N0: float = 0.0, phi: float = 0.0, gains=None, h_static=None,
                    shifts: bool = True, chi=None, n0_assumed: float | None = None,
                    chunk: int = 4096) -> FrameBatch:
    """Run ``n_frames`` independent frames with states ``W`` held fixed.

    The channel is either i.i.d. Rayleigh with average ``gains`` (fresh every
    frame) or the fixed response ``h_static`` of shape (N, N, Q). ``chi``
    forces the decisions (shape (N,)); otherwise they are Bernoulli(p_tx).
    ``n0_assumed`` is the noise level the receiver subtracts; it defaults to
    ``N0`` and exists for fault injection.
    """
    W = np.asarray(W, dtype=float)
    N, d = W.shape
    M, Q = plan.M, plan.Q
    if (gains is None) == (h_static is None):
        raise ValueError("give exactly one of gains or h_static")
    n0_rx = N0 if n0_assumed is None else n0_assumed
    P = encode_cp(W, phi, codebook, clip_phi=True)
    out_d = np.empty((n_frames, N, d))
    out_r = np.empty((n_frames, N, M))
    out_c = np.empty((n_frames, N), dtype=bool)
    done = 0
    while done < n_frames:
        F = min(chunk, n_frames - done)
        if chi is None:
            c = rng.random((F, N)) < p_tx
        else:
            c = np.broadcast_to(np.asarray(chi, dtype=bool), (F, N)).copy()
        if shifts:
            shift = rng.integers(0, M, size=F)
            phases = rng.uniform(0.0, 2.0 * np.pi, size=(F, N, Q))
        else:
            shift = np.zeros(F, dtype=int)
            phases = None
        x = phy.tx_signals(np.tile(P, (F, 1)), E, plan, np.repeat(shift, N),
                           None if phases is None else phases.reshape(F * N, Q))
        x = x.reshape(F, N, Q) * c[..., None]
        h = _rayleigh(rng, np.asarray(gains, dtype=float), F, Q) if h_static is None \
            else np.broadcast_to(np.asarray(h_static), (F, N, N, Q))
        y = phy.rx_signals(x, h, N0, rng)
        r = phy.energy_estimates(y.reshape(F * N, Q), c.reshape(-1), plan,
                                 np.repeat(shift, N), p_tx, E, n0_rx).reshape(F, N, M)
        dt = phy.disagreement(r.reshape(F * N, M), codebook, np.tile(W, (F, 1)))
        out_d[done:done + F] = dt.reshape(F, N, d) * (~c)[..., None]
        out_r[done:done + F] = r
        out_c[done:done + F] = c
        done += F
    return FrameBatch(out_d, out_r, out_c)
