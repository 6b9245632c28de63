"""OFDM frame geometry, energy-based transmit synthesis and the energy estimator.

All signals live in the discrete-frequency baseband domain: one complex
sample per resource unit, ``Q = O * SC`` units per frame. Resource unit ``q``
(0-based) sits on OFDM symbol ``q // SC`` and subcarrier ``q % SC``. Sets and
codebook components are 0-based; the shifted set of component ``m`` is
``(m + shift) % M``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class FramePlan:
    O: int
    SC: int
    CP: int
    M: int
    set_of: np.ndarray = field(init=False, repr=False, compare=False)
    sizes: np.ndarray = field(init=False, repr=False, compare=False)
    unit_scale: np.ndarray = field(init=False, repr=False, compare=False)
    membership: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.O < 1 or self.SC < 1 or self.CP < 0 or self.M < 1:
            raise ValueError(f"invalid frame geometry {self}")
        set_of, sizes = _strided_sets(self.Q, self.M)
        object.__setattr__(self, "set_of", set_of)
        object.__setattr__(self, "sizes", sizes)
        # sqrt(Q / R_m) of the set each unit belongs to, and the (Q, M) one-hot map
        object.__setattr__(self, "unit_scale", np.sqrt(self.Q / sizes[set_of]))
        object.__setattr__(self, "membership", np.eye(self.M)[set_of])

    @property
    def Q(self) -> int:
        return self.O * self.SC

    @property
    def subcarrier_of(self) -> np.ndarray:
        return np.arange(self.Q) % self.SC

    def partition(self) -> list:
        return build_partition(self.Q, self.M)


def _strided_sets(Q, M):
    if M < 1 or Q < M:
        raise ValueError(f"need Q >= M >= 1, got Q={Q}, M={M}")
    set_of = np.arange(Q) % M
    sizes = np.bincount(set_of, minlength=M)
    return set_of, sizes


def build_partition(Q: int, M: int) -> list:
    """Strided partition of resource units ``0..Q-1`` into ``M`` sets."""
    set_of, _ = _strided_sets(Q, M)
    return [np.flatnonzero(set_of == m) for m in range(M)]


def preamble(m: int, plan: FramePlan) -> np.ndarray:
    if not 0 <= m < plan.M:
        raise IndexError(f"component {m} out of range [0, {plan.M})")
    u = np.zeros(plan.Q)
    mask = plan.set_of == m
    u[mask] = np.sqrt(plan.Q / plan.sizes[m])
    return u


def frame_duration(plan: FramePlan, W_tot: float) -> float:
    return plan.O * (plan.SC + plan.CP) / W_tot


def draw_shift(rng: np.random.Generator, M: int) -> int:
    """Common circular shift; ``rng`` must be the stream shared by all nodes."""
    return int(rng.integers(M)) if M > 1 else 0


def draw_phases(rng: np.random.Generator, n: int, Q: int) -> np.ndarray:
    return rng.uniform(0.0, 2.0 * np.pi, size=(n, Q))


def component_of_unit(plan: FramePlan, shift) -> np.ndarray:
    """Codebook component carried by each resource unit under ``shift``.

    A scalar shift gives shape (Q,); an array of shifts gives (len(shift), Q).
    """
    shift = np.asarray(shift)
    if shift.ndim == 0:
        return (plan.set_of - int(shift)) % plan.M
    return (plan.set_of[None, :] - shift[:, None]) % plan.M


def _check_shift(shift, M):
    if isinstance(shift, (int, np.integer)):
        if not 0 <= shift < M:
            raise ValueError(f"shift outside [0, {M})")
        return np.asarray(shift)
    shift = np.asarray(shift)
    if np.any(shift < 0) or np.any(shift >= M):
        raise ValueError(f"shift outside [0, {M})")
    return shift


def tx_signals(P, E: float, plan: FramePlan, shift=0, phases=None) -> np.ndarray:
    """Transmit samples for a stack of energy profiles ``P`` of shape (n, M).

    ``shift`` is the common circular shift, or one shift per row.
    """
    P = np.atleast_2d(np.asarray(P, dtype=float))
    if P.shape[1] != plan.M:
        raise ValueError(f"profile length {P.shape[1]} != M={plan.M}")
    shift = _check_shift(shift, plan.M)
    comp = component_of_unit(plan, shift)
    unit_gain = np.sqrt(E) * plan.unit_scale
    if comp.ndim == 1:
        x = unit_gain * np.sqrt(P[:, comp])
    else:
        x = unit_gain * np.sqrt(np.take_along_axis(P, comp, axis=1))
    if phases is None:
        return x.astype(complex)
    return x * np.exp(1j * np.asarray(phases))


def tx_signal(p, E: float, plan: FramePlan, shift: int = 0, phases=None) -> np.ndarray:
    if phases is not None:
        phases = np.asarray(phases)[None, :]
    return tx_signals(np.asarray(p)[None, :], E, plan, shift, phases)[0]


def complex_noise(rng: np.random.Generator, shape, N0: float) -> np.ndarray:
    if N0 == 0:
        return np.zeros(shape, dtype=complex)
    s = np.sqrt(N0 / 2.0)
    return s * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def rx_signals(x_tx, h_block, N0: float, rng: np.random.Generator | None = None) -> np.ndarray:
    """Superimpose transmitted signals through the channel and add noise.

    ``x_tx`` has shape (..., n_tx, Q) and ``h_block`` has shape
    (..., n_rx, n_tx, Q), indexed [receiver, transmitter, unit]; leading
    dimensions are independent frames. Returns (..., n_rx, Q).
    """
    x_tx = np.asarray(x_tx)
    h_block = np.asarray(h_block)
    if x_tx.shape[-2] == 0:
        y = np.zeros(h_block.shape[:-2] + h_block.shape[-1:], dtype=complex)
    else:
        y = np.einsum("...itq,...tq->...iq", h_block, x_tx)
    if N0 > 0:
        if rng is None:
            raise ValueError("a random stream is required when N0 > 0")
        y = y + complex_noise(rng, y.shape, N0)
    return y


def energy_estimates(y, chi, plan: FramePlan, shift, p_tx: float, E: float,
                     N0: float) -> np.ndarray:
    """Per-component received-energy estimates; rows of transmitting nodes are zero.

    ``y`` is (n, Q) (or (Q,)); ``shift`` is common or one per row. Negative
    values are kept: clamping would bias the estimate.
    """
    if not 0.0 < p_tx < 1.0:
        raise ValueError(f"p_tx must lie in (0, 1), got {p_tx}")
    if not E > 0:
        raise ValueError(f"E must be positive, got {E}")
    y = np.atleast_2d(y)
    shift = _check_shift(shift, plan.M)
    chi = np.broadcast_to(np.asarray(chi), (y.shape[0],))
    e = (np.abs(y) ** 2 - N0) / (p_tx * (1.0 - p_tx) * E * plan.Q)
    per_set = set_sums(e, plan)
    if shift.ndim == 0:
        r = per_set[:, (np.arange(plan.M) + int(shift)) % plan.M]
    else:
        cols = (np.arange(plan.M)[None, :] + shift[:, None]) % plan.M
        r = np.take_along_axis(per_set, cols, axis=1)
    return r * (1 - chi)[:, None]


def set_sums(e, plan: FramePlan) -> np.ndarray:
    """Sum per-unit values over each set of the strided partition, (n, Q) -> (n, M)."""
    return e @ plan.membership


def disagreement(r, codebook, w) -> np.ndarray:
    """sum_m r_m (z_m - w) for each row."""
    codewords = getattr(codebook, "codewords", codebook)
    r = np.atleast_2d(r)
    w = np.atleast_2d(w)
    return r @ codewords - r.sum(axis=1, keepdims=True) * w
