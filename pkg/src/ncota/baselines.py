"""Comparison schemes on the same channel and problem infrastructure: quantized
DGD over OFDMA with capacity-based outage (LPQ and VQ quantizers), and
local-only projected SGD."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ncota.codec import Codebook, encode_cp
from ncota.core import project


@dataclass(frozen=True)
class QuantizedPayload:
    bits: int
    value: np.ndarray


def lpq_payload_bits(d: int, b: int) -> int:
    return 64 + b * d


def vq_payload_bits(d: int, rep: int) -> int:
    return rep * math.ceil(math.log2(2 * d))


def lpq_quantize(w, b: int, rng: np.random.Generator) -> QuantizedPayload:
    """Scale by the infinity norm, then stochastically round each entry to the
    ``2**b``-level uniform grid on [-1, 1]. Unbiased."""
    if b < 1:
        raise ValueError("need at least one bit per entry")
    w = np.asarray(w, dtype=float)
    bits = lpq_payload_bits(w.size, b)
    scale = np.max(np.abs(w)) if w.size else 0.0
    if scale == 0.0:
        return QuantizedPayload(bits, np.zeros_like(w))
    step = 2.0 / (2**b - 1)
    pos = (w / scale + 1.0) / step
    level = np.floor(pos + rng.uniform(size=w.shape))
    level = np.clip(level, 0, 2**b - 1)
    return QuantizedPayload(bits, scale * (level * step - 1.0))


def vq_quantize(w, rep: int, codebook: Codebook, rng: np.random.Generator) -> QuantizedPayload:
    """Average of ``rep`` codewords drawn from the zero-free cross-polytope profile of ``w``."""
    if rep < 1:
        raise ValueError("need at least one repetition")
    w = np.asarray(w, dtype=float)
    d, r = codebook.dimension, codebook.radius
    phi = max(0.0, 1.0 - np.sum(np.abs(w)) / (np.sqrt(d) * r))
    p = encode_cp(w, phi, codebook, clip_phi=True)[: 2 * d]
    p = p / p.sum()
    draws = rng.choice(2 * d, size=rep, p=p)
    return QuantizedPayload(vq_payload_bits(d, rep), codebook.codewords[draws].mean(axis=0))


def decoded(bits: float, gains_sq, snr: float, SC: int) -> bool:
    """Capacity check: True iff the payload fits the instantaneous capacity of the
    assigned subcarriers. ``gains_sq`` holds |h|^2 on those subcarriers and
    ``snr`` is E / N0."""
    gains_sq = np.asarray(gains_sq, dtype=float)
    if gains_sq.size == 0:
        raise ValueError("empty subcarrier set")
    cap = np.sum(np.log2(1.0 + snr * (SC / gains_sq.size) * gains_sq))
    return bool(bits < cap)


def outage(bits: float, gains_sq, snr: float, SC: int) -> int:
    """1 on successful decoding, 0 on outage."""
    return int(decoded(bits, gains_sq, snr, SC))


@dataclass(frozen=True)
class OfdmaAllocation:
    """Round-robin blocks of ``SC_n`` subcarriers; ``SC // SC_n`` nodes share a symbol."""

    N: int
    SC: int
    SC_n: int

    def __post_init__(self):
        if not 1 <= self.SC_n <= self.SC or self.SC % self.SC_n:
            raise ValueError("SC_n must divide SC")

    @property
    def per_symbol(self) -> int:
        return self.SC // self.SC_n

    def subcarriers(self, j: int) -> np.ndarray:
        slot = j % self.per_symbol
        return np.arange(slot * self.SC_n, (slot + 1) * self.SC_n)

    def frame_duration(self, T_ofdm: float) -> float:
        return self.N * (self.SC_n / self.SC) * T_ofdm


def success_matrix(bits: int, realization, alloc: OfdmaAllocation, snr: float) -> np.ndarray:
    """chi[i, j] = 1 iff receiver i decodes transmitter j's payload (diagonal 0).

    ``realization`` must cover at least ``SC`` resource units; node ``j`` uses
    subcarriers ``alloc.subcarriers(j)``.
    """
    N = alloc.N
    idx = np.arange(N)
    chi = np.zeros((N, N), dtype=bool)
    for j in idx:
        sc = alloc.subcarriers(j)
        h = realization.block(idx, [j])[:, 0, :][:, sc]
        cap = np.sum(np.log2(1.0 + snr * (alloc.SC / sc.size) * np.abs(h) ** 2), axis=1)
        chi[:, j] = bits < cap
    chi[idx, idx] = False
    return chi


def qdgd_iterate(W, quantize, gamma: float, eta: float, grads, success, domain):
    """Quantized DGD step with per-link decoding outcomes.

    ``quantize(w) -> QuantizedPayload``; ``success[i, j]`` marks a decoded
    payload from j at i. A node with no decoded payload uses a zero
    disagreement and still takes its gradient step.
    """
    W = np.asarray(W, dtype=float)
    W_hat = np.stack([quantize(w).value for w in W])
    success = np.asarray(success, dtype=bool).copy()
    np.fill_diagonal(success, False)
    n_rx = success.sum(axis=1)
    dtilde = success.astype(float) @ W_hat - n_rx[:, None] * W
    dtilde = np.divide(dtilde, n_rx[:, None], out=np.zeros_like(dtilde),
                       where=n_rx[:, None] > 0)
    return project(W + gamma * dtilde - eta * np.asarray(grads), domain)


def local_only_iterate(W, eta: float, grads, domain):
    return project(np.asarray(W, dtype=float) - eta * np.asarray(grads), domain)
