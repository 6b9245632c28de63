"""Shared domain types, the sphere projection and the random-stream contract."""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ParamDomain:
    """Origin-centred ball ``{w : ||w|| <= radius}`` in ``dimension`` dimensions."""

    dimension: int
    radius: float

    def __post_init__(self):
        if int(self.dimension) < 1:
            raise ValueError(f"dimension must be >= 1, got {self.dimension}")
        if not self.radius > 0:
            raise ValueError(f"radius must be > 0, got {self.radius}")

    @property
    def diameter(self) -> float:
        return 2.0 * self.radius

    def contains(self, w, slack: float = 1e-12) -> bool:
        return bool(np.linalg.norm(w) <= self.radius * (1.0 + slack))


def project(a, domain: ParamDomain) -> np.ndarray:
    """Euclidean projection onto the ball.

    Accepts a single vector of shape ``(d,)`` or a stack ``(N, d)``; rows are
    projected independently.
    """
    a = np.asarray(a, dtype=float)
    r = domain.radius
    if a.ndim == 1:
        nrm = np.linalg.norm(a)
        return a.copy() if nrm <= r else a * (r / nrm)
    nrm = np.linalg.norm(a, axis=-1, keepdims=True)
    scale = np.where(nrm > r, r / np.where(nrm > 0, nrm, 1.0), 1.0)
    return a * scale


def stacked_norm(states, reference) -> float:
    """sqrt(sum_i ||w_i - reference||^2) over the rows of ``states``."""
    states = np.atleast_2d(np.asarray(states, dtype=float))
    reference = np.asarray(reference, dtype=float)
    if states.shape[-1] != reference.shape[-1]:
        raise ValueError(
            f"dimension mismatch: states have d={states.shape[-1]}, "
            f"reference has d={reference.shape[-1]}")
    return float(np.sqrt(np.sum((states - reference) ** 2)))


def _purpose_code(purpose) -> int:
    if isinstance(purpose, (int, np.integer)):
        return int(purpose)
    return zlib.crc32(str(purpose).encode("utf-8"))


@dataclass(frozen=True)
class SeedSpec:
    """Master seed plus deterministic substream derivation.

    Substreams are keyed on ``(trial, iteration, node, purpose)`` through
    :class:`numpy.random.SeedSequence` spawn keys, so equal keys give equal
    streams and distinct keys give independent ones. ``node=-1`` and
    ``iteration=-1`` denote "shared by all nodes" and "whole trajectory".
    """

    master: int

    def sequence(self, trial=0, iteration=-1, node=-1, purpose="") -> np.random.SeedSequence:
        key = (int(trial), int(iteration) + 1, int(node) + 1, _purpose_code(purpose))
        return np.random.SeedSequence(int(self.master) & 0xFFFFFFFFFFFFFFFF, spawn_key=key)

    def generator(self, trial=0, iteration=-1, node=-1, purpose="") -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(self.sequence(trial, iteration, node, purpose)))

    def trial_streams(self, trial: int, purposes) -> dict:
        """One sequential generator per purpose for a whole trajectory."""
        return {p: self.generator(trial=trial, purpose=p) for p in purposes}
