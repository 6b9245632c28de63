"""Cross-polytope-phi codebook and the model-vector <-> energy-profile maps.

Codeword ordering (0-based): ``z[m] = sqrt(d) r e_m`` and
``z[d + m] = -sqrt(d) r e_m`` for ``m < d``, and ``z[2d] = 0``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_SUM_TOL = 1e-12


@dataclass(frozen=True)
class Codebook:
    codewords: np.ndarray  # (M, d)
    radius: float

    @property
    def size(self) -> int:
        return self.codewords.shape[0]

    @property
    def dimension(self) -> int:
        return self.codewords.shape[1]

    def max_pairwise_distance(self) -> float:
        z = self.codewords
        sq = np.sum(z * z, axis=1)
        d2 = sq[:, None] + sq[None, :] - 2.0 * z @ z.T
        return float(np.sqrt(max(np.max(d2), 0.0)))


def build_cp_codebook(d: int, r: float) -> Codebook:
    if int(d) != d or d < 1:
        raise ValueError(f"d must be a positive integer, got {d}")
    if not r > 0:
        raise ValueError(f"r must be positive, got {r}")
    d = int(d)
    scale = np.sqrt(d) * r
    z = np.zeros((2 * d + 1, d))
    idx = np.arange(d)
    z[idx, idx] = scale
    z[d + idx, idx] = -scale
    return Codebook(codewords=z, radius=float(r))


def max_admissible_phi(w, r: float) -> float:
    w = np.asarray(w, dtype=float)
    d = w.shape[-1]
    return 1.0 - np.sum(np.abs(w), axis=-1) / (np.sqrt(d) * r)


def _clean(p):
    p = np.maximum(p, 0.0)
    s = np.sum(p, axis=-1, keepdims=True)
    bad = np.abs(s - 1.0) > _SUM_TOL
    if np.any(bad):
        p = np.where(bad, p / s, p)
    return p


def encode_cp(w, phi: float, codebook: Codebook, clip_phi: bool = False) -> np.ndarray:
    """Energy profile of ``w`` (or of each row of a stack of vectors).

    With ``clip_phi`` the weight shift ``phi`` is reduced per vector to its
    largest admissible value instead of raising.
    """
    w = np.asarray(w, dtype=float)
    d, r = codebook.dimension, codebook.radius
    if w.shape[-1] != d:
        raise ValueError(f"expected d={d}, got {w.shape[-1]}")
    norms = np.sqrt(np.einsum("...i,...i->...", w, w))
    if np.any(norms > r * (1.0 + 1e-12)):
        raise ValueError(f"vector outside the domain: ||w||={np.max(norms)} > r={r}")
    if phi < 0:
        raise ValueError(f"phi must be >= 0, got {phi}")
    scale = np.sqrt(d) * r
    l1 = np.abs(w).sum(axis=-1, keepdims=True) / scale
    if phi > 0:
        phi_max = 1.0 - l1[..., 0]
        if clip_phi:
            phi = np.minimum(phi, np.maximum(phi_max, 0.0))
        elif np.any(phi > phi_max + 1e-12):
            raise ValueError(f"phi={phi} exceeds admissible maximum {np.min(phi_max)}")
        phi = np.asarray(phi, dtype=float)[..., None]
    pos = np.maximum(w, 0.0) / scale + phi / (2 * d)
    neg = np.maximum(-w, 0.0) / scale + phi / (2 * d)
    return _clean(np.concatenate([pos, neg, 1.0 - l1 - phi], axis=-1))


def reconstruct(p, codebook: Codebook) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.shape[-1] != codebook.size:
        raise ValueError(f"profile length {p.shape[-1]} != codebook size {codebook.size}")
    return p @ codebook.codewords
