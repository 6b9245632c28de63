"""Local objectives, data deployment and minibatch gradients.

Two problem families are provided: regularized softmax cross-entropy over
unit-norm features (class 0 has its weight block pinned to zero), and
synthetic least squares with a controlled spectrum.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp, softmax

N_CLASSES = 10
FEATURE_DIM = 50


# ---------------------------------------------------------------------------
# cross-entropy


def _blocks(w, n_classes, dim):
    w = np.asarray(w, dtype=float)
    return w.reshape(w.shape[:-1] + (n_classes - 1, dim))


def _logits(f, W_blocks):
    # class 0 has an implicit zero block
    z = np.einsum("...cf,...f->...c", W_blocks, f)
    zeros = np.zeros(z.shape[:-1] + (1,))
    return np.concatenate([zeros, z], axis=-1)


def ce_loss(c: int, f, w, mu: float, n_classes: int = N_CLASSES) -> float:
    f = np.asarray(f, dtype=float)
    if not 0 <= c < n_classes:
        raise ValueError(f"label {c} outside [0, {n_classes})")
    w = np.asarray(w, dtype=float)
    z = _logits(f, _blocks(w, n_classes, f.shape[-1]))
    return float(0.5 * mu * w @ w - (z[c] - logsumexp(z)))


def ce_gradient(c: int, f, w, mu: float, n_classes: int = N_CLASSES) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if not 0 <= c < n_classes:
        raise ValueError(f"label {c} outside [0, {n_classes})")
    w = np.asarray(w, dtype=float)
    z = _logits(f, _blocks(w, n_classes, f.shape[-1]))
    s = softmax(z)
    s[c] -= 1.0
    return np.outer(s[1:], f).ravel() + mu * w


@dataclass(frozen=True)
class LabeledDataset:
    features: np.ndarray  # (S, F), unit rows
    labels: np.ndarray  # (S,)

    def __post_init__(self):
        f = np.asarray(self.features, dtype=float)
        if f.ndim != 2:
            raise ValueError("features must be a 2-D array")
        if len(self.labels) != f.shape[0]:
            raise ValueError("features and labels differ in length")
        norms = np.linalg.norm(f, axis=1)
        if np.any(norms == 0):
            raise ValueError("zero feature vector cannot be normalized")
        object.__setattr__(self, "features", f / norms[:, None])
        object.__setattr__(self, "labels", np.asarray(self.labels, dtype=int))

    def __len__(self):
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]


def synthetic_classification(n_per_class: int, rng: np.random.Generator,
                             n_classes: int = N_CLASSES, dim: int = FEATURE_DIM,
                             spread: float = 0.6) -> LabeledDataset:
    """Gaussian clusters around random unit-sphere class means, projected to the sphere."""
    means = rng.standard_normal((n_classes, dim))
    means /= np.linalg.norm(means, axis=1, keepdims=True)
    labels = np.repeat(np.arange(n_classes), n_per_class)
    noise = rng.standard_normal((labels.size, dim)) * (spread / np.sqrt(dim))
    return LabeledDataset(features=means[labels] + noise, labels=labels)


def load_feature_file(path, dim: int = FEATURE_DIM) -> LabeledDataset:
    """Read ``label, f_1, ..., f_dim`` records (UTF-8, comma separated)."""
    labels, rows = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(",")
            if len(parts) != dim + 1:
                raise ValueError(f"{path}:{lineno}: expected {dim + 1} fields, got {len(parts)}")
            labels.append(int(parts[0]))
            rows.append([float(v) for v in parts[1:]])
    return LabeledDataset(features=np.array(rows), labels=np.array(labels))


def save_feature_file(dataset: LabeledDataset, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for c, f in zip(dataset.labels, dataset.features):
            fh.write(",".join([str(int(c))] + [repr(float(v)) for v in f]) + "\n")


def deploy_labels(N: int, mode: str, rng: np.random.Generator, deployment=None,
                  n_classes: int = N_CLASSES) -> np.ndarray:
    """One class label per node.

    ``iid``: a balanced label multiset (``N // n_classes`` each, the first
    ``N % n_classes`` classes get one extra) randomly permuted over nodes.
    ``spatial``: nodes sorted by polar angle and cut into ``n_classes``
    consecutive groups of near-equal size; group ``s`` gets class ``s``.
    """
    if N < 1:
        raise ValueError("need at least one node")
    if mode == "iid":
        counts = np.full(n_classes, N // n_classes)
        counts[: N % n_classes] += 1
        return rng.permutation(np.repeat(np.arange(n_classes), counts))
    if mode == "spatial":
        if deployment is None:
            raise ValueError("spatial label deployment needs node positions")
        ang = np.arctan2(deployment.nodes[:, 1], deployment.nodes[:, 0])
        order = np.argsort(ang, kind="stable")
        labels = np.empty(N, dtype=int)
        for s, grp in enumerate(np.array_split(order, n_classes)):
            labels[grp] = s
        return labels
    raise ValueError(f"unknown label deployment mode {mode!r}")


def distribute_samples(dataset: LabeledDataset, node_labels, rng: np.random.Generator) -> list:
    """Split each class's samples evenly over the nodes holding that class."""
    node_labels = np.asarray(node_labels)
    out = [None] * node_labels.size
    for c in np.unique(node_labels):
        owners = np.flatnonzero(node_labels == c)
        pool = rng.permutation(np.flatnonzero(dataset.labels == c))
        if pool.size < owners.size:
            raise ValueError(f"class {c} has {pool.size} samples for {owners.size} nodes")
        for node, chunk in zip(owners, np.array_split(pool, owners.size)):
            out[node] = np.sort(chunk)
    return out


def minibatch_size(T: float, T_gr: float, D: int) -> int:
    if not (T > 0 and T_gr > 0):
        raise ValueError("durations must be positive")
    per_frame = math.floor(T / T_gr * (1 + 1e-12))
    return max(1, min(per_frame, int(D)))


def sigma2_bound(D: int, B: int, grad_star: float, L: float, dm: float) -> float:
    if D < 2:
        raise ValueError(f"local dataset size must be >= 2, got {D}")
    if not 1 <= B <= D:
        raise ValueError(f"minibatch size {B} outside [1, {D}]")
    return (D - B) / (B * (D - 1)) * (grad_star + L * dm) ** 2


def _sample_without_replacement(rng, n_nodes, D, B):
    if B == D:
        return np.broadcast_to(np.arange(D), (n_nodes, D))
    keys = rng.random((n_nodes, D))
    return np.argpartition(keys, B - 1, axis=1)[:, :B]


class Problem:
    """Finite-sum local objectives ``f_i(w) = mean_s phi(xi_s; w)`` over node samples.

    Subclasses provide per-sample residual terms; all nodes hold ``D`` samples.
    """

    mu: float
    L: float
    N: int
    d: int
    D: int

    def grads(self, W) -> np.ndarray:
        raise NotImplementedError

    def values(self, W) -> np.ndarray:
        raise NotImplementedError

    def sample_grads(self, W, idx) -> np.ndarray:
        """Average gradient over local samples ``idx[i]`` (shape (N, B)) at ``W[i]``."""
        raise NotImplementedError

    def stochastic_grads(self, W, B: int, rng) -> np.ndarray:
        if not 1 <= B <= self.D:
            raise ValueError(f"minibatch size {B} outside [1, {self.D}]")
        if B == self.D:
            return self.grads(W)
        return self.sample_grads(W, _sample_without_replacement(rng, self.N, self.D, B))

    def minibatch_gradient(self, i: int, w, B: int, rng) -> np.ndarray:
        if not 1 <= B <= self.D:
            raise ValueError(f"minibatch size {B} outside [1, {self.D}]")
        W = np.zeros((self.N, self.d))
        W[i] = w
        if B == self.D:
            return self.grads(W)[i]
        idx = np.zeros((self.N, B), dtype=int)
        idx[i] = rng.choice(self.D, size=B, replace=False)
        return self.sample_grads(W, idx)[i]

    def global_value(self, w) -> float:
        w = np.asarray(w, dtype=float)
        return float(np.mean(self.values(np.broadcast_to(w, (self.N, self.d)))))

    def global_grad(self, w) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        return self.grads(np.broadcast_to(w, (self.N, self.d))).mean(axis=0)


class CrossEntropyProblem(Problem):
    """Regularized softmax cross-entropy; every node holds ``D`` samples."""

    def __init__(self, dataset: LabeledDataset, node_samples, mu: float = 1e-3,
                 n_classes: int = N_CLASSES):
        sizes = {len(s) for s in node_samples}
        if len(sizes) != 1 or 0 in sizes:
            raise ValueError(f"nodes must hold equal, nonempty local datasets; sizes {sizes}")
        self.dataset = dataset
        self.node_samples = np.array([np.asarray(s) for s in node_samples])
        self.features = dataset.features[self.node_samples]  # (N, D, F)
        self.labels = dataset.labels[self.node_samples]  # (N, D)
        self.n_classes = n_classes
        self.N, self.D, self.F = self.features.shape
        self.d = (n_classes - 1) * self.F
        self.mu = float(mu)
        self.L = self.mu + 2.0

    def _per_sample(self, W, feats, labels):
        Wb = _blocks(W, self.n_classes, self.F)  # (N, C-1, F)
        z = np.einsum("ncf,nsf->nsc", Wb, feats)
        z = np.concatenate([np.zeros(z.shape[:-1] + (1,)), z], axis=-1)
        return z

    def values(self, W):
        W = np.asarray(W, dtype=float)
        z = self._per_sample(W, self.features, self.labels)
        picked = np.take_along_axis(z, self.labels[..., None], axis=-1)[..., 0]
        nll = logsumexp(z, axis=-1) - picked
        return nll.mean(axis=1) + 0.5 * self.mu * np.sum(W * W, axis=1)

    def _grads_on(self, W, feats, labels):
        W = np.asarray(W, dtype=float)
        z = self._per_sample(W, feats, labels)
        s = softmax(z, axis=-1)
        np.put_along_axis(s, labels[..., None],
                          np.take_along_axis(s, labels[..., None], axis=-1) - 1.0, axis=-1)
        g = np.einsum("nsc,nsf->ncf", s[..., 1:], feats) / feats.shape[1]
        return g.reshape(self.N, self.d) + self.mu * W

    def grads(self, W):
        return self._grads_on(W, self.features, self.labels)

    def sample_grads(self, W, idx):
        idx = np.asarray(idx)
        feats = np.take_along_axis(self.features, idx[..., None], axis=1)
        labels = np.take_along_axis(self.labels, idx, axis=1)
        return self._grads_on(W, feats, labels)

    def per_sample_grad_norms(self, w) -> np.ndarray:
        """||grad phi(xi; w)|| for every local sample, shape (N, D)."""
        w = np.asarray(w, dtype=float)
        out = np.empty((self.N, self.D))
        for s in range(self.D):
            idx = np.full((self.N, 1), s)
            out[:, s] = np.linalg.norm(
                self.sample_grads(np.broadcast_to(w, (self.N, self.d)), idx), axis=1)
        return out

    def predict(self, w, features) -> np.ndarray:
        z = _logits(np.asarray(features), _blocks(w, self.n_classes, self.F))
        return np.argmax(z, axis=-1)  # first maximum: lowest class wins ties


class LinearRegressionProblem(Problem):
    """``f_i(w) = 1/2 ||y_i - A_i w||^2``; rows of ``A_i`` are the local samples.

    The stochastic gradient over a minibatch of rows is rescaled by ``D / B``
    so that it stays unbiased for the full sum.
    """

    def __init__(self, A, y, mu: float | None = None, L: float | None = None):
        self.A = np.asarray(A, dtype=float)  # (N, D, d)
        self.y = np.asarray(y, dtype=float)  # (N, D)
        if self.A.ndim != 3 or self.y.shape != self.A.shape[:2]:
            raise ValueError(f"shape mismatch: A {self.A.shape}, y {self.y.shape}")
        self.N, self.D, self.d = self.A.shape
        if mu is None or L is None:
            eig = np.linalg.eigvalsh(np.einsum("nsa,nsb->nab", self.A, self.A))
            mu = float(eig[:, 0].min()) if mu is None else mu
            L = float(eig[:, -1].max()) if L is None else L
        self.mu, self.L = float(mu), float(L)

    def values(self, W):
        res = self.y - np.einsum("nsd,nd->ns", self.A, np.asarray(W, dtype=float))
        return 0.5 * np.sum(res * res, axis=1)

    def grads(self, W):
        res = np.einsum("nsd,nd->ns", self.A, np.asarray(W, dtype=float)) - self.y
        return np.einsum("nsd,ns->nd", self.A, res)

    def sample_grads(self, W, idx):
        idx = np.asarray(idx)
        A = np.take_along_axis(self.A, idx[..., None], axis=1)
        y = np.take_along_axis(self.y, idx, axis=1)
        res = np.einsum("nsd,nd->ns", A, np.asarray(W, dtype=float)) - y
        return np.einsum("nsd,ns->nd", A, res) * (self.D / idx.shape[1])

    def solve(self) -> np.ndarray:
        H = np.einsum("nsa,nsb->ab", self.A, self.A)
        b = np.einsum("nsa,ns->a", self.A, self.y)
        return np.linalg.solve(H, b)


def linreg_objective(A, y, w):
    """Value and gradient of ``1/2 ||y - A w||^2``."""
    A = np.asarray(A, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.asarray(w, dtype=float)
    if A.shape != (y.shape[0], w.shape[0]):
        raise ValueError(f"shape mismatch: A {A.shape}, y {y.shape}, w {w.shape}")
    res = y - A @ w
    return 0.5 * float(res @ res), A.T @ (A @ w - y)


def synthetic_linreg(N: int, d: int, rng: np.random.Generator, mu: float = 1.0,
                     L: float = 4.0, heterogeneity: float = 1.0,
                     noise: float = 0.1) -> LinearRegressionProblem:
    """Square ``A_i`` whose Gram spectra span exactly ``[mu, L]``.

    Node targets ``y_i = A_i (w0 + u_i) + n_i`` differ through ``u_i`` so the
    local minimizers disagree and the gradient divergence at the optimum is
    nonzero.
    """
    if d < 2 and mu != L:
        raise ValueError("d=1 cannot carry both spectrum endpoints; set mu == L")
    A = np.empty((N, d, d))
    spectrum = np.linspace(mu, L, d)
    for i in range(N):
        U, _ = np.linalg.qr(rng.standard_normal((d, d)))
        V, _ = np.linalg.qr(rng.standard_normal((d, d)))
        A[i] = U @ np.diag(np.sqrt(rng.permutation(spectrum))) @ V.T
    w0 = rng.standard_normal(d)
    u = heterogeneity * rng.standard_normal((N, d))
    y = np.einsum("nab,nb->na", A, w0 + u) + noise * rng.standard_normal((N, d))
    return LinearRegressionProblem(A, y, mu=mu, L=L)


def compute_radius(problem: Problem, mu: float | None = None) -> float:
    mu = problem.mu if mu is None else mu
    r = float(np.linalg.norm(problem.global_grad(np.zeros(problem.d))) / mu)
    if r == 0.0:
        warnings.warn("grad F(0) = 0: the optimum is the origin and the domain radius is 0",
                      RuntimeWarning, stacklevel=2)
    return r
