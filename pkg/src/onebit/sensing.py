"""Ground truth, the one-bit rank-one sensing operator, and batch sampling.

Class indices are 0-based throughout. The scaled one-hot vector
``sqrt(d2) * e_j`` is never formed; batches keep the class index and the
operator applies the ``sqrt(d2)`` factor analytically.
"""

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from ._random import blocked_integers, blocked_normal, blocked_uniform, stream

# instances per chunk in operator evaluation; bounds temporaries to ~8 MB
_CHUNK_ELEMS = 1 << 20


def sign(x):
    """Elementwise sign with ``sign(0) = +1``. Scalars in, Python int out."""
    if np.ndim(x) == 0:
        return 1 if x >= 0 else -1
    return np.where(np.asarray(x) >= 0, 1.0, -1.0)


def column_normalize(W, fallback=None, norm_floor=1e-12):
    """Scale every column of ``W`` to unit length.

    Columns with norm below ``norm_floor`` are taken from ``fallback`` when it
    holds a usable column there, otherwise replaced by ``e_1``.
    Returns ``(normalized, n_degenerate)``.
    """
    W = np.asarray(W, dtype=float)
    norms = np.linalg.norm(W, axis=0)
    bad = norms < norm_floor
    out = W / np.where(bad, 1.0, norms)
    if bad.any():
        for j in np.flatnonzero(bad):
            col = None
            if fallback is not None:
                col = np.asarray(fallback[:, j], dtype=float)
                nc = np.linalg.norm(col)
                col = col / nc if nc >= norm_floor else None
            if col is None:
                col = np.zeros(W.shape[0])
                col[0] = 1.0
            out[:, j] = col
    return np.ascontiguousarray(out), int(bad.sum())


@dataclass
class NoiseSpec:
    """Label noise: ``"none"``, ``"gaussian"`` (std ``xi`` added inside the
    sign) or ``"flip"`` (each label negated with probability ``p``)."""

    kind: str = "none"
    xi: float = 0.0
    p: float = 0.0

    def __post_init__(self):
        if self.kind not in ("none", "gaussian", "flip"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if not self.xi >= 0:
            raise ValueError(f"noise xi must be >= 0, got {self.xi}")
        if not 0 <= self.p <= 1:
            raise ValueError(f"noise p must lie in [0, 1], got {self.p}")

    @classmethod
    def gaussian(cls, xi):
        return cls("gaussian", xi=float(xi))

    @classmethod
    def flip(cls, p):
        return cls("flip", p=float(p))

    def to_dict(self):
        if self.kind == "gaussian":
            return {"kind": "gaussian", "xi": self.xi}
        if self.kind == "flip":
            return {"kind": "flip", "p": self.p}
        return {"kind": "none"}


@dataclass
class GroundTruthModel:
    W_star: np.ndarray
    k: int
    U_star: np.ndarray
    V_star: np.ndarray
    sigma: np.ndarray

    @property
    def d1(self):
        return self.W_star.shape[0]

    @property
    def d2(self):
        return self.W_star.shape[1]

    @classmethod
    def from_matrix(cls, W, k):
        """Wrap an already column-normalized matrix, recomputing its top-k SVD."""
        W = np.ascontiguousarray(W, dtype=float)
        if not 1 <= k <= min(W.shape):
            raise ValueError(f"k must lie in [1, {min(W.shape)}], got {k}")
        U, s, Vt = np.linalg.svd(W, full_matrices=False)
        return cls(
            W_star=W,
            k=k,
            U_star=np.ascontiguousarray(U[:, :k]),
            V_star=np.ascontiguousarray(Vt[:k].T),
            sigma=s[:k].copy(),
        )


def make_ground_truth(d1, d2, k, seed):
    """Column-normalized ``U V^T`` with iid Gaussian ``U`` (d1 x k), ``V`` (d2 x k)."""
    if d1 < 2 or d2 < 1:
        raise ValueError(f"need d1 >= 2 and d2 >= 1, got d1={d1}, d2={d2}")
    if not 1 <= k <= min(d1, d2):
        raise ValueError(f"k must lie in [1, min(d1, d2)] = [1, {min(d1, d2)}], got {k}")
    rng = stream(seed, "ground_truth")
    U = rng.standard_normal((d1, k))
    V = rng.standard_normal((d2, k))
    W = U @ V.T
    norms = np.linalg.norm(W, axis=0)
    if np.any(norms == 0):
        raise ValueError(f"seed {seed} produced a zero column in U V^T; reseed")
    return GroundTruthModel.from_matrix(W / norms, k)


@dataclass
class MiniBatch:
    """``m`` sensing samples: instances as columns of ``X`` (d1 x m), 0-based
    class indices, labels in {-1, +1}."""

    X: np.ndarray
    class_index: np.ndarray
    y: np.ndarray
    d2: int

    @property
    def m(self):
        return self.X.shape[1]

    @property
    def d1(self):
        return self.X.shape[0]


def _chunks(d1, m):
    step = max(1, _CHUNK_ELEMS // max(d1, 1))
    for start in range(0, m, step):
        yield slice(start, min(start + step, m))


def apply_sensing(W, batch):
    """``A(W)_i = sqrt(d2) * x_i^T W[:, j_i]``."""
    W = np.asarray(W, dtype=float)
    if W.shape != (batch.d1, batch.d2):
        raise ValueError(f"W has shape {W.shape}, batch expects {(batch.d1, batch.d2)}")
    out = np.empty(batch.m)
    for sl in _chunks(batch.d1, batch.m):
        cols = W[:, batch.class_index[sl]]
        out[sl] = np.einsum("ij,ij->j", batch.X[:, sl], cols)
    out *= np.sqrt(batch.d2)
    return out


def apply_adjoint(r, batch):
    """``A'(r) = sum_i r_i x_i (sqrt(d2) e_{j_i})^T`` as a dense d1 x d2 matrix."""
    r = np.asarray(r, dtype=float)
    if r.shape != (batch.m,):
        raise ValueError(f"r has length {r.shape}, batch has m={batch.m}")
    scale = np.sqrt(batch.d2)
    out = np.zeros((batch.d2, batch.d1))
    for sl in _chunks(batch.d1, batch.m):
        n = sl.stop - sl.start
        S = sparse.csr_matrix(
            (r[sl] * scale, (batch.class_index[sl], np.arange(n))), shape=(batch.d2, n)
        )
        out += S @ batch.X[:, sl].T
    return np.ascontiguousarray(out.T)


def label(model, X, class_index, noise=None, seed=0, batch_number=0):
    """Labels for explicit instances and classes under ``noise``.

    Noise draws use their own keyed streams, so injecting ``X`` and
    ``class_index`` by hand yields the same labels as :func:`sample_batch`
    would for the same draws.
    """
    noise = noise or NoiseSpec()
    X = np.ascontiguousarray(X, dtype=float)
    class_index = np.asarray(class_index, dtype=np.int64)
    if X.shape[0] != model.d1 or X.shape[1] != class_index.shape[0]:
        raise ValueError("X and class_index do not match the model")
    if class_index.size and (class_index.min() < 0 or class_index.max() >= model.d2):
        raise ValueError(f"class indices must lie in [0, {model.d2})")
    clean = MiniBatch(X, class_index, np.ones(X.shape[1]), model.d2)
    margin = apply_sensing(model.W_star, clean)
    m = X.shape[1]
    if noise.kind == "gaussian" and noise.xi > 0:
        margin = margin + noise.xi * blocked_normal(seed, "noise_gaussian", batch_number, 1, m)[0]
    y = sign(margin)
    if noise.kind == "flip" and noise.p > 0:
        flips = blocked_uniform(seed, "noise_flip", batch_number, m) < noise.p
        y[flips] = -y[flips]
    return MiniBatch(X, class_index, y, model.d2)


def sample_batch(model, m, noise=None, seed=0, batch_number=0):
    """``m`` fresh single-label samples. ``batch_number`` keys the streams."""
    if m < 1:
        raise ValueError(f"batch size m must be >= 1, got {m}")
    X = blocked_normal(seed, "instances", batch_number, model.d1, m)
    j = blocked_integers(seed, "classes", batch_number, model.d2, m)
    return label(model, X, j, noise, seed, batch_number)


def sample_full_observation(model, n_pairs, noise=None, seed=0, batch_number=0, instances=None):
    """``n_pairs`` (instance, class) pairs drawn from fully labeled instances.

    ``ceil(n_pairs / d2)`` instances are drawn (or taken from ``instances``),
    ``n_pairs`` of their ``instance x class`` pairs are chosen uniformly
    without replacement, and each pair becomes one column, ordered by
    (instance, class). Instances shared by several pairs are duplicated.
    """
    if n_pairs < 1:
        raise ValueError(f"n_pairs must be >= 1, got {n_pairs}")
    d2 = model.d2
    if instances is None:
        n_inst = -(-n_pairs // d2)
        inst = blocked_normal(seed, "full_instances", batch_number, model.d1, n_inst)
    else:
        inst = np.ascontiguousarray(instances, dtype=float)
        n_inst = inst.shape[1]
        if n_inst * d2 < n_pairs:
            raise ValueError("not enough instances for the requested number of pairs")
    total = n_inst * d2
    if n_pairs == total:
        pairs = np.arange(total)
    else:
        rng = stream(seed, "full_pairs", batch_number)
        pairs = np.sort(rng.choice(total, size=n_pairs, replace=False))
    X = inst[:, pairs // d2]
    return label(model, X, pairs % d2, noise, seed, batch_number)
