"""Recovery, prediction and subspace diagnostics."""

from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import rankdata

from ._random import blocked_normal
from .linalg import spectral_norm, tan_largest_principal_angle
from .sensing import sign


@dataclass
class MetricsRecord:
    t: int
    samples_seen: int
    recovery_error: float
    tan_theta: float
    hamming: float
    auc: float
    degenerate_columns: int
    elapsed_ms: float

    def to_dict(self):
        return asdict(self)


def recovery_error(W, W_star):
    """Spectral-norm gap ``||W - W*||_2``."""
    W = np.asarray(W, dtype=float)
    W_star = np.asarray(W_star, dtype=float)
    if W.shape != W_star.shape:
        raise ValueError(f"shape mismatch: {W.shape} vs {W_star.shape}")
    return spectral_norm(W - W_star, rel_tol=1e-8)


def draw_test_instances(model, n_test, seed):
    return blocked_normal(seed, "test_instances", 0, model.d1, n_test)


def hamming_prediction_error(W, model, n_test=10000, seed=0, X=None):
    """Fraction of entries where ``sign(X^T W)`` and ``sign(X^T W*)`` disagree."""
    if X is None:
        if n_test < 1:
            raise ValueError(f"n_test must be >= 1, got {n_test}")
        X = draw_test_instances(model, n_test, seed)
    truth = sign(X.T @ model.W_star)
    pred = sign(X.T @ np.asarray(W, dtype=float))
    return float(np.mean(truth != pred))


def auc_score(scores, labels):
    """Area under the ROC curve via the rank-sum statistic, ties at midrank.

    ``labels`` are +1 (positive) / -1 (negative). Returns NaN when only one
    class is present.
    """
    scores = np.asarray(scores, dtype=float)
    pos = np.asarray(labels) > 0
    n_pos = int(pos.sum())
    n_neg = pos.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return float("nan")
    ranks = rankdata(scores)
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def average_auc(W, model, n_test=10000, seed=0, X=None):
    """Macro-averaged AUC over classes, scoring class ``j`` by ``X^T W[:, j]``
    against the noise-free truth ``sign(X^T W*[:, j])``. Classes whose truth
    column holds a single label are skipped."""
    if X is None:
        if n_test < 2:
            raise ValueError(f"n_test must be >= 2, got {n_test}")
        X = draw_test_instances(model, n_test, seed)
    truth = sign(X.T @ model.W_star)
    scores = X.T @ np.asarray(W, dtype=float)
    per_class = [auc_score(scores[:, j], truth[:, j]) for j in range(truth.shape[1])]
    kept = [a for a in per_class if not np.isnan(a)]
    if not kept:
        raise ValueError("AUC undefined: every class has single-label ground truth")
    return float(np.mean(kept))


def dilated_basis(model):
    """Orthonormal eigenbasis ``[[U/sqrt2, U/sqrt2], [V/sqrt2, -V/sqrt2]]`` of
    the dilated ground truth, for eigenvalues ``+sigma`` then ``-sigma``."""
    U = model.U_star / np.sqrt(2.0)
    V = model.V_star / np.sqrt(2.0)
    return np.block([[U, U], [V, -V]])


def subspace_diagnostics(state, model):
    """``(tan theta_t, eps_t)`` for a solver iterate."""
    tan_theta = tan_largest_principal_angle(dilated_basis(model), state.U)
    return tan_theta, recovery_error(state.W, model.W_star)
