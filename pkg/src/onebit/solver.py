"""Alternating power iteration for one-bit single-label multi-label learning.

The dilation of a ``d1 x d2`` matrix ``M`` is ``[[0, M], [M^T, 0]]`` with the
feature block first. It is never formed: :func:`dilated_apply` acts on the
top ``d1`` and bottom ``d2`` rows of a block separately.
"""

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import metrics
from .linalg import RankDeficientError, qr_thin, top_subspace
from .sensing import (
    NoiseSpec,
    apply_adjoint,
    apply_sensing,
    column_normalize,
    sample_batch,
    sample_full_observation,
    sign,
)

LAMBDA = math.sqrt(2.0 / math.pi)


@dataclass(frozen=True)
class SolverConfig:
    d1: int
    d2: int
    k: int
    m: int
    T: int
    init_power_iters: int = 30
    norm_floor: float = 1e-12
    seed: int = 0
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    mode: str = "single_label"

    def __post_init__(self):
        for name in ("d1", "d2", "k", "m"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.T < 0:
            raise ValueError(f"T must be >= 0, got {self.T}")
        if 2 * self.k > self.d1 + self.d2:
            raise ValueError(f"need 2k <= d1 + d2, got k={self.k}")
        if self.mode not in ("single_label", "full_observation"):
            raise ValueError(f"unknown sampling mode {self.mode!r}")

    @property
    def lam(self):
        return LAMBDA


@dataclass
class FactoredIterate:
    U: np.ndarray  # (d1 + d2) x 2k, orthonormal
    V: np.ndarray  # (d1 + d2) x 2k
    W: np.ndarray  # d1 x d2, extracted from U, V (zero before the first step)
    t: int = 0
    degenerate_columns: int = 0


def compute_residual_matrix(W, batch, lam=LAMBDA):
    """``H = sqrt(d2) / (m lam) * A'(y - sign(A(W)))``."""
    r = batch.y - sign(apply_sensing(W, batch))
    return apply_adjoint(r, batch) * (np.sqrt(batch.d2) / (batch.m * lam))


def plug_in_matrix(batch, lam=LAMBDA):
    """``sqrt(d2) / (m lam) * A'(y)``, an unbiased estimate of ``W*``."""
    return apply_adjoint(batch.y, batch) * (np.sqrt(batch.d2) / (batch.m * lam))


def dilated_apply(M, U_in):
    """``[[0, M], [M^T, 0]] @ U_in`` without forming the dilation."""
    M = np.asarray(M, dtype=float)
    U_in = np.asarray(U_in, dtype=float)
    d1, d2 = M.shape
    if U_in.ndim != 2 or U_in.shape[0] != d1 + d2:
        raise ValueError(f"block has shape {U_in.shape}, expected ({d1 + d2}, r)")
    out = np.empty_like(U_in)
    out[:d1] = M @ U_in[d1:]
    out[d1:] = M.T @ U_in[:d1]
    return out


def extract_normalize(U, V, prev_W, norm_floor=1e-12):
    """Top-right block ``U[:d1] V[d1:]^T`` of ``U V^T``, column-normalized.

    Columns below ``norm_floor`` fall back to ``prev_W`` (then to ``e_1``).
    Returns ``(W, n_degenerate)``.
    """
    d1 = prev_W.shape[0]
    W_tilde = U[:d1] @ V[d1:].T
    return column_normalize(W_tilde, fallback=prev_W, norm_floor=norm_floor)


def init_state(first_batch, config):
    H0 = plug_in_matrix(first_batch, config.lam)
    n = config.d1 + config.d2
    U0 = top_subspace(
        lambda B: dilated_apply(H0, B), n, 2 * config.k, config.init_power_iters, config.seed
    )
    return FactoredIterate(
        U=U0,
        V=np.zeros((n, 2 * config.k)),
        W=np.zeros((config.d1, config.d2)),
        t=0,
    )


def solver_step(state, batch, config):
    """One outer iteration; the same batch and ``M = H + W`` feed both the
    ``U`` and the ``V`` update.

    ``state.W`` is the extraction of ``(state.U, state.V)`` (zero before the
    first step), so the iterate entering the residual is ``state.W``.
    """
    W_prev = state.W
    M = compute_residual_matrix(W_prev, batch, config.lam)
    M += W_prev
    try:
        U, _ = qr_thin(dilated_apply(M, state.U))
    except RankDeficientError as exc:
        raise RankDeficientError(exc.column, iteration=state.t + 1) from None
    V = dilated_apply(M, U)
    del M
    W, n_bad = extract_normalize(U, V, W_prev, config.norm_floor)
    return FactoredIterate(U=U, V=V, W=W, t=state.t + 1, degenerate_columns=n_bad)


def draw(model, config, batch_number):
    if config.mode == "full_observation":
        return sample_full_observation(model, config.m, config.noise, config.seed, batch_number)
    return sample_batch(model, config.m, config.noise, config.seed, batch_number)


def run(config, model, n_test=2000, test_seed=None, callback=None):
    """Run ``T`` steps on fresh batches ``1..T`` after initializing on batch 0.

    Returns ``(W_final, history)`` with one :class:`metrics.MetricsRecord` per
    step. Hamming loss and AUC are evaluated on ``n_test`` noise-free test
    instances (skipped, reported as NaN, when ``n_test`` is 0).
    """
    if (config.d1, config.d2) != model.W_star.shape:
        raise ValueError("config dimensions do not match the ground truth")
    if test_seed is None:
        test_seed = config.seed
    start = time.perf_counter()
    state = init_state(draw(model, config, 0), config)
    history = []
    for t in range(1, config.T + 1):
        state = solver_step(state, draw(model, config, t), config)
        tan_theta, eps = metrics.subspace_diagnostics(state, model)
        if n_test:
            ham = metrics.hamming_prediction_error(state.W, model, n_test, test_seed)
            auc = metrics.average_auc(state.W, model, n_test, test_seed)
        else:
            ham = auc = float("nan")
        rec = metrics.MetricsRecord(
            t=t,
            samples_seen=(t + 1) * config.m,
            recovery_error=eps,
            tan_theta=tan_theta,
            hamming=ham,
            auc=auc,
            degenerate_columns=state.degenerate_columns,
            elapsed_ms=(time.perf_counter() - start) * 1e3,
        )
        history.append(rec)
        if callback is not None:
            callback(state, rec)
    return state.W, history


def naive_plug_in(
    model, total_samples, noise=None, seed=0, batch_size=None, norm_floor=1e-12,
    mode="single_label",
):
    """Column-normalized plug-in estimate from ``total_samples`` labels.

    Samples are drawn as consecutive batches ``0, 1, ...`` of ``batch_size``
    (default: all at once), so with the solver's seed, mode and
    ``batch_size = m`` it sees exactly the solver's samples.
    """
    if total_samples < 1:
        raise ValueError(f"total_samples must be >= 1, got {total_samples}")
    if mode not in ("single_label", "full_observation"):
        raise ValueError(f"unknown sampling mode {mode!r}")
    sampler = sample_full_observation if mode == "full_observation" else sample_batch
    batch_size = batch_size or total_samples
    acc = np.zeros(model.W_star.shape)
    done, b = 0, 0
    while done < total_samples:
        n = min(batch_size, total_samples - done)
        batch = sampler(model, n, noise, seed, batch_number=b)
        acc += apply_adjoint(batch.y, batch)
        done += n
        b += 1
    acc *= np.sqrt(model.d2) / (LAMBDA * total_samples)
    W, _ = column_normalize(acc, norm_floor=norm_floor)
    return W


def with_seed(config, seed):
    return replace(config, seed=seed)
