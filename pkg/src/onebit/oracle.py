"""Monte-Carlo and closed-form checks of the concentration lemmas.

Each check returns an :class:`OracleReport`. Reports hold only deterministic
quantities (no timings) so their JSON is reproducible given the seed.
"""

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.linalg import null_space

from ._random import stream
from .linalg import qr_thin
from .sensing import (
    GroundTruthModel,
    MiniBatch,
    apply_adjoint,
    apply_sensing,
    column_normalize,
    sample_batch,
    sign,
)
from .solver import LAMBDA

# Monte-Carlo draws per generated block
_MC_BLOCK = 1 << 18
# largest dilation the test-scale checks will materialize
MAX_DILATION = 2000


@dataclass
class OracleReport:
    name: str
    statistic: float
    bound_or_target: float
    tolerance: float
    passed: bool
    n_samples: int = 0
    seed: int = 0
    kind: str = "bound"  # or "match": |statistic - target| <= tolerance
    parameters: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        self.statistic = float(self.statistic)
        self.bound_or_target = float(self.bound_or_target)
        self.tolerance = float(self.tolerance)
        self.passed = bool(self.passed)

    def to_dict(self):
        d = _jsonable(asdict(self))
        d["pass"] = d.pop("passed")
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return obj


def _blocks(n):
    b = 0
    for start in range(0, n, _MC_BLOCK):
        yield b, min(_MC_BLOCK, n - start)
        b += 1


def mc_lemma1_vector(w, n, seed=0):
    """Monte-Carlo mean of ``sign(<g, w>) g``; should approach ``lambda * w``.

    Passes when the l2 error is within ``3 sqrt(d / n)``.
    """
    w = np.asarray(w, dtype=float)
    if abs(np.linalg.norm(w) - 1) > 1e-10:
        raise ValueError("w must be a unit vector")
    d = w.size
    acc = np.zeros(d)
    for b, size in _blocks(n):
        G = stream(seed, "mc_lemma1_vector", b).standard_normal((size, d))
        acc += sign(G @ w) @ G
    est = acc / n
    err = float(np.linalg.norm(est - LAMBDA * w))
    tol = 3 * math.sqrt(d / n)
    report = OracleReport(
        "lemma1_vector", err, 0.0, tol, err <= tol, n, seed,
        parameters={"d": d},
    )
    return est, report


def mc_lemma1_matrix(W, n, seed=0):
    """Monte-Carlo mean of ``sign(<x e_bar^T, W>) x e_bar^T`` over ``n`` samples.

    Rescaled by ``sqrt(d2) / lambda`` it should approach ``W``. The entrywise
    tolerance is 3 CLT standard deviations: each rescaled entry averages terms
    of variance about ``d2 / lambda^2``; a ``sqrt(d1)`` factor covers the
    maximum over entries, giving ``3 sqrt(d1 d2 / n) / lambda``.
    """
    W = np.asarray(W, dtype=float)
    if np.max(np.abs(np.linalg.norm(W, axis=0) - 1)) > 1e-10:
        raise ValueError("W must be column-normalized")
    d1, d2 = W.shape
    acc = np.zeros((d1, d2))
    for b, size in _blocks(n):
        rng = stream(seed, "mc_lemma1_matrix", b)
        X = rng.standard_normal((size, d1)).T
        j = rng.integers(0, d2, size=size)
        batch = MiniBatch(np.ascontiguousarray(X), j, np.ones(size), d2)
        acc += apply_adjoint(sign(apply_sensing(W, batch)), batch)
    est = acc / n
    err = float(np.max(np.abs(np.sqrt(d2) / LAMBDA * est - W)))
    tol = 3 * math.sqrt(d1 * d2 / n) / LAMBDA
    report = OracleReport(
        "lemma1_matrix", err, 0.0, tol, err <= tol, n, seed,
        parameters={"d1": d1, "d2": d2},
    )
    return est, report


def closed_form_second_moment(alpha, d):
    """``E{g g^T |sign(<g,w>) - sign(<g,w'>)|^2}`` in the frame ``w = e_1``,
    ``w' = cos(alpha) e_1 + sin(alpha) e_2``."""
    if not 0 <= alpha <= math.pi / 2:
        raise ValueError(f"alpha must lie in [0, pi/2], got {alpha}")
    if d < 2:
        raise ValueError(f"d must be >= 2, got {d}")
    M = np.zeros((d, d))
    M[0, 0] = (4 * alpha - 2 * math.sin(2 * alpha)) / math.pi
    M[1, 1] = (4 * alpha + 2 * math.sin(2 * alpha)) / math.pi
    M[0, 1] = M[1, 0] = -4 / math.pi * math.sin(alpha) ** 2
    idx = np.arange(2, d)
    M[idx, idx] = 4 * alpha / math.pi
    return M


def _frame(w, w2):
    """Orthogonal matrix whose first columns are ``w`` and the unit part of
    ``w2`` orthogonal to ``w``."""
    u2 = w2 - (w @ w2) * w
    cols = [w]
    if np.linalg.norm(u2) > 1e-12:
        cols.append(u2 / np.linalg.norm(u2))
    basis = np.column_stack(cols)
    return np.column_stack([basis, null_space(basis.T)])


def mc_second_moment(w, w2, n, seed=0, tol=0.01):
    """Monte-Carlo ``E{g g^T |sign(<g,w>) - sign(<g,w2>)|^2}`` with checks.

    The estimate is rotated into the ``(w, w2)`` frame and compared entrywise
    with :func:`closed_form_second_moment`; the trace is compared with
    ``4 d alpha / pi`` (1% relative). Fitted constants
    ``||M||_2 / ||w - w2||`` and ``E{||g||^2 Delta^2} / (d ||w - w2||)`` are
    reported in ``details``.
    """
    w = np.asarray(w, dtype=float)
    w2 = np.asarray(w2, dtype=float)
    d = w.size
    cos = float(np.clip(w @ w2, -1.0, 1.0))
    alpha = math.acos(cos)
    if alpha > math.pi / 2 + 1e-12:
        raise ValueError("the angle between w and w2 must be at most pi/2")
    alpha = min(alpha, math.pi / 2)
    acc = np.zeros((d, d))
    if not np.array_equal(w, w2):
        for b, size in _blocks(n):
            G = stream(seed, "mc_second_moment", b).standard_normal((size, d))
            disagree = sign(G @ w) != sign(G @ w2)
            Gd = G[disagree]
            acc += 4.0 * (Gd.T @ Gd)
    est = acc / n
    Q = _frame(w, w2)
    rotated = Q.T @ est @ Q
    closed = closed_form_second_moment(alpha, d)
    max_dev = float(np.max(np.abs(rotated - closed)))
    trace = float(np.trace(est))
    trace_target = 4 * d * alpha / math.pi
    trace_ok = abs(trace - trace_target) <= 0.01 * trace_target if trace_target > 0 else trace == 0
    dist = float(np.linalg.norm(w - w2))
    details = {
        "alpha": alpha,
        "max_entry_deviation": max_dev,
        "trace": trace,
        "trace_target": trace_target,
        "trace_ok": bool(trace_ok),
    }
    if dist > 0:
        details["fitted_C1"] = float(np.linalg.norm(est, 2) / dist)
        details["fitted_C2"] = float(abs(trace) / (d * dist))
    report = OracleReport(
        "lemma2_second_moment", max_dev, 0.0, tol, bool(max_dev <= tol and trace_ok), n, seed,
        parameters={"d": d, "alpha": alpha},
        details=details,
    )
    return est, report


def fitted_c1_grid(alphas, d):
    """``||M(alpha)||_2 / ||w - w'||_2`` from the closed form on a grid."""
    out = []
    for a in alphas:
        M = closed_form_second_moment(a, d)
        out.append(float(np.linalg.norm(M, 2) / (2 * math.sin(a / 2))))
    return out


def rip_residual(W, W2, batch):
    """``||sqrt(d2)/(lam m) (A'(sign A(W)) - A'(sign A(W2))) - (W - W2)||_2``."""
    W = np.asarray(W, dtype=float)
    W2 = np.asarray(W2, dtype=float)
    if W.shape != W2.shape or W.shape != (batch.d1, batch.d2):
        raise ValueError("W, W2 and the batch dimensions must agree")
    diff = sign(apply_sensing(W, batch)) - sign(apply_sensing(W2, batch))
    est = apply_adjoint(diff, batch) * (math.sqrt(batch.d2) / (LAMBDA * batch.m))
    R = est - (W - W2)
    if not np.any(R):
        return 0.0
    return float(np.linalg.norm(R, 2))


def random_rank_k_columns_normalized(d1, d2, k, rng):
    M = rng.standard_normal((d1, k)) @ rng.standard_normal((d2, k)).T
    return column_normalize(M)[0]


def rip_decay(d1=50, d2=20, k=3, ms=(2000, 8000, 32000, 128000), n_batches=20, seed=0,
              slope=-0.5, slope_tol=0.15):
    """Log-log slope of the median RIP residual against batch size."""
    rng = stream(seed, "rip_pair")
    W = random_rank_k_columns_normalized(d1, d2, k, rng)
    W2 = random_rank_k_columns_normalized(d1, d2, k, rng)
    # batches carry no labels of their own here; any model gives the same X, j
    model = GroundTruthModel.from_matrix(W, k)
    medians = []
    for mi, m in enumerate(ms):
        res = [
            rip_residual(W, W2, sample_batch(model, m, seed=seed, batch_number=mi * n_batches + b))
            for b in range(n_batches)
        ]
        medians.append(float(np.median(res)))
    fit = float(np.polyfit(np.log(ms), np.log(medians), 1)[0])
    return OracleReport(
        "rip_decay", fit, slope, slope_tol, abs(fit - slope) <= slope_tol,
        n_samples=int(sum(ms) * n_batches), seed=seed, kind="match",
        parameters={"d1": d1, "d2": d2, "k": k, "ms": list(ms), "n_batches": n_batches},
        details={"median_residuals": medians},
    )


def dilation(W):
    """Materialized ``[[0, W], [W^T, 0]]`` (test scale only)."""
    W = np.asarray(W, dtype=float)
    d1, d2 = W.shape
    if d1 + d2 > MAX_DILATION:
        raise ValueError(f"refusing to materialize a dilation of size {d1 + d2} > {MAX_DILATION}")
    D = np.zeros((d1 + d2, d1 + d2))
    D[:d1, d1:] = W
    D[d1:, :d1] = W.T
    return D


def check_dilation_spectrum(W, tol=1e-8):
    W = np.asarray(W, dtype=float)
    D = dilation(W)
    eig = np.sort(np.linalg.eigvalsh(D))
    s = np.linalg.svd(W, compute_uv=False)
    zeros = np.zeros(D.shape[0] - 2 * s.size)
    expected = np.sort(np.concatenate([s, -s, zeros]))
    pair_err = float(np.max(np.abs(eig - expected)))
    norm_err = float(abs(np.linalg.norm(D, 2) - np.linalg.norm(W, 2)))
    stat = max(pair_err, norm_err)
    return OracleReport(
        "dilation_spectrum", stat, 0.0, tol, stat <= tol,
        parameters={"d1": W.shape[0], "d2": W.shape[1]},
        details={"pairing_error": pair_err, "norm_error": norm_err},
    )


def check_normalization_loss(model, W_tilde, k=None):
    """Checks ``||W* - normalize(W_tilde)||_2 <= 4 sqrt(k) ||W* - W_tilde||_2``.

    Both sides are spectral norms of dilations, which equal the spectral norms
    of the underlying blocks.
    """
    k = model.k if k is None else k
    W_tilde = np.asarray(W_tilde, dtype=float)
    W_t, _ = column_normalize(W_tilde)
    lhs = _norm2(model.W_star - W_t)
    rhs = 4 * math.sqrt(k) * _norm2(model.W_star - W_tilde)
    return OracleReport(
        "normalization_loss", lhs, rhs, 0.0, lhs <= rhs * (1 + 1e-12) + 1e-12,
        parameters={"d1": model.d1, "d2": model.d2, "k": k},
    )


def _norm2(A):
    return float(np.linalg.norm(A, 2)) if np.any(A) else 0.0


def matrix_with_spectrum(d1, d2, sigma, seed=0):
    """``U diag(sigma) V^T`` with Haar-random orthonormal ``U``, ``V``."""
    rng = stream(seed, "known_spectrum")
    r = len(sigma)
    U, _ = qr_thin(rng.standard_normal((d1, r)))
    V, _ = qr_thin(rng.standard_normal((d2, r)))
    return (U * np.asarray(sigma, dtype=float)) @ V.T


def _top_eigvecs(S, r):
    vals, vecs = np.linalg.eigh(S)
    order = np.argsort(-np.abs(vals), kind="stable")
    return vecs[:, order[:r]], np.abs(vals)[order]


def check_wedin_init(W, eps, trials=100, seed=0, k=None):
    """Perturb the dilation by random symmetric ``E`` with ``||E||_2 = eps``
    and compare the sine of the largest angle between top-``2k`` eigenspaces
    with ``2 eps / (s_2k - s_2k+1)``."""
    W = np.asarray(W, dtype=float)
    D = dilation(W)
    s = np.linalg.svd(W, compute_uv=False)
    if k is None:
        k = int(np.sum(s > 1e-10 * s[0]))
    r = 2 * k
    U0, mags = _top_eigvecs(D, r)
    gap = mags[r - 1] - (mags[r] if r < mags.size else 0.0)
    if eps > gap / 4 + 1e-15:
        raise ValueError(f"eps={eps} exceeds a quarter of the eigen-gap {gap}")
    bound = 2 * eps / gap
    n = D.shape[0]
    worst = 0.0
    for t in range(trials):
        if eps == 0:
            E = np.zeros_like(D)
        else:
            A = stream(seed, "wedin", t).standard_normal((n, n))
            E = A + A.T
            E *= eps / np.linalg.norm(E, 2)
        U1, _ = _top_eigvecs(D + E, r)
        sin = float(np.linalg.norm(U1 - U0 @ (U0.T @ U1), 2)) if eps else 0.0
        worst = max(worst, sin)
    return OracleReport(
        "wedin_init", worst, bound, 0.0, worst <= bound, trials, seed,
        parameters={"d1": W.shape[0], "d2": W.shape[1], "k": k, "eps": eps},
        details={"max_ratio": worst / bound if bound > 0 else 0.0, "gap": float(gap)},
    )
