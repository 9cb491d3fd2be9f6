"""Dense linear-algebra kernels.

All matrices are 2-D float64 numpy arrays. Storage order is C (row-major);
functions that return new matrices always return C-contiguous arrays.
"""

import numpy as np

from ._random import stream


class RankDeficientError(np.linalg.LinAlgError):
    """Raised by :func:`qr_thin` when a column is numerically dependent."""

    def __init__(self, column, iteration=None):
        self.column = column
        self.iteration = iteration
        msg = f"rank-deficient input: column {column} is numerically dependent"
        if iteration is not None:
            msg += f" (iteration {iteration})"
        super().__init__(msg)


class ConvergenceError(RuntimeError):
    def __init__(self, message, estimate):
        self.estimate = estimate
        super().__init__(f"{message} (best estimate {estimate!r})")


def _check_finite(A, name="input"):
    if not np.all(np.isfinite(A)):
        raise ValueError(f"{name} contains non-finite values")


def qr_thin(A):
    """Thin QR factorization ``A = Q R`` with ``diag(R) >= 0``.

    Backed by LAPACK Householder QR. The sign of each column of ``Q`` is
    flipped so that ``R`` has a nonnegative diagonal, which makes the factors
    unique for full-rank input.

    Raises :class:`RankDeficientError` carrying the first column index whose
    ``|R_ii|`` falls below ``1e-12 * ||A||_2``.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2:
        raise ValueError("qr_thin expects a 2-D array")
    n, p = A.shape
    if n < p:
        raise ValueError(f"qr_thin needs rows >= cols, got {n}x{p}")
    _check_finite(A)
    Q, R = np.linalg.qr(A, mode="reduced")
    signs = np.where(np.diag(R) < 0, -1.0, 1.0)
    Q *= signs
    R *= signs[:, None]
    diag = np.diag(R)
    scale = np.linalg.norm(R, 2) if p else 0.0
    bad = np.flatnonzero(diag < 1e-12 * scale) if scale > 0 else np.arange(p)
    if bad.size:
        raise RankDeficientError(int(bad[0]))
    return np.ascontiguousarray(Q), np.triu(R)


def orthonormality_error(Q):
    """``max |Q^T Q - I|``."""
    Q = np.asarray(Q, dtype=float)
    return float(np.max(np.abs(Q.T @ Q - np.eye(Q.shape[1]))))


def top_subspace(op, n, r, power_iters=30, seed=0):
    """Orthonormal basis for the dominant ``r``-dimensional invariant subspace.

    ``op`` maps an ``n x r`` block to ``op @ block`` for a symmetric operator.
    Plain block power iteration with a QR after every product, started from
    a seeded Gaussian block; eigenvalues are ranked by magnitude, so a
    spectrum paired as ``+-sigma`` is handled without special casing.
    """
    if not 1 <= r <= n:
        raise ValueError(f"need 1 <= r <= n, got r={r}, n={n}")
    rng = stream(seed, "subspace_start")
    Q, _ = qr_thin(rng.standard_normal((n, r)))
    for _ in range(power_iters):
        Y = np.asarray(op(Q), dtype=float)
        if Y.shape != (n, r):
            raise ValueError(f"operator returned shape {Y.shape}, expected {(n, r)}")
        _check_finite(Y, "operator output")
        Q, _ = qr_thin(Y)
    return Q


def spectral_norm(M, rel_tol=1e-6, max_iters=500, seed=0):
    """Largest singular value of ``M``.

    Block power iteration on the Gram operator ``M^T M`` with a Rayleigh-Ritz
    readout (block size up to 4, which keeps clustered top singular values
    from stalling the estimate). Stops once successive estimates agree to
    ``rel_tol / 100``.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise ValueError("spectral_norm expects a 2-D array")
    _check_finite(M)
    if not np.any(M):
        return 0.0
    if min(M.shape) <= 4:
        return float(np.linalg.svd(M, compute_uv=False)[0])
    n = M.shape[1]
    b = min(4, n)
    rng = stream(seed, "spectral_start")
    Q, _ = np.linalg.qr(rng.standard_normal((n, b)))
    est = 0.0
    for _ in range(max_iters):
        Y = M @ Q
        new = float(np.linalg.svd(Y, compute_uv=False)[0])
        if abs(new - est) <= 1e-2 * rel_tol * new:
            return new
        est = new
        Z = M.T @ Y
        if not np.any(Z):
            return est
        Q, _ = np.linalg.qr(Z)
    raise ConvergenceError(f"spectral_norm did not converge in {max_iters} iterations", est)


def tan_largest_principal_angle(U1, U2):
    """tan of the largest principal angle between two ``n x r`` orthonormal bases.

    Returns ``inf`` when the smallest cosine drops below ``1e-12``.
    """
    U1 = np.asarray(U1, dtype=float)
    U2 = np.asarray(U2, dtype=float)
    if U1.shape != U2.shape:
        raise ValueError(f"basis shapes differ: {U1.shape} vs {U2.shape}")
    cos = np.linalg.svd(U1.T @ U2, compute_uv=False)[-1]
    if cos < 1e-12:
        return np.inf
    # sin is symmetrized: the two residual norms agree in exact arithmetic
    s12 = np.linalg.norm(U2 - U1 @ (U1.T @ U2), 2)
    s21 = np.linalg.norm(U1 - U2 @ (U2.T @ U1), 2)
    return float(0.5 * (s12 + s21) / cos)


def tan_angle_to_span(U, A):
    """tan of the largest angle between ``span(U)`` (orthonormal) and ``span(A)``.

    Uses ``||(I - U U^T) A (U^T A)^{-1}||_2``, which needs no orthonormal
    basis for ``A``. Returns ``inf`` if ``U^T A`` is singular.
    """
    U = np.asarray(U, dtype=float)
    A = np.asarray(A, dtype=float)
    C = U.T @ A
    try:
        Cinv = np.linalg.inv(C)
    except np.linalg.LinAlgError:
        return np.inf
    return float(np.linalg.norm((A - U @ C) @ Cinv, 2))
