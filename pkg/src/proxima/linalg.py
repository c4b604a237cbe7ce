"""Dense least-squares kernels shared by every regression family.

Everything goes through a Householder QR factorization of the (weighted)
design; ``Z^T Z`` is never formed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .errors import PreconditionError, RankDeficiencyError

RANK_TOL = 1e-10


@dataclass(frozen=True)
class LeastSquaresSolution:
    coefficients: np.ndarray
    rank: int
    residual_sum_of_squares: float
    r_factor: np.ndarray | None = None  # upper triangular R of the (weighted) design


def solve_ls(Z, y) -> LeastSquaresSolution:
    """Minimize ``||y - Z beta||^2`` via QR.

    Column k counts as dependent when the diagonal ``|R[k, k]|`` falls
    below ``RANK_TOL`` times the Euclidean norm of column k; the first such
    column is reported in the raised ``RankDeficiencyError``.
    """
    Z = np.asarray(Z, dtype=float)
    y = np.asarray(y, dtype=float)
    if Z.ndim == 1:
        Z = Z[:, None]
    N, K = Z.shape
    if y.shape != (N,):
        raise PreconditionError(f"response has shape {y.shape}, expected ({N},)")
    if N < K:
        raise PreconditionError(f"need N >= K, got N={N}, K={K}")
    if K == 0:
        return LeastSquaresSolution(np.zeros(0), 0, float(y @ y), np.zeros((0, 0)))
    Q, R = np.linalg.qr(Z, mode="reduced")
    diag = np.abs(np.diag(R))
    norms = np.linalg.norm(Z, axis=0)
    dependent = np.flatnonzero(diag <= RANK_TOL * norms)
    if dependent.size:
        raise RankDeficiencyError(int(dependent[0]), rank=K - dependent.size)
    qty = Q.T @ y
    beta = solve_triangular(R, qty, lower=False)
    resid = y - Z @ beta
    return LeastSquaresSolution(beta, K, float(resid @ resid), R)


def solve_wls(Z, y, w) -> LeastSquaresSolution:
    """Minimize ``sum_i w_i (y_i - z_i^T beta)^2``.

    Zero-weight rows are dropped before factorization; negative weights
    are an error. The reported RSS is the weighted one.
    """
    Z = np.asarray(Z, dtype=float)
    if Z.ndim == 1:
        Z = Z[:, None]
    y = np.asarray(y, dtype=float)
    w = np.asarray(w, dtype=float)
    if w.shape != y.shape:
        raise PreconditionError("weights and response differ in length")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise PreconditionError("weights must be finite and non-negative")
    keep = w > 0
    if keep.sum() < Z.shape[1]:
        raise PreconditionError(
            f"only {int(keep.sum())} positively weighted rows for {Z.shape[1]} coefficients"
        )
    sw = np.sqrt(w[keep])
    return solve_ls(Z[keep] * sw[:, None], y[keep] * sw)
