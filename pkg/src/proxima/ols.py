"""Classical linear regression on monomial terms, scored by AIC."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .basis import design_matrix
from .data import FittingSet
from .errors import DegenerateFitError, PreconditionError
from .linalg import solve_ls

# residual norm below this fraction of ||y|| counts as an exact fit
PERFECT_FIT_RTOL = 1e-12


def _as_rows(x):
    x = np.asarray(x, dtype=float)
    return x[None, :] if x.ndim == 1 else x


@dataclass(frozen=True)
class OlsFit:
    terms: tuple
    coefficients: np.ndarray
    sigma2_ml: float
    sample_variance: float
    n: int
    k: int
    method = "ols"

    @property
    def dimension(self) -> int:
        return len(self.terms[0])

    @property
    def rss(self) -> float:
        return self.sigma2_ml * self.n

    def predict(self, X):
        """Proxy values at one scenario (returns float) or a row array."""
        X = np.asarray(X, dtype=float)
        out = design_matrix(self.terms, _as_rows(X)) @ self.coefficients
        return float(out[0]) if X.ndim == 1 else out


def fit_ols(fit_set: FittingSet, terms) -> OlsFit:
    terms = tuple(tuple(int(e) for e in t) for t in terms)
    N, K = fit_set.n, len(terms)
    if K == 0 or any(len(t) != fit_set.dimension for t in terms):
        raise PreconditionError("terms must be non-empty and match the data dimension")
    if N <= K:
        raise PreconditionError(f"need N > K, got N={N}, K={K}")
    Z = design_matrix(terms, fit_set.X)
    sol = solve_ls(Z, fit_set.y)
    rss = sol.residual_sum_of_squares
    if rss <= (PERFECT_FIT_RTOL * np.linalg.norm(fit_set.y)) ** 2:
        raise DegenerateFitError("degenerate perfect fit: residual sum of squares is zero")
    return OlsFit(terms, sol.coefficients, rss / N, rss / (N - K), N, K)


def aic_ols(fit: OlsFit) -> float:
    """``N (log(2 pi sigma2_ml) + 1) + 2 (K + 1)``."""
    if not fit.sigma2_ml > 0:
        raise PreconditionError("AIC needs a positive error variance")
    return fit.n * (math.log(2 * math.pi * fit.sigma2_ml) + 1) + 2 * (fit.k + 1)


def predict(fit: OlsFit, scenario) -> float:
    return fit.predict(scenario)
