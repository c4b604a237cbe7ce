"""Feasible GLS under multiplicative heteroscedasticity.

Error variances are modelled as ``sigma_i^2 = exp(v_i^T alpha)`` where
``v_i`` evaluates a small set of monomial variance terms (intercept first)
at scenario ``i``. The overall scale ``sigma^2`` is fixed to 1 and absorbed
by ``alpha_0``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaincc

from .basis import degree, design_matrix, intercept
from .data import FittingSet
from .errors import ConvergenceError, DegenerateFitError, PreconditionError, ProximaError
from .linalg import solve_ls, solve_wls
from .ols import OlsFit

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITER = 100
NEWTON_MAX_STEPS = 50
NEWTON_TOL = 1e-20
# decrements this small are at the rounding floor of the objective
NEWTON_FLOOR = 1e-12


@dataclass(frozen=True)
class VarianceModel:
    terms: tuple
    alpha: np.ndarray

    def __post_init__(self):
        if not self.terms or sum(self.terms[0]) != 0:
            raise PreconditionError("the first variance term must be the intercept")
        if len(self.alpha) != len(self.terms):
            raise PreconditionError("one alpha per variance term")

    @property
    def m(self) -> int:
        return len(self.terms)

    def variances(self, X) -> np.ndarray:
        return np.exp(design_matrix(self.terms, np.atleast_2d(X)) @ self.alpha)


@dataclass(frozen=True)
class FglsFit:
    terms: tuple
    coefficients: np.ndarray
    variance_model: VarianceModel
    iterations: int
    converged: bool
    log_likelihood: float
    n: int
    method = "fgls"

    @property
    def k(self) -> int:
        return len(self.terms)

    @property
    def dimension(self) -> int:
        return len(self.terms[0])

    def predict(self, X):
        X = np.asarray(X, dtype=float)
        out = design_matrix(self.terms, np.atleast_2d(X)) @ self.coefficients
        return float(out[0]) if X.ndim == 1 else out


def _alpha_objective(V, e2, alpha):
    lin = V @ alpha
    return float(np.sum(lin + np.exp(-lin) * e2))


def fit_variance_alpha(V, resid, alpha0=None) -> np.ndarray:
    """Minimize ``sum_i [v_i^T a + exp(-v_i^T a) e_i^2]`` over ``a`` by damped Newton.

    Gradient ``sum_i v_i (1 - exp(-v_i^T a) e_i^2)``, Hessian
    ``sum_i v_i v_i^T exp(-v_i^T a) e_i^2``.
    """
    e2 = np.asarray(resid, dtype=float) ** 2
    if not np.any(e2 > 0):
        raise DegenerateFitError("all residuals are zero; variance model undefined")
    M = V.shape[1]
    if alpha0 is None:
        alpha = np.zeros(M)
        alpha[0] = math.log(np.mean(e2))
    else:
        alpha = np.array(alpha0, dtype=float)
    f = _alpha_objective(V, e2, alpha)
    for _ in range(200):
        lin = V @ alpha
        r = np.exp(-lin) * e2
        grad = V.T @ (1.0 - r)
        H = V.T @ (V * r[:, None])
        try:
            step = np.linalg.solve(H, grad)
        except np.linalg.LinAlgError:
            raise ConvergenceError("singular Hessian in variance-model Newton step") from None
        dec = float(grad @ step)
        if dec < 0:
            step = grad  # fall back to steepest descent on a non-PD Hessian
            dec = float(grad @ grad)
        if dec / 2 < NEWTON_TOL * (1 + abs(f)):
            return alpha
        t = 1.0
        for _ in range(NEWTON_MAX_STEPS):
            cand = alpha - t * step
            fc = _alpha_objective(V, e2, cand)
            if np.isfinite(fc) and fc <= f - 1e-4 * t * dec:
                break
            t *= 0.5
        else:
            if dec / 2 < NEWTON_FLOOR * (1 + abs(f)):
                return alpha
            raise ConvergenceError("variance-model Newton step failed after 50 backtracking halvings")
        alpha, f = cand, fc
    return alpha


def _loglik(V, alpha, resid):
    N = len(resid)
    return -0.5 * (N * math.log(2 * math.pi) + _alpha_objective(V, resid**2, alpha))


def _rel_change(new, old):
    return float(np.max(np.abs(new - old)) / max(float(np.max(np.abs(old))), 1.0))


def fit_fgls(fit_set: FittingSet, terms, variance_terms, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER,
             alpha_start=None) -> FglsFit:
    """Iterated ML: OLS start, then alternate the variance fit and the weighted LS fit.

    With ``alpha_start`` the loop starts from the weighted LS fit at those
    variance parameters instead of OLS.
    """
    terms = tuple(tuple(int(e) for e in t) for t in terms)
    variance_terms = tuple(tuple(int(e) for e in t) for t in variance_terms)
    N, K, M = fit_set.n, len(terms), len(variance_terms)
    if not variance_terms or sum(variance_terms[0]) != 0:
        raise PreconditionError("variance terms must begin with the intercept")
    if N < K + M:
        raise PreconditionError(f"need N >= K + M, got N={N}, K={K}, M={M}")
    y = np.asarray(fit_set.y)
    Z = design_matrix(terms, fit_set.X)
    V = design_matrix(variance_terms, fit_set.X)
    if alpha_start is None:
        beta = solve_ls(Z, y).coefficients
    else:
        # warm start: weighted LS at the supplied variance parameters
        beta = solve_wls(Z, y, np.exp(-(V @ np.asarray(alpha_start, dtype=float)))).coefficients
    alpha = alpha_start
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        resid = y - Z @ beta
        new_alpha = fit_variance_alpha(V, resid, alpha)
        w = np.exp(-(V @ new_alpha))
        new_beta = solve_wls(Z, y, w).coefficients
        d_beta = _rel_change(new_beta, beta)
        d_alpha = np.inf if alpha is None else _rel_change(new_alpha, alpha)
        beta, alpha = new_beta, new_alpha
        if max(d_beta, d_alpha) < tol:
            converged = True
            break
    if not converged:
        log.warning("FGLS outer loop did not converge in %d iterations", max_iter)
    resid = y - Z @ beta
    ll = _loglik(V, alpha, resid)
    return FglsFit(terms, beta, VarianceModel(variance_terms, alpha), it, converged, ll, N)


def aic_fgls(fit: FglsFit, fit_set: FittingSet | None = None) -> float:
    """``N log 2pi + sum_i v_i^T alpha + sum_i exp(-v_i^T alpha) e_i^2 + 2 (K + M)``."""
    if fit_set is None:
        return -2.0 * fit.log_likelihood + 2 * (fit.k + fit.variance_model.m)
    V = design_matrix(fit.variance_model.terms, fit_set.X)
    resid = np.asarray(fit_set.y) - fit.predict(fit_set.X)
    return -2.0 * _loglik(V, fit.variance_model.alpha, resid) + 2 * (fit.k + fit.variance_model.m)


# ---------------------------------------------------------------------------
# Breusch-Pagan
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BreuschPaganResult:
    statistic: float
    df: int
    p_value: float


def breusch_pagan(ols_residuals, variance_regressors) -> BreuschPaganResult:
    """Classical LM test for ``sigma_i^2 = h(v_i^T alpha)``.

    Regress ``e_i^2 / (RSS / N)`` on the regressors (first column the
    intercept); the statistic is half the explained sum of squares and is
    asymptotically chi-square with ``M - 1`` degrees of freedom.
    """
    e = np.asarray(ols_residuals, dtype=float)
    V = np.asarray(variance_regressors, dtype=float)
    N, M = V.shape
    if M < 2:
        raise PreconditionError("Breusch-Pagan needs the intercept plus at least one regressor")
    s2 = float(e @ e) / N
    if not s2 > 0:
        raise DegenerateFitError("all residuals are zero")
    g = e**2 / s2
    sol = solve_ls(V, g)
    fitted = V @ sol.coefficients
    ess = float(np.sum((fitted - g.mean()) ** 2))
    stat = ess / 2.0
    df = M - 1
    p = float(gammaincc(df / 2.0, stat / 2.0))
    return BreuschPaganResult(stat, df, min(max(p, 0.0), 1.0))


# ---------------------------------------------------------------------------
# Variance-model selection
# ---------------------------------------------------------------------------

def select_variance_model_type1(fit_set: FittingSet, ols_fit: OlsFit, m_max: int,
                                tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER, executor=None):
    """Greedy forward AIC selection of variance terms for a fixed proxy.

    Candidates are the proxy terms of total degree at most two. Returns
    ``(VarianceModel, FglsFit, steps)`` where ``steps`` lists
    ``(accepted term, AIC)`` pairs starting with the intercept-only model.
    """
    if m_max < 1:
        raise PreconditionError("m_max must be at least 1")
    D = fit_set.dimension
    proxy = ols_fit.terms
    pool = sorted(t for t in proxy if 0 < degree(t) <= 2)
    current = [intercept(D)]
    best_fit = fit_fgls(fit_set, proxy, current, tol, max_iter)
    best = aic_fgls(best_fit)
    steps = [(intercept(D), best)]
    while len(current) < m_max:
        remaining = [t for t in pool if t not in current]
        if not remaining:
            break

        def trial(t):
            try:
                f = fit_fgls(fit_set, proxy, current + [t], tol, max_iter)
                return f, aic_fgls(f)
            except ProximaError as exc:
                log.info("variance candidate %s skipped: %s", t, exc)
                return None, math.inf

        results = list(executor.map(trial, remaining)) if executor else [trial(t) for t in remaining]
        idx = min(range(len(remaining)), key=lambda i: (results[i][1], remaining[i]))
        fit, score = results[idx]
        if fit is None or not score < best:
            break
        current.append(remaining[idx])
        best, best_fit = score, fit
        steps.append((remaining[idx], score))
    return best_fit.variance_model, best_fit, steps


def run_type2(fit_set: FittingSet, variance_model, restrictions, config=None, executor=None,
              return_trace=False):
    """Adaptive proxy selection with FGLS at a fixed set of variance terms.

    ``alpha`` is re-estimated for every candidate; only the variance terms
    are held fixed. Returns the final ``FglsFit`` (and the trace if asked).
    """
    from .engine import EngineConfig, calibrate  # engine imports this module lazily too

    terms = variance_model.terms if isinstance(variance_model, VarianceModel) else tuple(variance_model)
    if config is None:
        config = EngineConfig(restrictions=restrictions, method="fgls")
    config = config.with_options(method="fgls", restrictions=restrictions,
                                 options={**config.options, "variance_terms": terms})
    fit, trace = calibrate(fit_set, config, executor=executor)
    return (fit, trace) if return_trace else fit
