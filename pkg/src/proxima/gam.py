"""Generalized additive models with Eilers-Marx P-spline smooths.

Each smooth acts on a monomial term ``z_k = e_k(X)``: a cubic B-spline
basis on ``J`` equally spaced knot intervals over the observed range of
``z_k``, penalized by squared second differences of its coefficients.
Smooths are centered over the fitting points; the sum-to-zero direction of
each coefficient block, which centering makes non-identifiable, is
projected out so the assembled design has ``1 + sum(J - 1)`` columns.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.interpolate import BSpline

from .basis import design_matrix
from .data import FittingSet
from .errors import PreconditionError, ProximaError
from .glm import Family, Link, get_family, get_link, irls, pearson_chi2

log = logging.getLogger(__name__)

DEGREE = 3
DEFAULT_J = 8
DEFAULT_GRID = tuple(float(v) for v in np.logspace(-4, 4, 9))


@dataclass(frozen=True)
class SmoothSpec:
    term: tuple
    J: int
    knot_range: tuple
    lam: float

    def __post_init__(self):
        if self.J < 4:
            raise PreconditionError("cubic P-splines need J >= 4")
        if not self.lam >= 0:
            raise PreconditionError("smoothing parameter must be non-negative")
        lo, hi = self.knot_range
        if not hi > lo:
            raise PreconditionError("degenerate smooth argument: empty knot range")

    def knots(self) -> np.ndarray:
        lo, hi = self.knot_range
        h = (hi - lo) / (self.J - DEGREE)
        return lo + h * (np.arange(self.J + DEGREE + 1) - DEGREE)


def _basis_on_range(z, spec: SmoothSpec) -> np.ndarray:
    """Uncentered N x J cubic B-spline basis, extended linearly outside the range."""
    z = np.asarray(z, dtype=float)
    lo, hi = spec.knot_range
    spl = BSpline(spec.knots(), np.eye(spec.J), DEGREE, extrapolate=True)
    inside = np.clip(z, lo, hi)
    B = spl(inside)
    out = (z < lo) | (z > hi)
    if np.any(out):
        dspl = spl.derivative()
        edge = np.where(z < lo, lo, hi)[out]
        B[out] = spl(edge) + dspl(edge) * (z[out] - edge)[:, None]
    return B


def bspline_columns(z, spec: SmoothSpec, means=None):
    """Column-mean-centered B-spline design for one smooth.

    Returns ``(B - means, means)``; ``means`` are computed from ``z``
    unless supplied (prediction reuses the fitting-set means).
    """
    B = _basis_on_range(z, spec)
    if means is None:
        means = B.mean(axis=0)
    return B - means, np.asarray(means)


def smooth_range(z):
    lo, hi = float(np.min(z)), float(np.max(z))
    if not hi - lo > 1e-12 * max(1.0, abs(lo), abs(hi)):
        raise PreconditionError("degenerate smooth argument: constant over the fitting points")
    return lo, hi


@lru_cache(maxsize=64)
def _constraint_basis(J):
    """J x (J-1) orthonormal basis of the complement of the ones vector."""
    Q, _ = np.linalg.qr(np.ones((J, 1)), mode="complete")
    return Q[:, 1:]


@lru_cache(maxsize=64)
def _second_differences(J):
    return np.diff(np.eye(J), n=2, axis=0)


def penalty_block(J, lam) -> np.ndarray:
    """``lam * D2^T D2`` on the full J coefficients (before the constraint)."""
    D2 = _second_differences(J)
    return lam * D2.T @ D2


@dataclass(frozen=True)
class GamFit:
    intercept: float
    smooths: tuple  # of (SmoothSpec, coefficient block of J reals)
    family: Family
    link: Link
    dispersion: float
    effective_df: float
    deviance: float
    column_means: tuple
    n: int
    converged: bool = True
    iterations: int = 0
    y: np.ndarray = field(default=None, repr=False)
    fitted: np.ndarray = field(default=None, repr=False)
    penalized_deviance: float = 0.0
    dim: int = 0
    method = "gam"

    @property
    def terms(self) -> tuple:
        D = self.dimension
        return ((0,) * D,) + tuple(s.term for s, _ in self.smooths)

    @property
    def dimension(self) -> int:
        return self.dim

    @property
    def lambdas(self) -> tuple:
        return tuple(s.lam for s, _ in self.smooths)

    def smooth_values(self, X, k) -> np.ndarray:
        spec, coef = self.smooths[k]
        z = design_matrix([spec.term], np.atleast_2d(X))[:, 0]
        Bc, _ = bspline_columns(z, spec, self.column_means[k])
        return Bc @ coef

    def linear_predictor(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        eta = np.full(X.shape[0], self.intercept)
        for k in range(len(self.smooths)):
            eta += self.smooth_values(X, k)
        return eta

    def predict(self, X):
        from .glm import _mean

        X = np.asarray(X, dtype=float)
        mu = _mean(self.link, self.linear_predictor(X))
        return float(mu[0]) if X.ndim == 1 else mu


@dataclass
class _Assembly:
    Z: np.ndarray
    penalty_rows: np.ndarray
    specs: list
    means: list
    widths: list


def _assemble(fit_set, smooth_terms, lambdas, J) -> _Assembly:
    N = fit_set.n
    cols = [np.ones((N, 1))]
    pen = []
    specs, means, widths = [], [], []
    Q = _constraint_basis(J)
    D2Q = _second_differences(J) @ Q
    total = 1 + len(smooth_terms) * (J - 1)
    offset = 1
    for term, lam in zip(smooth_terms, lambdas):
        z = design_matrix([term], fit_set.X)[:, 0]
        spec = SmoothSpec(tuple(int(e) for e in term), J, smooth_range(z), float(lam))
        Bc, m = bspline_columns(z, spec)
        cols.append(Bc @ Q)
        rows = np.zeros((D2Q.shape[0], total))
        rows[:, offset:offset + J - 1] = np.sqrt(lam) * D2Q
        pen.append(rows)
        offset += J - 1
        specs.append(spec)
        means.append(m)
        widths.append(J - 1)
    Z = np.hstack(cols)
    P = np.vstack(pen) if pen else np.zeros((0, total))
    return _Assembly(Z, P, specs, means, widths)


def fit_gam(fit_set: FittingSet, smooth_terms, family="gaussian", link="identity",
            lambdas=None, J=DEFAULT_J, tol=1e-8, max_iter=50) -> GamFit:
    """Fit ``g(mu) = b0 + sum_k h_k(z_k)`` by penalized IRLS."""
    fam = get_family(family)
    lnk = get_link(link, fam)
    smooth_terms = [tuple(int(e) for e in t) for t in smooth_terms]
    if any(sum(t) == 0 for t in smooth_terms):
        raise PreconditionError("the intercept cannot be a smooth argument")
    if lambdas is None:
        lambdas = [1.0] * len(smooth_terms)
    if np.isscalar(lambdas):
        lambdas = [float(lambdas)] * len(smooth_terms)
    if len(lambdas) != len(smooth_terms):
        raise PreconditionError("one smoothing parameter per smooth required")
    asm = _assemble(fit_set, smooth_terms, lambdas, J)
    y = np.asarray(fit_set.y)
    if not fam.valid_y(y):
        raise PreconditionError(f"responses outside the support of the {fam.name} family")
    N = fit_set.n
    P = asm.penalty_rows if smooth_terms else None
    beta, mu, dev, w, it, converged = irls(asm.Z, y, fam, lnk, tol, max_iter, penalty_rows=P)
    df = _effective_df(asm.Z, w, asm.penalty_rows)
    Q = _constraint_basis(J)
    smooths = []
    offset = 1
    for spec, width in zip(asm.specs, asm.widths):
        smooths.append((spec, Q @ beta[offset:offset + width]))
        offset += width
    if fam.dispersion_known:
        phi = 1.0
    else:
        if not N - df > 0:
            raise PreconditionError("effective degrees of freedom reach the sample size")
        phi = pearson_chi2(y, mu, fam) / (N - df)
    pdev = dev + float(np.sum((asm.penalty_rows @ beta) ** 2))
    return GamFit(
        dim=fit_set.dimension,
        intercept=float(beta[0]), smooths=tuple(smooths), family=fam, link=lnk,
        dispersion=phi, effective_df=df, deviance=dev, column_means=tuple(asm.means),
        n=N, converged=converged, iterations=it, y=y, fitted=mu, penalized_deviance=pdev,
    )


def _effective_df(Z, w, penalty_rows) -> float:
    """``tr((Z^T W Z + S)^{-1} Z^T W Z)``."""
    info = Z.T @ (Z * w[:, None])
    S = penalty_rows.T @ penalty_rows
    try:
        F = np.linalg.solve(info + S, info)
    except np.linalg.LinAlgError:
        raise PreconditionError("penalized system is singular") from None
    return float(np.trace(F))


def effective_df(fit: GamFit) -> float:
    return fit.effective_df


def penalized_normal_residual(fit: GamFit, fit_set: FittingSet) -> float:
    """Sup-norm of ``Z^T W (s - Z b) - S b`` at the fit, relative to ``||Z^T W s||``.

    Diagnostic for the stationarity of the penalized fit.
    """
    specs_terms = [s.term for s, _ in fit.smooths]
    J = fit.smooths[0][0].J if fit.smooths else DEFAULT_J
    asm = _assemble(fit_set, specs_terms, fit.lambdas, J)
    Q = _constraint_basis(J)
    beta = np.concatenate([[fit.intercept]] + [Q.T @ c for _, c in fit.smooths])
    mu = fit.fitted
    gp = fit.link.g_prime(mu)
    w = 1.0 / (gp**2 * fit.family.variance(mu))
    eta = asm.Z @ beta
    s = eta + (fit.y - mu) * gp
    S = asm.penalty_rows.T @ asm.penalty_rows
    r = asm.Z.T @ (w * (s - eta)) - S @ beta
    return float(np.max(np.abs(r)) / max(np.max(np.abs(asm.Z.T @ (w * s))), 1e-300))


def gcv_gam(fit: GamFit) -> float:
    """``N D / (N - df)^2``."""
    N, df = fit.n, fit.effective_df
    if df >= N:
        raise PreconditionError("GCV undefined: effective degrees of freedom >= N")
    return N * fit.deviance / (N - df) ** 2


def aic_gam(fit: GamFit) -> float:
    """``-2 l(beta, phi) + 2 (df + p)`` with the likelihood dispersion deviance / N."""
    phi = 1.0 if fit.family.dispersion_known else fit.deviance / fit.n
    if not phi > 0:
        raise PreconditionError("AIC needs a positive dispersion")
    ll = fit.family.loglik(fit.y, fit.fitted, phi)
    return -2.0 * ll + 2 * (fit.effective_df + fit.family.extra_params)


CRITERIA = {"aic": aic_gam, "gcv": gcv_gam}


def _better(score, best):
    return best is None or score < best


def select_lambda_fit(fit_set, smooth_terms, family="gaussian", link="identity", J=DEFAULT_J,
                      grid=DEFAULT_GRID, criterion="aic", tol=1e-8, max_iter=50, coordinate=True):
    """Grid search for smoothing parameters; returns ``(lambdas, fit, score)``.

    A shared-lambda scan is followed (if ``coordinate``) by one
    coordinate-wise pass over the smooths. The grid is visited from the
    largest value down and only a strictly smaller score replaces the
    incumbent, so ties go to the smoother model.
    """
    if len(grid) == 0:
        raise PreconditionError("empty lambda grid")
    score_fn = CRITERIA[criterion]
    grid = sorted((float(g) for g in grid), reverse=True)
    K = len(smooth_terms)

    def evaluate(lams):
        try:
            fit = fit_gam(fit_set, smooth_terms, family, link, lams, J, tol, max_iter)
            s = score_fn(fit)
        except (ProximaError, np.linalg.LinAlgError) as exc:
            log.debug("lambda %s failed: %s", lams, exc)
            return None, None
        return (fit, s) if np.isfinite(s) else (None, None)

    best = best_fit = best_lams = None
    for lam in grid:
        fit, s = evaluate([lam] * K)
        if fit is not None and _better(s, best):
            best, best_fit, best_lams = s, fit, [lam] * K
    if best_fit is None:
        raise ProximaError("no smoothing parameter on the grid produced a valid fit")
    if coordinate and K > 1:
        for k in range(K):
            for lam in grid:
                if lam == best_lams[k]:
                    continue
                trial = list(best_lams)
                trial[k] = lam
                fit, s = evaluate(trial)
                if fit is not None and _better(s, best):
                    best, best_fit, best_lams = s, fit, trial
    return tuple(best_lams), best_fit, best


def select_lambda(fit_set, smooth_terms, family="gaussian", link="identity", J=DEFAULT_J,
                  grid=DEFAULT_GRID, criterion="aic") -> tuple:
    return select_lambda_fit(fit_set, smooth_terms, family, link, J, grid, criterion)[0]
