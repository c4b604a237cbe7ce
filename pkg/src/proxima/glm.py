"""Exponential-family GLMs fitted by iteratively reweighted least squares.

Families: gaussian, gamma, inverse gaussian (``invgauss``) and poisson.
Links: identity, log, inverse, inverse square (``invsquare``, inverse
gaussian only) and sqrt.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import gammaln

from .basis import design_matrix
from .data import FittingSet
from .errors import DomainError, PreconditionError
from .linalg import solve_ls, solve_wls

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 50
MAX_HALVINGS = 10


# ---------------------------------------------------------------------------
# Families
# ---------------------------------------------------------------------------

def _xlogy_ratio(y, mu):
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(y > 0, y * np.log(y / mu), 0.0)


@dataclass(frozen=True)
class Family:
    name: str
    variance: Callable
    deviance_units: Callable
    loglik: Callable  # (y, mu, phi) -> total log-likelihood
    valid_mu: Callable
    valid_y: Callable
    dispersion_known: bool = False

    @property
    def extra_params(self) -> int:
        return 0 if self.dispersion_known else 1


def _gaussian_loglik(y, mu, phi):
    return float(np.sum(-0.5 * (np.log(2 * np.pi * phi) + (y - mu) ** 2 / phi)))


def _gamma_loglik(y, mu, phi):
    shape = 1.0 / phi
    return float(np.sum(shape * np.log(y * shape / mu) - y * shape / mu - np.log(y) - gammaln(shape)))


def _invgauss_loglik(y, mu, phi):
    return float(np.sum(-0.5 * (np.log(2 * np.pi * phi * y**3) + (y - mu) ** 2 / (phi * mu**2 * y))))


def _poisson_loglik(y, mu, phi):
    return float(np.sum(y * np.log(mu) - mu - gammaln(y + 1)))


_positive = lambda v: np.all(v > 0)  # noqa: E731
_anything = lambda v: np.all(np.isfinite(v))  # noqa: E731

FAMILIES = {
    "gaussian": Family(
        "gaussian",
        variance=lambda mu: np.ones_like(mu),
        deviance_units=lambda y, mu: (y - mu) ** 2,
        loglik=_gaussian_loglik,
        valid_mu=_anything,
        valid_y=_anything,
    ),
    "gamma": Family(
        "gamma",
        variance=lambda mu: mu**2,
        deviance_units=lambda y, mu: 2 * (-np.log(y / mu) + (y - mu) / mu),
        loglik=_gamma_loglik,
        valid_mu=_positive,
        valid_y=_positive,
    ),
    "invgauss": Family(
        "invgauss",
        variance=lambda mu: mu**3,
        deviance_units=lambda y, mu: (y - mu) ** 2 / (mu**2 * y),
        loglik=_invgauss_loglik,
        valid_mu=_positive,
        valid_y=_positive,
    ),
    "poisson": Family(
        "poisson",
        variance=lambda mu: mu,
        deviance_units=lambda y, mu: 2 * (_xlogy_ratio(y, mu) - (y - mu)),
        loglik=_poisson_loglik,
        valid_mu=_positive,
        valid_y=lambda y: np.all(y >= 0),
        dispersion_known=True,
    ),
}
FAMILY_ALIASES = {"inverse_gaussian": "invgauss", "normal": "gaussian"}


# ---------------------------------------------------------------------------
# Links
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Link:
    name: str
    g: Callable
    g_inverse: Callable
    g_prime: Callable
    valid_eta: Callable


LINKS = {
    "identity": Link("identity", lambda mu: mu, lambda eta: eta, lambda mu: np.ones_like(mu), _anything),
    "log": Link("log", np.log, np.exp, lambda mu: 1.0 / mu, _anything),
    "inverse": Link("inverse", lambda mu: 1.0 / mu, lambda eta: 1.0 / eta, lambda mu: -1.0 / mu**2,
                    lambda eta: np.all(np.isfinite(eta)) and np.all(eta != 0)),
    "invsquare": Link("invsquare", lambda mu: mu**-2.0, lambda eta: eta**-0.5, lambda mu: -2.0 / mu**3,
                      lambda eta: np.all(np.isfinite(eta)) and np.all(eta > 0)),
    "sqrt": Link("sqrt", np.sqrt, lambda eta: eta**2, lambda mu: 0.5 / np.sqrt(mu),
                 lambda eta: np.all(np.isfinite(eta)) and np.all(eta >= 0)),
}
LINK_ALIASES = {"inverse_square": "invsquare", "1/mu^2": "invsquare", "id": "identity"}


def get_family(name) -> Family:
    if isinstance(name, Family):
        return name
    key = FAMILY_ALIASES.get(name, name)
    if key not in FAMILIES:
        raise PreconditionError(f"unknown family {name!r}")
    return FAMILIES[key]


def get_link(name, family=None) -> Link:
    if isinstance(name, Link):
        link = name
    else:
        key = LINK_ALIASES.get(name, name)
        if key not in LINKS:
            raise PreconditionError(f"unknown link {name!r}")
        link = LINKS[key]
    if family is not None and link.name == "invsquare" and get_family(family).name != "invgauss":
        raise PreconditionError("invsquare link is only paired with the invgauss family")
    return link


def _mean(link, eta):
    if not link.valid_eta(eta):
        raise DomainError(f"linear predictor outside the domain of the {link.name} link")
    with np.errstate(all="ignore"):
        return link.g_inverse(eta)


# ---------------------------------------------------------------------------
# Fit
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GlmFit:
    terms: tuple
    coefficients: np.ndarray
    family: Family
    link: Link
    dispersion: float
    deviance: float
    iterations: int
    converged: bool
    n: int
    fitted: np.ndarray  # mu-hat at the fitting points
    y: np.ndarray
    method = "glm"

    @property
    def k(self) -> int:
        return len(self.terms)

    @property
    def dimension(self) -> int:
        return len(self.terms[0])

    def linear_predictor(self, X):
        return design_matrix(self.terms, np.atleast_2d(X)) @ self.coefficients

    def predict(self, X):
        X = np.asarray(X, dtype=float)
        mu = _mean(self.link, self.linear_predictor(X))
        return float(mu[0]) if X.ndim == 1 else mu


def _state(family, link, y, eta):
    """(mu, deviance) or None when eta maps outside the admissible domain."""
    if not link.valid_eta(eta):
        return None
    with np.errstate(all="ignore"):
        mu = link.g_inverse(eta)
        if not (np.all(np.isfinite(mu)) and family.valid_mu(mu)):
            return None
        dev = float(np.sum(family.deviance_units(y, mu)))
    if not np.isfinite(dev):
        return None
    return mu, dev


def irls(Z, y, family, link, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER, mu_start=None, penalty_rows=None):
    """Core (penalized) IRLS loop on a prepared design.

    ``penalty_rows`` is a matrix ``P`` with ``P^T P = S``; when given, each
    step solves the augmented least-squares problem that minimizes
    ``sum w (s - Z b)^2 + b^T S b``.

    Returns ``(beta, mu, deviance, weights, iterations, converged)``.
    """
    N, K = Z.shape
    mu = y + 0.1 if mu_start is None else np.asarray(mu_start, dtype=float)
    with np.errstate(all="ignore"):
        eta = link.g(mu)
    if not (np.all(np.isfinite(eta)) and family.valid_mu(mu)):
        raise DomainError(f"starting values y + 0.1 are outside the {family.name}/{link.name} domain")
    beta = None
    pen = 0.0
    old = None
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        gp = link.g_prime(mu)
        s = eta + (y - mu) * gp
        w = 1.0 / (gp**2 * family.variance(mu))
        if not (np.all(np.isfinite(s)) and np.all(np.isfinite(w)) and np.all(w >= 0)):
            raise DomainError("non-finite IRLS working response or weights")
        if penalty_rows is None:
            new_beta = solve_wls(Z, s, w).coefficients
        else:
            sw = np.sqrt(w)
            A = np.vstack([Z * sw[:, None], penalty_rows])
            b = np.concatenate([s * sw, np.zeros(penalty_rows.shape[0])])
            new_beta = solve_ls(A, b).coefficients
        new_eta = Z @ new_beta
        st = _state(family, link, y, new_eta)
        halvings = 0
        while st is None and halvings < MAX_HALVINGS:
            # step-halving toward the last admissible predictor
            halvings += 1
            if beta is not None:
                new_beta = 0.5 * (new_beta + beta)
                new_eta = Z @ new_beta
            else:
                new_eta = 0.5 * (new_eta + eta)
            st = _state(family, link, y, new_eta)
        if st is None:
            raise DomainError("non-finite IRLS iterate: mean left the family/link domain")
        mu, dev = st
        eta = new_eta
        beta = new_beta
        if penalty_rows is not None:
            pen = float(np.sum((penalty_rows @ beta) ** 2))
        crit = dev + pen
        consistent = halvings == 0 or old is not None
        if old is not None and consistent and abs(crit - old) / (abs(crit) + 0.1) < tol:
            converged = True
            break
        old = crit
    gp = link.g_prime(mu)
    w = 1.0 / (gp**2 * family.variance(mu))
    return beta, mu, dev, w, it, converged


def fit_glm(fit_set: FittingSet, terms, family="gaussian", link="identity",
            tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER, mu_start=None) -> GlmFit:
    fam = get_family(family)
    lnk = get_link(link, fam)
    terms = tuple(tuple(int(e) for e in t) for t in terms)
    N, K = fit_set.n, len(terms)
    if N <= K:
        raise PreconditionError(f"need N > K, got N={N}, K={K}")
    y = np.asarray(fit_set.y)
    if not fam.valid_y(y):
        raise DomainError(f"responses outside the support of the {fam.name} family")
    Z = design_matrix(terms, fit_set.X)
    beta, mu, dev, _, it, converged = irls(Z, y, fam, lnk, tol, max_iter, mu_start)
    if not converged:
        log.warning("IRLS did not converge in %d iterations (%s/%s)", max_iter, fam.name, lnk.name)
    phi = 1.0 if fam.dispersion_known else pearson_chi2(y, mu, fam) / (N - K)
    return GlmFit(terms, beta, fam, lnk, phi, dev, it, converged, N, mu, y)


def pearson_chi2(y, mu, family) -> float:
    return float(np.sum((y - mu) ** 2 / family.variance(mu)))


def pearson_residuals(fit, fit_set=None) -> np.ndarray:
    """``(y - mu) / sqrt(V(mu))`` at the fitting points."""
    y = fit.y if fit_set is None else np.asarray(fit_set.y)
    mu = fit.fitted if fit_set is None else fit.predict(fit_set.X)
    return (y - mu) / np.sqrt(fit.family.variance(mu))


def likelihood_dispersion(fit) -> float:
    """Dispersion plugged into the log-likelihood for AIC.

    This is deviance / N rather than the Pearson estimate stored on the
    fit; for the gaussian family it is the ML error variance, which makes
    the GLM AIC coincide with the OLS AIC.
    """
    if fit.family.dispersion_known:
        return 1.0
    return fit.deviance / fit.n


def glm_loglik(family, y, mu, phi) -> float:
    return family.loglik(np.asarray(y), np.asarray(mu), phi)


def aic_glm(fit: GlmFit) -> float:
    """``-2 l(beta, phi) + 2 (K + p)``."""
    phi = likelihood_dispersion(fit)
    if not phi > 0:
        raise PreconditionError("AIC needs a positive dispersion")
    return -2.0 * glm_loglik(fit.family, fit.y, fit.fitted, phi) + 2 * (fit.k + fit.family.extra_params)


def predict_glm(fit: GlmFit, scenario):
    return fit.predict(scenario)


__all__ = [
    "FAMILIES", "LINKS", "Family", "Link", "GlmFit", "fit_glm", "pearson_residuals",
    "aic_glm", "predict_glm", "get_family", "get_link", "irls",
]
