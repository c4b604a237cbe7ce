"""Synthetic stand-in for a cash-flow projection model.

The true value is a polynomial plus an asymmetric soft-plus kink
``a * softplus(-l(x))`` that grows where ``l(x)`` is low (think of losses in
low interest rate environments). Each inner simulation adds

* an antithetic driver term ``kappa * l(x) * e_j`` with ``e_{2m} = -e_{2m-1}``,
  which cancels within every pair, and
* independent gaussian noise with variance ``exp(gamma_0 + sum_d gamma_d x_d)``.

Outputs are means over the inner simulations. Means are drawn directly
from their exact distribution, so a million inner simulations cost the
same as two.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .basis import design_matrix, intercept, is_downward_closed
from .data import FittingSet, ValidationSet
from .errors import PreconditionError

FITTING_STREAM = 0


def softplus(u):
    u = np.asarray(u, dtype=float)
    return np.logaddexp(0.0, u)


@dataclass(frozen=True)
class SyntheticModelSpec:
    """Ground truth and noise structure.

    ``ell`` holds the coefficients of the linear functional ``l(x)``;
    ``gamma`` the noise log-variance coefficients, intercept first.
    """

    terms: tuple
    beta: tuple
    asymmetry: float
    ell: tuple
    gamma: tuple
    seed: int = 0
    driver_scale: float = 0.0
    asset_level: float = 1000.0
    asset_slope: float = 0.1

    def __post_init__(self):
        terms = tuple(tuple(int(e) for e in t) for t in self.terms)
        object.__setattr__(self, "terms", terms)
        object.__setattr__(self, "beta", tuple(float(b) for b in self.beta))
        object.__setattr__(self, "ell", tuple(float(v) for v in self.ell))
        object.__setattr__(self, "gamma", tuple(float(v) for v in self.gamma))
        D = self.dimension
        if not terms or any(len(t) != D for t in terms):
            raise PreconditionError("terms must be non-empty and share the dimension of ell")
        if len(self.beta) != len(terms):
            raise PreconditionError("one coefficient per term")
        if not is_downward_closed(terms) or intercept(D) not in terms:
            raise PreconditionError("the true term set must be downward closed")
        if self.asymmetry < 0:
            raise PreconditionError("asymmetry strength must be non-negative")
        if len(self.gamma) != D + 1:
            raise PreconditionError("gamma needs an intercept plus one coefficient per dimension")
        # largest log-variance on the cube [-1, 1]^D
        if not self.gamma[0] + sum(abs(g) for g in self.gamma[1:]) < math.log(np.finfo(float).max):
            raise PreconditionError("noise variance overflows on [-1, 1]^D")

    @property
    def dimension(self) -> int:
        return len(self.ell)

    def linear_functional(self, X) -> np.ndarray:
        return np.atleast_2d(X) @ np.asarray(self.ell)

    def noise_variance(self, X) -> np.ndarray:
        X = np.atleast_2d(X)
        return np.exp(self.gamma[0] + X @ np.asarray(self.gamma[1:]))


def default_spec(D: int = 5, seed: int = 0, **overrides) -> SyntheticModelSpec:
    """A heteroscedastic, asymmetric quadratic truth in ``D`` dimensions."""
    if not 1 <= D <= 21:
        raise PreconditionError("dimension must be in 1..21")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 99]))
    terms = [intercept(D)]
    beta = [1000.0]
    for d in range(D):
        e = [0] * D
        e[d] = 1
        terms.append(tuple(e))
        beta.append(float(rng.uniform(20, 60) * (-1) ** d))
    for d in range(D):
        e = [0] * D
        e[d] = 2
        terms.append(tuple(e))
        beta.append(float(rng.uniform(5, 15)))
    for d in range(D - 1):
        e = [0] * D
        e[d] = e[d + 1] = 1
        terms.append(tuple(e))
        beta.append(float(rng.uniform(-10, 10)))
    ell = [3.0] + [0.0] * (D - 1)
    gamma = [math.log(400.0), 2.0] + [0.0] * (D - 1)
    params = dict(terms=tuple(terms), beta=tuple(beta), asymmetry=40.0, ell=tuple(ell),
                  gamma=tuple(gamma), seed=seed, driver_scale=20.0)
    params.update(overrides)
    return SyntheticModelSpec(**params)


def true_value(spec: SyntheticModelSpec, X):
    """``sum_t beta_t * term_t(x) + a * softplus(-l(x))``; float for one scenario."""
    X = np.asarray(X, dtype=float)
    X2 = np.atleast_2d(X)
    f = design_matrix(spec.terms, X2) @ np.asarray(spec.beta)
    if spec.asymmetry:
        f = f + spec.asymmetry * softplus(-spec.linear_functional(X2))
    return float(f[0]) if X.ndim == 1 else f


def _rng(spec, stream):
    return np.random.default_rng(np.random.SeedSequence([int(spec.seed), int(stream)]))


def inner_mean_noise(spec, X, inner_sims, rng, antithetic=True) -> np.ndarray:
    """Draw the mean over ``inner_sims`` inner outcomes minus the true value."""
    if inner_sims < 1:
        raise PreconditionError("inner_sims must be at least 1")
    X = np.atleast_2d(X)
    n = int(inner_sims)
    sigma2 = spec.noise_variance(X)
    noise = np.sqrt(sigma2 / n) * rng.standard_normal(X.shape[0])
    if spec.driver_scale:
        lx = spec.driver_scale * spec.linear_functional(X)
        # antithetic pairs cancel; only an unpaired last draw survives
        unpaired = n % 2 if antithetic else n
        if unpaired:
            noise = noise + lx * math.sqrt(unpaired) / n * rng.standard_normal(X.shape[0])
    return noise


def make_fitting_set(spec: SyntheticModelSpec, scenarios, inner_sims: int = 2, stream=FITTING_STREAM,
                     antithetic=True) -> FittingSet:
    X = np.atleast_2d(np.asarray(scenarios, dtype=float))
    if X.shape[1] != spec.dimension:
        raise PreconditionError("scenario dimension differs from the model spec")
    y = true_value(spec, X) + inner_mean_noise(spec, X, inner_sims, _rng(spec, stream), antithetic)
    return FittingSet(X, y)


def asset_values(spec: SyntheticModelSpec, X) -> np.ndarray:
    X = np.atleast_2d(X)
    return spec.asset_level * (1.0 + spec.asset_slope * X.mean(axis=1))


def make_validation_set(spec: SyntheticModelSpec, scenarios, inner_sims: int = 1000, with_base=True,
                        stream: int = 1, label="", antithetic=True) -> ValidationSet:
    X = np.atleast_2d(np.asarray(scenarios, dtype=float))
    if X.shape[1] != spec.dimension:
        raise PreconditionError("scenario dimension differs from the model spec")
    rng = _rng(spec, stream)
    y = true_value(spec, X) + inner_mean_noise(spec, X, inner_sims, rng, antithetic)
    base_x = base_y = None
    if with_base:
        base_x = np.zeros(spec.dimension)
        base_y = true_value(spec, base_x) + float(inner_mean_noise(spec, base_x, inner_sims, rng, antithetic)[0])
    return ValidationSet(X, y, asset_values(spec, X), base_x, base_y, label=label)
