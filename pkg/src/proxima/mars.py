"""Multivariate adaptive regression splines.

Hinge factors ``max(+-(x_d - t), 0)`` are multiplied into terms. The forward
pass adds reflected pairs ``parent * (x_d - t)_+, parent * (t - x_d)_+`` and,
after each selection, extends the candidate pool only with products of the
two just-selected hinges and the first-level hinges on unused dimensions.
The backward pass prunes single terms and keeps the size with minimal GCV.

Dimensions are stored as 0-based column indices and printed 1-based.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .data import FittingSet
from .errors import PreconditionError, ProximaError
from .glm import get_family, get_link, irls, _mean
from .linalg import RANK_TOL, solve_ls

log = logging.getLogger(__name__)

DEFAULT_KNOT_CAP = 64
GENERALIZED_MAX_ITER = 25
PRUNE_METHODS = ("none", "backward")
_FIT_ERRORS = (ProximaError, np.linalg.LinAlgError, FloatingPointError)


@dataclass(frozen=True, order=True)
class Hinge:
    dim: int
    knot: float
    sign: int  # +1 for (x - t)_+, -1 for (t - x)_+

    def __post_init__(self):
        if self.sign not in (1, -1):
            raise PreconditionError("hinge sign must be +1 or -1")

    def __call__(self, X):
        return np.maximum(self.sign * (X[:, self.dim] - self.knot), 0.0)

    def __str__(self):
        x = f"x{self.dim + 1}"
        return f"({x}-{self.knot:.6g})+" if self.sign > 0 else f"({self.knot:.6g}-{x})+"


@dataclass(frozen=True)
class HingeTerm:
    """Product of hinge factors on distinct dimensions; empty means intercept."""

    factors: tuple = ()

    def __post_init__(self):
        dims = [h.dim for h in self.factors]
        if len(set(dims)) != len(dims):
            raise PreconditionError("a hinge term may use each dimension at most once")

    @property
    def dims(self) -> frozenset:
        return frozenset(h.dim for h in self.factors)

    @property
    def order(self) -> int:
        return len(self.factors)

    def times(self, hinge: Hinge) -> "HingeTerm":
        return HingeTerm(self.factors + (hinge,))

    def evaluate(self, X) -> np.ndarray:
        out = np.ones(X.shape[0])
        for h in self.factors:
            out = out * h(X)
        return out

    def __str__(self):
        return "*".join(str(h) for h in self.factors) if self.factors else "1"


INTERCEPT = HingeTerm()


@dataclass(frozen=True)
class CandidatePair:
    """Reflected pair ``parent * (x_d - t)_+`` and ``parent * (t - x_d)_+``."""

    parent: HingeTerm
    dim: int
    knot: float

    def terms(self):
        return (self.parent.times(Hinge(self.dim, self.knot, 1)),
                self.parent.times(Hinge(self.dim, self.knot, -1)))


@dataclass(frozen=True)
class MarsModel:
    terms: tuple
    coefficients: np.ndarray
    family: str = "gaussian"
    link: str = "identity"
    knots_per_dim: tuple = ()
    deviance: float = math.nan
    n: int = 0
    gcv: float | None = None
    dim: int = 0
    method = "mars"

    def __post_init__(self):
        if len(self.coefficients) != len(self.terms):
            raise PreconditionError("one coefficient per term")
        if not self.dim:
            object.__setattr__(self, "dim", len(self.knots_per_dim))

    @property
    def k(self) -> int:
        return len(self.terms)

    @property
    def dimension(self) -> int:
        return self.dim

    @property
    def knot_count(self) -> int:
        return len({(h.dim, h.knot) for t in self.terms for h in t.factors})

    def design(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.column_stack([t.evaluate(X) for t in self.terms])

    def predict(self, X):
        X = np.asarray(X, dtype=float)
        eta = self.design(X) @ self.coefficients
        out = eta if self.link == "identity" else _mean(get_link(self.link), eta)
        return float(out[0]) if X.ndim == 1 else out


# ---------------------------------------------------------------------------
# Candidate pools
# ---------------------------------------------------------------------------

def knot_values(fit_set: FittingSet, knot_cap: int | None = DEFAULT_KNOT_CAP) -> tuple:
    """Distinct stresses per dimension, thinned to ``knot_cap`` quantile-spaced values."""
    out = []
    for d in range(fit_set.dimension):
        u = np.unique(fit_set.X[:, d])
        if knot_cap is not None and len(u) > knot_cap:
            idx = np.unique(np.round(np.linspace(0, len(u) - 1, knot_cap)).astype(int))
            u = u[idx]
        out.append(tuple(float(v) for v in u))
    return tuple(out)


def initial_candidates(fit_set: FittingSet | None, knot_cap: int | None = DEFAULT_KNOT_CAP,
                       knots=None) -> list:
    """First-level pool: one reflected pair per dimension and distinct stress."""
    if knots is None:
        if fit_set is None or fit_set.n == 0:
            return []
        knots = knot_values(fit_set, knot_cap)
    return [CandidatePair(INTERCEPT, d, t) for d, ts in enumerate(knots) for t in ts]


def pool_size(pool) -> int:
    """Number of hinge functions in a pool of reflected pairs."""
    return 2 * len(pool)


def extend_pool(pool, selected: CandidatePair, knots, max_order: int) -> list:
    """Drop the selected pair; add products of its two hinges with first-level
    hinges on dimensions the selected hinges do not use."""
    out = [p for p in pool if p != selected]
    for parent in selected.terms():
        if parent.order + 1 > max_order:
            continue
        used = parent.dims
        for d, ts in enumerate(knots):
            if d in used:
                continue
            out.extend(CandidatePair(parent, d, t) for t in ts)
    return out


def gcv_mars(rss, N, K, T, c=0.0) -> float:
    """``N * RSS / (N - (K + c T))^2``."""
    df = K + c * T
    if df >= N:
        raise PreconditionError(f"effective degrees of freedom {df} reach the sample size {N}")
    return N * rss / (N - df) ** 2


# ---------------------------------------------------------------------------
# Scoring
# ---------------------------------------------------------------------------

class _GaussianScorer:
    """Residual sums of squares for ``[Z, a, b]`` from the QR of ``Z``.

    Algebraically equal to a full least-squares refit: the new columns are
    orthogonalized against ``Z`` and the RSS drops by the squared projection
    of the current residual on them.
    """

    def __init__(self, Z, y):
        self.Q, _ = np.linalg.qr(Z, mode="reduced")
        self.r = y - self.Q @ (self.Q.T @ y)
        self.rss = float(self.r @ self.r)

    def score_block(self, A, B):
        """RSS for each pair of columns ``(A[:, j], B[:, j])``; ``inf`` if dependent."""
        na = np.linalg.norm(A, axis=0)
        nb = np.linalg.norm(B, axis=0)
        A = A - self.Q @ (self.Q.T @ A)
        B = B - self.Q @ (self.Q.T @ B)
        raa = np.sqrt(np.einsum("ij,ij->j", A, A))
        ok = raa > RANK_TOL * na
        ua = np.divide(A, raa, out=np.zeros_like(A), where=ok)
        B = B - ua * np.einsum("ij,ij->j", ua, B)
        rbb = np.sqrt(np.einsum("ij,ij->j", B, B))
        ok &= rbb > RANK_TOL * nb
        ub = np.divide(B, rbb, out=np.zeros_like(B), where=ok)
        drop = (ua.T @ self.r) ** 2 + (ub.T @ self.r) ** 2
        return np.where(ok, np.maximum(self.rss - drop, 0.0), np.inf)


def _fit_terms(terms, X, y, family, link, mu_start=None):
    """Coefficients and deviance for a fixed term list."""
    Z = np.column_stack([t.evaluate(X) for t in terms])
    if family.name == "gaussian" and link.name == "identity":
        sol = solve_ls(Z, y)
        return sol.coefficients, sol.residual_sum_of_squares, None
    beta, mu, dev, _, _, _ = irls(Z, y, family, link, max_iter=GENERALIZED_MAX_ITER, mu_start=mu_start)
    return beta, dev, mu


@dataclass
class ForwardResult:
    model: MarsModel
    deviances: list = field(default_factory=list)
    pool_sizes: list = field(default_factory=list)
    accepted: list = field(default_factory=list)


def forward_pass(fit_set: FittingSet, k_max: int, t_min: float = 0.0, max_order: int = 2,
                 family="gaussian", link="identity", knot_cap: int | None = DEFAULT_KNOT_CAP,
                 executor=None) -> ForwardResult:
    """Greedy addition of reflected hinge pairs.

    Stops at ``k_max`` terms (intercept included), when the best relative
    deviance decrease is not positive or falls below ``t_min``, or when no
    pair can be estimated.
    """
    if k_max < 3:
        raise PreconditionError("k_max must be at least 3")
    if t_min < 0:
        raise PreconditionError("t_min must be non-negative")
    if max_order < 1:
        raise PreconditionError("interaction order must be at least 1")
    fam = get_family(family)
    lnk = get_link(link, fam)
    X = np.asarray(fit_set.X)
    y = np.asarray(fit_set.y)
    knots = knot_values(fit_set, knot_cap)
    pool = initial_candidates(None, knots=knots)
    terms = [INTERCEPT]
    try:
        beta, dev, mu = _fit_terms(terms, X, y, fam, lnk)
    except _FIT_ERRORS as exc:
        raise ProximaError(f"intercept-only MARS fit failed: {exc}") from exc
    res = ForwardResult(None, [dev], [pool_size(pool)])
    gaussian = fam.name == "gaussian" and lnk.name == "identity"
    while len(terms) + 2 <= k_max and pool and dev > 0:
        Z = np.column_stack([t.evaluate(X) for t in terms])
        scores = _score_pool(pool, terms, Z, X, y, fam, lnk, mu, gaussian, executor)
        order = sorted(range(len(pool)), key=lambda i: (scores[i], pool[i].dim, pool[i].knot, i))
        best = order[0]
        if not np.isfinite(scores[best]):
            break
        decrease = (dev - scores[best]) / dev
        if not decrease > 0 or decrease < t_min:
            break
        pair = pool[best]
        new_terms = terms + list(pair.terms())
        try:
            beta, dev_new, mu_new = _fit_terms(new_terms, X, y, fam, lnk, mu)
        except _FIT_ERRORS as exc:
            log.info("refit of selected pair failed: %s", exc)
            break
        if not dev_new < dev:
            break
        terms, dev, mu = new_terms, dev_new, mu_new
        pool = extend_pool(pool, pair, knots, max_order)
        res.deviances.append(dev)
        res.pool_sizes.append(pool_size(pool))
        res.accepted.append(pair)
    res.model = MarsModel(tuple(terms), np.asarray(beta), fam.name, lnk.name, knots, dev, fit_set.n,
                          dim=fit_set.dimension)
    return res


def _score_pool(pool, terms, Z, X, y, fam, lnk, mu, gaussian, executor):
    # group by (parent, dim) so the gaussian scorer works on column blocks
    groups = {}
    for i, p in enumerate(pool):
        groups.setdefault((p.parent, p.dim), []).append(i)
    keys = list(groups)
    scorer = _GaussianScorer(Z, y) if gaussian else None

    def run(key):
        parent, d = key
        idx = groups[key]
        base = parent.evaluate(X)
        t = np.array([pool[i].knot for i in idx])
        diff = X[:, d][:, None] - t[None, :]
        A = base[:, None] * np.maximum(diff, 0.0)
        B = base[:, None] * np.maximum(-diff, 0.0)
        if scorer is not None:
            return scorer.score_block(A, B)
        out = np.full(len(idx), np.inf)
        for j in range(len(idx)):
            Zc = np.column_stack([Z, A[:, j], B[:, j]])
            try:
                _, _, dev, _, _, _ = irls(Zc, y, fam, lnk, max_iter=GENERALIZED_MAX_ITER, mu_start=mu)
            except _FIT_ERRORS:
                continue
            if np.isfinite(dev):
                out[j] = dev
        return out

    blocks = list(executor.map(run, keys)) if executor is not None else [run(k) for k in keys]
    scores = np.empty(len(pool))
    for key, block in zip(keys, blocks):
        scores[groups[key]] = block
    return scores


def backward_pass(model: MarsModel, fit_set: FittingSet, c: float = 0.0, prune: str = "backward"):
    """Prune single terms by smallest deviance increase and keep the GCV-optimal size.

    Returns ``(model, sizes, gcvs)``; the returned model carries its GCV.
    """
    if prune not in PRUNE_METHODS:
        raise PreconditionError(f"unknown pruning method {prune!r}")
    N = fit_set.n
    X = np.asarray(fit_set.X)
    y = np.asarray(fit_set.y)
    fam = get_family(model.family)
    lnk = get_link(model.link, fam)

    def score(terms, dev):
        T = len({(h.dim, h.knot) for t in terms for h in t.factors})
        return gcv_mars(dev, N, len(terms), T, c)

    if prune == "none":
        return model, [model.k], [score(model.terms, model.deviance)]
    terms = list(model.terms)
    beta, dev, mu = np.asarray(model.coefficients), model.deviance, None
    best = (score(terms, dev), terms, beta, dev)
    sizes, gcvs = [len(terms)], [best[0]]
    gaussian = fam.name == "gaussian" and lnk.name == "identity"
    while len(terms) > 1:
        drop = None
        if gaussian:
            Z = np.column_stack([t.evaluate(X) for t in terms])
            R = solve_ls(Z, y).r_factor
            Rinv = np.linalg.inv(R)
            increase = beta**2 / np.sum(Rinv**2, axis=1)
            increase[0] = np.inf
            drop = int(np.argmin(increase))
            cand = terms[:drop] + terms[drop + 1:]
            try:
                beta, dev, mu = _fit_terms(cand, X, y, fam, lnk)
            except _FIT_ERRORS:
                break
            terms = cand
        else:
            trial = None
            for j in range(1, len(terms)):
                cand = terms[:j] + terms[j + 1:]
                try:
                    b, d_, m_ = _fit_terms(cand, X, y, fam, lnk, mu)
                except _FIT_ERRORS:
                    continue
                if trial is None or d_ < trial[2]:
                    trial = (cand, b, d_, m_)
            if trial is None:
                break
            terms, beta, dev, mu = trial
        g = score(terms, dev)
        sizes.append(len(terms))
        gcvs.append(g)
        if g < best[0]:
            best = (g, terms, beta, dev)
    g, terms, beta, dev = best
    pruned = MarsModel(tuple(terms), np.asarray(beta), model.family, model.link, model.knots_per_dim,
                       dev, N, g, model.dim)
    return pruned, sizes, gcvs


def fit_mars(fit_set: FittingSet, k_max: int = 21, t_min: float = 0.0, max_order: int = 2,
             prune: str = "backward", c: float = 0.0, family="gaussian", link="identity",
             knot_cap: int | None = DEFAULT_KNOT_CAP, executor=None):
    """Forward plus backward pass; returns ``(model, ForwardResult)``."""
    fwd = forward_pass(fit_set, k_max, t_min, max_order, family, link, knot_cap, executor)
    model, _, _ = backward_pass(fwd.model, fit_set, c, prune)
    return model, fwd


def predict_mars(model: MarsModel, scenario):
    return model.predict(scenario)


def calibrate_mars(fit_set: FittingSet, config, executor=None):
    """Engine entry point; the trace records the forward-pass deviances."""
    from .engine import SelectionTrace, TraceRecord

    o = config.options
    k_max = int(o.get("k_max", config.restrictions.k_max))
    model, fwd = fit_mars(
        fit_set, k_max=k_max, t_min=float(o.get("t_min", 0.0)), max_order=int(o.get("degree", 2)),
        prune=o.get("prune", "backward"), c=float(o.get("penalty", 0.0)),
        family=o.get("family", "gaussian"), link=o.get("link", "identity"),
        knot_cap=int(o.get("knot_cap", DEFAULT_KNOT_CAP)), executor=executor)
    trace = SelectionTrace("mars", "deviance")
    trace.records.append(TraceRecord(0, ("1",), None, fwd.deviances[0], 0, 1))
    for i, pair in enumerate(fwd.accepted, start=1):
        trace.records.append(TraceRecord(i, tuple(str(t) for t in pair.terms()), fwd.deviances[i - 1],
                                         fwd.deviances[i], fwd.pool_sizes[i - 1], 1 + 2 * i))
    return model, trace
