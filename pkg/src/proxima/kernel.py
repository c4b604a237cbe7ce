"""Local constant (LC) and local linear (LL) kernel regression.

Kernels act on basis-term coordinates ``z = (e_1(x), ..., e_{K-1}(x))``;
the intercept coordinate is constant and is left out of the product
kernel. Every row of kernel weights may be rescaled by a positive constant
without changing any estimate, which lets the gaussian kernel be evaluated
in log space without underflow.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .basis import design_matrix, intercept
from .data import FittingSet
from .errors import PreconditionError, ProximaError, RankDeficiencyError
from .linalg import solve_wls

log = logging.getLogger(__name__)

SHAPES = ("gaussian", "epanechnikov", "uniform")
ORDERS = (2, 4)
MODES = ("lc", "ll")
SELECTORS = ("aic", "loocv")
BW_LOW, BW_HIGH = 1e-2, 1e2  # search interval as multiples of the coordinate range
GOLDEN_ITERATIONS = 24
SWEEPS = 2
CHUNK = 256
LOCAL_RANK_TOL = 1e-12
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


class EmptyNeighborhoodError(ProximaError):
    pass


@dataclass(frozen=True)
class KernelSpec:
    """Univariate kernel ``D(u)``; order 4 kernels have vanishing second moment."""

    shape: str = "gaussian"
    order: int = 2

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise PreconditionError(f"unknown kernel shape {self.shape!r}")
        if self.order not in ORDERS:
            raise PreconditionError("kernel order must be 2 or 4")

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        return np.exp(self._log_part(u)) * self._poly_part(u)

    def _log_part(self, u):
        if self.shape == "gaussian":
            return -0.5 * u * u + math.log(_INV_SQRT_2PI)
        return np.where(np.abs(u) <= 1.0, 0.0, -np.inf)

    def _poly_part(self, u):
        u2 = u * u
        if self.shape == "gaussian":
            return np.ones_like(u) if self.order == 2 else (3.0 - u2) / 2.0
        if self.shape == "epanechnikov":
            if self.order == 2:
                return 0.75 * (1.0 - u2)
            return (15.0 / 32.0) * (3.0 - 10.0 * u2 + 7.0 * u2 * u2)
        return np.full_like(u, 0.5) if self.order == 2 else 0.375 * (3.0 - 5.0 * u2)

    def product_weights(self, z0, Z, bandwidths):
        """Weights ``prod_k D((z_ik - z0_k) / lam_k)`` for targets ``z0`` (T x P) and data ``Z`` (N x P).

        Rows are scaled so their largest log-part is zero.
        """
        T, N = z0.shape[0], Z.shape[0]
        logw = np.zeros((T, N))
        poly = np.ones((T, N))
        for k, lam in enumerate(bandwidths):
            u = (Z[None, :, k] - z0[:, None, k]) / lam
            logw += self._log_part(u)
            poly *= self._poly_part(u)
        top = np.max(logw, axis=1, keepdims=True)
        top = np.where(np.isfinite(top), top, 0.0)
        with np.errstate(invalid="ignore"):
            return np.where(np.isfinite(logw), np.exp(logw - top) * poly, 0.0)


@dataclass(frozen=True)
class KernelModel:
    terms: tuple
    bandwidths: np.ndarray
    mode: str
    kernel: KernelSpec
    fit_set: FittingSet
    method = "kernel"

    def __post_init__(self):
        if self.mode not in MODES:
            raise PreconditionError(f"kernel mode must be lc or ll, got {self.mode!r}")
        if not self.terms or sum(self.terms[0]) != 0:
            raise PreconditionError("the first kernel basis term must be the intercept")
        bw = np.asarray(self.bandwidths, dtype=float)
        if bw.shape != (len(self.terms) - 1,):
            raise PreconditionError("one bandwidth per non-intercept term")
        if not np.all(bw > 0):
            raise PreconditionError("bandwidths must be positive")
        object.__setattr__(self, "bandwidths", bw)

    @property
    def k(self) -> int:
        return len(self.terms)

    @property
    def dimension(self) -> int:
        return len(self.terms[0])

    def coordinates(self, X):
        return design_matrix(self.terms, np.atleast_2d(np.asarray(X, dtype=float)))

    def predict(self, X):
        X = np.asarray(X, dtype=float)
        out = _local_fit(self, self.coordinates(X))[0]
        return float(out[0]) if X.ndim == 1 else out


@dataclass(frozen=True)
class HatDiagnostics:
    trace_H: float
    sigma2: float


def _local_fit(model: KernelModel, Zt, leave_out=None, want_hat=False):
    """Local estimates at target coordinates ``Zt`` (T x K, intercept first).

    ``leave_out[j]`` drops fitting point ``leave_out[j]`` from target j's
    fit. With ``want_hat`` the diagonal hat entries (targets = fitting
    points) are returned too.
    """
    Z = model.coordinates(model.fit_set.X)
    y = np.asarray(model.fit_set.y)
    T = Zt.shape[0]
    preds = np.empty(T)
    hat = np.empty(T) if want_hat else None
    for lo in range(0, T, CHUNK):
        hi = min(T, lo + CHUNK)
        W = model.kernel.product_weights(Zt[lo:hi, 1:], Z[:, 1:], model.bandwidths)
        self_w = None
        if want_hat:
            self_w = W[np.arange(hi - lo), np.arange(lo, hi)].copy()
        if leave_out is not None:
            W[np.arange(hi - lo), leave_out[lo:hi]] = 0.0
        if not np.all(np.any(W != 0.0, axis=1)):
            raise EmptyNeighborhoodError("empty neighborhood: no fitting point has positive kernel weight")
        if model.mode == "lc":
            s = W.sum(axis=1)
            if np.any(s == 0.0):
                raise EmptyNeighborhoodError("kernel weights sum to zero")
            preds[lo:hi] = (W @ y) / s
            if want_hat:
                hat[lo:hi] = self_w / s
        else:
            G = np.einsum("tn,nk,nl->tkl", W, Z, Z, optimize=True)
            b = W @ (Z * y[:, None])
            _check_local_rank(G)
            sol = np.linalg.solve(G, np.concatenate([b[:, :, None], Zt[lo:hi, :, None]], axis=2))
            preds[lo:hi] = np.einsum("tk,tk->t", Zt[lo:hi], sol[:, :, 0])
            if want_hat:
                hat[lo:hi] = np.einsum("tk,tk->t", Zt[lo:hi], sol[:, :, 1]) * self_w
    return preds, hat


def _check_local_rank(G):
    d = np.sqrt(np.abs(np.einsum("tkk->tk", G)))
    if np.any(d == 0):
        raise RankDeficiencyError(int(np.argmax(np.any(d == 0, axis=0))))
    S = G / (d[:, :, None] * d[:, None, :])
    ev = np.abs(np.linalg.eigvalsh(S))
    if np.any(ev.min(axis=1) <= LOCAL_RANK_TOL * ev.max(axis=1)):
        raise RankDeficiencyError(G.shape[1] - 1)


def predict_lc(model: KernelModel, fit_set: FittingSet, target) -> float:
    return _with_data(model, fit_set, "lc").predict(np.asarray(target, dtype=float))


def predict_ll(model: KernelModel, fit_set: FittingSet, target) -> float:
    """Local linear estimate ``z0^T beta(z0)`` with ``beta`` from a weighted QR solve.

    This single-target path goes through ``solve_wls`` when every weight is
    non-negative; the batched predictor uses the local normal equations.
    """
    m = _with_data(model, fit_set, "ll")
    z0 = m.coordinates(np.asarray(target, dtype=float))
    Z = m.coordinates(fit_set.X)
    w = m.kernel.product_weights(z0[:, 1:], Z[:, 1:], m.bandwidths)[0]
    if not np.any(w != 0):
        raise EmptyNeighborhoodError("empty neighborhood: no fitting point has positive kernel weight")
    if np.all(w >= 0):
        beta = solve_wls(Z, np.asarray(fit_set.y), w).coefficients
        return float(z0[0] @ beta)
    return float(m.predict(np.asarray(target, dtype=float)))


def _with_data(model, fit_set, mode):
    return KernelModel(model.terms, model.bandwidths, mode, model.kernel, fit_set)


def hat_trace(model: KernelModel, fit_set: FittingSet | None = None) -> HatDiagnostics:
    m = model if fit_set is None else _with_data(model, fit_set, model.mode)
    Zf = m.coordinates(m.fit_set.X)
    fitted, hat = _local_fit(m, Zf, want_hat=True)
    resid = np.asarray(m.fit_set.y) - fitted
    return HatDiagnostics(float(np.sum(hat)), float(np.mean(resid**2)))


def aic_hurvich(diag: HatDiagnostics, N: int) -> float:
    """``log(sigma2) + (1 + tr(H)/N) / (1 - (tr(H) + 2)/N)``."""
    denom = 1.0 - (diag.trace_H + 2.0) / N
    if not denom > 0:
        raise PreconditionError("improved AIC undefined: tr(H) + 2 >= N")
    if not diag.sigma2 > 0:
        raise PreconditionError("improved AIC undefined: zero residual variance")
    return math.log(diag.sigma2) + (1.0 + diag.trace_H / N) / denom


def loocv(model: KernelModel, fit_set: FittingSet | None = None) -> float:
    """Mean squared leave-one-out prediction error at the fitting points."""
    m = model if fit_set is None else _with_data(model, fit_set, model.mode)
    N = m.fit_set.n
    pred, _ = _local_fit(m, m.coordinates(m.fit_set.X), leave_out=np.arange(N))
    return float(np.mean((np.asarray(m.fit_set.y) - pred) ** 2))


def criterion_value(model: KernelModel, criterion: str) -> float:
    if criterion == "aic":
        return aic_hurvich(hat_trace(model), model.fit_set.n)
    if criterion == "loocv":
        return loocv(model)
    raise PreconditionError(f"unknown bandwidth criterion {criterion!r}")


# ---------------------------------------------------------------------------
# Bandwidth selection
# ---------------------------------------------------------------------------

def stride_subsample(n_total: int, fraction: float) -> np.ndarray:
    n = math.ceil(fraction * n_total)
    return np.floor(np.arange(n) * (n_total / n)).astype(int)


def _golden(f, a, b, iterations=GOLDEN_ITERATIONS):
    """Minimize ``f`` on ``[a, b]``; the best of all evaluated points (ends included) wins."""
    seen = {}

    def ev(x):
        if x not in seen:
            seen[x] = f(x)
        return seen[x]

    ev(a)
    ev(b)
    g = (math.sqrt(5.0) - 1.0) / 2.0
    c, d = b - g * (b - a), a + g * (b - a)
    fc, fd = ev(c), ev(d)
    for _ in range(iterations):
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - g * (b - a)
            fc = ev(c)
        else:
            a, c, fc = c, d, fd
            d = a + g * (b - a)
            fd = ev(d)
    x = min(seen, key=lambda k: (seen[k], k))
    return x, seen[x]


def select_bandwidths(fit_set: FittingSet, terms, mode="ll", kernel=KernelSpec(), criterion="aic",
                      bw_fraction=1.0, executor=None) -> np.ndarray:
    """Coordinate-wise golden-section search on ``log lambda_k`` over two sweeps."""
    terms = tuple(tuple(int(e) for e in t) for t in terms)
    K = len(terms)
    if criterion not in SELECTORS:
        raise PreconditionError(f"unknown bandwidth criterion {criterion!r}")
    if not 0 < bw_fraction <= 1:
        raise PreconditionError("bw_fraction must lie in (0, 1]")
    n = math.ceil(bw_fraction * fit_set.n)
    if n < 10 * K:
        raise PreconditionError(f"bandwidth subsample of {n} points is below 10 K = {10 * K}")
    sub = fit_set.subset(stride_subsample(fit_set.n, bw_fraction))
    Z = design_matrix(terms, sub.X)[:, 1:]
    ranges = np.ptp(Z, axis=0) if K > 1 else np.zeros(0)
    if np.any(ranges <= 0):
        raise PreconditionError("a basis coordinate is constant on the bandwidth sample")
    if K == 1:
        return np.zeros(0)
    lam = ranges.copy()

    def score(log_lam, k):
        trial = lam.copy()
        trial[k] = math.exp(log_lam)
        try:
            v = criterion_value(KernelModel(terms, trial, mode, kernel, sub), criterion)
        except (ProximaError, np.linalg.LinAlgError) as exc:
            log.debug("bandwidth %s rejected: %s", trial, exc)
            return math.inf
        return v if np.isfinite(v) else math.inf

    for _ in range(SWEEPS):
        for k in range(K - 1):
            lo, hi = math.log(BW_LOW * ranges[k]), math.log(BW_HIGH * ranges[k])
            x, v = _golden(lambda t: score(t, k), lo, hi)
            if not np.isfinite(v):
                raise ProximaError(f"bandwidth criterion is non-finite on the whole search interval "
                                   f"for term {k + 1}")
            lam[k] = math.exp(x)
    return lam


def fit_kernel(fit_set: FittingSet, terms, mode="ll", kernel=KernelSpec(), criterion="aic",
               bw_fraction=1.0, bandwidths=None) -> KernelModel:
    terms = tuple(tuple(int(e) for e in t) for t in terms)
    if bandwidths is None:
        bandwidths = select_bandwidths(fit_set, terms, mode, kernel, criterion, bw_fraction)
    return KernelModel(terms, np.asarray(bandwidths, dtype=float), mode, kernel, fit_set)


def basis_terms(fit_set: FittingSet, spec: str, restrictions, executor=None):
    """Resolve ``adaptive[:Kmax]``, ``linear`` or ``combined[:Kmax]``; returns ``(terms, trace)``."""
    from .engine import EngineConfig, SelectionTrace, TraceRecord, calibrate

    D = fit_set.dimension
    kind, _, arg = spec.partition(":")
    linear = [intercept(D)] + [tuple(int(e == d) for e in range(D)) for d in range(D)]
    if kind == "linear":
        trace = SelectionTrace("kernel", "none")
        trace.records.append(TraceRecord(0, tuple(linear), None, 0.0, 0, len(linear)))
        return tuple(linear), trace
    if kind not in ("adaptive", "combined"):
        raise PreconditionError(f"kernel.basis must be adaptive:<Kmax>, linear or combined, got {spec!r}")
    r = restrictions
    if arg:
        r = type(r)(int(arg), r.d1, r.d2, r.d3)
    model, trace = calibrate(fit_set, EngineConfig(r, "ols"), executor=executor)
    terms = list(model.terms)
    if kind == "combined":
        terms += [t for t in linear if t not in terms]
    return tuple(terms), trace


def calibrate_kernel(fit_set: FittingSet, config, executor=None):
    """Basis terms first (by OLS selection or fixed), then bandwidths."""
    o = config.options
    if not o.get("basis"):
        raise PreconditionError("kernel.basis required")
    terms, trace = basis_terms(fit_set, o["basis"], config.restrictions, executor)
    spec = KernelSpec(o.get("shape", "gaussian"), int(o.get("order", 2)))
    model = fit_kernel(fit_set, terms, o.get("mode", "ll"), spec, o.get("selector", "aic"),
                       float(o.get("bw_fraction", 1.0)))
    return model, trace
