"""Adaptive forward selection of proxy basis terms.

Starting from the intercept, every iteration fits each marginality
candidate with the bound regression, scores it with the bound criterion and
accepts the best strictly improving one (stepwise), the best ``L``
(stagewise) or the best ``ceil(p * |C|)`` (dynamic). MARS and kernel
regression run their own procedures behind the same ``calibrate`` entry.
"""

from __future__ import annotations

import csv
import io
import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Mapping

import numpy as np

from .basis import (Restrictions, admissible_universe, format_term, intercept, is_downward_closed,
                    marginality_candidates)
from .data import FittingSet
from .errors import PreconditionError, ProximaError

log = logging.getLogger(__name__)

METHODS = ("ols", "glm", "gam", "fgls", "mars", "kernel")
MODES = ("stepwise", "stagewise", "dynamic")
EXHAUSTIVE_LIMIT = 15

# failures that disqualify a single candidate without stopping the run
CANDIDATE_ERRORS = (ProximaError, np.linalg.LinAlgError, FloatingPointError)


@dataclass(frozen=True)
class EngineConfig:
    """Restrictions, regression method, acceptance mode and method options.

    ``options`` carries method-specific settings such as ``family`` and
    ``link`` (glm, gam), ``variance_terms`` (fgls) or the mars/kernel keys.
    """

    restrictions: Restrictions
    method: str = "ols"
    mode: str = "stepwise"
    stage_length: int = 1
    proportion: float = 0.25
    options: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.method not in METHODS:
            raise PreconditionError(f"unknown method {self.method!r}; expected one of {', '.join(METHODS)}")
        if self.mode not in MODES:
            raise PreconditionError(f"unknown selection mode {self.mode!r}")
        if self.stage_length < 1:
            raise PreconditionError("stage length must be at least 1")
        if not 0 < self.proportion <= 1:
            raise PreconditionError("proportion must lie in (0, 1]")
        object.__setattr__(self, "options", dict(self.options))

    def with_options(self, **changes) -> "EngineConfig":
        return replace(self, **changes)

    def accept_count(self, n_candidates: int) -> int:
        if self.mode == "stepwise":
            return 1
        if self.mode == "stagewise":
            return self.stage_length
        return max(1, math.ceil(self.proportion * n_candidates))


@dataclass(frozen=True)
class TraceRecord:
    iteration: int
    accepted: tuple
    criterion_before: float | None
    criterion: float
    n_candidates: int
    n_terms: int
    model: Any = field(default=None, compare=False, repr=False)


@dataclass
class SelectionTrace:
    method: str
    criterion_name: str
    records: list = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    @property
    def criteria(self) -> list:
        return [r.criterion for r in self.records]

    def is_strictly_decreasing(self) -> bool:
        return all(b.criterion < a.criterion for a, b in zip(self.records, self.records[1:]))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", "k", "accepted", "criterion", "criterion_before", "candidates"])
        for r in self.records:
            w.writerow([r.iteration, r.n_terms, " ".join(_label(t) for t in r.accepted),
                        repr(r.criterion), "" if r.criterion_before is None else repr(r.criterion_before),
                        r.n_candidates])
        return buf.getvalue()


def _label(term) -> str:
    return term if isinstance(term, str) else format_term(term)


@dataclass(frozen=True)
class Binding:
    """A regression paired with the criterion that scores it."""

    fit: Callable  # (fit_set, terms, parent) -> model
    score: Callable  # model -> float
    criterion_name: str


def _ols_binding(opts):
    from .ols import aic_ols, fit_ols
    return Binding(lambda fs, terms, parent=None: fit_ols(fs, terms), aic_ols, "aic")


def _glm_binding(opts):
    from .glm import aic_glm, fit_glm
    family = opts.get("family", "gaussian")
    link = opts.get("link", "identity")

    def fit(fs, terms, parent=None):
        return fit_glm(fs, terms, family, link)
    return Binding(fit, aic_glm, "aic")


def _gam_binding(opts):
    from . import gam
    family = opts.get("family", "gaussian")
    link = opts.get("link", "identity")
    J = int(opts.get("splines_per_smooth", gam.DEFAULT_J))
    grid = tuple(opts.get("lambda_grid", gam.DEFAULT_GRID))
    criterion = opts.get("criterion", "aic")
    if criterion not in gam.CRITERIA:
        raise PreconditionError(f"unknown GAM criterion {criterion!r}")
    coordinate = opts.get("select", "shared") == "coordinate"

    def fit(fs, terms, parent=None):
        smooths = [t for t in terms if sum(t) > 0]
        if not smooths:
            return gam.fit_gam(fs, [], family, link, None, J)
        return gam.select_lambda_fit(fs, smooths, family, link, J, grid, criterion,
                                     coordinate=coordinate)[1]
    return Binding(fit, gam.CRITERIA[criterion], criterion)


def _fgls_binding(opts):
    from .fgls import DEFAULT_MAX_ITER, DEFAULT_TOL, aic_fgls, fit_fgls
    vterms = opts.get("variance_terms")
    if not vterms:
        raise PreconditionError("fgls needs variance_terms")
    tol = float(opts.get("tol", DEFAULT_TOL))
    max_iter = int(opts.get("max_iter", DEFAULT_MAX_ITER))

    def fit(fs, terms, parent=None):
        start = parent.variance_model.alpha if parent is not None else None
        return fit_fgls(fs, terms, vterms, tol, max_iter, alpha_start=start)
    return Binding(fit, aic_fgls, "aic")


BINDINGS = {"ols": _ols_binding, "glm": _glm_binding, "gam": _gam_binding, "fgls": _fgls_binding}


def make_binding(config: EngineConfig) -> Binding:
    if config.method not in BINDINGS:
        raise PreconditionError(f"method {config.method!r} has no monomial-basis binding")
    return BINDINGS[config.method](config.options)


def _evaluate(binding, fit_set, terms, parent):
    try:
        model = binding.fit(fit_set, terms, parent)
        score = float(binding.score(model))
    except CANDIDATE_ERRORS as exc:
        log.debug("candidate %s skipped: %s", format_term(terms[-1]), exc)
        return math.inf, None
    if not np.isfinite(score):
        log.debug("candidate %s skipped: non-finite criterion", format_term(terms[-1]))
        return math.inf, None
    return score, model


def _executor_map(executor, fn, items):
    return list(executor.map(fn, items)) if executor is not None else [fn(i) for i in items]


def calibrate(fit_set: FittingSet, config: EngineConfig, executor=None, threads: int | None = None):
    """Run the adaptive selection; returns ``(model, SelectionTrace)``.

    ``executor`` (anything with an order-preserving ``map``) or ``threads``
    parallelizes the candidate loop; results do not depend on either.
    """
    if executor is None and threads is not None and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return calibrate(fit_set, config, executor=pool)
    if config.method == "mars":
        from .mars import calibrate_mars
        return calibrate_mars(fit_set, config, executor=executor)
    if config.method == "kernel":
        from .kernel import calibrate_kernel
        return calibrate_kernel(fit_set, config, executor=executor)
    return _calibrate_monomial(fit_set, config, make_binding(config), executor)


def _calibrate_monomial(fit_set, config, binding, executor):
    r = config.restrictions
    D = fit_set.dimension
    current = [intercept(D)]
    try:
        model = binding.fit(fit_set, current, None)
        score = float(binding.score(model))
    except CANDIDATE_ERRORS as exc:
        raise ProximaError(f"intercept-only fit failed: {exc}") from exc
    if not np.isfinite(score):
        raise ProximaError("intercept-only fit has a non-finite criterion")
    trace = SelectionTrace(config.method, binding.criterion_name)
    trace.records.append(TraceRecord(0, (intercept(D),), None, score, 0, 1, model))
    iteration = 0
    while len(current) < r.k_max:
        cands = marginality_candidates(current, r, D)
        if not cands:
            break
        parent = model
        results = _executor_map(executor, lambda t: _evaluate(binding, fit_set, current + [t], parent), cands)
        # ties on the score fall to the lexicographically smaller term
        improving = sorted((s, t) for (s, _), t in zip(results, cands) if s < score)
        if not improving:
            break
        by_term = {t: m for (_, m), t in zip(results, cands)}
        L = min(config.accept_count(len(cands)), r.k_max - len(current))
        chosen = [t for _, t in improving[:L]]
        new_model, new_score = by_term[chosen[0]], improving[0][0]
        if len(chosen) > 1:
            joint_score, joint_model = _evaluate(binding, fit_set, current + chosen, parent)
            if joint_score < score:
                new_model, new_score = joint_model, joint_score
            else:
                log.info("joint refit of %d terms did not improve; accepting the best single term",
                         len(chosen))
                chosen = chosen[:1]
        iteration += 1
        before = score
        current = current + chosen
        model, score = new_model, new_score
        trace.records.append(TraceRecord(iteration, tuple(chosen), before, score, len(cands),
                                         len(current), model))
    assert is_downward_closed(current)
    return model, trace


def exhaustive_reference(fit_set: FittingSet, config: EngineConfig):
    """Best downward-closed term set by brute force; returns ``(model, score)``.

    Only for small universes (at most 15 admissible terms). Ties go to the
    lexicographically smaller sorted term set.
    """
    r = config.restrictions
    D = fit_set.dimension
    universe = admissible_universe(r, D, limit=EXHAUSTIVE_LIMIT)
    binding = make_binding(config)
    others = [t for t in universe if t != intercept(D)]
    best = (math.inf, None, None)
    for size in range(0, min(len(others), r.k_max - 1) + 1):
        for combo in itertools.combinations(others, size):
            terms = [intercept(D), *combo]
            if not is_downward_closed(terms):
                continue
            s, m = _evaluate(binding, fit_set, terms, None)
            key = tuple(sorted(terms))
            if m is not None and (s < best[0] or (s == best[0] and key < best[2])):
                best = (s, m, key)
    if best[1] is None:
        raise ProximaError("no term set in the universe could be fitted")
    return best[1], best[0]
