from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_linear_data
from proxima.basis import Restrictions, admissible, intercept, is_downward_closed
from proxima.data import FittingSet
from proxima.engine import (Binding, EngineConfig, SelectionTrace, _calibrate_monomial, calibrate,
                            make_binding,
                            exhaustive_reference)
from proxima.errors import PreconditionError, ProximaError, RankDeficiencyError
from proxima.ols import aic_ols, fit_ols


def _surface(seed, N=300, D=3, noise=0.3):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1, 1, (N, D))
    y = 1 + X[:, 0] - 2 * X[:, 1] ** 2 + 1.5 * X[:, 0] * X[:, 1] + rng.normal(0, noise, N)
    return FittingSet(X, y)


def _cfg(r="10-221", **kw):
    return EngineConfig(Restrictions.parse(r), **kw)


class TestConfig:
    def test_bad_values(self):
        r = Restrictions.parse("5-111")
        with pytest.raises(PreconditionError):
            EngineConfig(r, method="lasso")
        with pytest.raises(PreconditionError):
            EngineConfig(r, mode="greedy")
        with pytest.raises(PreconditionError):
            EngineConfig(r, mode="stagewise", stage_length=0)
        with pytest.raises(PreconditionError):
            EngineConfig(r, mode="dynamic", proportion=0.0)
        with pytest.raises(PreconditionError):
            EngineConfig(r, mode="dynamic", proportion=1.5)

    @pytest.mark.parametrize("n, expected", [(1, 1), (4, 1), (5, 2), (8, 2), (9, 3)])
    def test_dynamic_count(self, n, expected):
        assert _cfg(mode="dynamic", proportion=0.25).accept_count(n) == expected

    def test_stage_count(self):
        assert _cfg(mode="stagewise", stage_length=3).accept_count(40) == 3
        assert _cfg().accept_count(40) == 1


class TestCalibrate:
    @pytest.mark.parametrize("mode", ["stepwise", "stagewise", "dynamic"])
    @pytest.mark.parametrize("method, options", [
        ("ols", {}),
        ("glm", {"family": "gaussian", "link": "identity"}),
        ("glm", {"family": "gamma", "link": "log"}),
    ])
    def test_strictly_decreasing_and_closed(self, method, options, mode):
        fs = _surface(1)
        if options.get("family") == "gamma":
            fs = FittingSet(fs.X, np.exp(0.3 * fs.y))
        model, trace = calibrate(fs, _cfg(method=method, mode=mode, stage_length=2, options=options))
        assert trace.is_strictly_decreasing()
        assert trace.records[0].accepted == (intercept(3),)
        assert is_downward_closed(list(model.terms))
        assert all(admissible(t, Restrictions.parse("10-221")) for t in model.terms)
        assert trace.records[-1].n_terms == len(model.terms)

    def test_gam_and_fgls_traces(self):
        fs = _surface(2, N=150)
        options = {"lambda_grid": (0.1, 10.0), "splines_per_smooth": 6}
        _, trace = calibrate(fs, _cfg("4-221", method="gam", options=options))
        assert trace.is_strictly_decreasing() and len(trace) >= 2
        _, trace = calibrate(fs, _cfg("4-221", method="fgls", options={"variance_terms": [(0, 0, 0), (1, 0, 0)]}))
        assert trace.is_strictly_decreasing() and len(trace) >= 2

    def test_finds_true_structure(self):
        model, _ = calibrate(_surface(3, noise=0.05), _cfg())
        assert {(1, 0, 0), (0, 2, 0), (1, 1, 0)} <= set(model.terms)

    @pytest.mark.parametrize("k_max", [1, 2, 3])
    def test_k_max_cap(self, k_max):
        model, trace = calibrate(_surface(4, noise=0.01), _cfg(f"{k_max}-221", mode="stagewise", stage_length=4))
        assert len(model.terms) <= k_max
        assert len(model.terms) == k_max  # strong signal fills the cap

    def test_stagewise_one_equals_stepwise(self):
        fs = _surface(5)
        _, a = calibrate(fs, _cfg())
        _, b = calibrate(fs, _cfg(mode="stagewise", stage_length=1))
        assert [(r.accepted, r.criterion, r.n_candidates) for r in a.records] == \
            [(r.accepted, r.criterion, r.n_candidates) for r in b.records]

    @pytest.mark.parametrize("mode", ["stepwise", "dynamic"])
    def test_parallel_is_deterministic(self, mode):
        fs = _surface(6)
        serial = calibrate(fs, _cfg(mode=mode))[1]
        with ThreadPoolExecutor(max_workers=4) as pool:
            parallel = calibrate(fs, _cfg(mode=mode), executor=pool)[1]
        assert serial.to_csv() == parallel.to_csv()
        assert calibrate(fs, _cfg(mode=mode), threads=3)[1].to_csv() == serial.to_csv()

    def test_trace_csv(self):
        _, trace = calibrate(_surface(7), _cfg("3-221"))
        lines = trace.to_csv().splitlines()
        assert lines[0] == "iteration,k,accepted,criterion,criterion_before,candidates"
        assert lines[1].startswith("0,1,1,") and lines[1].endswith(",,0")
        assert len(lines) == len(trace) + 1

    @settings(max_examples=15, deadline=None)
    @given(st.integers(0, 10_000), st.sampled_from(["stepwise", "stagewise", "dynamic"]))
    def test_invariants_hold_for_random_data(self, seed, mode):
        rng = np.random.default_rng(seed)
        fs, _, _ = make_linear_data(rng, 60, 2, noise=0.5)
        model, trace = calibrate(fs, _cfg("6-221", mode=mode, stage_length=2, proportion=0.5))
        assert trace.is_strictly_decreasing()
        assert is_downward_closed(list(model.terms))
        assert len(model.terms) <= 6


class TestMonteCarlo:
    def test_pure_noise_stays_at_intercept(self):
        stops = 0
        for seed in range(100):
            rng = np.random.default_rng(seed)
            fs = FittingSet(rng.uniform(-1, 1, (200, 1)), rng.normal(0, 1, 200))
            model, _ = calibrate(fs, _cfg())
            stops += len(model.terms) == 1
        assert stops >= 80

    @staticmethod
    def _linear_runs(n):
        contain = exclude = 0
        for seed in range(n):
            rng = np.random.default_rng(seed)
            X = rng.uniform(-1, 1, (200, 3))
            fs = FittingSet(X, 1 + 2 * X[:, 0] + 3 * X[:, 1] + rng.normal(0, 0.1, 200))
            terms = set(calibrate(fs, _cfg())[0].terms)
            contain += {(1, 0, 0), (0, 1, 0)} <= terms
            exclude += (0, 0, 1) not in terms
        return contain, exclude

    def test_signal_terms_selected(self):
        contain, exclude = self._linear_runs(60)
        assert contain == 60
        assert exclude >= 45

    @pytest.mark.xfail(strict=True, reason="AIC admits a null term with probability ~0.16; see decisions ledger")
    def test_null_term_excluded_95_percent(self):
        contain, exclude = self._linear_runs(60)
        assert contain >= 57 and exclude >= 57


def _toy_binding(values, fail=()):
    """Score is a fixed function of the term set so that ties are exact."""
    def fit(fs, terms, parent=None):
        if terms[-1] in fail:
            raise RankDeficiencyError("forced")
        return tuple(terms)

    def score(terms):
        return 10.0 - sum(values.get(t, 0.0) for t in terms)
    return Binding(fit, score, "toy")


class TestTiesAndFailures:
    fs = FittingSet(np.zeros((20, 2)), np.zeros(20))

    def test_tie_goes_to_smaller_term(self):
        b = _toy_binding({(1, 0): 1.0, (0, 1): 1.0})
        model, trace = _calibrate_monomial(self.fs, _cfg("2-111"), b, None)
        assert model == ((0, 0), (0, 1))
        assert trace.records[1].accepted == ((0, 1),)

    def test_failing_candidate_is_skipped(self):
        b = _toy_binding({(1, 0): 2.0, (0, 1): 1.0}, fail={(1, 0)})
        model, _ = _calibrate_monomial(self.fs, _cfg("2-111"), b, None)
        assert model == ((0, 0), (0, 1))

    def test_intercept_failure_is_fatal(self):
        b = _toy_binding({}, fail={(0, 0)})
        with pytest.raises(ProximaError, match="intercept-only"):
            _calibrate_monomial(self.fs, _cfg("2-111"), b, None)

    def test_joint_refit_fallback(self):
        # each term helps alone, together they hurt: only the best single term is kept
        table = {((0, 0),): 10.0, ((0, 0), (1, 0)): 8.0, ((0, 0), (0, 1)): 8.5}
        b = Binding(lambda fs, terms, parent=None: tuple(terms), lambda m: table.get(m, 12.0), "toy")
        model, trace = _calibrate_monomial(self.fs, _cfg("3-111", mode="stagewise", stage_length=2), b, None)
        assert model == ((0, 0), (1, 0))
        assert trace.records[1].accepted == ((1, 0),)
        assert trace.criteria == [10.0, 8.0]

    def test_no_monomial_binding_for_mars(self):
        with pytest.raises(PreconditionError):
            make_binding(_cfg(method="mars"))

    def test_empty_trace(self):
        assert len(SelectionTrace("ols", "aic")) == 0


class TestExhaustive:
    def test_intercept_universe(self):
        rng = np.random.default_rng(8)
        fs = FittingSet(rng.uniform(-1, 1, (50, 1)), rng.normal(size=50))
        model, score = exhaustive_reference(fs, _cfg("5-000"))
        assert model.terms == ((0,),)
        assert score == aic_ols(fit_ols(fs, [(0,)]))

    def test_one_helpful_term(self):
        rng = np.random.default_rng(0)
        x = rng.uniform(-1, 1, 100)
        fs = FittingSet(x[:, None], 2 * x + rng.normal(0, 0.1, 100))
        model, _ = exhaustive_reference(fs, _cfg("5-111"))
        assert model.terms == ((0,), (1,))

    def test_universe_too_large(self):
        with pytest.raises(PreconditionError):
            exhaustive_reference(_surface(0, D=3), _cfg("20-443"))

    @pytest.mark.parametrize("seed", range(6))
    def test_greedy_never_beats_exhaustive(self, seed):
        fs = _surface(seed, N=120, D=2, noise=0.5)
        cfg = _cfg("10-221")
        greedy, trace = calibrate(fs, cfg)
        best, score = exhaustive_reference(fs, cfg)
        assert trace.criteria[-1] >= score - 1e-9
        assert is_downward_closed(list(best.terms))
