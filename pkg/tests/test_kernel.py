import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from proxima.basis import design_matrix
from proxima.data import FittingSet
from proxima.errors import PreconditionError
from proxima.kernel import (BW_HIGH, BW_LOW, EmptyNeighborhoodError, HatDiagnostics, KernelModel, KernelSpec,
                            aic_hurvich, basis_terms, hat_trace, loocv, predict_lc, predict_ll,
                            select_bandwidths, stride_subsample)
from proxima.basis import Restrictions

ALL_SPECS = [KernelSpec(s, o) for s in ("gaussian", "epanechnikov", "uniform") for o in (2, 4)]
LINE = ((0,), (1,))
PLANE = ((0, 0), (1, 0), (0, 1))


def _noisy_plane(seed, N=120):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1, 1, (N, 2))
    y = np.sin(2 * X[:, 0]) + X[:, 1] ** 2 + rng.normal(0, 0.1, N)
    return FittingSet(X, y)


def naive_ll(fs, terms, bw, kernel, targets):
    """Oracle: one weighted least-squares solve per target with explicit weights."""
    Z = design_matrix(terms, fs.X)
    Zt = design_matrix(terms, targets)
    out = []
    for z0 in Zt:
        w = np.prod([kernel((Z[:, k + 1] - z0[k + 1]) / bw[k]) for k in range(len(bw))], axis=0)
        # normal equations: order-4 weights can be negative
        beta = np.linalg.solve(Z.T @ (Z * w[:, None]), Z.T @ (w * fs.y))
        out.append(z0 @ beta)
    return np.array(out)


class TestKernelSpec:
    @pytest.mark.parametrize("spec", ALL_SPECS, ids=str)
    def test_moments(self, spec):
        lim = np.inf if spec.shape == "gaussian" else 1.0
        m0 = integrate.quad(lambda u: spec(u), -lim, lim)[0]
        m2 = integrate.quad(lambda u: u * u * spec(u), -lim, lim)[0]
        assert m0 == pytest.approx(1.0, abs=1e-8)
        if spec.order == 4:
            assert m2 == pytest.approx(0.0, abs=1e-8)
        else:
            assert m2 > 0

    @pytest.mark.parametrize("spec", ALL_SPECS, ids=str)
    def test_symmetric_and_peaked(self, spec):
        u = np.linspace(0, 3, 61)
        np.testing.assert_allclose(spec(u), spec(-u))
        assert np.all(spec(u) <= spec(0.0) + 1e-15)

    def test_unknown(self):
        with pytest.raises(PreconditionError):
            KernelSpec("triangle")
        with pytest.raises(PreconditionError):
            KernelSpec("gaussian", 6)

    def test_product_weights_rescaling_keeps_ratios(self):
        spec = KernelSpec()
        Z = np.array([[0.0], [0.5], [3.0]])
        w = spec.product_weights(np.array([[0.0]]), Z, [0.01])[0]
        assert w[0] == 1.0 and w[1] == 0.0  # underflow is exact zero, never NaN
        w = spec.product_weights(np.array([[0.0]]), Z, [1.0])[0]
        np.testing.assert_allclose(w / w[0], spec(Z[:, 0]) / spec(0.0))


class TestModel:
    def test_bandwidth_count(self):
        fs = _noisy_plane(0)
        with pytest.raises(PreconditionError):
            KernelModel(PLANE, [1.0], "ll", KernelSpec(), fs)

    def test_positive_bandwidths(self):
        with pytest.raises(PreconditionError):
            KernelModel(LINE, [0.0], "lc", KernelSpec(), _noisy_plane(0))

    def test_intercept_first(self):
        with pytest.raises(PreconditionError):
            KernelModel(((1, 0),), [], "lc", KernelSpec(), _noisy_plane(0))


class TestLocalConstant:
    def test_huge_bandwidth_is_mean(self):
        fs = _noisy_plane(1)
        m = KernelModel(PLANE, [1e8, 1e8], "lc", KernelSpec(), fs)
        np.testing.assert_allclose(m.predict(fs.X[:5]), fs.y.mean(), atol=1e-6)

    def test_single_point(self):
        fs = FittingSet(np.array([[0.2]]), np.array([7.0]))
        m = KernelModel(LINE, [0.5], "lc", KernelSpec(), fs)
        assert predict_lc(m, fs, [0.9]) == 7.0

    def test_empty_neighbourhood(self):
        fs = FittingSet(np.linspace(-1, 1, 11)[:, None], np.arange(11.0))
        m = KernelModel(LINE, [0.2], "lc", KernelSpec("epanechnikov"), fs)
        with pytest.raises(EmptyNeighborhoodError, match="empty neighborhood"):
            predict_lc(m, fs, [2.0])

    def test_intercept_factor_cancels(self):
        fs = _noisy_plane(2, N=60)
        spec = KernelSpec()
        bw = np.array([0.3, 0.5])
        targets = np.array([[0.1, -0.2], [0.7, 0.4]])
        Z = design_matrix(PLANE, fs.X)
        Zt = design_matrix(PLANE, targets)
        got = KernelModel(PLANE, bw, "lc", spec, fs).predict(targets)
        for lam0 in (0.01, 1.0, 50.0):
            ref = []
            for z0 in Zt:
                w = spec((Z[:, 0] - z0[0]) / lam0)
                for k in (1, 2):
                    w = w * spec((Z[:, k] - z0[k]) / bw[k - 1])
                ref.append(w @ fs.y / w.sum())
            np.testing.assert_allclose(got, ref, rtol=1e-12)


class TestLocalLinear:
    def test_intercept_only_equals_lc(self):
        fs = _noisy_plane(3)
        ll = KernelModel(((0, 0),), [], "ll", KernelSpec(), fs)
        lc = KernelModel(((0, 0),), [], "lc", KernelSpec(), fs)
        np.testing.assert_allclose(ll.predict(fs.X[:10]), lc.predict(fs.X[:10]), atol=1e-12)

    @pytest.mark.parametrize("bw", [0.05, 0.3, 10.0])
    def test_exact_linear_data(self, bw):
        x = np.linspace(-1, 1, 50)
        fs = FittingSet(x[:, None], 2 + 3 * x)
        m = KernelModel(LINE, [bw], "ll", KernelSpec(), fs)
        t = np.array([[-0.9], [0.05], [0.77]])
        np.testing.assert_allclose(m.predict(t), 2 + 3 * t[:, 0], atol=1e-8)

    def test_huge_bandwidth_is_ols(self):
        fs = _noisy_plane(4)
        m = KernelModel(PLANE, [1e8, 1e8], "ll", KernelSpec(), fs)
        Z = design_matrix(PLANE, fs.X)
        beta = np.linalg.lstsq(Z, fs.y, rcond=None)[0]
        np.testing.assert_allclose(m.predict(fs.X[:7]), Z[:7] @ beta, atol=1e-6)

    @pytest.mark.parametrize("spec", [KernelSpec(), KernelSpec("epanechnikov"), KernelSpec("gaussian", 4)],
                             ids=str)
    def test_batched_matches_naive_oracle(self, spec):
        fs = _noisy_plane(5)
        bw = np.array([0.6, 0.8])
        targets = np.random.default_rng(9).uniform(-0.8, 0.8, (15, 2))
        got = KernelModel(PLANE, bw, "ll", spec, fs).predict(targets)
        np.testing.assert_allclose(got, naive_ll(fs, PLANE, bw, spec, targets), rtol=1e-9, atol=1e-10)

    def test_single_target_route_matches_batched(self):
        fs = _noisy_plane(6)
        m = KernelModel(PLANE, [0.4, 0.7], "ll", KernelSpec(), fs)
        for x in fs.X[:5]:
            assert predict_ll(m, fs, x) == pytest.approx(m.predict(x), rel=1e-10)

    def test_local_rank_deficiency(self):
        x = np.concatenate([np.full(10, -1.0), np.full(10, 1.0)])
        fs = FittingSet(x[:, None], x)
        m = KernelModel(LINE, [0.01], "ll", KernelSpec(), fs)
        with pytest.raises(Exception, match="dependent|rank"):
            m.predict(np.array([[-1.0]]))


class TestHat:
    def test_lc_limits(self):
        fs = _noisy_plane(7, N=50)
        wide = hat_trace(KernelModel(PLANE, [1e8, 1e8], "lc", KernelSpec(), fs))
        narrow = hat_trace(KernelModel(PLANE, [1e-4, 1e-4], "lc", KernelSpec(), fs))
        assert wide.trace_H == pytest.approx(1.0, abs=1e-6)
        assert narrow.trace_H == pytest.approx(50.0, abs=1e-6)

    def test_single_point(self):
        fs = FittingSet(np.array([[0.0]]), np.array([1.0]))
        assert hat_trace(KernelModel(LINE, [1.0], "lc", KernelSpec(), fs)).trace_H == 1.0

    def test_ll_against_explicit_hat_matrix(self):
        fs = _noisy_plane(8, N=40)
        bw = np.array([0.5, 0.9])
        spec = KernelSpec()
        m = KernelModel(PLANE, bw, "ll", spec, fs)
        Z = design_matrix(PLANE, fs.X)
        H = np.empty((40, 40))
        for i, z0 in enumerate(Z):
            w = spec((Z[:, 1] - z0[1]) / bw[0]) * spec((Z[:, 2] - z0[2]) / bw[1])
            H[i] = z0 @ np.linalg.solve(Z.T @ (Z * w[:, None]), Z.T * w)
        diag = hat_trace(m)
        assert diag.trace_H == pytest.approx(np.trace(H), rel=1e-10)
        assert diag.sigma2 == pytest.approx(np.mean((fs.y - H @ fs.y) ** 2), rel=1e-10)


class TestCriteria:
    def test_hurvich_hand_value(self):
        assert aic_hurvich(HatDiagnostics(1.0, 1.0), 100) == pytest.approx(1.04124, abs=1e-4)

    def test_hurvich_domain(self):
        with pytest.raises(PreconditionError):
            aic_hurvich(HatDiagnostics(98.0, 1.0), 100)

    def test_hurvich_variance_scaling(self):
        a = aic_hurvich(HatDiagnostics(3.0, 0.7), 100)
        b = aic_hurvich(HatDiagnostics(3.0, 0.7 * math.e), 100)
        assert b - a == pytest.approx(1.0, abs=1e-12)

    def test_loocv_two_points(self):
        fs = FittingSet(np.array([[0.0], [0.5]]), np.array([0.0, 1.0]))
        assert loocv(KernelModel(LINE, [2.0], "lc", KernelSpec("uniform"), fs)) == 1.0

    def test_loocv_constant_response(self):
        fs = FittingSet(np.linspace(-1, 1, 20)[:, None], np.full(20, 3.0))
        assert loocv(KernelModel(LINE, [0.3], "lc", KernelSpec(), fs)) == pytest.approx(0.0, abs=1e-24)

    def test_loocv_duplicates_help(self):
        fs = _noisy_plane(9, N=60)
        dup = FittingSet(np.vstack([fs.X, fs.X]), np.concatenate([fs.y, fs.y]))
        for mode in ("lc", "ll"):
            m = KernelModel(PLANE, [0.4, 0.4], mode, KernelSpec(), fs)
            assert loocv(m, dup) < loocv(m)

    @pytest.mark.parametrize("mode", ["lc", "ll"])
    def test_loocv_against_refits(self, mode):
        fs = _noisy_plane(10, N=30)
        m = KernelModel(PLANE, [0.5, 0.6], mode, KernelSpec(), fs)
        errs = []
        for i in range(30):
            keep = np.arange(30) != i
            sub = fs.subset(np.flatnonzero(keep))
            errs.append(fs.y[i] - KernelModel(PLANE, m.bandwidths, mode, m.kernel, sub).predict(fs.X[i]))
        assert loocv(m) == pytest.approx(np.mean(np.square(errs)), rel=1e-10)


class TestBandwidthSelection:
    @pytest.mark.parametrize("criterion", ["aic", "loocv"])
    def test_interior_on_noisy_linear_data(self, criterion):
        inside = 0
        for seed in range(20):
            rng = np.random.default_rng(seed)
            x = rng.uniform(-1, 1, 200)
            fs = FittingSet(x[:, None], 1 + 2 * x + rng.normal(0, 0.3, 200))
            lam = select_bandwidths(fs, LINE, "lc", criterion=criterion)[0]
            r = np.ptp(x)
            inside += BW_LOW * r * 1.0001 < lam < BW_HIGH * r / 1.0001
        assert inside >= 18

    def test_too_small_fraction(self):
        with pytest.raises(PreconditionError):
            select_bandwidths(_noisy_plane(0, N=100), PLANE, bw_fraction=0.2)

    def test_deterministic(self):
        fs = _noisy_plane(11, N=150)
        a = select_bandwidths(fs, PLANE, "ll", bw_fraction=0.5)
        b = select_bandwidths(fs, PLANE, "ll", bw_fraction=0.5)
        np.testing.assert_array_equal(a, b)

    @given(st.integers(1, 500), st.floats(0.01, 1.0))
    def test_stride_subsample(self, n, frac):
        idx = stride_subsample(n, frac)
        assert len(idx) == math.ceil(frac * n)
        assert len(set(idx.tolist())) == len(idx) and idx.min() >= 0 and idx.max() < n
        if frac == 1.0:
            np.testing.assert_array_equal(idx, np.arange(n))


class TestBasisTerms:
    def test_linear(self):
        terms, trace = basis_terms(_noisy_plane(0), "linear", Restrictions.parse("10-221"))
        assert terms == PLANE and len(trace) == 1

    def test_combined_contains_linear(self):
        terms, _ = basis_terms(_noisy_plane(0), "combined:3", Restrictions.parse("10-221"))
        assert set(PLANE) <= set(terms) and terms[0] == (0, 0)

    def test_unknown(self):
        with pytest.raises(PreconditionError):
            basis_terms(_noisy_plane(0), "cubic", Restrictions.parse("10-221"))
