import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from proxima.basis import (Restrictions, admissible, admissible_universe, design_matrix, format_term,
                           intercept, is_downward_closed, marginality_candidates, parse_term)
from proxima.errors import ParseError, PreconditionError

R443 = Restrictions(150, 4, 4, 3)


def brute_candidates(current, r, D):
    """Oracle: scan every term up to the degree cap."""
    out = []
    for t in itertools.product(range(r.d2 + 1), repeat=D):
        if t in current or not admissible(t, r):
            continue
        lowered = [t[:d] + (t[d] - 1,) + t[d + 1:] for d in range(D) if t[d] > 0]
        if all(s in current for s in lowered):
            out.append(t)
    return sorted(out)


restrictions = st.builds(
    lambda d3, a, b: Restrictions(50, d3 + a, d3 + a + b, d3),
    st.integers(0, 2), st.integers(0, 2), st.integers(0, 2),
)


class TestRestrictions:
    def test_parse_compact(self):
        assert Restrictions.parse("150-443") == Restrictions(150, 4, 4, 3)

    def test_parse_comma_form(self):
        r = Restrictions.parse("40-12,12,5")
        assert (r.k_max, r.d1, r.d2, r.d3) == (40, 12, 12, 5)
        assert str(r) == "40-12,12,5"

    @pytest.mark.parametrize("text", ["150", "150-44", "x-443", "150-4,4"])
    def test_parse_rejects(self, text):
        with pytest.raises(ParseError):
            Restrictions.parse(text)

    def test_k_max_positive(self):
        with pytest.raises(PreconditionError):
            Restrictions(0, 1, 1, 1)

    @given(restrictions)
    def test_str_round_trip(self, r):
        assert Restrictions.parse(str(r)) == r


class TestAdmissible:
    @pytest.mark.parametrize("term, expected", [
        ((4, 0, 0), True),
        ((2, 2, 0), True),
        ((3, 2, 0), False),
        ((4, 1, 0), False),
        ((3, 1, 0), True),
        ((0, 0, 0), True),
        ((5, 0, 0), False),
    ])
    def test_examples(self, term, expected):
        assert admissible(term, R443) is expected


class TestMarginalityCandidates:
    def test_intercept_gives_all_linear_terms(self):
        cands = marginality_candidates({intercept(15)}, R443, 15)
        assert len(cands) == 15
        assert all(sum(c) == 1 for c in cands)

    def test_two_dimensional_example(self):
        cands = marginality_candidates({(0, 0), (1, 0)}, R443, 2)
        assert cands == [(0, 1), (2, 0)]

    def test_saturated_set_has_no_candidates(self):
        r = Restrictions(10, 2, 2, 1)
        assert marginality_candidates(set(admissible_universe(r, 2)), r, 2) == []

    def test_requires_intercept(self):
        with pytest.raises(PreconditionError):
            marginality_candidates({(1, 0)}, R443, 2)

    def test_lexicographic_order(self):
        cands = marginality_candidates({(0, 0, 0), (1, 0, 0), (0, 0, 1)}, R443, 3)
        assert cands == sorted(cands)

    @given(st.integers(1, 8), restrictions)
    def test_linear_count_equals_dimension(self, D, r):
        if r.d1 < 1 or r.d2 < 1:
            return
        assert len(marginality_candidates({intercept(D)}, r, D)) == D

    @settings(max_examples=60, deadline=None)
    @given(st.integers(1, 4), restrictions, st.lists(st.integers(0, 10 ** 6), min_size=0, max_size=8))
    def test_matches_brute_force_along_random_paths(self, D, r, picks):
        current = {intercept(D)}
        for p in picks:
            cands = marginality_candidates(current, r, D)
            assert cands == brute_candidates(current, r, D)
            assert len(set(cands)) == len(cands)
            assert not set(cands) & current
            if not cands:
                break
            current.add(cands[p % len(cands)])
            assert is_downward_closed(current)


class TestUniverse:
    def test_counts(self):
        # 2 dims, d1=d2=2, d3=1: 1, x1, x2, x1^2, x2^2, x1*x2
        assert len(admissible_universe(Restrictions(9, 2, 2, 1), 2)) == 6

    def test_limit(self):
        with pytest.raises(PreconditionError):
            admissible_universe(R443, 6, limit=15)


class TestDesignMatrix:
    def test_example_row(self):
        Z = design_matrix([(0, 0), (1, 0), (0, 2)], [[2.0, 3.0]])
        np.testing.assert_array_equal(Z, [[1.0, 2.0, 9.0]])

    def test_intercept_column_with_zero_scenarios(self):
        Z = design_matrix([(0, 0), (1, 1)], np.zeros((3, 2)))
        np.testing.assert_array_equal(Z, [[1.0, 0.0]] * 3)

    def test_dimension_mismatch(self):
        with pytest.raises(PreconditionError):
            design_matrix([(1, 0, 0)], np.zeros((2, 2)))

    @given(st.lists(st.tuples(st.integers(0, 4), st.integers(0, 4)), min_size=1, max_size=6),
           st.lists(st.tuples(st.floats(-2, 2), st.floats(-2, 2)), min_size=1, max_size=5))
    def test_matches_power_products(self, terms, X):
        Z = design_matrix(terms, X)
        oracle = np.array([[x1 ** a * x2 ** b for a, b in terms] for x1, x2 in X])
        np.testing.assert_allclose(Z, oracle, rtol=1e-12, atol=1e-300)


class TestTermText:
    def test_format(self):
        assert format_term((2, 0, 1)) == "x1^2*x3"
        assert format_term((0, 0)) == "1"

    def test_parse_errors(self):
        with pytest.raises(ParseError):
            parse_term("x4", 3)
        with pytest.raises(ParseError):
            parse_term("y1", 3)

    @given(st.lists(st.integers(0, 5), min_size=1, max_size=6))
    def test_round_trip(self, exps):
        t = tuple(exps)
        assert parse_term(format_term(t), len(t)) == t
