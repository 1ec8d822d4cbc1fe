import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import norm

from rssimotion.distfit import ecdf, histogram, linearity_score, quantile_map
from rssimotion.errors import EmptyInput, EmptyLevels, InputError, TooFewPoints

finite = st.floats(-1e6, 1e6, allow_nan=False)


class TestHistogram:
    def test_half_open_bins(self):
        h = histogram([0, 0.5, 1], 2)
        assert h.counts.tolist() == [1, 2]
        assert h.edges.tolist() == [0.0, 0.5, 1.0]

    def test_constant_input(self):
        h = histogram([3.0] * 7, 4)
        assert h.counts.tolist() == [7, 0, 0, 0]

    def test_empty(self):
        with pytest.raises(EmptyInput):
            histogram([], 3)

    def test_bins_must_be_positive(self):
        with pytest.raises(InputError):
            histogram([1.0], 0)

    def test_normal_draws_against_integrated_bins(self):
        v = np.random.default_rng(7).standard_normal(10_000)
        h = histogram(v, 50)
        probs = np.diff(norm.cdf(h.edges))
        # renormalize to the observed support: all draws lie inside [min, max]
        probs = probs / probs.sum()
        expected = h.total * probs
        sigma = np.sqrt(h.total * probs * (1 - probs))
        assert np.all(np.abs(h.counts - expected) <= 5 * sigma + 1)

    def test_csv(self):
        buf = io.StringIO()
        histogram([0, 0.5, 1], 2).write_csv(buf)
        assert buf.getvalue().splitlines() == ["edge,count", "0.0,1", "0.5,2", "1.0,"]


@given(st.lists(finite, min_size=1, max_size=80), st.integers(1, 30))
@settings(max_examples=200, deadline=None)
def test_histogram_invariants(values, bins):
    h = histogram(values, bins)
    assert h.counts.sum() == h.total == len(values)
    assert np.all(np.diff(h.edges) > 0)
    assert h.counts[-1] >= 1 or min(values) == max(values)


class TestEcdf:
    def test_definition(self):
        F = ecdf([3, 1, 2])
        assert F(2) == pytest.approx(2 / 3)
        assert F(0.5) == 0.0
        assert F(3) == 1.0

    def test_duplicates(self):
        assert ecdf([1, 1, 2])(1) == pytest.approx(2 / 3)

    def test_empty(self):
        with pytest.raises(EmptyInput):
            ecdf([])

    def test_quantile_is_inverse_cdf(self):
        F = ecdf([10, 20, 30, 40])
        assert F.quantile(0.25) == 10
        assert F.quantile(0.26) == 20
        assert F.quantile(0.99) == 40
        assert F.quantile([0.5, 0.75]).tolist() == [20, 30]


@given(st.lists(finite, min_size=1, max_size=60), st.lists(finite, min_size=2, max_size=20))
@settings(max_examples=200, deadline=None)
def test_ecdf_monotone_and_quantile_matches_numpy(values, xs):
    F = ecdf(values)
    xs = sorted(xs)
    fx = F(np.array(xs))
    assert np.all(np.diff(fx) >= 0)
    assert F(max(values)) == 1.0 and F(min(values) - 1.0) == 0.0
    levels = np.linspace(0.01, 0.99, 25)
    assert np.array_equal(F.quantile(levels), np.quantile(values, levels, method="inverted_cdf"))


class TestQuantileMap:
    def test_exact_scaling(self):
        x = np.random.default_rng(1).random(1000)
        fit = linearity_score(quantile_map(ecdf(x), ecdf(2 * x)))
        assert fit.slope == pytest.approx(2.0, abs=1e-12)
        assert fit.intercept == pytest.approx(0.0, abs=1e-12)
        assert fit.r_squared == pytest.approx(1.0)

    def test_uniform_ranges(self):
        rng = np.random.default_rng(2)
        a, b = 2.0, 5.0
        fit = linearity_score(quantile_map(ecdf(rng.uniform(0, a, 20_000)), ecdf(rng.uniform(0, b, 20_000))))
        assert fit.slope == pytest.approx(b / a, rel=0.02)

    def test_exponential_rates(self):
        rng = np.random.default_rng(3)
        lx, ly = 2.0, 0.5
        x = rng.exponential(1 / lx, 100_000)
        y = rng.exponential(1 / ly, 100_000)
        fit = linearity_score(quantile_map(ecdf(x), ecdf(y)))
        assert fit.slope == pytest.approx(lx / ly, rel=0.05)

    def test_empty_levels(self):
        F = ecdf([1, 2, 3])
        with pytest.raises(EmptyLevels):
            quantile_map(F, F, [])

    @pytest.mark.parametrize("levels", [[0.0, 0.5], [0.5, 1.0], [0.6, 0.4], [0.3, 0.3]])
    def test_bad_levels(self, levels):
        F = ecdf([1, 2, 3])
        with pytest.raises(InputError):
            quantile_map(F, F, levels)

    def test_csv(self):
        F = ecdf([1.0, 2.0])
        buf = io.StringIO()
        quantile_map(F, F, [0.5]).write_csv(buf)
        assert buf.getvalue() == "level,qx,qy\n0.5,1.0,1.0\n"


@given(st.lists(finite, min_size=1, max_size=50), st.lists(finite, min_size=1, max_size=50))
@settings(max_examples=150, deadline=None)
def test_quantile_map_components_non_decreasing(x, y):
    q = quantile_map(ecdf(x), ecdf(y))
    assert np.all(np.diff(q.qx) >= 0) and np.all(np.diff(q.qy) >= 0)
    assert np.all(np.diff(q.levels) > 0)


class TestLinearity:
    def _map(self, x, y):
        from rssimotion.distfit import QuantileMap

        x = np.asarray(x, float)
        return QuantileMap(np.linspace(0.1, 0.9, len(x)), x, np.asarray(y, float))

    def test_line(self):
        x = np.arange(10.0)
        fit = linearity_score(self._map(x, 3 * x + 1))
        assert (fit.slope, fit.intercept) == pytest.approx((3.0, 1.0))
        assert fit.r_squared == pytest.approx(1.0)

    def test_too_few(self):
        with pytest.raises(TooFewPoints):
            linearity_score(self._map([1, 2], [1, 2]))

    def test_uncorrelated_scatter(self):
        rng = np.random.default_rng(4)
        fit = linearity_score(self._map(rng.random(1000), rng.random(1000)))
        assert fit.r_squared < 0.1

    def test_flat_y(self):
        fit = linearity_score(self._map([1, 2, 3], [5, 5, 5]))
        assert fit.slope == 0.0 and fit.r_squared == 1.0
