import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hetevt.exceptions import NoFiniteEndpointError, SweepError
from hetevt.inference import (
    TailContext,
    extrapolation_series,
    infer,
    k_grid,
    lower_confidence_bound,
    lower_median,
    normal_quantile,
    sigma2_iid,
    stat_scale,
    summarize_rows,
    sweep,
)
from hetevt.ingest import to_time
from hetevt.simulation import generate, homogeneous_scenario
from hetevt.tail import TailFit, fit_tail, sort_ascending

from oracles import normal_cdf_by_quadrature


def hand_fit(k=100):
    return TailFit(k=k, threshold=36.0, m1=0.02, m2=0.0006, v_n=1.5, gamma=-0.48, endpoint=38.25, scale=1.08)


class TestSigma2:
    def test_zero(self):
        assert sigma2_iid(0.0) == 1.0

    @pytest.mark.parametrize("g, expected", [(-0.2, 0.628571), (-0.5, 0.525)])
    def test_values(self, g, expected):
        assert sigma2_iid(g) == pytest.approx(expected, abs=1e-6)

    def test_pole(self):
        with pytest.raises(ValueError):
            sigma2_iid(0.25)


class TestNormalQuantile:
    @pytest.mark.parametrize("p, z", [(0.975, 1.959964), (0.95, 1.644854), (0.5, 0.0)])
    def test_known(self, p, z):
        assert normal_quantile(p) == pytest.approx(z, abs=1e-6)

    @given(st.floats(0.01, 0.99))
    def test_inverts_quadrature_cdf(self, p):
        assert normal_cdf_by_quadrature(normal_quantile(p)) == pytest.approx(p, abs=1e-9)

    def test_domain(self):
        with pytest.raises(ValueError):
            normal_quantile(1.0)


class TestBound:
    def test_level_half_is_point_estimate(self):
        b = lower_confidence_bound(hand_fit(), 0.3, 0.5)
        assert b.ucb_speed == pytest.approx(38.25)
        assert b.lcb_time == pytest.approx(to_time(38.25))

    def test_hand_value(self):
        f = hand_fit()
        s = (0.48**2 / (0.02 * 1.5) + 0.48) * 10
        assert stat_scale(f) == pytest.approx(s)
        half = normal_quantile(0.95) * math.sqrt(sigma2_iid(-0.48) * 0.6) / s
        b = lower_confidence_bound(f, 0.4, 0.95)
        assert b.ucb_speed == pytest.approx(38.25 * math.exp(half), rel=1e-12)
        assert b.lcb_speed == pytest.approx(38.25 * math.exp(-half), rel=1e-12)

    def test_monotone_in_level_and_delta(self):
        f = hand_fit()
        times = [lower_confidence_bound(f, 0.0, lv).lcb_time for lv in (0.5, 0.75, 0.9, 0.95, 0.99)]
        assert np.all(np.diff(times) < 0)
        by_delta = [lower_confidence_bound(f, d, 0.95).lcb_time for d in (0.0, 0.2, 0.5, 0.9)]
        assert np.all(np.diff(by_delta) > 0)
        assert all(t < to_time(38.25) for t in by_delta)

    def test_requires_negative_gamma(self):
        f = TailFit(100, 36.0, 0.02, 0.0006, 1.5, 0.1, float("inf"), 1.08)
        with pytest.raises(NoFiniteEndpointError):
            lower_confidence_bound(f, 0.0, 0.95)

    def test_delta_domain(self):
        with pytest.raises(ValueError):
            lower_confidence_bound(hand_fit(), 1.0, 0.95)

    def test_infer_keys(self):
        res = infer(hand_fit(), 0.25, (0.75, 0.95))
        assert set(res.lcb_time) == {"0.75", "0.95"}
        assert res.delta == 0.25
        assert res.to_dict()["tail_fit"]["gamma"] == -0.48


class TestMedian:
    def test_odd(self):
        assert lower_median([9.7, 9.5, 9.6]) == 9.6

    def test_even_takes_lower_middle(self):
        assert lower_median([4, 1, 3, 2]) == 2

    def test_empty(self):
        with pytest.raises(ValueError):
            lower_median([])

    def test_summarize_empty(self):
        with pytest.raises(SweepError):
            summarize_rows([])


def test_k_grid():
    assert list(k_grid(1000, 0.03, 0.07)) == list(range(30, 71))
    assert list(k_grid(101, 0.03, 0.07, 2)) == [4, 6]
    with pytest.raises(ValueError):
        k_grid(100, 0.07, 0.03)


class TestExtrapolation:
    def test_line_anchors(self):
        f = hand_fit()
        s = extrapolation_series(f, np.linspace(30, 37, 300))
        assert s.line(0.0) == f.endpoint
        assert s.line(1.0) == pytest.approx(f.endpoint + s.slope)
        assert s.slope == pytest.approx(1.08 / -0.48 * 100**-0.48)
        assert s.speed[0] == 37.0 and len(s.rank) == 100
        np.testing.assert_allclose(s.transformed_rank, s.rank**0.48)

    def test_line_near_top_observations(self):
        sample = generate(homogeneous_scenario(20_000)).sample
        o = sort_ascending(sample.values)
        f = fit_tail(o, 1000)
        s = extrapolation_series(f, o, 200)
        resid = s.speed - s.line(s.transformed_rank)
        assert np.median(np.abs(resid)) < 0.05


@pytest.fixture(scope="module")
def sim():
    return generate(homogeneous_scenario(20_000), 3)


@pytest.mark.filterwarnings("ignore:delta clamped")
class TestSweep:
    """Homogeneous data: raw delta is negative, so clamping is expected."""

    def test_rows_and_medians(self, sim):
        res = sweep(sim.sample, levels=(0.75, 0.95))
        ks = [r.k for r in res.rows]
        assert ks[0] == 600 and ks[-1] == 1400
        assert res.median_endpoint_time == lower_median(r.endpoint_time for r in res.rows)
        assert res.median_lcb_time["0.95"] < res.median_lcb_time["0.75"] < res.median_endpoint_time

    def test_within_two_se_of_truth(self, sim):
        sc = homogeneous_scenario(20_000)
        ctx = TailContext(sim.sample)
        r = ctx.result(1000, (0.5,), with_delta=False)
        se = sc.true_endpoint * math.sqrt(r.sigma2_iid) / r.stat_scale
        assert abs(r.endpoint_speed - sc.true_endpoint) < 2 * se

    def test_context_reuse_matches(self, sim):
        ctx = TailContext(sim.sample)
        a = sweep(sim.sample, 0.04, 0.05, 5, context=ctx).summary()
        b = sweep(sim.sample, 0.04, 0.05, 5).summary()
        assert a == b
