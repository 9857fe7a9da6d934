from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hetevt.exceptions import DataError
from hetevt.heterogeneity import (
    HeterogeneityCurve,
    curve_from_function,
    delta_hat,
    homogeneous_reference,
    lambda_curve,
    lambda_hat,
    m_lambda,
    ordinal_ranks,
    r_hat,
    r_hat_grid,
    weights,
)
from hetevt.ingest import SpeedSample

from oracles import lambda_double_loop, m_lambda_quadrature, r_double_loop, random_grouped_sample


@pytest.fixture
def toy():
    """Athlete 1 holds ranks {4, 3}, athlete 2 holds {2, 1}."""
    s = SpeedSample([4.0, 3.0, 2.0, 1.0], [0, 2], [2, 2])
    return s, ordinal_ranks(s.values)


def test_toy_enumeration(toy):
    s, r = toy
    assert r.tolist() == [4, 3, 2, 1]
    assert lambda_hat(s, r, 2, 1.0) == 1.0
    assert lambda_hat(s, r, 2, 0.5) == 1.0
    assert r_hat(s, r, 2, 1.0, 1.0) == 1.0


def test_toy_is_ordered_pairs(toy):
    # unordered counting would give 0.5 here
    s, r = toy
    assert lambda_hat(s, r, 1, 1.0) == 0.0
    assert lambda_hat(s, r, 2, 1.0) == float(lambda_double_loop(s, r, 2, Fraction(1)))


def test_singletons_rejected():
    s = SpeedSample([1.0, 2.0, 3.0], [0, 2], [2, 1])
    with pytest.raises(DataError, match="prepare_for_lambda"):
        lambda_hat(s, ordinal_ranks(s.values), 1, 1.0)


U_CHOICES = [Fraction(i, 20) for i in range(1, 41)]


def test_bruteforce_equivalence_twenty_samples():
    rng = np.random.default_rng(11)
    for _ in range(20):
        s = random_grouped_sample(rng)
        r = ordinal_ranks(s.values)
        for k in range(1, s.n):
            for u in U_CHOICES[::3]:
                assert lambda_hat(s, r, k, float(u)) == float(lambda_double_loop(s, r, k, u))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(U_CHOICES), st.sampled_from(U_CHOICES))
def test_r_hat_matches_double_loop(seed, x, y):
    s = random_grouped_sample(np.random.default_rng(seed))
    r = ordinal_ranks(s.values)
    k = max(1, s.n // 3)
    assert r_hat(s, r, k, float(x), float(y)) == pytest.approx(float(r_double_loop(s, r, k, x, y)), abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_structural_properties(seed):
    rng = np.random.default_rng(seed)
    s = random_grouped_sample(rng)
    r = ordinal_ranks(s.values)
    k = int(rng.integers(1, s.n))
    grid = np.array([0.2, 0.5, 1.0, 1.7, 3.0])
    surf = r_hat_grid(s, r, k, grid, grid)
    np.testing.assert_allclose(surf, surf.T, rtol=0, atol=1e-12)
    assert np.all(np.diff(surf, axis=0) >= -1e-12) and np.all(np.diff(surf, axis=1) >= -1e-12)
    u = np.linspace(0.05, 2.0, 40)
    lam = lambda_hat(s, r, k, u)
    assert np.all(np.diff(lam) <= 1e-12)
    assert np.all((lam >= 0) & (lam <= s.n / k))
    for v in u:
        assert lambda_hat(s, r, k, v) == pytest.approx(r_hat(s, r, k, 1.0, 1.0 / v), abs=1e-12)


def test_curve_grid_end_equals_direct():
    rng = np.random.default_rng(2)
    s = random_grouped_sample(rng, 12)
    r = ordinal_ranks(s.values)
    c = lambda_curve(s, r, 3, np.linspace(0.1, 1.0, 10))
    assert c.lambda_hat[-1] == c.lambda_at_1 == lambda_hat(s, r, 3, 1.0)


class TestHomogeneousReference:
    def test_large_sample_value(self):
        assert homogeneous_reference(25173, 1000, 1.0) == pytest.approx(999 / 25172)
        assert homogeneous_reference(25173, 1000, 1.0) == pytest.approx(0.0397, abs=1e-4)

    def test_saturation(self):
        assert homogeneous_reference(100, 10, 0.01) == 1.0

    def test_k_n_minus_1(self):
        assert homogeneous_reference(50, 49, 1.0) == pytest.approx(48 / 49)

    def test_matches_exchangeable_average(self):
        """Mean of lambda-hat over random rank allocations agrees with the reference."""
        rng = np.random.default_rng(9)
        n, k, sizes = 60, 12, [3] * 20
        offsets = np.arange(0, n, 3)
        u = np.array([0.4, 0.7, 1.0])
        acc = np.zeros(3)
        reps = 3000
        for _ in range(reps):
            s = SpeedSample(rng.permutation(n) + 1.0, offsets, sizes)
            acc += lambda_hat(s, ordinal_ranks(s.values), k, u)
        np.testing.assert_allclose(acc / reps, homogeneous_reference(n, k, u), atol=0.01)


class TestMLambda:
    def test_constant(self):
        c = curve_from_function(lambda u: np.full_like(np.asarray(u, float), 0.3))
        for x in (-0.5, 0.0, 0.4, 2.0):
            assert m_lambda(c, x) == pytest.approx(0.3, abs=1e-9)

    def test_linear_decay(self):
        c = curve_from_function(lambda u: 1 - np.asarray(u))
        assert m_lambda(c, 0.0) == pytest.approx(0.5, abs=1e-6)
        assert m_lambda(c, 1.0) == pytest.approx(1 / 3, abs=1e-6)

    def test_domain(self):
        c = curve_from_function(lambda u: 1 - np.asarray(u))
        with pytest.raises(ValueError):
            m_lambda(c, -1.0)

    def test_exact_step_matches_quadrature(self):
        rng = np.random.default_rng(4)
        s = random_grouped_sample(rng, 12)
        r = ordinal_ranks(s.values)
        k = 4
        curve = lambda_curve(s, r, k)
        step = lambda u: lambda_hat(s, r, k, u)
        for x in (0.2, 0.4, 1.0):
            assert m_lambda(curve, x) == pytest.approx(m_lambda_quadrature(step, x), abs=1e-7)

    def test_exact_vs_tabulated(self):
        from hetevt.simulation import generate, two_group_scenario

        s = generate(two_group_scenario(4000)).sample
        r = ordinal_ranks(s.values)
        exact = lambda_curve(s, r, 200)
        grid = HeterogeneityCurve(200, exact.u_grid, exact.lambda_hat, exact.lambda_at_1)
        grid_fine = lambda_curve(s, r, 200, np.linspace(1 / 20000, 1, 20000))
        tab = HeterogeneityCurve(200, grid_fine.u_grid, grid_fine.lambda_hat, grid_fine.lambda_at_1)
        assert m_lambda(tab, 0.2) == pytest.approx(m_lambda(exact, 0.2), abs=2e-3)
        assert not grid.is_exact and exact.is_exact


class TestWeights:
    def test_zero(self):
        assert weights(0.0) == (1.0, 0.0, 0.0)

    def test_minus_point_two(self):
        w = weights(-0.2)
        np.testing.assert_allclose(w, (4.032 / 1.76, 0.864 / 1.76, -3.136 / 1.76), rtol=1e-12)
        np.testing.assert_allclose(w, (2.2909, 0.4909, -1.7818), atol=1e-4)

    @given(st.floats(-2, 0))
    def test_sum_to_one(self, g):
        assert abs(sum(weights(g)) - 1) <= 1e-12


class TestDeltaHat:
    def test_gamma_zero_gives_lambda_one(self):
        c = curve_from_function(lambda u: 0.6 - 0.2 * np.asarray(u))
        d = delta_hat(c, 0.0)
        assert d.delta_raw == pytest.approx(c.lambda_at_1)

    def test_zero_curve(self):
        c = curve_from_function(lambda u: np.zeros_like(np.asarray(u, float)))
        for g in (-0.5, -0.2, 0.0):
            assert delta_hat(c, g).delta == 0.0

    def test_clamp_flags(self):
        c = curve_from_function(lambda u: np.full_like(np.asarray(u, float), 1.5))
        with pytest.warns(Warning, match="clamped"):
            d = delta_hat(c, -0.2)
        assert d.clamped and d.delta == 0.999 and d.delta_raw == pytest.approx(1.5)

    def test_gamma_domain(self):
        c = curve_from_function(lambda u: 1 - np.asarray(u))
        with pytest.raises(ValueError):
            delta_hat(c, 0.6)
