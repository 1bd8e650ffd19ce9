from types import SimpleNamespace

import numpy as np
import pytest

from coxtail import (
    AggregateModel,
    SelectionError,
    SelectionParams,
    SurvivalSample,
    aggregate_adaptive,
    aggregate_simple,
    breslow_baseline,
    fit_semiparametric,
    select_threshold,
)
from coxtail.aggregation import min_admissible_m0
from coxtail.models import model_from_dict


def ten_point():
    t = [20.0, 14.0, 11.0, 9.0, 7.0, 5.5, 4.0, 3.0, 2.0, 1.0]
    d = [1, 1, 0, 1, 1, 1, 1, 0, 1, 1]
    return SurvivalSample(t, d)


def hand_cum_hazard(times, status, tau, x):
    """Baseline cumulative hazard with a Pareto tail, by explicit loops (beta = 0)."""
    def na(u):
        return sum(
            di / sum(1 for tj in times if tj >= ti) for ti, di in zip(times, status) if ti <= u
        )

    above = [(ti, di) for ti, di in zip(times, status) if ti > tau]
    theta = sum(np.log(ti / tau) for ti, _ in above) / sum(di for _, di in above)
    if x <= tau:
        return na(x)
    return na(tau) + np.log(x / tau) / theta


class TestSimple:
    def test_hand_two_thresholds(self):
        s = ten_point()
        agg = aggregate_simple(s, np.zeros(0), m0=3, M=2)
        # ranks 3 and 4 -> thresholds 11 and 9
        np.testing.assert_array_equal(agg.taus, [11.0, 9.0])
        for x in (0.5, 3.5, 9.0, 10.0, 11.0, 12.5, 30.0, 400.0):
            h = (hand_cum_hazard(s.times, s.status, 11.0, x) + hand_cum_hazard(s.times, s.status, 9.0, x)) / 2
            assert abs(agg.survival(x) - np.exp(-h)) < 1e-12

    def test_single_component_is_fixed_threshold(self, heavy_sample):
        beta = [-0.5]
        k = 37
        agg = aggregate_simple(heavy_sample, beta, m0=k, M=1)
        tau = heavy_sample.times[heavy_sample.order[k - 1]]
        fixed = fit_semiparametric(heavy_sample, beta, tau)
        x = np.geomspace(0.1, 1e5, 500)
        np.testing.assert_allclose(agg.survival(x, [0.4]), fixed.survival(x, [0.4]), rtol=1e-12, atol=0)

    def test_geometric_mean_identity(self, heavy_sample):
        beta = [-0.5]
        agg = aggregate_simple(heavy_sample, beta, m0=20, M=5)
        x = np.geomspace(0.5, 1e4, 100)
        comps = [fit_semiparametric(heavy_sample, beta, tau) for tau in agg.taus]
        prod = np.prod([c.survival(x, [0.2]) for c in comps], axis=0) ** (1 / 5)
        np.testing.assert_allclose(agg.survival(x, [0.2]), prod, rtol=1e-12)

    def test_m0_fraction(self, heavy_sample):
        agg = aggregate_simple(heavy_sample, [-0.5], m0_frac=0.06, M=10)
        t_sorted = heavy_sample.times[heavy_sample.order]
        np.testing.assert_array_equal(agg.taus, t_sorted[23:33])  # round(0.06 * 400) = 24

    def test_default_m0_is_smallest_admissible(self):
        s = SurvivalSample([9.0, 8.0, 7.0, 6.0, 5.0], [0, 0, 1, 1, 1])
        assert min_admissible_m0(s) == 4
        assert aggregate_simple(s, np.zeros(0), M=2).taus[0] == 6.0

    def test_precondition_errors(self, heavy_sample):
        with pytest.raises(SelectionError, match="below"):
            aggregate_simple(heavy_sample, [-0.5], m0=1, M=2)
        with pytest.raises(SelectionError, match="exceeds"):
            aggregate_simple(heavy_sample, [-0.5], m0=395, M=10)
        with pytest.raises(ValueError):
            aggregate_simple(heavy_sample, [-0.5], M=0)


class TestAdaptive:
    def test_weights_from_profile(self, heavy_sample):
        sel = SimpleNamespace(profile=np.array([[10.0, 1.0], [12.0, 4.0], [15.0, 0.5]]))
        agg = aggregate_adaptive(heavy_sample, [-0.5], sel, M=2)
        np.testing.assert_allclose(agg.weights, [0.8, 0.2], rtol=1e-15)
        t_sorted = heavy_sample.times[heavy_sample.order]
        np.testing.assert_array_equal(agg.taus, [t_sorted[11], t_sorted[9]])

    def test_rank_ties_favour_smaller_l(self, heavy_sample):
        sel = SimpleNamespace(profile=np.array([[30.0, 2.0], [20.0, 2.0], [25.0, 1.0]]))
        agg = aggregate_adaptive(heavy_sample, [-0.5], sel, M=1)
        assert agg.taus[0] == heavy_sample.times[heavy_sample.order[19]]

    def test_single_component_is_adaptive_model(self, heavy_sample):
        beta = [-0.5]
        sel = select_threshold(heavy_sample, beta, SelectionParams(D=5.0))
        agg = aggregate_adaptive(heavy_sample, beta, sel, M=1)
        fixed = fit_semiparametric(heavy_sample, beta, sel.tau_hat)
        x = np.geomspace(0.1, 1e5, 300)
        np.testing.assert_allclose(agg.survival(x), fixed.survival(x), rtol=1e-12, atol=0)

    def test_weights_sum_to_one(self, heavy_sample):
        sel = select_threshold(heavy_sample, [-0.5], SelectionParams(D=5.0))
        agg = aggregate_adaptive(heavy_sample, [-0.5], sel, M=10)
        assert abs(agg.weights.sum() - 1) <= 1e-12
        assert np.all(agg.weights >= 0)

    def test_too_short_profile(self, heavy_sample):
        sel = SimpleNamespace(profile=np.array([[10.0, 1.0]]))
        with pytest.raises(SelectionError, match="M=2"):
            aggregate_adaptive(heavy_sample, [-0.5], sel, M=2)

    def test_all_zero_profile(self, heavy_sample):
        sel = SimpleNamespace(profile=np.array([[10.0, 0.0], [11.0, 0.0]]))
        with pytest.raises(SelectionError, match="no informative candidates"):
            aggregate_adaptive(heavy_sample, [-0.5], sel, M=2)


class TestAggregateModel:
    @pytest.fixture
    def agg(self, heavy_sample):
        return aggregate_simple(heavy_sample, [-0.5], m0=10, M=6)

    def test_identical_components(self, heavy_sample):
        beta = [-0.5]
        fixed = fit_semiparametric(heavy_sample, beta, float(np.quantile(heavy_sample.times, 0.9)))
        agg = AggregateModel(fixed.cox, ((fixed.tail, 1 / 3),) * 3)
        x = np.geomspace(0.1, 1e5, 200)
        np.testing.assert_allclose(agg.survival(x, [0.7]), fixed.survival(x, [0.7]), rtol=1e-14)

    def test_degenerate_weights_select_first(self, agg):
        first = AggregateModel(agg.cox, ((agg.components[0][0], 1.0),) + tuple((c, 0.0) for c, _ in agg.components[1:]))
        single = AggregateModel(agg.cox, ((agg.components[0][0], 1.0),))
        x = np.geomspace(0.1, 1e5, 200)
        np.testing.assert_array_equal(first.survival(x), single.survival(x))

    def test_covariate_power(self, agg):
        z = [-np.log(2) / 0.5]  # exp(beta z) = 2
        x = np.geomspace(0.1, 1e5, 200)
        np.testing.assert_allclose(agg.survival(x, z), agg.survival(x) ** 2, rtol=1e-13)

    def test_below_everything(self, agg):
        assert agg.survival(0.5 * agg.cox.times[0]) == 1.0

    def test_monotone_and_in_unit_interval(self, agg):
        s = agg.survival(np.geomspace(1e-3, 1e8, 10_000), [0.9])
        assert np.all(np.diff(s) <= 0)
        assert np.all((s > 0) & (s <= 1))

    def test_weight_validation(self, agg):
        comp = agg.components[0][0]
        with pytest.raises(ValueError):
            AggregateModel(agg.cox, ((comp, 0.5), (comp, 0.4)))
        with pytest.raises(ValueError):
            AggregateModel(agg.cox, ((comp, 1.5), (comp, -0.5)))

    def test_quantile_round_trip(self, agg, rng):
        for _ in range(40):
            z = [rng.uniform(-1, 1)]
            p = rng.uniform(1e-4, 0.9)
            x = agg.quantile(p, z)
            if x in agg.cox.times:
                # on a jump: survival crosses p at x
                assert agg.survival(x, z) <= p < agg.survival(np.nextafter(x, 0), z)
            else:
                assert agg.survival(x, z) == pytest.approx(p, rel=1e-9)

    def test_dict_round_trip(self, agg):
        back = model_from_dict(agg.to_dict())
        x = np.geomspace(0.1, 1e5, 100)
        np.testing.assert_array_equal(back.survival(x), agg.survival(x))
        np.testing.assert_array_equal(back.weights, agg.weights)


def test_breslow_shared_across_components(heavy_sample):
    agg = aggregate_simple(heavy_sample, [-0.5], m0=10, M=3)
    ref = breslow_baseline(heavy_sample, [-0.5])
    np.testing.assert_array_equal(agg.cox.increments, ref.increments)
