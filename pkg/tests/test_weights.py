import math

import numpy as np
import pytest

from colbreak.daughters import DaughterSpec
from colbreak.weights import (WeightSpec, check_ratio_monotone, closed_form_theta,
                              default_y_grid, dissipation_ratio, estimate_theta,
                              eval_g, g_values, infimum_theta, resolve_theta)


class TestEval:
    def test_power(self):
        assert eval_g(WeightSpec(family="power", alpha=2.0), 3.0) == 9.0

    def test_power_exp_at_one(self):
        spec = WeightSpec(family="power_exp", alpha=2.0, lam=1.0)
        assert eval_g(spec, 1.0) == pytest.approx(math.e)

    def test_power_log_vanishes_at_origin(self):
        spec = WeightSpec(family="power_log", alpha=2.0, gamma=1.0)
        assert eval_g(spec, 1e-12) <= 1e-23

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            eval_g(WeightSpec(family="power", alpha=2.0), 0.0)


class TestConstruction:
    def test_alpha_must_exceed_one(self):
        with pytest.raises(ValueError):
            WeightSpec(family="power", alpha=1.0)
        with pytest.raises(ValueError):
            WeightSpec(family="power", alpha=0.5)

    def test_candidate_mode_allows_out_of_class(self):
        spec = WeightSpec(family="power", alpha=0.5, candidate=True)
        assert spec.alpha == 0.5

    def test_theta_range_checked(self):
        with pytest.raises(ValueError):
            WeightSpec(family="power", alpha=2.0, theta=1.5)


class TestRatioMonotone:
    SAMPLES = np.logspace(-3, 2, 200)

    def test_quadratic_passes(self):
        assert check_ratio_monotone(WeightSpec(family="power", alpha=2.0), self.SAMPLES)

    def test_sub_linear_candidate_fails(self):
        spec = WeightSpec(family="power", alpha=0.5, candidate=True)
        assert not check_ratio_monotone(spec, self.SAMPLES)

    def test_exp_family_passes(self):
        spec = WeightSpec(family="power_exp", alpha=2.0, lam=1.0)
        assert check_ratio_monotone(spec, self.SAMPLES)

    def test_requires_sorted_samples(self):
        with pytest.raises(ValueError):
            check_ratio_monotone(WeightSpec(family="power", alpha=2.0), [2.0, 1.0])


class TestTheta:
    def test_quadratic_weight_flat_daughter(self):
        weight = WeightSpec(family="power", alpha=2.0)
        daughter = DaughterSpec(family="power_law", nu=0.0)
        est = estimate_theta(weight, daughter, default_y_grid(10.0))
        assert est.theta_hat == pytest.approx(1.0 / 3.0, abs=1e-10)

    def test_cubic_weight_singular_daughter(self):
        weight = WeightSpec(family="power", alpha=3.0)
        daughter = DaughterSpec(family="power_law", nu=-0.5)
        est = estimate_theta(weight, daughter, default_y_grid(10.0))
        assert est.theta_hat == pytest.approx(2.0 / 3.5, abs=1e-10)

    def test_grid_agreement_and_scale_freedom(self):
        for alpha in (1.5, 2.0, 3.0):
            for nu in (0.0, -0.25, -0.5):
                weight = WeightSpec(family="power", alpha=alpha)
                daughter = DaughterSpec(family="power_law", nu=nu)
                est = infimum_theta(weight, daughter, y_max=10.0)
                assert abs(est.theta_hat - closed_form_theta(alpha, nu)) <= 1e-6
                assert est.spread <= 1e-10

    def test_general_form_dominates_power_constant(self):
        # any x**alpha * (non-decreasing) weight keeps at least the power
        # weight's dissipation fraction
        daughter = DaughterSpec(family="power_law", nu=0.0)
        floor = closed_form_theta(2.0, 0.0)
        for spec in (WeightSpec(family="power_shifted", alpha=2.0, beta=1.0),
                     WeightSpec(family="power_exp", alpha=2.0, lam=0.5),
                     WeightSpec(family="power_log", alpha=2.0, gamma=1.0)):
            est = infimum_theta(spec, daughter, y_max=10.0)
            assert est.theta_hat >= floor - 1e-6

    def test_out_of_class_candidate_reports_failure(self):
        weight = WeightSpec(family="power", alpha=0.5, candidate=True)
        daughter = DaughterSpec(family="power_law", nu=0.0)
        est = estimate_theta(weight, daughter, default_y_grid(10.0))
        assert not est.in_class
        with pytest.raises(ValueError):
            resolve_theta(weight, daughter, y_max=10.0)

    def test_resolve_prefers_closed_form(self):
        weight = WeightSpec(family="power", alpha=2.0)
        assert resolve_theta(weight, DaughterSpec(family="uniform_binary")) \
            == pytest.approx(1.0 / 3.0, rel=1e-15)

    def test_resolve_applies_margin_numerically(self):
        weight = WeightSpec(family="power_exp", alpha=2.0, lam=0.5)
        daughter = DaughterSpec(family="power_law", nu=0.0)
        est = infimum_theta(weight, daughter, y_max=100.0)
        resolved = resolve_theta(weight, daughter)
        assert resolved == pytest.approx(0.99 * est.theta_hat, rel=1e-12)

    def test_end_concentrated_daughter_shrinks_theta_with_horizon(self):
        # dissipation degrades for large parents: the certified constant on a
        # bounded range must shrink as the range grows
        weight = WeightSpec(family="power", alpha=2.0)
        daughter = DaughterSpec(family="kll_unit_ends")
        t_small = infimum_theta(weight, daughter, y_max=5.0).theta_hat
        t_large = infimum_theta(weight, daughter, y_max=50.0).theta_hat
        assert 0.0 < t_large < t_small

    def test_dissipation_ratio_flat_daughter_closed_form(self):
        # ratio = (nu+2)/(nu+alpha+1), independent of y
        weight = WeightSpec(family="power", alpha=2.0)
        daughter = DaughterSpec(family="uniform_binary")
        for y in (1e-3, 1.0, 7.7):
            assert dissipation_ratio(weight, daughter, y) == pytest.approx(2.0 / 3.0, abs=1e-12)


class TestLowerBound:
    @pytest.mark.parametrize("spec", [
        WeightSpec(family="power", alpha=2.0),
        WeightSpec(family="power_shifted", alpha=1.5, beta=2.0),
        WeightSpec(family="power_exp", alpha=2.0, lam=1.0),
        WeightSpec(family="power_log", alpha=3.0, gamma=0.5),
    ], ids=lambda s: s.family.value)
    def test_growth_above_one(self, spec):
        # g(y) >= g(1) * y for y >= 1 follows from the monotone ratio
        ys = np.logspace(0.0, 2.0, 64)
        assert np.all(g_values(spec, ys) >= eval_g(spec, 1.0) * ys * (1.0 - 1e-12))
