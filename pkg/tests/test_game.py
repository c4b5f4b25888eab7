import math

import numpy as np
import pytest

from _instances import random_dd
from sisgame.dbmf import DegreeDistribution, endemic_v
from sisgame.game import (
    GameSpec,
    NoEquilibriumFound,
    best_response,
    best_response_round,
    check_equilibrium_structure,
    check_lower_bound,
    class_cost,
    cost_second_difference,
    golden_section,
    solve_dbe,
    verify_dbe,
    weightings_from_alphas,
)
from sisgame.regular import optimal_weighted
from sisgame.weighting import INV_E, WeightingSpec, solve_wprime_level

TWO_CLASS = DegreeDistribution([1, 3], [0.5, 0.5])
REG4 = DegreeDistribution.regular(4)
PRELEC_04 = WeightingSpec.prelec(0.4)
# largest root of w'(x) = 0.8 for alpha = 0.4, from an mpmath bisection
X_FIG = 0.83231348233375150


def mixed_game(rng, weighting=()):
    dd = random_dd(rng, max_classes=5, max_degree=8, min_classes=2)
    lo, hi = 1.0 / dd.max_degree, 1.0 / dd.degrees[0]
    return GameSpec(dd, float(rng.uniform(lo, hi)), weighting)


class TestGameSpec:
    def test_broadcast_and_upper(self):
        spec = GameSpec(TWO_CLASS, 0.5)
        np.testing.assert_array_equal(spec.costs, [0.5, 0.5])
        np.testing.assert_array_equal(spec.upper, [2.0, 2.0])
        assert spec.homogeneous_cost and spec.all_identity
        np.testing.assert_array_equal(spec.default_init(), [1.0, 1.0])

    def test_single_weighting_broadcasts(self):
        spec = GameSpec(TWO_CLASS, [0.5, 0.2], PRELEC_04)
        assert spec.weightings == (PRELEC_04, PRELEC_04)
        assert not spec.homogeneous_cost

    @pytest.mark.parametrize("costs", [0.0, -1.0, [0.5, 0.5, 0.5]])
    def test_invalid_costs(self, costs):
        with pytest.raises(ValueError):
            GameSpec(TWO_CLASS, costs)

    def test_infeasible_profile(self):
        with pytest.raises(ValueError):
            GameSpec(TWO_CLASS, 0.5).check_feasible([1.0, 2.5])

    def test_weightings_from_alphas(self):
        ws = weightings_from_alphas([0.5, 1.0], 2)
        assert ws == (WeightingSpec.prelec(0.5), WeightingSpec.identity())
        assert weightings_from_alphas(None, 3) == (WeightingSpec.identity(),) * 3


class TestClassCost:
    def test_no_curing_costs_one(self):
        spec = GameSpec(TWO_CLASS, 0.3)
        assert class_cost(spec, 3, 0.0, [0.5, 1.0]) == 1.0

    def test_regular_arithmetic(self):
        assert class_cost(GameSpec(REG4, 0.5), 4, 1.0, [7.0]) == pytest.approx(1.25, abs=1e-12)

    def test_no_curing_costs_one_weighted(self):
        spec = GameSpec(TWO_CLASS, 0.3, WeightingSpec.prelec(0.7))
        assert class_cost(spec, 1, 0.0, [0.0, 1.0]) == 1.0

    def test_disease_free_cost_is_linear(self):
        spec = GameSpec(REG4, 0.2)
        assert class_cost(spec, 4, 4.5, [0.0]) == pytest.approx(0.9, abs=1e-15)

    def test_outside_strategy_set(self):
        with pytest.raises(ValueError):
            class_cost(GameSpec(REG4, 0.5), 4, 2.5, [1.0])


class TestGoldenSection:
    def test_parabola(self):
        x, fx, a, b = golden_section(lambda t: (t - 0.3) ** 2, 0.0, 1.0, 1e-9)
        assert x == pytest.approx(0.3, abs=1e-8)
        assert b - a <= 1e-9


class TestBestResponse:
    @pytest.mark.parametrize("d, c", [(4, 0.3), (3, 0.34), (6, 0.5)])
    def test_regular_neutral_is_zero(self, d, c):
        dd = DegreeDistribution.regular(d)
        assert best_response(GameSpec(dd, c), d, [1.0]).delta == 0.0

    def test_cheap_class_cures(self):
        spec = GameSpec(TWO_CLASS, [0.3, 0.2])
        br = best_response(spec, 3, [0.5, 0.0])
        assert br.delta > 0.0

    def test_weighted_regular_matches_closed_form(self):
        spec = GameSpec(REG4, 0.2, PRELEC_04)
        expected = 4 * (1 - X_FIG)
        assert expected == pytest.approx(0.67074607066499401, abs=1e-14)
        _, x_root = solve_wprime_level(PRELEC_04, 0.8)
        assert min(1 / 0.2, 4 * (1 - x_root)) == pytest.approx(expected, abs=1e-12)
        br = best_response(spec, 4, [1.0])
        assert br.delta == pytest.approx(expected, abs=1e-8)
        # brute force over 10^6 points of [0, 5] found 0.670745 with cost 0.73610426
        assert br.cost == pytest.approx(0.73610426, abs=1e-8)

    @pytest.mark.parametrize("d, c, alpha", [(4, 0.3, 0.5), (5, 0.25, 0.6), (3, 0.5, 0.8)])
    def test_weighted_regular_above_threshold(self, d, c, alpha):
        w = WeightingSpec.prelec(alpha)
        spec = GameSpec(DegreeDistribution.regular(d), c, w)
        assert best_response(spec, d, [0.0]).delta == pytest.approx(optimal_weighted(d, c, w), abs=1e-7)

    def test_known_weighted_value(self):
        # d = 4, c = 0.3, alpha = 0.5: X from w'(X) = 1.2 by mpmath
        spec = GameSpec(REG4, 0.3, WeightingSpec.prelec(0.5))
        assert best_response(spec, 4, [0.0]).delta == pytest.approx(0.4213027997018975, abs=1e-8)

    def test_tiny_weighted_rate(self):
        # high degree, high cost, alpha near 1: the optimum sits just above zero
        dd = DegreeDistribution([1, 2, 4, 5], [0.25] * 4)
        spec = GameSpec(dd, 4.0, WeightingSpec.prelec(0.8))
        br = best_response(spec, 5, [3.17094e-4, 1.99915e-5, 1.2501e-6, 0.0])
        # golden section at 50 digits with mpmath
        assert br.delta == pytest.approx(5.12051136826868e-7, rel=1e-7)
        assert br.cost == pytest.approx(0.99999948794556386, abs=1e-14)

    def test_optimal_on_finer_grid(self):
        rng = np.random.default_rng(23)
        for trial in range(8):
            weighting = WeightingSpec.prelec(float(rng.uniform(0.3, 0.9))) if trial % 2 else ()
            spec = mixed_game(rng, weighting)
            profile = rng.uniform(0.0, spec.upper)
            k = int(rng.choice(spec.dd.degrees))
            br = best_response(spec, k, profile)
            i = spec.dd.index(k)
            fine = np.linspace(0.0, spec.upper[i], 10 * 129)
            costs = [class_cost(spec, k, float(d), profile) for d in fine]
            assert br.cost <= min(costs) + 1e-8

    def test_bad_tolerance(self):
        with pytest.raises(ValueError):
            best_response(GameSpec(REG4, 0.3), 4, [1.0], tol=0.0)


class TestSolveDbe:
    def test_expensive_curing_gives_all_zero(self):
        spec = GameSpec(TWO_CLASS, [1.2, 0.4])
        eq = solve_dbe(spec)
        np.testing.assert_array_equal(eq.delta_ne, [0.0, 0.0])
        assert eq.verified and eq.verification_margin <= 0.0
        assert eq.v_ne == 1.0

    @pytest.mark.parametrize("init", [[0.0], [1.0], [10 / 3]])
    def test_regular_any_init(self, init):
        w = WeightingSpec.prelec(0.5)
        eq = solve_dbe(GameSpec(REG4, 0.3, w), init=init)
        assert eq.delta_ne[0] == pytest.approx(optimal_weighted(4, 0.3, w), abs=1e-7)
        assert eq.verified

    def test_weighted_positive_rates(self):
        dd = DegreeDistribution([1, 2, 5], [0.3, 0.5, 0.2])
        eq = solve_dbe(GameSpec(dd, 2.0, WeightingSpec.prelec(0.6)))
        assert eq.verified
        assert np.all(eq.delta_ne > 1e-6)
        assert np.all(eq.delta_ne <= 0.5)

    @pytest.mark.parametrize("alpha", [0.4, 0.6, 0.8])
    @pytest.mark.parametrize("c0", [1.6, 2.0, 4.0])
    def test_weighted_rates_strictly_positive(self, alpha, c0):
        dd = DegreeDistribution([1, 2, 4, 5, 8], [0.2] * 5)
        spec = GameSpec(dd, c0, WeightingSpec.prelec(alpha))
        eq = solve_dbe(spec)
        assert eq.verified
        assert np.all(eq.delta_ne > 0.0)
        # every class does strictly better than at zero, where its cost is w(1) = 1
        assert np.all(eq.costs_at_ne < 1.0)

    def test_frozen_two_class_equilibrium(self):
        # regression values for the weighted two-class example config
        eq = solve_dbe(GameSpec(TWO_CLASS, 0.3, WeightingSpec.prelec(0.5)))
        np.testing.assert_allclose(eq.delta_ne, [0.50310566181, 0.515891080825], atol=1e-9)

    def test_fixed_point(self):
        rng = np.random.default_rng(29)
        spec = mixed_game(rng)
        eq = solve_dbe(spec)
        again = best_response_round(spec, eq.delta_ne)
        np.testing.assert_allclose(again, eq.delta_ne, atol=1e-8)

    def test_no_convergence_reports_last_profile(self):
        with pytest.raises(NoEquilibriumFound) as info:
            solve_dbe(GameSpec(TWO_CLASS, [0.3, 0.2]), max_rounds=1, tol_fp=1e-300)
        assert info.value.last_profile.shape == (2,)
        assert info.value.max_update > 0.0

    def test_infeasible_init(self):
        with pytest.raises(ValueError):
            solve_dbe(GameSpec(REG4, 0.5), init=[3.0])


class TestVerifyDbe:
    def test_zero_profile_expensive(self):
        ok, margin = verify_dbe(GameSpec(TWO_CLASS, [1.0, 0.5]), [0.0, 0.0])
        assert ok and margin <= 0.0

    def test_zero_profile_cheap_fails(self):
        ok, margin = verify_dbe(GameSpec(TWO_CLASS, [1.0, 0.2]), [0.0, 0.0])
        assert not ok and margin > 1e-3

    def test_regular_closed_form_verified(self):
        w = WeightingSpec.prelec(0.6)
        ok, _ = verify_dbe(GameSpec(REG4, 0.4, w), [optimal_weighted(4, 0.4, w)])
        assert ok


class TestStructure:
    def test_all_zero(self):
        spec = GameSpec(TWO_CLASS, [1.0, 0.5])
        report = check_equilibrium_structure(spec, solve_dbe(spec))
        assert report.findings["all_zero"].applicable
        assert report.ok

    def test_cheap_classes(self):
        spec = GameSpec(TWO_CLASS, [0.5, 0.2])
        eq = solve_dbe(spec)
        report = check_equilibrium_structure(spec, eq)
        assert report.findings["cheap_classes_cure"].applicable
        assert report.ok
        assert np.all(eq.delta_ne > 1e-9)

    def test_upward_closed_zero_set(self):
        dd = DegreeDistribution([1, 2, 4, 6], [0.4, 0.3, 0.2, 0.1])
        spec = GameSpec(dd, 0.35)
        eq = solve_dbe(spec)
        report = check_equilibrium_structure(spec, eq)
        finding = report.findings["zero_set_upward_closed"]
        assert finding.applicable and finding.passed
        assert eq.delta_ne[0] > 0.0 and eq.delta_ne[-1] == 0.0

    def test_weighted_not_applicable(self):
        spec = GameSpec(TWO_CLASS, 0.3, WeightingSpec.prelec(0.5))
        report = check_equilibrium_structure(spec, solve_dbe(spec))
        assert not any(f.applicable for f in report.findings.values())


class TestLowerBound:
    def test_inverse_e(self):
        dd = DegreeDistribution([1, 3, 6], [0.5, 0.3, 0.2])
        report = check_lower_bound(GameSpec(dd, 1.6), INV_E, samples=200, seed=1)
        assert report.passed and report.min_x > INV_E
        assert report.corner_min_x == pytest.approx(report.min_x)

    def test_half(self):
        report = check_lower_bound(GameSpec(TWO_CLASS, 2.1), 0.5, samples=500, seed=2)
        assert report.passed
        # binding corner for delta = 1/2.1 on {1, 3}: x_1 = v/(delta + v)
        assert report.corner_min_x == pytest.approx(0.620317234648132, abs=1e-11)

    def test_precondition(self):
        with pytest.raises(ValueError):
            check_lower_bound(GameSpec(TWO_CLASS, 1.5), INV_E)
        with pytest.raises(ValueError):
            check_lower_bound(GameSpec(TWO_CLASS, [2.0, 3.0]), INV_E)


class TestShape:
    def test_identity_cost_convex(self):
        rng = np.random.default_rng(31)
        for _ in range(10):
            spec = mixed_game(rng)
            profile = rng.uniform(0.0, spec.upper)
            k = int(rng.choice(spec.dd.degrees))
            assert cost_second_difference(spec, k, profile) >= -1e-8

    def test_weighted_cost_drops_from_zero(self):
        rng = np.random.default_rng(37)
        checked = 0
        while checked < 15:
            w = WeightingSpec.prelec(float(rng.uniform(0.2, 0.95)))
            spec = mixed_game(rng, w)
            profile = rng.uniform(0.0, spec.upper)
            k = int(rng.choice(spec.dd.degrees))
            i = spec.dd.index(k)
            trial = profile.copy()
            trial[i] = 1e-4
            if endemic_v(spec.dd, trial) == 0.0:
                continue
            assert class_cost(spec, k, 1e-4, profile) < class_cost(spec, k, 0.0, profile)
            checked += 1
