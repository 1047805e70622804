"""Effect measures: values, domains, gradients, inversion, monotonicity."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from progpower.effects import (
    BUILTIN_EFFECTS,
    DIFFERENCE,
    ODDS_RATIO,
    RATIO,
    EffectDomainError,
    EffectSolveError,
    check_monotonicity,
    default_check_grid,
    effect_gradient,
    evaluate_effect,
    get_effect,
    make_custom_effect,
    solve_psi1,
)


def central_diff(f, x, h=1e-6):
    return (f(x + h) - f(x - h)) / (2.0 * h)


class TestEvaluate:
    def test_difference(self):
        assert evaluate_effect(DIFFERENCE, 2.5, 1.0) == 1.5
        assert evaluate_effect(DIFFERENCE, 0.5, 0.5) == 0.0

    def test_ratio_scale_free(self):
        # a common multiplicative shift leaves the ratio at exp of the shift
        for m in (0.5, 3.0, 17.2):
            val = evaluate_effect(RATIO, math.exp(0.2) * m, m)
            assert val == pytest.approx(math.exp(0.2), rel=1e-12)
            assert round(val, 2) == 1.22

    def test_odds_ratio_null(self):
        assert evaluate_effect(ODDS_RATIO, 0.5, 0.5) == pytest.approx(1.0)
        assert evaluate_effect(ODDS_RATIO, 0.75, 0.5) == pytest.approx(3.0)

    def test_ratio_domain_violation(self):
        with pytest.raises(EffectDomainError, match="ratio"):
            evaluate_effect(RATIO, 1.0, 0.0)
        with pytest.raises(EffectDomainError, match="ratio"):
            evaluate_effect(RATIO, -0.5, 1.0)

    def test_odds_ratio_domain_violation(self):
        with pytest.raises(EffectDomainError, match="odds-ratio"):
            evaluate_effect(ODDS_RATIO, 1.2, 0.5)
        with pytest.raises(EffectDomainError, match="odds-ratio"):
            evaluate_effect(ODDS_RATIO, 0.5, 1.0)

    def test_null_values(self):
        assert DIFFERENCE.null_value == 0.0
        assert RATIO.null_value == 1.0
        assert ODDS_RATIO.null_value == 1.0

    def test_get_effect(self):
        assert get_effect("ratio") is RATIO
        with pytest.raises(EffectDomainError, match="unknown"):
            get_effect("hazard")

    @given(st.floats(0.01, 0.99))
    def test_null_at_equal_means_odds_ratio(self, psi):
        assert evaluate_effect(ODDS_RATIO, psi, psi) == pytest.approx(1.0, abs=1e-12)

    @given(st.floats(0.01, 100.0))
    def test_null_at_equal_means_ratio(self, psi):
        assert evaluate_effect(RATIO, psi, psi) == pytest.approx(1.0, abs=1e-12)


class TestGradient:
    def test_difference_constant(self):
        assert effect_gradient(DIFFERENCE, 3.0, -2.0) == (1.0, -1.0)

    def test_ratio_example(self):
        g1, g0 = effect_gradient(RATIO, 2.0, 4.0)
        assert g1 == pytest.approx(0.25)
        assert g0 == pytest.approx(-0.125)

    def test_odds_ratio_example(self):
        g1, g0 = effect_gradient(ODDS_RATIO, 0.5, 0.5)
        assert g1 == pytest.approx(4.0)
        assert g0 == pytest.approx(-4.0)

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            name = rng.choice(list(BUILTIN_EFFECTS))
            effect = BUILTIN_EFFECTS[name]
            if name == "odds-ratio":
                p1, p0 = rng.uniform(0.05, 0.95, 2)
            elif name == "ratio":
                p1, p0 = rng.uniform(0.1, 5.0, 2)
            else:
                p1, p0 = rng.normal(0.0, 3.0, 2)
            g1, g0 = effect_gradient(effect, p1, p0)
            fd1 = central_diff(lambda x: effect.evaluate_fn(x, p0), p1)
            fd0 = central_diff(lambda x: effect.evaluate_fn(p1, x), p0)
            assert g1 == pytest.approx(fd1, rel=1e-5, abs=1e-7)
            assert g0 == pytest.approx(fd0, rel=1e-5, abs=1e-7)

    def test_monotone_signs_on_grid(self):
        for effect in BUILTIN_EFFECTS.values():
            report = check_monotonicity(effect)
            assert report.ok
            assert report.checked > 50


class TestSolve:
    def test_difference(self):
        assert solve_psi1(DIFFERENCE, 0.0, 1.5) == 1.5
        assert solve_psi1(DIFFERENCE, -2.0, 0.5) == -1.5

    def test_ratio(self):
        assert solve_psi1(RATIO, 3.0, 1.22) == pytest.approx(3.66)

    def test_odds_ratio(self):
        # halving the odds from even money gives probability 1/3
        assert solve_psi1(ODDS_RATIO, 0.5, 0.5) == pytest.approx(1.0 / 3.0)

    def test_odds_ratio_degenerate_control(self):
        with pytest.raises(EffectSolveError, match="no solution"):
            solve_psi1(ODDS_RATIO, 0.0, 2.0)

    def test_ratio_bad_psi0(self):
        with pytest.raises(EffectSolveError):
            solve_psi1(RATIO, 0.0, 2.0)

    def test_ratio_negative_target(self):
        with pytest.raises(EffectSolveError, match="attainable"):
            solve_psi1(RATIO, 2.0, -0.5)

    @given(
        st.floats(0.05, 0.95),
        st.floats(0.05, 20.0),
    )
    @settings(max_examples=60)
    def test_odds_ratio_round_trip(self, psi0, target):
        psi1 = solve_psi1(ODDS_RATIO, psi0, target)
        assert evaluate_effect(ODDS_RATIO, psi1, psi0) == pytest.approx(
            target, rel=1e-9, abs=1e-10
        )

    @given(st.floats(0.1, 10.0), st.floats(0.05, 8.0))
    @settings(max_examples=60)
    def test_ratio_round_trip(self, psi0, target):
        psi1 = solve_psi1(RATIO, psi0, target)
        assert evaluate_effect(RATIO, psi1, psi0) == pytest.approx(
            target, rel=1e-10, abs=1e-10
        )


class TestCustom:
    def make_log_ratio(self):
        return make_custom_effect(
            "log-ratio",
            evaluate=lambda p1, p0: math.log(p1 / p0),
            grad=lambda p1, p0: (1.0 / p1, -1.0 / p0),
            null_value=0.0,
            in_domain=lambda p1, p0: p1 > 0.0 and p0 > 0.0,
        )

    def test_valid_custom_registers(self):
        eff = self.make_log_ratio()
        assert eff.evaluate(math.e, 1.0) == pytest.approx(1.0)

    def test_custom_bisection_round_trip(self):
        eff = self.make_log_ratio()
        psi1 = solve_psi1(eff, 2.0, 0.7)
        assert eff.evaluate(psi1, 2.0) == pytest.approx(0.7, abs=1e-9)
        # matches the closed form psi0 * exp(target)
        assert psi1 == pytest.approx(2.0 * math.exp(0.7), rel=1e-8)

    def test_custom_bisection_downward(self):
        eff = self.make_log_ratio()
        psi1 = solve_psi1(eff, 5.0, -1.3)
        assert psi1 == pytest.approx(5.0 * math.exp(-1.3), rel=1e-6)

    def test_reversed_measure_rejected_at_registration(self):
        with pytest.raises(EffectDomainError, match="monotone"):
            make_custom_effect(
                "reversed",
                evaluate=lambda p1, p0: p0 - p1,
                grad=lambda p1, p0: (-1.0, 1.0),
                null_value=0.0,
            )

    def test_wrong_gradient_rejected(self):
        with pytest.raises(EffectDomainError, match="finite difference"):
            make_custom_effect(
                "bad-grad",
                evaluate=lambda p1, p0: p1 - p0,
                grad=lambda p1, p0: (2.0, -1.0),
                null_value=0.0,
            )

    def test_wrong_null_rejected(self):
        with pytest.raises(EffectDomainError, match="null"):
            make_custom_effect(
                "bad-null",
                evaluate=lambda p1, p0: p1 - p0,
                grad=lambda p1, p0: (1.0, -1.0),
                null_value=1.0,
            )

    def test_unvalidated_measure_flagged_by_checker(self):
        eff = make_custom_effect(
            "reversed",
            evaluate=lambda p1, p0: p0 - p1,
            grad=lambda p1, p0: (-1.0, 1.0),
            null_value=0.0,
            validate=False,
        )
        report = check_monotonicity(eff)
        assert not report.ok
        assert len(report.violations) == report.checked

    def test_default_grid_respects_domain(self):
        grid = default_check_grid(ODDS_RATIO)
        assert grid
        assert all(0.0 < p1 < 1.0 and 0.0 < p0 < 1.0 for p1, p0 in grid)
