"""Plug-in effect estimation: point estimates, influence variance, cross-fitting."""

import numpy as np
import pytest
from scipy.stats import norm

from progpower.data import InfeasibleFoldError, TrialDataset, make_folds
from progpower.effects import DIFFERENCE, RATIO
from progpower.estimator import (
    CrossFit,
    CrossFitError,
    estimate_counterfactual_mean,
    estimate_marginal_effect,
    influence_values,
    nested_variance_check,
    oracle_passthrough_check,
)
from progpower.glm import DesignSpec, FamilyLink, build_design, fit_glm

from conftest import make_trial

NORMAL = FamilyLink("normal", "identity")
POISSON = FamilyLink("poisson", "log")
UNADJUSTED = DesignSpec()


def balanced_trial(n=40, p=2, seed=0, y=None):
    return make_trial(n=n, p=p, seed=seed, balanced=True, y=y)


class TestPointEstimates:
    def test_unadjusted_difference_is_diff_in_means(self):
        data = balanced_trial(n=60, seed=1)
        est = estimate_marginal_effect(NORMAL, UNADJUSTED, DIFFERENCE, data)
        ybar1 = float(np.mean(data.y[data.a == 1]))
        ybar0 = float(np.mean(data.y[data.a == 0]))
        assert est.psi1_hat == pytest.approx(ybar1, abs=1e-10)
        assert est.psi0_hat == pytest.approx(ybar0, abs=1e-10)
        assert est.psi_hat == pytest.approx(ybar1 - ybar0, abs=1e-10)

    def test_unadjusted_ratio_poisson_is_mean_ratio(self):
        rng = np.random.default_rng(2)
        y = rng.poisson(3.0, size=60).astype(float)
        data = balanced_trial(n=60, seed=2, y=y)
        est = estimate_marginal_effect(POISSON, UNADJUSTED, RATIO, data)
        ybar1 = float(np.mean(data.y[data.a == 1]))
        ybar0 = float(np.mean(data.y[data.a == 0]))
        assert est.psi_hat == pytest.approx(ybar1 / ybar0, abs=1e-8)

    def test_ancova_difference_equals_arm_coefficient(self):
        # normal/identity with main terms only: counterfactual difference is
        # constant in w, so the marginal effect is exactly the arm coefficient
        rng = np.random.default_rng(3)
        data = make_trial(n=80, p=2, seed=3,
                          y=rng.normal(size=80) + 0.7)
        spec = DesignSpec.parse("w:w1, w:w2")
        est = estimate_marginal_effect(NORMAL, spec, DIFFERENCE, data)
        X = build_design(spec, data)
        fit = fit_glm(NORMAL, X, data.y)
        assert est.psi_hat == pytest.approx(fit.beta[1], abs=1e-10)

    def test_estimate_counterfactual_mean_averages_predictions(self):
        data = balanced_trial(n=40, seed=4)
        spec = DesignSpec.parse("w:w1")
        X = build_design(spec, data)
        fit = fit_glm(NORMAL, X, data.y, spec=spec,
                      covariate_names=data.covariate_names)
        X1 = build_design(spec, data, force_arm=1)
        assert estimate_counterfactual_mean(fit, data, 1) == pytest.approx(
            float(np.mean(fit.mean(X1)))
        )

    def test_requires_both_arms(self):
        data = make_trial(n=20, seed=5, a=np.ones(20, dtype=np.int64))
        with pytest.raises(ValueError, match="both arms"):
            estimate_marginal_effect(NORMAL, UNADJUSTED, DIFFERENCE, data)

    def test_rejects_bad_alpha_and_sidedness(self):
        data = balanced_trial()
        with pytest.raises(ValueError, match="alpha"):
            estimate_marginal_effect(NORMAL, UNADJUSTED, DIFFERENCE, data, alpha=1.5)
        with pytest.raises(ValueError, match="one_sided"):
            estimate_marginal_effect(NORMAL, UNADJUSTED, DIFFERENCE, data,
                                     one_sided="two")
        with pytest.raises(ValueError, match="variance_mode"):
            estimate_marginal_effect(NORMAL, UNADJUSTED, DIFFERENCE, data,
                                     variance_mode="bootstrap")

    def test_scores_must_align(self):
        data = balanced_trial(n=20)
        with pytest.raises(ValueError, match="align"):
            estimate_marginal_effect(NORMAL, DesignSpec.parse("prognostic"),
                                     DIFFERENCE, data, scores=np.ones(7))


class TestInfluenceValues:
    def test_formula_matches_hand_computation(self):
        rng = np.random.default_rng(6)
        n = 30
        y = rng.poisson(4.0, n).astype(float)
        data = make_trial(n=n, seed=6, y=y, pi1=0.4)
        mu1 = rng.uniform(2.0, 6.0, n)
        mu0 = rng.uniform(2.0, 6.0, n)
        psi1, psi0 = float(np.mean(mu1)), float(np.mean(mu0))

        infl = influence_values(mu1, mu0, data, RATIO)

        a = data.a
        phi1 = (a == 1) / 0.4 * (y - mu1) + (mu1 - psi1)
        phi0 = (a == 0) / 0.6 * (y - mu0) + (mu0 - psi0)
        g1, g0 = 1.0 / psi0, -psi1 / psi0**2
        assert infl.phi1 == pytest.approx(phi1, abs=1e-12)
        assert infl.phi0 == pytest.approx(phi0, abs=1e-12)
        assert infl.values == pytest.approx(g1 * phi1 + g0 * phi0, abs=1e-12)

    def test_component_means_vanish_at_plugin_psis(self):
        # each arm's component is centered by construction when the randomization
        # share matches the empirical split
        data = balanced_trial(n=50, seed=7)
        mu1 = np.full(50, float(np.mean(data.y[data.a == 1])))
        mu0 = np.full(50, float(np.mean(data.y[data.a == 0])))
        infl = influence_values(mu1, mu0, data, DIFFERENCE)
        assert float(np.mean(infl.phi1)) == pytest.approx(0.0, abs=1e-12)
        assert float(np.mean(infl.phi0)) == pytest.approx(0.0, abs=1e-12)


class TestVarianceAndInference:
    def test_unadjusted_variance_identity_exact(self):
        # balanced arms: raw second moment collapses to the two-sample formula
        data = balanced_trial(n=80, seed=8)
        est = estimate_marginal_effect(NORMAL, UNADJUSTED, DIFFERENCE, data)
        y1 = data.y[data.a == 1]
        y0 = data.y[data.a == 0]
        sig1 = float(np.mean((y1 - y1.mean()) ** 2))
        sig0 = float(np.mean((y0 - y0.mean()) ** 2))
        expected = sig1 / data.pi1 + sig0 / data.pi0
        assert abs(est.variance - expected) < 1e-10

    def test_centered_variance_equals_raw_when_mean_is_zero(self):
        data = balanced_trial(n=80, seed=9)
        raw = estimate_marginal_effect(NORMAL, UNADJUSTED, DIFFERENCE, data)
        cen = estimate_marginal_effect(NORMAL, UNADJUSTED, DIFFERENCE, data,
                                       centered_variance=True)
        assert cen.variance == pytest.approx(raw.variance, rel=1e-12)

    def test_centered_variance_strictly_smaller_under_crossfit(self):
        # in-sample fits zero the influence mean through the score equations;
        # fold-complement fits do not, so centering must bite under cross-fitting
        rng = np.random.default_rng(10)
        w = rng.normal(size=(40, 2))
        y = w[:, 0] + rng.normal(size=40)
        data = make_trial(n=40, seed=10, w=w, y=y, balanced=True)
        spec = DesignSpec.parse("w:w1")
        mode = CrossFit(k=4, seed=2)
        raw = estimate_marginal_effect(NORMAL, spec, DIFFERENCE, data,
                                       variance_mode=mode)
        cen = estimate_marginal_effect(NORMAL, spec, DIFFERENCE, data,
                                       variance_mode=mode, centered_variance=True)
        assert cen.variance < raw.variance
        mean_if = float(np.mean(raw.influence.values))
        assert raw.variance - cen.variance == pytest.approx(mean_if**2, rel=1e-9)

    def test_plain_fit_influence_mean_is_zero(self):
        # intercept and arm score equations force both component means to zero
        rng = np.random.default_rng(30)
        a = np.array([1] * 13 + [0] * 27, dtype=np.int64)
        data = make_trial(n=40, seed=30, a=a, y=rng.normal(size=40))
        est = estimate_marginal_effect(NORMAL, UNADJUSTED, DIFFERENCE, data)
        assert float(np.mean(est.influence.values)) == pytest.approx(0.0, abs=1e-10)
        cen = estimate_marginal_effect(NORMAL, UNADJUSTED, DIFFERENCE, data,
                                       centered_variance=True)
        assert cen.variance == pytest.approx(est.variance, rel=1e-10)

    def test_wald_interval_and_p_value(self):
        data = balanced_trial(n=60, seed=11)
        est = estimate_marginal_effect(NORMAL, UNADJUSTED, DIFFERENCE, data,
                                       alpha=0.1)
        se = np.sqrt(est.variance / est.n)
        assert est.se == pytest.approx(se)
        zc = norm.ppf(0.95)
        assert est.ci[0] == pytest.approx(est.psi_hat - zc * se)
        assert est.ci[1] == pytest.approx(est.psi_hat + zc * se)
        z = est.psi_hat / se
        assert est.p_value == pytest.approx(2.0 * norm.sf(abs(z)))
        assert est.significant == (est.p_value < 0.1)

    def test_one_sided_p_values(self):
        data = balanced_trial(n=60, seed=12)
        greater = estimate_marginal_effect(NORMAL, UNADJUSTED, DIFFERENCE, data,
                                           one_sided="greater")
        less = estimate_marginal_effect(NORMAL, UNADJUSTED, DIFFERENCE, data,
                                        one_sided="less")
        z = greater.psi_hat / greater.se
        assert greater.p_value == pytest.approx(float(norm.sf(z)))
        assert less.p_value == pytest.approx(float(norm.cdf(z)))
        assert greater.p_value + less.p_value == pytest.approx(1.0)

    def test_custom_null_value(self):
        data = balanced_trial(n=60, seed=13)
        est = estimate_marginal_effect(NORMAL, UNADJUSTED, DIFFERENCE, data,
                                       null_value=0.5)
        z = (est.psi_hat - 0.5) / est.se
        assert est.null_value == 0.5
        assert est.p_value == pytest.approx(2.0 * norm.sf(abs(z)))

    def test_degenerate_zero_se_null_true(self):
        y = np.concatenate([np.full(10, 2.0), np.full(10, 2.0)])
        a = np.array([1] * 10 + [0] * 10, dtype=np.int64)
        data = make_trial(n=20, y=y, a=a)
        est = estimate_marginal_effect(NORMAL, UNADJUSTED, DIFFERENCE, data)
        assert est.se == 0.0
        assert est.p_value == 1.0
        assert est.ci == (0.0, 0.0)
        assert not est.significant

    def test_degenerate_zero_se_null_false(self):
        a = np.array([1] * 10 + [0] * 10, dtype=np.int64)
        y = np.where(a == 1, 3.0, 1.0)
        data = make_trial(n=20, y=y, a=a)
        est = estimate_marginal_effect(NORMAL, UNADJUSTED, DIFFERENCE, data)
        assert est.se == 0.0
        assert est.psi_hat == pytest.approx(2.0)
        assert est.p_value == 0.0
        assert est.significant


class TestCrossFitting:
    def test_pooled_predictions_match_manual_fold_means(self):
        # unadjusted normal fit on each complement is just the two arm means,
        # so the pooled counterfactual vectors can be rebuilt by hand
        data = balanced_trial(n=40, seed=14)
        k, seed = 4, 9
        est = estimate_marginal_effect(NORMAL, UNADJUSTED, DIFFERENCE, data,
                                       variance_mode=CrossFit(k=k, seed=seed))
        folds = make_folds(data.a, k, seed)
        mu1 = np.empty(data.n)
        mu0 = np.empty(data.n)
        for f in range(k):
            comp = folds.complement(f)
            hold = folds.indices(f)
            yc, ac = data.y[comp], data.a[comp]
            mu1[hold] = float(np.mean(yc[ac == 1]))
            mu0[hold] = float(np.mean(yc[ac == 0]))
        assert est.psi1_hat == pytest.approx(float(np.mean(mu1)), abs=1e-10)
        assert est.psi0_hat == pytest.approx(float(np.mean(mu0)), abs=1e-10)
        infl = influence_values(mu1, mu0, data, DIFFERENCE)
        assert est.variance == pytest.approx(float(np.mean(infl.values**2)),
                                             abs=1e-12)
        assert est.crossfit_k == k

    def test_plain_mode_reports_zero_folds(self):
        data = balanced_trial()
        est = estimate_marginal_effect(NORMAL, UNADJUSTED, DIFFERENCE, data)
        assert est.crossfit_k == 0

    def test_fold_seed_changes_assignment(self):
        data = balanced_trial(n=40, seed=15)
        spec = DesignSpec.parse("w:w1")
        e1 = estimate_marginal_effect(NORMAL, spec, DIFFERENCE, data,
                                      variance_mode=CrossFit(k=5, seed=1))
        e2 = estimate_marginal_effect(NORMAL, spec, DIFFERENCE, data,
                                      variance_mode=CrossFit(k=5, seed=1))
        e3 = estimate_marginal_effect(NORMAL, spec, DIFFERENCE, data,
                                      variance_mode=CrossFit(k=5, seed=2))
        assert e1.psi_hat == e2.psi_hat
        assert e1.psi_hat != e3.psi_hat

    def test_infeasible_fold_count(self):
        data = balanced_trial(n=20)  # 10 per arm
        with pytest.raises(InfeasibleFoldError):
            estimate_marginal_effect(NORMAL, UNADJUSTED, DIFFERENCE, data,
                                     variance_mode=CrossFit(k=11))

    def test_failing_fold_is_named(self):
        # a nonpositive covariate breaks the log transform in whichever fold
        # touches that row first; the error must say which fold died
        rng = np.random.default_rng(16)
        w = np.abs(rng.normal(size=(30, 1))) + 0.5
        w[17, 0] = -2.0
        data = make_trial(n=30, p=1, seed=16, w=w, balanced=True)
        spec = DesignSpec.parse("transform(log, w:w1)")
        with pytest.raises(CrossFitError, match=r"fold \d+: transform"):
            estimate_marginal_effect(NORMAL, spec, DIFFERENCE, data,
                                     variance_mode=CrossFit(k=3, seed=0))


class TestPassThrough:
    def make_poisson_trial(self, n=20000, shift=0.3, seed=17):
        # log-score must not be linear in w, or the design would be collinear
        rng = np.random.default_rng(seed)
        w = rng.normal(size=(n, 3))
        scores = np.exp(0.2 * np.maximum(w[:, 0], 0.0) + 0.3 * w[:, 1] - 0.1)
        a = rng.binomial(1, 0.5, n).astype(np.int64)
        y = rng.poisson(scores * np.exp(shift * a)).astype(float)
        data = make_trial(n=n, p=3, w=w, a=a, y=y)
        return data, scores

    def test_recovers_generating_coefficients(self):
        data, scores = self.make_poisson_trial()
        report = oracle_passthrough_check(POISSON, data, scores, arm_shift=0.3)
        assert report.within(3.0)
        assert report.column_names == ("intercept", "treatment", "prognostic",
                                       "w:w1", "w:w2", "w:w3")
        assert report.targets == pytest.approx([0.0, 0.3, 1.0, 0.0, 0.0, 0.0])
        assert abs(report.beta[2] - 1.0) <= 3.0 * report.se[2]

    def test_detects_wrong_shift(self):
        data, scores = self.make_poisson_trial()
        report = oracle_passthrough_check(POISSON, data, scores, arm_shift=0.6)
        assert not report.within(3.0)

    def test_without_covariates(self):
        data, scores = self.make_poisson_trial(n=5000)
        report = oracle_passthrough_check(POISSON, data, scores, arm_shift=0.3,
                                          include_covariates=False)
        assert report.column_names == ("intercept", "treatment", "prognostic")
        assert len(report.beta) == 3
        assert report.within(3.5)


class TestNestedVariance:
    def make_linear_trial(self, n=5000, seed=18, noise_only=False):
        rng = np.random.default_rng(seed)
        w = rng.normal(size=(n, 2))
        a = rng.binomial(1, 0.5, n).astype(np.int64)
        base = np.zeros(n) if noise_only else 2.0 * w[:, 0] + w[:, 1]
        y = base + 0.5 * a + rng.normal(size=n)
        return make_trial(n=n, p=2, w=w, a=a, y=y)

    def test_informative_covariates_reduce_variance(self):
        data = self.make_linear_trial()
        report = nested_variance_check(
            DesignSpec(), DesignSpec.parse("w:w1, w:w2"), data, DIFFERENCE
        )
        assert report.variance_big < report.variance_small
        assert report.drop > 0.0
        assert report.relative_change < -0.5  # w explains most of the outcome

    def test_noise_covariates_leave_variance_alone(self):
        data = self.make_linear_trial(noise_only=True)
        report = nested_variance_check(
            DesignSpec(), DesignSpec.parse("w:w1, w:w2"), data, DIFFERENCE
        )
        assert abs(report.relative_change) < 0.005

    def test_requires_nesting(self):
        data = self.make_linear_trial(n=100)
        with pytest.raises(ValueError, match="nested"):
            nested_variance_check(DesignSpec.parse("w:w1"),
                                  DesignSpec.parse("w:w2"), data, DIFFERENCE)

    def test_requires_balanced_randomization(self):
        rng = np.random.default_rng(19)
        data = make_trial(n=100, seed=19, pi1=0.3,
                          a=rng.binomial(1, 0.3, 100).astype(np.int64))
        with pytest.raises(ValueError, match="pi1"):
            nested_variance_check(DesignSpec(), DesignSpec.parse("w:w1"),
                                  data, DIFFERENCE)
