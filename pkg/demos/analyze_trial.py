"""Analyze one simulated randomized trial with increasing covariate adjustment.

Draws a single 1:1 trial with overdispersed count outcomes from the built-in
generator, then estimates the marginal rate ratio four ways: unadjusted,
main-terms covariates, covariates plus the true prognostic score, and the
same with 10-fold cross-fit variance.  The point estimates barely move while
the standard errors shrink as the working model explains more of the outcome.

Run: python3 demos/analyze_trial.py
"""

import numpy as np

from progpower import (
    RATIO,
    CrossFit,
    DesignSpec,
    FamilyLink,
    ScenarioSpec,
    clip_scores_for_link,
    estimate_marginal_effect,
    oracle_score,
    sample_trial,
    true_effect,
)

SEED = 20250825


def main():
    scenario = ScenarioSpec(
        trial_scenario="additive",
        historical_scenario="no-shift",
        n_trial=300,
        n_hist=2500,
        reps=1,
        seed=SEED,
    )
    trial = sample_trial(scenario, scenario.n_trial, np.random.default_rng(SEED))
    fl = FamilyLink("negative-binomial", "log", dispersion_r=3.0)
    scores = clip_scores_for_link(oracle_score(trial.w), fl)

    runs = (
        ("unadjusted", DesignSpec.parse(""), None, "plain"),
        ("covariates", DesignSpec.parse("w:w1, w:w2, w:w3, w:w4, w:w5"), None, "plain"),
        ("score + covariates", DesignSpec.parse("prognostic, w:w1, w:w2, w:w3, w:w4, w:w5"), scores, "plain"),
        ("score + covariates, cross-fit", DesignSpec.parse("prognostic, w:w1, w:w2, w:w3, w:w4, w:w5"), scores, CrossFit(k=10, seed=SEED)),
    )

    print(f"n = {trial.n}, true rate ratio = {true_effect(scenario):.4f}")
    print(f"{'working model':32s} {'ratio':>7s} {'se':>7s} {'95% CI':>17s} {'p':>8s}")
    for label, design, sc, mode in runs:
        est = estimate_marginal_effect(
            fl, design, RATIO, trial, scores=sc, variance_mode=mode, alpha=0.05
        )
        ci = f"({est.ci[0]:.3f}, {est.ci[1]:.3f})"
        print(f"{label:32s} {est.psi_hat:7.4f} {est.se:7.4f} {ci:>17s} {est.p_value:8.5f}")


if __name__ == "__main__":
    main()
