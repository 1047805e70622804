"""Marginal effect estimation by averaging counterfactual GLM predictions.

The point estimate contrasts the two averaged counterfactual mean vectors on
the chosen effect scale.  Standard errors come from the empirical second
moment of plug-in influence values, either in-sample or with arm-stratified
cross-fitting where every row is predicted by a model fit without it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy.stats import norm

from .data import FoldAssignment, TrialDataset, make_folds
from .effects import EffectMeasure
from .glm import (
    DesignSpec,
    FamilyLink,
    GlmError,
    GlmFit,
    build_design,
    counterfactual_means,
    fisher_information,
    fit_glm,
)

__all__ = [
    "CrossFit",
    "CrossFitError",
    "EffectEstimate",
    "InfluenceVector",
    "estimate_counterfactual_mean",
    "influence_values",
    "estimate_marginal_effect",
    "PassThroughReport",
    "oracle_passthrough_check",
    "NestedVarianceReport",
    "nested_variance_check",
]


@dataclass(frozen=True)
class CrossFit:
    """Cross-fitting request: k arm-stratified folds, seeded fold assignment."""

    k: int = 10
    seed: int = 0


class CrossFitError(RuntimeError):
    """A fold's model failed; the whole estimate is abandoned, never patched."""


@dataclass(frozen=True, eq=False)
class InfluenceVector:
    """Per-row influence values for the effect and its two mean components."""

    values: np.ndarray
    phi1: np.ndarray
    phi0: np.ndarray


@dataclass(frozen=True, eq=False)
class EffectEstimate:
    """Point estimate, asymptotic SE, Wald interval, and test against a null."""

    effect_name: str
    psi_hat: float
    psi1_hat: float
    psi0_hat: float
    variance: float
    n: int
    se: float
    ci: tuple[float, float]
    p_value: float
    alpha: float
    null_value: float
    crossfit_k: int  # 0 means a single in-sample fit
    influence: InfluenceVector

    @property
    def significant(self) -> bool:
        return self.p_value < self.alpha


def estimate_counterfactual_mean(
    fit: GlmFit,
    dataset: TrialDataset,
    arm: int,
    scores: np.ndarray | None = None,
) -> float:
    """Average of per-row fitted means with the arm forced."""
    return float(np.mean(counterfactual_means(fit, dataset, arm, scores)))


def influence_values(
    mu1: np.ndarray,
    mu0: np.ndarray,
    dataset: TrialDataset,
    effect: EffectMeasure,
    psi1_hat: float | None = None,
    psi0_hat: float | None = None,
) -> InfluenceVector:
    """Plug-in influence values from counterfactual prediction vectors.

    Each arm's component is the inverse-probability-weighted residual for
    rows observed in that arm plus the centered prediction, evaluated at the
    plug-in means; the effect-scale values chain the two components through
    the measure's gradient.
    """
    mu1 = np.asarray(mu1, dtype=float)
    mu0 = np.asarray(mu0, dtype=float)
    a = dataset.a
    y = dataset.y
    if psi1_hat is None:
        psi1_hat = float(np.mean(mu1))
    if psi0_hat is None:
        psi0_hat = float(np.mean(mu0))
    phi1 = (a == 1) / dataset.pi1 * (y - mu1) + (mu1 - psi1_hat)
    phi0 = (a == 0) / dataset.pi0 * (y - mu0) + (mu0 - psi0_hat)
    g1, g0 = effect.gradient(psi1_hat, psi0_hat)
    return InfluenceVector(values=g1 * phi1 + g0 * phi0, phi1=phi1, phi0=phi0)


def _require_both_arms(dataset: TrialDataset) -> None:
    if dataset.n1 == 0 or dataset.n0 == 0:
        raise ValueError("analysis requires observations in both arms")


def _counterfactual_pair(
    family_link: FamilyLink,
    spec: DesignSpec,
    train: TrialDataset,
    predict: TrialDataset,
    train_scores: np.ndarray | None,
    predict_scores: np.ndarray | None,
    coef_bound: float,
) -> tuple[np.ndarray, np.ndarray]:
    X = build_design(spec, train, train_scores, link=family_link)
    fit = fit_glm(
        family_link,
        X,
        train.y,
        coef_bound=coef_bound,
        spec=spec,
        covariate_names=train.covariate_names,
    )
    mu1 = counterfactual_means(fit, predict, 1, predict_scores)
    mu0 = counterfactual_means(fit, predict, 0, predict_scores)
    return mu1, mu0


def estimate_marginal_effect(
    family_link: FamilyLink,
    spec: DesignSpec,
    effect: EffectMeasure,
    dataset: TrialDataset,
    scores: np.ndarray | None = None,
    variance_mode: Union[str, CrossFit] = "plain",
    alpha: float = 0.05,
    null_value: float | None = None,
    one_sided: str | None = None,
    centered_variance: bool = False,
    coef_bound: float = 30.0,
) -> EffectEstimate:
    """Fit the working GLM, average counterfactual predictions, test the effect.

    variance_mode "plain" uses one in-sample fit.  A CrossFit request assigns
    arm-stratified folds and predicts each fold from a model fit on its
    complement; a non-converging fold aborts the estimate with the fold named.
    The default variance is the raw second moment of the influence values;
    centered_variance subtracts the (asymptotically vanishing) mean first.
    """
    _require_both_arms(dataset)
    if not (0.0 < alpha < 1.0):
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if one_sided not in (None, "greater", "less"):
        raise ValueError("one_sided must be None, 'greater', or 'less'")
    if scores is not None:
        scores = np.asarray(scores, dtype=float)
        if scores.shape != (dataset.n,):
            raise ValueError("scores must align with the dataset rows")

    if isinstance(variance_mode, str):
        if variance_mode != "plain":
            raise ValueError(f"unknown variance_mode {variance_mode!r}")
        crossfit_k = 0
        mu1, mu0 = _counterfactual_pair(
            family_link, spec, dataset, dataset, scores, scores, coef_bound
        )
    else:
        folds: FoldAssignment = make_folds(dataset.a, variance_mode.k, variance_mode.seed)
        crossfit_k = variance_mode.k
        mu1 = np.empty(dataset.n)
        mu0 = np.empty(dataset.n)
        for fold in range(folds.k):
            hold = folds.indices(fold)
            comp = folds.complement(fold)
            train = dataset.take(comp)
            predict = dataset.take(hold)
            train_scores = scores[comp] if scores is not None else None
            hold_scores = scores[hold] if scores is not None else None
            try:
                f_mu1, f_mu0 = _counterfactual_pair(
                    family_link, spec, train, predict, train_scores, hold_scores, coef_bound
                )
            except GlmError as err:
                raise CrossFitError(f"fold {fold}: {err}") from err
            mu1[hold] = f_mu1
            mu0[hold] = f_mu0

    psi1_hat = float(np.mean(mu1))
    psi0_hat = float(np.mean(mu0))
    psi_hat = effect.evaluate(psi1_hat, psi0_hat)
    infl = influence_values(mu1, mu0, dataset, effect, psi1_hat, psi0_hat)
    if centered_variance:
        variance = float(np.var(infl.values))
    else:
        variance = float(np.mean(infl.values**2))
    n = dataset.n
    se = float(np.sqrt(variance / n))
    null = effect.null_value if null_value is None else float(null_value)

    if se > 0.0:
        z = (psi_hat - null) / se
        if one_sided is None:
            p_value = float(2.0 * norm.sf(abs(z)))
            z_crit = float(norm.ppf(1.0 - alpha / 2.0))
        elif one_sided == "greater":
            p_value = float(norm.sf(z))
            z_crit = float(norm.ppf(1.0 - alpha))
        else:
            p_value = float(norm.cdf(z))
            z_crit = float(norm.ppf(1.0 - alpha))
        ci = (psi_hat - z_crit * se, psi_hat + z_crit * se)
    else:
        p_value = 1.0 if psi_hat == null else 0.0
        ci = (psi_hat, psi_hat)

    return EffectEstimate(
        effect_name=effect.name,
        psi_hat=psi_hat,
        psi1_hat=psi1_hat,
        psi0_hat=psi0_hat,
        variance=variance,
        n=n,
        se=se,
        ci=ci,
        p_value=p_value,
        alpha=alpha,
        null_value=null,
        crossfit_k=crossfit_k,
        influence=infl,
    )


# ---------------------------------------------------------------------------
# structural diagnostics


@dataclass(frozen=True, eq=False)
class PassThroughReport:
    """Coefficient recovery when the truth enters the design on the link scale."""

    column_names: tuple[str, ...]
    beta: np.ndarray
    se: np.ndarray
    targets: np.ndarray
    z_scores: np.ndarray

    @property
    def max_abs_z(self) -> float:
        return float(np.max(np.abs(self.z_scores)))

    def within(self, z_bound: float = 3.0) -> bool:
        return self.max_abs_z <= z_bound


def oracle_passthrough_check(
    family_link: FamilyLink,
    dataset: TrialDataset,
    scores: np.ndarray,
    arm_shift: float,
    include_covariates: bool = True,
) -> PassThroughReport:
    """Fit [1, A, g(score), W] and compare against (0, arm_shift, 1, 0, ...).

    Meaningful when the generating means satisfy g(mu(w, a)) = g(score(w)) +
    a * arm_shift: the score column should then absorb everything, leaving a
    unit slope on g(score), arm_shift on the arm, and zeros elsewhere.
    Standard errors are the usual inverse expected-information diagonal.
    """
    from .glm import CovariateTerm, PrognosticTerm

    scores = np.asarray(scores, dtype=float)
    terms = [PrognosticTerm()]
    if include_covariates:
        terms.extend(CovariateTerm(name) for name in dataset.covariate_names)
    spec = DesignSpec(terms=tuple(terms))
    X = build_design(spec, dataset, scores, link=family_link)
    fit = fit_glm(
        family_link, X, dataset.y, spec=spec, covariate_names=dataset.covariate_names
    )
    info = fisher_information(fit, X)
    se = np.sqrt(np.diag(np.linalg.inv(info)))
    targets = np.zeros(X.shape[1])
    targets[1] = arm_shift
    targets[2] = 1.0
    z = (fit.beta - targets) / se
    return PassThroughReport(
        column_names=spec.column_names,
        beta=fit.beta,
        se=se,
        targets=targets,
        z_scores=z,
    )


@dataclass(frozen=True, eq=False)
class NestedVarianceReport:
    """Estimated influence variances for a smaller and a larger linear design."""

    variance_small: float
    variance_big: float

    @property
    def drop(self) -> float:
        return self.variance_small - self.variance_big

    @property
    def relative_change(self) -> float:
        return (self.variance_big - self.variance_small) / self.variance_small


def nested_variance_check(
    small: DesignSpec,
    big: DesignSpec,
    dataset: TrialDataset,
    effect: EffectMeasure,
    scores: np.ndarray | None = None,
) -> NestedVarianceReport:
    """Compare estimated variances of two nested normal/identity designs.

    Requires 1:1 randomization and small nested in big; under those conditions
    the larger design's limiting variance cannot exceed the smaller one's, so
    any estimated increase beyond noise signals an implementation fault.
    """
    if not small.is_nested_in(big):
        raise ValueError("small design is not nested in the big design")
    if dataset.pi1 != 0.5:
        raise ValueError("nested variance comparison requires pi1 = 0.5")
    fl = FamilyLink("normal", "identity")
    est_small = estimate_marginal_effect(fl, small, effect, dataset, scores=scores)
    est_big = estimate_marginal_effect(fl, big, effect, dataset, scores=scores)
    return NestedVarianceReport(
        variance_small=est_small.variance, variance_big=est_big.variance
    )
