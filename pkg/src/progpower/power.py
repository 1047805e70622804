"""Prospective power and sample-size planning from historical control data.

Planning proceeds in two steps: estimate population quantities (control mean
and variance, model residual variances, the treated counterparts implied by
the target effect), then push them through a limiting-variance formula and a
normal-approximation power curve.

Three variance formulas are exposed.  reduced_variance is the general
limiting form including the cross-arm covariance structure; variance_bound
replaces the unidentifiable covariance with its worst admissible value and
sits above reduced_variance everywhere; planning_variance sets the covariance
contribution to zero, which is exact for an unadjusted analysis and is the
form the sample-size search uses.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Union

import numpy as np
from scipy.stats import norm

from .data import HistoricalDataset, make_plain_folds
from .effects import EffectMeasure, solve_psi1
from .glm import DesignSpec, FamilyLink, build_covariate_design, fit_glm
from .prognostic import LearnerCandidate, PrognosticModel, cv_rmse

__all__ = [
    "PowerPlanningError",
    "PopulationParams",
    "PowerSpec",
    "estimate_population_params",
    "reduced_variance",
    "variance_bound",
    "planning_variance",
    "power_at_n",
    "required_sample_size",
]


class PowerPlanningError(ValueError):
    """Raised when a planning quantity is undefined or unattainable."""


@dataclass(frozen=True)
class PopulationParams:
    """Population quantities the limiting variance formulas consume.

    kappa0_sq / kappa1_sq are mean squared prediction errors of the limiting
    working model within each arm; sigma0_sq / sigma1_sq are the outcome
    variances.  tau is the correlation of the two counterfactual outcomes and
    eta the correlation of the two model errors; both default to zero and
    only enter reduced_variance.
    """

    psi0: float
    psi1: float
    sigma0_sq: float
    sigma1_sq: float
    kappa0_sq: float
    kappa1_sq: float
    pi1: float = 0.5
    tau: float = 0.0
    eta: float = 0.0

    def __post_init__(self) -> None:
        if not (0.0 < self.pi1 < 1.0):
            raise PowerPlanningError(f"pi1 must lie in (0, 1), got {self.pi1}")
        for name in ("sigma0_sq", "sigma1_sq", "kappa0_sq", "kappa1_sq"):
            if getattr(self, name) < 0.0:
                raise PowerPlanningError(f"{name} must be nonnegative")
        for name in ("tau", "eta"):
            if not (-1.0 <= getattr(self, name) <= 1.0):
                raise PowerPlanningError(f"{name} must lie in [-1, 1]")

    @property
    def pi0(self) -> float:
        return 1.0 - self.pi1


@dataclass(frozen=True)
class PowerSpec:
    """Design of the planned test: effect scale, target, and error rates."""

    effect: EffectMeasure
    target_effect: float
    alpha: float = 0.05
    power: float = 0.8
    null_value: float | None = None
    one_sided: bool = False

    def __post_init__(self) -> None:
        if not (0.0 < self.alpha < 1.0):
            raise PowerPlanningError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not (0.0 < self.power < 1.0):
            raise PowerPlanningError(f"power must lie in (0, 1), got {self.power}")

    @property
    def resolved_null(self) -> float:
        return self.effect.null_value if self.null_value is None else self.null_value


ModelArgument = Union[
    None,
    PrognosticModel,
    Callable[[np.ndarray], np.ndarray],
    LearnerCandidate,
    tuple[FamilyLink, DesignSpec],
]


def _cv_glm_mse(
    family_link: FamilyLink,
    spec: DesignSpec,
    data: HistoricalDataset,
    k: int,
    seed: int,
) -> float:
    """Pooled out-of-fold squared error of a refit-per-fold GLM."""
    fold_of = make_plain_folds(data.n, k, seed)
    preds = np.empty(data.n)
    for fold in range(k):
        train_idx = np.flatnonzero(fold_of != fold)
        test_idx = np.flatnonzero(fold_of == fold)
        train = data.take(train_idx)
        X = build_covariate_design(spec, train, link=family_link)
        fit = fit_glm(family_link, X, train.y)
        X_test = build_covariate_design(spec, data.take(test_idx), link=family_link)
        preds[test_idx] = fit.mean(X_test)
    return float(np.mean((data.y - preds) ** 2))


def estimate_population_params(
    data: HistoricalDataset,
    effect: EffectMeasure,
    target_effect: float,
    model: ModelArgument = None,
    *,
    pi1: float = 0.5,
    cv_folds: int = 5,
    seed: int = 0,
    binary_outcome: bool | None = None,
    inflation_kappa1: float = 1.0,
    inflation_sigma1: float = 1.0,
    tau: float = 0.0,
    eta: float = 0.0,
) -> PopulationParams:
    """Plug-in population quantities from a historical control sample.

    The control mean and variance are empirical moments; psi1 inverts the
    effect measure at the target.  kappa0_sq depends on the model argument:

    - None: no adjustment is planned, so kappa0_sq = sigma0_sq;
    - a fitted PrognosticModel or a callable on the covariate matrix:
      empirical mean squared error of its predictions on this sample;
    - a LearnerCandidate (an unfitted recipe): squared cross-validated RMSE,
      refit per fold, so optimism from in-sample fitting never enters;
    - a (FamilyLink, DesignSpec) pair: cross-validated squared error of the
      refit-per-fold GLM with those adjustment terms.

    Treated-arm quantities are extrapolated: kappa1_sq (and, for non-binary
    outcomes, sigma1_sq) scale the control values by the inflation factors,
    while binary outcomes take sigma1_sq = psi1 (1 - psi1) exactly.
    """
    y = data.y
    psi0 = float(np.mean(y))
    sigma0_sq = float(np.mean((y - psi0) ** 2))

    if model is None:
        kappa0_sq = sigma0_sq
    elif isinstance(model, PrognosticModel):
        kappa0_sq = float(np.mean((y - model.predict(data)) ** 2))
    elif isinstance(model, tuple):
        family_link, spec = model
        kappa0_sq = _cv_glm_mse(family_link, spec, data, cv_folds, seed)
    elif hasattr(model, "fit"):
        kappa0_sq = float(cv_rmse(model, data, k=cv_folds, seed=seed) ** 2)
    elif callable(model):
        kappa0_sq = float(np.mean((y - np.asarray(model(data.w), dtype=float)) ** 2))
    else:
        raise PowerPlanningError(f"unsupported model argument {type(model).__name__}")

    psi1 = solve_psi1(effect, psi0, target_effect)

    if binary_outcome is None:
        binary_outcome = bool(np.all((y == 0.0) | (y == 1.0)))
    if binary_outcome:
        sigma1_sq = float(psi1 * (1.0 - psi1))
    else:
        sigma1_sq = sigma0_sq * inflation_sigma1
    kappa1_sq = kappa0_sq * inflation_kappa1

    return PopulationParams(
        psi0=psi0,
        psi1=psi1,
        sigma0_sq=sigma0_sq,
        sigma1_sq=sigma1_sq,
        kappa0_sq=kappa0_sq,
        kappa1_sq=kappa1_sq,
        pi1=pi1,
        tau=tau,
        eta=eta,
    )


def _gradient_weights(
    params: PopulationParams, effect: EffectMeasure
) -> tuple[float, float]:
    g1, g0 = effect.gradient(params.psi1, params.psi0)
    if g1 < 0.0 or g0 > 0.0:
        raise PowerPlanningError(
            f"effect measure {effect.name!r} violates the monotone gradient "
            f"convention at ({params.psi1}, {params.psi0}); planning formulas "
            f"would be invalid"
        )
    return g1, g0


def reduced_variance(params: PopulationParams, effect: EffectMeasure) -> float:
    """Limiting variance of the adjusted estimator in reduced form.

    Combines per-arm residual and outcome variances with the cross-arm
    covariance contribution parameterized by tau and eta.
    """
    g1, g0 = _gradient_weights(params, effect)
    p1, p0 = params.pi1, params.pi0
    s0, s1 = np.sqrt(params.sigma0_sq), np.sqrt(params.sigma1_sq)
    k0, k1 = np.sqrt(params.kappa0_sq), np.sqrt(params.kappa1_sq)
    value = (
        g0 * g0 * (p1 / p0 * params.kappa0_sq + params.sigma0_sq)
        + g1 * g1 * (p0 / p1 * params.kappa1_sq + params.sigma1_sq)
        - 2.0 * abs(g0 * g1) * (params.tau * s0 * s1 - params.eta * k0 * k1)
    )
    return float(value)


def variance_bound(params: PopulationParams, effect: EffectMeasure) -> float:
    """Worst-case limiting variance over the unidentifiable covariance terms.

    Equals reduced_variance at the least favorable (tau, eta) and never falls
    below it for admissible correlations.  Algebraically it is the completed
    square g0^2 s0^2 + g1^2 s1^2 + p0 p1 (|g0| k0 / p0 + |g1| k1 / p1)^2.
    """
    g1, g0 = _gradient_weights(params, effect)
    p1, p0 = params.pi1, params.pi0
    k0, k1 = np.sqrt(params.kappa0_sq), np.sqrt(params.kappa1_sq)
    square = p0 * p1 * (abs(g0) * k0 / p0 + abs(g1) * k1 / p1) ** 2
    return float(g0 * g0 * params.sigma0_sq + g1 * g1 * params.sigma1_sq + square)


def planning_variance(params: PopulationParams, effect: EffectMeasure) -> float:
    """Covariance-neutral limiting variance used for powering.

    Drops the cross-arm covariance contribution entirely.  For an unadjusted
    analysis (kappa_a = sigma_a) this reproduces the classical two-sample
    variance sigma0^2/pi0 + sigma1^2/pi1 on the difference scale, for any
    allocation, which is what a conventional calculation would use.
    """
    g1, g0 = _gradient_weights(params, effect)
    p1, p0 = params.pi1, params.pi0
    return float(
        g0 * g0 * (p1 / p0 * params.kappa0_sq + params.sigma0_sq)
        + g1 * g1 * (p0 / p1 * params.kappa1_sq + params.sigma1_sq)
    )


def power_at_n(
    variance: float, spec: PowerSpec, n: int, psi_hat_target: float | None = None
) -> float:
    """Normal-approximation power of the level-alpha test at sample size n.

    Both the null and alternative sampling distributions are normal with the
    same variance/n; power is the chance the alternative lands beyond the
    null critical value, evaluated in the direction of the effect.
    """
    if n < 2:
        raise PowerPlanningError(f"sample size must be at least 2, got {n}")
    if not (variance > 0.0) or not np.isfinite(variance):
        raise PowerPlanningError(f"variance must be positive and finite, got {variance}")
    target = spec.target_effect if psi_hat_target is None else psi_hat_target
    delta = abs(target - spec.resolved_null)
    shift = delta * np.sqrt(n / variance)
    tail = 1.0 if spec.one_sided else 2.0
    z_crit = norm.ppf(1.0 - spec.alpha / tail)
    return float(norm.cdf(shift - z_crit))


def required_sample_size(
    params: PopulationParams, spec: PowerSpec, max_n: int = 100_000_000
) -> int:
    """Smallest n whose planning-variance power meets the target.

    Doubles an upper bracket then bisects on integers; by construction the
    returned n meets the target and n - 1 does not.  A target effect equal to
    the null is unattainable at any size and raises.
    """
    if spec.target_effect == spec.resolved_null:
        raise PowerPlanningError(
            "target effect equals the null value; no sample size attains the power"
        )
    variance = planning_variance(params, spec.effect)
    if variance <= 0.0:
        raise PowerPlanningError("planning variance is zero; power is ill-defined")

    lo, hi = 2, 2
    if power_at_n(variance, spec, hi) < spec.power:
        while power_at_n(variance, spec, hi) < spec.power:
            lo = hi
            hi *= 2
            if hi > max_n:
                raise PowerPlanningError(
                    f"no sample size up to {max_n} reaches power {spec.power}"
                )
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if power_at_n(variance, spec, mid) >= spec.power:
                hi = mid
            else:
                lo = mid
    return hi


def params_with_model_error(
    params: PopulationParams, kappa0_sq: float, inflation_kappa1: float = 1.0
) -> PopulationParams:
    """Copy of params with a different working-model residual variance."""
    return replace(
        params, kappa0_sq=kappa0_sq, kappa1_sq=kappa0_sq * inflation_kappa1
    )
