"""Simulation laboratory: a Poisson outcome generator with a latent severity
driver, scenario grids for trial and historical populations, and a replicate
pipeline running the six benchmark analysis strategies end to end.

Replicates are seeded by spawning one child sequence per replicate index off
the scenario's master seed, so results are identical for any worker count
and any execution order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from multiprocessing import get_context
from typing import Sequence

import numpy as np
from scipy.stats import norm

from .data import HistoricalDataset, TrialDataset
from .effects import RATIO
from .estimator import CrossFit, CrossFitError, estimate_marginal_effect
from .glm import CovariateTerm, DesignSpec, FamilyLink, GlmError, PrognosticTerm
from .power import (
    PopulationParams,
    PowerPlanningError,
    PowerSpec,
    estimate_population_params,
    required_sample_size,
)
from .prognostic import (
    HingeLearner,
    clip_scores_for_link,
    shuffle_scores,
    train_hinge_learner,
)

__all__ = [
    "COVARIATE_NAMES",
    "TRIAL_SCENARIOS",
    "HIST_SCENARIOS",
    "ESTIMATOR_NAMES",
    "ScenarioSpec",
    "EstimatorResult",
    "ReplicateResult",
    "SummaryRow",
    "ExperimentResult",
    "hinge",
    "expected_abs_normal",
    "conditional_mean",
    "oracle_score",
    "population_control_mean",
    "true_effect",
    "sample_trial",
    "sample_historical",
    "run_replicate",
    "run_experiment",
    "summarize",
    "write_summary_csv",
    "write_replicates_csv",
]

COVARIATE_NAMES = ("w1", "w2", "w3", "w4", "w5")

# (log-scale arm shift, heterogeneity switch)
TRIAL_SCENARIOS: dict[str, tuple[float, float]] = {
    "null": (0.0, 0.0),
    "additive": (0.2, 0.0),
    "heterogeneous": (0.057, 1.0),
}

# (latent severity shift, observed covariate shift) of the historical population
HIST_SCENARIOS: dict[str, tuple[float, float]] = {
    "no-shift": (0.0, 0.0),
    "small-unobserved": (1.5, 0.0),
    "small-observed": (0.0, 1.5),
    "large-unobserved": (3.0, 0.0),
    "large-observed": (0.0, 3.0),
}

ESTIMATOR_NAMES = (
    "none",
    "covariates",
    "noise+covariates",
    "oracle+covariates",
    "prognostic-only",
    "prognostic+covariates",
)

_NB_DISPERSION = 3.0
_PROG_CV_FOLDS = 5


def hinge(x):
    return np.maximum(x, 0.0)


def expected_abs_normal(mean: float) -> float:
    """E|Z| for Z ~ N(mean, 1), by the folded-normal moment formula."""
    return float(
        math.sqrt(2.0 / math.pi) * math.exp(-0.5 * mean * mean)
        + mean * (1.0 - 2.0 * norm.cdf(-mean))
    )


def conditional_mean(
    u,
    w,
    arm: int,
    zeta: float = 0.0,
    heterogeneity: float = 0.0,
    alt_treated_form: bool = False,
):
    """Mean outcome given latent severity u and covariates w under an arm.

    The control surface mixes a kinked main effect, a parabola, a product
    kink, and a severity-modulated ramp; only w5 is pure noise.  Treatment
    scales the control surface and, when heterogeneity is on, adds a lift
    that grows with w4.  alt_treated_form applies the heterogeneity lift on
    the log scale instead; it is selectable but not the default.
    """
    u = np.asarray(u, dtype=float)
    w = np.asarray(w, dtype=float)
    base = (
        0.1
        + 2.0 * hinge(w[..., 0] + 1.0)
        + w[..., 1] ** 2
        + hinge(w[..., 0] * w[..., 3])
        + np.abs(u) * hinge(w[..., 2] + 2.0)
    )
    if arm == 0:
        return base
    if alt_treated_form:
        return base * np.exp(zeta + 2.0 * heterogeneity * hinge(w[..., 3]))
    return np.exp(zeta) * (base + 2.0 * heterogeneity * hinge(w[..., 3]))


def oracle_score(w, unobserved_shift: float = 0.0):
    """True control-arm regression of the outcome on covariates alone.

    Marginalizes the latent severity out of the control surface; |u| folds
    to its mean.  The shift argument selects which population's severity
    distribution to integrate over (0 is the trial population).
    """
    w = np.asarray(w, dtype=float)
    return (
        0.1
        + 2.0 * hinge(w[..., 0] + 1.0)
        + w[..., 1] ** 2
        + hinge(w[..., 0] * w[..., 3])
        + expected_abs_normal(unobserved_shift) * hinge(w[..., 2] + 2.0)
    )


def population_control_mean() -> float:
    """Closed-form mean control outcome in the trial population.

    Each additive piece integrates in closed form against the standard
    normal: E max(Z + c, 0) = c * Phi(c) + phi(c), E Z^2 = 1,
    E max(Z1 Z2, 0) = E|Z1 Z2| / 2 = 1 / pi, and E|Z| = sqrt(2 / pi).
    """
    e_h1 = 1.0 * norm.cdf(1.0) + norm.pdf(1.0)
    e_h3 = 2.0 * norm.cdf(2.0) + norm.pdf(2.0)
    return float(
        0.1
        + 2.0 * e_h1
        + 1.0
        + 1.0 / math.pi
        + math.sqrt(2.0 / math.pi) * e_h3
    )


_ALT_EFFECT_CACHE: dict[tuple[float, float], float] = {}


@dataclass(frozen=True)
class ScenarioSpec:
    """One cell of the simulation grid.

    trial_scenario picks the treatment structure; historical_scenario picks
    how the historical population is shifted relative to the trial one.
    seed is the master seed: replicate r uses the child sequence spawned at
    key (r,), nothing else.
    """

    trial_scenario: str
    historical_scenario: str
    n_trial: int = 250
    n_hist: int = 2500
    reps: int = 500
    seed: int = 0
    alt_treated_form: bool = False

    def __post_init__(self) -> None:
        if self.trial_scenario not in TRIAL_SCENARIOS:
            raise ValueError(
                f"unknown trial scenario {self.trial_scenario!r}; "
                f"known: {tuple(TRIAL_SCENARIOS)}"
            )
        if self.historical_scenario not in HIST_SCENARIOS:
            raise ValueError(
                f"unknown historical scenario {self.historical_scenario!r}; "
                f"known: {tuple(HIST_SCENARIOS)}"
            )
        if self.n_trial < 20:
            raise ValueError(f"n_trial must be at least 20, got {self.n_trial}")
        if self.n_hist < 50:
            raise ValueError(f"n_hist must be at least 50, got {self.n_hist}")
        if self.reps < 1:
            raise ValueError(f"reps must be positive, got {self.reps}")

    @property
    def zeta(self) -> float:
        return TRIAL_SCENARIOS[self.trial_scenario][0]

    @property
    def heterogeneity(self) -> float:
        return TRIAL_SCENARIOS[self.trial_scenario][1]

    @property
    def unobserved_shift(self) -> float:
        return HIST_SCENARIOS[self.historical_scenario][0]

    @property
    def observed_shift(self) -> float:
        return HIST_SCENARIOS[self.historical_scenario][1]

    @property
    def name(self) -> str:
        return f"{self.trial_scenario}/{self.historical_scenario}"


def true_effect(scenario: ScenarioSpec) -> float:
    """Population mean ratio of the two arms in the trial population.

    The default treated form factorizes, so the ratio is available in closed
    form; the alternative form needs Monte Carlo, cached per parameter set
    and driven by a fixed internal stream so the value never varies run to run.
    """
    zeta = scenario.zeta
    het = scenario.heterogeneity
    if not scenario.alt_treated_form:
        psi0 = population_control_mean()
        lift = 2.0 * het * norm.pdf(0.0)  # E max(Z, 0) = phi(0)
        return float(math.exp(zeta) * (psi0 + lift) / psi0)
    key = (zeta, het)
    if key not in _ALT_EFFECT_CACHE:
        rng = np.random.default_rng(np.random.SeedSequence(987_654_321))
        total0 = total1 = 0.0
        for _ in range(10):
            u = rng.normal(0.0, 1.0, 1_000_000)
            w = rng.normal(0.0, 1.0, (1_000_000, 5))
            total0 += float(np.sum(conditional_mean(u, w, 0)))
            total1 += float(
                np.sum(conditional_mean(u, w, 1, zeta, het, alt_treated_form=True))
            )
        _ALT_EFFECT_CACHE[key] = total1 / total0
    return _ALT_EFFECT_CACHE[key]


def sample_trial(
    scenario: ScenarioSpec, n: int, rng: np.random.Generator
) -> TrialDataset:
    """Draw a 1:1 randomized trial from the unshifted population.

    Draw order is fixed (severity, covariates, arms, outcomes) so a given
    generator state always yields the same dataset.
    """
    u = rng.normal(0.0, 1.0, n)
    w = rng.normal(0.0, 1.0, (n, 5))
    a = rng.integers(0, 2, n)
    m0 = conditional_mean(u, w, 0)
    m1 = conditional_mean(
        u, w, 1, scenario.zeta, scenario.heterogeneity, scenario.alt_treated_form
    )
    y = rng.poisson(np.where(a == 1, m1, m0)).astype(float)
    return TrialDataset(
        ids=tuple(str(i) for i in range(n)),
        w=w,
        a=a,
        y=y,
        pi1=0.5,
        covariate_names=COVARIATE_NAMES,
    )


def sample_historical(
    scenario: ScenarioSpec, n: int, rng: np.random.Generator
) -> HistoricalDataset:
    """Draw control-only data from the (possibly shifted) historical population."""
    u = rng.normal(scenario.unobserved_shift, 1.0, n)
    w = rng.normal(0.0, 1.0, (n, 5))
    w[:, 0] += scenario.observed_shift
    y = rng.poisson(conditional_mean(u, w, 0)).astype(float)
    return HistoricalDataset(
        ids=tuple(str(i) for i in range(n)),
        w=w,
        y=y,
        covariate_names=COVARIATE_NAMES,
    )


# ---------------------------------------------------------------------------
# the six benchmark strategies


@dataclass(frozen=True)
class _StrategyConfig:
    score_source: str  # "none", "learned", "shuffled", "oracle"
    with_covariates: bool


_STRATEGIES: dict[str, _StrategyConfig] = {
    "none": _StrategyConfig("none", False),
    "covariates": _StrategyConfig("none", True),
    "noise+covariates": _StrategyConfig("shuffled", True),
    "oracle+covariates": _StrategyConfig("oracle", True),
    "prognostic-only": _StrategyConfig("learned", False),
    "prognostic+covariates": _StrategyConfig("learned", True),
}


def _strategy_design(config: _StrategyConfig) -> DesignSpec:
    terms = []
    if config.score_source != "none":
        terms.append(PrognosticTerm())
    if config.with_covariates:
        terms.extend(CovariateTerm(name) for name in COVARIATE_NAMES)
    return DesignSpec(terms=tuple(terms))


@dataclass(frozen=True)
class EstimatorResult:
    estimator: str
    status: str  # "ok" or "failed"
    message: str = ""
    psi_hat: float = float("nan")
    se: float = float("nan")
    ci_lo: float = float("nan")
    ci_hi: float = float("nan")
    p_value: float = float("nan")
    significant: bool | None = None
    covered: bool | None = None
    n_required: int | None = None


@dataclass(frozen=True)
class ReplicateResult:
    scenario: str
    n_trial: int
    rep: int
    results: tuple[EstimatorResult, ...]


@dataclass(frozen=True, eq=False)
class _ReplicateInputs:
    """Intermediate products of one replicate, exposed for verification."""

    historical: HistoricalDataset
    trial: TrialDataset
    learned_scores: np.ndarray
    shuffled_scores: np.ndarray
    oracle_scores: np.ndarray
    n_required: dict[str, int | None]
    params: dict[str, PopulationParams]


def _replicate_seeds(scenario: ScenarioSpec, rep: int):
    root = np.random.SeedSequence(entropy=scenario.seed, spawn_key=(rep,))
    children = root.spawn(6)
    return {
        "hist": children[0],
        "trial": children[1],
        "folds": int(children[2].generate_state(1)[0]),
        "shuffle": int(children[3].generate_state(1)[0]),
        "cv_glm": int(children[4].generate_state(1)[0]),
        "cv_prog": int(children[5].generate_state(1)[0]),
    }


def _planning_inputs(
    scenario: ScenarioSpec,
    estimators: Sequence[str],
    historical: HistoricalDataset,
    target: float,
    seeds,
) -> tuple[dict[str, PopulationParams], dict[str, int | None]]:
    fl = FamilyLink("negative-binomial", "log", _NB_DISPERSION)
    glm_spec = DesignSpec(terms=tuple(CovariateTerm(n) for n in COVARIATE_NAMES))
    # model arguments shared within groups, so the expensive CV runs happen once
    group_of = {
        "none": "unadjusted",
        "covariates": "glm",
        "noise+covariates": "glm",
        "oracle+covariates": "oracle",
        "prognostic-only": "hinge",
        "prognostic+covariates": "hinge",
    }
    model_arg = {
        "unadjusted": None,
        "glm": (fl, glm_spec),
        "oracle": lambda w: oracle_score(w),
        "hinge": HingeLearner(),
    }
    seed_of = {"unadjusted": 0, "glm": seeds["cv_glm"], "oracle": 0, "hinge": seeds["cv_prog"]}

    params_by_group: dict[str, PopulationParams] = {}
    params: dict[str, PopulationParams] = {}
    n_required: dict[str, int | None] = {}
    power_spec = PowerSpec(effect=RATIO, target_effect=target, alpha=0.05, power=0.8)
    for name in estimators:
        group = group_of[name]
        if group not in params_by_group:
            params_by_group[group] = estimate_population_params(
                historical,
                RATIO,
                target,
                model=model_arg[group],
                pi1=0.5,
                cv_folds=_PROG_CV_FOLDS,
                seed=seed_of[group],
            )
        params[name] = params_by_group[group]
        try:
            n_required[name] = required_sample_size(params[name], power_spec)
        except PowerPlanningError:
            n_required[name] = None
    return params, n_required


def _prepare_replicate(
    scenario: ScenarioSpec,
    rep: int,
    estimators: Sequence[str],
    true_effect_value: float,
) -> tuple[_ReplicateInputs, int]:
    seeds = _replicate_seeds(scenario, rep)
    historical = sample_historical(scenario, scenario.n_hist, np.random.default_rng(seeds["hist"]))
    trial = sample_trial(scenario, scenario.n_trial, np.random.default_rng(seeds["trial"]))

    fl = FamilyLink("negative-binomial", "log", _NB_DISPERSION)
    needs_model = any(
        _STRATEGIES[name].score_source in ("learned", "shuffled") for name in estimators
    )
    if needs_model:
        model = train_hinge_learner(historical)
        learned = clip_scores_for_link(model.predict(trial), fl)
        shuffled = shuffle_scores(learned, seeds["shuffle"])
    else:
        learned = np.zeros(trial.n)
        shuffled = np.zeros(trial.n)
    oracle = clip_scores_for_link(oracle_score(trial.w), fl)

    params, n_required = _planning_inputs(
        scenario, estimators, historical, true_effect_value, seeds
    )
    inputs = _ReplicateInputs(
        historical=historical,
        trial=trial,
        learned_scores=learned,
        shuffled_scores=shuffled,
        oracle_scores=oracle,
        n_required=n_required,
        params=params,
    )
    return inputs, seeds["folds"]


def run_replicate(
    scenario: ScenarioSpec,
    rep: int,
    estimators: Sequence[str] = ESTIMATOR_NAMES,
    crossfit_k: int = 10,
    true_effect_value: float | None = None,
) -> ReplicateResult:
    """One full replicate: draw data, train, plan, analyze every strategy.

    crossfit_k = 0 analyzes with a single in-sample fit.  A strategy whose
    working model fails is recorded as failed with the error message; the
    other strategies still run.
    """
    for name in estimators:
        if name not in _STRATEGIES:
            raise ValueError(f"unknown estimator {name!r}; known: {ESTIMATOR_NAMES}")
    if true_effect_value is None:
        true_effect_value = true_effect(scenario)
    inputs, fold_seed = _prepare_replicate(scenario, rep, estimators, true_effect_value)

    fl = FamilyLink("negative-binomial", "log", _NB_DISPERSION)
    variance_mode = CrossFit(k=crossfit_k, seed=fold_seed) if crossfit_k else "plain"
    score_vectors = {
        "none": None,
        "learned": inputs.learned_scores,
        "shuffled": inputs.shuffled_scores,
        "oracle": inputs.oracle_scores,
    }
    results = []
    for name in estimators:
        config = _STRATEGIES[name]
        spec = _strategy_design(config)
        scores = score_vectors[config.score_source]
        try:
            est = estimate_marginal_effect(
                fl,
                spec,
                RATIO,
                inputs.trial,
                scores=scores,
                variance_mode=variance_mode,
                alpha=0.05,
            )
        except (GlmError, CrossFitError) as err:
            results.append(
                EstimatorResult(
                    estimator=name,
                    status="failed",
                    message=str(err),
                    n_required=inputs.n_required[name],
                )
            )
            continue
        results.append(
            EstimatorResult(
                estimator=name,
                status="ok",
                psi_hat=est.psi_hat,
                se=est.se,
                ci_lo=est.ci[0],
                ci_hi=est.ci[1],
                p_value=est.p_value,
                significant=bool(est.significant),
                covered=bool(est.ci[0] <= true_effect_value <= est.ci[1]),
                n_required=inputs.n_required[name],
            )
        )
    return ReplicateResult(
        scenario=scenario.name, n_trial=scenario.n_trial, rep=rep, results=tuple(results)
    )


# ---------------------------------------------------------------------------
# experiment driver


@dataclass(frozen=True)
class SummaryRow:
    scenario: str
    n_trial: int
    estimator: str
    reps: int
    reps_ok: int
    reps_failed: int
    true_effect: float
    mean_psi_hat: float | None
    sd_psi_hat: float | None
    mean_se: float | None
    coverage: float | None
    rejection_rate: float | None
    rel_se_mean: float | None
    rel_se_median: float | None
    rel_se_q25: float | None
    rel_se_q75: float | None
    rel_se_p05: float | None
    rel_se_p95: float | None
    mean_n_required: float | None
    median_n_required: float | None


SUMMARY_COLUMNS = (
    "scenario",
    "n_trial",
    "estimator",
    "reps",
    "reps_ok",
    "reps_failed",
    "true_effect",
    "mean_psi_hat",
    "sd_psi_hat",
    "mean_se",
    "coverage",
    "rejection_rate",
    "rel_se_mean",
    "rel_se_median",
    "rel_se_q25",
    "rel_se_q75",
    "rel_se_p05",
    "rel_se_p95",
    "mean_n_required",
    "median_n_required",
)

REPLICATE_COLUMNS = (
    "scenario",
    "n_trial",
    "rep",
    "estimator",
    "status",
    "psi_hat",
    "se",
    "ci_lo",
    "ci_hi",
    "p_value",
    "significant",
    "covered",
    "n_required",
    "message",
)


@dataclass(frozen=True)
class ExperimentResult:
    scenarios: tuple[ScenarioSpec, ...]
    replicates: tuple[ReplicateResult, ...]
    summary: tuple[SummaryRow, ...]


def _replicate_task(payload) -> ReplicateResult:
    scenario, rep, estimators, crossfit_k, true_value = payload
    return run_replicate(scenario, rep, estimators, crossfit_k, true_value)


def run_experiment(
    scenarios: Sequence[ScenarioSpec],
    estimators: Sequence[str] = ESTIMATOR_NAMES,
    workers: int = 1,
    crossfit_k: int = 10,
) -> ExperimentResult:
    """Run every scenario's replicates, serially or across worker processes.

    The output is invariant to the worker count: replicate seeds depend only
    on (scenario seed, replicate index), population effects are computed in
    the parent, and results are sorted before summarizing.
    """
    estimators = tuple(estimators)
    scenarios = tuple(scenarios)
    if workers < 1:
        raise ValueError(f"workers must be positive, got {workers}")
    payloads = []
    for s_idx, scenario in enumerate(scenarios):
        target = true_effect(scenario)
        for rep in range(scenario.reps):
            payloads.append((scenario, rep, estimators, crossfit_k, target))

    if workers == 1:
        raw = [_replicate_task(p) for p in payloads]
    else:
        ctx = get_context("spawn")
        chunk = max(1, len(payloads) // (workers * 8))
        with ctx.Pool(processes=workers) as pool:
            raw = pool.map(_replicate_task, payloads, chunksize=chunk)

    order = {(s.name, s.n_trial): i for i, s in enumerate(scenarios)}
    replicates = tuple(
        sorted(raw, key=lambda r: (order[(r.scenario, r.n_trial)], r.rep))
    )
    summary = summarize(scenarios, replicates, estimators)
    return ExperimentResult(scenarios=scenarios, replicates=replicates, summary=summary)


def _mean(values: list[float]) -> float | None:
    return float(np.mean(values)) if values else None


def summarize(
    scenarios: Sequence[ScenarioSpec],
    replicates: Sequence[ReplicateResult],
    estimators: Sequence[str],
) -> tuple[SummaryRow, ...]:
    """Aggregate replicate outcomes per (scenario, estimator).

    Relative SE statistics compare each strategy's standard error to the
    plain covariate-adjusted strategy within the same replicate, so they
    exist only when 'covariates' is among the estimators and both runs
    succeeded.
    """
    rows = []
    for scenario in scenarios:
        scoped = [
            r
            for r in replicates
            if r.scenario == scenario.name and r.n_trial == scenario.n_trial
        ]
        target = true_effect(scenario)
        ref_se: dict[int, float] = {}
        for rep_result in scoped:
            for res in rep_result.results:
                if res.estimator == "covariates" and res.status == "ok":
                    ref_se[rep_result.rep] = res.se
        for name in estimators:
            picked = [
                (r.rep, res)
                for r in scoped
                for res in r.results
                if res.estimator == name
            ]
            ok = [(rep, res) for rep, res in picked if res.status == "ok"]
            psis = [res.psi_hat for _, res in ok]
            ses = [res.se for _, res in ok]
            rels = [
                res.se / ref_se[rep]
                for rep, res in ok
                if rep in ref_se and ref_se[rep] > 0.0
            ]
            n_reqs = [res.n_required for _, res in picked if res.n_required is not None]
            rows.append(
                SummaryRow(
                    scenario=scenario.name,
                    n_trial=scenario.n_trial,
                    estimator=name,
                    reps=len(picked),
                    reps_ok=len(ok),
                    reps_failed=len(picked) - len(ok),
                    true_effect=target,
                    mean_psi_hat=_mean(psis),
                    sd_psi_hat=float(np.std(psis, ddof=1)) if len(psis) > 1 else None,
                    mean_se=_mean(ses),
                    coverage=_mean([float(res.covered) for _, res in ok]),
                    rejection_rate=_mean([float(res.significant) for _, res in ok]),
                    rel_se_mean=_mean(rels),
                    rel_se_median=float(np.median(rels)) if rels else None,
                    rel_se_q25=float(np.percentile(rels, 25)) if rels else None,
                    rel_se_q75=float(np.percentile(rels, 75)) if rels else None,
                    rel_se_p05=float(np.percentile(rels, 5)) if rels else None,
                    rel_se_p95=float(np.percentile(rels, 95)) if rels else None,
                    mean_n_required=_mean([float(v) for v in n_reqs]),
                    median_n_required=float(np.median(n_reqs)) if n_reqs else None,
                )
            )
    return tuple(rows)


def _csv_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return repr(int(value))
    if isinstance(value, float):
        if math.isnan(value):
            return ""
        return repr(value)
    return str(value)


def write_summary_csv(summary: Sequence[SummaryRow], path: str) -> None:
    import csv

    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(SUMMARY_COLUMNS)
        for row in summary:
            writer.writerow([_csv_cell(getattr(row, col)) for col in SUMMARY_COLUMNS])


def write_replicates_csv(replicates: Sequence[ReplicateResult], path: str) -> None:
    import csv

    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(REPLICATE_COLUMNS)
        for rep_result in replicates:
            for res in rep_result.results:
                writer.writerow(
                    [
                        rep_result.scenario,
                        repr(rep_result.n_trial),
                        repr(rep_result.rep),
                        res.estimator,
                        res.status,
                        _csv_cell(res.psi_hat),
                        _csv_cell(res.se),
                        _csv_cell(res.ci_lo),
                        _csv_cell(res.ci_hi),
                        _csv_cell(res.p_value),
                        _csv_cell(res.significant),
                        _csv_cell(res.covered),
                        _csv_cell(res.n_required),
                        res.message,
                    ]
                )
