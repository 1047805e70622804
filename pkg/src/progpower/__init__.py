"""progpower: marginal effect estimation with GLM working models, prognostic
score learning, influence-function inference, and prospective power planning
for randomized trials, plus a simulation laboratory for benchmarking.
"""

__version__ = "0.1.0"

from .data import (
    DataFormatError,
    FoldAssignment,
    HistoricalDataset,
    InfeasibleFoldError,
    TrialDataset,
    load_historical_csv,
    load_trial_csv,
    make_folds,
    make_plain_folds,
    split_historical,
    write_historical_csv,
    write_trial_csv,
)
from .effects import (
    BUILTIN_EFFECTS,
    DIFFERENCE,
    ODDS_RATIO,
    RATIO,
    EffectDomainError,
    EffectMeasure,
    EffectSolveError,
    MonotonicityReport,
    check_monotonicity,
    effect_gradient,
    evaluate_effect,
    get_effect,
    make_custom_effect,
    solve_psi1,
)
from .glm import (
    CovariateTerm,
    DesignParseError,
    DesignSpec,
    FamilyLink,
    GlmConvergenceError,
    GlmDivergenceError,
    GlmDomainError,
    GlmError,
    GlmFit,
    GlmSingularError,
    InteractionTerm,
    LogTerm,
    PrognosticTerm,
    build_covariate_design,
    build_design,
    counterfactual_means,
    fisher_information,
    fit_glm,
    predict_mean,
)
from .prognostic import (
    GlmMainTermsLearner,
    HingeFactor,
    HingeLearner,
    InterceptOnlyLearner,
    LinearFactor,
    ModelFormatError,
    ModelTerm,
    PrognosticModel,
    clip_scores_for_link,
    cv_rmse,
    default_library,
    load_model,
    save_model,
    select_model_cv,
    shuffle_scores,
    train_hinge_learner,
)
from .estimator import (
    CrossFit,
    CrossFitError,
    EffectEstimate,
    InfluenceVector,
    NestedVarianceReport,
    PassThroughReport,
    estimate_counterfactual_mean,
    estimate_marginal_effect,
    influence_values,
    nested_variance_check,
    oracle_passthrough_check,
)
from .power import (
    PopulationParams,
    PowerPlanningError,
    PowerSpec,
    estimate_population_params,
    planning_variance,
    power_at_n,
    reduced_variance,
    required_sample_size,
    variance_bound,
)
from .simlab import (
    ESTIMATOR_NAMES,
    HIST_SCENARIOS,
    TRIAL_SCENARIOS,
    ExperimentResult,
    ReplicateResult,
    ScenarioSpec,
    SummaryRow,
    conditional_mean,
    expected_abs_normal,
    oracle_score,
    population_control_mean,
    run_experiment,
    run_replicate,
    sample_historical,
    sample_trial,
    summarize,
    true_effect,
    write_replicates_csv,
    write_summary_csv,
)
from .charts import box_chart_svg, line_chart_svg, write_summary_charts
