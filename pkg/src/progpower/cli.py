"""Command line interface: analyze, power, train, simulate.

Every subcommand accepts --config pointing at a JSON file with a
schema_version field; explicit flags override config values, config values
override built-in defaults, and unknown config keys are usage errors.
Runs that write artifacts also write a manifest.json recording the fully
resolved configuration and a sha256 per artifact.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys

import numpy as np

from . import __version__
from .data import load_historical_csv, load_trial_csv
from .effects import get_effect
from .estimator import CrossFit, estimate_marginal_effect
from .glm import DesignParseError, DesignSpec, FamilyLink
from .power import (
    PowerSpec,
    estimate_population_params,
    planning_variance,
    required_sample_size,
)
from .prognostic import (
    GlmMainTermsLearner,
    HingeLearner,
    InterceptOnlyLearner,
    clip_scores_for_link,
    load_model,
    save_model,
    select_model_cv,
)
from .simlab import (
    ESTIMATOR_NAMES,
    HIST_SCENARIOS,
    TRIAL_SCENARIOS,
    ScenarioSpec,
    run_experiment,
    write_replicates_csv,
    write_summary_csv,
)
from .charts import write_summary_charts

__all__ = ["main", "resolve_config"]

_SCHEMA_VERSION = 1

_DEFAULTS: dict[str, dict] = {
    "analyze": {
        "trial": None,
        "pi1": 0.5,
        "family": None,
        "link": None,
        "dispersion": None,
        "effect": None,
        "design": "",
        "prognostic_model": None,
        "crossfit": 0,
        "seed": 0,
        "alpha": 0.05,
        "null": None,
        "one_sided": None,
        "out": None,
    },
    "power": {
        "historical": None,
        "effect": None,
        "target": None,
        "alpha": 0.05,
        "power": 0.8,
        "pi1": 0.5,
        "null": None,
        "one_sided": False,
        "unadjusted": False,
        "design": None,
        "prognostic_model": None,
        "family": None,
        "link": None,
        "dispersion": None,
        "cv_folds": 5,
        "seed": 0,
        "binary": "auto",
        "inflation_kappa1": 1.0,
        "inflation_sigma1": 1.0,
        "out": None,
    },
    "train": {
        "historical": None,
        "out": None,
        "max_degree": 3,
        "num_terms": 50,
        "cv_folds": 5,
        "seed": 0,
        "hinge_only": False,
    },
    "simulate": {
        "out": None,
        "scenario": "additive/no-shift",
        "n_trial": "100,250,400",
        "n_hist": 2500,
        "reps": 500,
        "seed": 0,
        "workers": 1,
        "estimators": ",".join(ESTIMATOR_NAMES),
        "crossfit": 10,
        "alt_treated_form": False,
    },
}


def _load_config_file(path: str, parser: argparse.ArgumentParser) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as err:
        parser.error(f"cannot read config {path}: {err}")
    if not isinstance(raw, dict):
        parser.error(f"config {path} must hold a JSON object")
    if raw.get("schema_version") != _SCHEMA_VERSION:
        parser.error(
            f"config {path} must declare schema_version {_SCHEMA_VERSION}, "
            f"got {raw.get('schema_version')!r}"
        )
    return {k: v for k, v in raw.items() if k != "schema_version"}


def resolve_config(
    command: str,
    cli_values: dict,
    config_values: dict,
    parser: argparse.ArgumentParser | None = None,
) -> dict:
    """Merge defaults, config file values, and explicit flags (in that order)."""

    def fail(message: str):
        if parser is not None:
            parser.error(message)
        raise SystemExit(2)

    defaults = _DEFAULTS[command]
    unknown = sorted(set(config_values) - set(defaults))
    if unknown:
        fail(f"unknown config key {unknown[0]!r} for command {command!r}")
    merged = dict(defaults)
    merged.update(config_values)
    merged.update({k: v for k, v in cli_values.items() if v is not None})
    return merged


def _require(merged: dict, keys: list[str], parser: argparse.ArgumentParser) -> None:
    for key in keys:
        if merged[key] is None:
            parser.error(f"missing required option --{key.replace('_', '-')}")


def _sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            digest.update(block)
    return digest.hexdigest()


def _write_manifest(
    path: str, command: str, resolved: dict, artifact_paths: list[str]
) -> None:
    doc = {
        "schema_version": _SCHEMA_VERSION,
        "package": "progpower",
        "version": __version__,
        "command": command,
        "config": resolved,
        "artifacts": {os.path.basename(p): _sha256(p) for p in sorted(artifact_paths)},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _family_link(merged: dict, parser: argparse.ArgumentParser) -> FamilyLink:
    _require(merged, ["family", "link"], parser)
    if merged["family"] == "negative-binomial" and merged["dispersion"] is None:
        parser.error("--dispersion is required for the negative-binomial family")
    try:
        return FamilyLink(
            merged["family"],
            merged["link"],
            merged["dispersion"] if merged["family"] == "negative-binomial" else None,
        )
    except ValueError as err:
        parser.error(str(err))


def _parse_design(text: str, parser: argparse.ArgumentParser) -> DesignSpec:
    try:
        return DesignSpec.parse(text)
    except DesignParseError as err:
        parser.error(str(err))


# ---------------------------------------------------------------------------
# subcommands


def _cmd_analyze(merged: dict, parser: argparse.ArgumentParser) -> int:
    _require(merged, ["trial", "effect"], parser)
    family_link = _family_link(merged, parser)
    design = _parse_design(merged["design"], parser)
    effect = get_effect(merged["effect"])
    dataset = load_trial_csv(merged["trial"], pi1=float(merged["pi1"]))

    scores = None
    if design.has_prognostic:
        if merged["prognostic_model"] is None:
            parser.error("design uses a prognostic column; supply --prognostic-model")
        model = load_model(merged["prognostic_model"])
        scores = clip_scores_for_link(model.predict(dataset), family_link)
    elif merged["prognostic_model"] is not None:
        parser.error("--prognostic-model given but the design has no prognostic term")

    k = int(merged["crossfit"])
    mode = CrossFit(k=k, seed=int(merged["seed"])) if k else "plain"
    sided = {"lower": "less", "upper": "greater", "none": None, None: None}[merged["one_sided"]]
    est = estimate_marginal_effect(
        family_link,
        design,
        effect,
        dataset,
        scores=scores,
        variance_mode=mode,
        alpha=float(merged["alpha"]),
        null_value=merged["null"],
        one_sided=sided,
    )
    header = "psi,se,ci_lo,ci_hi,p,n,crossfit"
    row = (
        f"{est.psi_hat!r},{est.se!r},{est.ci[0]!r},{est.ci[1]!r},"
        f"{est.p_value!r},{est.n},{est.crossfit_k}"
    )
    print(header)
    print(row)
    if merged["out"]:
        os.makedirs(merged["out"], exist_ok=True)
        result_path = os.path.join(merged["out"], "result.csv")
        with open(result_path, "w", encoding="utf-8") as fh:
            fh.write(header + "\n" + row + "\n")
        _write_manifest(
            os.path.join(merged["out"], "manifest.json"), "analyze", merged, [result_path]
        )
    return 0


def _cmd_power(merged: dict, parser: argparse.ArgumentParser) -> int:
    _require(merged, ["historical", "effect", "target"], parser)
    modes = [
        bool(merged["unadjusted"]),
        merged["design"] is not None,
        merged["prognostic_model"] is not None,
    ]
    if sum(modes) != 1:
        parser.error(
            "choose exactly one of --unadjusted, --design, or --prognostic-model"
        )
    effect = get_effect(merged["effect"])
    data = load_historical_csv(merged["historical"])

    if merged["unadjusted"]:
        model_arg = None
    elif merged["prognostic_model"] is not None:
        model_arg = load_model(merged["prognostic_model"])
    else:
        family_link = _family_link(merged, parser)
        design = _parse_design(merged["design"], parser)
        model_arg = (family_link, design)

    binary = {"auto": None, "yes": True, "no": False}.get(str(merged["binary"]))
    if binary is None and str(merged["binary"]) != "auto":
        parser.error(f"--binary must be auto, yes, or no; got {merged['binary']!r}")
    params = estimate_population_params(
        data,
        effect,
        float(merged["target"]),
        model=model_arg,
        pi1=float(merged["pi1"]),
        cv_folds=int(merged["cv_folds"]),
        seed=int(merged["seed"]),
        binary_outcome=binary,
        inflation_kappa1=float(merged["inflation_kappa1"]),
        inflation_sigma1=float(merged["inflation_sigma1"]),
    )
    spec = PowerSpec(
        effect=effect,
        target_effect=float(merged["target"]),
        alpha=float(merged["alpha"]),
        power=float(merged["power"]),
        null_value=merged["null"],
        one_sided=bool(merged["one_sided"]),
    )
    v_sq = planning_variance(params, effect)
    n_req = required_sample_size(params, spec)
    header = "kappa0,sigma0,psi0,psi1,v_up_sq,n_required"
    row = (
        f"{float(np.sqrt(params.kappa0_sq))!r},{float(np.sqrt(params.sigma0_sq))!r},"
        f"{params.psi0!r},{params.psi1!r},{v_sq!r},{n_req}"
    )
    print(header)
    print(row)
    if merged["out"]:
        os.makedirs(merged["out"], exist_ok=True)
        result_path = os.path.join(merged["out"], "result.csv")
        with open(result_path, "w", encoding="utf-8") as fh:
            fh.write(header + "\n" + row + "\n")
        _write_manifest(
            os.path.join(merged["out"], "manifest.json"), "power", merged, [result_path]
        )
    return 0


def _cmd_train(merged: dict, parser: argparse.ArgumentParser) -> int:
    _require(merged, ["historical", "out"], parser)
    data = load_historical_csv(merged["historical"])
    hinge = HingeLearner(
        max_degree=int(merged["max_degree"]), num_terms=int(merged["num_terms"])
    )
    if merged["hinge_only"]:
        from .prognostic import cv_rmse

        model = hinge.fit(data).with_cv_rmse(
            cv_rmse(hinge, data, k=int(merged["cv_folds"]), seed=int(merged["seed"]))
        )
        table = ((hinge.name, model.cv_rmse**2),)
    else:
        candidates = (hinge, GlmMainTermsLearner(), InterceptOnlyLearner())
        model, table = select_model_cv(
            data, candidates, k=int(merged["cv_folds"]), seed=int(merged["seed"])
        )
    save_model(model, merged["out"])
    print(f"winner={model.kind} cv_rmse={model.cv_rmse!r} terms={model.num_terms}")
    for name, mse in table:
        print(f"candidate={name} cv_mse={mse!r}")
    _write_manifest(merged["out"] + ".manifest.json", "train", merged, [merged["out"]])
    return 0


def _cmd_simulate(merged: dict, parser: argparse.ArgumentParser) -> int:
    _require(merged, ["out"], parser)
    scenario_name = str(merged["scenario"])
    if "/" not in scenario_name:
        parser.error(
            f"scenario must look like '<trial>/<historical>', got {scenario_name!r}"
        )
    trial_name, hist_name = scenario_name.split("/", 1)
    if trial_name not in TRIAL_SCENARIOS:
        parser.error(
            f"unknown trial scenario {trial_name!r}; known: {tuple(TRIAL_SCENARIOS)}"
        )
    if hist_name not in HIST_SCENARIOS:
        parser.error(
            f"unknown historical scenario {hist_name!r}; known: {tuple(HIST_SCENARIOS)}"
        )
    try:
        n_trials = [int(s) for s in str(merged["n_trial"]).split(",") if s.strip()]
    except ValueError:
        parser.error("--n-trial must be a comma-separated integer list")
    if not n_trials:
        parser.error("--n-trial must name at least one trial size")
    estimators = [s.strip() for s in str(merged["estimators"]).split(",") if s.strip()]
    for name in estimators:
        if name not in ESTIMATOR_NAMES:
            parser.error(f"unknown estimator {name!r}; known: {ESTIMATOR_NAMES}")

    scenarios = [
        ScenarioSpec(
            trial_scenario=trial_name,
            historical_scenario=hist_name,
            n_trial=n,
            n_hist=int(merged["n_hist"]),
            reps=int(merged["reps"]),
            seed=int(merged["seed"]),
            alt_treated_form=bool(merged["alt_treated_form"]),
        )
        for n in n_trials
    ]
    result = run_experiment(
        scenarios,
        estimators=estimators,
        workers=int(merged["workers"]),
        crossfit_k=int(merged["crossfit"]),
    )
    out_dir = merged["out"]
    os.makedirs(out_dir, exist_ok=True)
    summary_path = os.path.join(out_dir, "summary.csv")
    replicates_path = os.path.join(out_dir, "replicates.csv")
    write_summary_csv(result.summary, summary_path)
    write_replicates_csv(result.replicates, replicates_path)
    chart_paths = write_summary_charts(result.summary, out_dir)
    artifacts = [summary_path, replicates_path, *chart_paths]
    _write_manifest(os.path.join(out_dir, "manifest.json"), "simulate", merged, artifacts)
    for path in artifacts:
        print(f"wrote {path}")
    print(f"wrote {os.path.join(out_dir, 'manifest.json')}")
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="JSON config file with a schema_version field")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="progpower",
        description=(
            "GLM-based marginal effect estimation, prognostic score training, "
            "power planning, and simulation benchmarking for randomized trials"
        ),
    )
    parser.add_argument("--version", action="version", version=f"progpower {__version__}")
    subs = parser.add_subparsers(dest="command", required=True)

    pa = subs.add_parser("analyze", help="estimate a marginal effect from trial data")
    _add_common(pa)
    pa.add_argument("--trial", help="trial CSV with id, a, y, covariate columns")
    pa.add_argument("--pi1", type=float, help="design probability of arm 1 (default 0.5)")
    pa.add_argument("--family", choices=["normal", "binomial", "poisson", "negative-binomial"])
    pa.add_argument("--link", choices=["identity", "logit", "log", "nb-canonical"])
    pa.add_argument("--dispersion", type=float, help="negative-binomial shape r")
    pa.add_argument("--effect", choices=["difference", "ratio", "odds-ratio"])
    pa.add_argument("--design", help="comma-separated adjustment terms")
    pa.add_argument("--prognostic-model", dest="prognostic_model", help="model file path")
    pa.add_argument("--crossfit", type=int, help="fold count; 0 fits in-sample (default)")
    pa.add_argument("--seed", type=int, help="fold assignment seed")
    pa.add_argument("--alpha", type=float, help="test level (default 0.05)")
    pa.add_argument("--null", type=float, help="null effect value (default: the measure's)")
    pa.add_argument(
        "--one-sided", dest="one_sided", choices=["lower", "upper", "none"],
        help="one-sided alternative: upper rejects for large effects",
    )
    pa.add_argument("--out", help="directory for result.csv and manifest.json")

    pp = subs.add_parser("power", help="plan a sample size from historical control data")
    _add_common(pp)
    pp.add_argument("--historical", help="historical CSV with id, y, covariate columns")
    pp.add_argument("--effect", choices=["difference", "ratio", "odds-ratio"])
    pp.add_argument("--target", type=float, help="anticipated effect value")
    pp.add_argument("--alpha", type=float, help="test level (default 0.05)")
    pp.add_argument("--power", type=float, help="target power (default 0.8)")
    pp.add_argument("--pi1", type=float, help="planned allocation to arm 1 (default 0.5)")
    pp.add_argument("--null", type=float, help="null effect value")
    pp.add_argument(
        "--one-sided", dest="one_sided", action="store_const", const=True,
        help="plan a one-sided test",
    )
    pp.add_argument(
        "--unadjusted", action="store_const", const=True,
        help="no working model: residual variance equals outcome variance",
    )
    pp.add_argument("--design", help="GLM adjustment terms, cross-validated per fold")
    pp.add_argument("--prognostic-model", dest="prognostic_model", help="fitted model file")
    pp.add_argument("--family", choices=["normal", "binomial", "poisson", "negative-binomial"])
    pp.add_argument("--link", choices=["identity", "logit", "log", "nb-canonical"])
    pp.add_argument("--dispersion", type=float)
    pp.add_argument("--cv-folds", dest="cv_folds", type=int, help="CV folds (default 5)")
    pp.add_argument("--seed", type=int, help="CV fold seed")
    pp.add_argument("--binary", choices=["auto", "yes", "no"], help="binary outcome handling")
    pp.add_argument(
        "--inflate-kappa1", dest="inflation_kappa1", type=float,
        help="sensitivity multiplier on the treated-arm residual variance",
    )
    pp.add_argument(
        "--inflate-sigma1", dest="inflation_sigma1", type=float,
        help="sensitivity multiplier on the treated-arm outcome variance",
    )
    pp.add_argument("--out", help="directory for result.csv and manifest.json")

    pt = subs.add_parser("train", help="train and select a prognostic model")
    _add_common(pt)
    pt.add_argument("--historical", help="historical CSV")
    pt.add_argument("--out", help="model file to write")
    pt.add_argument("--max-degree", dest="max_degree", type=int, help="max hinge product degree")
    pt.add_argument("--num-terms", dest="num_terms", type=int, help="max basis terms")
    pt.add_argument("--cv-folds", dest="cv_folds", type=int, help="selection folds (default 5)")
    pt.add_argument("--seed", type=int, help="fold seed")
    pt.add_argument(
        "--hinge-only", dest="hinge_only", action="store_const", const=True,
        help="skip library selection and train the hinge learner alone",
    )

    ps = subs.add_parser("simulate", help="run a simulation experiment")
    _add_common(ps)
    ps.add_argument("--out", help="output directory")
    ps.add_argument("--scenario", help="'<trial>/<historical>' scenario name")
    ps.add_argument("--n-trial", dest="n_trial", help="comma-separated trial sizes")
    ps.add_argument("--n-hist", dest="n_hist", type=int, help="historical size (default 2500)")
    ps.add_argument("--reps", type=int, help="replicates per scenario (default 500)")
    ps.add_argument("--seed", type=int, help="master seed (default 0)")
    ps.add_argument("--workers", type=int, help="worker processes (default 1)")
    ps.add_argument("--estimators", help="comma-separated strategy names")
    ps.add_argument("--crossfit", type=int, help="analysis folds; 0 disables (default 10)")
    ps.add_argument(
        "--no-crossfit", dest="crossfit", action="store_const", const=0,
        help="estimate variances in-sample instead of cross-fitting",
    )
    ps.add_argument(
        "--alt-treated-form", dest="alt_treated_form", action="store_const", const=True,
        help="use the log-scale heterogeneity form of the treated mean",
    )
    return parser


_RUNNERS = {
    "analyze": _cmd_analyze,
    "power": _cmd_power,
    "train": _cmd_train,
    "simulate": _cmd_simulate,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    command = args.command
    cli_values = {
        k: v for k, v in vars(args).items() if k not in ("command", "config")
    }
    config_values = (
        _load_config_file(args.config, parser) if args.config else {}
    )
    merged = resolve_config(command, cli_values, config_values, parser)
    try:
        return _RUNNERS[command](merged, parser)
    except SystemExit:
        raise
    except Exception as err:  # surface runtime failures as exit code 1
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
