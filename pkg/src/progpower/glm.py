"""Generalized linear model engine with a small, explicit family/link set.

Supported pairs: normal/identity, binomial/logit, poisson/log,
negative-binomial/nb-canonical, and negative-binomial/log.  The first four
are canonical; negative-binomial/log is the one sanctioned non-canonical
pair and its score equations carry the extra mean-variance weight.

Fitting is Fisher scoring on the working response with step-halving on the
sample log-likelihood, a hard bound on coefficient magnitude, and a rank
check on the design.  All failure modes raise typed errors; a returned fit
always satisfies the score tolerance.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np
from scipy.special import expit

from .data import HistoricalDataset, TrialDataset

__all__ = [
    "GlmError",
    "GlmDomainError",
    "GlmSingularError",
    "GlmConvergenceError",
    "GlmDivergenceError",
    "DesignParseError",
    "FamilyLink",
    "CovariateTerm",
    "LogTerm",
    "PrognosticTerm",
    "InteractionTerm",
    "DesignSpec",
    "GlmFit",
    "build_design",
    "build_covariate_design",
    "fit_glm",
    "predict_mean",
    "counterfactual_means",
    "fisher_information",
]

FAMILIES = ("normal", "binomial", "poisson", "negative-binomial")
LINKS = ("identity", "logit", "log", "nb-canonical")
_CANONICAL = {
    ("normal", "identity"),
    ("binomial", "logit"),
    ("poisson", "log"),
    ("negative-binomial", "nb-canonical"),
}
_ALLOWED = _CANONICAL | {("negative-binomial", "log")}

_COEF_BOUND_DEFAULT = 30.0
_SCORE_TOL_PER_OBS = 1e-8
_MAX_ITER = 100
_MAX_HALVINGS = 20
_MEAN_CLIP = 1e-12  # binomial means are clipped only inside the likelihood


class GlmError(ValueError):
    """Base class for engine failures."""


class GlmDomainError(GlmError):
    """Outcome or linear predictor outside the family/link domain."""


class GlmSingularError(GlmError):
    """Design matrix is rank deficient."""


class GlmConvergenceError(GlmError):
    """Score tolerance not met within the iteration budget."""


class GlmDivergenceError(GlmError):
    """Coefficient magnitude escaped the stability bound."""


class DesignParseError(ValueError):
    """Malformed design term descriptor."""


@dataclass(frozen=True)
class FamilyLink:
    """A validated family/link pair; negative-binomial requires dispersion_r > 0.

    dispersion_r is the fixed shape r of the negative-binomial variance
    mu * (1 + mu / r); it is supplied, never estimated.
    """

    family: str
    link: str
    dispersion_r: float | None = None

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            raise GlmDomainError(f"unknown family {self.family!r}; known: {FAMILIES}")
        if self.link not in LINKS:
            raise GlmDomainError(f"unknown link {self.link!r}; known: {LINKS}")
        if (self.family, self.link) not in _ALLOWED:
            raise GlmDomainError(
                f"unsupported family/link pair ({self.family}, {self.link})"
            )
        if self.family == "negative-binomial":
            if self.dispersion_r is None or not (self.dispersion_r > 0.0):
                raise GlmDomainError(
                    "negative-binomial requires a fixed dispersion_r > 0"
                )
        elif self.dispersion_r is not None:
            raise GlmDomainError("dispersion_r only applies to negative-binomial")

    @property
    def is_canonical(self) -> bool:
        return (self.family, self.link) in _CANONICAL

    # ---- link maps ----

    def link_value(self, mu):
        """g(mu); raises GlmDomainError off the link's domain."""
        mu = np.asarray(mu, dtype=float)
        if self.link == "identity":
            return mu + 0.0
        if self.link == "logit":
            if np.any(mu <= 0.0) or np.any(mu >= 1.0):
                raise GlmDomainError("logit link requires means strictly in (0, 1)")
            return np.log(mu / (1.0 - mu))
        if self.link == "log":
            if np.any(mu <= 0.0):
                raise GlmDomainError("log link requires strictly positive means")
            return np.log(mu)
        # nb-canonical: g(mu) = log(mu / (r + mu)), always negative
        r = self.dispersion_r
        if np.any(mu <= 0.0):
            raise GlmDomainError("nb-canonical link requires strictly positive means")
        return np.log(mu / (r + mu))

    def inverse_link(self, eta):
        """g^{-1}(eta); invalid regions map to +inf so likelihoods reject them."""
        eta = np.asarray(eta, dtype=float)
        if self.link == "identity":
            return eta + 0.0
        if self.link == "logit":
            return expit(eta)
        if self.link == "log":
            with np.errstate(over="ignore"):
                return np.exp(eta)
        r = self.dispersion_r
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            e = np.exp(eta)
            mu = np.where(eta < 0.0, r * e / (1.0 - e), np.inf)
        return mu

    # ---- outcome domain ----

    def validate_y(self, y: np.ndarray) -> None:
        y = np.asarray(y, dtype=float)
        if not np.all(np.isfinite(y)):
            raise GlmDomainError("outcomes must be finite")
        if self.family == "binomial":
            if np.any((y != 0.0) & (y != 1.0)):
                raise GlmDomainError("binomial outcomes must lie in {0, 1}")
        elif self.family in ("poisson", "negative-binomial"):
            if np.any(y < 0.0) or np.any(y != np.round(y)):
                raise GlmDomainError(
                    f"{self.family} outcomes must be nonnegative integers"
                )

    # ---- likelihood pieces ----

    def loglik(self, y: np.ndarray, mu: np.ndarray) -> float:
        """Sample log-likelihood up to mu-free constants; invalid mu gives -inf."""
        y = np.asarray(y, dtype=float)
        mu = np.asarray(mu, dtype=float)
        if np.any(np.isnan(mu)):
            return -np.inf
        if self.family == "normal":
            if np.any(~np.isfinite(mu)):
                return -np.inf
            return float(-0.5 * np.sum((y - mu) ** 2))
        if self.family == "binomial":
            mu_c = np.clip(mu, _MEAN_CLIP, 1.0 - _MEAN_CLIP)
            return float(np.sum(y * np.log(mu_c) + (1.0 - y) * np.log1p(-mu_c)))
        if np.any(~np.isfinite(mu)) or np.any(mu < 0.0):
            return -np.inf
        if self.family == "poisson":
            with np.errstate(divide="ignore", invalid="ignore"):
                term = y * np.log(mu)
            term = np.where(y == 0.0, 0.0, term)
            value = float(np.sum(term) - np.sum(mu))
        else:
            r = self.dispersion_r
            with np.errstate(divide="ignore", invalid="ignore"):
                term = y * np.log(mu / (r + mu))
            term = np.where(y == 0.0, 0.0, term)
            value = float(np.sum(term) + r * np.sum(np.log(r / (r + mu))))
        return value if np.isfinite(value) else -np.inf

    def score_residual(self, y: np.ndarray, mu: np.ndarray) -> np.ndarray:
        """Per-observation derivative of the log-likelihood in eta."""
        if self.is_canonical:
            return y - mu
        r = self.dispersion_r
        return (y - mu) / (1.0 + mu / r)

    def irls_weight(self, mu: np.ndarray) -> np.ndarray:
        if self.family == "normal":
            return np.ones_like(mu)
        if self.family == "binomial":
            return mu * (1.0 - mu)
        if self.family == "poisson":
            return mu
        r = self.dispersion_r
        if self.link == "nb-canonical":
            return mu * (1.0 + mu / r)
        return mu / (1.0 + mu / r)

    def dmu_deta(self, mu: np.ndarray) -> np.ndarray:
        if self.family == "normal":
            return np.ones_like(mu)
        if self.family == "binomial":
            return mu * (1.0 - mu)
        if self.link == "nb-canonical":
            return mu * (1.0 + mu / self.dispersion_r)
        return mu  # log link, poisson or negative-binomial

    def initial_eta(self, y: np.ndarray) -> float:
        ybar = float(np.mean(y))
        if self.family == "binomial":
            ybar = min(max(ybar, 1e-3), 1.0 - 1e-3)
        elif self.family in ("poisson", "negative-binomial"):
            ybar = max(ybar, 1e-3)
        return float(self.link_value(ybar))


# ---------------------------------------------------------------------------
# design term grammar


@dataclass(frozen=True)
class CovariateTerm:
    name: str

    def descriptor(self) -> str:
        return f"w:{self.name}"


@dataclass(frozen=True)
class LogTerm:
    name: str

    def descriptor(self) -> str:
        return f"transform(log, w:{self.name})"


@dataclass(frozen=True)
class PrognosticTerm:
    def descriptor(self) -> str:
        return "prognostic"


@dataclass(frozen=True)
class InteractionTerm:
    """Product of the arm indicator with another column-producing term."""

    inner: Union[CovariateTerm, LogTerm, PrognosticTerm]

    def descriptor(self) -> str:
        return f"interact(treatment, {self.inner.descriptor()})"


Term = Union[CovariateTerm, LogTerm, PrognosticTerm, InteractionTerm]

_W_RE = re.compile(r"^w:([A-Za-z0-9_.\-]+)$")
_LOG_RE = re.compile(r"^transform\(\s*log\s*,\s*w:([A-Za-z0-9_.\-]+)\s*\)$")
_INTERACT_RE = re.compile(r"^interact\(\s*treatment\s*,\s*(.+)\)$")


def _parse_term(text: str) -> Term | None:
    text = text.strip()
    if text in ("intercept", "treatment"):
        return None  # implicit in every design
    m = _W_RE.match(text)
    if m:
        return CovariateTerm(m.group(1))
    if text == "prognostic":
        return PrognosticTerm()
    m = _LOG_RE.match(text)
    if m:
        return LogTerm(m.group(1))
    m = _INTERACT_RE.match(text)
    if m:
        inner = _parse_term(m.group(1).strip())
        if inner is None or isinstance(inner, InteractionTerm):
            raise DesignParseError(f"invalid interaction operand in {text!r}")
        return InteractionTerm(inner)
    raise DesignParseError(f"unrecognized design term {text!r}")


@dataclass(frozen=True)
class DesignSpec:
    """Ordered adjustment terms appended after the implicit intercept and arm.

    The textual grammar accepts comma-separated descriptors:
    'w:<name>', 'prognostic', 'transform(log, w:<name>)', and
    'interact(treatment, <operand>)'.
    """

    terms: tuple[Term, ...] = ()

    @classmethod
    def parse(cls, text: str) -> "DesignSpec":
        text = text.strip()
        if not text:
            return cls(terms=())
        parsed = []
        for chunk in text.split(","):
            # interaction descriptors contain a comma, so rejoin when a chunk
            # opens more parentheses than it closes
            parsed.append(chunk)
        merged: list[str] = []
        depth = 0
        buffer = ""
        for chunk in parsed:
            buffer = f"{buffer},{chunk}" if buffer else chunk
            depth = buffer.count("(") - buffer.count(")")
            if depth == 0:
                merged.append(buffer)
                buffer = ""
        if buffer:
            raise DesignParseError(f"unbalanced parentheses in {text!r}")
        terms = tuple(t for t in (_parse_term(c) for c in merged) if t is not None)
        return cls(terms=terms)

    def descriptor(self) -> str:
        return ", ".join(t.descriptor() for t in self.terms)

    @property
    def has_prognostic(self) -> bool:
        return any(
            isinstance(t, PrognosticTerm)
            or (isinstance(t, InteractionTerm) and isinstance(t.inner, PrognosticTerm))
            for t in self.terms
        )

    @property
    def column_names(self) -> tuple[str, ...]:
        return ("intercept", "treatment", *(t.descriptor() for t in self.terms))

    def covariates_used(self) -> tuple[str, ...]:
        names = []
        for t in self.terms:
            inner = t.inner if isinstance(t, InteractionTerm) else t
            if isinstance(inner, (CovariateTerm, LogTerm)):
                names.append(inner.name)
        return tuple(dict.fromkeys(names))

    def is_nested_in(self, other: "DesignSpec") -> bool:
        return set(self.terms) <= set(other.terms)


def _base_column(
    term: Union[CovariateTerm, LogTerm, PrognosticTerm],
    w: np.ndarray,
    cov_index: dict[str, int],
    scores: np.ndarray | None,
    link: FamilyLink | None,
) -> np.ndarray:
    if isinstance(term, CovariateTerm):
        if term.name not in cov_index:
            raise DesignParseError(f"unknown covariate {term.name!r} in design")
        return w[:, cov_index[term.name]]
    if isinstance(term, LogTerm):
        if term.name not in cov_index:
            raise DesignParseError(f"unknown covariate {term.name!r} in design")
        col = w[:, cov_index[term.name]]
        if np.any(col <= 0.0):
            bad = int(np.flatnonzero(col <= 0.0)[0])
            raise GlmDomainError(
                f"transform(log, w:{term.name}): nonpositive value at row {bad + 1}"
            )
        return np.log(col)
    # prognostic scores enter on the link scale
    if scores is None:
        raise GlmDomainError("design uses a prognostic column but no scores were given")
    if link is None:
        raise GlmDomainError(
            "design uses a prognostic column but no link was given to map scores"
        )
    return link.link_value(np.asarray(scores, dtype=float))


def _design_matrix(
    spec: DesignSpec,
    w: np.ndarray,
    arm: np.ndarray,
    cov_names: Sequence[str],
    scores: np.ndarray | None,
    link: FamilyLink | None,
    include_treatment: bool,
) -> np.ndarray:
    n = w.shape[0]
    cov_index = {name: j for j, name in enumerate(cov_names)}
    cols = [np.ones(n)]
    if include_treatment:
        cols.append(arm.astype(float))
    for term in spec.terms:
        if isinstance(term, InteractionTerm):
            base = _base_column(term.inner, w, cov_index, scores, link)
            cols.append(arm.astype(float) * base)
        else:
            cols.append(_base_column(term, w, cov_index, scores, link))
    return np.column_stack(cols)


def build_design(
    spec: DesignSpec,
    dataset: TrialDataset,
    scores: np.ndarray | None = None,
    *,
    link: FamilyLink | None = None,
    force_arm: int | None = None,
) -> np.ndarray:
    """Design matrix [1, A, terms...] for a trial dataset.

    force_arm replaces the arm column (and every interaction) with the given
    constant arm, which is how counterfactual designs are produced.
    """
    arm = dataset.a if force_arm is None else np.full(dataset.n, force_arm, dtype=np.int64)
    return _design_matrix(
        spec, dataset.w, arm, dataset.covariate_names, scores, link, include_treatment=True
    )


def build_covariate_design(
    spec: DesignSpec,
    dataset: HistoricalDataset,
    scores: np.ndarray | None = None,
    *,
    link: FamilyLink | None = None,
) -> np.ndarray:
    """Design matrix [1, terms...] for control-only data (no arm column).

    Interaction terms make no sense without an arm and are rejected.
    """
    if any(isinstance(t, InteractionTerm) for t in spec.terms):
        raise DesignParseError("interaction terms require a trial dataset with arms")
    arm = np.zeros(dataset.n, dtype=np.int64)
    return _design_matrix(
        spec, dataset.w, arm, dataset.covariate_names, scores, link, include_treatment=False
    )


# ---------------------------------------------------------------------------
# fitting


@dataclass(frozen=True, eq=False)
class GlmFit:
    """A converged fit: coefficients, diagnostics, and its build context."""

    family_link: FamilyLink
    beta: np.ndarray
    column_names: tuple[str, ...]
    n_obs: int
    iterations: int
    score_norm: float
    loglik: float
    loglik_path: tuple[float, ...]
    spec: DesignSpec | None = None
    covariate_names: tuple[str, ...] | None = None

    def linear_predictor(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(X, dtype=float) @ self.beta

    def mean(self, X: np.ndarray) -> np.ndarray:
        mu = self.family_link.inverse_link(self.linear_predictor(X))
        if np.any(~np.isfinite(mu)):
            raise GlmDomainError(
                "linear predictor leaves the link domain at prediction time"
            )
        return mu


def fit_glm(
    family_link: FamilyLink,
    X: np.ndarray,
    y: np.ndarray,
    *,
    coef_bound: float = _COEF_BOUND_DEFAULT,
    max_iter: int = _MAX_ITER,
    spec: DesignSpec | None = None,
    covariate_names: Sequence[str] | None = None,
    column_names: Sequence[str] | None = None,
) -> GlmFit:
    """Fisher scoring with step-halving; returns only converged fits.

    Convergence is max |score| <= 1e-8 * n.  Coefficients whose magnitude
    exceeds coef_bound abort with GlmDivergenceError: the boundedness of
    fitted coefficients is a working assumption of everything downstream,
    so escaping it is treated as a failure, not a warning.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise GlmDomainError("X must be (n, q) with rows matching y")
    n, q = X.shape
    if n <= q:
        raise GlmSingularError(f"need more observations ({n}) than columns ({q})")
    family_link.validate_y(y)
    if np.linalg.matrix_rank(X) < q:
        raise GlmSingularError("design matrix is rank deficient")

    fl = family_link
    tol = _SCORE_TOL_PER_OBS * n
    beta = np.zeros(q)
    beta[0] = fl.initial_eta(y)
    eta = X @ beta
    mu = fl.inverse_link(eta)
    ll = fl.loglik(y, mu)
    path = [ll]
    iterations = 0
    score = X.T @ fl.score_residual(y, mu)

    for iterations in range(1, max_iter + 1):
        weight = fl.irls_weight(mu)
        deriv = np.maximum(fl.dmu_deta(mu), 1e-10)
        z = eta + (y - mu) / deriv
        wx = X * weight[:, None]
        info = X.T @ wx
        try:
            delta = np.linalg.solve(info, X.T @ (weight * z)) - beta
        except np.linalg.LinAlgError:
            raise GlmSingularError(
                "weighted information matrix is singular during fitting"
            ) from None

        step = 1.0
        accepted = False
        for _ in range(_MAX_HALVINGS + 1):
            cand = beta + step * delta
            cand_mu = fl.inverse_link(X @ cand)
            cand_ll = fl.loglik(y, cand_mu)
            if cand_ll >= ll - 1e-10 * (1.0 + abs(ll)):
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break  # stalled at numerical noise; final score check decides

        beta = cand
        eta = X @ beta
        mu = cand_mu
        ll = cand_ll
        path.append(ll)
        if np.max(np.abs(beta)) > coef_bound:
            raise GlmDivergenceError(
                f"coefficient magnitude {np.max(np.abs(beta)):.3g} exceeded the "
                f"stability bound {coef_bound}; the bounded-coefficient condition "
                f"required for valid inference is violated"
            )
        score = X.T @ fl.score_residual(y, mu)
        if np.max(np.abs(score)) <= tol:
            break

    score_norm = float(np.max(np.abs(score)))
    if score_norm > tol:
        raise GlmConvergenceError(
            f"no convergence in {max_iter} iterations; final score norm "
            f"{score_norm:.3g} exceeds tolerance {tol:.3g}"
        )
    names = (
        tuple(column_names)
        if column_names is not None
        else (spec.column_names if spec is not None else tuple(f"x{j}" for j in range(q)))
    )
    return GlmFit(
        family_link=fl,
        beta=beta,
        column_names=names,
        n_obs=n,
        iterations=iterations,
        score_norm=score_norm,
        loglik=ll,
        loglik_path=tuple(path),
        spec=spec,
        covariate_names=tuple(covariate_names) if covariate_names is not None else None,
    )


def fisher_information(fit: GlmFit, X: np.ndarray) -> np.ndarray:
    """Expected information X' W X at the fitted coefficients."""
    X = np.asarray(X, dtype=float)
    mu = fit.mean(X)
    if fit.family_link.is_canonical:
        weight = fit.family_link.irls_weight(mu)
    else:
        # non-canonical expected information keeps (dmu/deta)^2 / var
        fl = fit.family_link
        weight = fl.dmu_deta(mu) ** 2 / (mu * (1.0 + mu / fl.dispersion_r))
    return X.T @ (X * weight[:, None])


def predict_mean(
    fit: GlmFit,
    w_row: Sequence[float],
    arm: int,
    score: float | None = None,
) -> float:
    """Mean response for one covariate row under the given arm."""
    if fit.spec is None or fit.covariate_names is None:
        raise GlmDomainError("fit lacks a design spec; predict via fit.mean(X) instead")
    w = np.asarray(w_row, dtype=float).reshape(1, -1)
    arm_arr = np.array([arm], dtype=np.int64)
    scores = None if score is None else np.array([score], dtype=float)
    X = _design_matrix(
        fit.spec, w, arm_arr, fit.covariate_names, scores, fit.family_link, True
    )
    return float(fit.mean(X)[0])


def counterfactual_means(
    fit: GlmFit,
    dataset: TrialDataset,
    arm: int,
    scores: np.ndarray | None = None,
) -> np.ndarray:
    """Fitted means for every row with the arm forced to 0 or 1.

    Interactions are recomputed under the forced arm; main-effect columns are
    untouched.  Means outside the link domain raise GlmDomainError.
    """
    if arm not in (0, 1):
        raise GlmDomainError(f"arm must be 0 or 1, got {arm}")
    if fit.spec is None:
        raise GlmDomainError("fit lacks a design spec for counterfactual prediction")
    X = build_design(fit.spec, dataset, scores, link=fit.family_link, force_arm=arm)
    return fit.mean(X)
