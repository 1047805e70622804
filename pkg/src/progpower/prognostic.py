"""Prognostic score models: hinge-basis learner, CV selection, persistence.

A prognostic model is an additive expansion sum_m beta_m * prod(factors),
where each factor is a hinge max(0, +/-(w - knot)) or a bare linear w.  The
hinge learner is a greedy forward pass over reflected hinge pairs with knots
at per-covariate deciles, followed by generalized cross-validation pruning.
Everything is deterministic given the data; no randomness enters training.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Protocol, Sequence, Union

import numpy as np

from .data import HistoricalDataset, TrialDataset, make_plain_folds

__all__ = [
    "ModelFormatError",
    "HingeFactor",
    "LinearFactor",
    "ModelTerm",
    "PrognosticModel",
    "LearnerCandidate",
    "HingeLearner",
    "GlmMainTermsLearner",
    "InterceptOnlyLearner",
    "default_library",
    "train_hinge_learner",
    "cv_rmse",
    "select_model_cv",
    "shuffle_scores",
    "clip_scores_for_link",
    "save_model",
    "load_model",
]

_FORMAT_HEADER = "progpower-model v1"


class ModelFormatError(ValueError):
    """Raised on malformed or wrong-version model files."""


@dataclass(frozen=True)
class HingeFactor:
    """max(0, w - knot) when sign > 0, max(0, knot - w) when sign < 0."""

    var: str
    knot: float
    sign: int

    def __post_init__(self) -> None:
        if self.sign not in (-1, 1):
            raise ModelFormatError(f"hinge sign must be -1 or +1, got {self.sign}")


@dataclass(frozen=True)
class LinearFactor:
    var: str


Factor = Union[HingeFactor, LinearFactor]


@dataclass(frozen=True)
class ModelTerm:
    """One additive term; an empty factor tuple is the intercept."""

    weight: float
    factors: tuple[Factor, ...] = ()

    @property
    def degree(self) -> int:
        return len(self.factors)


@dataclass(frozen=True, eq=False)
class PrognosticModel:
    """Additive hinge/linear expansion mapping covariates to a score.

    cv_rmse is None until a cross-validated assessment attaches it; it is
    the pooled out-of-fold root mean squared error of the training recipe,
    not an in-sample quantity.
    """

    terms: tuple[ModelTerm, ...]
    covariate_names: tuple[str, ...]
    kind: str = "hinge"
    cv_rmse: float | None = None

    def predict(self, data) -> np.ndarray:
        """Scores for a dataset or a raw (n, p) matrix in training column order."""
        if isinstance(data, (HistoricalDataset, TrialDataset)):
            w = data.w
            names = data.covariate_names
        else:
            w = np.asarray(data, dtype=float)
            if w.ndim == 1:
                w = w.reshape(1, -1)
            names = self.covariate_names
        index = {name: j for j, name in enumerate(names)}
        out = np.zeros(w.shape[0])
        for term in self.terms:
            col = np.full(w.shape[0], term.weight)
            for factor in term.factors:
                if factor.var not in index:
                    raise ModelFormatError(
                        f"model references covariate {factor.var!r} absent from data"
                    )
            for factor in term.factors:
                x = w[:, index[factor.var]]
                if isinstance(factor, LinearFactor):
                    col = col * x
                elif factor.sign > 0:
                    col = col * np.maximum(x - factor.knot, 0.0)
                else:
                    col = col * np.maximum(factor.knot - x, 0.0)
            out += col
        return out

    @property
    def num_terms(self) -> int:
        return len(self.terms)

    def with_cv_rmse(self, value: float) -> "PrognosticModel":
        return replace(self, cv_rmse=float(value))


class LearnerCandidate(Protocol):
    """A named training recipe refit from scratch on any control-only sample."""

    name: str

    def fit(self, data: HistoricalDataset) -> PrognosticModel: ...


# ---------------------------------------------------------------------------
# hinge learner


def _decile_knots(col: np.ndarray) -> np.ndarray:
    knots = np.unique(np.percentile(col, np.arange(10, 100, 10)))
    lo, hi = np.min(col), np.max(col)
    return knots[(knots > lo) & (knots < hi)]


@dataclass(frozen=True)
class _Candidate:
    parent: int
    col_index: int
    score: float


def train_hinge_learner(
    data: HistoricalDataset,
    max_degree: int = 3,
    num_terms: int = 50,
    forward_tol: float = 1e-4,
) -> PrognosticModel:
    """Greedy reflected-pair hinge regression with GCV pruning.

    Forward pass: at each step, score every (parent term, covariate, decile
    knot) triple by the exact squared-error drop of adding the reflected pair,
    using a cheap unprojected screen to shortlist candidates before exact
    evaluation against the current orthonormal basis.  A covariate appears at
    most once per term and products are capped at max_degree factors.
    Backward pass: greedy term removal minimizing GCV with effective
    parameter count (1 + m) + 3 m for m non-intercept terms.
    """
    if max_degree < 1:
        raise ValueError(f"max_degree must be >= 1, got {max_degree}")
    if num_terms < 1:
        raise ValueError(f"num_terms must be >= 1, got {num_terms}")
    w = data.w
    y = np.asarray(data.y, dtype=float)
    n, p = w.shape

    # candidate hinge columns, knots at interior deciles; constant covariates
    # contribute no knots and drop out of the search entirely
    cand_var: list[int] = []
    cand_knot: list[float] = []
    plus_cols: list[np.ndarray] = []
    minus_cols: list[np.ndarray] = []
    for j in range(p):
        for t in _decile_knots(w[:, j]):
            cand_var.append(j)
            cand_knot.append(float(t))
            plus_cols.append(np.maximum(w[:, j] - t, 0.0))
            minus_cols.append(np.maximum(t - w[:, j], 0.0))
    n_cand = len(cand_var)

    ybar = float(np.mean(y))
    intercept_term = ModelTerm(weight=ybar, factors=())
    if n_cand == 0:
        return PrognosticModel(
            terms=(intercept_term,), covariate_names=data.covariate_names, kind="hinge"
        )

    var_arr = np.asarray(cand_var)
    knot_arr = np.asarray(cand_knot)
    c_plus = np.column_stack(plus_cols)
    c_minus = np.column_stack(minus_cols)
    c_stack = np.concatenate([c_plus, c_minus], axis=1)
    c_stack_sq = c_stack**2

    # basis state: raw columns in B, orthonormal companion Q, residual of y
    max_cols = min(num_terms, n - 1)
    B = np.empty((n, max_cols))
    Q = np.empty((n, max_cols))
    B[:, 0] = 1.0
    Q[:, 0] = 1.0 / np.sqrt(n)
    m_tot = 1
    factors: list[tuple] = [()]  # factor tuples (var_idx, knot, sign)
    vars_used: list[frozenset] = [frozenset()]
    blocked_of: list[np.ndarray | None] = [None]  # candidate mask per parent
    y_res = y - ybar
    total_ss = float(y_res @ y_res)
    if total_ss <= 1e-12 * max(1.0, ybar**2) * n:
        return PrognosticModel(
            terms=(intercept_term,), covariate_names=data.covariate_names, kind="hinge"
        )
    sse = total_ss
    screen_width = 12

    def complexity_gcv(rss: float, cols: int) -> float:
        m_nonint = cols - 1
        denom = 1.0 - ((1.0 + m_nonint) + 3.0 * m_nonint) / n
        if denom <= 0.0:
            return np.inf
        return (rss / n) / denom**2

    def exact_pair(parent: int, i: int):
        """Exact SSE drop of adding parent*plus_i and parent*minus_i jointly."""
        bm = B[:, parent]
        p1 = bm * c_plus[:, i]
        p2 = bm * c_minus[:, i]
        q1 = Q[:, :m_tot].T @ p1
        q2 = Q[:, :m_tot].T @ p2
        raw1 = float(p1 @ p1)
        raw2 = float(p2 @ p2)
        a = raw1 - float(q1 @ q1)
        b = raw2 - float(q2 @ q2)
        c = float(p1 @ p2) - float(q1 @ q2)
        du = float(p1 @ y_res)
        dm = float(p2 @ y_res)
        ok1 = a > 1e-10 * max(raw1, 1e-300)
        ok2 = b > 1e-10 * max(raw2, 1e-300)
        red1 = du * du / a if ok1 else 0.0
        red2 = dm * dm / b if ok2 else 0.0
        det = a * b - c * c
        if ok1 and ok2 and det > 1e-12 * a * b:
            joint = (b * du * du - 2.0 * c * du * dm + a * dm * dm) / det
        else:
            joint = max(red1, red2)
        return joint, red1, red2, ok1, ok2

    best_forward_gcv = complexity_gcv(sse, m_tot)
    gcv_misses = 0
    while m_tot < max_cols:
        # cheap screen: unprojected per-column reduction, pairs summed
        best_parents = [
            m for m in range(m_tot) if len(vars_used[m]) < max_degree
        ]
        if not best_parents:
            break
        shortlist: list[_Candidate] = []
        for m in best_parents:
            bm = B[:, m]
            ry = c_stack.T @ (bm * y_res)
            nn = c_stack_sq.T @ (bm * bm)
            with np.errstate(divide="ignore", invalid="ignore"):
                red = np.where(nn > 1e-12 * max(float(nn.max()), 1e-300), ry * ry / nn, 0.0)
            pair_score = red[:n_cand] + red[n_cand:]
            if blocked_of[m] is not None:
                pair_score = np.where(blocked_of[m], -1.0, pair_score)
            top = np.argsort(pair_score)[::-1][:screen_width]
            for i in top:
                if pair_score[i] > 0.0:
                    shortlist.append(_Candidate(m, int(i), float(pair_score[i])))
        if not shortlist:
            break
        shortlist.sort(key=lambda cnd: (-cnd.score, cnd.parent, cnd.col_index))
        shortlist = shortlist[: 2 * screen_width]

        best = None  # (joint_red, parent, col_index, red1, red2, ok1, ok2)
        for cnd in shortlist:
            joint, red1, red2, ok1, ok2 = exact_pair(cnd.parent, cnd.col_index)
            if best is None or joint > best[0] + 1e-12 * total_ss:
                best = (joint, cnd.parent, cnd.col_index, red1, red2, ok1, ok2)
        if best is None or best[0] <= forward_tol * total_ss:
            break
        _, parent, i, red1, red2, ok1, ok2 = best

        new_cols = []
        if ok1:
            new_cols.append((+1, c_plus[:, i], red1))
        if ok2:
            new_cols.append((-1, c_minus[:, i], red2))
        if m_tot + len(new_cols) > max_cols:
            new_cols.sort(key=lambda t: -t[2])
            new_cols = new_cols[: max_cols - m_tot]
        added = 0
        for sign, base, _ in new_cols:
            raw = B[:, parent] * base
            u = raw - Q[:, :m_tot] @ (Q[:, :m_tot].T @ raw)
            u = u - Q[:, :m_tot] @ (Q[:, :m_tot].T @ u)
            norm_sq = float(u @ u)
            if norm_sq <= 1e-12 * max(float(raw @ raw), 1e-300):
                continue
            q = u / np.sqrt(norm_sq)
            B[:, m_tot] = raw
            Q[:, m_tot] = q
            factors.append(factors[parent] + ((int(var_arr[i]), float(knot_arr[i]), sign),))
            child_vars = vars_used[parent] | {int(var_arr[i])}
            vars_used.append(child_vars)
            blocked_of.append(np.isin(var_arr, list(child_vars)))
            y_res = y_res - q * float(q @ y_res)
            m_tot += 1
            added += 1
        if added == 0:
            break
        sse = float(y_res @ y_res)
        if sse <= 1e-12 * total_ss:
            break
        # stop once complexity-penalized error has stalled; the backward pass
        # only ever needs a few terms beyond the eventual optimum
        forward_gcv = complexity_gcv(sse, m_tot)
        if forward_gcv < best_forward_gcv:
            best_forward_gcv = forward_gcv
            gcv_misses = 0
        else:
            gcv_misses += 1
            if gcv_misses >= 3:
                break

    # backward pruning on the raw basis via the Gram system
    X = B[:, :m_tot]
    G = X.T @ X
    bb = X.T @ y
    yy = float(y @ y)

    def subset_rss(idx: list[int]) -> float:
        sub = np.ix_(idx, idx)
        try:
            coef = np.linalg.solve(G[sub], bb[idx])
        except np.linalg.LinAlgError:
            return np.inf
        return max(yy - float(bb[idx] @ coef), 0.0)

    def gcv(idx: list[int]) -> float:
        m_nonint = len(idx) - 1
        complexity = (1.0 + m_nonint) + 3.0 * m_nonint
        denom = 1.0 - complexity / n
        if denom <= 0.0:
            return np.inf
        return (subset_rss(idx) / n) / denom**2

    current = list(range(m_tot))
    best_idx = list(current)
    best_gcv = gcv(current)
    while len(current) > 1:
        step_best = None
        for j in current[1:]:
            trial = [t for t in current if t != j]
            g = gcv(trial)
            if step_best is None or g < step_best[0]:
                step_best = (g, trial)
        current = step_best[1]
        if step_best[0] < best_gcv:
            best_gcv = step_best[0]
            best_idx = list(current)

    sub = np.ix_(best_idx, best_idx)
    weights = np.linalg.solve(G[sub], bb[best_idx])
    terms = []
    for pos, col in enumerate(best_idx):
        fs = tuple(
            HingeFactor(var=data.covariate_names[v], knot=k, sign=s)
            for v, k, s in factors[col]
        )
        terms.append(ModelTerm(weight=float(weights[pos]), factors=fs))
    return PrognosticModel(
        terms=tuple(terms), covariate_names=data.covariate_names, kind="hinge"
    )


# ---------------------------------------------------------------------------
# candidate library


@dataclass(frozen=True)
class HingeLearner:
    max_degree: int = 3
    num_terms: int = 50
    forward_tol: float = 1e-4
    name: str = "hinge"

    def fit(self, data: HistoricalDataset) -> PrognosticModel:
        return train_hinge_learner(
            data, self.max_degree, self.num_terms, self.forward_tol
        )


@dataclass(frozen=True)
class GlmMainTermsLearner:
    """Least-squares fit on the raw covariates; a linear benchmark."""

    name: str = "glm-main-terms"

    def fit(self, data: HistoricalDataset) -> PrognosticModel:
        X = np.column_stack([np.ones(data.n), data.w])
        beta, *_ = np.linalg.lstsq(X, data.y, rcond=None)
        terms = [ModelTerm(weight=float(beta[0]), factors=())]
        for j, name in enumerate(data.covariate_names):
            terms.append(
                ModelTerm(weight=float(beta[j + 1]), factors=(LinearFactor(var=name),))
            )
        return PrognosticModel(
            terms=tuple(terms),
            covariate_names=data.covariate_names,
            kind="glm-main-terms",
        )


@dataclass(frozen=True)
class InterceptOnlyLearner:
    name: str = "intercept-only"

    def fit(self, data: HistoricalDataset) -> PrognosticModel:
        return PrognosticModel(
            terms=(ModelTerm(weight=float(np.mean(data.y)), factors=()),),
            covariate_names=data.covariate_names,
            kind="intercept-only",
        )


def default_library() -> tuple[LearnerCandidate, ...]:
    return (HingeLearner(), GlmMainTermsLearner(), InterceptOnlyLearner())


# ---------------------------------------------------------------------------
# cross-validated assessment and selection


def _pooled_oof_mse(
    candidate: LearnerCandidate, data: HistoricalDataset, fold_of: np.ndarray, k: int
) -> float:
    preds = np.empty(data.n)
    for fold in range(k):
        test_idx = np.flatnonzero(fold_of == fold)
        train_idx = np.flatnonzero(fold_of != fold)
        model = candidate.fit(data.take(train_idx))
        preds[test_idx] = model.predict(data.take(test_idx))
    return float(np.mean((data.y - preds) ** 2))


def cv_rmse(
    candidate: LearnerCandidate, data: HistoricalDataset, k: int = 5, seed: int = 0
) -> float:
    """Pooled out-of-fold RMSE of refitting the recipe on each fold complement.

    The model is retrained from scratch k times; rows never contribute to a
    model that predicts them.
    """
    fold_of = make_plain_folds(data.n, k, seed)
    return float(np.sqrt(_pooled_oof_mse(candidate, data, fold_of, k)))


def select_model_cv(
    data: HistoricalDataset,
    candidates: Sequence[LearnerCandidate] | None = None,
    k: int = 5,
    seed: int = 0,
) -> tuple[PrognosticModel, tuple[tuple[str, float], ...]]:
    """Pick the candidate with the lowest pooled out-of-fold MSE on shared folds.

    Ties break toward the earlier library position.  Returns the winning
    recipe refit on the full sample (cv_rmse attached) and the per-candidate
    (name, cv_mse) table in library order.
    """
    if candidates is None:
        candidates = default_library()
    if not candidates:
        raise ValueError("candidate library is empty")
    fold_of = make_plain_folds(data.n, k, seed)
    table = tuple(
        (cand.name, _pooled_oof_mse(cand, data, fold_of, k)) for cand in candidates
    )
    best_pos = min(range(len(table)), key=lambda i: table[i][1])
    winner = candidates[best_pos]
    model = winner.fit(data).with_cv_rmse(np.sqrt(table[best_pos][1]))
    return model, table


def shuffle_scores(scores: np.ndarray, seed: int) -> np.ndarray:
    """Random permutation of the score vector; severs any link to the rows."""
    return np.random.default_rng(seed).permutation(np.asarray(scores, dtype=float))


def clip_scores_for_link(scores: np.ndarray, family_link) -> np.ndarray:
    """Push scores into the open domain of the link before g(score) columns.

    Raw regression scores may fall outside the mean domain (a nonpositive
    value under a log link, say); flooring at 1e-6 keeps the design finite
    without materially moving interior scores.
    """
    scores = np.asarray(scores, dtype=float)
    link = family_link.link
    if link in ("log", "nb-canonical"):
        return np.maximum(scores, 1e-6)
    if link == "logit":
        return np.clip(scores, 1e-6, 1.0 - 1e-6)
    return scores + 0.0


# ---------------------------------------------------------------------------
# persistence


def _format_float(value: float) -> str:
    return repr(float(value))


def save_model(model: PrognosticModel, path: str) -> None:
    """Versioned flat text: one term per line, factors after a '|' separator."""
    lines = [_FORMAT_HEADER]
    lines.append(f"kind: {model.kind}")
    lines.append(
        f"cv_rmse: {'none' if model.cv_rmse is None else _format_float(model.cv_rmse)}"
    )
    lines.append("covariates: " + ",".join(model.covariate_names))
    for term in model.terms:
        parts = []
        for factor in term.factors:
            if isinstance(factor, LinearFactor):
                parts.append(f"~ {factor.var}")
            else:
                mark = "+" if factor.sign > 0 else "-"
                parts.append(f"{mark} {factor.var} {_format_float(factor.knot)}")
        line = f"term: {_format_float(term.weight)}"
        if parts:
            line += " | " + " ; ".join(parts)
        lines.append(line)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def _parse_factor(text: str, lineno: int) -> Factor:
    pieces = text.split()
    if len(pieces) == 2 and pieces[0] == "~":
        return LinearFactor(var=pieces[1])
    if len(pieces) == 3 and pieces[0] in ("+", "-"):
        try:
            knot = float(pieces[2])
        except ValueError:
            raise ModelFormatError(f"line {lineno}: bad knot value {pieces[2]!r}") from None
        return HingeFactor(var=pieces[1], knot=knot, sign=1 if pieces[0] == "+" else -1)
    raise ModelFormatError(f"line {lineno}: unrecognized factor {text!r}")


def load_model(path: str) -> PrognosticModel:
    with open(path, encoding="utf-8") as fh:
        lines = [line.rstrip("\n") for line in fh]
    lines = [line for line in lines if line.strip()]
    if not lines or lines[0].strip() != _FORMAT_HEADER:
        raise ModelFormatError(
            f"{path}: missing or unsupported format header; expected {_FORMAT_HEADER!r}"
        )
    kind = "hinge"
    rmse: float | None = None
    covariates: tuple[str, ...] = ()
    terms: list[ModelTerm] = []
    for lineno, line in enumerate(lines[1:], start=2):
        line = line.strip()
        if line.startswith("kind:"):
            kind = line[len("kind:"):].strip()
        elif line.startswith("cv_rmse:"):
            raw = line[len("cv_rmse:"):].strip()
            rmse = None if raw == "none" else float(raw)
        elif line.startswith("covariates:"):
            raw = line[len("covariates:"):].strip()
            covariates = tuple(s.strip() for s in raw.split(",")) if raw else ()
        elif line.startswith("term:"):
            body = line[len("term:"):].strip()
            if "|" in body:
                weight_text, factor_text = body.split("|", 1)
                factors = tuple(
                    _parse_factor(chunk.strip(), lineno)
                    for chunk in factor_text.split(";")
                )
            else:
                weight_text, factors = body, ()
            try:
                weight = float(weight_text.strip())
            except ValueError:
                raise ModelFormatError(
                    f"line {lineno}: bad term weight {weight_text.strip()!r}"
                ) from None
            terms.append(ModelTerm(weight=weight, factors=factors))
        else:
            raise ModelFormatError(f"line {lineno}: unrecognized directive {line!r}")
    if not terms:
        raise ModelFormatError(f"{path}: model file declares no terms")
    return PrognosticModel(
        terms=tuple(terms), covariate_names=covariates, kind=kind, cv_rmse=rmse
    )
