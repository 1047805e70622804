"""Dataset containers, CSV ingestion, fold assignment, and train/test splits.

Trial rows carry (id, covariates, arm, outcome); historical rows carry
(id, covariates, outcome) and are control-only by definition.  All numeric
columns are finite float64; missing values are rejected at load time with
the offending row named in the error.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "DataFormatError",
    "InfeasibleFoldError",
    "TrialDataset",
    "HistoricalDataset",
    "FoldAssignment",
    "load_trial_csv",
    "load_historical_csv",
    "write_trial_csv",
    "write_historical_csv",
    "make_folds",
    "make_plain_folds",
    "split_historical",
]


class DataFormatError(ValueError):
    """Raised when a data file or in-memory dataset violates the row contract."""


class InfeasibleFoldError(ValueError):
    """Raised when a fold count cannot be satisfied by the arm sizes."""


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


def _check_finite(name: str, arr: np.ndarray) -> None:
    if not np.all(np.isfinite(arr)):
        bad = int(np.flatnonzero(~np.isfinite(arr))[0])
        raise DataFormatError(f"non-finite value in '{name}' at row {bad + 1}")


@dataclass(frozen=True, eq=False)
class TrialDataset:
    """Immutable randomized-trial sample with a known assignment probability.

    w has shape (n, p); p may be zero.  pi1 is the design probability of
    assignment to arm 1, not the empirical arm fraction.
    """

    ids: tuple[str, ...]
    w: np.ndarray
    a: np.ndarray
    y: np.ndarray
    pi1: float
    covariate_names: tuple[str, ...]

    def __post_init__(self) -> None:
        w = np.asarray(self.w, dtype=float)
        if w.ndim != 2:
            raise DataFormatError("covariate matrix must be 2-dimensional")
        a = np.asarray(self.a, dtype=np.int64)
        y = np.asarray(self.y, dtype=float)
        n = len(self.ids)
        if w.shape[0] != n or a.shape != (n,) or y.shape != (n,):
            raise DataFormatError("ids, w, a, y must agree on the number of rows")
        if w.shape[1] != len(self.covariate_names):
            raise DataFormatError("covariate_names must match the columns of w")
        if n == 0:
            raise DataFormatError("dataset has no rows")
        if not (0.0 < self.pi1 < 1.0):
            raise DataFormatError(f"pi1 must lie strictly in (0, 1), got {self.pi1}")
        bad = np.flatnonzero((a != 0) & (a != 1))
        if bad.size:
            raise DataFormatError(f"arm value outside {{0, 1}} at row {int(bad[0]) + 1}")
        _check_finite("w", w)
        _check_finite("y", y)
        object.__setattr__(self, "w", _readonly(w))
        object.__setattr__(self, "a", _readonly(a))
        object.__setattr__(self, "y", _readonly(y))

    @property
    def n(self) -> int:
        return len(self.ids)

    @property
    def p(self) -> int:
        return self.w.shape[1]

    @property
    def n1(self) -> int:
        return int(np.sum(self.a == 1))

    @property
    def n0(self) -> int:
        return int(np.sum(self.a == 0))

    @property
    def pi0(self) -> float:
        return 1.0 - self.pi1

    def take(self, index: Sequence[int]) -> "TrialDataset":
        """Row subset in the given order, preserving pi1 and covariate names."""
        idx = np.asarray(index, dtype=np.intp)
        return TrialDataset(
            ids=tuple(self.ids[i] for i in idx),
            w=self.w[idx],
            a=self.a[idx],
            y=self.y[idx],
            pi1=self.pi1,
            covariate_names=self.covariate_names,
        )


@dataclass(frozen=True, eq=False)
class HistoricalDataset:
    """Immutable control-only sample used for prognostic training and planning."""

    ids: tuple[str, ...]
    w: np.ndarray
    y: np.ndarray
    covariate_names: tuple[str, ...]

    def __post_init__(self) -> None:
        w = np.asarray(self.w, dtype=float)
        if w.ndim != 2:
            raise DataFormatError("covariate matrix must be 2-dimensional")
        y = np.asarray(self.y, dtype=float)
        n = len(self.ids)
        if w.shape[0] != n or y.shape != (n,):
            raise DataFormatError("ids, w, y must agree on the number of rows")
        if w.shape[1] != len(self.covariate_names):
            raise DataFormatError("covariate_names must match the columns of w")
        if n == 0:
            raise DataFormatError("dataset has no rows")
        _check_finite("w", w)
        _check_finite("y", y)
        object.__setattr__(self, "w", _readonly(w))
        object.__setattr__(self, "y", _readonly(y))

    @property
    def n(self) -> int:
        return len(self.ids)

    @property
    def p(self) -> int:
        return self.w.shape[1]

    def take(self, index: Sequence[int]) -> "HistoricalDataset":
        idx = np.asarray(index, dtype=np.intp)
        return HistoricalDataset(
            ids=tuple(self.ids[i] for i in idx),
            w=self.w[idx],
            y=self.y[idx],
            covariate_names=self.covariate_names,
        )


@dataclass(frozen=True, eq=False)
class FoldAssignment:
    """Arm-stratified fold labels for one dataset.

    fold_of[i] is the fold index of row i in 0..k-1.  Within each arm the
    fold sizes differ by at most one, so every fold sees both arms whenever
    k does not exceed the smaller arm.
    """

    k: int
    fold_of: np.ndarray
    seed: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "fold_of", _readonly(np.asarray(self.fold_of, dtype=np.int64)))

    def indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of == fold)

    def complement(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of != fold)


def _parse_float(text: str, column: str, row: int) -> float:
    text = text.strip()
    if not text:
        raise DataFormatError(f"missing value in column '{column}' at row {row}")
    try:
        value = float(text)
    except ValueError:
        raise DataFormatError(
            f"unparseable value {text!r} in column '{column}' at row {row}"
        ) from None
    if not np.isfinite(value):
        raise DataFormatError(f"non-finite value in column '{column}' at row {row}")
    return value


def _read_rows(path: str) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [row for row in csv.reader(fh) if row]
    if not rows:
        raise DataFormatError(f"{path}: file is empty")
    header = [name.strip() for name in rows[0]]
    if len(set(header)) != len(header):
        raise DataFormatError(f"{path}: duplicate column names in header")
    for r, row in enumerate(rows[1:], start=1):
        if len(row) != len(header):
            raise DataFormatError(f"{path}: wrong field count at row {r}")
    return header, rows[1:]


def load_trial_csv(path: str, pi1: float) -> TrialDataset:
    """Read a trial CSV with columns id, a, y plus any covariate columns.

    Row numbers in error messages are 1-based data rows (the header is row 0).
    Arm values must be the literal digits 0 or 1.
    """
    header, rows = _read_rows(path)
    for required in ("id", "a", "y"):
        if required not in header:
            raise DataFormatError(f"{path}: missing required column '{required}'")
    cov_names = tuple(name for name in header if name not in ("id", "a", "y"))
    col = {name: header.index(name) for name in header}

    ids: list[str] = []
    arms = np.empty(len(rows), dtype=np.int64)
    ys = np.empty(len(rows), dtype=float)
    ws = np.empty((len(rows), len(cov_names)), dtype=float)
    for r, row in enumerate(rows, start=1):
        ids.append(row[col["id"]].strip())
        raw_a = row[col["a"]].strip()
        if raw_a not in ("0", "1"):
            raise DataFormatError(f"{path}: arm value {raw_a!r} outside {{0, 1}} at row {r}")
        arms[r - 1] = int(raw_a)
        ys[r - 1] = _parse_float(row[col["y"]], "y", r)
        for j, name in enumerate(cov_names):
            ws[r - 1, j] = _parse_float(row[col[name]], name, r)
    return TrialDataset(
        ids=tuple(ids), w=ws, a=arms, y=ys, pi1=pi1, covariate_names=cov_names
    )


def load_historical_csv(path: str) -> HistoricalDataset:
    """Read a historical CSV with columns id, y plus covariates.

    An 'a' column is tolerated but must be identically zero: historical
    data are control-only, and any treated row is an error naming the row.
    """
    header, rows = _read_rows(path)
    for required in ("id", "y"):
        if required not in header:
            raise DataFormatError(f"{path}: missing required column '{required}'")
    cov_names = tuple(name for name in header if name not in ("id", "a", "y"))
    col = {name: header.index(name) for name in header}

    ids: list[str] = []
    ys = np.empty(len(rows), dtype=float)
    ws = np.empty((len(rows), len(cov_names)), dtype=float)
    for r, row in enumerate(rows, start=1):
        ids.append(row[col["id"]].strip())
        if "a" in col:
            raw_a = row[col["a"]].strip()
            if raw_a != "0":
                raise DataFormatError(
                    f"{path}: historical data must be control-only; "
                    f"arm value {raw_a!r} at row {r}"
                )
        ys[r - 1] = _parse_float(row[col["y"]], "y", r)
        for j, name in enumerate(cov_names):
            ws[r - 1, j] = _parse_float(row[col[name]], name, r)
    return HistoricalDataset(ids=tuple(ids), w=ws, y=ys, covariate_names=cov_names)


def _format_value(value: float) -> str:
    # repr keeps shortest round-trip form, so rewritten files reload exactly
    if value == int(value) and abs(value) < 1e15:
        return repr(int(value))
    return repr(float(value))


def write_trial_csv(dataset: TrialDataset, path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "a", "y", *dataset.covariate_names])
        for i in range(dataset.n):
            writer.writerow(
                [
                    dataset.ids[i],
                    str(int(dataset.a[i])),
                    _format_value(float(dataset.y[i])),
                    *(_format_value(float(v)) for v in dataset.w[i]),
                ]
            )


def write_historical_csv(dataset: HistoricalDataset, path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "y", *dataset.covariate_names])
        for i in range(dataset.n):
            writer.writerow(
                [
                    dataset.ids[i],
                    _format_value(float(dataset.y[i])),
                    *(_format_value(float(v)) for v in dataset.w[i]),
                ]
            )


def make_folds(arms: np.ndarray, k: int, seed: int) -> FoldAssignment:
    """Assign arm-stratified folds: permute each arm, deal into k chunks.

    Within each arm the chunk sizes differ by at most one.  Requires
    2 <= k <= min arm size so every fold retains both arms.
    """
    arms = np.asarray(arms, dtype=np.int64)
    if k < 2:
        raise InfeasibleFoldError(f"fold count must be at least 2, got {k}")
    n0 = int(np.sum(arms == 0))
    n1 = int(np.sum(arms == 1))
    if k > min(n0, n1):
        raise InfeasibleFoldError(
            f"fold count {k} exceeds the smaller arm size {min(n0, n1)}"
        )
    rng = np.random.default_rng(seed)
    fold_of = np.empty(arms.shape[0], dtype=np.int64)
    for arm in (0, 1):
        members = np.flatnonzero(arms == arm)
        order = rng.permutation(members.size)
        for fold, chunk in enumerate(np.array_split(members[order], k)):
            fold_of[chunk] = fold
    return FoldAssignment(k=k, fold_of=fold_of, seed=seed)


def make_plain_folds(n: int, k: int, seed: int) -> np.ndarray:
    """Unstratified fold labels for control-only data; sizes differ by <= 1."""
    if k < 2:
        raise InfeasibleFoldError(f"fold count must be at least 2, got {k}")
    if k > n:
        raise InfeasibleFoldError(f"fold count {k} exceeds the sample size {n}")
    perm = np.random.default_rng(seed).permutation(n)
    fold_of = np.empty(n, dtype=np.int64)
    for fold, chunk in enumerate(np.array_split(perm, k)):
        fold_of[chunk] = fold
    return fold_of


def split_historical(
    data: HistoricalDataset, train_frac: float, seed: int
) -> tuple[HistoricalDataset, HistoricalDataset]:
    """Disjoint train/test row split; both parts keep the original row order."""
    if not (0.0 < train_frac < 1.0):
        raise DataFormatError(f"train_frac must lie strictly in (0, 1), got {train_frac}")
    n_train = int(round(train_frac * data.n))
    if n_train == 0 or n_train == data.n:
        raise DataFormatError(
            f"train_frac {train_frac} leaves an empty part at n={data.n}"
        )
    perm = np.random.default_rng(seed).permutation(data.n)
    train_idx = np.sort(perm[:n_train])
    test_idx = np.sort(perm[n_train:])
    return data.take(train_idx), data.take(test_idx)
