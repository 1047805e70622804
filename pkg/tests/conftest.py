"""Shared fixtures and small dataset builders for the test suite."""

import numpy as np
import pytest

from progpower.data import HistoricalDataset, TrialDataset


def make_trial(n=40, p=2, seed=0, pi1=0.5, balanced=False, y=None, w=None, a=None):
    rng = np.random.default_rng(seed)
    if w is None:
        w = rng.normal(size=(n, p))
    else:
        w = np.asarray(w, dtype=float)
        n, p = w.shape
    if a is None:
        if balanced:
            a = np.zeros(n, dtype=int)
            a[: n // 2] = 1
            rng.shuffle(a)
        else:
            a = rng.integers(0, 2, n)
            if a.sum() == 0:
                a[0] = 1
            if a.sum() == n:
                a[0] = 0
    else:
        a = np.asarray(a, dtype=int)
    if y is None:
        y = rng.normal(size=n) + a
    names = tuple(f"w{j+1}" for j in range(p))
    return TrialDataset(
        ids=tuple(str(i) for i in range(n)),
        w=w,
        a=a,
        y=np.asarray(y, dtype=float),
        pi1=pi1,
        covariate_names=names,
    )


def make_historical(n=60, p=2, seed=0, y=None, w=None):
    rng = np.random.default_rng(seed)
    if w is None:
        w = rng.normal(size=(n, p))
    else:
        w = np.asarray(w, dtype=float)
        n, p = w.shape
    if y is None:
        y = rng.normal(size=n)
    names = tuple(f"w{j+1}" for j in range(p))
    return HistoricalDataset(
        ids=tuple(str(i) for i in range(n)),
        w=w,
        y=np.asarray(y, dtype=float),
        covariate_names=names,
    )


@pytest.fixture
def tmp_csv(tmp_path):
    def _write(name, text):
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return str(path)

    return _write
