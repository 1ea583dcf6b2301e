"""Leakage-safe table preparation: mean imputation, IQR outlier replacement, z-scoring.

Parameters are learned from the training rows only and then applied, frozen,
to any other rows.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InsufficientDataError, ParameterError

IQR_FACTOR = 1.5
# relative floor below which a post-replacement column counts as constant
ZERO_STD = 1e-12


@dataclass(frozen=True)
class PrepTransform:
    """Per-column preparation parameters for the retained columns.

    ``columns`` indexes the input columns that survive; ``dropped`` lists
    ``(column, reason)`` for the others.
    """

    columns: np.ndarray
    mean: np.ndarray
    q1: np.ndarray
    q3: np.ndarray
    replacement: np.ndarray
    z_mean: np.ndarray
    z_std: np.ndarray
    fit_rows: np.ndarray
    dropped: tuple = ()

    @property
    def lower(self) -> np.ndarray:
        return self.q1 - IQR_FACTOR * (self.q3 - self.q1)

    @property
    def upper(self) -> np.ndarray:
        return self.q3 + IQR_FACTOR * (self.q3 - self.q1)

    def to_dict(self, names=None) -> dict:
        cols = [int(c) for c in self.columns]
        return {
            "columns": cols if names is None else [names[c] for c in cols],
            "mean": self.mean.tolist(), "q1": self.q1.tolist(), "q3": self.q3.tolist(),
            "replacement": self.replacement.tolist(),
            "z_mean": self.z_mean.tolist(), "z_std": self.z_std.tolist(),
            "fit_rows": [int(r) for r in self.fit_rows],
            "dropped": [[int(c) if names is None else names[c], why]
                        for c, why in self.dropped],
        }


def _clamp_replace(col, lo, hi, value):
    return np.where((col < lo) | (col > hi), value, col)


def prep_fit(X, rows=None) -> PrepTransform:
    """Learn preparation parameters from ``X[rows]`` (all rows by default).

    Missing cells are NaN. Per column: (1) mean of the observed values, used
    for imputation; (2) Q1/Q3 of the observed values (linear interpolation),
    bounds ``Q1 - 1.5 IQR`` and ``Q3 + 1.5 IQR``, replacement value = mean of
    the in-bound observed values; (3) mean and population standard deviation
    of the imputed, replaced column. Columns that are entirely missing or
    constant after replacement are dropped.

    Examples
    --------
    >>> t = prep_fit(np.array([[1.0], [2.0], [3.0], [4.0], [100.0]]))
    >>> float(t.q1[0]), float(t.q3[0]), float(t.replacement[0])
    (2.0, 4.0, 2.5)
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ParameterError("X must be 2-D")
    rows = np.arange(X.shape[0]) if rows is None else np.asarray(rows, dtype=int)
    if rows.size < 2:
        raise InsufficientDataError("preparation needs at least two rows")
    if np.any(np.isinf(X[rows])):
        raise ParameterError("infinite values are not missing values; use NaN")
    keep, dropped = [], []
    stats = {k: [] for k in ("mean", "q1", "q3", "replacement", "z_mean", "z_std")}
    for j in range(X.shape[1]):
        col = X[rows, j]
        obs = col[~np.isnan(col)]
        if obs.size == 0:
            dropped.append((j, "all values missing"))
            continue
        mean = obs.mean()
        q1, q3 = np.quantile(obs, [0.25, 0.75])
        iqr = q3 - q1
        lo, hi = q1 - IQR_FACTOR * iqr, q3 + IQR_FACTOR * iqr
        replacement = obs[(obs >= lo) & (obs <= hi)].mean()
        filled = _clamp_replace(np.where(np.isnan(col), mean, col), lo, hi, replacement)
        z_mean = filled.mean()
        z_std = filled.std()
        if z_std <= ZERO_STD * max(1.0, abs(z_mean)):
            dropped.append((j, "zero variance"))
            continue
        keep.append(j)
        for k, v in zip(stats, (mean, q1, q3, replacement, z_mean, z_std)):
            stats[k].append(v)
    arrays = {k: np.array(v, dtype=float) for k, v in stats.items()}
    return PrepTransform(np.array(keep, dtype=int), fit_rows=rows.copy(),
                         dropped=tuple(dropped), **arrays)


def prep_apply(t: PrepTransform, X, rows=None) -> np.ndarray:
    """Impute, clamp-replace and z-score ``X[rows]`` with frozen parameters.

    Returns only the retained columns, in their original order.
    """
    X = np.asarray(X, dtype=float)
    if rows is not None:
        X = X[np.asarray(rows, dtype=int)]
    sub = X[:, t.columns]
    sub = np.where(np.isnan(sub), t.mean, sub)
    sub = _clamp_replace(sub, t.lower, t.upper, t.replacement)
    return (sub - t.z_mean) / t.z_std
