"""Prediction scores and the permutation Spearman test."""
from __future__ import annotations

from typing import NamedTuple

import numpy as np
from scipy.stats import rankdata

from ..errors import ParameterError, UndefinedCorrelationError


class Score(NamedTuple):
    r: float        # nan when either vector is constant
    rmse: float
    mae: float


def pearson(a, b) -> float:
    """Pearson correlation, ``nan`` when either input has zero variance."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    da = a - a.mean()
    db = b - b.mean()
    den = np.sqrt((da @ da) * (db @ db))
    if den == 0:
        return float("nan")
    return float(np.clip((da @ db) / den, -1.0, 1.0))


def score(pred, obs) -> Score:
    pred = np.asarray(pred, dtype=float)
    obs = np.asarray(obs, dtype=float)
    if pred.shape != obs.shape or pred.ndim != 1 or pred.size == 0:
        raise ParameterError("pred and obs must be equal-length non-empty vectors")
    err = pred - obs
    return Score(pearson(pred, obs), float(np.sqrt(np.mean(err ** 2))),
                 float(np.mean(np.abs(err))))


def spearman_perm(a, b, n_perm: int = 100_000, seed: int = 0,
                  batch: int = 10_000) -> tuple[float, float]:
    """Spearman rho with a two-sided permutation p-value.

    Ranks use midranks for ties. ``b`` is permuted; the p-value is
    ``(1 + #{|rho_perm| >= |rho|}) / (n_perm + 1)``.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ParameterError("a and b must be equal-length vectors")
    if a.size < 3:
        raise ParameterError("need at least 3 observations")
    if n_perm < 1:
        raise ParameterError("n_perm must be positive")
    if np.ptp(a) == 0 or np.ptp(b) == 0:
        raise UndefinedCorrelationError("Spearman correlation of a constant vector")
    ra = rankdata(a)
    rb = rankdata(b)
    ra = (ra - ra.mean()) / np.linalg.norm(ra - ra.mean())
    rb = (rb - rb.mean()) / np.linalg.norm(rb - rb.mean())
    rho = float(ra @ rb)
    rng = np.random.default_rng(seed)
    # compare with a little slack so that exact ties are not lost to rounding
    thresh = abs(rho) - 1e-12
    hits = 0
    done = 0
    while done < n_perm:
        m = min(batch, n_perm - done)
        perms = rng.permuted(np.broadcast_to(rb, (m, rb.size)), axis=1)
        hits += int(np.count_nonzero(np.abs(perms @ ra) >= thresh))
        done += m
    return rho, (1 + hits) / (n_perm + 1)
