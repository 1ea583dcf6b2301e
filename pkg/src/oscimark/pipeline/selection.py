"""Seeded fold splits and elastic-net stability selection."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import EmptySelectionError, InsufficientDataError, ParameterError
from ..optim import ElasticNetConfig, elastic_net_fit


def child_seed(master: int, *path: int) -> int:
    """Deterministic 32-bit seed for task ``path`` under ``master``."""
    return int(np.random.SeedSequence([int(master), *map(int, path)]).generate_state(1)[0])


def fold_indices(n: int, n_folds: int, seed: int) -> list[np.ndarray]:
    """Seeded shuffle, then contiguous split; fold sizes differ by at most one.

    Each fold's indices are returned sorted.
    """
    if n_folds < 2:
        raise ParameterError("need at least two folds")
    if n < n_folds:
        raise InsufficientDataError(f"{n} rows cannot fill {n_folds} folds")
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(f) for f in np.array_split(perm, n_folds)]


@dataclass(frozen=True)
class SelectionConfig:
    n_folds: int = 5
    min_folds: int = 3
    # a feature counts in a fold when nonzero in more than this share of LOO fits
    loo_share: float = 0.5
    elastic_net: ElasticNetConfig = field(default_factory=ElasticNetConfig)

    def __post_init__(self):
        if not 1 <= self.min_folds <= self.n_folds:
            raise ParameterError("min_folds must lie in [1, n_folds]")
        if not 0 <= self.loo_share < 1:
            raise ParameterError("loo_share must lie in [0, 1)")


@dataclass(frozen=True)
class StabilityResult:
    retained: np.ndarray        # column indices, ascending
    fold_counts: np.ndarray     # per column, folds in which it was selected
    loo_share: np.ndarray       # (n_folds, p) share of LOO fits selecting each column
    n_unconverged: int          # elastic-net fits that hit max_iter


def _loo_selection(X, y, cfg: ElasticNetConfig):
    n, p = X.shape
    hits = np.zeros(p)
    beta = None
    unconverged = 0
    for i in range(n):
        rows = np.r_[0:i, i + 1:n]
        yy = y[rows] - y[rows].mean()
        res = elastic_net_fit(X[rows], yy, cfg, beta0=beta)
        beta = res.coef
        unconverged += not res.converged
        hits += res.selected
    return hits / n, unconverged


def stability_select(X, y, seed: int, cfg: SelectionConfig = SelectionConfig()) -> StabilityResult:
    """Elastic-net stability selection over seeded folds with inner leave-one-out.

    In each of ``cfg.n_folds`` folds, the fold's training rows are fitted
    once per left-out row (``y`` centered per fit, ``X`` used as given, so
    callers pass standardized columns). A feature is selected in the fold
    when it is nonzero in more than ``cfg.loo_share`` of those fits, and
    retained when selected in at least ``cfg.min_folds`` folds.

    Raises
    ------
    EmptySelectionError
        When no feature is retained.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n = X.shape[0]
    if n < 10:
        raise InsufficientDataError(f"stability selection needs n >= 10, got {n}")
    if y.shape != (n,):
        raise ParameterError("y must have one value per row of X")
    shares = []
    unconverged = 0
    for test in fold_indices(n, cfg.n_folds, seed):
        train = np.setdiff1d(np.arange(n), test)
        share, bad = _loo_selection(X[train], y[train], cfg.elastic_net)
        shares.append(share)
        unconverged += bad
    shares = np.array(shares)
    counts = (shares > cfg.loo_share).sum(axis=0)
    retained = np.flatnonzero(counts >= cfg.min_folds)
    if retained.size == 0:
        raise EmptySelectionError(
            f"no feature selected in >= {cfg.min_folds} of {cfg.n_folds} folds "
            f"(max folds reached by any feature: {int(counts.max(initial=0))})")
    return StabilityResult(retained, counts, shares, unconverged)
