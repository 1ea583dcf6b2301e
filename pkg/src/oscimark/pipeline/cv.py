"""Nested cross-validation, final-model training and permutation inference."""
from __future__ import annotations

import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..errors import EmptySelectionError, InsufficientDataError, ParameterError
from ..optim import SvrModel, svr_fit, svr_predict
from .prep import PrepTransform, prep_apply, prep_fit
from .selection import SelectionConfig, StabilityResult, child_seed, fold_indices, stability_select
from .stats import pearson, score
from .stepwise import GridConfig, StepwiseResult, stepwise_svr


@dataclass(frozen=True)
class PipelineConfig:
    outer_folds: int = 5
    # folds with fewer test subjects get no r of their own
    min_test: int = 3
    selection: SelectionConfig = field(default_factory=SelectionConfig)
    grid: GridConfig = field(default_factory=GridConfig)

    def __post_init__(self):
        if self.outer_folds < 2:
            raise ParameterError("need at least two outer folds")

    def to_dict(self) -> dict:
        en = self.selection.elastic_net
        return {
            "outer_folds": self.outer_folds, "min_test": self.min_test,
            "selection": {"n_folds": self.selection.n_folds,
                          "min_folds": self.selection.min_folds,
                          "loo_share": self.selection.loo_share},
            "elastic_net": {"alpha": en.alpha, "lam": en.lam, "tol": en.tol,
                            "max_iter": en.max_iter, "loss_scale": en.loss_scale},
            "grid": self.grid.to_dict(),
        }


@dataclass(frozen=True)
class FittedModel:
    """Everything learned from one training set."""

    prep: PrepTransform
    stability: StabilityResult
    stepwise: StepwiseResult
    columns: np.ndarray     # input columns used by the SVR, in entry order
    svr: SvrModel

    def predict(self, X) -> np.ndarray:
        Z = prep_apply(self.prep, X)
        pos = np.searchsorted(self.prep.columns, self.columns)
        return svr_predict(self.svr, Z[:, pos])


@dataclass(frozen=True)
class FoldResult:
    index: int
    train: np.ndarray
    test: np.ndarray
    predictions: np.ndarray
    r: float                # nan when missing
    rmse: float
    mae: float
    model: FittedModel


@dataclass(frozen=True)
class CvReport:
    seed: int
    folds: tuple[FoldResult, ...]
    observed: np.ndarray
    predicted: np.ndarray   # out-of-fold prediction for every row
    fold_of: np.ndarray     # outer fold of every row
    config: PipelineConfig

    @property
    def fold_r(self) -> np.ndarray:
        return np.array([f.r for f in self.folds])

    @property
    def fold_mean_r(self) -> float:
        r = self.fold_r
        r = r[~np.isnan(r)]
        return float(r.mean()) if r.size else float("nan")

    @property
    def pooled(self):
        return score(self.predicted, self.observed)


def fit_model(X, y, seed: int, cfg: PipelineConfig = PipelineConfig(), rows=None) -> FittedModel:
    """Preparation, stability selection, stepwise SVR and final refit on ``rows``."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    rows = np.arange(X.shape[0]) if rows is None else np.asarray(rows, dtype=int)
    prep = prep_fit(X, rows)
    Z = prep_apply(prep, X, rows)
    yt = y[rows]
    stab = stability_select(Z, yt, seed, cfg.selection)
    Zs = Z[:, stab.retained]
    step = stepwise_svr(Zs, yt, cfg.grid)
    pos = stab.retained[list(step.features)]
    svr = svr_fit(Z[:, pos], yt, step.C, step.eps)
    return FittedModel(prep, stab, step, prep.columns[pos], svr)


def _run_fold(args):
    X, y, k, train, test, seed, cfg = args
    model = fit_model(X, y, seed, cfg, train)
    pred = model.predict(X[test])
    s = score(pred, y[test])
    r = s.r if test.size >= cfg.min_test else float("nan")
    return FoldResult(k, train, test, pred, r, s.rmse, s.mae, model)


def _map(fn, items, workers: int):
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def nested_cv(X, y, seed: int, cfg: PipelineConfig = PipelineConfig(),
              workers: int = 1) -> CvReport:
    """Outer seeded k-fold; all model building happens on each fold's training rows.

    Fold ``k`` uses ``child_seed(seed, k)`` for its inner stability-selection
    split. The headline statistic is the mean of the per-fold test r
    (``CvReport.fold_mean_r``); pooled out-of-fold scores are also kept.

    Raises
    ------
    EmptySelectionError
        When stability selection retains nothing in some fold.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n = X.shape[0]
    if n < 10:
        raise InsufficientDataError(f"nested cross-validation needs n >= 10, got {n}")
    if y.shape != (n,) or not np.all(np.isfinite(y)):
        raise ParameterError("y must be a finite vector with one value per row")
    folds = fold_indices(n, cfg.outer_folds, seed)
    tasks = [(X, y, k, np.setdiff1d(np.arange(n), test), test, child_seed(seed, k), cfg)
             for k, test in enumerate(folds)]
    results = tuple(_map(_run_fold, tasks, workers))
    pred = np.empty(n)
    fold_of = np.empty(n, dtype=int)
    for f in results:
        pred[f.test] = f.predictions
        fold_of[f.test] = f.index
        if f.test.size < cfg.min_test:
            warnings.warn(f"fold {f.index} has {f.test.size} test subjects; its r is "
                          "left out of the fold average")
    return CvReport(seed, results, y.copy(), pred, fold_of, cfg)


# -- permutation inference --------------------------------------------------

@dataclass(frozen=True)
class PermutationResult:
    observed: float
    null: np.ndarray
    p_value: float
    master_seed: int
    cv_seed: int
    n_undefined: int = 0    # permutations with no model or an undefined r

    @property
    def n_perm(self) -> int:
        return self.null.size


def permutation_p(observed: float, null) -> float:
    """Add-one p-value ``(1 + #{null >= observed}) / (n + 1)``."""
    null = np.asarray(null, dtype=float)
    return float((1 + np.count_nonzero(null >= observed)) / (null.size + 1))


def cv_statistic(X, y, seed: int, cfg: PipelineConfig) -> float:
    """Fold-averaged r of ``nested_cv``; nan when no model can be built or r is undefined."""
    try:
        r = nested_cv(X, y, seed, cfg).fold_mean_r
    except EmptySelectionError:
        return float("nan")
    return r


def _perm_task(args):
    X, y, i, master, cv_seed, cfg = args
    rng = np.random.default_rng(child_seed(master, i))
    return cv_statistic(X, y[rng.permutation(y.size)], cv_seed, cfg)


def permutation_test(X, y, n_perm: int = 1000, master_seed: int = 0,
                     cfg: PipelineConfig = PipelineConfig(), cv_seed: int | None = None,
                     workers: int = 1, observed: float | None = None) -> PermutationResult:
    """Null distribution of the fold-averaged r by re-running ``nested_cv`` on shuffled labels.

    Permutation ``i`` shuffles ``y`` with ``child_seed(master_seed, i)``; the
    outer split seed ``cv_seed`` (default ``master_seed``) is the same for
    every run. A run that retains no feature, or whose r is undefined, scores
    -1 (the empty model predicts a constant).
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if n_perm < 1:
        raise ParameterError("n_perm must be positive")
    cv_seed = master_seed if cv_seed is None else cv_seed
    if observed is None:
        observed = cv_statistic(X, y, cv_seed, cfg)
    tasks = [(X, y, i, master_seed, cv_seed, cfg) for i in range(n_perm)]
    null = np.array(_map(_perm_task, tasks, workers), dtype=float)
    n_undefined = int(np.isnan(null).sum())
    null = np.where(np.isnan(null), -1.0, null)
    observed = -1.0 if np.isnan(observed) else float(observed)
    return PermutationResult(observed, null, permutation_p(observed, null),
                             master_seed, cv_seed, n_undefined)
