"""Forward stepwise feature selection wrapped around a grid-searched linear SVR."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ParameterError
from ..optim import loo_grid_scores


def _default_cs():
    return np.logspace(-2, 3, 6)


def _default_eps():
    return np.linspace(0.01, 1.0, 10)


@dataclass(frozen=True)
class GridConfig:
    Cs: np.ndarray = field(default_factory=_default_cs)
    epss: np.ndarray = field(default_factory=_default_eps)

    def __post_init__(self):
        Cs = np.sort(np.asarray(self.Cs, dtype=float))
        epss = np.asarray(self.epss, dtype=float)
        if Cs.size == 0 or epss.size == 0:
            raise ParameterError("empty hyperparameter grid")
        if np.any(Cs <= 0) or np.any(epss < 0):
            raise ParameterError("C must be positive and eps non-negative")
        object.__setattr__(self, "Cs", Cs)
        object.__setattr__(self, "epss", epss)

    def to_dict(self) -> dict:
        return {"Cs": self.Cs.tolist(), "epss": self.epss.tolist()}


@dataclass(frozen=True)
class StepwiseResult:
    features: tuple[int, ...]   # best prefix, in entry order
    order: tuple[int, ...]      # every feature that entered, in entry order
    trace: tuple[float, ...]    # inner score after each entry
    C: float
    eps: float
    score: float


def best_cell(X, y, grid: GridConfig):
    """Grid-search (C, eps) by leave-one-out Pearson r; first maximum wins.

    Returns ``(score, C, eps)``.
    """
    scores = loo_grid_scores(X, y, grid.Cs, grid.epss)
    c, e = np.unravel_index(np.argmax(scores), scores.shape)
    return float(scores[c, e]), float(grid.Cs[c]), float(grid.epss[e])


def stepwise_svr(X, y, grid: GridConfig = GridConfig(), candidates=None) -> StepwiseResult:
    """Greedy forward selection scored by leave-one-out r of a linear SVR.

    Starting from the empty model, every remaining candidate is tried as the
    next feature; each trial is scored by the Pearson r between ``y`` and the
    pooled leave-one-out predictions at its best grid cell (constant
    predictions score -1). The best candidate enters (ties go to the earlier
    column) unless it fails to raise the score, which ends the search. The
    first candidate always enters. The returned subset is the prefix with the
    highest score.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise ParameterError("X must be (n, p) and y (n,)")
    pool = list(range(X.shape[1]) if candidates is None else candidates)
    if not pool:
        raise ParameterError("stepwise selection needs at least one candidate")
    chosen: list[int] = []
    trace: list[float] = []
    cells: list[tuple[float, float]] = []
    current = -np.inf
    while pool:
        best = None
        for j in pool:
            s, C, eps = best_cell(X[:, chosen + [j]], y, grid)
            if best is None or s > best[0]:
                best = (s, C, eps, j)
        s, C, eps, j = best
        if s - current <= 0:
            break
        chosen.append(j)
        pool.remove(j)
        trace.append(s)
        cells.append((C, eps))
        current = s
    k = int(np.argmax(trace))
    return StepwiseResult(tuple(chosen[:k + 1]), tuple(chosen), tuple(trace),
                          cells[k][0], cells[k][1], trace[k])
