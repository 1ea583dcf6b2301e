"""Dynamic functional connectivity: windowed wPLI, k-means brain states, state metrics."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numba
import numpy as np
from scipy import signal as sps

from .errors import DataIntegrityError, InsufficientDataError, ParameterError, SchemaError
from .signal import Recording, bandpass_array
from .spectral import Band

DYNFC_BANDS = ("delta", "theta", "alpha", "beta", "broadband")


@dataclass(frozen=True)
class WpliMatrix:
    window: int
    band: str
    matrix: np.ndarray

    def vector(self) -> np.ndarray:
        return upper_triangle(self.matrix)


@dataclass
class StateModel:
    k: int
    centroids: np.ndarray   # (k, n_pairs)
    band: str
    seed: int
    n_iter: int = 0
    converged: bool = True
    inertia_trace: list = field(default_factory=list)

    @property
    def n_pairs(self) -> int:
        return self.centroids.shape[1]


@dataclass(frozen=True)
class StateSequence:
    subject_id: str
    band: str
    labels: np.ndarray
    occupancy: np.ndarray
    mean_dwell: np.ndarray
    transitions: np.ndarray

    @property
    def total_transitions(self) -> int:
        return int(self.transitions.sum())


def upper_triangle(matrix: np.ndarray) -> np.ndarray:
    matrix = np.asarray(matrix)
    return matrix[(Ellipsis,) + np.triu_indices(matrix.shape[-1], 1)]


def sliding_windows(rec: Recording, len_s: float = 4.0, step_s: float = 1.0) -> np.ndarray:
    """Windows of ``len_s`` seconds every ``step_s`` seconds; a trailing partial window is dropped.

    Returns a read-only view of shape ``(n_windows, n_channels, window_samples)``.
    """
    length = int(round(len_s * rec.fs))
    step = int(round(step_s * rec.fs))
    if length < 1 or step < 1:
        raise ParameterError("window length and step must be at least one sample")
    if rec.n_samples < length:
        raise InsufficientDataError(
            f"{rec.duration:.3f} s recording is shorter than one {len_s} s window")
    n = (rec.n_samples - length) // step + 1
    view = np.lib.stride_tricks.sliding_window_view(rec.data, length, axis=1)[:, ::step][:, :n]
    return view.transpose(1, 0, 2)


def analytic_phase(window: np.ndarray, band: Band, fs: float) -> np.ndarray:
    """Band-pass (zero-phase Butterworth) then the discrete analytic signal, along the last axis."""
    if not 0 < band.lo < band.hi < fs / 2:
        raise ParameterError(f"band {band.name} not inside (0, {fs / 2}) Hz")
    filtered = bandpass_array(window, band.lo, band.hi, fs)
    return sps.hilbert(filtered, axis=-1)


@numba.njit(cache=True)
def _wpli_kernel(re, im):
    n_win, n_ch, n_t = re.shape
    n_pairs = n_ch * (n_ch - 1) // 2
    out = np.zeros((n_win, n_pairs))
    for w in range(n_win):
        k = 0
        for i in range(n_ch):
            for j in range(i + 1, n_ch):
                s = 0.0
                a = 0.0
                for t in range(n_t):
                    # Im(x * conj(y))
                    v = im[w, i, t] * re[w, j, t] - re[w, i, t] * im[w, j, t]
                    s += v
                    a += abs(v)
                if a > 0.0:
                    out[w, k] = abs(s) / a
                k += 1
    return out


def _wpli_pairs(z: np.ndarray) -> np.ndarray:
    """Upper-triangle wPLI over the last axis of ``z`` (..., channels, samples)."""
    lead = z.shape[:-2]
    z = z.reshape((-1,) + z.shape[-2:])
    out = _wpli_kernel(np.ascontiguousarray(z.real), np.ascontiguousarray(z.imag))
    return out.reshape(lead + (out.shape[-1],))


def wpli_matrix(analytic: np.ndarray, window: int = 0, band: str = "") -> WpliMatrix:
    """Weighted phase lag index between all channel pairs of one window.

    For each pair, with ``I_t = Im(x_t * conj(y_t))``,
    ``wPLI = |mean I_t| / mean |I_t|``, defined as 0 when the denominator is 0.
    """
    z = np.asarray(analytic)
    if z.ndim != 2 or z.shape[0] < 2 or z.shape[1] < 2:
        raise ParameterError("need at least two channels and two samples")
    if not np.all(np.isfinite(z)):
        raise DataIntegrityError("non-finite analytic signal")
    n = z.shape[0]
    iu, ju = np.triu_indices(n, 1)
    vals = _wpli_pairs(z)
    mat = np.zeros((n, n))
    mat[iu, ju] = vals
    mat[ju, iu] = vals
    return WpliMatrix(window, band, mat)


def subject_wpli(rec: Recording, band: Band, len_s: float = 4.0,
                 step_s: float = 1.0) -> np.ndarray:
    """Upper-triangle wPLI vectors for every window, shape ``(n_windows, n_pairs)``.

    Each window is filtered and Hilbert-transformed on its own; all windows
    go through the filter in one vectorized call.
    """
    wins = sliding_windows(rec, len_s, step_s)
    return _wpli_pairs(analytic_phase(wins, band, rec.fs))


# -- k-means -----------------------------------------------------------------

def _as_vectors(matrices) -> np.ndarray:
    if len(matrices) and isinstance(matrices[0], WpliMatrix):
        return np.array([m.vector() for m in matrices])
    arr = np.asarray(matrices, dtype=float)
    if arr.ndim == 3:
        return upper_triangle(arr)
    if arr.ndim != 2:
        raise ParameterError("expected matrices (n, c, c) or vectors (n, p)")
    return arr


def _sq_dists(X, centroids):
    # explicit differences keep ties exact (no expansion round-off)
    return ((X[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=-1)


def _farthest_point_init(X, k, rng):
    chosen = [int(rng.integers(X.shape[0]))]
    d = ((X - X[chosen[0]]) ** 2).sum(axis=1)
    for _ in range(1, k):
        nxt = int(np.argmax(d))
        chosen.append(nxt)
        d = np.minimum(d, ((X - X[nxt]) ** 2).sum(axis=1))
    return X[chosen].copy()


def kmeans(X: np.ndarray, k: int, seed: int, max_iter: int = 300, tol: float = 1e-6):
    """Lloyd's algorithm with farthest-point seeding.

    Returns ``(centroids, labels, inertia_trace, n_iter, converged)``. An
    empty cluster is re-seeded with the point farthest from its current
    centroid. Iteration stops when assignments no longer change or the
    relative inertia change drops to ``tol``; the returned labels are always
    the nearest-centroid assignment for the returned centroids.
    """
    X = np.asarray(X, dtype=float)
    if k < 2:
        raise ParameterError("k must be at least 2")
    if X.shape[0] < k:
        raise ParameterError(f"{X.shape[0]} samples for k={k} clusters")
    rng = np.random.default_rng(seed)
    centroids = _farthest_point_init(X, k, rng)
    rows = np.arange(X.shape[0])

    d = _sq_dists(X, centroids)
    labels = np.argmin(d, axis=1)
    trace = [float(d[rows, labels].sum())]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        counts = np.bincount(labels, minlength=k)
        for c in np.flatnonzero(counts):
            centroids[c] = X[labels == c].mean(axis=0)
        empty = np.flatnonzero(counts == 0)
        if empty.size:
            own = ((X - centroids[labels]) ** 2).sum(axis=1)
            for c in empty:
                p = int(np.argmax(own))
                centroids[c] = X[p]
                own[p] = 0.0
        d = _sq_dists(X, centroids)
        new_labels = np.argmin(d, axis=1)
        trace.append(float(d[rows, new_labels].sum()))
        stable = np.array_equal(new_labels, labels)
        labels = new_labels
        prev = trace[-2]
        if stable or prev - trace[-1] <= tol * prev:
            converged = True
            break
    return centroids, labels, trace, it, converged


def cluster_states(matrices, k: int = 4, seed: int = 0, band: str = "",
                   max_iter: int = 300, tol: float = 1e-6) -> StateModel:
    """Group-level brain states: k-means over upper-triangle wPLI vectors."""
    X = _as_vectors(matrices)
    centroids, _, trace, n_iter, converged = kmeans(X, k, seed, max_iter, tol)
    return StateModel(k, centroids, band, seed, n_iter, converged, trace)


def state_metrics(labels: Sequence[int], k: int):
    """Occupancy, mean dwell (in windows) and per-state exit counts.

    >>> occ, dwell, trans = state_metrics([0, 0, 1, 1, 1, 2], 4)
    >>> dwell.tolist(), trans.tolist()
    ([2.0, 3.0, 1.0, 0.0], [1, 1, 0, 0])
    """
    labels = np.asarray(labels, dtype=int)
    if labels.size == 0:
        raise ParameterError("empty state sequence")
    if labels.min() < 0 or labels.max() >= k:
        raise ParameterError(f"labels must lie in [0, {k})")
    occupancy = np.bincount(labels, minlength=k) / labels.size
    change = np.flatnonzero(labels[1:] != labels[:-1])
    run_starts = np.r_[0, change + 1]
    run_lengths = np.diff(np.r_[run_starts, labels.size])
    run_states = labels[run_starts]
    n_runs = np.bincount(run_states, minlength=k)
    total = np.bincount(run_states, weights=run_lengths, minlength=k)
    mean_dwell = np.divide(total, n_runs, out=np.zeros(k), where=n_runs > 0)
    # every run except the last is followed by a different state
    transitions = np.bincount(run_states[:-1], minlength=k).astype(int)
    return occupancy, mean_dwell, transitions


def assign_labels(X: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    return np.argmin(_sq_dists(X, centroids), axis=1)


def assign_states(matrices, model: StateModel, subject_id: str = "") -> StateSequence:
    """Nearest-centroid state per window (ties go to the lowest state index)."""
    X = _as_vectors(matrices)
    if X.shape[1] != model.n_pairs:
        raise ParameterError(
            f"matrix dimension {X.shape[1]} does not match model dimension {model.n_pairs}")
    labels = assign_labels(X, model.centroids)
    occ, dwell, trans = state_metrics(labels, model.k)
    return StateSequence(subject_id, model.band, labels, occ, dwell, trans)


# -- persistence -------------------------------------------------------------

def state_models_to_dict(models: dict[str, StateModel]) -> dict:
    return {
        "kind": "state_models",
        "spec_version": 1,
        "models": {
            band: {"k": m.k, "band": m.band, "seed": m.seed,
                   "n_iter": m.n_iter, "converged": m.converged,
                   "centroids": m.centroids.tolist()}
            for band, m in models.items()
        },
    }


def state_models_from_dict(doc: dict) -> dict[str, StateModel]:
    if doc.get("kind") != "state_models":
        raise SchemaError("not a state model file")
    out = {}
    for band, m in doc["models"].items():
        out[band] = StateModel(int(m["k"]), np.array(m["centroids"], dtype=float),
                               m["band"], int(m["seed"]), int(m.get("n_iter", 0)),
                               bool(m.get("converged", True)))
    return out


def save_state_models(models: dict[str, StateModel], path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(state_models_to_dict(models), indent=1))
    return path


def load_state_models(path) -> dict[str, StateModel]:
    return state_models_from_dict(json.loads(Path(path).read_text()))
