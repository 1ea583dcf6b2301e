"""Linear epsilon-insensitive support vector regression.

Primal::

    min_{w, b}  0.5 * ||w||^2 + C * sum_i max(0, |y_i - (w @ x_i + b)| - eps)

The dual is solved over ``beta_i = a_i - a*_i`` with ``sum(beta) = 0`` and
``|beta_i| <= C`` by pairwise (SMO) coordinate steps on the maximal
violating pair, each step minimized exactly along its line.
"""
from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from ..errors import DataIntegrityError, ParameterError

KKT_TOL = 1e-6
MAX_STEPS = 200_000


@dataclass(frozen=True)
class SvrModel:
    w: np.ndarray
    b: float
    C: float
    eps: float
    support_count: int
    converged: bool = True
    kkt_violation: float = 0.0
    dual: np.ndarray | None = None


@numba.njit(cache=True)
def _bounds(beta, r, eps, C):
    """Largest lower bound and smallest upper bound the KKT conditions put on b."""
    n = beta.size
    lo = -np.inf
    hi = np.inf
    i_lo = -1
    i_hi = -1
    for k in range(n):
        if beta[k] < C:
            v = r[k] - eps if beta[k] >= 0.0 else r[k] + eps
            if v > lo:
                lo = v
                i_lo = k
        if beta[k] > -C:
            v = r[k] + eps if beta[k] <= 0.0 else r[k] - eps
            if v < hi:
                hi = v
                i_hi = k
    return lo, hi, i_lo, i_hi


@numba.njit(cache=True)
def _second_order_partner(K, beta, r, eps, C, i, lo):
    """Among points violating against ``i``, the one with the largest
    second-order decrease ``(lo - U_j)**2 / eta_ij``."""
    best = -1
    gain = -1.0
    for k in range(beta.size):
        if beta[k] <= -C:
            continue
        u = r[k] + eps if beta[k] <= 0.0 else r[k] - eps
        v = lo - u
        if v <= 0.0:
            continue
        eta = K[i, i] + K[k, k] - 2.0 * K[i, k]
        if eta < 1e-12:
            eta = 1e-12
        if v * v / eta > gain:
            gain = v * v / eta
            best = k
    return best


@numba.njit(cache=True)
def _line_step(bi, bj, g, eta, eps, C):
    """Minimize 0.5*eta*t^2 + g*t + eps*(|bi+t| + |bj-t|) over t in [0, T]."""
    T = min(C - bi, C + bj)
    if T <= 0.0:
        return 0.0
    # kinks where bi + t or bj - t crosses zero
    k1 = -bi if (bi < 0.0 and -bi < T) else T
    k2 = bj if (bj > 0.0 and bj < T) else T
    a = 0.0
    for _ in range(3):
        b = min(k1 if k1 > a else T, k2 if k2 > a else T)
        mid = 0.5 * (a + b)
        si = 1.0 if bi + mid >= 0.0 else -1.0
        sj = -1.0 if bj - mid > 0.0 else 1.0
        slope0 = g + eps * (si + sj)
        if eta > 0.0:
            t = -slope0 / eta
            if t <= a:
                return a
            if t < b:
                return t
        elif slope0 >= 0.0:
            return a
        a = b
        if a >= T:
            return T
    return a


@numba.njit(cache=True)
def _dual_objective(K, y, beta, eps):
    return 0.5 * beta @ (K @ beta) - y @ beta + eps * np.abs(beta).sum()


@numba.njit(cache=True)
def _lu_solve(A, rhs):
    """Gaussian elimination with partial pivoting; empty result when near-singular."""
    m = rhs.size
    M = A.copy()
    x = rhs.copy()
    big = 0.0
    for a in range(m):
        for c in range(m):
            big = max(big, abs(M[a, c]))
    for c in range(m):
        p = c
        for a in range(c + 1, m):
            if abs(M[a, c]) > abs(M[p, c]):
                p = a
        if abs(M[p, c]) <= 1e-10 * big:
            return np.empty(0)
        if p != c:
            for q in range(m):
                M[c, q], M[p, q] = M[p, q], M[c, q]
            x[c], x[p] = x[p], x[c]
        for a in range(c + 1, m):
            f = M[a, c] / M[c, c]
            if f != 0.0:
                for q in range(c, m):
                    M[a, q] -= f * M[c, q]
                x[a] -= f * x[c]
    for c in range(m - 1, -1, -1):
        acc = x[c]
        for q in range(c + 1, m):
            acc -= M[c, q] * x[q]
        x[c] = acc / M[c, c]
    return x


@numba.njit(cache=True)
def _free_direction(K, y, beta, inF, side, eps):
    """Step for the free multipliers toward the restricted optimum.

    Solves the bordered KKT system of the dual restricted to the free set
    (signs fixed, others frozen, sum preserved). When that system is
    inconsistent the restricted objective decreases linearly along a
    zero-curvature direction, which is returned instead with ``full=False``.
    """
    n = beta.size
    m = 0
    for k in range(n):
        if inF[k]:
            m += 1
    idx = np.empty(m, dtype=np.int64)
    q = 0
    for k in range(n):
        if inF[k]:
            idx[q] = k
            q += 1
    Kb = K @ beta
    A = np.zeros((m + 1, m + 1))
    rhs = np.zeros(m + 1)
    for a in range(m):
        fa = idx[a]
        for c in range(m):
            A[a, c] = K[fa, idx[c]]
        A[a, m] = 1.0
        A[m, a] = 1.0
        rhs[a] = y[fa] - side[fa] * eps - Kb[fa]
    sol = _lu_solve(A, rhs)
    if sol.size == 0:
        sol = np.linalg.lstsq(A, rhs, 1e-10)[0]
    res = rhs - A @ sol
    scale = 1.0
    for a in range(m):
        scale = max(scale, abs(rhs[a]))
    full = True
    if np.sqrt(res @ res) > 1e-9 * scale:
        sol = res
        full = False
    return idx, sol[:m], full


@numba.njit(cache=True)
def _restore_sum(beta, side, inF, C):
    """Push rounding drift in ``sum(beta)`` back onto coordinates with room.

    Long chains of restricted steps on an ill-conditioned kernel leave a drift
    far above machine precision but far below any meaningful step. Returns
    False if the drift is not small relative to the multipliers.
    """
    n = beta.size
    mag = 0.0
    for k in range(n):
        mag += abs(beta[k])
    s = beta.sum()
    if abs(s) > 1e-7 * (1.0 + mag):
        return False
    for pas in range(2):
        for k in range(n):
            if s == 0.0:
                return True
            if pas == 0 and not inF[k]:
                continue
            b = beta[k]
            if b > 0.0 or (b == 0.0 and side[k] >= 0.0):
                lo, hi = 0.0, C
            else:
                lo, hi = -C, 0.0
            new = min(hi, max(lo, b - s))
            s -= b - new
            beta[k] = new
    return abs(s) <= 1e-12 * (1.0 + mag)


@numba.njit(cache=True)
def _active_set(K, y, beta, C, eps, tol, max_rounds):
    """Primal active-set iterations on the dual from a feasible ``beta``.

    Each round releases the maximal violating pair into the free set, then
    alternates restricted steps and ratio tests (dropping the blocking
    multiplier onto its face) until a restricted optimum is reached.
    Returns True once the KKT gap is within ``tol``; False hands over to SMO.
    """
    n = beta.size
    inF = np.zeros(n, dtype=np.bool_)
    side = np.zeros(n)
    for k in range(n):
        if beta[k] != 0.0 and abs(beta[k]) < C:
            inF[k] = True
            side[k] = 1.0 if beta[k] > 0.0 else -1.0
    obj = _dual_objective(K, y, beta, eps)
    trial = beta.copy()
    for rnd in range(max_rounds):
        r = y - K @ beta
        lo, hi, i, j = _bounds(beta, r, eps, C)
        if i < 0 or j < 0 or lo - hi <= tol:
            return True
        # i wants to grow, j wants to shrink
        if not inF[i]:
            inF[i] = True
            side[i] = 1.0 if beta[i] >= 0.0 else -1.0
        if not inF[j]:
            inF[j] = True
            side[j] = -1.0 if beta[j] <= 0.0 else 1.0
        trial[:] = beta
        for _ in range(2 * n + 2):
            idx, d, full = _free_direction(K, y, trial, inF, side, eps)
            if idx.size == 0:
                break
            tau = 1.0 if full else np.inf
            block = -1
            for a in range(idx.size):
                k = idx[a]
                lo_k = 0.0 if side[k] > 0 else -C
                hi_k = C if side[k] > 0 else 0.0
                if d[a] > 0.0:
                    t = (hi_k - trial[k]) / d[a]
                elif d[a] < 0.0:
                    t = (lo_k - trial[k]) / d[a]
                else:
                    continue
                if t < tau:
                    tau = t
                    block = k
            if tau == np.inf:
                break
            if tau < 0.0:
                tau = 0.0
            for a in range(idx.size):
                trial[idx[a]] += tau * d[a]
            if block < 0:
                break
            lo_b = 0.0 if side[block] > 0 else -C
            hi_b = C if side[block] > 0 else 0.0
            trial[block] = hi_b if abs(trial[block] - hi_b) < abs(trial[block] - lo_b) else lo_b
            inF[block] = False
        for k in range(n):
            if inF[k] and (trial[k] == 0.0 or abs(trial[k]) >= C):
                inF[k] = False
        new_obj = _dual_objective(K, y, trial, eps)
        if not new_obj <= obj + 1e-12 * (1.0 + abs(obj)):
            return False
        if not _restore_sum(trial, side, inF, C):
            return False
        beta[:] = trial
        obj = new_obj
    return False


@numba.njit(cache=True)
def _smo(K, y, beta, C, eps, tol, max_steps):
    n = y.size
    r = y - K @ beta
    steps = 0
    while steps < max_steps:
        lo, hi, i, j = _bounds(beta, r, eps, C)
        if i < 0 or j < 0 or lo - hi <= tol:
            return r, steps, True
        j = _second_order_partner(K, beta, r, eps, C, i, lo)
        eta = K[i, i] + K[j, j] - 2.0 * K[i, j]
        g = r[j] - r[i]
        t = _line_step(beta[i], beta[j], g, eta, eps, C)
        if t <= 0.0:
            return r, steps, False
        bi = beta[i] + t
        bj = beta[j] - t
        # land exactly on kinks and box faces
        if abs(bi) <= 1e-15 * C:
            bi = 0.0
        if abs(bj) <= 1e-15 * C:
            bj = 0.0
        if bi > C - 1e-15 * C:
            bi = C
        if bj < -C + 1e-15 * C:
            bj = -C
        ti = bi - beta[i]
        tj = beta[j] - bj
        beta[i] = bi
        beta[j] = bj
        for k in range(n):
            r[k] -= ti * K[i, k] - tj * K[j, k]
        steps += 1
    lo, hi, i, j = _bounds(beta, r, eps, C)
    return r, steps, lo - hi <= tol


@numba.njit(cache=True)
def _intercept(beta, r, eps, C):
    """Intercept from free multipliers, else the mean residual clipped to the
    interval of optimal intercepts.

    Multipliers within ``1e-9 * C`` of a face count as on it; otherwise a
    solver that stops a rounding error short of the face would pin ``b`` to an
    arbitrary end of a flat interval.
    """
    snap = 1e-9 * C
    total = 0.0
    m = 0
    lo = -np.inf
    hi = np.inf
    for k in range(beta.size):
        a = beta[k]
        if snap < a < C - snap:
            total += r[k] - eps
            m += 1
        elif -C + snap < a < -snap:
            total += r[k] + eps
            m += 1
        # optimality bounds on b with near-face multipliers snapped
        if a >= C - snap:
            hi = min(hi, r[k] - eps)
        elif a <= -C + snap:
            lo = max(lo, r[k] + eps)
        else:
            lo = max(lo, r[k] - eps)
            hi = min(hi, r[k] + eps)
    if m > 0:
        return total / m
    b = r.mean()
    if b < lo:
        b = lo
    if b > hi:
        b = hi
    return b


@numba.njit(cache=True)
def svr_dual_solve(K, y, C, eps, beta, tol, max_steps):
    """Solve in place from a feasible start ``beta``; returns (b, converged, violation)."""
    _active_set(K, y, beta, C, eps, tol, 4 * beta.size + 10)
    r, steps, ok = _smo(K, y, beta, C, eps, tol, max_steps)
    lo, hi, _, _ = _bounds(beta, r, eps, C)
    return _intercept(beta, r, eps, C), ok, max(lo - hi, 0.0)


def _check(X, y):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or y.shape != (X.shape[0],) or X.shape[0] < 1:
        raise ParameterError("X must be (n, d) and y (n,) with n >= 1")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise DataIntegrityError("non-finite input to SVR")
    return X, y


def svr_fit(X, y, C: float, eps: float, tol: float = KKT_TOL,
            max_steps: int = MAX_STEPS) -> SvrModel:
    """Fit a linear SVR; ``converged=False`` flags an exhausted step budget."""
    if not C > 0:
        raise ParameterError("C must be positive")
    if not eps >= 0:
        raise ParameterError("eps must be non-negative")
    X, y = _check(X, y)
    K = X @ X.T
    beta = np.zeros(y.size)
    b, ok, viol = svr_dual_solve(K, y, float(C), float(eps), beta, tol, max_steps)
    w = X.T @ beta
    support = int(np.count_nonzero(beta))
    return SvrModel(w, float(b), float(C), float(eps), support, bool(ok), float(viol), beta)


def svr_predict(model: SvrModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.size == 0:
        return np.zeros(0)
    if X.ndim == 1:
        X = X[:, None] if model.w.size == 1 else X[None, :]
    if X.shape[1] != model.w.size:
        raise ParameterError(
            f"{X.shape[1]} features given, model has {model.w.size}")
    return X @ model.w + model.b


def svr_primal(X, y, w, b, C, eps) -> float:
    X, y = _check(X, y)
    resid = np.abs(y - (X @ w + b))
    return float(0.5 * w @ w + C * np.maximum(resid - eps, 0.0).sum())


@numba.njit(cache=True)
def _pearson(a, b):
    n = a.size
    ma = a.mean()
    mb = b.mean()
    sab = 0.0
    saa = 0.0
    sbb = 0.0
    for k in range(n):
        da = a[k] - ma
        db = b[k] - mb
        sab += da * db
        saa += da * da
        sbb += db * db
    if saa <= 0.0 or sbb <= 0.0:
        return np.nan
    return sab / np.sqrt(saa * sbb)


@numba.njit(cache=True)
def _loo_predictions(K, y, beta_full, b_full, C, eps, tol, max_steps):
    n = y.size
    pred = np.empty(n)
    f_full = K @ beta_full
    has_free = False
    # b stays put when a zero multiplier is removed only if a free one pins it
    snap = 1e-9 * C
    for k in range(n):
        if snap < abs(beta_full[k]) < C - snap:
            has_free = True
            break
    sub = np.empty((n - 1, n - 1))
    ysub = np.empty(n - 1)
    bsub = np.empty(n - 1)
    for i in range(n):
        if beta_full[i] == 0.0 and has_free:
            # an inactive point leaves the optimum unchanged when removed
            pred[i] = f_full[i] + b_full
            continue
        m = 0
        for a in range(n):
            if a == i:
                continue
            ysub[m] = y[a]
            bsub[m] = beta_full[a]
            q = 0
            for c in range(n):
                if c == i:
                    continue
                sub[m, q] = K[a, c]
                q += 1
            m += 1
        # restore sum(beta) = 0 after dropping beta_i, within the box
        excess = beta_full[i]
        for a in range(n - 1):
            if excess == 0.0:
                break
            if excess > 0.0:
                room = C - bsub[a]
                step = excess if excess < room else room
            else:
                room = -C - bsub[a]
                step = excess if excess > room else room
            bsub[a] += step
            excess -= step
        b, ok, viol = svr_dual_solve(sub, ysub, C, eps, bsub, tol, max_steps)
        f = 0.0
        m = 0
        for a in range(n):
            if a == i:
                continue
            f += bsub[m] * K[a, i]
            m += 1
        pred[i] = f + b
    return pred


@numba.njit(cache=True)
def _loo_grid(K, y, Cs, epss, tol, max_steps):
    n = y.size
    scores = np.empty((Cs.size, epss.size))
    beta = np.zeros(n)
    for e in range(epss.size):
        for c in range(Cs.size):
            # beta from the previous cell stays feasible: the box only grows
            # along C, and eps does not enter the constraints
            if c == 0:
                beta[:] = 0.0
            b, ok, viol = svr_dual_solve(K, y, Cs[c], epss[e], beta, tol, max_steps)
            pred = _loo_predictions(K, y, beta, b, Cs[c], epss[e], tol, max_steps)
            r = _pearson(pred, y)
            scores[c, e] = -1.0 if np.isnan(r) else r
    return scores


def loo_grid_scores(X, y, Cs, epss, tol: float = KKT_TOL,
                    max_steps: int = MAX_STEPS) -> np.ndarray:
    """Leave-one-out Pearson r of linear SVR for every ``(C, eps)`` grid cell.

    Cells whose pooled out-of-sample predictions are constant score -1.
    Returns an array of shape ``(len(Cs), len(epss))``.
    """
    X, y = _check(X, y)
    if y.size < 3:
        raise ParameterError("leave-one-out scoring needs at least 3 rows")
    Cs = np.sort(np.asarray(Cs, dtype=float))
    epss = np.asarray(epss, dtype=float)
    K = X @ X.T
    return _loo_grid(K, y, Cs, epss, tol, max_steps)


def loo_predictions(X, y, C: float, eps: float, tol: float = KKT_TOL,
                    max_steps: int = MAX_STEPS) -> np.ndarray:
    X, y = _check(X, y)
    K = X @ X.T
    beta = np.zeros(y.size)
    b, _, _ = svr_dual_solve(K, y, float(C), float(eps), beta, tol, max_steps)
    return _loo_predictions(K, y, beta, b, float(C), float(eps), tol, max_steps)
