"""Independent reference computations used by the test suite."""
import numba
import numpy as np


@numba.njit(cache=True)
def _dual_grid(Q, g, C, eps, centre, half, steps):
    """Best dual value over a grid of z = (beta_0, beta_1, beta_2); beta_3 = -sum(z).

    ``Q`` and ``g`` are the quadratic and linear terms in z.
    """
    best = -np.inf
    arg = np.zeros(3)
    h = 2.0 * half / steps
    for i in range(steps + 1):
        a = centre[0] - half + i * h
        if abs(a) > C:
            continue
        for j in range(steps + 1):
            b = centre[1] - half + j * h
            if abs(b) > C:
                continue
            # terms without c
            base = g[0] * a + g[1] * b - 0.5 * (Q[0, 0] * a * a + 2.0 * Q[0, 1] * a * b
                                                + Q[1, 1] * b * b) - eps * (abs(a) + abs(b))
            lin = g[2] - Q[0, 2] * a - Q[1, 2] * b
            for k in range(steps + 1):
                c = centre[2] - half + k * h
                d = a + b + c
                if abs(c) > C or abs(d) > C:
                    continue
                val = base + lin * c - 0.5 * Q[2, 2] * c * c - eps * (abs(c) + abs(d))
                if val > best:
                    best = val
                    arg[0] = a
                    arg[1] = b
                    arg[2] = c
    return best, arg


def svr_dual_grid(X, y, C, eps, resolution=200, tol=1e-10):
    """Brute-force maximum of the 4-point SVR dual.

    A full grid of spacing ``C / resolution`` over the box, then a zooming
    grid search: a 41^3 window around the incumbent is recentred while the
    best point sits on its edge and shrunk 4x once it is interior.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    assert y.size == 4
    K = X @ X.T
    B = np.vstack([np.eye(3), -np.ones((1, 3))])
    Q, g = B.T @ K @ B, B.T @ y
    best, arg = _dual_grid(Q, g, C, eps, np.zeros(3), float(C), 2 * resolution)
    half = 20 * C / resolution
    for _ in range(2000):
        if half < tol * C:
            break
        val, cand = _dual_grid(Q, g, C, eps, arg.copy(), half, 40)
        edge = np.any(np.abs(cand - arg) >= half * (1 - 1e-12))
        if val > best and edge:
            best, arg = val, cand
            continue
        if val > best:
            best, arg = val, cand
        half /= 4.0
    return best, B @ arg


def elastic_net_sklearn(X, y, alpha, lam):
    """Map the unnormalized objective onto scikit-learn's (1/2n)-scaled one."""
    from sklearn.linear_model import ElasticNet
    n = X.shape[0]
    a1 = alpha * lam / 2.0 / n          # weight on ||b||_1 after dividing by 2n
    a2 = alpha * (1.0 - lam) / n        # weight on ||b||^2 after dividing by 2n (sklearn halves it)
    total = a1 + a2
    model = ElasticNet(alpha=total, l1_ratio=a1 / total, fit_intercept=False, tol=1e-14,
                       max_iter=1_000_000, selection="cyclic")
    return model.fit(X, y).coef_


def pearson(a, b):
    a = np.asarray(a, float) - np.mean(a)
    b = np.asarray(b, float) - np.mean(b)
    return float(a @ b / np.sqrt((a @ a) * (b @ b)))


def svr_intercept(r, eps):
    """Mean residual clipped to the set of intercepts minimizing the tube loss.

    ``r`` holds ``y - X @ w``. The loss is convex and piecewise linear in ``b``
    with kinks at ``r_i +- eps``, so its minimizers form an interval between
    two kinks.
    """
    kinks = np.sort(np.concatenate([r - eps, r + eps]))
    loss = np.maximum(np.abs(r[None, :] - kinks[:, None]) - eps, 0.0).sum(axis=1)
    flat = kinks[loss <= loss.min() + 1e-9 * (1.0 + loss.min())]
    return float(np.clip(r.mean(), flat.min(), flat.max()))


def svr_fit_sklearn(X, y, C, eps):
    """``(w, b)``: libsvm's weights (unique) with the intercept rule above."""
    from sklearn.svm import SVR
    m = SVR(kernel="linear", C=C, epsilon=eps, tol=1e-10, max_iter=10**7).fit(X, y)
    w = m.coef_.ravel()
    return w, svr_intercept(y - X @ w, eps)


def loo_r_sklearn(X, y, C, eps):
    """Leave-one-out Pearson r of a linear SVR; -1 for constant predictions."""
    n = y.size
    pred = np.empty(n)
    for i in range(n):
        keep = np.arange(n) != i
        w, b = svr_fit_sklearn(X[keep], y[keep], C, eps)
        pred[i] = X[i] @ w + b
    if np.ptp(pred) <= 1e-12 * (1 + np.abs(pred).max()):
        return -1.0
    return pearson(pred, y)


def stepwise_sklearn(X, y, Cs, epss):
    """Greedy forward selection by best-cell LOO r, written without the package.

    Returns ``(order, trace)``: entry order and the score after each entry.
    """
    pool = list(range(X.shape[1]))
    order, trace = [], []
    current = -np.inf
    while pool:
        scored = []
        for j in pool:
            cols = order + [j]
            scored.append(max(loo_r_sklearn(X[:, cols], y, C, e) for C in Cs for e in epss))
        k = int(np.argmax(scored))
        if scored[k] <= current:
            break
        order.append(pool.pop(k))
        trace.append(scored[k])
        current = scored[k]
    return order, trace
