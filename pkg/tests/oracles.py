"""Independent reference computations shared by the unit and acceptance tests."""

import numpy as np
from scipy import stats

FD_STEP = 1e-5


def naive_forward(layers, x):
    """Triple-loop matrix product with explicit activations."""
    rows = [list(r) for r in x]
    for layer in layers:
        out = []
        for r in rows:
            o = []
            for j in range(layer.out_dim):
                acc = layer.bias[j]
                for i in range(layer.in_dim):
                    acc += layer.weights[j][i] * r[i]
                o.append(max(acc, 0.0) if layer.activation == "relu" else acc)
            out.append(o)
        rows = out
    return np.array(rows)


def rel_error(a, b):
    # entries far below the gradient's own scale sit at the finite-difference noise floor
    floor = max(1e-5 * np.max(np.abs(a)), 1e-12)
    return np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor))


def fd_gradient(f, theta, coords=None):
    """Central differences; ``coords`` restricts the check to a subset of entries."""
    g = np.zeros_like(theta)
    for i in range(theta.size) if coords is None else coords:
        old = theta[i]
        theta[i] = old + FD_STEP
        hi = f()
        theta[i] = old - FD_STEP
        lo = f()
        theta[i] = old
        g[i] = (hi - lo) / (2 * FD_STEP)
    return g


def normal_equations(t, y):
    """OLS via (X'X) beta = X'y, then a two-sided t-test on the slope."""
    X = np.column_stack([np.ones_like(t), t])
    beta = np.linalg.solve(X.T @ X, X.T @ y)
    resid = y - X @ beta
    df = len(t) - 2
    s2 = resid @ resid / df
    se = np.sqrt(s2 * np.linalg.inv(X.T @ X)[1, 1])
    p = 2 * (1 - stats.t.cdf(abs(beta[1] / se), df))
    return beta[1], beta[0], p


def sequential_km(pairs):
    """Product-limit estimate walking subjects in (time, events first) order."""
    order = sorted(pairs, key=lambda p: (p[0], not p[1]))
    n = len(order)
    s = 1.0
    out = {0.0: 1.0}
    i = 0
    while i < len(order):
        t = order[i][0]
        deaths = sum(1 for tt, e in order if tt == t and e)
        leaving = sum(1 for tt, _ in order if tt == t)
        s *= 1 - deaths / n
        out[t] = s
        n -= leaving
        i += leaving
    return out
