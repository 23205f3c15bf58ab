"""Compiled coordinate-descent pass for weighted quadratic models.

The kernel minimises, over ``beta``,

    sum_i [ d_i (z_i - z0_i) + w_i (z_i - z0_i)^2 / 2 ] + l1 ||beta||_1 + l2 ||beta||^2

with ``z = X beta``. It never stores ``z``; instead it maintains the model
gradient in predictor space, ``q_i = d_i + w_i (z_i - z0_i)``, which callers
initialise to ``d`` at the starting point. For the gaussian loss ``q`` is the
exact loss gradient and a single call solves the problem.
"""

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def _soft(v, t):
    if v > t:
        return v - t
    if v < -t:
        return v + t
    return 0.0


@njit(cache=True, nogil=True)
def _update(X, q, w, beta, colw, l1, l2, k):
    """Exact minimisation along coordinate ``k``; returns the KKT violation before the move."""
    n = X.shape[0]
    g = 0.0
    for i in range(n):
        g += X[i, k] * q[i]
    bk = beta[k]
    if bk != 0.0:
        s = 1.0 if bk > 0.0 else -1.0
        viol = abs(g + 2.0 * l2 * bk + l1 * s)
    else:
        viol = abs(g) - l1
        if viol < 0.0:
            viol = 0.0
    a = colw[k]
    new = _soft(a * bk - g, l1) / (a + 2.0 * l2)
    delta = new - bk
    if delta != 0.0:
        beta[k] = new
        for i in range(n):
            q[i] += w[i] * X[i, k] * delta
    return viol


@njit(cache=True, nogil=True)
def cd_solve(X, q, w, beta, colw, l1, l2, tol, max_sweeps):
    """Cyclic coordinate descent with active-set cycling.

    Alternates a full sweep over all coordinates with sweeps restricted to
    the current nonzeros, until a full sweep finds every coordinate within
    ``tol`` of its KKT condition. Coordinates are visited in index order.
    Returns the number of sweeps performed.
    """
    p = X.shape[1]
    sweeps = 0
    active = np.empty(p, dtype=np.int64)
    while sweeps < max_sweeps:
        worst = 0.0
        for k in range(p):
            v = _update(X, q, w, beta, colw, l1, l2, k)
            if v > worst:
                worst = v
        sweeps += 1
        if worst <= tol:
            break
        m = 0
        for k in range(p):
            if beta[k] != 0.0:
                active[m] = k
                m += 1
        while sweeps < max_sweeps:
            worst = 0.0
            for j in range(m):
                v = _update(X, q, w, beta, colw, l1, l2, active[j])
                if v > worst:
                    worst = v
            sweeps += 1
            if worst <= tol:
                break
    return sweeps
