"""Jitted inner loop of the edge-splitting ADMM.

The kernel runs iterations in place until it converges, wants a rho
rebalance (which needs a new factorization, done by the caller), or
exhausts its budget.  Math is identical to the numpy loop in
``solver.py``; only the execution strategy differs.
"""

from __future__ import annotations

import numpy as np
from numba import njit

STATUS_CONVERGED = 0
STATUS_RHO_UP = 1
STATUS_RHO_DOWN = 2
STATUS_BUDGET = 3


@njit(cache=True, fastmath=True)
def admm_chunk(
    x, minv, tails, heads, sw, gamma, rho, eps, budget, adapt_every, u, v, w
):
    """Run ADMM iterations in place; returns (iters, status, primal, dual)."""
    n, p = x.shape
    m = tails.shape[0]
    bu = np.empty((m, p))
    rhs = np.empty((n, p))
    fdv = np.empty((n, p))
    thr = gamma / rho
    primal = np.inf
    dual = np.inf
    for it in range(1, budget + 1):
        for i in range(n):
            for c in range(p):
                rhs[i, c] = x[i, c]
        for e in range(m):
            t = tails[e]
            h = heads[e]
            for c in range(p):
                d = rho * sw[e] * (v[e, c] - w[e, c])
                rhs[t, c] += d
                rhs[h, c] -= d
        unew = np.dot(minv, rhs)
        for i in range(n):
            for c in range(p):
                u[i, c] = unew[i, c]
                fdv[i, c] = 0.0
        primal_sq = 0.0
        for e in range(m):
            t = tails[e]
            h = heads[e]
            nrm_sq = 0.0
            for c in range(p):
                bu[e, c] = sw[e] * (u[t, c] - u[h, c])
                z = bu[e, c] + w[e, c]
                nrm_sq += z * z
            nrm = np.sqrt(nrm_sq)
            scale = 0.0
            if nrm > thr:
                scale = 1.0 - thr / nrm
            for c in range(p):
                vn = (bu[e, c] + w[e, c]) * scale
                r = bu[e, c] - vn
                w[e, c] += r
                primal_sq += r * r
                dv = vn - v[e, c]
                fdv[t, c] += sw[e] * dv
                fdv[h, c] -= sw[e] * dv
                v[e, c] = vn
        dual_sq = 0.0
        for i in range(n):
            for c in range(p):
                dual_sq += fdv[i, c] * fdv[i, c]
        primal = np.sqrt(primal_sq)
        dual = rho * np.sqrt(dual_sq)
        if primal <= eps and dual <= eps:
            return it, STATUS_CONVERGED, primal, dual
        if it % adapt_every == 0:
            if primal > 10.0 * dual and rho < 1e4:
                return it, STATUS_RHO_UP, primal, dual
            if dual > 10.0 * primal and rho > 1e-4:
                return it, STATUS_RHO_DOWN, primal, dual
    return budget, STATUS_BUDGET, primal, dual
