"""Convex clustering solver.

Minimizes, for a data matrix ``X`` and affinity graph with weights ``w``,

    gamma * sum_edges sqrt(w_jk) ||U_j - U_k||_2  +  1/2 ||U - X||_F^2

by ADMM on the edge-difference splitting ``V_e = sqrt(w_e) (U_j - U_k)``.
The U-update solves ``(I + rho L) U = X + rho F (V - W)`` against a
factorization of ``I + rho L`` cached across iterations and warm starts;
the V-update is a per-edge group soft threshold, so fused edges carry
exactly zero rows and cluster extraction needs no proximity cutoff.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .graph import AffinityGraph, incidence_apply, require_connected

try:
    from . import _admm

    _DEFAULT_BACKEND = "numba"
except ImportError:  # pragma: no cover - numba is a declared dependency
    _admm = None
    _DEFAULT_BACKEND = "numpy"


class ConvergenceError(RuntimeError):
    """ADMM failed to reach the requested tolerance."""

    def __init__(self, message, primal=None, dual=None, iterations=None):
        super().__init__(message)
        self.primal = primal
        self.dual = dual
        self.iterations = iterations


@dataclass(frozen=True)
class ClusterProblem:
    """Data matrix, affinity graph, and regularization strength."""

    x: np.ndarray
    graph: AffinityGraph
    gamma: float

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        if x.ndim != 2:
            raise ValueError(f"data must be 2-d, got shape {x.shape}")
        if x.shape[0] != self.graph.n:
            raise ValueError(
                f"data has {x.shape[0]} rows but graph has {self.graph.n} nodes"
            )
        if self.gamma < 0:
            raise ValueError(f"gamma must be nonnegative, got {self.gamma}")
        object.__setattr__(self, "x", x)


def objective(prob: ClusterProblem, u: np.ndarray) -> float:
    """Penalized objective value at centroid matrix ``u``."""
    u = np.asarray(u, dtype=float)
    if u.shape != prob.x.shape:
        raise ValueError(f"centroids shape {u.shape} != data shape {prob.x.shape}")
    diffs = incidence_apply(prob.graph, u)
    penalty = np.sqrt((diffs * diffs).sum(axis=1)).sum() if len(diffs) else 0.0
    fidelity = 0.5 * float(((u - prob.x) ** 2).sum())
    return prob.gamma * penalty + fidelity


def group_soft_threshold(z: np.ndarray, threshold: float) -> np.ndarray:
    """Row-wise group soft threshold; rows with norm <= threshold become
    exactly zero."""
    if threshold <= 0.0:
        return z.copy()
    norms = np.sqrt(np.einsum("ij,ij->i", z, z))
    scale = 1.0 - threshold / np.maximum(norms, threshold)
    return z * scale[:, None]


@dataclass
class SolveResult:
    """Converged ADMM state for one value of gamma."""

    u_hat: np.ndarray
    edge_diffs: np.ndarray
    dual: np.ndarray
    kkt_residual: float
    n_iter: int
    rho: float


def _incidence_sparse(g: AffinityGraph):
    sw = np.sqrt(g.weights)
    rows = np.concatenate([g.tails, g.heads])
    cols = np.concatenate([np.arange(g.m), np.arange(g.m)])
    data = np.concatenate([sw, -sw])
    inc = csr_matrix((data, (rows, cols)), shape=(g.n, g.m))
    return inc, inc.T.tocsr()


def _warm_state(g, x, rho, warm):
    if warm is not None:
        return warm.u_hat.copy(), warm.edge_diffs.copy(), warm.dual / rho
    u = x.copy()
    return u, incidence_apply(g, u), np.zeros((g.m, x.shape[1]))


def _solve_numba(prob, rho, tol, max_iter, warm, factor_cache):
    g = prob.graph
    x = np.ascontiguousarray(prob.x)
    n = g.n
    scale = max(1.0, float(np.linalg.norm(x)))
    eps = tol * scale
    sw = np.sqrt(g.weights)
    lap = g.laplacian
    eye = np.eye(n)
    u, v, w = _warm_state(g, x, rho, warm)

    def inverse(r):
        key = ("inv", r)
        minv = factor_cache.get(key)
        if minv is None:
            minv = np.linalg.inv(eye + r * lap)
            factor_cache[key] = minv
        return minv

    total = 0
    while total < max_iter:
        iters, status, primal, dual = _admm.admm_chunk(
            x, inverse(rho), g.tails, g.heads, sw, prob.gamma, rho, eps,
            max_iter - total, 10, u, v, w,
        )
        total += iters
        if status == _admm.STATUS_CONVERGED:
            return SolveResult(
                u_hat=u,
                edge_diffs=v,
                dual=rho * w,
                kkt_residual=max(primal, dual) / scale,
                n_iter=total,
                rho=rho,
            )
        if status == _admm.STATUS_RHO_UP:
            rho *= 2.0
            w /= 2.0
        elif status == _admm.STATUS_RHO_DOWN:
            rho /= 2.0
            w *= 2.0
    raise ConvergenceError(
        f"no convergence after {max_iter} iterations "
        f"(primal={primal:.3e}, dual={dual:.3e}, tol={eps:.3e})",
        primal=primal,
        dual=dual,
        iterations=max_iter,
    )


def _solve_numpy(prob, rho, tol, max_iter, warm, factor_cache):
    g = prob.graph
    x = prob.x
    n = g.n
    scale = max(1.0, float(np.linalg.norm(x)))
    inc, inc_t = _incidence_sparse(g)
    lap = g.laplacian
    eye = np.eye(n)

    def factor(r):
        key = ("cho", r)
        f = factor_cache.get(key)
        if f is None:
            f = cho_factor(eye + r * lap, check_finite=False)
            factor_cache[key] = f
        return f

    u, v, w = _warm_state(g, x, rho, warm)
    eps = tol * scale
    primal = dual = np.inf
    for it in range(1, max_iter + 1):
        u = cho_solve(factor(rho), x + rho * (inc @ (v - w)), check_finite=False)
        bu = inc_t @ u
        v_new = group_soft_threshold(bu + w, prob.gamma / rho)
        w += bu - v_new
        r_vec = bu - v_new
        s_vec = inc @ (v_new - v)
        primal = float(np.sqrt(np.einsum("ij,ij->", r_vec, r_vec)))
        dual = rho * float(np.sqrt(np.einsum("ij,ij->", s_vec, s_vec)))
        v = v_new
        if primal <= eps and dual <= eps:
            return SolveResult(
                u_hat=u,
                edge_diffs=v,
                dual=rho * w,
                kkt_residual=max(primal, dual) / scale,
                n_iter=it,
                rho=rho,
            )
        if it % 10 == 0:
            if primal > 10.0 * dual and rho < 1e4:
                rho *= 2.0
                w /= 2.0
            elif dual > 10.0 * primal and rho > 1e-4:
                rho /= 2.0
                w *= 2.0
    raise ConvergenceError(
        f"no convergence after {max_iter} iterations "
        f"(primal={primal:.3e}, dual={dual:.3e}, tol={eps:.3e})",
        primal=primal,
        dual=dual,
        iterations=max_iter,
    )


def solve(
    prob: ClusterProblem,
    *,
    rho: float = 1.0,
    tol: float = 1e-6,
    max_iter: int = 100_000,
    warm: SolveResult | None = None,
    factor_cache: dict | None = None,
    backend: str | None = None,
) -> SolveResult:
    """Solve the clustering objective at a fixed gamma.

    Stops when both the primal residual ``||F'U - V||_F`` and the dual
    residual ``rho ||F (V - V_prev)||_F`` fall below ``tol * max(1, ||X||_F)``;
    the reported ``kkt_residual`` is their maximum divided by that scale.
    ``rho`` is rebalanced by factors of two whenever the residual ratio
    exceeds ten.  A previous :class:`SolveResult` can be passed as a warm
    start; ``factor_cache`` keeps factorizations of ``I + rho L`` across
    calls on the same graph.

    ``backend`` selects the jitted inner loop (``"numba"``, default when
    available) or the plain numpy loop (``"numpy"``); both run the same
    iteration.
    """
    g = prob.graph
    require_connected(g, "solve")
    n, p = prob.x.shape

    if prob.gamma == 0.0 or g.m == 0:
        u = prob.x.copy()
        return SolveResult(
            u_hat=u,
            edge_diffs=incidence_apply(g, u) if g.m else np.zeros((0, p)),
            dual=np.zeros((g.m, p)),
            kkt_residual=0.0,
            n_iter=0,
            rho=rho,
        )

    if factor_cache is None:
        factor_cache = {}
    if backend is None:
        backend = _DEFAULT_BACKEND
    if backend == "numba" and _admm is not None:
        return _solve_numba(prob, rho, tol, max_iter, warm, factor_cache)
    if backend not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {backend!r}")
    return _solve_numpy(prob, rho, tol, max_iter, warm, factor_cache)


def extract_clusters(edge_diffs: np.ndarray, graph: AffinityGraph) -> np.ndarray:
    """Cluster labels from the zero rows of the edge-difference variables.

    Two samples share a label iff they are joined by a path of edges whose
    difference rows are exactly zero.  Labels are numbered by first
    occurrence, so they are stable under the node ordering.
    """
    edge_diffs = np.atleast_2d(edge_diffs)
    n = graph.n
    if graph.m:
        fused = ~np.any(edge_diffs != 0.0, axis=1)
    else:
        fused = np.zeros(0, dtype=bool)
    if not fused.any():
        return np.arange(n, dtype=np.int64)
    tails = graph.tails[fused]
    heads = graph.heads[fused]
    adj = csr_matrix(
        (np.ones(len(tails)), (tails, heads)), shape=(n, n)
    )
    _, comp = connected_components(adj, directed=False)
    # relabel components in order of first occurrence
    _, first, inverse = np.unique(comp, return_index=True, return_inverse=True)
    order = np.argsort(np.argsort(first))
    return order[inverse].astype(np.int64)


def fuse_rows(u: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Replace each row of ``u`` by the mean over its cluster."""
    u = np.asarray(u, dtype=float)
    labels = np.asarray(labels)
    n_blocks = int(labels.max()) + 1
    sums = np.zeros((n_blocks, u.shape[1]))
    np.add.at(sums, labels, u)
    counts = np.bincount(labels, minlength=n_blocks).astype(float)
    return (sums / counts[:, None])[labels]


def _is_fused(result: SolveResult, graph: AffinityGraph) -> bool:
    return len(np.unique(extract_clusters(result.edge_diffs, graph))) == 1


def gamma_search(
    x: np.ndarray,
    graph: AffinityGraph,
    *,
    gamma0: float | None = None,
    tol: float = 1e-6,
    max_iter: int = 100_000,
    max_doublings: int = 60,
    bisect_steps: int = 10,
) -> float:
    """Smallest tested gamma at which all centroids fuse into one cluster.

    Doubles from ``gamma0`` until the solution is a single cluster, then
    bisects ten times; returns the fused end of the final bracket.
    """
    require_connected(graph, "gamma_search")
    x = np.asarray(x, dtype=float)
    pen = objective(ClusterProblem(x, graph, 1.0), x)  # penalty at U = X

    cache: dict = {}
    state: dict = {"warm": None}

    def fused_at(gamma):
        res = solve(
            ClusterProblem(x, graph, gamma),
            tol=tol,
            max_iter=max_iter,
            warm=state["warm"],
            rho=state["warm"].rho if state["warm"] is not None else 1.0,
            factor_cache=cache,
        )
        state["warm"] = res
        return _is_fused(res, graph)

    if pen <= 0.0:
        # all connected rows identical: any positive gamma fully fuses
        gamma0 = gamma0 if gamma0 is not None else 1e-12
        if fused_at(gamma0):
            return gamma0
    if gamma0 is None:
        # start where the penalty at X balances the fidelity at the mean;
        # this sits below the fusion gamma for non-degenerate data
        fid = 0.5 * float(((x - x.mean(axis=0)) ** 2).sum())
        gamma0 = max(fid / pen, 1e-12)

    gamma = gamma0
    if fused_at(gamma):
        hi = gamma
        lo = None
        for _ in range(max_doublings):
            gamma /= 2.0
            if not fused_at(gamma):
                lo = gamma
                break
            hi = gamma
        if lo is None:
            return hi
    else:
        lo = gamma
        hi = None
        for _ in range(max_doublings):
            gamma *= 2.0
            if fused_at(gamma):
                hi = gamma
                break
            lo = gamma
        if hi is None:
            raise ConvergenceError(
                f"no full fusion within {max_doublings} doublings "
                f"from gamma0={gamma0:.3e}"
            )
    for _ in range(bisect_steps):
        mid = 0.5 * (lo + hi)
        if fused_at(mid):
            hi = mid
        else:
            lo = mid
    return hi


@dataclass(frozen=True)
class PathPoint:
    gamma: float
    u_hat: np.ndarray
    partition: np.ndarray
    kkt_residual: float
    objective: float
    n_clusters: int


@dataclass
class PathSolution:
    """Solutions along an ascending gamma grid.

    ``fused_at`` is the first grid gamma whose solution is a single
    cluster, or ``None`` if the grid never fully fuses.
    """

    points: list[PathPoint] = field(default_factory=list)
    fused_at: float | None = None


def default_gamma_grid(gamma_max: float, num: int = 40, span: float = 1e3) -> np.ndarray:
    """Geometric grid of ``num`` points from ``gamma_max / span`` to ``gamma_max``."""
    return np.geomspace(gamma_max / span, gamma_max, num)


def solve_path(
    x: np.ndarray,
    graph: AffinityGraph,
    gammas=None,
    *,
    num_points: int = 40,
    span: float = 1e3,
    extend_to_fusion: bool = False,
    tol: float = 1e-6,
    max_iter: int = 100_000,
    search_tol: float | None = None,
) -> PathSolution:
    """Solve along an ascending gamma grid with warm starts.

    With ``gammas=None`` the grid is geometric with ``num_points`` points
    ending at the fusion gamma found by :func:`gamma_search`.  With
    ``extend_to_fusion=True`` an explicit grid that does not reach full
    fusion is extended by one point at the searched fusion gamma.
    Reported centroids have each detected cluster's rows replaced by
    their mean, so the number of distinct rows equals the number of
    partition blocks.
    """
    require_connected(graph, "solve_path")
    x = np.asarray(x, dtype=float)
    if search_tol is None:
        search_tol = tol
    auto_grid = gammas is None
    if auto_grid:
        gamma_max = gamma_search(x, graph, tol=search_tol, max_iter=max_iter)
        gammas = default_gamma_grid(gamma_max, num=num_points, span=span)
    gammas = np.asarray(gammas, dtype=float)
    if gammas.ndim != 1 or len(gammas) == 0:
        raise ValueError("gamma grid must be a nonempty 1-d sequence")
    if np.any(np.diff(gammas) < 0):
        raise ValueError("gamma grid must be ascending")

    path = PathSolution()
    cache: dict = {}
    warm = None

    def run(gamma):
        nonlocal warm
        try:
            res = solve(
                ClusterProblem(x, graph, gamma),
                tol=tol,
                max_iter=max_iter,
                warm=warm,
                rho=warm.rho if warm is not None else 1.0,
                factor_cache=cache,
            )
        except ConvergenceError as err:
            raise ConvergenceError(
                f"solve failed at gamma={gamma:.6g}: {err}",
                primal=err.primal,
                dual=err.dual,
                iterations=err.iterations,
            ) from err
        warm = res
        labels = extract_clusters(res.edge_diffs, graph)
        u_rep = fuse_rows(res.u_hat, labels)
        n_clusters = int(labels.max()) + 1
        point = PathPoint(
            gamma=float(gamma),
            u_hat=u_rep,
            partition=labels,
            kkt_residual=res.kkt_residual,
            objective=objective(ClusterProblem(x, graph, gamma), u_rep),
            n_clusters=n_clusters,
        )
        path.points.append(point)
        if n_clusters == 1 and path.fused_at is None:
            path.fused_at = float(gamma)

    for gamma in gammas:
        run(gamma)
    if (auto_grid or extend_to_fusion) and path.fused_at is None:
        if not auto_grid:
            gamma_max = gamma_search(x, graph, tol=search_tol, max_iter=max_iter)
            if gamma_max > gammas[-1]:
                run(gamma_max)
        # the searched fusion gamma sits at the edge of solver tolerance;
        # nudge upward until the top of the path is a single cluster
        gamma = path.points[-1].gamma
        for _ in range(8):
            if path.fused_at is not None:
                break
            gamma *= 1.05
            run(gamma)
    return path
