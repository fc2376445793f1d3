"""Spectral quantities of affinity graphs.

Pseudoinverses of the graph Laplacian, rows of the incidence
pseudoinverse, hitting and commute times of the natural random walk
``P = D^-1 Phi``, effective resistances, and checkers for the
concentration inequalities that relate them.

The central identity: for an edge ``(j, k)`` the corresponding row of
the incidence pseudoinverse is ``sqrt(w_jk) * (Lpinv[:, j] - Lpinv[:, k])``,
which equals ``sqrt(w_jk) / (2 vol) * (I - J/n) (C[:, k] - C[:, j])``
in terms of the commute-time matrix ``C``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .graph import (
    AffinityGraph,
    is_bipartite,
    require_connected,
)


class BipartiteGraphError(ValueError):
    """Raised when a hitting-time concentration check gets a bipartite graph."""


@dataclass(frozen=True)
class SpectralBundle:
    """Laplacian, its pseudoinverse, graph volume, and the walk's spectral gap."""

    laplacian: np.ndarray
    laplacian_pinv: np.ndarray
    volume: float
    spectral_gap: float


@dataclass(frozen=True)
class WalkTimes:
    """Hitting times ``H`` (``H[i, j]`` = expected steps i -> j) and commute
    times ``C = H + H.T``."""

    hitting: np.ndarray
    commute: np.ndarray


def laplacian_pinv(g: AffinityGraph, method: str = "solve") -> np.ndarray:
    """Moore-Penrose pseudoinverse of the graph Laplacian.

    For a connected graph the null space is spanned by the ones vector,
    so ``pinv(L) = inv(L + J/n) - J/n`` with ``J`` the all-ones matrix.
    That identity is the default; ``method="eig"`` uses a full
    eigendecomposition instead.
    """
    require_connected(g, "laplacian_pinv")
    lap = g.laplacian
    n = g.n
    if method == "solve":
        jn = np.full((n, n), 1.0 / n)
        inv = scipy.linalg.solve(lap + jn, np.eye(n), assume_a="pos")
        pinv = inv - jn
    elif method == "eig":
        vals, vecs = np.linalg.eigh(lap)
        inv_vals = np.zeros_like(vals)
        keep = vals > 1e-10 * max(float(vals.max()), 1.0)
        inv_vals[keep] = 1.0 / vals[keep]
        pinv = (vecs * inv_vals) @ vecs.T
    else:
        raise ValueError(f"unknown method {method!r}")
    # symmetrize away solver round-off
    return (pinv + pinv.T) / 2.0


def spectral_gap(g: AffinityGraph) -> float:
    """One minus the second-largest eigenvalue of the walk matrix ``D^-1 Phi``.

    Computed from the similar symmetric matrix ``D^-1/2 Phi D^-1/2``.
    The eigenvalue is taken in signed order, not by magnitude.
    """
    require_connected(g, "spectral_gap")
    d = g.degrees
    if np.any(d <= 0):
        raise ValueError("spectral_gap requires every node to have positive degree")
    inv_sqrt = 1.0 / np.sqrt(d)
    sym = g.adjacency * inv_sqrt[:, None] * inv_sqrt[None, :]
    vals = np.linalg.eigvalsh(sym)
    lambda2 = vals[-2]
    return float(1.0 - lambda2)


def spectral_bundle(g: AffinityGraph, method: str = "solve") -> SpectralBundle:
    """Compute the Laplacian, its pseudoinverse, volume, and spectral gap."""
    return SpectralBundle(
        laplacian=g.laplacian.copy(),
        laplacian_pinv=laplacian_pinv(g, method=method),
        volume=g.volume,
        spectral_gap=spectral_gap(g),
    )


def fdagger_row(g: AffinityGraph, bundle: SpectralBundle, edge: tuple[int, int]) -> np.ndarray:
    """Row of the incidence pseudoinverse for one edge.

    Returns ``sqrt(w_jk) * (Lpinv[:, j] - Lpinv[:, k])`` for the edge in
    the order given; flipping the orientation flips the sign but not the
    norm.  Raises ``KeyError`` if the edge is not in the graph.
    """
    j, k = edge
    idx = g.edge_id(j, k)
    w = g.weights[idx]
    lp = bundle.laplacian_pinv
    return np.sqrt(w) * (lp[:, j] - lp[:, k])


def fdagger_matrix(g: AffinityGraph, bundle: SpectralBundle) -> np.ndarray:
    """All rows of the incidence pseudoinverse, in edge-storage order."""
    require_connected(g, "fdagger_matrix")
    lp = bundle.laplacian_pinv
    return np.sqrt(g.weights)[:, None] * (lp[g.tails] - lp[g.heads])


def hitting_times(g: AffinityGraph) -> WalkTimes:
    """Expected hitting times of the natural random walk.

    For each target ``j`` the vector ``H[., j]`` solves the linear system
    given by the principal submatrix of ``D - Phi`` with row/column ``j``
    removed and right-hand side the remaining degrees; this is the
    first-step equation ``(I - P) h = 1`` after scaling rows by degrees.
    """
    require_connected(g, "hitting_times")
    n = g.n
    lap = g.laplacian
    d = g.degrees
    hitting = np.zeros((n, n))
    idx = np.arange(n)
    for j in range(n):
        mask = idx != j
        sub = lap[np.ix_(mask, mask)]
        hitting[mask, j] = scipy.linalg.solve(sub, d[mask], assume_a="pos")
    return WalkTimes(hitting=hitting, commute=hitting + hitting.T)


def effective_resistance(bundle: SpectralBundle, j: int, k: int) -> float:
    """Effective resistance ``(e_j - e_k)' Lpinv (e_j - e_k)`` between two nodes."""
    if j == k:
        raise ValueError("effective resistance needs two distinct nodes")
    lp = bundle.laplacian_pinv
    return float(lp[j, j] - 2.0 * lp[j, k] + lp[k, k])


@dataclass(frozen=True)
class BoundCheckReport:
    """Outcome of checking an inequality family over a graph.

    ``max_slack`` is the largest value of (left side - right side); it is
    nonpositive exactly when no inequality is violated.
    """

    name: str
    n_checked: int
    n_violations: int
    max_lhs: float
    max_rhs: float
    max_slack: float

    @property
    def passed(self) -> bool:
        return self.n_violations == 0

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "n_checked": self.n_checked,
            "n_violations": self.n_violations,
            "max_lhs": self.max_lhs,
            "max_rhs": self.max_rhs,
            "max_slack": self.max_slack,
            "passed": self.passed,
        }


def _require_not_bipartite(g: AffinityGraph, what: str) -> None:
    if is_bipartite(g):
        raise BipartiteGraphError(
            f"{what} requires a non-bipartite graph: the hitting-time "
            "concentration bound does not hold for bipartite walks"
        )


def _hitting_deviations(g: AffinityGraph, times: WalkTimes) -> np.ndarray:
    """Matrix of |H_ij / vol - 1 / D_jj| over ordered pairs i != j."""
    d = g.degrees
    dev = np.abs(times.hitting / g.volume - 1.0 / d[None, :])
    np.fill_diagonal(dev, 0.0)
    return dev


def luxburg_bound_check(
    g: AffinityGraph, times: WalkTimes, bundle: SpectralBundle
) -> BoundCheckReport:
    """Check the hitting-time concentration inequality of von Luxburg,
    Radl & Hein (2014, Proposition 5).

    For every ordered pair ``i != j`` the rescaled hitting time must obey

        |H_ij / vol - 1 / D_jj| <= 2 (1/(1 - lambda2) + 1) max(Phi) / min(D)^2.

    Requires a connected, non-bipartite graph.
    """
    require_connected(g, "luxburg_bound_check")
    _require_not_bipartite(g, "luxburg_bound_check")
    dev = _hitting_deviations(g, times)
    rhs = (
        2.0
        * (1.0 / bundle.spectral_gap + 1.0)
        * g.weights.max()
        / g.degrees.min() ** 2
    )
    off = ~np.eye(g.n, dtype=bool)
    lhs = dev[off]
    violations = int(np.sum(lhs > rhs))
    return BoundCheckReport(
        name="hitting_time_concentration",
        n_checked=lhs.size,
        n_violations=violations,
        max_lhs=float(lhs.max()),
        max_rhs=float(rhs),
        max_slack=float(lhs.max() - rhs),
    )


def fdagger_entry_bounds_check(
    g: AffinityGraph, bundle: SpectralBundle, times: WalkTimes
) -> BoundCheckReport:
    """Check the entrywise bounds on the incidence pseudoinverse.

    Every entry of each row is bounded through the worst hitting-time
    deviation ``eta = max |H_lm / vol - 1 / D_mm|``: for an edge ``(j, k)``
    with weight ``w``,

        |row_i| <= sqrt(w) ((1/n)|1/D_kk - 1/D_jj| + 2 eta)      (i not in {j, k})
        |row_j| <= sqrt(w) (1/D_jj + 1/(n D_kk) + 2 eta)

    and symmetrically for ``i = k``.  Requires connected, non-bipartite.
    """
    require_connected(g, "fdagger_entry_bounds_check")
    _require_not_bipartite(g, "fdagger_entry_bounds_check")
    eta = float(_hitting_deviations(g, times).max())
    d = g.degrees
    n = g.n
    sw = np.sqrt(g.weights)
    abs_rows = np.abs(fdagger_matrix(g, bundle))

    inv_t = 1.0 / d[g.tails]
    inv_h = 1.0 / d[g.heads]
    off_bound = sw * (np.abs(inv_h - inv_t) / n + 2.0 * eta)
    tail_bound = sw * (inv_t + inv_h / n + 2.0 * eta)
    head_bound = sw * (inv_h + inv_t / n + 2.0 * eta)

    bounds = np.repeat(off_bound[:, None], n, axis=1)
    rows = np.arange(g.m)
    bounds[rows, g.tails] = tail_bound
    bounds[rows, g.heads] = head_bound

    slack = abs_rows - bounds
    violations = int(np.sum(slack > 0))
    return BoundCheckReport(
        name="fdagger_entry_bounds",
        n_checked=int(abs_rows.size),
        n_violations=violations,
        max_lhs=float(abs_rows.max()),
        max_rhs=float(bounds.max()),
        max_slack=float(slack.max()),
    )


def bridge_pinv_diff_closed_forms(n: int, k: int) -> dict[str, float]:
    """Closed-form ``||Lpinv[:, j] - Lpinv[:, k]||^2`` values on the bridge graph.

    The graph from :func:`clusterpath.graph.bridge_oracle_graph` has at
    most four symmetry classes of edges; each class has a closed-form
    squared pseudoinverse-column difference.  Only classes realizable for
    the given ``(n, k)`` are returned.
    """
    half = n // 2
    den = float((n + 4) ** 2)
    forms = {
        "bridge": (n * den + 32.0 * k * k - 32.0 * k) / (4.0 * k * k * den),
    }
    if k >= 2:
        forms["within_bridge_pair"] = 8.0 * (n * n + 4.0 * n + 8.0) / (n * n * den)
    if k <= half - 1:
        forms["within_mixed_pair"] = (
            16.0 * k * (n + 2) + n * den + 8.0 * k * k * (n * n + 6.0 * n + 12.0)
        ) / (k * k * n * n * den)
    if k <= half - 2:
        forms["within_nonbridge_pair"] = 8.0 / (n * n)
    return forms


def bridge_edge_representatives(n: int, k: int) -> dict[str, tuple[int, int]]:
    """One representative edge per symmetry class of the bridge graph."""
    half = n // 2
    reps = {"bridge": (0, half)}
    if k >= 2:
        reps["within_bridge_pair"] = (0, 1)
    if k <= half - 1:
        reps["within_mixed_pair"] = (0, k)
    if k <= half - 2:
        reps["within_nonbridge_pair"] = (k, k + 1)
    return reps
