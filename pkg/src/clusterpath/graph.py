"""Affinity graph construction and incidence operations.

An affinity graph on ``n`` samples encodes the penalty weights of the
convex clustering objective: each stored edge ``(j, k, w)`` with ``j < k``
and ``w > 0`` contributes a term ``sqrt(w) * ||U_j - U_k||`` to the
regularizer.  Non-edges are never stored; the number of stored edges
determines the row count of the oriented incidence operator.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components


class GraphValidationError(ValueError):
    """Raised when an edge list violates the affinity-graph invariants."""


class DisconnectedGraphError(ValueError):
    """Raised when an operation requires a connected graph but got none."""


class AffinityGraph:
    """Undirected weighted graph with an indexed edge list.

    Each undirected edge is stored once as ``(j, k, weight)`` with
    ``j < k`` and ``weight > 0``; the implicit orientation puts
    ``+sqrt(weight)`` on the tail ``j`` and ``-sqrt(weight)`` on the
    head ``k``.  Instances are immutable after construction.
    """

    def __init__(self, n: int, edges):
        if n < 1:
            raise GraphValidationError(f"need at least one node, got n={n}")
        edges = list(edges)
        m = len(edges)
        tails = np.empty(m, dtype=np.int64)
        heads = np.empty(m, dtype=np.int64)
        weights = np.empty(m, dtype=np.float64)
        for idx, (j, k, w) in enumerate(edges):
            j, k = int(j), int(k)
            if j == k:
                raise GraphValidationError(f"self-loop at node {j}")
            if j > k:
                j, k = k, j
            if not (0 <= j < k < n):
                raise GraphValidationError(f"edge ({j}, {k}) out of range for n={n}")
            w = float(w)
            if not (w > 0.0) or not np.isfinite(w):
                raise GraphValidationError(f"edge ({j}, {k}) has non-positive weight {w}")
            tails[idx] = j
            heads[idx] = k
            weights[idx] = w
        self.n = n
        self.tails = tails
        self.heads = heads
        self.weights = weights
        for arr in (tails, heads, weights):
            arr.flags.writeable = False
        self.edge_index: dict[tuple[int, int], int] = {
            (int(j), int(k)): idx for idx, (j, k) in enumerate(zip(tails, heads))
        }
        if len(self.edge_index) != m:
            raise GraphValidationError("duplicate edge in edge list")

    @property
    def m(self) -> int:
        """Number of stored (undirected) edges."""
        return len(self.weights)

    def edges(self):
        """Edge list as ``[(j, k, weight), ...]`` in storage order."""
        return [
            (int(j), int(k), float(w))
            for j, k, w in zip(self.tails, self.heads, self.weights)
        ]

    def has_edge(self, j: int, k: int) -> bool:
        return (min(j, k), max(j, k)) in self.edge_index

    def edge_id(self, j: int, k: int) -> int:
        """Position of edge ``{j, k}`` in the stored edge list."""
        try:
            return self.edge_index[(min(j, k), max(j, k))]
        except KeyError:
            raise KeyError(f"no edge between nodes {j} and {k}") from None

    @cached_property
    def adjacency(self) -> np.ndarray:
        """Dense symmetric weight matrix with zero diagonal."""
        phi = np.zeros((self.n, self.n))
        phi[self.tails, self.heads] = self.weights
        phi[self.heads, self.tails] = self.weights
        return phi

    @cached_property
    def degrees(self) -> np.ndarray:
        d = np.zeros(self.n)
        np.add.at(d, self.tails, self.weights)
        np.add.at(d, self.heads, self.weights)
        return d

    @property
    def volume(self) -> float:
        """Sum of all weighted degrees, trace of the degree matrix."""
        return float(self.degrees.sum())

    @cached_property
    def laplacian(self) -> np.ndarray:
        return np.diag(self.degrees) - self.adjacency

    def __repr__(self) -> str:
        return f"AffinityGraph(n={self.n}, m={self.m})"


@dataclass(frozen=True)
class DegreeInfo:
    """Per-node weighted degrees and their total."""

    degrees: np.ndarray
    volume: float


@dataclass(frozen=True)
class SbmParams:
    """Parameters of the two-probability block random graph.

    ``p_w`` is the edge probability for node pairs with the same label,
    ``p_b`` for pairs with different labels.
    """

    n: int
    p_w: float
    p_b: float
    seed: int

    def __post_init__(self):
        if self.n < 2 or self.n % 2 != 0:
            raise GraphValidationError(f"n must be even and >= 2, got {self.n}")
        for name, p in (("p_w", self.p_w), ("p_b", self.p_b)):
            if not (0.0 <= p <= 1.0):
                raise GraphValidationError(f"{name}={p} outside [0, 1]")


def degree_info(g: AffinityGraph) -> DegreeInfo:
    return DegreeInfo(degrees=g.degrees.copy(), volume=g.volume)


def _pairwise_distances(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 2:
        raise ValueError(f"expected 2-d data matrix, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("data matrix contains non-finite entries")
    sq = np.sum(x * x, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    np.maximum(d2, 0.0, out=d2)
    return np.sqrt(d2)


def knn_graph(x: np.ndarray, k: int, mutual: bool = False) -> AffinityGraph:
    """Unweighted k-nearest-neighbor graph of the rows of ``x``.

    By default an edge is kept if either endpoint selects the other
    (union rule); with ``mutual=True`` both must select each other.
    Distance ties are broken toward the smaller row index, so the result
    is deterministic.
    """
    dist = _pairwise_distances(x)
    n = dist.shape[0]
    if not (1 <= k <= n - 1):
        raise ValueError(f"k={k} outside valid range [1, {n - 1}]")
    np.fill_diagonal(dist, np.inf)
    # stable argsort keeps smaller indices first among equal distances
    order = np.argsort(dist, axis=1, kind="stable")[:, :k]
    selected = np.zeros((n, n), dtype=bool)
    rows = np.repeat(np.arange(n), k)
    selected[rows, order.ravel()] = True
    keep = (selected & selected.T) if mutual else (selected | selected.T)
    jj, kk = np.nonzero(np.triu(keep, 1))
    return AffinityGraph(n, [(j, k_, 1.0) for j, k_ in zip(jj, kk)])


def epsilon_graph(x: np.ndarray, r: float) -> AffinityGraph:
    """Unweighted graph joining all row pairs within Euclidean distance ``r``."""
    if not (r > 0):
        raise ValueError(f"radius must be positive, got {r}")
    dist = _pairwise_distances(x)
    n = dist.shape[0]
    close = dist <= r
    jj, kk = np.nonzero(np.triu(close, 1))
    return AffinityGraph(n, [(j, k, 1.0) for j, k in zip(jj, kk)])


def gaussian_weights(x: np.ndarray, tau: float, base: AffinityGraph) -> AffinityGraph:
    """Reweight the edges of ``base`` by exp(-tau * squared distance)."""
    if tau < 0:
        raise ValueError(f"kernel bandwidth must be nonnegative, got {tau}")
    x = np.asarray(x, dtype=float)
    if x.shape[0] != base.n:
        raise ValueError(f"data has {x.shape[0]} rows but graph has {base.n} nodes")
    diff = x[base.tails] - x[base.heads]
    w = np.exp(-tau * np.sum(diff * diff, axis=1))
    return AffinityGraph(base.n, zip(base.tails, base.heads, w))


def complete_graph(n: int) -> AffinityGraph:
    """Complete unweighted graph on ``n >= 2`` nodes."""
    if n < 2:
        raise GraphValidationError(f"complete graph needs n >= 2, got {n}")
    jj, kk = np.triu_indices(n, 1)
    return AffinityGraph(n, [(j, k, 1.0) for j, k in zip(jj, kk)])


def sbm_graph(params: SbmParams, labels: np.ndarray) -> AffinityGraph:
    """Random graph with independent Bernoulli edges.

    Pairs sharing a label connect with probability ``p_w``, pairs with
    different labels with ``p_b``.  Labels must form balanced blocks
    (equal counts per label).  Bit-reproducible for a fixed seed: the
    uniform draws are consumed in row-major upper-triangle order.
    """
    labels = np.asarray(labels)
    if labels.shape != (params.n,):
        raise GraphValidationError(
            f"labels have shape {labels.shape}, expected ({params.n},)"
        )
    _, counts = np.unique(labels, return_counts=True)
    if len(set(counts)) != 1:
        raise GraphValidationError(f"unbalanced labels, block sizes {sorted(counts)}")
    rng = np.random.default_rng(params.seed)
    jj, kk = np.triu_indices(params.n, 1)
    same = labels[jj] == labels[kk]
    prob = np.where(same, params.p_w, params.p_b)
    keep = rng.random(len(jj)) < prob
    return AffinityGraph(params.n, [(j, k, 1.0) for j, k in zip(jj[keep], kk[keep])])


def bridge_oracle_graph(n: int, k: int) -> AffinityGraph:
    """Two complete unweighted subgraphs joined by ``k`` bridges.

    Nodes ``0 .. n/2-1`` and ``n/2 .. n-1`` each form a clique; node ``i``
    is bridged to node ``i + n/2`` for ``i < k``.
    """
    if n < 6 or n % 2 != 0:
        raise GraphValidationError(f"n must be even and >= 6, got {n}")
    half = n // 2
    if not (1 <= k <= half):
        raise GraphValidationError(f"bridge count k={k} outside [1, {half}]")
    edges = []
    for block in (0, half):
        for j in range(half):
            for kk in range(j + 1, half):
                edges.append((block + j, block + kk, 1.0))
    for i in range(k):
        edges.append((i, i + half, 1.0))
    return AffinityGraph(n, edges)


def _sparse_adjacency(g: AffinityGraph) -> coo_matrix:
    row = np.concatenate([g.tails, g.heads])
    col = np.concatenate([g.heads, g.tails])
    dat = np.concatenate([g.weights, g.weights])
    return coo_matrix((dat, (row, col)), shape=(g.n, g.n))


def is_connected(g: AffinityGraph) -> bool:
    """True iff a single component spans all nodes."""
    cached = getattr(g, "_connected", None)
    if cached is None:
        if g.n == 1:
            cached = True
        elif g.m == 0:
            cached = False
        else:
            n_comp, _ = connected_components(
                _sparse_adjacency(g).tocsr(), directed=False
            )
            cached = bool(n_comp == 1)
        g._connected = cached
    return cached


def require_connected(g: AffinityGraph, what: str) -> None:
    if not is_connected(g):
        raise DisconnectedGraphError(f"{what} requires a connected graph")


def is_bipartite(g: AffinityGraph) -> bool:
    """2-colorability check by BFS over each component."""
    color = np.full(g.n, -1, dtype=np.int8)
    neighbors: list[list[int]] = [[] for _ in range(g.n)]
    for j, k in zip(g.tails, g.heads):
        neighbors[j].append(int(k))
        neighbors[k].append(int(j))
    for start in range(g.n):
        if color[start] >= 0:
            continue
        color[start] = 0
        queue = [start]
        while queue:
            node = queue.pop()
            for nb in neighbors[node]:
                if color[nb] < 0:
                    color[nb] = 1 - color[node]
                    queue.append(nb)
                elif color[nb] == color[node]:
                    return False
    return True


def incidence_apply(g: AffinityGraph, u: np.ndarray) -> np.ndarray:
    """Apply the transposed incidence operator to node values.

    Row ``e`` of the result is ``sqrt(w_e) * (U_j - U_k)`` for edge
    ``e = (j, k)``.  The incidence matrix is never materialized.
    """
    u = np.atleast_2d(np.asarray(u, dtype=float))
    if u.shape[0] != g.n:
        raise ValueError(f"node values have {u.shape[0]} rows, expected {g.n}")
    return np.sqrt(g.weights)[:, None] * (u[g.tails] - u[g.heads])


def incidence_adjoint_apply(g: AffinityGraph, v: np.ndarray) -> np.ndarray:
    """Adjoint of :func:`incidence_apply`: scatter edge values back to nodes."""
    v = np.atleast_2d(np.asarray(v, dtype=float))
    if v.shape[0] != g.m:
        raise ValueError(f"edge values have {v.shape[0]} rows, expected {g.m}")
    out = np.zeros((g.n, v.shape[1]))
    sw = np.sqrt(g.weights)[:, None] * v
    np.add.at(out, g.tails, sw)
    np.subtract.at(out, g.heads, sw)
    return out
