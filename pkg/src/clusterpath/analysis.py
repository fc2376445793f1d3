"""Solution-quality diagnostics and finite-sample bound evaluators.

The central quantity is the oracle term

    (1/n) * max|Fpinv E| * sum_edges sqrt(w_jk) ||U_j - U_k||_2

which needs the true centroids ``U`` and noise ``E`` and predicts how
well convex clustering recovers the centroids for a given affinity
graph.  The bound evaluators compute the right-hand sides of the
mean-squared-error guarantees that hold when gamma clears the
``sqrt(p) * max|Fpinv E|`` threshold.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import AffinityGraph, incidence_apply
from .spectral import SpectralBundle, fdagger_matrix


@dataclass(frozen=True)
class MixtureSpec:
    """Mixture centers, membership probabilities, and noise scale."""

    centers: np.ndarray
    probs: np.ndarray
    sigma_p: float

    def __post_init__(self):
        centers = np.atleast_2d(np.asarray(self.centers, dtype=float))
        probs = np.asarray(self.probs, dtype=float)
        if probs.ndim != 1 or len(probs) != centers.shape[0]:
            raise ValueError(
                f"need one probability per center, got {probs.shape} for "
                f"{centers.shape[0]} centers"
            )
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-12:
            raise ValueError("membership probabilities must be nonnegative and sum to 1")
        if self.sigma_p < 0:
            raise ValueError(f"noise scale must be nonnegative, got {self.sigma_p}")
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "probs", probs)

    @property
    def diameter(self) -> float:
        """Largest pairwise distance between centers."""
        c = self.centers
        diff = c[:, None, :] - c[None, :, :]
        return float(np.sqrt((diff * diff).sum(axis=2)).max())


def penalty_sum(g: AffinityGraph, u: np.ndarray) -> float:
    """Weighted sum of centroid-difference norms over the edges."""
    if g.m == 0:
        return 0.0
    diffs = incidence_apply(g, u)
    return float(np.sqrt((diffs * diffs).sum(axis=1)).sum())


def fdagger_e_max(
    g: AffinityGraph, bundle: SpectralBundle, noise: np.ndarray
) -> float:
    """Largest absolute entry of the incidence pseudoinverse applied to the noise."""
    noise = np.atleast_2d(np.asarray(noise, dtype=float))
    if noise.shape[0] != g.n:
        raise ValueError(f"noise has {noise.shape[0]} rows, expected {g.n}")
    if g.m == 0:
        return 0.0
    return float(np.abs(fdagger_matrix(g, bundle) @ noise).max())


def oracle_term(
    g: AffinityGraph,
    bundle: SpectralBundle,
    u_true: np.ndarray,
    noise: np.ndarray,
) -> float:
    """Oracle diagnostic: ``(1/n) max|Fpinv E| * penalty_sum(U)``.

    Zero whenever the true centroids are all equal or the noise vanishes.
    Invariant to scaling all edge weights by a positive constant.
    """
    return fdagger_e_max(g, bundle, noise) * penalty_sum(g, u_true) / g.n


def gamma_threshold(g: AffinityGraph, bundle: SpectralBundle, noise: np.ndarray) -> float:
    """Smallest gamma for which the mean-squared-error guarantee applies:
    ``sqrt(p) * max|Fpinv E|``."""
    p = np.atleast_2d(noise).shape[1]
    return float(np.sqrt(p) * fdagger_e_max(g, bundle, noise))


def theorem_bound_rhs(
    sigma_p: float,
    n: int,
    p: int,
    gamma: float,
    penalty_sum: float,
    c1: float = 1.0,
) -> float:
    """Right-hand side of the general mean-squared-error bound:

        c1 sigma_p^2 (1/n + log(np)/(np)) + (2 gamma / (np)) * penalty_sum.

    ``c1`` is an unquantified universal constant, configurable and 1 by
    default; logarithms are natural.
    """
    if n <= 0 or p <= 0:
        raise ValueError(f"need positive n and p, got n={n}, p={p}")
    np_ = float(n * p)
    noise_part = c1 * sigma_p**2 * (1.0 / n + np.log(np_) / np_)
    return float(noise_part + 2.0 * gamma * penalty_sum / np_)


def crude_bound_rhs(
    sigma_p: float, n: int, p: int, between_count: int, diameter: float
) -> float:
    """Oracle-term bound for an unweighted graph independent of the noise:
    ``3 sigma_p |I| sqrt(log(np)/n) diam``, with ``|I|`` the number of
    between-cluster edges."""
    if n <= 0 or p <= 0:
        raise ValueError(f"need positive n and p, got n={n}, p={p}")
    return float(3.0 * sigma_p * between_count * np.sqrt(np.log(n * p) / n) * diameter)


def between_cluster_edges(
    g: AffinityGraph, labels: np.ndarray
) -> tuple[int, list[tuple[int, int]]]:
    """Count and list the edges joining samples with different labels."""
    labels = np.asarray(labels)
    if labels.shape != (g.n,):
        raise ValueError(f"labels have shape {labels.shape}, expected ({g.n},)")
    crossing = labels[g.tails] != labels[g.heads]
    edges = [
        (int(j), int(k)) for j, k in zip(g.tails[crossing], g.heads[crossing])
    ]
    return len(edges), edges


def ari(labels_a: np.ndarray, labels_b: np.ndarray) -> float:
    """Adjusted Rand index between two labelings.

    Standard pair-counting form from the contingency table, with the
    expected index under the permutation null subtracted.  When both
    labelings are trivial (all pairs agree on both sides) the denominator
    vanishes and the partitions are identical, so 1 is returned.
    """
    labels_a = np.asarray(labels_a).ravel()
    labels_b = np.asarray(labels_b).ravel()
    if labels_a.shape != labels_b.shape:
        raise ValueError(
            f"labelings differ in length: {labels_a.shape} vs {labels_b.shape}"
        )
    n = len(labels_a)
    _, ia = np.unique(labels_a, return_inverse=True)
    _, ib = np.unique(labels_b, return_inverse=True)
    contingency = np.zeros((ia.max() + 1, ib.max() + 1), dtype=np.int64)
    np.add.at(contingency, (ia, ib), 1)

    def comb2(x):
        return x * (x - 1) / 2.0

    sum_cells = comb2(contingency).sum()
    sum_rows = comb2(contingency.sum(axis=1)).sum()
    sum_cols = comb2(contingency.sum(axis=0)).sum()
    total = comb2(n)
    expected = sum_rows * sum_cols / total if total > 0 else 0.0
    max_index = 0.5 * (sum_rows + sum_cols)
    if max_index == expected:
        return 1.0
    return float((sum_cells - expected) / (max_index - expected))


def mse(u_true: np.ndarray, u_hat: np.ndarray) -> float:
    """Squared Frobenius distance divided by the matrix size ``n * p``."""
    u_true = np.asarray(u_true, dtype=float)
    u_hat = np.asarray(u_hat, dtype=float)
    if u_true.shape != u_hat.shape:
        raise ValueError(f"shape mismatch: {u_true.shape} vs {u_hat.shape}")
    return float(((u_true - u_hat) ** 2).sum() / u_true.size)


@dataclass(frozen=True)
class DiagnosticsReport:
    """Bundle of oracle-side diagnostics for one graph and dataset."""

    oracle_term: float
    fdagger_e_max: float
    between_edges: int
    theorem_rhs: float
    crude_rhs: float
    gamma_threshold: float
    penalty_sum: float

    def to_dict(self) -> dict:
        return {
            "oracle_term": self.oracle_term,
            "fdagger_e_max": self.fdagger_e_max,
            "between_edges": self.between_edges,
            "theorem_rhs": self.theorem_rhs,
            "crude_rhs": self.crude_rhs,
            "gamma_threshold": self.gamma_threshold,
            "penalty_sum": self.penalty_sum,
        }


def diagnostics_report(
    g: AffinityGraph,
    bundle: SpectralBundle,
    u_true: np.ndarray,
    noise: np.ndarray,
    labels: np.ndarray,
    sigma_p: float,
    gamma: float | None = None,
    c1: float = 1.0,
) -> DiagnosticsReport:
    """Assemble the full diagnostics for one (graph, dataset) pair.

    With ``gamma=None`` the bound is evaluated at the gamma threshold
    itself.  The cluster diameter is taken over the unique rows of the
    true centroid matrix.
    """
    u_true = np.atleast_2d(np.asarray(u_true, dtype=float))
    noise = np.atleast_2d(np.asarray(noise, dtype=float))
    n, p = u_true.shape
    fde = fdagger_e_max(g, bundle, noise)
    pen = penalty_sum(g, u_true)
    thr = float(np.sqrt(p) * fde)
    if gamma is None:
        gamma = thr
    count, _ = between_cluster_edges(g, labels)
    centers = np.unique(u_true, axis=0)
    diff = centers[:, None, :] - centers[None, :, :]
    diam = float(np.sqrt((diff * diff).sum(axis=2)).max()) if len(centers) > 1 else 0.0
    return DiagnosticsReport(
        oracle_term=fde * pen / n,
        fdagger_e_max=fde,
        between_edges=count,
        theorem_rhs=theorem_bound_rhs(sigma_p, n, p, gamma, pen, c1=c1),
        crude_rhs=crude_bound_rhs(sigma_p, n, p, count, diam),
        gamma_threshold=thr,
        penalty_sum=pen,
    )
