"""Simulation harness: mixture data, graph sweeps, and Monte Carlo checks.

A trial draws a dataset, builds a family of affinity graphs (a k-nearest
neighbor sweep or a grid of block random graphs), computes the oracle
diagnostics for each graph, solves the full regularization path, and
records the best adjusted Rand index and mean squared error along the
path.  Trials own independent random streams spawned from the master
seed, so serial and parallel runs produce identical records.
"""

from __future__ import annotations

import csv
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .analysis import (
    MixtureSpec,
    ari,
    between_cluster_edges,
    fdagger_e_max,
    mse,
    penalty_sum,
)
from .graph import AffinityGraph, SbmParams, is_connected, knn_graph, sbm_graph
from .io import format_float
from .solver import solve_path
from .spectral import fdagger_matrix, spectral_bundle

log = logging.getLogger(__name__)

FOUR_CENTERS = np.sqrt(2.0) * np.array(
    [[1.0, 1.0], [-1.0, 1.0], [1.0, -1.0], [-1.0, -1.0]]
)

THREE_CENTERS = np.array([[0.0, 0.0], [3.5, 0.0], [1.75, 3.031088913245535]])


@dataclass(frozen=True)
class Dataset:
    """Realized mixture draw: ``x = u + e`` with true centroids and labels."""

    x: np.ndarray
    u: np.ndarray
    e: np.ndarray
    labels: np.ndarray


def generate_mixture(spec: MixtureSpec, n: int, seed) -> Dataset:
    """Draw ``n`` samples: labels i.i.d. from the membership probabilities,
    Gaussian noise with standard deviation ``sigma_p`` per coordinate."""
    rng = np.random.default_rng(seed)
    m, p = spec.centers.shape
    labels = rng.choice(m, size=n, p=spec.probs)
    u = spec.centers[labels]
    e = spec.sigma_p * rng.standard_normal((n, p))
    return Dataset(x=u + e, u=u, e=e, labels=labels)


def _balanced_dataset(centers: np.ndarray, per_center: int, seed, sigma: float = 1.0) -> Dataset:
    rng = np.random.default_rng(seed)
    m = centers.shape[0]
    labels = rng.permutation(np.repeat(np.arange(m), per_center))
    u = centers[labels]
    e = sigma * rng.standard_normal(u.shape)
    return Dataset(x=u + e, u=u, e=e, labels=labels)


def four_center_dataset(seed, sigma: float = 1.0) -> Dataset:
    """100 points in the plane, 25 per center at ``(+-sqrt(2), +-sqrt(2))``,
    standard normal noise.  The balanced assignment is deterministic; only
    its order is shuffled by the seed."""
    return _balanced_dataset(FOUR_CENTERS, 25, seed, sigma=sigma)


def three_center_dataset(seed, sigma: float = 1.0) -> Dataset:
    """60 points from three bivariate normals, 20 per component."""
    return _balanced_dataset(THREE_CENTERS, 20, seed, sigma=sigma)


@dataclass(frozen=True)
class TrialRecord:
    """Metrics recorded for one (trial, graph) pair."""

    trial: int
    k: int | None
    p_w: float | None
    p_b: float | None
    replicate: int | None
    oracle_term: float
    fdagger_e_max: float
    between_edges: int
    best_ari: float
    best_mse: float
    gamma_at_best_ari: float
    gamma_at_best_mse: float
    spectral_gap: float
    seed: int


@dataclass(frozen=True)
class SkippedGraph:
    trial: int
    params: str
    reason: str


@dataclass
class ExperimentResult:
    records: list[TrialRecord]
    skipped: list[SkippedGraph]


@dataclass(frozen=True)
class PathConfig:
    """Solver settings shared by all graphs of an experiment."""

    num_gammas: int = 40
    span: float = 1e3
    tol: float = 1e-6
    search_tol: float = 1e-4
    max_iter: int = 100_000


def _evaluate_graph(ds: Dataset, g: AffinityGraph, cfg: PathConfig) -> dict:
    """Diagnostics plus best path metrics for one connected graph."""
    bundle = spectral_bundle(g)
    fde = fdagger_e_max(g, bundle, ds.e)
    pen = penalty_sum(g, ds.u)
    n_between, _ = between_cluster_edges(g, ds.labels)
    path = solve_path(
        ds.x,
        g,
        num_points=cfg.num_gammas,
        span=cfg.span,
        tol=cfg.tol,
        search_tol=cfg.search_tol,
        max_iter=cfg.max_iter,
    )
    aris = np.array([ari(ds.labels, pt.partition) for pt in path.points])
    mses = np.array([mse(ds.u, pt.u_hat) for pt in path.points])
    gammas = np.array([pt.gamma for pt in path.points])
    i_ari = int(np.argmax(aris))
    i_mse = int(np.argmin(mses))
    return {
        "oracle_term": fde * pen / g.n,
        "fdagger_e_max": fde,
        "between_edges": n_between,
        "best_ari": float(aris[i_ari]),
        "best_mse": float(mses[i_mse]),
        "gamma_at_best_ari": float(gammas[i_ari]),
        "gamma_at_best_mse": float(gammas[i_mse]),
        "spectral_gap": bundle.spectral_gap,
    }


def _knn_trial(args) -> tuple[list[TrialRecord], list[SkippedGraph]]:
    trial, child, k_range, cfg = args
    seed_repr = int(child.generate_state(1)[0])
    ds = four_center_dataset(child)
    records, skipped = [], []
    for k in k_range:
        g = knn_graph(ds.x, k)
        if not is_connected(g):
            skipped.append(SkippedGraph(trial, f"k={k}", "disconnected"))
            continue
        metrics = _evaluate_graph(ds, g, cfg)
        records.append(
            TrialRecord(
                trial=trial, k=int(k), p_w=None, p_b=None, replicate=None,
                seed=seed_repr, **metrics,
            )
        )
    return records, skipped


def _sbm_trial(args) -> tuple[list[TrialRecord], list[SkippedGraph]]:
    trial, child, pw_grid, pb_grid, replicates, cfg = args
    seed_repr = int(child.generate_state(1)[0])
    data_ss, graph_ss = child.spawn(2)
    ds = four_center_dataset(data_ss)
    graph_rng = np.random.default_rng(graph_ss)
    records, skipped = [], []
    for p_w in pw_grid:
        for p_b in pb_grid:
            for rep in range(replicates):
                g_seed = int(graph_rng.integers(2**63))
                g = sbm_graph(
                    SbmParams(n=len(ds.labels), p_w=p_w, p_b=p_b, seed=g_seed),
                    ds.labels,
                )
                tag = f"p_w={p_w},p_b={p_b},rep={rep}"
                if not is_connected(g):
                    skipped.append(SkippedGraph(trial, tag, "disconnected"))
                    continue
                metrics = _evaluate_graph(ds, g, cfg)
                records.append(
                    TrialRecord(
                        trial=trial, k=None, p_w=float(p_w), p_b=float(p_b),
                        replicate=rep, seed=seed_repr, **metrics,
                    )
                )
    return records, skipped


def _run_trials(task_fn, task_args, jobs: int) -> ExperimentResult:
    records: list[TrialRecord] = []
    skipped: list[SkippedGraph] = []
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(task_fn, task_args))
    else:
        results = [task_fn(a) for a in task_args]
    for recs, skips in results:
        records.extend(recs)
        skipped.extend(skips)
    for s in skipped:
        log.info("skipped trial=%d %s: %s", s.trial, s.params, s.reason)
    return ExperimentResult(records=records, skipped=skipped)


def run_knn_trials(
    n_trials: int,
    k_range,
    seed: int,
    *,
    config: PathConfig | None = None,
    jobs: int = 1,
) -> ExperimentResult:
    """Sweep k-nearest-neighbor graphs over fresh four-center datasets.

    Disconnected graphs are skipped (flagged, never resampled) so the
    sampling distribution is preserved.
    """
    cfg = config or PathConfig()
    k_range = [int(k) for k in k_range]
    children = np.random.SeedSequence(seed).spawn(n_trials)
    args = [(t, children[t], k_range, cfg) for t in range(n_trials)]
    return _run_trials(_knn_trial, args, jobs)


def run_sbm_trials(
    n_trials: int,
    pw_grid,
    pb_grid,
    replicates: int,
    seed: int,
    *,
    config: PathConfig | None = None,
    jobs: int = 1,
) -> ExperimentResult:
    """Sweep block random graphs over a (p_w, p_b) grid.

    Graphs are drawn from the balanced-block Bernoulli model using the
    dataset's true labels (four balanced blocks for the four-center
    data), ``replicates`` fresh draws per grid point.
    """
    cfg = config or PathConfig()
    children = np.random.SeedSequence(seed).spawn(n_trials)
    args = [
        (t, children[t], list(pw_grid), list(pb_grid), replicates, cfg)
        for t in range(n_trials)
    ]
    return _run_trials(_sbm_trial, args, jobs)


@dataclass(frozen=True)
class ConcentrationReport:
    """Empirical check of the noise-application concentration bound."""

    threshold: float
    n_rep: int
    exceedances: int
    frequency: float
    failure_probability: float
    pass_limit: float

    @property
    def passed(self) -> bool:
        return self.frequency <= self.pass_limit

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "n_rep": self.n_rep,
            "exceedances": self.exceedances,
            "frequency": self.frequency,
            "failure_probability": self.failure_probability,
            "pass_limit": self.pass_limit,
            "passed": self.passed,
        }


def monte_carlo_fdagger_concentration(
    g: AffinityGraph,
    p: int,
    sigma_p: float,
    n_rep: int,
    seed,
    chunk: int = 500,
) -> ConcentrationReport:
    """Estimate how often ``max|Fpinv E|`` exceeds its concentration bound.

    For a fixed connected graph and fresh Gaussian noise draws, the event

        max|Fpinv E| > sqrt(8 sigma_p^2 log(np) max_e w_e ||Fpinv_e||^2)

    has probability at most ``2/(np)``.  The check passes when the
    empirical frequency stays within three binomial standard errors of
    that probability.
    """
    bundle = spectral_bundle(g)
    fd = fdagger_matrix(g, bundle)
    row_sq = (fd * fd).sum(axis=1)
    n = g.n
    threshold = float(
        np.sqrt(8.0 * sigma_p**2 * np.log(n * p) * (g.weights * row_sq).max())
    )
    rng = np.random.default_rng(seed)
    exceed = 0
    done = 0
    while done < n_rep:
        size = min(chunk, n_rep - done)
        noise = sigma_p * rng.standard_normal((size, n, p))
        vals = np.abs(np.einsum("mn,cnp->cmp", fd, noise)).max(axis=(1, 2))
        exceed += int(np.sum(vals > threshold))
        done += size
    prob = 2.0 / (n * p)
    limit = prob + 3.0 * np.sqrt(prob * (1.0 - prob) / n_rep)
    return ConcentrationReport(
        threshold=threshold,
        n_rep=n_rep,
        exceedances=exceed,
        frequency=exceed / n_rep,
        failure_probability=prob,
        pass_limit=float(limit),
    )


@dataclass(frozen=True)
class HeatmapCell:
    x_lo: float
    x_hi: float
    y_lo: float
    y_hi: float
    count: int
    median_metric: float


def heatmap_bins(
    records,
    x_bins: int,
    y_metric: str = "best_mse",
    y_bins: int | None = None,
    trim_top_quantile: float | None = None,
) -> list[HeatmapCell]:
    """2-d histogram of (oracle term, metric) with per-cell medians.

    ``trim_top_quantile=q`` drops the records whose oracle term lies in
    the top ``q`` quantile before binning; counts then sum to the number
    of kept records.
    """
    records = list(records)
    if not records:
        raise ValueError("heatmap_bins needs at least one record")
    if y_bins is None:
        y_bins = x_bins
    x = np.array([r.oracle_term for r in records], dtype=float)
    y = np.array([getattr(r, y_metric) for r in records], dtype=float)
    if trim_top_quantile:
        cut = np.quantile(x, 1.0 - trim_top_quantile)
        keep = x <= cut
        x, y = x[keep], y[keep]

    def edges(v, bins):
        lo, hi = float(v.min()), float(v.max())
        if lo == hi:
            lo, hi = lo - 0.5, hi + 0.5
        return np.linspace(lo, hi, bins + 1)

    xe = edges(x, x_bins)
    ye = edges(y, y_bins)
    xi = np.clip(np.digitize(x, xe) - 1, 0, x_bins - 1)
    yi = np.clip(np.digitize(y, ye) - 1, 0, y_bins - 1)
    cells = []
    for i in range(x_bins):
        for j in range(y_bins):
            mask = (xi == i) & (yi == j)
            count = int(mask.sum())
            med = float(np.median(y[mask])) if count else float("nan")
            cells.append(
                HeatmapCell(
                    x_lo=float(xe[i]), x_hi=float(xe[i + 1]),
                    y_lo=float(ye[j]), y_hi=float(ye[j + 1]),
                    count=count, median_metric=med,
                )
            )
    return cells


RECORD_FIELDS = [
    "trial", "k", "p_w", "p_b", "replicate",
    "oracle_term", "fdagger_e_max", "between_edges",
    "best_ari", "best_mse", "gamma_at_best_ari", "gamma_at_best_mse",
    "spectral_gap", "seed",
]


def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return format_float(value)
    return str(value)


def write_records_csv(records, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RECORD_FIELDS)
        for r in records:
            writer.writerow([_format_cell(getattr(r, f)) for f in RECORD_FIELDS])


def read_records_csv(path) -> list[TrialRecord]:
    def opt(v, cast):
        return cast(v) if v != "" else None

    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(
                TrialRecord(
                    trial=int(row["trial"]),
                    k=opt(row["k"], int),
                    p_w=opt(row["p_w"], float),
                    p_b=opt(row["p_b"], float),
                    replicate=opt(row["replicate"], int),
                    oracle_term=float(row["oracle_term"]),
                    fdagger_e_max=float(row["fdagger_e_max"]),
                    between_edges=int(row["between_edges"]),
                    best_ari=float(row["best_ari"]),
                    best_mse=float(row["best_mse"]),
                    gamma_at_best_ari=float(row["gamma_at_best_ari"]),
                    gamma_at_best_mse=float(row["gamma_at_best_mse"]),
                    spectral_gap=float(row["spectral_gap"]),
                    seed=int(row["seed"]),
                )
            )
    return out


def write_heatmap_csv(cells, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x_lo", "x_hi", "y_lo", "y_hi", "count", "median_metric"])
        for c in cells:
            med = "" if np.isnan(c.median_metric) else format_float(c.median_metric)
            writer.writerow(
                [
                    format_float(c.x_lo), format_float(c.x_hi),
                    format_float(c.y_lo), format_float(c.y_hi),
                    str(c.count), med,
                ]
            )
