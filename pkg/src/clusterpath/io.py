"""File formats: graphs as TSV edge lists, matrices as headerless CSV.

All floating-point values are written with 17 significant digits so that
round-tripping through text reproduces the exact double.
"""

from __future__ import annotations

import os

import numpy as np

from .graph import AffinityGraph

FLOAT_FMT = "%.17g"


def format_float(x: float) -> str:
    return FLOAT_FMT % float(x)


def write_graph_tsv(g: AffinityGraph, path) -> None:
    """Write ``# n=<n>`` then one ``j<TAB>k<TAB>weight`` line per edge."""
    with open(path, "w") as fh:
        fh.write(f"# n={g.n}\n")
        for j, k, w in zip(g.tails, g.heads, g.weights):
            fh.write(f"{j}\t{k}\t{format_float(w)}\n")


def read_graph_tsv(path) -> AffinityGraph:
    with open(path) as fh:
        header = fh.readline().strip()
        if not header.startswith("# n="):
            raise ValueError(f"{path}: expected '# n=<n>' header, got {header!r}")
        n = int(header[len("# n=") :])
        edges = []
        for line in fh:
            line = line.strip()
            if not line:
                continue
            j, k, w = line.split("\t")
            edges.append((int(j), int(k), float(w)))
    return AffinityGraph(n, edges)


def write_matrix_csv(x: np.ndarray, path) -> None:
    """One sample per row, comma separated, no header."""
    x = np.atleast_2d(np.asarray(x))
    if np.issubdtype(x.dtype, np.integer):
        np.savetxt(path, x, fmt="%d", delimiter=",")
    else:
        np.savetxt(path, x, fmt=FLOAT_FMT, delimiter=",")


def read_matrix_csv(path) -> np.ndarray:
    x = np.loadtxt(path, delimiter=",", ndmin=2)
    return x


def read_labels_csv(path) -> np.ndarray:
    labels = np.loadtxt(path, delimiter=",", ndmin=1)
    return labels.astype(np.int64)


def ensure_dir(path) -> None:
    os.makedirs(path, exist_ok=True)
