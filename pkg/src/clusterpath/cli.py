"""Command-line interface.

Commands: gen-data, build-graph, diagnose, solve-path, experiment,
verify-bounds.  Every command accepts ``--config FILE`` (JSON) whose
values fill in flags not given explicitly (flags > file > defaults), and
writes its fully resolved configuration next to its outputs.

Exit codes: 0 success, 1 usage or I/O error, 2 invalid graph,
3 solver failure, 4 bound verification failure.
"""

from __future__ import annotations

import json
import logging
import os
import sys

import click
import numpy as np

from . import io as cpio
from .analysis import MixtureSpec, diagnostics_report
from .graph import (
    AffinityGraph,
    DisconnectedGraphError,
    GraphValidationError,
    SbmParams,
    bridge_oracle_graph,
    complete_graph,
    epsilon_graph,
    gaussian_weights,
    is_connected,
    knn_graph,
    sbm_graph,
)
from .simulate import (
    PathConfig,
    four_center_dataset,
    generate_mixture,
    heatmap_bins,
    monte_carlo_fdagger_concentration,
    run_knn_trials,
    run_sbm_trials,
    three_center_dataset,
    write_heatmap_csv,
    write_records_csv,
)
from .solver import ConvergenceError, solve_path
from .spectral import (
    BipartiteGraphError,
    bridge_edge_representatives,
    bridge_pinv_diff_closed_forms,
    effective_resistance,
    fdagger_entry_bounds_check,
    fdagger_matrix,
    hitting_times,
    laplacian_pinv,
    luxburg_bound_check,
    spectral_bundle,
)

log = logging.getLogger("clusterpath")

EXIT_OK = 0
EXIT_USAGE_IO = 1
EXIT_INVALID_GRAPH = 2
EXIT_SOLVER_FAILURE = 3
EXIT_VERIFY_FAILED = 4


class VerificationFailure(RuntimeError):
    pass


def _resolve(ctx: click.Context, config_path, params: dict) -> dict:
    """Merge explicit flags, config-file values, and defaults."""
    file_cfg = {}
    if config_path:
        with open(config_path) as fh:
            file_cfg = json.load(fh)
        unknown = set(file_cfg) - set(params)
        if unknown:
            raise click.UsageError(f"unknown config keys: {sorted(unknown)}")
    resolved = {}
    for name, value in params.items():
        source = ctx.get_parameter_source(name)
        if source == click.core.ParameterSource.DEFAULT and name in file_cfg:
            resolved[name] = file_cfg[name]
        else:
            resolved[name] = value
    return resolved


def _emit_config(cfg: dict, out_dir: str, command: str) -> None:
    cpio.ensure_dir(out_dir)
    path = os.path.join(out_dir, f"{command}.config.json")
    with open(path, "w") as fh:
        json.dump(cfg, fh, indent=2, sort_keys=True)
        fh.write("\n")
    log.info("resolved config: %s", json.dumps(cfg, sort_keys=True))


def _parse_int_range(spec: str) -> list[int]:
    """'2-99' -> inclusive range; '4,7,9' -> list; '5' -> [5]."""
    spec = spec.strip()
    if "-" in spec and not spec.startswith("-"):
        lo, hi = spec.split("-", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(tok) for tok in spec.split(",")]


def _parse_float_grid(spec: str) -> list[float]:
    """'0.02:0.25:0.01' -> arange grid; otherwise comma-separated floats."""
    spec = spec.strip()
    if ":" in spec:
        start, stop, step = (float(tok) for tok in spec.split(":"))
        vals = np.arange(start, stop + step / 2, step)
        return [float(v) for v in vals]
    return [float(tok) for tok in spec.split(",")]


@click.group()
def cli():
    """Convex clustering with affinity-graph diagnostics."""


@cli.command("gen-data")
@click.option("--preset", type=click.Choice(["four-center", "three-center"]), default=None)
@click.option("--centers-file", type=str, default=None, help="CSV of mixture centers.")
@click.option("--probs", type=str, default=None, help="Comma-separated membership probabilities.")
@click.option("--n", type=int, default=100, show_default=True)
@click.option("--sigma", type=float, default=1.0, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out-dir", type=str, default=".", show_default=True)
@click.option("--config", "config_path", type=str, default=None)
@click.pass_context
def cmd_gen_data(ctx, preset, centers_file, probs, n, sigma, seed, out_dir, config_path):
    """Write X.csv, U.csv, E.csv, and labels.csv for a mixture draw."""
    cfg = _resolve(ctx, config_path, dict(
        preset=preset, centers_file=centers_file, probs=probs,
        n=n, sigma=sigma, seed=seed, out_dir=out_dir,
    ))
    if cfg["preset"] == "four-center":
        ds = four_center_dataset(cfg["seed"], sigma=cfg["sigma"])
    elif cfg["preset"] == "three-center":
        ds = three_center_dataset(cfg["seed"], sigma=cfg["sigma"])
    else:
        if not cfg["centers_file"]:
            raise click.UsageError("need --preset or --centers-file")
        centers = cpio.read_matrix_csv(cfg["centers_file"])
        if cfg["probs"]:
            probs_v = np.array([float(t) for t in cfg["probs"].split(",")])
        else:
            probs_v = np.full(len(centers), 1.0 / len(centers))
        spec = MixtureSpec(centers=centers, probs=probs_v, sigma_p=cfg["sigma"])
        ds = generate_mixture(spec, cfg["n"], cfg["seed"])
    out = cfg["out_dir"]
    cpio.ensure_dir(out)
    cpio.write_matrix_csv(ds.x, os.path.join(out, "X.csv"))
    cpio.write_matrix_csv(ds.u, os.path.join(out, "U.csv"))
    cpio.write_matrix_csv(ds.e, os.path.join(out, "E.csv"))
    cpio.write_matrix_csv(ds.labels.reshape(-1, 1), os.path.join(out, "labels.csv"))
    _emit_config(cfg, out, "gen-data")


@cli.command("build-graph")
@click.option("--data", type=str, default=None, help="X.csv for data-driven graphs.")
@click.option("--method", type=click.Choice(["knn", "epsilon", "complete", "sbm", "bridge"]), required=True)
@click.option("--k", type=int, default=None, help="Neighbor count (knn) or bridge count (bridge).")
@click.option("--mutual", is_flag=True, default=False, help="Mutual instead of union k-NN rule.")
@click.option("--radius", type=float, default=None)
@click.option("--tau", type=float, default=None, help="Apply Gaussian kernel weights with this bandwidth.")
@click.option("--n", type=int, default=None, help="Node count for complete/sbm/bridge.")
@click.option("--pw", type=float, default=None)
@click.option("--pb", type=float, default=None)
@click.option("--labels", "labels_file", type=str, default=None)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=str, default="graph.tsv", show_default=True)
@click.option("--config", "config_path", type=str, default=None)
@click.pass_context
def cmd_build_graph(ctx, data, method, k, mutual, radius, tau, n, pw, pb,
                    labels_file, seed, out, config_path):
    """Construct an affinity graph and write it as a TSV edge list."""
    cfg = _resolve(ctx, config_path, dict(
        data=data, method=method, k=k, mutual=mutual, radius=radius, tau=tau,
        n=n, pw=pw, pb=pb, labels=labels_file, seed=seed, out=out,
    ))
    method = cfg["method"]
    x = cpio.read_matrix_csv(cfg["data"]) if cfg["data"] else None
    if method == "knn":
        if x is None or cfg["k"] is None:
            raise click.UsageError("knn needs --data and --k")
        g = knn_graph(x, cfg["k"], mutual=cfg["mutual"])
    elif method == "epsilon":
        if x is None or cfg["radius"] is None:
            raise click.UsageError("epsilon needs --data and --radius")
        g = epsilon_graph(x, cfg["radius"])
    elif method == "complete":
        size = cfg["n"] if cfg["n"] else (len(x) if x is not None else None)
        if size is None:
            raise click.UsageError("complete needs --n or --data")
        g = complete_graph(size)
    elif method == "sbm":
        if cfg["labels"] is None or cfg["pw"] is None or cfg["pb"] is None:
            raise click.UsageError("sbm needs --labels, --pw, and --pb")
        labels_v = cpio.read_labels_csv(cfg["labels"])
        g = sbm_graph(
            SbmParams(n=len(labels_v), p_w=cfg["pw"], p_b=cfg["pb"], seed=cfg["seed"]),
            labels_v,
        )
    else:  # bridge
        if cfg["n"] is None or cfg["k"] is None:
            raise click.UsageError("bridge needs --n and --k")
        g = bridge_oracle_graph(cfg["n"], cfg["k"])
    if cfg["tau"] is not None:
        if x is None:
            raise click.UsageError("--tau needs --data")
        g = gaussian_weights(x, cfg["tau"], g)
    cpio.write_graph_tsv(g, cfg["out"])
    _emit_config(cfg, os.path.dirname(cfg["out"]) or ".", "build-graph")


def _load_graph_checked(path: str) -> AffinityGraph:
    g = cpio.read_graph_tsv(path)
    if not is_connected(g):
        raise DisconnectedGraphError(f"graph in {path} is not connected")
    return g


@cli.command("diagnose")
@click.option("--data", required=True, type=str)
@click.option("--centroids", required=True, type=str, help="True centroid matrix U.csv.")
@click.option("--noise", type=str, default=None, help="E.csv; defaults to X - U.")
@click.option("--labels", "labels_file", required=True, type=str)
@click.option("--graph", "graph_file", required=True, type=str)
@click.option("--sigma", type=float, default=1.0, show_default=True)
@click.option("--gamma", type=float, default=None, help="Bound gamma; defaults to the threshold.")
@click.option("--c1", type=float, default=1.0, show_default=True)
@click.option("--dump-matrices", is_flag=True, default=False)
@click.option("--out-dir", type=str, default=".", show_default=True)
@click.option("--config", "config_path", type=str, default=None)
@click.pass_context
def cmd_diagnose(ctx, data, centroids, noise, labels_file, graph_file, sigma,
                 gamma, c1, dump_matrices, out_dir, config_path):
    """Oracle diagnostics plus per-edge pseudoinverse norms and resistances."""
    cfg = _resolve(ctx, config_path, dict(
        data=data, centroids=centroids, noise=noise, labels=labels_file,
        graph=graph_file, sigma=sigma, gamma=gamma, c1=c1,
        dump_matrices=dump_matrices, out_dir=out_dir,
    ))
    x = cpio.read_matrix_csv(cfg["data"])
    u = cpio.read_matrix_csv(cfg["centroids"])
    e = cpio.read_matrix_csv(cfg["noise"]) if cfg["noise"] else x - u
    labels_v = cpio.read_labels_csv(cfg["labels"])
    g = _load_graph_checked(cfg["graph"])
    bundle = spectral_bundle(g)
    report = diagnostics_report(
        g, bundle, u, e, labels_v, sigma_p=cfg["sigma"],
        gamma=cfg["gamma"], c1=cfg["c1"],
    )
    fd = fdagger_matrix(g, bundle)
    edges = [
        {
            "edge": [int(j), int(k)],
            "fdagger_norm": float(np.linalg.norm(fd[idx])),
            "resistance": effective_resistance(bundle, int(j), int(k)),
        }
        for idx, (j, k) in enumerate(zip(g.tails, g.heads))
    ]
    out = cfg["out_dir"]
    cpio.ensure_dir(out)
    payload = {"report": report.to_dict(), "edges": edges}
    with open(os.path.join(out, "diagnostics.json"), "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
    if cfg["dump_matrices"]:
        cpio.write_matrix_csv(g.laplacian, os.path.join(out, "laplacian.csv"))
        cpio.write_matrix_csv(bundle.laplacian_pinv, os.path.join(out, "laplacian_pinv.csv"))
        cpio.write_matrix_csv(fd, os.path.join(out, "fdagger.csv"))
    _emit_config(cfg, out, "diagnose")


@cli.command("solve-path")
@click.option("--data", required=True, type=str)
@click.option("--graph", "graph_file", required=True, type=str)
@click.option("--gamma", type=float, default=None, help="Solve a single gamma.")
@click.option("--gamma-grid", type=str, default=None, help="Comma-separated ascending gammas.")
@click.option("--num-gammas", type=int, default=40, show_default=True)
@click.option("--span", type=float, default=1e3, show_default=True)
@click.option("--auto-gamma-max", is_flag=True, default=False,
              help="Extend an explicit grid until full fusion.")
@click.option("--tol", type=float, default=1e-6, show_default=True)
@click.option("--max-iter", type=int, default=100_000, show_default=True)
@click.option("--dump-centroids", is_flag=True, default=False)
@click.option("--out-dir", type=str, default=".", show_default=True)
@click.option("--config", "config_path", type=str, default=None)
@click.pass_context
def cmd_solve_path(ctx, data, graph_file, gamma, gamma_grid, num_gammas, span,
                   auto_gamma_max, tol, max_iter, dump_centroids, out_dir, config_path):
    """Solve the clustering path and write per-gamma summaries."""
    cfg = _resolve(ctx, config_path, dict(
        data=data, graph=graph_file, gamma=gamma, gamma_grid=gamma_grid,
        num_gammas=num_gammas, span=span, auto_gamma_max=auto_gamma_max,
        tol=tol, max_iter=max_iter, dump_centroids=dump_centroids, out_dir=out_dir,
    ))
    x = cpio.read_matrix_csv(cfg["data"])
    g = _load_graph_checked(cfg["graph"])
    if cfg["gamma"] is not None:
        gammas = [cfg["gamma"]]
    elif cfg["gamma_grid"]:
        gammas = [float(t) for t in str(cfg["gamma_grid"]).split(",")]
    else:
        gammas = None
    path = solve_path(
        x, g, gammas,
        num_points=cfg["num_gammas"], span=cfg["span"],
        extend_to_fusion=cfg["auto_gamma_max"],
        tol=cfg["tol"], max_iter=cfg["max_iter"],
    )
    out = cfg["out_dir"]
    cpio.ensure_dir(out)
    with open(os.path.join(out, "path.csv"), "w") as fh:
        fh.write("gamma,cluster_count,objective,kkt_residual\n")
        for pt in path.points:
            fh.write(
                f"{cpio.format_float(pt.gamma)},{pt.n_clusters},"
                f"{cpio.format_float(pt.objective)},{cpio.format_float(pt.kkt_residual)}\n"
            )
    if cfg["dump_centroids"]:
        cdir = os.path.join(out, "centroids")
        cpio.ensure_dir(cdir)
        for idx, pt in enumerate(path.points):
            cpio.write_matrix_csv(pt.u_hat, os.path.join(cdir, f"point_{idx:04d}.csv"))
    _emit_config(cfg, out, "solve-path")


@cli.command("experiment")
@click.option("--mode", type=click.Choice(["knn", "sbm"]), required=True)
@click.option("--trials", type=int, default=50, show_default=True)
@click.option("--k", "k_spec", type=str, default="2-99", show_default=True,
              help="k values: '2-99', '5', or '4,8,16'.")
@click.option("--pw", "pw_spec", type=str, default="0.02:0.25:0.01", show_default=True)
@click.option("--pb", "pb_spec", type=str, default="0.02:0.25:0.01", show_default=True)
@click.option("--replicates", type=int, default=10, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--num-gammas", type=int, default=40, show_default=True)
@click.option("--tol", type=float, default=1e-6, show_default=True)
@click.option("--search-tol", type=float, default=1e-4, show_default=True)
@click.option("--jobs", type=int, default=1, envvar="CLUSTERPATH_JOBS", show_default=True)
@click.option("--trim-top-quantile", type=float, default=None)
@click.option("--x-bins", type=int, default=20, show_default=True)
@click.option("--y-metric", type=click.Choice(["best_mse", "best_ari"]),
              default="best_mse", show_default=True)
@click.option("--out-dir", type=str, default=".", show_default=True)
@click.option("--config", "config_path", type=str, default=None)
@click.pass_context
def cmd_experiment(ctx, mode, trials, k_spec, pw_spec, pb_spec, replicates, seed,
                   num_gammas, tol, search_tol, jobs, trim_top_quantile, x_bins,
                   y_metric, out_dir, config_path):
    """Run the simulation protocol and write records plus heatmap bins."""
    cfg = _resolve(ctx, config_path, dict(
        mode=mode, trials=trials, k=k_spec, pw=pw_spec, pb=pb_spec,
        replicates=replicates, seed=seed, num_gammas=num_gammas, tol=tol,
        search_tol=search_tol, jobs=jobs, trim_top_quantile=trim_top_quantile,
        x_bins=x_bins, y_metric=y_metric, out_dir=out_dir,
    ))
    pcfg = PathConfig(num_gammas=cfg["num_gammas"], tol=cfg["tol"],
                      search_tol=cfg["search_tol"])
    if cfg["mode"] == "knn":
        result = run_knn_trials(
            cfg["trials"], _parse_int_range(cfg["k"]), cfg["seed"],
            config=pcfg, jobs=cfg["jobs"],
        )
    else:
        result = run_sbm_trials(
            cfg["trials"], _parse_float_grid(cfg["pw"]), _parse_float_grid(cfg["pb"]),
            cfg["replicates"], cfg["seed"], config=pcfg, jobs=cfg["jobs"],
        )
    out = cfg["out_dir"]
    cpio.ensure_dir(out)
    write_records_csv(result.records, os.path.join(out, "records.csv"))
    if result.records:
        cells = heatmap_bins(
            result.records, cfg["x_bins"], y_metric=cfg["y_metric"],
            trim_top_quantile=cfg["trim_top_quantile"],
        )
        write_heatmap_csv(cells, os.path.join(out, "heatmap.csv"))
    if result.skipped:
        with open(os.path.join(out, "skipped.csv"), "w") as fh:
            fh.write("trial,params,reason\n")
            for s in result.skipped:
                fh.write(f"{s.trial},{s.params},{s.reason}\n")
    log.info("%d records, %d skipped", len(result.records), len(result.skipped))
    _emit_config(cfg, out, "experiment")


def _verify_graph_suite(graphs, mc_graphs, sigma, p, mc_reps, seed) -> dict:
    checks = []

    def add(name, graph_name, fn):
        try:
            rep = fn()
        except BipartiteGraphError as err:
            checks.append({
                "name": name, "graph": graph_name,
                "skipped": True, "reason": str(err),
            })
            return
        entry = {"name": name, "graph": graph_name, "skipped": False}
        entry.update(rep)
        checks.append(entry)

    for graph_name, g, closed in graphs:
        bundle = spectral_bundle(g)
        times = hitting_times(g)
        add("hitting_time_concentration", graph_name,
            lambda g=g, t=times, b=bundle: luxburg_bound_check(g, t, b).to_dict())
        add("fdagger_entry_bounds", graph_name,
            lambda g=g, t=times, b=bundle: fdagger_entry_bounds_check(g, b, t).to_dict())
        if closed is not None:
            n, k = closed
            lp = laplacian_pinv(g)
            forms = bridge_pinv_diff_closed_forms(n, k)
            reps = bridge_edge_representatives(n, k)
            diffs = {}
            for etype, (j, kk) in reps.items():
                vec = lp[:, j] - lp[:, kk]
                diffs[etype] = abs(float(vec @ vec) - forms[etype])
            max_diff = max(diffs.values())
            checks.append({
                "name": "bridge_closed_forms", "graph": graph_name,
                "skipped": False, "max_abs_diff": max_diff,
                "per_edge_type": diffs, "passed": max_diff <= 1e-8,
            })
    for graph_name, g in mc_graphs:
        rep = monte_carlo_fdagger_concentration(g, p=p, sigma_p=sigma,
                                                n_rep=mc_reps, seed=seed)
        entry = {"name": "fdagger_noise_concentration", "graph": graph_name,
                 "skipped": False}
        entry.update(rep.to_dict())
        checks.append(entry)
    all_passed = all(c.get("passed", True) for c in checks)
    return {"passed": all_passed, "checks": checks}


@cli.command("verify-bounds")
@click.option("--graph", "graph_kind",
              type=click.Choice(["suite", "complete", "bridge", "sbm", "file"]),
              default="suite", show_default=True)
@click.option("--file", "graph_file", type=str, default=None)
@click.option("--n", type=int, default=10, show_default=True)
@click.option("--k", type=int, default=3, show_default=True)
@click.option("--pw", type=float, default=0.5, show_default=True)
@click.option("--pb", type=float, default=0.1, show_default=True)
@click.option("--sigma", type=float, default=1.0, show_default=True)
@click.option("--p", "p_dim", type=int, default=2, show_default=True)
@click.option("--mc-reps", type=int, default=2000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=str, default=None, help="Write the JSON report here too.")
@click.option("--config", "config_path", type=str, default=None)
@click.pass_context
def cmd_verify_bounds(ctx, graph_kind, graph_file, n, k, pw, pb, sigma, p_dim,
                      mc_reps, seed, out, config_path):
    """Check the inequality families numerically; exit 4 on any failure."""
    cfg = _resolve(ctx, config_path, dict(
        graph=graph_kind, file=graph_file, n=n, k=k, pw=pw, pb=pb, sigma=sigma,
        p=p_dim, mc_reps=mc_reps, seed=seed, out=out,
    ))

    def balanced_sbm(size, p_w, p_b, s):
        labels = np.repeat([0, 1], size // 2)
        for trial_seed in range(s, s + 1000):
            g = sbm_graph(SbmParams(n=size, p_w=p_w, p_b=p_b, seed=trial_seed), labels)
            if is_connected(g):
                return g
        raise DisconnectedGraphError(
            f"no connected block graph found (n={size}, p_w={p_w}, p_b={p_b})"
        )

    kind = cfg["graph"]
    if kind == "suite":
        graphs = [
            ("complete_10", complete_graph(10), None),
            ("bridge_10_3", bridge_oracle_graph(10, 3), (10, 3)),
            ("bridge_12_4", bridge_oracle_graph(12, 4), (12, 4)),
            ("sbm_50", balanced_sbm(50, cfg["pw"], cfg["pb"], cfg["seed"] + 1), None),
        ]
        mc_graphs = [("complete_20", complete_graph(20))]
    elif kind == "complete":
        g = complete_graph(cfg["n"])
        graphs = [(f"complete_{cfg['n']}", g, None)]
        mc_graphs = [(f"complete_{cfg['n']}", g)]
    elif kind == "bridge":
        g = bridge_oracle_graph(cfg["n"], cfg["k"])
        graphs = [(f"bridge_{cfg['n']}_{cfg['k']}", g, (cfg["n"], cfg["k"]))]
        mc_graphs = [(f"bridge_{cfg['n']}_{cfg['k']}", g)]
    elif kind == "sbm":
        g = balanced_sbm(cfg["n"], cfg["pw"], cfg["pb"], cfg["seed"])
        graphs = [(f"sbm_{cfg['n']}", g, None)]
        mc_graphs = []
    else:
        if not cfg["file"]:
            raise click.UsageError("--graph file needs --file")
        g = _load_graph_checked(cfg["file"])
        graphs = [(cfg["file"], g, None)]
        mc_graphs = []

    report = _verify_graph_suite(graphs, mc_graphs, cfg["sigma"], cfg["p"],
                                 cfg["mc_reps"], cfg["seed"])
    text = json.dumps(report, indent=2)
    click.echo(text)
    if cfg["out"]:
        with open(cfg["out"], "w") as fh:
            fh.write(text + "\n")
    if not report["passed"]:
        raise VerificationFailure("one or more bound checks failed")


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(message)s")
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.UsageError as err:
        click.echo(f"error: {err.format_message()}", err=True)
        return EXIT_USAGE_IO
    except click.ClickException as err:
        err.show()
        return EXIT_USAGE_IO
    except click.exceptions.Abort:
        return EXIT_USAGE_IO
    except (FileNotFoundError, IsADirectoryError, PermissionError) as err:
        click.echo(f"error: {err}", err=True)
        return EXIT_USAGE_IO
    except (GraphValidationError, DisconnectedGraphError, BipartiteGraphError) as err:
        click.echo(f"error: {err}", err=True)
        return EXIT_INVALID_GRAPH
    except ConvergenceError as err:
        click.echo(f"error: {err}", err=True)
        return EXIT_SOLVER_FAILURE
    except VerificationFailure as err:
        click.echo(f"error: {err}", err=True)
        return EXIT_VERIFY_FAILED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
