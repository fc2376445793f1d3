"""Weighted convex clustering with affinity-graph diagnostics."""

from .analysis import (
    DiagnosticsReport,
    MixtureSpec,
    ari,
    between_cluster_edges,
    crude_bound_rhs,
    diagnostics_report,
    fdagger_e_max,
    gamma_threshold,
    mse,
    oracle_term,
    penalty_sum,
    theorem_bound_rhs,
)
from .graph import (
    AffinityGraph,
    DegreeInfo,
    DisconnectedGraphError,
    GraphValidationError,
    SbmParams,
    bridge_oracle_graph,
    complete_graph,
    degree_info,
    epsilon_graph,
    gaussian_weights,
    incidence_adjoint_apply,
    incidence_apply,
    is_bipartite,
    is_connected,
    knn_graph,
    sbm_graph,
)
from .simulate import (
    Dataset,
    ExperimentResult,
    PathConfig,
    TrialRecord,
    four_center_dataset,
    generate_mixture,
    heatmap_bins,
    monte_carlo_fdagger_concentration,
    run_knn_trials,
    run_sbm_trials,
    three_center_dataset,
)
from .solver import (
    ClusterProblem,
    ConvergenceError,
    PathPoint,
    PathSolution,
    SolveResult,
    extract_clusters,
    fuse_rows,
    gamma_search,
    objective,
    solve,
    solve_path,
)
from .spectral import (
    BipartiteGraphError,
    BoundCheckReport,
    SpectralBundle,
    WalkTimes,
    bridge_edge_representatives,
    bridge_pinv_diff_closed_forms,
    effective_resistance,
    fdagger_entry_bounds_check,
    fdagger_matrix,
    fdagger_row,
    hitting_times,
    laplacian_pinv,
    luxburg_bound_check,
    spectral_bundle,
    spectral_gap,
)

__version__ = "0.1.0"
