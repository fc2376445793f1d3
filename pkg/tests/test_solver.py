import numpy as np
import pytest
from _helpers import random_connected_graph

from clusterpath.graph import (
    AffinityGraph,
    DisconnectedGraphError,
    bridge_oracle_graph,
    complete_graph,
    knn_graph,
)
from clusterpath.solver import (
    ClusterProblem,
    ConvergenceError,
    extract_clusters,
    fuse_rows,
    gamma_search,
    group_soft_threshold,
    objective,
    solve,
    solve_path,
)
from clusterpath.simulate import four_center_dataset, three_center_dataset

TWO_POINTS = np.array([[0.0], [1.0]])
EDGE2 = complete_graph(2)


class TestObjective:
    def test_at_data_is_penalty_only(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(8, 2))
        g = complete_graph(8)
        pen = objective(ClusterProblem(x, g, 1.0), x)
        assert objective(ClusterProblem(x, g, 2.5), x) == pytest.approx(2.5 * pen)

    def test_zero_gamma_at_data(self):
        x = np.random.default_rng(1).normal(size=(5, 3))
        assert objective(ClusterProblem(x, complete_graph(5), 0.0), x) == 0.0

    def test_grand_mean_rows(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=(6, 2))
        u = np.tile(x.mean(axis=0), (6, 1))
        val = objective(ClusterProblem(x, complete_graph(6), 3.0), u)
        assert val == pytest.approx(0.5 * ((x - x.mean(axis=0)) ** 2).sum())

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            objective(ClusterProblem(TWO_POINTS, EDGE2, 1.0), np.zeros((3, 1)))


class TestGroupSoftThreshold:
    def test_exact_zeros(self):
        z = np.array([[3.0, 4.0], [0.1, 0.0]])
        out = group_soft_threshold(z, 1.0)
        assert np.allclose(out[0], [3.0 * 0.8, 4.0 * 0.8])
        assert out[1, 0] == 0.0 and out[1, 1] == 0.0

    def test_zero_threshold_identity(self):
        z = np.array([[1.0, -2.0], [0.0, 0.0]])
        assert np.array_equal(group_soft_threshold(z, 0.0), z)


class TestSolve:
    def test_gamma_zero_exact(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(10, 2))
        g = complete_graph(10)
        res = solve(ClusterProblem(x, g, 0.0))
        assert np.array_equal(res.u_hat, x)
        assert res.kkt_residual == 0.0

    def test_two_point_closed_form(self):
        # u = (gamma, d - gamma) below the fusion threshold d/2
        d = 1.0
        for gamma in (0.1, 0.3, 0.45):
            res = solve(ClusterProblem(TWO_POINTS, EDGE2, gamma), tol=1e-10)
            assert np.allclose(res.u_hat.ravel(), [gamma, d - gamma], atol=1e-8)
        fused = solve(ClusterProblem(TWO_POINTS, EDGE2, 0.6), tol=1e-10)
        assert np.allclose(fused.u_hat.ravel(), [0.5, 0.5], atol=1e-8)
        assert np.all(fused.edge_diffs == 0.0)

    def test_full_fusion_hits_grand_mean(self):
        ds = four_center_dataset(0)
        g = knn_graph(ds.x, 10)
        gmax = gamma_search(ds.x, g)
        res = solve(ClusterProblem(ds.x, g, gmax), tol=1e-8)
        assert np.abs(res.u_hat - ds.x.mean(axis=0)).max() <= 1e-5

    def test_objective_beats_reference_points(self):
        rng = np.random.default_rng(4)
        x = rng.normal(size=(12, 2))
        g = knn_graph(x, 4)
        for gamma in (0.05, 0.5, 5.0):
            prob = ClusterProblem(x, g, gamma)
            res = solve(prob, tol=1e-8)
            mean_rows = np.tile(x.mean(axis=0), (12, 1))
            bound = min(objective(prob, x), objective(prob, mean_rows))
            assert objective(prob, res.u_hat) <= bound + 1e-6

    def test_kkt_subgradient_conditions(self):
        # converged duals: gamma * v/||v|| on active edges, norm <= gamma on fused
        rng = np.random.default_rng(5)
        x = rng.normal(size=(15, 2))
        g = knn_graph(x, 5)
        gamma = 0.4
        res = solve(ClusterProblem(x, g, gamma), tol=1e-8)
        norms = np.linalg.norm(res.edge_diffs, axis=1)
        for e in range(g.m):
            if norms[e] > 0:
                expected = gamma * res.edge_diffs[e] / norms[e]
                assert np.abs(res.dual[e] - expected).max() <= 1e-6
            else:
                assert np.linalg.norm(res.dual[e]) <= gamma * (1 + 1e-8)

    def test_convexity_regression(self):
        rng = np.random.default_rng(6)
        for _ in range(4):
            n = int(rng.integers(4, 9))
            x = rng.normal(size=(n, int(rng.integers(1, 3))))
            g = random_connected_graph(rng, n, weighted=True)
            prob = ClusterProblem(x, g, float(rng.uniform(0.05, 1.0)))
            res = solve(prob, tol=1e-9)
            base = objective(prob, res.u_hat)
            for _ in range(200):
                perturbed = res.u_hat + 1e-3 * rng.normal(size=x.shape)
                assert objective(prob, perturbed) >= base - 1e-9

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(7)
        x = rng.normal(size=(12, 2))
        g = knn_graph(x, 4)
        perm = rng.permutation(12)
        gp = AffinityGraph(12, [(perm[j], perm[k], w) for j, k, w in g.edges()])
        res = solve(ClusterProblem(x, g, 0.3), tol=1e-9)
        # old node i becomes node perm[i]: data rows move the same way
        res_p = solve(ClusterProblem(x[np.argsort(perm)], gp, 0.3), tol=1e-9)
        assert np.abs(res.u_hat - res_p.u_hat[perm]).max() <= 1e-8

    def test_weight_scaling_invariance(self):
        # scaling weights by c and gamma by 1/sqrt(c) keeps the objective,
        # hence the minimizer
        rng = np.random.default_rng(8)
        x = rng.normal(size=(10, 2))
        g = random_connected_graph(rng, 10, weighted=True)
        c = 4.0
        g_scaled = AffinityGraph(10, [(j, k, c * w) for j, k, w in g.edges()])
        res = solve(ClusterProblem(x, g, 0.5), tol=1e-9)
        res_s = solve(ClusterProblem(x, g_scaled, 0.5 / np.sqrt(c)), tol=1e-9)
        assert np.abs(res.u_hat - res_s.u_hat).max() <= 1e-6

    def test_backends_agree(self):
        rng = np.random.default_rng(9)
        x = rng.normal(size=(14, 2))
        g = knn_graph(x, 5)
        prob = ClusterProblem(x, g, 0.25)
        a = solve(prob, backend="numba", tol=1e-9)
        b = solve(prob, backend="numpy", tol=1e-9)
        assert np.abs(a.u_hat - b.u_hat).max() <= 1e-10
        assert a.n_iter == b.n_iter

    def test_nonconvergence_error_carries_residuals(self):
        x = np.random.default_rng(10).normal(size=(20, 2))
        g = complete_graph(20)
        with pytest.raises(ConvergenceError) as exc:
            solve(ClusterProblem(x, g, 0.05), max_iter=3)
        assert exc.value.primal is not None
        assert exc.value.iterations == 3

    def test_disconnected_rejected(self):
        g = AffinityGraph(4, [(0, 1, 1.0), (2, 3, 1.0)])
        with pytest.raises(DisconnectedGraphError):
            solve(ClusterProblem(np.zeros((4, 1)), g, 1.0))

    def test_gamma_negative_rejected(self):
        with pytest.raises(ValueError):
            ClusterProblem(TWO_POINTS, EDGE2, -1.0)


class TestExtractClusters:
    def test_all_fused(self):
        g = complete_graph(4)
        labels = extract_clusters(np.zeros((6, 2)), g)
        assert np.all(labels == 0)

    def test_none_fused(self):
        g = complete_graph(4)
        labels = extract_clusters(np.ones((6, 2)), g)
        assert list(labels) == [0, 1, 2, 3]

    def test_bridge_within_clique_zeros(self):
        g = bridge_oracle_graph(10, 3)
        diffs = np.ones((g.m, 2))
        for idx, (j, k, _) in enumerate(g.edges()):
            if (j < 5) == (k < 5):
                diffs[idx] = 0.0
        labels = extract_clusters(diffs, g)
        assert list(labels) == [0] * 5 + [1] * 5

    def test_label_order_is_first_occurrence(self):
        g = AffinityGraph(4, [(0, 1, 1.0), (2, 3, 1.0), (1, 2, 1.0)])
        diffs = np.array([[1.0], [0.0], [1.0]])  # only (2,3) fused
        assert list(extract_clusters(diffs, g)) == [0, 1, 2, 2]

    def test_fuse_rows_snaps_to_block_means(self):
        u = np.array([[1.0, 0.0], [3.0, 0.0], [5.0, 2.0]])
        labels = np.array([0, 0, 1])
        fused = fuse_rows(u, labels)
        assert np.allclose(fused, [[2.0, 0.0], [2.0, 0.0], [5.0, 2.0]])


class TestGammaSearch:
    def test_two_point_analytic(self):
        # fusion at gamma = d/2; the search brackets it within a relative
        # window of about 2^-bisect_steps
        found = gamma_search(TWO_POINTS, EDGE2)
        assert found >= 0.5 - 1e-9
        assert abs(found - 0.5) <= 0.5 * 2.0 / 2**10

    def test_identical_rows_return_floor(self):
        x = np.ones((4, 2))
        found = gamma_search(x, complete_graph(4))
        assert found == pytest.approx(1e-12)

    def test_found_gamma_fuses_and_half_does_not(self):
        ds = four_center_dataset(3)
        g = complete_graph(100)
        gmax = gamma_search(ds.x, g)
        res = solve(ClusterProblem(ds.x, g, gmax))
        assert len(np.unique(extract_clusters(res.edge_diffs, g))) == 1
        res_half = solve(ClusterProblem(ds.x, g, gmax / 2))
        assert len(np.unique(extract_clusters(res_half.edge_diffs, g))) > 1

    def test_disconnected_rejected(self):
        g = AffinityGraph(4, [(0, 1, 1.0), (2, 3, 1.0)])
        with pytest.raises(DisconnectedGraphError):
            gamma_search(np.zeros((4, 1)), g)


class TestSolvePath:
    def test_single_zero_gamma(self):
        rng = np.random.default_rng(11)
        x = rng.normal(size=(8, 2))
        g = complete_graph(8)
        path = solve_path(x, g, [0.0])
        assert len(path.points) == 1
        assert np.array_equal(path.points[0].u_hat, x)
        assert path.points[0].n_clusters == 8

    def test_objective_nondecreasing_along_path(self):
        # the optimal value is nondecreasing in gamma: the penalty is
        # nonnegative, so a larger gamma can only raise the minimum
        ds = four_center_dataset(2)
        g = knn_graph(ds.x, 15)
        path = solve_path(ds.x, g, search_tol=1e-4)
        objs = np.array([pt.objective for pt in path.points])
        assert np.all(np.diff(objs) >= -1e-7 * max(1.0, objs.max()))

    def test_warm_matches_cold(self):
        # the minimizer is unique (strongly convex), so warm and cold runs
        # must agree in centroids and objective; the discrete partition can
        # only differ through edges whose difference norm is numerically
        # borderline (a gamma sitting on a fusion event)
        ds = four_center_dataset(4)
        g = knn_graph(ds.x, 8)
        gmax = gamma_search(ds.x, g, tol=1e-4)
        gammas = np.geomspace(gmax / 100, gmax, 12)
        warm_path = solve_path(ds.x, g, gammas, tol=1e-8)
        for pt in warm_path.points:
            cold = solve(ClusterProblem(ds.x, g, pt.gamma), tol=1e-8)
            cold_labels = extract_clusters(cold.edge_diffs, g)
            assert np.abs(pt.u_hat - fuse_rows(cold.u_hat, cold_labels)).max() <= 1e-5
            cold_obj = objective(
                ClusterProblem(ds.x, g, pt.gamma), fuse_rows(cold.u_hat, cold_labels)
            )
            assert pt.objective == pytest.approx(cold_obj, abs=1e-6)
            if not np.array_equal(pt.partition, cold_labels):
                warm_same = pt.partition[g.tails] == pt.partition[g.heads]
                cold_same = cold_labels[g.tails] == cold_labels[g.heads]
                vnorms = np.linalg.norm(cold.edge_diffs, axis=1)
                assert vnorms[warm_same != cold_same].max() <= 1e-4

    def test_distinct_rows_equal_blocks(self):
        ds = four_center_dataset(5)
        g = knn_graph(ds.x, 12)
        path = solve_path(ds.x, g, num_points=15, search_tol=1e-4)
        for pt in path.points:
            assert len(np.unique(pt.u_hat, axis=0)) == pt.n_clusters
            assert pt.kkt_residual <= 1e-6

    def test_three_component_path_has_four_blocks(self):
        # sparse neighbor graph on the three-component draw passes through
        # a four-cluster solution on its way to full fusion
        ds = three_center_dataset(1)
        g = knn_graph(ds.x, 4)
        path = solve_path(ds.x, g, search_tol=1e-4)
        counts = [pt.n_clusters for pt in path.points]
        assert 4 in counts
        assert path.fused_at is not None

    def test_auto_grid_fuses_at_top(self):
        ds = four_center_dataset(6)
        g = knn_graph(ds.x, 20)
        path = solve_path(ds.x, g, search_tol=1e-4)
        assert path.points[-1].n_clusters == 1
        assert path.fused_at is not None

    def test_extend_to_fusion_on_explicit_grid(self):
        ds = four_center_dataset(7)
        g = knn_graph(ds.x, 20)
        path = solve_path(ds.x, g, [1e-3, 1e-2], extend_to_fusion=True, search_tol=1e-4)
        assert path.points[-1].n_clusters == 1

    def test_grid_must_ascend(self):
        with pytest.raises(ValueError):
            solve_path(TWO_POINTS, EDGE2, [1.0, 0.5])

    def test_error_names_offending_gamma(self):
        rng = np.random.default_rng(12)
        x = rng.normal(size=(20, 2))
        g = complete_graph(20)
        with pytest.raises(ConvergenceError, match="gamma="):
            solve_path(x, g, [0.05], max_iter=3)
