import numpy as np
import pytest
from _helpers import (
    mc_first_passage,
    random_connected_graph,
    random_connected_nonbipartite,
)

from clusterpath.graph import (
    AffinityGraph,
    DisconnectedGraphError,
    bridge_oracle_graph,
    complete_graph,
    incidence_apply,
)
from clusterpath.spectral import (
    BipartiteGraphError,
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

SINGLE_EDGE = AffinityGraph(2, [(0, 1, 1.0)])
PATH3 = AffinityGraph(3, [(0, 1, 1.0), (1, 2, 1.0)])


class TestLaplacianPinv:
    def test_single_edge_by_hand(self):
        # L = [[1,-1],[-1,1]] has eigenvalues {0, 2}, so pinv(L) = L / 4
        lp = laplacian_pinv(SINGLE_EDGE)
        assert np.allclose(lp, SINGLE_EDGE.laplacian / 4.0, atol=1e-12)

    def test_null_space(self):
        lp = laplacian_pinv(PATH3)
        assert np.abs(lp @ np.ones(3)).max() <= 1e-8

    def test_moore_penrose_identity(self):
        rng = np.random.default_rng(2)
        for _ in range(10):
            g = random_connected_graph(rng, int(rng.integers(3, 20)), weighted=True)
            lap = g.laplacian
            lp = laplacian_pinv(g)
            assert np.abs(lap @ lp @ lap - lap).max() <= 1e-8
            assert np.abs(lp @ lap @ lp - lp).max() <= 1e-8

    def test_eig_method_agrees(self):
        rng = np.random.default_rng(3)
        g = random_connected_graph(rng, 10, weighted=True)
        assert np.allclose(laplacian_pinv(g), laplacian_pinv(g, method="eig"), atol=1e-9)

    def test_disconnected_rejected(self):
        with pytest.raises(DisconnectedGraphError):
            laplacian_pinv(AffinityGraph(4, [(0, 1, 1.0), (2, 3, 1.0)]))

    def test_bridge_nonbridge_pair_plug_in(self):
        # squared column difference for a within-clique non-bridge pair is 8/n^2
        lp = laplacian_pinv(bridge_oracle_graph(10, 3))
        j, k = bridge_edge_representatives(10, 3)["within_nonbridge_pair"]
        v = lp[:, j] - lp[:, k]
        assert v @ v == pytest.approx(0.08, abs=1e-10)


class TestBridgeClosedForms:
    def test_all_edge_types_match_numerics(self):
        for n, k in [(10, 3), (12, 4), (8, 1), (8, 4), (20, 5)]:
            g = bridge_oracle_graph(n, k)
            lp = laplacian_pinv(g)
            forms = bridge_pinv_diff_closed_forms(n, k)
            reps = bridge_edge_representatives(n, k)
            assert set(forms) == set(reps)
            for etype, (j, kk) in reps.items():
                assert g.has_edge(j, kk), etype
                v = lp[:, j] - lp[:, kk]
                assert v @ v == pytest.approx(forms[etype], abs=1e-10), (n, k, etype)

    def test_bridge_edge_is_the_maximum(self):
        forms = bridge_pinv_diff_closed_forms(10, 3)
        assert forms["bridge"] == max(forms.values())

    def test_realizability_filtering(self):
        # k = n/2 leaves no non-bridge node, k = 1 no bridge pair
        assert "within_nonbridge_pair" not in bridge_pinv_diff_closed_forms(8, 4)
        assert "within_mixed_pair" not in bridge_pinv_diff_closed_forms(8, 4)
        assert "within_bridge_pair" not in bridge_pinv_diff_closed_forms(8, 1)


class TestFdaggerRow:
    def test_single_edge(self):
        b = spectral_bundle(SINGLE_EDGE)
        row = fdagger_row(SINGLE_EDGE, b, (0, 1))
        assert np.allclose(row, [0.5, -0.5], atol=1e-12)
        assert np.linalg.norm(row) == pytest.approx(np.sqrt(2) / 2, abs=1e-12)

    def test_complete_graph_row_norms(self):
        for n in (3, 10, 25):
            g = complete_graph(n)
            b = spectral_bundle(g)
            fd = fdagger_matrix(g, b)
            norms = np.linalg.norm(fd, axis=1)
            assert np.abs(norms - np.sqrt(2) / n).max() <= 1e-10

    def test_bridge_mixed_pair_value(self):
        # closed form at n=10, k=3 gives 14920/176400
        g = bridge_oracle_graph(10, 3)
        b = spectral_bundle(g)
        j, k = bridge_edge_representatives(10, 3)["within_mixed_pair"]
        row = fdagger_row(g, b, (j, k))
        expected = 14920.0 / 176400.0
        assert row @ row == pytest.approx(expected, abs=1e-10)
        assert expected == pytest.approx(
            bridge_pinv_diff_closed_forms(10, 3)["within_mixed_pair"], abs=1e-15
        )

    def test_entries_sum_to_zero(self):
        rng = np.random.default_rng(4)
        g = random_connected_graph(rng, 12, weighted=True)
        b = spectral_bundle(g)
        for j, k, _ in g.edges()[:5]:
            assert abs(fdagger_row(g, b, (j, k)).sum()) <= 1e-10

    def test_orientation_flips_sign_keeps_norm(self):
        rng = np.random.default_rng(5)
        g = random_connected_graph(rng, 9, weighted=True)
        b = spectral_bundle(g)
        j, k, _ = g.edges()[0]
        assert np.allclose(fdagger_row(g, b, (j, k)), -fdagger_row(g, b, (k, j)))

    def test_missing_edge(self):
        b = spectral_bundle(PATH3)
        with pytest.raises(KeyError):
            fdagger_row(PATH3, b, (0, 2))


class TestFdaggerMatrix:
    def test_complete3_equals_scaled_transpose(self):
        g = complete_graph(3)
        b = spectral_bundle(g)
        f = np.zeros((3, 3))  # n x |E|, unit weights
        for idx, (j, k, w) in enumerate(g.edges()):
            f[j, idx] = np.sqrt(w)
            f[k, idx] = -np.sqrt(w)
        assert np.allclose(fdagger_matrix(g, b), f.T / 3.0, atol=1e-12)

    def test_projection_complement(self):
        # F Fpinv is the projection complement I - J/n, and F' F Fpinv = F'
        rng = np.random.default_rng(6)
        for _ in range(5):
            g = random_connected_graph(rng, int(rng.integers(4, 15)), weighted=True)
            b = spectral_bundle(g)
            fd = fdagger_matrix(g, b)
            f_t = incidence_apply(g, np.eye(g.n))  # F', shape m x n
            proj = f_t.T @ fd
            target = np.eye(g.n) - np.ones((g.n, g.n)) / g.n
            assert np.abs(proj - target).max() <= 1e-8
            assert np.abs(f_t @ proj - f_t).max() <= 1e-8

    def test_star_rows_sum_zero(self):
        star = AffinityGraph(4, [(0, 1, 1.0), (0, 2, 1.0), (0, 3, 1.0)])
        fd = fdagger_matrix(star, spectral_bundle(star))
        assert np.abs(fd.sum(axis=1)).max() <= 1e-8

    def test_max_entry_bound_unweighted(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            n = int(rng.integers(4, 41))
            g = random_connected_graph(rng, n, p_edge=min(1.0, 3.0 / n + 0.15))
            fd = fdagger_matrix(g, spectral_bundle(g))
            assert np.abs(fd).max() <= 1.0 + 1e-8

    def test_null_space_projection_residual(self):
        # for connected graphs, I - Fpinv' F' projects onto the span of ones
        rng = np.random.default_rng(8)
        for _ in range(10):
            g = random_connected_graph(rng, int(rng.integers(3, 20)), weighted=True)
            b = spectral_bundle(g)
            fd = fdagger_matrix(g, b)
            u = rng.normal(size=(g.n, 3))
            recon = fd.T @ incidence_apply(g, u) + np.mean(u, axis=0, keepdims=True)
            assert np.abs(u - recon).max() <= 1e-8 * max(1.0, np.abs(u).max())


class TestHittingTimes:
    def test_single_edge(self):
        t = hitting_times(SINGLE_EDGE)
        assert t.hitting[0, 1] == pytest.approx(1.0)
        assert t.hitting[1, 0] == pytest.approx(1.0)
        assert t.commute[0, 1] == pytest.approx(2.0)
        assert np.all(np.diag(t.hitting) == 0.0)

    def test_path3_frozen_and_monte_carlo(self):
        # end-to-end hitting time on the 3-path: exact value 4, commute 8,
        # volume x resistance = 4 x 2; cross-checked by first-passage simulation
        t = hitting_times(PATH3)
        assert t.hitting[0, 2] == pytest.approx(4.0, abs=1e-10)
        assert t.commute[0, 2] == pytest.approx(8.0, abs=1e-10)
        b = spectral_bundle(PATH3)
        assert PATH3.volume * effective_resistance(b, 0, 2) == pytest.approx(8.0)
        rng = np.random.default_rng(0)
        est, se = mc_first_passage(PATH3, 0, 2, 1_000_000, rng)
        assert abs(est - 4.0) / 4.0 <= 0.01
        assert abs(est - t.hitting[0, 2]) <= 3 * se

    def test_monte_carlo_agreement_small_graphs(self):
        rng = np.random.default_rng(1)
        for _ in range(3):
            g = random_connected_graph(rng, int(rng.integers(4, 9)), weighted=True)
            t = hitting_times(g)
            i, j = 0, g.n - 1
            est, se = mc_first_passage(g, i, j, 100_000, rng)
            assert abs(est - t.hitting[i, j]) <= 3 * se

    def test_commute_identity_both_routes(self):
        # commute time equals volume x effective resistance, computed
        # independently (linear solves vs pseudoinverse quadratic form)
        rng = np.random.default_rng(2)
        for _ in range(20):
            g = random_connected_graph(rng, int(rng.integers(3, 18)), weighted=True)
            t = hitting_times(g)
            b = spectral_bundle(g)
            for j in range(g.n):
                for k in range(j + 1, g.n):
                    expected = g.volume * effective_resistance(b, j, k)
                    assert t.commute[j, k] == pytest.approx(expected, abs=1e-6)

    def test_commute_symmetric_nonnegative(self):
        rng = np.random.default_rng(3)
        g = random_connected_graph(rng, 10, weighted=True)
        t = hitting_times(g)
        assert np.allclose(t.commute, t.commute.T)
        assert t.hitting.min() >= 0.0

    def test_disconnected_rejected(self):
        with pytest.raises(DisconnectedGraphError):
            hitting_times(AffinityGraph(3, [(0, 1, 1.0)]))


class TestEffectiveResistance:
    def test_series_resistors(self):
        assert effective_resistance(spectral_bundle(SINGLE_EDGE), 0, 1) == pytest.approx(1.0)
        assert effective_resistance(spectral_bundle(PATH3), 0, 2) == pytest.approx(2.0)

    def test_complete_graph_value(self):
        for n in (4, 9):
            b = spectral_bundle(complete_graph(n))
            assert effective_resistance(b, 0, n - 1) == pytest.approx(2.0 / n, abs=1e-10)

    def test_adjacent_unweighted_at_most_one(self):
        rng = np.random.default_rng(4)
        g = random_connected_graph(rng, 12)
        b = spectral_bundle(g)
        fd = fdagger_matrix(g, b)
        for idx, (j, k, _) in enumerate(g.edges()):
            r = effective_resistance(b, j, k)
            assert 0.0 <= r <= 1.0 + 1e-10
            # the resistance is the spread of the pseudoinverse row at its edge
            assert fd[idx, j] - fd[idx, k] == pytest.approx(r, abs=1e-10)

    def test_same_node_rejected(self):
        with pytest.raises(ValueError):
            effective_resistance(spectral_bundle(PATH3), 1, 1)


class TestSpectralGap:
    def test_complete_graph_closed_form(self):
        # walk matrix of K_n has eigenvalues {1, -1/(n-1)}
        for n in (4, 10):
            assert spectral_gap(complete_graph(n)) == pytest.approx(1 + 1 / (n - 1), abs=1e-10)

    def test_single_edge_bipartite_gap_two(self):
        assert spectral_gap(SINGLE_EDGE) == pytest.approx(2.0, abs=1e-12)

    def test_against_dense_eigensolver(self):
        g = bridge_oracle_graph(10, 3)
        p = g.adjacency / g.degrees[:, None]
        lam2 = np.sort(np.linalg.eigvals(p).real)[-2]
        assert spectral_gap(g) == pytest.approx(1 - lam2, abs=1e-10)
        assert 0.0 < spectral_gap(g) <= 2.0

    def test_isolated_node_rejected(self):
        with pytest.raises(ValueError):
            spectral_gap(AffinityGraph(1, []))


class TestBundleInvariants:
    def test_fields(self):
        rng = np.random.default_rng(5)
        g = random_connected_nonbipartite(rng, 12, weighted=True)
        b = spectral_bundle(g)
        lap = b.laplacian
        assert np.abs(lap @ b.laplacian_pinv @ lap - lap).max() <= 1e-8
        assert np.abs(b.laplacian_pinv @ np.ones(g.n)).max() <= 1e-8
        assert 0.0 < b.spectral_gap <= 2.0
        assert b.volume == pytest.approx(g.degrees.sum())


class TestLuxburgBoundCheck:
    def test_complete_graph_no_violations(self):
        g = complete_graph(10)
        rep = luxburg_bound_check(g, hitting_times(g), spectral_bundle(g))
        assert rep.passed and rep.n_violations == 0
        assert rep.max_lhs <= rep.max_rhs
        assert rep.n_checked == 90

    def test_bridge_no_violations(self):
        g = bridge_oracle_graph(10, 3)
        rep = luxburg_bound_check(g, hitting_times(g), spectral_bundle(g))
        assert rep.passed
        assert rep.max_slack <= 0.0

    def test_bipartite_rejected(self):
        with pytest.raises(BipartiteGraphError, match="bipartite"):
            luxburg_bound_check(
                SINGLE_EDGE, hitting_times(SINGLE_EDGE), spectral_bundle(SINGLE_EDGE)
            )


class TestFdaggerEntryBoundsCheck:
    def test_complete_n6(self):
        g = complete_graph(6)
        rep = fdagger_entry_bounds_check(g, spectral_bundle(g), hitting_times(g))
        assert rep.passed

    def test_block_random_graph(self):
        from clusterpath.graph import SbmParams, is_bipartite, is_connected, sbm_graph

        labels = np.repeat([0, 1], 25)
        g = sbm_graph(SbmParams(n=50, p_w=0.5, p_b=0.1, seed=1), labels)
        assert is_connected(g) and not is_bipartite(g)
        rep = fdagger_entry_bounds_check(g, spectral_bundle(g), hitting_times(g))
        assert rep.passed

    def test_bridge_12_4(self):
        g = bridge_oracle_graph(12, 4)
        rep = fdagger_entry_bounds_check(g, spectral_bundle(g), hitting_times(g))
        assert rep.passed

    def test_bipartite_rejected(self):
        with pytest.raises(BipartiteGraphError):
            fdagger_entry_bounds_check(
                PATH3, spectral_bundle(PATH3), hitting_times(PATH3)
            )


class TestCommuteTimeForm:
    def test_row_from_commute_times(self):
        # pseudoinverse rows from the commute matrix: sqrt(w)/(2 vol) times
        # the centered column difference
        rng = np.random.default_rng(6)
        for _ in range(10):
            g = random_connected_graph(rng, int(rng.integers(4, 16)), weighted=True)
            b = spectral_bundle(g)
            t = hitting_times(g)
            proj = np.eye(g.n) - np.ones((g.n, g.n)) / g.n
            fd = fdagger_matrix(g, b)
            for idx, (j, k, w) in enumerate(g.edges()):
                alt = np.sqrt(w) / (2 * g.volume) * proj @ (t.commute[:, k] - t.commute[:, j])
                assert np.abs(fd[idx] - alt).max() <= 1e-6
