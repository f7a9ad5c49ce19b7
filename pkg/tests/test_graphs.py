import numpy as np
import pytest

from ggmedge.graphs import (
    InvalidPartition,
    InvalidProb,
    approx_graph,
    build_precision,
    cluster_graph,
    identity_graph,
    make_model,
    random_graph,
    sample_mvn,
)
from ggmedge.rng import stream


def edge_count(adj):
    return int(np.count_nonzero(np.triu(adj, 1)))


class TestRandomGraph:
    def test_expected_edge_count(self):
        # about (p-1)(p-2)*prob/2 = 42.75 edges for p=20, prob=1/4
        counts = [edge_count(random_graph(20, 0.25, stream(0, i))) for i in range(400)]
        assert np.mean(counts) == pytest.approx(42.75, abs=2.0)

    def test_zero_prob(self):
        assert not random_graph(12, 0.0, stream(1)).any()

    def test_forced_single_edge(self):
        adj = random_graph(3, 1.0, stream(2))
        assert adj[0, 1] == adj[1, 0] == 1.0
        assert adj[2].sum() == 0 and adj[:, 2].sum() == 0

    def test_last_variable_isolated(self):
        adj = random_graph(15, 0.5, stream(3))
        assert not adj[-1].any() and not adj[:, -1].any()

    def test_invalid_prob(self):
        with pytest.raises(InvalidProb):
            random_graph(5, 1.5, stream(0))


class TestClusterGraph:
    def test_expected_edge_count(self):
        # about g*(p/g)*(p/g-1)*prob/2 = 22.5 edges for p=40, g=4, prob=1/8
        counts = [
            edge_count(cluster_graph(40, 4, 0.125, stream(4, i))) for i in range(400)
        ]
        assert np.mean(counts) == pytest.approx(22.5, abs=1.5)

    def test_block_structure(self):
        adj = cluster_graph(20, 4, 0.9, stream(5))
        for i in range(20):
            for j in range(20):
                if adj[i, j] and i != j:
                    assert i // 5 == j // 5

    def test_zero_prob(self):
        assert not cluster_graph(8, 4, 0.0, stream(6)).any()

    def test_singleton_groups(self):
        assert not cluster_graph(4, 4, 1.0, stream(7)).any()

    def test_invalid_partition(self):
        with pytest.raises(InvalidPartition):
            cluster_graph(10, 4, 0.1, stream(8))


class TestApproxGraph:
    def test_degenerate_uniform_matches_random(self):
        a0 = random_graph(10, 0.3, stream(9, 0))
        a1 = approx_graph(10, 0.3, 0.0, stream(9, 0))
        assert np.array_equal(a0, a1)

    def test_noise_bounds(self):
        adj = approx_graph(30, 5 / 30, 1 / 20, stream(10))
        off_pattern = adj[(adj != 0) & (adj != 1)]
        assert off_pattern.size > 0
        assert np.all(np.abs(off_pattern) <= 0.05)

    def test_three_noise_pairs_symmetric(self):
        # prob=0 leaves no pattern; the leading 3-block has 3 perturbed pairs
        adj = approx_graph(4, 0.0, 0.05, stream(11))
        upper = adj[np.triu_indices(3, 1)]
        assert upper.size == 3
        assert np.all(np.abs(upper) <= 0.05) and np.all(upper != 0)
        assert np.array_equal(adj, adj.T)

    def test_last_variable_stays_isolated(self):
        adj = approx_graph(12, 0.4, 0.05, stream(12))
        assert not adj[-1].any() and not adj[:, -1].any()


class TestBuildPrecision:
    def test_zero_adjacency_gives_identity(self):
        model = build_precision(np.zeros((4, 4)), v=0.3, u=0.1)
        assert np.allclose(model.sigma, np.eye(4), atol=1e-12)
        assert np.allclose(model.phi, np.eye(4), atol=1e-12)
        assert model.true_edges == frozenset()

    def test_two_by_two_exchange(self):
        model = build_precision(np.array([[0.0, 1.0], [1.0, 0.0]]), v=0.3, u=0.1)
        assert model.sigma == pytest.approx(
            np.array([[1.0, -0.6], [-0.6, 1.0]]), abs=1e-12
        )
        assert model.phi == pytest.approx(
            np.array([[1.5625, 0.9375], [0.9375, 1.5625]]), abs=1e-12
        )
        assert model.true_edges == frozenset({(2, 1)})

    def test_inverse_and_unit_diagonal(self):
        for i in range(30):
            rng = stream(13, i)
            adj = random_graph(15, 0.3, rng)
            model = build_precision(adj)
            assert abs(model.phi @ model.sigma - np.eye(15)).max() < 1e-8
            assert abs(np.diag(model.sigma) - 1.0).max() < 1e-10

    def test_population_regression_recovers_theta(self):
        # regression of X_j on the rest, computed from sigma, matches -phi_jk/phi_jj
        rng = stream(14)
        model = build_precision(random_graph(10, 0.4, rng))
        for j in range(10):
            others = [i for i in range(10) if i != j]
            beta = np.linalg.solve(
                model.sigma[np.ix_(others, others)], model.sigma[others, j]
            )
            expected = -model.phi[j, others] / model.phi[j, j]
            assert beta == pytest.approx(expected, abs=1e-8)

    def test_random_design_isolates_last_variable(self):
        model = make_model("random", 20, stream(15))
        assert np.abs(model.phi[-1, :-1]).max() < 1e-10
        assert all(j != 20 and k != 20 for j, k in model.true_edges)

    def test_shift_keeps_pre_precision_positive(self):
        # the diagonal shift forces min_eig(phi_pre) >= 0.1 + u
        from ggmedge.linalg import min_eigenvalue

        v, u = 0.3, 0.1
        for i in range(20):
            adj = random_graph(12, 0.5, stream(99, i))
            shifted = v * adj
            phi_pre = shifted + (
                abs(min_eigenvalue(shifted)) + 0.1 + u
            ) * np.eye(12)
            assert min_eigenvalue(phi_pre) >= 0.1 + u - 1e-9


class TestIdentityGraph:
    def test_sigma_identity(self):
        model = identity_graph(5)
        assert np.array_equal(model.sigma, np.eye(5))
        assert np.array_equal(model.phi, np.eye(5))
        assert model.true_edges == frozenset()

    def test_p2(self):
        assert np.array_equal(identity_graph(2).phi, np.eye(2))

    def test_sample_correlations_shrink(self):
        model = identity_graph(6)
        errs = []
        for n in (200, 3200):
            X = sample_mvn(model, n, stream(16, n))
            corr = np.corrcoef(X, rowvar=False)
            errs.append(np.abs(corr - np.eye(6)).max())
        assert errs[1] < errs[0]
        assert errs[1] < 6 / np.sqrt(3200)


class TestSampleMvn:
    def test_identity_sample_covariance(self):
        X = sample_mvn(identity_graph(4), 20_000, stream(17))
        cov = X.T @ X / 20_000
        assert np.abs(cov - np.eye(4)).max() < 4 / np.sqrt(20_000)

    def test_correlated_pair_monte_carlo(self):
        model = build_precision(np.array([[0.0, 1.0], [1.0, 0.0]]))
        X = sample_mvn(model, 100_000, stream(18))
        corr = np.corrcoef(X, rowvar=False)[0, 1]
        assert corr == pytest.approx(-0.6, abs=0.01)

    def test_bit_reproducible(self):
        model = make_model("cluster", 8, stream(19))
        a = sample_mvn(model, 50, stream(20, 1))
        b = sample_mvn(model, 50, stream(20, 1))
        assert np.array_equal(a, b)

    def test_min_sample_guard(self):
        with pytest.raises(ValueError):
            sample_mvn(identity_graph(3), 1, stream(21))
