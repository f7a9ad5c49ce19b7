import numpy as np
import pytest

from ggmedge.graphs import build_precision, identity_graph, make_model, sample_mvn
from ggmedge.inference import (
    DegenerateJacobian,
    EdgeTest,
    FoldTooSmall,
    NuisancePair,
    UnequalFolds,
    cross_fit_inference,
    fit_nuisance,
    normalize_edges,
    score,
    score_parts,
    solve_theta,
)
from ggmedge.inference import test_edges as run_edge_test
from ggmedge.lasso import PenaltyConfig, penalty_level
from ggmedge.rng import stream


def random_pair(rng, p):
    return NuisancePair(eta1=rng.standard_normal(p - 2), eta2=rng.standard_normal(p - 2))


class TestEdgeNormalization:
    def test_orients_and_validates(self):
        assert normalize_edges([(1, 4), (5, 2)], p=5) == [(4, 1), (5, 2)]

    def test_self_loop(self):
        with pytest.raises(ValueError, match="self-loop"):
            normalize_edges([(3, 3)], p=5)

    def test_out_of_range(self):
        with pytest.raises(ValueError, match="p=4"):
            normalize_edges([(5, 1)], p=4)
        with pytest.raises(ValueError, match="below 1"):
            normalize_edges([(2, 0)], p=4)


class TestScore:
    def test_collapses_to_product(self):
        x = np.array([1.5, -2.0, 0.7, 3.0])
        eta = NuisancePair(eta1=np.zeros(2), eta2=np.zeros(2))
        assert score(x, (4, 2), 0.0, eta) == pytest.approx(x[3] * x[1])

    def test_vanishing_second_factor(self):
        # X_k - eta2 @ X_rest == 0 forces the score to zero for any theta
        x = np.array([2.0, 1.0, 3.0])
        eta = NuisancePair(eta1=np.array([0.5]), eta2=np.array([2.0 / 3.0]))
        for theta in (-2.0, 0.0, 5.0):
            assert score(x, (2, 1), theta, eta) == pytest.approx(0.0, abs=1e-14)

    def test_linearity_in_theta(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            p = rng.integers(3, 8)
            x = rng.standard_normal(p)
            j = int(rng.integers(2, p + 1))
            k = int(rng.integers(1, j))
            eta = random_pair(rng, p)
            theta = rng.standard_normal()
            a, b = score_parts(x, (j, k), eta)
            assert score(x, (j, k), theta, eta) == pytest.approx(a * theta + b, rel=1e-12, abs=1e-12)

    def test_psi_a_without_eta2(self):
        x = np.array([0.3, -1.2, 2.5])
        eta = NuisancePair(eta1=np.array([0.4]), eta2=np.zeros(1))
        a, _ = score_parts(x, (3, 2), eta)
        assert a == pytest.approx(-x[1] ** 2)

    def test_batch_evaluation(self):
        rng = np.random.default_rng(1)
        X = rng.standard_normal((40, 5))
        eta = random_pair(rng, 5)
        batched = score(X, (5, 3), 0.7, eta)
        rows = [score(X[i], (5, 3), 0.7, eta) for i in range(40)]
        assert batched == pytest.approx(np.array(rows))


class TestSolveTheta:
    def test_proportional_columns(self):
        rng = np.random.default_rng(2)
        X = rng.standard_normal((50, 3))
        X[:, 2] = 2.5 * X[:, 0]  # X_3 = 2.5 * X_1 exactly
        eta = NuisancePair(eta1=np.zeros(1), eta2=np.zeros(1))
        stat = solve_theta(X, (3, 1), eta)
        assert stat.theta_hat == pytest.approx(2.5, abs=1e-10)

    def test_mean_psi_a_equals_jacobian(self):
        rng = np.random.default_rng(3)
        X = rng.standard_normal((60, 6))
        eta = random_pair(rng, 6)
        stat = solve_theta(X, (6, 2), eta)
        psi_a, _ = score_parts(X, (6, 2), eta)
        assert stat.jacobian_hat == pytest.approx(np.mean(psi_a), rel=1e-12)

    def test_moment_equation_exact(self):
        rng = np.random.default_rng(4)
        for _ in range(10):
            X = rng.standard_normal((80, 5))
            eta = random_pair(rng, 5)
            stat = solve_theta(X, (4, 1), eta)
            psi = score(X, (4, 1), stat.theta_hat, eta)
            assert abs(np.mean(psi)) < 1e-10

    def test_scores_standardized(self):
        rng = np.random.default_rng(5)
        X = rng.standard_normal((70, 4))
        stat = solve_theta(X, (3, 2), random_pair(rng, 4))
        assert np.mean(stat.psi_std**2) == pytest.approx(1.0, abs=1e-8)
        assert abs(np.mean(stat.psi_std)) < 1e-8 * np.sqrt(70)
        assert stat.sigma_hat > 0

    def test_frisch_waugh_equivalence(self):
        # with OLS nuisances, theta equals the full-regression OLS coefficient
        rng = np.random.default_rng(6)
        X = rng.standard_normal((100, 5)) @ rng.standard_normal((5, 5))
        pair = fit_nuisance(X, (4, 2), solver="ols")
        stat = solve_theta(X, (4, 2), pair)
        design = np.delete(X, 3, axis=1)
        full = np.linalg.lstsq(design, X[:, 3], rcond=None)[0]
        assert stat.theta_hat == pytest.approx(full[1], abs=1e-8)
        assert pair.theta_init == pytest.approx(full[1], abs=1e-8)

    def test_population_value_large_n(self):
        # 2x2 exchange design extended with an independent third variable
        adj = np.zeros((3, 3))
        adj[0, 1] = adj[1, 0] = 1.0
        model = build_precision(adj)
        expected = -model.phi[1, 0] / model.phi[1, 1]
        assert expected == pytest.approx(-0.6, abs=1e-12)
        X = sample_mvn(model, 200_000, stream(30))
        pair = fit_nuisance(X, (2, 1), solver="ols")
        stat = solve_theta(X, (2, 1), pair)
        assert stat.theta_hat == pytest.approx(expected, abs=0.01)

    def test_degenerate_jacobian(self):
        rng = np.random.default_rng(7)
        X = rng.standard_normal((40, 4))
        X[:, 1] = X[:, 2]  # X_k lies in the span of the remaining variables
        pair = NuisancePair(eta1=np.zeros(2), eta2=np.array([0.0, 1.0]))
        with pytest.raises(DegenerateJacobian):
            solve_theta(X, (4, 2), pair)


class TestFitNuisance:
    def test_identity_design_shrinks_to_zero(self):
        X = sample_mvn(identity_graph(10), 2000, stream(31))
        pair = fit_nuisance(X, (10, 1), cfg=PenaltyConfig(d_total=9))
        assert np.abs(pair.eta1).max() < 0.1
        assert np.abs(pair.eta2).max() < 0.1

    def test_p3_matches_scalar_oracle(self):
        # with p=3 the second regression has one regressor; replicate the
        # loading iteration with scalar soft-threshold arithmetic
        model = make_model("random", 3, stream(32), prob=0.9)
        X = sample_mvn(model, 200, stream(33))
        cfg = PenaltyConfig(d_total=1)
        pair = fit_nuisance(X, (3, 2), cfg=cfg)

        y, x = X[:, 1], X[:, 0]  # regression of X_2 on X_1
        n = 200
        lam = penalty_level(n, 1, 1, cfg)

        def scalar_fit(load):
            rho = np.mean(y * x)
            thr = lam / n * load
            return np.sign(rho) * max(abs(rho) - thr, 0.0) / np.mean(x * x)

        load = np.abs(x).max() * np.sqrt(np.mean(y**2))
        beta = scalar_fit(load)
        for _ in range(cfg.m_iterations):
            load = max(np.sqrt(np.mean(((y - beta * x) * x) ** 2)), 1e-12)
            beta = scalar_fit(load)
        assert pair.eta2[0] == pytest.approx(beta, abs=1e-7)

    def test_post_lasso_recovers_coefficients(self):
        # on an exact-sparse design the refit lands near the true coefficients
        hits = 0
        for seed in range(10):
            model = make_model("random", 10, stream(34, seed))
            X = sample_mvn(model, 2000, stream(35, seed))
            # edge (2, 1): eta1 are X_2's regression coefficients on X_3..X_10
            truth = -model.phi[1, 2:] / model.phi[1, 1]
            pair = fit_nuisance(X, (2, 1), cfg=PenaltyConfig(d_total=1), solver="post_lasso")
            err = np.abs(pair.eta1 - truth).max()
            hits += err < 0.1
        assert hits >= 9

    def test_needs_three_variables(self):
        with pytest.raises(ValueError):
            fit_nuisance(np.ones((10, 2)), (2, 1))


class TestEdgeTest:
    def test_identity_design_accepts(self):
        X = sample_mvn(identity_graph(5), 200, stream(36))
        edges = [(j, k) for k in range(1, 5) for j in range(k + 1, 6)]
        fitted = EdgeTest(edges=edges, n_boot=300, random_state=1).fit(X)
        assert len(fitted.edges_) == 10
        assert fitted.intervals_.shape == (10, 2)
        assert np.all(fitted.intervals_[:, 0] <= fitted.theta_)
        assert np.all(fitted.theta_ <= fitted.intervals_[:, 1])

    def test_single_edge_t_statistic(self):
        # d=1 bootstrap critical value is near the normal quantile 1.96
        X = sample_mvn(identity_graph(4), 500, stream(37))
        fitted = EdgeTest(edges=[(2, 1)], n_boot=5000, random_state=2).fit(X)
        assert 1.8 < fitted.critical_value_ < 2.15

    def test_interval_decision_coherence(self):
        rejected = 0
        for seed in range(20):
            X = sample_mvn(identity_graph(4), 120, stream(38, seed))
            fitted = EdgeTest(
                edges=[(2, 1), (3, 1), (4, 3)], n_boot=300, random_state=seed
            ).fit(X)
            excludes_zero = (fitted.intervals_[:, 0] > 0) | (fitted.intervals_[:, 1] < 0)
            assert fitted.reject_ == bool(excludes_zero.any())
            rejected += fitted.reject_

    def test_detects_strong_edge(self):
        model = make_model("cluster", 8, stream(39, 5))
        X = sample_mvn(model, 400, stream(40))
        j, k = sorted(model.true_edges, key=lambda e: -abs(model.phi[e[0] - 1, e[1] - 1]))[0]
        fitted = EdgeTest(edges=[(j, k)], n_boot=500, random_state=3).fit(X)
        assert fitted.reject_

    def test_bootstrap_deterministic(self):
        X = sample_mvn(identity_graph(5), 150, stream(41))
        kwargs = dict(edges=[(2, 1), (5, 4)], n_boot=400, random_state=11)
        a = EdgeTest(**kwargs).fit(X)
        b = EdgeTest(**kwargs).fit(X)
        assert np.array_equal(a.boot_draws_, b.boot_draws_)
        assert a.critical_value_ == b.critical_value_

    def test_error_names_edge(self):
        from ggmedge.linalg import RankDeficient

        rng = np.random.default_rng(8)
        X = rng.standard_normal((50, 4))
        X[:, 0] = X[:, 1]  # X_1 duplicates X_2: every OLS design is singular
        with pytest.raises(RankDeficient, match="3:1"):
            EdgeTest(edges=[(3, 1)], solver="ols", n_boot=300, random_state=0).fit(X)

    def test_report_schema(self):
        X = sample_mvn(identity_graph(4), 100, stream(42))
        fitted = EdgeTest(edges=[(2, 1)], n_boot=300, random_state=4).fit(X)
        report = fitted.report()
        assert report["schema"] == 1
        assert report["config"]["n_boot"] == 300
        assert report["d"] == 1
        assert report["region"]["kind"] == "rectangle"
        assert report["reject"] == fitted.reject_
        import json

        json.dumps(report)  # round-trips to JSON

    def test_solver_validation(self):
        X = sample_mvn(identity_graph(4), 60, stream(43))
        with pytest.raises(ValueError, match="solver"):
            EdgeTest(edges=[(2, 1)], solver="ridge", n_boot=300).fit(X)


class TestCrossFitting:
    def test_k1_matches_plain(self):
        X = sample_mvn(make_model("random", 8, stream(44)), 120, stream(45))
        edges = [(8, k) for k in range(1, 8)]
        plain = run_edge_test(X, edges, n_boot=300, random_state=9)
        k1 = cross_fit_inference(X, edges, n_folds=1, n_boot=300, random_state=9)
        assert np.array_equal(plain.theta_, k1.theta_)
        assert np.array_equal(plain.sigma_, k1.sigma_)
        assert np.array_equal(plain.boot_draws_, k1.boot_draws_)

    def test_k3_runs_and_standardizes(self):
        X = sample_mvn(make_model("random", 10, stream(46)), 210, stream(47))
        edges = [(10, k) for k in range(1, 10)]
        fitted = cross_fit_inference(X, edges, n_folds=3, n_boot=300, random_state=10)
        assert fitted.fold_sizes_ == [70, 70, 70]
        assert np.mean(fitted.scores_**2, axis=0) == pytest.approx(
            np.ones(9), abs=1e-8
        )
        assert abs(fitted.theta_).max() < 0.5  # null edges stay small

    def test_permutation_invariance_plain(self):
        X = sample_mvn(make_model("cluster", 8, stream(48)), 96, stream(49))
        perm = stream(50).permutation(96)
        a = run_edge_test(X, [(5, 1)], n_boot=300, random_state=12)
        b = run_edge_test(X[perm], [(5, 1)], n_boot=300, random_state=12)
        assert a.theta_[0] == pytest.approx(b.theta_[0], rel=1e-12)
        assert a.sigma_[0] == pytest.approx(b.sigma_[0], rel=1e-12)

    def test_unequal_folds_flagged(self):
        X = sample_mvn(identity_graph(4), 100, stream(51))
        with pytest.warns(UnequalFolds):
            cross_fit_inference(X, [(2, 1)], n_folds=3, n_boot=300, random_state=13)

    def test_small_fold_warns(self):
        X = sample_mvn(identity_graph(12), 30, stream(52))
        with pytest.warns(FoldTooSmall):
            cross_fit_inference(X, [(2, 1)], n_folds=3, n_boot=300, random_state=14)

    def test_cross_fit_seed_reproducible(self):
        X = sample_mvn(make_model("random", 6, stream(53)), 90, stream(54))
        a = cross_fit_inference(X, [(6, 1)], n_folds=3, n_boot=300, random_state=15)
        b = cross_fit_inference(X, [(6, 1)], n_folds=3, n_boot=300, random_state=15)
        assert np.array_equal(a.theta_, b.theta_)
        assert np.array_equal(a.boot_draws_, b.boot_draws_)
