"""Simplex-constrained solvers, moment estimation, and selection rules."""

from itertools import combinations

import cvxpy as cp
import numpy as np
import pytest

from topofolio.portfolio import (
    MomentEstimates,
    Portfolio,
    estimate_moments,
    portfolio_from_csv,
    portfolio_to_csv,
    select_max_similarity,
    solve_gmv,
    solve_index_tracking,
    solve_it_cardinality,
    solve_mv,
    tracking_error_variance,
)
from topofolio.portfolio import _kkt_residual
from topofolio.similarity import SimilarityMatrix


def ids(n):
    return [str(i) for i in range(n)]


def cvx_objective(Q, c):
    w = cp.Variable(Q.shape[0])
    problem = cp.Problem(
        cp.Minimize(0.5 * cp.quad_form(w, cp.psd_wrap(Q)) + c @ w),
        [cp.sum(w) == 1, w >= 0],
    )
    problem.solve(solver=cp.CLARABEL)
    return float(problem.value)


def brute_force_support(R, r0, k):
    best = np.inf
    for support in combinations(range(R.shape[1]), k):
        sub = R[:, list(support)]
        w = solve_index_tracking(sub, r0).as_vector(ids(k))
        best = min(best, tracking_error_variance(sub, r0, w))
    return best


class TestPortfolioType:
    def test_dust_clipped(self):
        p = Portfolio(weights={"A": 1.0, "B": -5e-11})
        assert p.weights == {"A": 1.0}
        assert p.n_active == 1

    def test_negative_rejected(self):
        with pytest.raises(ValueError, match="negative weight"):
            Portfolio(weights={"A": 1.0, "B": -1e-9})

    def test_sum_enforced(self):
        with pytest.raises(ValueError, match="sum"):
            Portfolio(weights={"A": 0.6, "B": 0.3})

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError, match="finite"):
            Portfolio(weights={"A": float("nan"), "B": 1.0})

    def test_lookup_and_vector(self):
        p = Portfolio(weights={"X": 0.25, "Y": 0.75})
        assert p.weight("X") == 0.25
        assert p.weight("missing") == 0.0
        assert np.array_equal(p.as_vector(["Y", "missing", "X"]), [0.75, 0.0, 0.25])

    def test_zero_weights_dropped(self):
        p = Portfolio(weights={"A": 1.0, "B": 0.0})
        assert "B" not in p.weights


class TestMoments:
    def test_constant_returns_zero_covariance(self):
        R = np.full((5, 2), 0.1)
        est = estimate_moments(R)
        assert np.array_equal(est.Sigma, np.zeros((2, 2)))
        assert np.array_equal(est.mu, [0.1, 0.1])

    def test_two_point_single_asset(self):
        est = estimate_moments(np.array([[0.0], [0.2]]))
        assert est.mu[0] == pytest.approx(0.1)
        assert est.Sigma[0, 0] == pytest.approx(0.02)

    def test_hand_computed_covariance(self):
        # dyadic returns keep every intermediate exact
        R = np.array([[0.25, 0.75], [0.5, 0.25], [0.75, 0.5]])
        est = estimate_moments(R)
        assert np.array_equal(est.mu, [0.5, 0.5])
        assert np.array_equal(
            est.Sigma, [[0.0625, -0.03125], [-0.03125, 0.0625]]
        )

    def test_too_few_rows(self):
        with pytest.raises(ValueError, match="2 observations"):
            estimate_moments(np.array([[0.1, 0.2]]))

    def test_no_assets(self):
        with pytest.raises(ValueError, match="asset"):
            estimate_moments(np.empty((5, 0)))

    def test_type_validation(self):
        with pytest.raises(ValueError, match="symmetric"):
            MomentEstimates(mu=np.zeros(2), Sigma=np.array([[1.0, 0.5], [0.1, 1.0]]))
        with pytest.raises(ValueError, match="diagonal"):
            MomentEstimates(mu=np.zeros(2), Sigma=np.array([[-1.0, 0.0], [0.0, 1.0]]))
        with pytest.raises(ValueError, match="entries"):
            MomentEstimates(mu=np.zeros(3), Sigma=np.eye(2))


class TestSolveMv:
    def test_symmetric_instance_equal_weights(self):
        est = MomentEstimates(mu=np.ones(2), Sigma=np.eye(2))
        assert solve_mv(est).as_vector(ids(2)) == pytest.approx([0.5, 0.5], abs=1e-12)

    def test_vertex_solution(self):
        est = MomentEstimates(mu=np.array([10.0, 0.0]), Sigma=np.eye(2))
        assert solve_mv(est).as_vector(ids(2)) == pytest.approx([1.0, 0.0], abs=1e-12)

    def test_interior_solution(self):
        est = MomentEstimates(mu=np.array([0.5, 0.0]), Sigma=np.eye(2))
        assert solve_mv(est).as_vector(ids(2)) == pytest.approx(
            [0.75, 0.25], abs=1e-12
        )

    def test_gamma_validation(self):
        est = MomentEstimates(mu=np.zeros(2), Sigma=np.eye(2))
        for gamma in (0.0, -1.0, float("inf"), float("nan")):
            with pytest.raises(ValueError, match="gamma"):
                solve_mv(est, gamma=gamma)

    def test_large_gamma_approaches_gmv(self):
        rng = np.random.default_rng(3)
        est = estimate_moments(0.02 * rng.standard_normal((30, 5)))
        heavy = solve_mv(est, gamma=1e6).as_vector(ids(5))
        gmv = solve_gmv(est).as_vector(ids(5))
        assert np.abs(heavy - gmv).max() < 1e-4

    def test_indefinite_sigma_ridged(self):
        # symmetric with a negative eigenvalue: the ridge rescues the solve,
        # though the ridged problem is near-singular so the minimizer is only
        # pinned down loosely along the null direction
        est = MomentEstimates(mu=np.zeros(2), Sigma=np.array([[1.0, 2.0], [2.0, 1.0]]))
        assert solve_mv(est).as_vector(ids(2)) == pytest.approx([0.5, 0.5], abs=1e-4)

    def test_custom_asset_ids(self):
        est = MomentEstimates(mu=np.array([0.5, 0.0]), Sigma=np.eye(2))
        p = solve_mv(est, asset_ids=("AAA", "BBB"))
        assert set(p.weights) == {"AAA", "BBB"}


class TestSolveGmv:
    def test_diagonal_two_assets(self):
        est = MomentEstimates(mu=np.zeros(2), Sigma=np.diag([1.0, 4.0]))
        assert solve_gmv(est).as_vector(ids(2)) == pytest.approx([0.8, 0.2], abs=1e-12)

    def test_identity_equal_weights(self):
        est = MomentEstimates(mu=np.zeros(3), Sigma=np.eye(3))
        assert solve_gmv(est).as_vector(ids(3)) == pytest.approx(
            [1 / 3] * 3, abs=1e-12
        )

    def test_diagonal_three_assets(self):
        est = MomentEstimates(mu=np.zeros(3), Sigma=np.diag([1.0, 1.0, 2.0]))
        assert solve_gmv(est).as_vector(ids(3)) == pytest.approx(
            [0.4, 0.4, 0.2], abs=1e-12
        )

    @pytest.mark.parametrize("seed", range(8))
    def test_never_above_equal_weight_objective(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 9))
        est = estimate_moments(0.02 * rng.standard_normal((25, n)))
        w = solve_gmv(est).as_vector(ids(n))
        equal = np.full(n, 1.0 / n)
        assert w @ est.Sigma @ w <= equal @ est.Sigma @ equal + 1e-15

    def test_singular_covariance(self):
        # more assets than observations: Sigma is rank deficient
        rng = np.random.default_rng(11)
        est = estimate_moments(0.02 * rng.standard_normal((4, 9)))
        w = solve_gmv(est).as_vector(ids(9))
        assert w.sum() == pytest.approx(1.0, abs=1e-10)
        assert w.min() >= 0.0


class TestSolveIndexTracking:
    def test_index_is_candidate_column(self):
        rng = np.random.default_rng(1)
        R = 0.01 * rng.standard_normal((12, 3))
        p = solve_index_tracking(R, R[:, 1])
        w = p.as_vector(ids(3))
        assert w == pytest.approx([0.0, 1.0, 0.0], abs=1e-8)
        assert tracking_error_variance(R, R[:, 1], w) <= 1e-20

    def test_even_mix_recovered(self):
        rng = np.random.default_rng(1)
        A = 0.01 * rng.standard_normal(12)
        B = 0.01 * rng.standard_normal(12)
        R = np.c_[A, B]
        r0 = 0.5 * A + 0.5 * B
        w = solve_index_tracking(R, r0).as_vector(ids(2))
        assert w == pytest.approx([0.5, 0.5], abs=1e-10)
        assert tracking_error_variance(R, r0, w) <= 1e-24

    def test_matches_qp_oracle(self):
        rng = np.random.default_rng(17)
        R = 0.02 * rng.standard_normal((10, 3))
        r0 = R @ np.array([0.2, 0.5, 0.3]) + 0.002 * rng.standard_normal(10)
        w = solve_index_tracking(R, r0).as_vector(ids(3))
        T = R.shape[0]
        Q = (2.0 / T) * R.T @ R
        c = -(2.0 / T) * R.T @ r0
        ours = 0.5 * w @ Q @ w + c @ w
        assert ours == pytest.approx(cvx_objective(Q, c), abs=1e-6)

    @pytest.mark.parametrize("seed", range(6))
    def test_convex_hull_gives_zero_error(self, seed):
        rng = np.random.default_rng(seed)
        T = int(rng.integers(4, 25))
        n = int(rng.integers(2, 12))
        R = 0.02 * rng.standard_normal((T, n))
        r0 = R @ rng.dirichlet(np.ones(n))
        w = solve_index_tracking(R, r0).as_vector(ids(n))
        assert tracking_error_variance(R, r0, w) <= 1e-18

    def test_rank_deficient_is_deterministic(self):
        rng = np.random.default_rng(5)
        R = 0.02 * rng.standard_normal((6, 10))
        r0 = R @ np.full(10, 0.1)
        a = solve_index_tracking(R, r0)
        b = solve_index_tracking(R, r0)
        assert a.weights == b.weights

    def test_empty_candidates(self):
        with pytest.raises(ValueError, match="empty"):
            solve_index_tracking(np.empty((5, 0)), np.zeros(5))

    def test_row_mismatch(self):
        with pytest.raises(ValueError, match="rows"):
            solve_index_tracking(np.zeros((5, 2)), np.zeros(4))


class TestCardinality:
    def make_instance(self, seed=3, T=20, n=6):
        rng = np.random.default_rng(seed)
        R = 0.02 * rng.standard_normal((T, n))
        r0 = R @ np.array([0.4, 0.0, 0.3, 0.0, 0.3, 0.0])
        return R, r0

    def test_full_cardinality_equals_plain_tracking(self):
        R, r70 = self.make_instance()
        assert (
            solve_it_cardinality(R, r70, 6).weights
            == solve_index_tracking(R, r70).weights
        )

    def test_single_asset_index(self):
        rng = np.random.default_rng(2)
        R = 0.01 * rng.standard_normal((15, 4))
        p = solve_it_cardinality(R, R[:, 2], 1)
        assert p.weights == {"2": 1.0}

    def test_matches_exhaustive_enumeration(self):
        R, r0 = self.make_instance()
        p = solve_it_cardinality(R, r0, 2)
        ours = tracking_error_variance(R, r0, p.as_vector(ids(6)))
        assert p.n_active <= 2
        assert ours == pytest.approx(brute_force_support(R, r0, 2), abs=1e-15)

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_never_below_unconstrained_optimum(self, seed):
        rng = np.random.default_rng(seed)
        R = 0.02 * rng.standard_normal((18, 7))
        r0 = R @ rng.dirichlet(np.ones(7))
        p = solve_it_cardinality(R, r0, 3)
        full = solve_index_tracking(R, r0)
        assert tracking_error_variance(R, r0, p.as_vector(ids(7))) >= (
            tracking_error_variance(R, r0, full.as_vector(ids(7))) - 1e-18
        )

    def test_eval_cap_is_deterministic(self):
        R, r0 = self.make_instance(seed=9)
        a = solve_it_cardinality(R, r0, 3, max_evals=40)
        b = solve_it_cardinality(R, r0, 3, max_evals=40)
        assert a.weights == b.weights

    def test_tiny_eval_cap_still_valid(self):
        R, r0 = self.make_instance(seed=9)
        p = solve_it_cardinality(R, r0, 3, max_evals=1)
        assert 1 <= p.n_active <= 3
        assert sum(p.weights.values()) == pytest.approx(1.0, abs=1e-10)

    def test_budget_validation(self):
        R, r0 = self.make_instance()
        with pytest.raises(ValueError, match="budget"):
            solve_it_cardinality(R, r0, 2, time_budget=0.0)
        with pytest.raises(ValueError, match="max_evals"):
            solve_it_cardinality(R, r0, 2, max_evals=0)

    def test_k_out_of_range(self):
        R, r0 = self.make_instance()
        with pytest.raises(ValueError, match="k_max"):
            solve_it_cardinality(R, r0, 0)
        with pytest.raises(ValueError, match="k_max"):
            solve_it_cardinality(R, r0, 7)


class TestSelectMaxSimilarity:
    def build(self, row):
        n = len(row) + 1
        values = np.eye(n)
        values[0, 1:] = row
        values[1:, 0] = row
        # fill the asset block with small constants to keep it valid
        for i in range(1, n):
            for j in range(i + 1, n):
                values[i, j] = values[j, i] = 0.1
        entities = ("INDEX",) + tuple(f"A{i}" for i in range(1, n))
        return SimilarityMatrix(kernel_id="K1", entities=entities, values=values)

    def test_spec_row(self):
        sm = self.build([0.9, 0.2, 0.9, 0.5])
        assert select_max_similarity(sm, 2) == ("A1", "A3")

    def test_all_assets(self):
        sm = self.build([0.9, 0.2, 0.9, 0.5])
        assert select_max_similarity(sm, 4) == ("A1", "A2", "A3", "A4")

    def test_single_argmax(self):
        sm = self.build([0.3, 0.8, 0.1, 0.5])
        assert select_max_similarity(sm, 1) == ("A2",)

    def test_tie_broken_by_asset_order(self):
        sm = self.build([0.9, 0.9, 0.5, 0.9])
        assert select_max_similarity(sm, 2) == ("A1", "A2")

    def test_m_out_of_range(self):
        sm = self.build([0.9, 0.2, 0.9, 0.5])
        with pytest.raises(ValueError, match="m must"):
            select_max_similarity(sm, 0)
        with pytest.raises(ValueError, match="m must"):
            select_max_similarity(sm, 5)

    def test_missing_index_row(self):
        values = np.eye(2)
        values[0, 1] = values[1, 0] = 0.4
        sm = SimilarityMatrix(
            kernel_id="K1", entities=("A1", "A2"), values=values
        )
        with pytest.raises(ValueError, match="INDEX"):
            select_max_similarity(sm, 1)

    def test_requires_similarity_matrix(self):
        with pytest.raises(TypeError):
            select_max_similarity(np.eye(3), 1)


class TestKktResidual:
    def test_zero_at_known_optimum(self):
        Q = 2.0 * np.diag([1.0, 4.0])
        w = np.array([0.8, 0.2])
        assert _kkt_residual(Q, np.zeros(2), w) <= 1e-15

    def test_positive_away_from_optimum(self):
        Q = 2.0 * np.diag([1.0, 4.0])
        w = np.array([0.5, 0.5])
        assert _kkt_residual(Q, np.zeros(2), w) > 0.1


class TestCsv:
    def test_round_trip(self, tmp_path):
        p = Portfolio(weights={"B": 0.25, "A": 0.75})
        path = tmp_path / "weights.csv"
        portfolio_to_csv(p, path)
        assert portfolio_from_csv(path).weights == p.weights

    def test_sub_floor_weights_not_written(self, tmp_path):
        p = Portfolio(weights={"A": 1.0, "B": 1e-12})
        path = tmp_path / "weights.csv"
        portfolio_to_csv(p, path)
        loaded = portfolio_from_csv(path)
        assert set(loaded.weights) == {"A"}

    def test_bad_header(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("asset,w\nA,1.0\n")
        with pytest.raises(ValueError, match="header"):
            portfolio_from_csv(path)


class TestOracleAgreement:
    @pytest.mark.parametrize("seed", range(15))
    def test_dense_instances_match_cvxpy(self, seed):
        rng = np.random.default_rng(1000 + seed)
        n = int(rng.integers(3, 10))
        est = estimate_moments(
            0.02 * rng.standard_normal((int(rng.integers(n + 2, 35)), n))
        )
        Q = est.Sigma
        c = -est.mu
        w = solve_mv(est).as_vector(ids(n))
        assert 0.5 * w @ Q @ w + c @ w == pytest.approx(
            cvx_objective(Q, c), abs=1e-6
        )
