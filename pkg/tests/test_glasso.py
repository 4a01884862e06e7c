import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gstars.glasso import (
    DEFAULT_TOL,
    DegenerateGridError,
    InsufficientDataError,
    RegularizationGrid,
    UnboundedProblemError,
    fit,
    fit_path,
    kkt_residual,
    lambda_grid,
    objective,
    sample_covariance,
    screen_components,
    write_path_summary,
)
from gstars.synth import gen_neighborhood, sample_mvn
from oracles import glasso_dual_pg


def random_cov(rng, p, n=None):
    n = n or 3 * p
    X = rng.standard_normal((n, p)) @ rng.standard_normal((p, p))
    return sample_covariance(X).sigma_hat


class TestSampleCovariance:
    def test_identical_rows(self):
        X = np.tile([1.0, -2.0, 3.0], (2, 1))
        np.testing.assert_array_equal(sample_covariance(X).sigma_hat, np.zeros((3, 3)))

    def test_single_column_ml_variance(self):
        x = np.array([1.0, 2.0, 4.0, 7.0])
        S = sample_covariance(x[:, None]).sigma_hat
        np.testing.assert_allclose(S, [[np.var(x)]])

    def test_identity_monte_carlo(self, rng):
        S = sample_covariance(rng.standard_normal((1000, 3))).sigma_hat
        assert np.abs(S - np.eye(3)).max() < 0.15

    def test_one_row_rejected(self):
        with pytest.raises(InsufficientDataError):
            sample_covariance(np.ones((1, 3)))


class TestLambdaGrid:
    def test_endpoints(self):
        S = np.array([[1.0, 0.5], [0.5, 1.0]])
        np.testing.assert_allclose(lambda_grid(S, K=2, ratio=0.1).lambdas, [0.05, 0.5])

    def test_identity_degenerate(self):
        with pytest.raises(DegenerateGridError):
            lambda_grid(np.eye(4))

    def test_strictly_increasing(self, rng):
        lam = lambda_grid(random_cov(rng, 6), K=20).lambdas
        assert np.all(np.diff(lam) > 0)
        assert lam.size == 20

    def test_linear_spacing(self, rng):
        lam = lambda_grid(random_cov(rng, 5), K=5, ratio=0.2, spacing="linear").lambdas
        np.testing.assert_allclose(np.diff(lam), np.diff(lam)[0])

    def test_largest_value_gives_empty_graph(self, rng):
        S = random_cov(rng, 8)
        grid = lambda_grid(S, K=5)
        assert fit(S, grid[-1]).graph.edge_count == 0


class TestScreening:
    def test_large_lambda_singletons(self, rng):
        S = random_cov(rng, 6)
        assert len(screen_components(S, np.abs(S - np.diag(np.diag(S))).max())) == 6

    def test_zero_lambda_dense_one_component(self, rng):
        assert len(screen_components(random_cov(rng, 6), 0.0)) == 1

    def test_two_blocks(self):
        S = np.full((6, 6), 0.01)
        S[:3, :3] = 0.5
        S[3:, 3:] = 0.5
        np.fill_diagonal(S, 1.0)
        comps = screen_components(S, 0.1)
        assert len(comps) == 2
        np.testing.assert_array_equal(comps[0], [0, 1, 2])

    @given(st.integers(3, 30), st.integers(0, 2 ** 31 - 1), st.floats(0.05, 0.6))
    def test_screened_equals_unscreened(self, p, seed, frac):
        rng = np.random.default_rng(seed)
        S = random_cov(rng, p)
        lam = frac * np.abs(S - np.diag(np.diag(S))).max()
        a = fit(S, lam, tol=1e-8, screen=True)
        b = fit(S, lam, tol=1e-8, screen=False)
        np.testing.assert_allclose(a.theta, b.theta, atol=1e-5 * max(1.0, np.abs(b.theta).max()))


class TestFit:
    def test_diagonal_case(self, rng):
        S = random_cov(rng, 3)
        lam = np.abs(S - np.diag(np.diag(S))).max() * 1.01
        res = fit(S, lam)
        np.testing.assert_allclose(res.theta, np.diag(1.0 / np.diag(S)))

    def test_diagonal_case_penalized(self, rng):
        S = random_cov(rng, 3)
        lam = np.abs(S - np.diag(np.diag(S))).max() * 1.01
        res = fit(S, lam, penalize_diagonal=True)
        np.testing.assert_allclose(res.theta, np.diag(1.0 / (np.diag(S) + lam)), rtol=1e-6)
        ref = glasso_dual_pg(S + lam * np.eye(3), lam)
        np.testing.assert_allclose(res.theta, ref, atol=1e-6)

    def test_two_by_two(self):
        S = np.array([[1.0, 0.5], [0.5, 1.0]])
        res = fit(S, 0.1, tol=1e-10)
        W = np.linalg.inv(res.theta)
        assert res.theta[0, 1] != 0
        np.testing.assert_allclose(W[0, 1], 0.4, atol=1e-8)

    def test_warm_equals_cold(self, rng):
        S = random_cov(rng, 10)
        grid = lambda_grid(S, K=6, ratio=0.1)
        prev = fit(S, grid[3], tol=1e-9)
        warm = fit(S, grid[2], tol=1e-9, warm_start=prev)
        cold = fit(S, grid[2], tol=1e-9)
        np.testing.assert_allclose(warm.theta, cold.theta, atol=1e-6)

    @given(st.integers(2, 15), st.integers(0, 2 ** 31 - 1), st.floats(0.02, 0.9))
    def test_kkt_certificate(self, p, seed, frac):
        rng = np.random.default_rng(seed)
        S = random_cov(rng, p)
        lam = frac * np.abs(S - np.diag(np.diag(S))).max()
        res = fit(S, lam)
        assert kkt_residual(res.theta, S, lam) <= 10 * DEFAULT_TOL
        assert np.linalg.eigvalsh(res.theta).min() > 0
        np.testing.assert_array_equal(res.theta, res.theta.T)

    def test_objective_non_increasing(self, rng):
        S = random_cov(rng, 12)
        lam = 0.1 * np.abs(S - np.diag(np.diag(S))).max()
        res = fit(S, lam, tol=1e-10, track_objective=True, screen=False)
        trace = np.asarray(res.objective_trace)
        assert trace.size >= 2
        assert np.all(np.diff(trace) <= 1e-9 * np.abs(trace[:-1]).max())

    def test_zero_lambda_singular(self):
        with pytest.raises(UnboundedProblemError):
            fit(np.ones((3, 3)), 0.0)

    def test_zero_lambda_inverse(self, rng):
        S = random_cov(rng, 4, n=50)
        np.testing.assert_allclose(fit(S, 0.0).theta, np.linalg.inv(S), rtol=1e-10)

    def test_objective_infinite_outside_cone(self):
        assert objective(-np.eye(2), np.eye(2), 0.1) == np.inf


class TestOracle:
    @given(st.integers(2, 5), st.integers(0, 2 ** 31 - 1), st.floats(0.05, 0.8))
    def test_matches_dual_projected_gradient(self, p, seed, frac):
        rng = np.random.default_rng(seed)
        S = random_cov(rng, p)
        lam = frac * np.abs(S - np.diag(np.diag(S))).max()
        ours = fit(S, lam).theta
        ref = glasso_dual_pg(S, lam)
        assert np.abs(ours - ref).max() <= 1e-4 * max(1.0, np.abs(ref).max())


class TestPath:
    def test_single_value_grid(self, rng):
        S = random_cov(rng, 5)
        lam = 0.3 * np.abs(S - np.diag(np.diag(S))).max()
        path = fit_path(S, RegularizationGrid([lam]))
        np.testing.assert_array_equal(path.thetas[0], fit(S, lam).theta)

    def test_empty_at_largest(self, rng):
        S = random_cov(rng, 7)
        path = fit_path(S, lambda_grid(S, K=8))
        assert path.nnz()[-1] == 0

    def test_monotone_summary(self, rng):
        S = random_cov(rng, 10)
        path = fit_path(S, lambda_grid(S, K=10))
        assert np.all(np.diff(path.monotone_nnz()) <= 0)

    def test_lam_min_skips(self, rng):
        S = random_cov(rng, 6)
        grid = lambda_grid(S, K=6)
        path = fit_path(S, grid, lam_min=grid[3])
        assert path.fits[0] is None and path.fits[3] is not None

    def test_support_grows_towards_small_lambda(self):
        # neighborhood model, n = 800: dense end carries far more edges than the sparse end
        for seed in range(3):
            m = gen_neighborhood(40, seed=seed)
            S = sample_covariance(sample_mvn(m, 800, seed=seed)).sigma_hat
            nnz = fit_path(S, lambda_grid(S, K=10)).nnz()
            assert nnz[0] > 10 * max(nnz[-2], 1)

    def test_summary_csv(self, rng, tmp_path):
        S = random_cov(rng, 5)
        path = fit_path(S, lambda_grid(S, K=4))
        write_path_summary(tmp_path / "path.csv", path)
        lines = (tmp_path / "path.csv").read_text().splitlines()
        assert lines[0] == "lambda,nnz_offdiag,nnz_with_diag,iterations,gap"
        assert len(lines) == 5
