import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from markovcov import (
    EstimatedKernel,
    Grid,
    Irregular,
    KernelSpec,
    ObservationSet,
    bin_observations,
    empirical_estimate,
    estimate_noise,
    fit_estimator,
    kernel_matrix,
    l2_error,
    markov_estimate,
    markov_transform,
    oracle_kernel,
    sample_curves,
    smoothed_estimate,
    triangular_estimate,
)
from markovcov.errors import EstimationError, NoiseIdentifiabilityError
from markovcov.estimation import interpolation_weights
from markovcov.transform import MarkovFactorization, ar1_covariance


@pytest.fixture(scope="module")
def bm_dense():
    return sample_curves(KernelSpec.brownian(), Grid.regular(20), 200, seed=11)


class TestBinning:
    def test_dense_identity_bins(self, bm_dense):
        stats = bin_observations(bm_dense)
        assert stats.regime == "dense"
        np.testing.assert_array_equal(stats.counts, 1)
        np.testing.assert_array_equal(stats.n_links, bm_dense.n)
        np.testing.assert_array_equal(stats.nodes, bm_dense.grid.points)
        for lab in stats.index_sets(0):
            assert lab.size == 1

    def test_hand_placed_times(self):
        obs = ObservationSet.irregular([[0.1, 0.2, 0.9], [0.0, 0.55, 1.0]],
                                       [[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])
        stats = bin_observations(obs, 2)
        assert [s.tolist() for s in stats.index_sets(0)] == [[0, 1], [2]]
        assert [s.tolist() for s in stats.index_sets(1)] == [[0], [1, 2]]
        np.testing.assert_array_equal(stats.counts, [[2, 1], [1, 2]])
        np.testing.assert_allclose(stats.sums, [[3.0, 3.0], [4.0, 11.0]])
        np.testing.assert_array_equal(stats.linked_curves(0), [0, 1])
        np.testing.assert_allclose(stats.nodes, [0.25, 0.75])

    def test_right_endpoint_in_last_bin(self):
        obs = ObservationSet.irregular([[0.3, 1.0]], [[0.0, 1.0]])
        stats = bin_observations(obs, 5)
        assert stats.index_sets(0)[4].tolist() == [1]

    def test_needs_two_bins(self, bm_dense):
        with pytest.raises(ValueError):
            bin_observations(bm_dense, 1)


class TestNoise:
    def test_noiseless_small(self):
        obs = sample_curves(KernelSpec.brownian(), Irregular(10), 2000, seed=21)
        assert estimate_noise(bin_observations(obs, 5)) < 0.01

    def test_not_identifiable_irregular(self):
        obs = ObservationSet.irregular([[0.1, 0.6], [0.2, 0.9]], [[1.0, 2.0], [3.0, 4.0]])
        with pytest.raises(NoiseIdentifiabilityError):
            estimate_noise(bin_observations(obs, 2))

    def test_dense_warns_and_returns_zero(self, bm_dense):
        with pytest.warns(RuntimeWarning):
            assert estimate_noise(bin_observations(bm_dense)) == 0.0

    def test_uncorrected_is_cell_average(self):
        # one cell: y = (1, 2, 4); mean square 7, mean cross-product 14/3
        obs = ObservationSet.irregular([[0.1, 0.2, 0.3]], [[1.0, 2.0, 4.0]])
        assert estimate_noise(bin_observations(obs, 2), lag_correction=False) == pytest.approx(7 - 14 / 3)

    def test_uncorrected_biased_upward(self):
        obs = sample_curves(KernelSpec.brownian(), Irregular(10), 2000, noise_sd=0.5, seed=22)
        stats = bin_observations(obs, 5)
        assert estimate_noise(stats, lag_correction=False) > estimate_noise(stats)


class TestMarkovEstimator:
    def test_hand_example(self):
        obs = ObservationSet.dense(Grid([0.5, 1.0]), [[1.0, 2.0], [3.0, 4.0]])
        est = markov_estimate(bin_observations(obs))
        np.testing.assert_allclose(est.factorization.variances, [5.0, 10.0])
        np.testing.assert_allclose(est.factorization.betas, [1.4])
        assert est.matrix[0, 1] == 7.0
        assert est.matrix[1, 1] == 10.0

    def test_dense_reduction(self, bm_dense):
        X = bm_dense.values
        est = markov_estimate(bin_observations(bm_dense))
        np.testing.assert_allclose(est.factorization.variances, np.mean(X ** 2, axis=0), rtol=1e-14)
        beta = np.sum(X[:, :-1] * X[:, 1:], axis=0) / np.sum(X[:, :-1] ** 2, axis=0)
        np.testing.assert_allclose(est.factorization.betas, beta, rtol=1e-12)

    def test_nodal_matrix_is_markov(self, bm_dense):
        est = markov_estimate(bin_observations(bm_dense))
        _, KM = markov_transform(est.matrix)
        assert np.abs(KM - est.matrix).max() < 1e-12 * np.abs(est.matrix).max()

    def test_converges_on_markov_data(self):
        # AR(1) chain with Brownian links; single draws fluctuate around 0.08,
        # so the bound applies to the replicate mean
        grid = Grid.regular(10)
        K = ar1_covariance(MarkovFactorization(grid.points, np.ones(9)))
        L = np.linalg.cholesky(K)
        rng = np.random.default_rng(31)

        def err(n):
            X = rng.standard_normal((n, 10)) @ L.T
            est = markov_estimate(bin_observations(ObservationSet.dense(grid, X)))
            return np.linalg.norm(est.matrix - K)

        big = np.mean([err(5000) for _ in range(20)])
        small = np.mean([err(500) for _ in range(20)])
        assert big < 0.1
        assert big < small

    def test_comparable_to_empirical(self, bm_dense):
        bm = KernelSpec.brownian()
        ratio = l2_error(fit_estimator("markov", bm_dense), bm) / l2_error(empirical_estimate(bm_dense), bm)
        assert 0.5 <= ratio <= 2.0

    @given(st.floats(0.1, 10.0))
    @settings(max_examples=20, deadline=None)
    def test_scale_equivariance(self, c):
        obs = sample_curves(KernelSpec.ornstein_uhlenbeck(), Grid.regular(8), 50, seed=5)
        a = markov_estimate(bin_observations(obs)).matrix
        b = markov_estimate(bin_observations(obs.scaled(c))).matrix
        np.testing.assert_allclose(b, c * c * a, rtol=1e-10)

    def test_irregular_with_noise(self):
        spec = KernelSpec.brownian()
        obs = sample_curves(spec, Irregular(10), 2000, noise_sd=0.3, seed=41)
        est = markov_estimate(bin_observations(obs, 5), "estimate")
        assert est.noise_var == pytest.approx(0.09, abs=0.03)
        assert l2_error(est, spec) < 0.1

    def test_empty_link_fails(self):
        obs = ObservationSet.irregular([[0.1, 0.2], [0.8, 0.9]], [[1.0, 1.0], [1.0, 1.0]])
        with pytest.raises(EstimationError, match="smaller p"):
            markov_estimate(bin_observations(obs, 2))

    def test_variance_floor_flag_and_strict(self):
        obs = ObservationSet.irregular([[0.1, 0.6], [0.2, 0.7]], [[0.1, 1.0], [0.1, 1.0]])
        stats = bin_observations(obs, 2)
        est = markov_estimate(stats, noise_var=1.0)
        assert any(f.startswith("variance-floor") for f in est.flags)
        assert np.all(est.factorization.variances > 0)
        with pytest.raises(EstimationError):
            markov_estimate(stats, noise_var=1.0, strict=True)

    def test_p_greater_than_n_flag(self):
        obs = sample_curves(KernelSpec.brownian(), Grid.regular(10), 4, seed=2)
        assert "p>n" in markov_estimate(bin_observations(obs)).flags

    def test_bad_noise_argument(self, bm_dense):
        with pytest.raises(ValueError):
            markov_estimate(bin_observations(bm_dense), "guess")


class TestBaselines:
    def test_empirical_one_curve(self):
        c = np.array([1.0, -2.0, 0.5])
        est = empirical_estimate(ObservationSet.dense(Grid.regular(3), c[None, :]))
        np.testing.assert_allclose(est.matrix, np.outer(c, c))

    def test_empirical_large_n(self):
        spec = KernelSpec.brownian()
        grid = Grid.regular(10)
        est = empirical_estimate(sample_curves(spec, grid, 20000, seed=3))
        assert np.abs(est.matrix - kernel_matrix(spec, grid)).max() < 0.1
        np.testing.assert_array_equal(est.matrix, est.matrix.T)

    def test_smoothed_small_bandwidth_is_empirical(self, bm_dense):
        np.testing.assert_allclose(smoothed_estimate(bm_dense, 0.005).matrix,
                                   empirical_estimate(bm_dense).matrix, atol=1e-6)

    def test_smoothed_wide_bandwidth_flattens(self, bm_dense):
        S = smoothed_estimate(bm_dense, 1.0).matrix
        emp = empirical_estimate(bm_dense).matrix
        assert np.ptp(S) < np.ptp(emp)
        assert S.mean() == pytest.approx(emp.mean(), rel=0.1)

    def test_smoothed_symmetric(self, bm_dense):
        S = smoothed_estimate(bm_dense, 0.1).matrix
        assert np.abs(S - S.T).max() < 1e-12

    def test_triangular_small_bandwidth_is_empirical(self, bm_dense):
        np.testing.assert_allclose(triangular_estimate(bm_dense, 0.005).matrix,
                                   empirical_estimate(bm_dense).matrix, atol=1e-6)

    def test_triangular_symmetric(self, bm_dense):
        S = triangular_estimate(bm_dense, 0.1).matrix
        np.testing.assert_array_equal(S, S.T)

    def test_triangular_keeps_diagonal_ridge(self, bm_dense):
        tri = np.diag(triangular_estimate(bm_dense, 0.1).matrix).mean()
        smo = np.diag(smoothed_estimate(bm_dense, 0.1).matrix).mean()
        assert tri >= smo

    def test_bandwidth_positive(self, bm_dense):
        for f in (smoothed_estimate, triangular_estimate):
            with pytest.raises(ValueError):
                f(bm_dense, 0.0)

    def test_irregular_rejected(self):
        obs = sample_curves(KernelSpec.brownian(), Irregular(3), 5, seed=1)
        with pytest.raises(ValueError):
            empirical_estimate(obs)

    def test_unknown_name(self, bm_dense):
        with pytest.raises(ValueError):
            fit_estimator("lasso", bm_dense)


class TestEstimatedKernel:
    def test_reproduces_nodes(self, bm_dense):
        est = markov_estimate(bin_observations(bm_dense))
        np.testing.assert_array_equal(est.evaluate(est.nodes), est.matrix)

    @given(st.lists(st.floats(0, 1), min_size=1, max_size=20))
    def test_weights_partition_unity(self, x):
        W = interpolation_weights(np.array([0.1, 0.4, 0.5, 0.9]), x)
        np.testing.assert_allclose(W.sum(axis=1), 1.0)
        assert np.all(W >= 0)

    def test_clamped_outside_nodes(self):
        W = interpolation_weights(np.array([0.25, 0.75]), [0.0, 1.0])
        np.testing.assert_array_equal(W, [[1.0, 0.0], [0.0, 1.0]])

    def test_bilinear_midpoint(self):
        est = EstimatedKernel([0.0, 1.0], [[1.0, 2.0], [2.0, 5.0]], "x")
        assert est(0.5, 0.5) == pytest.approx(2.5)

    def test_csv_round_trip(self, bm_dense, tmp_path):
        est = markov_estimate(bin_observations(bm_dense))
        path = tmp_path / "k.csv"
        est.to_csv(path, provenance={"seed": 1})
        back = EstimatedKernel.from_csv(path)
        u = np.linspace(0, 1, 37)
        assert np.abs(back.evaluate(u) - est.evaluate(u)).max() < 1e-12
        assert back.tag == "markov"

    def test_l2_error_oracle_bias(self):
        spec = KernelSpec.brownian()
        est = oracle_kernel(spec, Grid.regular(100))
        assert l2_error(est, spec) < 0.02

    def test_l2_error_identical(self, bm_dense):
        est = empirical_estimate(bm_dense)
        assert l2_error(est, est) == 0.0

    def test_l2_error_resolution(self, bm_dense):
        with pytest.raises(ValueError):
            l2_error(empirical_estimate(bm_dense), KernelSpec.brownian(), resolution=10)
