import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from markovcov import Grid, KernelSpec, kernel_matrix
from markovcov.errors import DegenerateKernelError, NumericalError
from markovcov.transform import (
    MarkovFactorization,
    ar1_covariance,
    endpoint_identity_residual,
    gaussian_kl,
    markov_transform,
    misspecification,
)
from oracles import kl_projection_oracle, random_pd, random_tridiagonal_precision_cov

THREE = np.array([[1.0, 0.5, 0.5], [0.5, 1.0, 0.5], [0.5, 0.5, 1.0]])


class TestMarkovTransform:
    @pytest.mark.parametrize("spec", [KernelSpec.brownian(), KernelSpec.ornstein_uhlenbeck(1, 1)],
                             ids=["bm", "ou"])
    @pytest.mark.parametrize("p", [5, 20, 100])
    def test_markov_kernels_fixed(self, spec, p):
        K = kernel_matrix(spec, Grid.regular(p))
        _, KM = markov_transform(K)
        assert np.linalg.norm(KM - K) / np.linalg.norm(K) < 1e-12

    def test_three_point_example(self):
        fact, KM = markov_transform(THREE)
        assert KM[0, 2] == pytest.approx(0.25)
        np.testing.assert_allclose(fact.betas, [0.5, 0.5])

    def test_band_exact(self):
        K = random_pd(np.random.default_rng(0), 6)
        _, KM = markov_transform(K)
        np.testing.assert_array_equal(np.diag(KM), np.diag(K))
        np.testing.assert_array_equal(np.diag(KM, 1), np.diag(K, 1))
        np.testing.assert_array_equal(KM, KM.T)

    def test_idempotent(self):
        K = random_pd(np.random.default_rng(1), 8)
        _, KM = markov_transform(K)
        _, KMM = markov_transform(KM)
        assert np.linalg.norm(KMM - KM) < 1e-12 * np.linalg.norm(KM)

    @pytest.mark.parametrize("seed", range(5))
    def test_kl_oracle(self, seed):
        K = random_pd(np.random.default_rng(seed), 4)
        _, KM = markov_transform(K)
        np.testing.assert_allclose(KM, kl_projection_oracle(K), atol=1e-6)

    @pytest.mark.parametrize("p", [3, 4])
    def test_kl_optimal_vs_random_feasible(self, p):
        rng = np.random.default_rng(10 + p)
        K = random_pd(rng, p)
        _, KM = markov_transform(K)
        best = gaussian_kl(K, KM)
        for _ in range(200):
            S = random_tridiagonal_precision_cov(rng, p)
            assert best <= gaussian_kl(K, S) + 1e-8

    @pytest.mark.parametrize("spec", [KernelSpec.brownian(), KernelSpec.ornstein_uhlenbeck(1, 1),
                                      KernelSpec.kebm(0.1)], ids=["bm", "ou", "kebm"])
    def test_tridiagonal_inverse(self, spec):
        _, KM = markov_transform(kernel_matrix(spec, Grid.regular(20)))
        P = np.linalg.inv(KM)
        off = np.abs(np.triu(P, 2))
        assert off.max() < 1e-8 * np.abs(P).max()

    def test_rejects_nonpositive_diagonal(self):
        with pytest.raises(DegenerateKernelError):
            markov_transform(np.diag([1.0, 0.0, 1.0]))

    @given(arrays(np.float64, (5, 5), elements=st.floats(-1, 1)))
    @settings(max_examples=40, deadline=None)
    def test_transform_of_pd_is_pd_and_fixed(self, G):
        K = G @ G.T + 0.1 * np.eye(5)
        _, KM = markov_transform(K)
        assert np.linalg.eigvalsh(KM).min() > 0
        _, KMM = markov_transform(KM)
        np.testing.assert_allclose(KMM, KM, rtol=1e-9, atol=1e-12)


class TestAR1:
    def test_bm_links(self):
        fact = MarkovFactorization([0.25, 0.5, 0.75, 1.0], [1.0, 1.0, 1.0])
        np.testing.assert_allclose(ar1_covariance(fact),
                                   kernel_matrix(KernelSpec.brownian(), Grid.regular(4)), atol=1e-15)

    def test_single_point(self):
        np.testing.assert_array_equal(ar1_covariance(MarkovFactorization([2.0], [])), [[2.0]])

    @pytest.mark.parametrize("seed", range(10))
    def test_matches_transform(self, seed):
        K = random_pd(np.random.default_rng(seed), 4)
        fact, KM = markov_transform(K)
        np.testing.assert_allclose(ar1_covariance(fact), KM, rtol=0, atol=1e-12 * np.abs(KM).max())

    def test_inconsistent_factorization(self):
        with pytest.raises(NumericalError):
            ar1_covariance(MarkovFactorization([1.0, 0.5], [2.0]))

    def test_wrong_beta_count(self):
        with pytest.raises(ValueError):
            MarkovFactorization([1.0, 1.0], [1.0, 1.0])


class TestMisspecification:
    @pytest.mark.parametrize("spec", [KernelSpec.brownian(), KernelSpec.ornstein_uhlenbeck(1, 1)],
                             ids=["bm", "ou"])
    def test_zero_for_markov(self, spec):
        d, ratio = misspecification(kernel_matrix(spec, Grid.regular(20)))
        assert d < 1e-20 and ratio < 1e-20

    def test_three_point(self):
        d, _ = misspecification(THREE)
        assert d == pytest.approx(0.125)

    def test_kebm_matches_direct(self):
        K = kernel_matrix(KernelSpec.kebm(0.1), Grid.regular(20))
        _, KM = markov_transform(K)
        direct = np.sum((K - KM) ** 2)
        d, ratio = misspecification(K)
        assert d > 0
        assert d == pytest.approx(direct, rel=1e-10)
        assert ratio == pytest.approx(direct / np.sum(K ** 2), rel=1e-10)

    @pytest.mark.parametrize("seed", range(5))
    def test_random_matches_direct(self, seed):
        K = random_pd(np.random.default_rng(seed), 7)
        _, KM = markov_transform(K)
        assert misspecification(K)[0] == pytest.approx(np.sum((K - KM) ** 2), rel=1e-10)


class TestEndpointIdentity:
    @pytest.mark.parametrize("spec", [KernelSpec.brownian(), KernelSpec.ornstein_uhlenbeck(1, 1)],
                             ids=["bm", "ou"])
    def test_zero_for_markov(self, spec):
        r = endpoint_identity_residual(kernel_matrix(spec, Grid.regular(10)))
        assert r.shape == (8,)
        assert np.abs(r).max() < 1e-14

    def test_kebm_nonzero(self):
        r = endpoint_identity_residual(kernel_matrix(KernelSpec.kebm(0.2), Grid.regular(20)))
        assert np.abs(r).max() > 0

    def test_needs_three_points(self):
        with pytest.raises(ValueError):
            endpoint_identity_residual(np.eye(2))
