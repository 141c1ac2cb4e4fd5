import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from markovcov import Grid, Irregular, KernelSpec, ObservationSet, eval_kernel, kernel_matrix, sample_curves, wendland
from markovcov.errors import KernelSpecError
from markovcov.processes import assign_bins, cross_kernel, psd_factor

SPECS = [KernelSpec.brownian(), KernelSpec.ornstein_uhlenbeck(1.0, 1.0), KernelSpec.kebm(0.1)]


class TestGrid:
    def test_regular(self):
        np.testing.assert_allclose(Grid.regular(4).points, [0.25, 0.5, 0.75, 1.0])

    def test_rejects_unsorted_and_out_of_range(self):
        with pytest.raises(ValueError):
            Grid([0.5, 0.2])
        with pytest.raises(ValueError):
            Grid([0.1, 0.1])
        with pytest.raises(ValueError):
            Grid([0.5, 1.2])

    def test_refine_contains_original(self):
        g = Grid.regular(5)
        f = g.refine(4)
        assert len(f) == 20
        assert np.all(np.isin(g.points, f.points))

    def test_bin_boundaries(self):
        assert assign_bins([0.0], 4)[0] == 0
        assert assign_bins([1.0], 4)[0] == 3
        assert assign_bins([0.25], 4)[0] == 0
        assert assign_bins([0.2500001], 4)[0] == 1

    @given(st.lists(st.floats(0, 1), min_size=1, max_size=50), st.integers(1, 30))
    def test_every_point_in_one_bin(self, t, p):
        b = assign_bins(t, p)
        assert np.all((b >= 0) & (b < p))
        lo, hi = b / p, (b + 1) / p
        t = np.asarray(t)
        assert np.all((t >= lo - 1e-9) & (t <= hi + 1e-9))


class TestKernels:
    def test_bm_value(self):
        assert eval_kernel(KernelSpec.brownian(), 0.25, 0.5) == 0.25

    def test_ou_value(self):
        spec = KernelSpec.ornstein_uhlenbeck(1, 1)
        assert eval_kernel(spec, 0.2, 0.7) == pytest.approx(0.5 * np.exp(-0.5), rel=1e-14)

    def test_wendland(self):
        assert wendland(0.0) == 1.0
        assert wendland(0.5) == pytest.approx(0.1875)
        assert wendland(1.5) == 0.0

    def test_domain(self):
        with pytest.raises(ValueError):
            eval_kernel(KernelSpec.brownian(), -0.1, 0.5)
        with pytest.raises(ValueError):
            eval_kernel(KernelSpec.brownian(), 0.5, 1.1)

    def test_invalid_parameters(self):
        with pytest.raises(ValueError):
            KernelSpec.ornstein_uhlenbeck(0.0, 1.0)
        with pytest.raises(ValueError):
            KernelSpec.kebm(-0.1)
        with pytest.raises(ValueError):
            KernelSpec.kebm(0.1, q=1)

    def test_small_matrices(self):
        np.testing.assert_array_equal(kernel_matrix(KernelSpec.brownian(), Grid([0.5, 1.0])),
                                      [[0.5, 0.5], [0.5, 1.0]])
        np.testing.assert_allclose(kernel_matrix(KernelSpec.ornstein_uhlenbeck(1, 1), Grid([0.3])),
                                   [[0.5]])

    @pytest.mark.parametrize("spec", SPECS, ids=lambda s: s.label)
    @pytest.mark.parametrize("p", [5, 20, 100])
    def test_psd_and_symmetric(self, spec, p):
        K = kernel_matrix(spec, Grid.regular(p))
        np.testing.assert_array_equal(K, K.T)
        assert np.linalg.eigvalsh(K).min() >= -1e-8 * np.trace(K)

    @given(st.floats(0, 1), st.floats(0, 1))
    @settings(max_examples=50, deadline=None)
    def test_eval_symmetric(self, s, t):
        for spec in SPECS:
            assert eval_kernel(spec, s, t) == eval_kernel(spec, t, s)

    def test_kebm_matches_dblquad(self):
        # brute-force oracle of the embedded double integral
        h, s, t = 0.15, 0.3, 0.4
        spec = KernelSpec.kebm(h, q=400)

        def kh(a, b):
            return wendland(abs(a - b) / h) / h

        val, _ = integrate.dblquad(lambda v, u: kh(s, u) * min(u, v) * kh(v, t),
                                   max(0, s - h), min(1, s + h),
                                   lambda u: max(0, t - h), lambda u: min(1, t + h),
                                   epsabs=1e-10)
        assert eval_kernel(spec, s, t) == pytest.approx(val, abs=1e-5)

    def test_kebm_matches_double_sum(self):
        # plain midpoint double sum over the local supports
        h, q = 0.2, 300
        spec = KernelSpec.kebm(h, q=q)
        s, t = 0.5, 0.62
        us = np.linspace(s - h, s + h, q + 1)
        us = 0.5 * (us[1:] + us[:-1])
        vs = np.linspace(t - h, t + h, q + 1)
        vs = 0.5 * (vs[1:] + vs[:-1])
        du, dv = us[1] - us[0], vs[1] - vs[0]
        wu = wendland(np.abs(us - s) / h) / h * du
        wv = wendland(np.abs(vs - t) / h) / h * dv
        brute = wu @ np.minimum.outer(us, vs) @ wv
        assert eval_kernel(spec, s, t) == pytest.approx(brute, rel=1e-3)

    def test_kebm_small_h_unnormalized_limit(self):
        # the as-written kernel carries mass 2/3 on each side, so the limit is (4/9) min(s, t)
        spec = KernelSpec.kebm(1e-3, q=400)
        assert eval_kernel(spec, 0.3, 0.6) == pytest.approx(4 / 9 * 0.3, abs=1e-2)

    def test_kebm_small_h_normalized_limit(self):
        spec = KernelSpec.kebm(1e-3, q=200, normalize=True)
        assert eval_kernel(spec, 0.3, 0.6) == pytest.approx(0.3, abs=1e-2)
        grid = Grid.regular(20)
        K = kernel_matrix(KernelSpec.kebm(1e-3, q=400, normalize=True), grid)
        assert np.abs(K - kernel_matrix(KernelSpec.brownian(), grid)).max() < 5e-2

    def test_h_zero_is_bm(self):
        grid = Grid.regular(7)
        np.testing.assert_array_equal(kernel_matrix(KernelSpec.kebm(0.0), grid),
                                      kernel_matrix(KernelSpec.brownian(), grid))

    def test_cross_kernel_shape(self):
        C = cross_kernel(KernelSpec.brownian(), [0.1, 0.2, 0.3], [0.5, 0.6])
        assert C.shape == (3, 2)
        np.testing.assert_allclose(C[:, 0], [0.1, 0.2, 0.3])

    def test_matrix_read_only(self):
        K = kernel_matrix(KernelSpec.brownian(), Grid.regular(3))
        with pytest.raises(ValueError):
            K[0, 0] = 1.0

    def test_psd_factor(self):
        K = kernel_matrix(KernelSpec.kebm(0.2), Grid.regular(30))
        L = psd_factor(K)
        np.testing.assert_allclose(L @ L.T, K, atol=1e-7 * np.trace(K))

    def test_bad_matrix_rejected(self):
        from markovcov.errors import SamplingError
        with pytest.raises(SamplingError):
            psd_factor(np.array([[1.0, 2.0], [2.0, 1.0]]))


class TestSampling:
    def test_deterministic(self):
        for spec in SPECS:
            a = sample_curves(spec, Grid.regular(10), 5, seed=42)
            b = sample_curves(spec, Grid.regular(10), 5, seed=42)
            np.testing.assert_array_equal(a.values, b.values)

    def test_bm_endpoint_variance(self):
        n = 1000
        obs = sample_curves(KernelSpec.brownian(), Grid.regular(20), n, seed=1)
        v = np.mean(obs.values[:, -1] ** 2)
        assert abs(v - 1.0) < 3 * np.sqrt(2 / n)

    def test_noise_adds_variance(self):
        n = 1000
        obs = sample_curves(KernelSpec.brownian(), Grid.regular(10), n, noise_sd=0.5, seed=2)
        t = obs.grid.points
        v = np.mean(obs.values ** 2, axis=0)
        se = np.sqrt(2 / n) * (t + 0.25)
        assert np.all(np.abs(v - (t + 0.25)) < 4 * se)

    def test_sample_covariance_within_5_se(self):
        n = 20000
        spec = KernelSpec.ornstein_uhlenbeck(1, 1)
        grid = Grid.regular(6)
        X = sample_curves(spec, grid, n, seed=3).values
        K = kernel_matrix(spec, grid)
        S = X.T @ X / n
        se = np.sqrt((K ** 2 + np.outer(np.diag(K), np.diag(K))) / n)
        assert np.all(np.abs(S - K) < 5 * se)

    def test_irregular_design(self):
        obs = sample_curves(KernelSpec.brownian(), Irregular(4), 30, noise_sd=0.1, seed=4)
        assert not obs.is_dense and obs.n == 30
        for t, y in obs.curves():
            assert t.size == 4 and y.size == 4
            assert np.all(np.diff(t) >= 0) and np.all((t >= 0) & (t <= 1))

    def test_irregular_requires_two(self):
        with pytest.raises(ValueError):
            Irregular(1)

    def test_observation_set_helpers(self):
        obs = sample_curves(KernelSpec.brownian(), Grid.regular(5), 8, seed=5)
        np.testing.assert_allclose(obs.scaled(2.0).values, 2.0 * obs.values)
        assert obs.subset([0, 3]).n == 2

    def test_dense_shape_checked(self):
        with pytest.raises(ValueError):
            ObservationSet.dense(Grid.regular(3), np.zeros((4, 2)))
