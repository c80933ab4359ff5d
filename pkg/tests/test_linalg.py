import numpy as np
import pytest

from gfbounds import (
    Gaussian,
    SpdMatrix,
    chol_sample,
    loewner_geq,
    spd_sqrt,
    spectral_norm,
    trace_sqrt_sandwich,
)

from conftest import random_spd


class TestSpdMatrix:
    def test_rejects_asymmetric(self):
        with pytest.raises(ValueError, match="not symmetric"):
            SpdMatrix([[1.0, 0.5], [0.2, 1.0]])

    def test_rejects_indefinite(self):
        with pytest.raises(ValueError, match="positive semidefinite"):
            SpdMatrix([[1.0, 0.0], [0.0, -0.5]])

    def test_rejects_non_square_and_non_finite(self):
        with pytest.raises(ValueError):
            SpdMatrix(np.ones((2, 3)))
        with pytest.raises(ValueError):
            SpdMatrix([[np.nan, 0.0], [0.0, 1.0]])

    def test_tolerates_tiny_negative_eigenvalue(self):
        m = SpdMatrix([[1.0, 1.0], [1.0, 1.0 - 1e-12]])
        assert m.dim == 2

    def test_gaussian_dimension_check(self):
        with pytest.raises(ValueError):
            Gaussian([0.0, 0.0], SpdMatrix([[1.0]]))


class TestSpdSqrt:
    def test_identity(self):
        np.testing.assert_array_equal(spd_sqrt(SpdMatrix(np.eye(2))).mat, np.eye(2))

    def test_scaled_identity(self):
        np.testing.assert_allclose(
            spd_sqrt(SpdMatrix(2.0 * np.eye(2))).mat, np.sqrt(2.0) * np.eye(2), rtol=1e-15
        )

    @pytest.mark.parametrize("dim", [2, 5, 10])
    def test_square_reconstructs(self, dim):
        rng = np.random.default_rng(dim)
        m = random_spd(rng, dim)
        root = spd_sqrt(SpdMatrix(m)).mat
        err = spectral_norm(root @ root - m) / spectral_norm(m)
        assert err < 1e-10


class TestSpectralNorm:
    def test_identity(self):
        assert spectral_norm(np.eye(3)) == 1.0

    def test_diagonal(self):
        assert spectral_norm(np.diag([2.0, 1.0])) == 2.0

    def test_random_against_power_iteration(self):
        rng = np.random.default_rng(99)
        a = rng.standard_normal((6, 6))
        v = rng.standard_normal(6)
        gram = a.T @ a
        for _ in range(200):
            v = gram @ v
            v /= np.linalg.norm(v)
        oracle = float(np.sqrt(v @ gram @ v))
        assert spectral_norm(a) == pytest.approx(oracle, rel=1e-8)

    def test_transpose_invariance(self):
        rng = np.random.default_rng(5)
        a = rng.standard_normal((4, 7))
        assert spectral_norm(a.T) == pytest.approx(spectral_norm(a), rel=1e-12)


class TestTraceSqrtSandwich:
    def test_identities(self):
        eye = SpdMatrix(np.eye(3))
        assert trace_sqrt_sandwich(eye, eye) == pytest.approx(3.0, abs=1e-12)

    def test_scaled_identity(self):
        l = SpdMatrix(np.sqrt(2.0) * np.eye(2))
        s = SpdMatrix(np.eye(2))
        assert trace_sqrt_sandwich(l, s) == pytest.approx(2.0 * np.sqrt(2.0), rel=1e-14)

    def test_random_pair_against_eigenvalue_oracle(self):
        rng = np.random.default_rng(11)
        l = random_spd(rng, 4)
        s = random_spd(rng, 4)
        prod = l @ s @ l
        oracle = float(np.sum(np.sqrt(np.clip(np.linalg.eigvals(prod).real, 0.0, None))))
        got = trace_sqrt_sandwich(SpdMatrix(l), SpdMatrix(s))
        assert got == pytest.approx(oracle, rel=1e-10)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            trace_sqrt_sandwich(SpdMatrix(np.eye(2)), SpdMatrix(np.eye(3)))


class TestLoewner:
    def test_basic(self):
        assert loewner_geq(2.0 * np.eye(2), np.eye(2), 0.0)
        assert not loewner_geq(np.eye(2), 2.0 * np.eye(2), 1e-9)

    def test_transitive_on_integer_matrices(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            c = np.diag(rng.integers(0, 5, 3).astype(float))
            b = c + np.diag(rng.integers(0, 5, 3).astype(float))
            a = b + np.diag(rng.integers(0, 5, 3).astype(float))
            assert loewner_geq(a, b, 0.0) and loewner_geq(b, c, 0.0)
            assert loewner_geq(a, c, 0.0)


class TestCholSample:
    def test_standard_normal_mean_band(self):
        g = Gaussian([0.0], SpdMatrix([[1.0]]))
        samples = chol_sample(g, 1_000_000, seed=42)
        assert abs(samples.mean()) < 4.0 / np.sqrt(1_000_000)

    def test_two_dim_covariance(self):
        cov = np.array([[2.0, 0.6], [0.6, 1.0]])
        g = Gaussian([1.0, -2.0], SpdMatrix(cov))
        samples = chol_sample(g, 100_000, seed=7)
        est = np.cov(samples.T)
        assert np.linalg.norm(est - cov) / np.linalg.norm(cov) < 0.05

    def test_bit_reproducible(self):
        g = Gaussian([0.5, 0.5], SpdMatrix(np.eye(2)))
        a = chol_sample(g, 200_000, seed=1)
        b = chol_sample(g, 200_000, seed=1)
        assert np.array_equal(a, b)
        c = chol_sample(g, 200_000, seed=2)
        assert not np.array_equal(a, c)

    def test_rank_deficient_falls_back_with_warning(self):
        g = Gaussian([0.0, 0.0], SpdMatrix([[1.0, 1.0], [1.0, 1.0]]))
        with pytest.warns(RuntimeWarning, match="eigendecomposition"):
            samples = chol_sample(g, 2048, seed=0)
        # degenerate direction collapses: both coordinates coincide
        np.testing.assert_allclose(samples[:, 0], samples[:, 1], atol=1e-12)

    def test_seed_validation(self):
        g = Gaussian([0.0], SpdMatrix([[1.0]]))
        with pytest.raises(ValueError):
            chol_sample(g, 10, seed=-1)
        with pytest.raises(ValueError):
            chol_sample(g, 0, seed=1)
