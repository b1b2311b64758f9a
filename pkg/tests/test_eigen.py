"""Eigendecomposition and precision reconstruction against numpy oracles."""
import numpy as np
import pytest

from minvar import eigen
from minvar.errors import DataError, SingularMatrixError
from minvar.estimators import ledoit_wolf


def random_symmetric(rng, n):
    a = rng.normal(size=(n, n))
    return 0.5 * (a + a.T)


class TestEigh:
    def test_identity(self):
        es = eigen.eigh(np.eye(3))
        np.testing.assert_allclose(es.eigenvalues, np.ones(3), rtol=1e-14)
        np.testing.assert_allclose(es.eigenvectors @ es.eigenvectors.T, np.eye(3), atol=1e-12)

    def test_diagonal_sorting_and_axes(self):
        es = eigen.eigh(np.diag([3.0, 1.0, 2.0]))
        np.testing.assert_allclose(es.eigenvalues, [3.0, 2.0, 1.0], rtol=1e-14)
        expected_axes = np.array([[1, 0, 0], [0, 0, 1], [0, 1, 0]], dtype=float)
        np.testing.assert_allclose(np.abs(es.eigenvectors), expected_axes, atol=1e-12)

    def test_reconstruction_and_orthonormality(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            n = int(rng.integers(2, 20))
            a = random_symmetric(rng, n)
            es = eigen.eigh(a)
            recon = (es.eigenvectors * es.eigenvalues) @ es.eigenvectors.T
            assert np.linalg.norm(recon - a) <= 1e-10 * max(np.linalg.norm(a), 1e-12)
            gram = es.eigenvectors.T @ es.eigenvectors
            assert np.linalg.norm(gram - np.eye(n)) <= 1e-10 * np.sqrt(n)

    def test_matches_numpy_spectrum(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            a = random_symmetric(rng, int(rng.integers(2, 32)))
            es = eigen.eigh(a)
            expected = np.sort(np.linalg.eigvalsh(a))[::-1]
            scale = max(np.abs(expected).max(), 1e-12)
            np.testing.assert_allclose(es.eigenvalues, expected, atol=1e-10 * scale)

    def test_two_by_two_closed_form(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            a, b, c = rng.normal(size=3)
            m = np.array([[a, c], [c, b]])
            es = eigen.eigh(m)
            half_trace = (a + b) / 2
            radius = np.hypot((a - b) / 2, c)
            np.testing.assert_allclose(
                es.eigenvalues, [half_trace + radius, half_trace - radius], atol=1e-12
            )

    def test_sign_convention(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            es = eigen.eigh(random_symmetric(rng, 6))
            for col in es.eigenvectors.T:
                assert col[np.argmax(np.abs(col))] > 0

    def test_deterministic(self):
        rng = np.random.default_rng(4)
        a = random_symmetric(rng, 12)
        first = eigen.eigh(a)
        second = eigen.eigh(a)
        np.testing.assert_array_equal(first.eigenvalues, second.eigenvalues)
        np.testing.assert_array_equal(first.eigenvectors, second.eigenvectors)

    def test_asymmetric_rejected(self):
        with pytest.raises(DataError):
            eigen.eigh(np.array([[1.0, 2.0], [0.0, 1.0]]))

    def test_oversize_rejected(self):
        with pytest.raises(DataError):
            eigen.eigh(np.eye(eigen.MAX_SIZE + 1))


class TestReconstructPrecision:
    def test_inverse_spectrum_inverts(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=(8, 30))
        estimate = ledoit_wolf(x)
        es = eigen.eigh(estimate.matrix)
        p = eigen.reconstruct_precision(es, 1.0 / es.eigenvalues)
        residual = np.linalg.norm(p.matrix @ estimate.matrix - np.eye(8))
        assert residual <= 1e-8

    def test_zero_eta_gives_zero_matrix(self):
        es = eigen.eigh(np.eye(4))
        p = eigen.reconstruct_precision(es, np.zeros(4))
        np.testing.assert_array_equal(p.matrix, np.zeros((4, 4)))
        assert p.source == eigen.SOURCE_NN

    def test_output_spectrum_is_eta(self):
        rng = np.random.default_rng(6)
        es = eigen.eigh(random_symmetric(rng, 7))
        eta = rng.uniform(0.1, 5.0, size=7)
        p = eigen.reconstruct_precision(es, eta)
        np.testing.assert_allclose(
            np.sort(np.linalg.eigvalsh(p.matrix)), np.sort(eta), atol=1e-10
        )

    def test_permutation_invariance(self):
        rng = np.random.default_rng(7)
        es = eigen.eigh(random_symmetric(rng, 5))
        eta = rng.uniform(0.1, 2.0, size=5)
        base = eigen.reconstruct_precision(es, eta).matrix
        perm = rng.permutation(5)
        shuffled = eigen.EigenSystem.__new__(eigen.EigenSystem)
        shuffled.eigenvalues = es.eigenvalues[perm]
        shuffled.eigenvectors = es.eigenvectors[:, perm]
        permuted = eigen.reconstruct_precision(shuffled, eta[perm]).matrix
        np.testing.assert_allclose(permuted, base, atol=1e-12)

    def test_negative_eta_rejected(self):
        es = eigen.eigh(np.eye(3))
        with pytest.raises(DataError):
            eigen.reconstruct_precision(es, np.array([1.0, -0.1, 1.0]))

    def test_length_mismatch_rejected(self):
        es = eigen.eigh(np.eye(3))
        with pytest.raises(DataError):
            eigen.reconstruct_precision(es, np.ones(4))


class TestInvertSpd:
    def test_identity(self):
        p = eigen.invert_spd(np.eye(4))
        np.testing.assert_allclose(p.matrix, np.eye(4), atol=1e-14)
        assert p.source == eigen.SOURCE_DIRECT

    def test_diagonal(self):
        p = eigen.invert_spd(np.diag([2.0, 4.0]))
        np.testing.assert_allclose(p.matrix, np.diag([0.5, 0.25]), atol=1e-14)

    def test_residual_small(self):
        rng = np.random.default_rng(8)
        for _ in range(20):
            g = rng.normal(size=(5, 5))
            a = g @ g.T + np.eye(5)
            p = eigen.invert_spd(a)
            assert np.linalg.norm(a @ p.matrix - np.eye(5)) <= 1e-10

    def test_singular_rejected(self):
        with pytest.raises(SingularMatrixError):
            eigen.invert_spd(np.zeros((2, 2)))
        ones = np.ones((3, 3))
        with pytest.raises(SingularMatrixError):
            eigen.invert_spd(ones)

    def test_indefinite_rejected(self):
        with pytest.raises(SingularMatrixError):
            eigen.invert_spd(np.diag([1.0, -1.0]))


class TestSpectralFloor:
    def test_lw_eigenvalues_respect_floor(self):
        from minvar.estimators import sample_covariance

        rng = np.random.default_rng(9)
        for _ in range(10):
            x = rng.normal(size=(30, 25))
            estimate = ledoit_wolf(x)
            rho = estimate.shrinkage_intensity
            mu = np.trace(sample_covariance(x).matrix) / 30
            es = eigen.eigh(estimate.matrix)
            assert es.eigenvalues[-1] >= rho * mu * (1 - 1e-10)
