"""
Unit tests for the banded LU factorization and solves.
"""

import numpy as np
import pytest

from app.band_linalg import BandMatrix, factor, solve, solve_banded
from app.errors import DimensionMismatch, SingularMatrix


def random_band(rng, n, kl, ku, complex_entries=True):
    """Diagonally dominant random band matrix as a dense array."""
    dense = np.zeros((n, n), dtype=np.complex128 if complex_entries else np.float64)
    for offset in range(-kl, ku + 1):
        if offset == 0:
            continue
        size = n - abs(offset)
        values = rng.standard_normal(size)
        if complex_entries:
            values = values + 1j * rng.standard_normal(size)
        dense += np.diag(values, offset)
    row_sums = np.sum(np.abs(dense), axis=1)
    phases = np.exp(1j * rng.uniform(0, 2 * np.pi, n)) if complex_entries else np.sign(rng.standard_normal(n))
    dense += np.diag((row_sums + 1.0) * phases)
    return dense


class TestBandMatrix:
    """Test cases for band storage."""

    def test_storage_shape_is_validated(self):
        with pytest.raises(DimensionMismatch):
            BandMatrix(order=5, lower_bandwidth=1, upper_bandwidth=1, storage=np.zeros((3, 5)))

    def test_band_must_fit_order(self):
        with pytest.raises(DimensionMismatch):
            BandMatrix.zeros(2, 2, 2)

    def test_from_dense_rejects_entries_outside_band(self):
        dense = np.eye(4)
        dense[0, 3] = 1.0
        with pytest.raises(DimensionMismatch):
            BandMatrix.from_dense(dense, 1, 1)

    def test_dense_round_trip(self):
        rng = np.random.default_rng(1)
        dense = random_band(rng, 12, 2, 1)
        matrix = BandMatrix.from_dense(dense, 2, 1)
        np.testing.assert_array_equal(matrix.to_dense(), dense)

    def test_matvec_matches_dense_product(self):
        rng = np.random.default_rng(2)
        dense = random_band(rng, 30, 2, 2)
        x = rng.standard_normal(30) + 1j * rng.standard_normal(30)
        matrix = BandMatrix.from_dense(dense, 2, 2)
        np.testing.assert_allclose(matrix.matvec(x), dense @ x, rtol=1e-13, atol=1e-13)

    def test_set_identity_row(self):
        matrix = BandMatrix.from_dense(np.full((5, 5), 2.0) * (np.abs(np.subtract.outer(range(5), range(5))) <= 1), 1, 1)
        matrix.set_identity_row(2)
        dense = matrix.to_dense()
        np.testing.assert_array_equal(dense[2], [0, 0, 1, 0, 0])
        assert dense[1, 2] == 2.0

    def test_add_entries_accumulates(self):
        matrix = BandMatrix.zeros(4, 1, 1)
        matrix.add_entries([1, 1], [1, 1], [1.0, 2.5])
        assert matrix.to_dense()[1, 1] == 3.5


class TestFactorSolve:
    """Test cases for factor and solve."""

    def test_identity_returns_input(self):
        matrix = BandMatrix.from_dense(np.eye(8), 1, 1)
        rhs = np.arange(8) + 1j * np.arange(8)
        np.testing.assert_array_equal(solve(factor(matrix), rhs), rhs)

    def test_diagonal_scaling(self):
        n = 10
        matrix = BandMatrix.from_dense(np.diag(np.full(n, 2j)), 0, 0)
        x = solve_banded(matrix, np.full(n, 2j))
        np.testing.assert_allclose(x, np.ones(n), rtol=0, atol=1e-15)

    def test_pentadiagonal_known_solution(self):
        rng = np.random.default_rng(50)
        dense = random_band(rng, 50, 2, 2)
        matrix = BandMatrix.from_dense(dense, 2, 2)
        x_known = rng.standard_normal(50) + 1j * rng.standard_normal(50)
        rhs = matrix.matvec(x_known)
        x = solve(factor(matrix), rhs)
        assert np.linalg.norm(x - x_known) / np.linalg.norm(x_known) <= 1e-12

    def test_random_instances_match_dense_elimination(self):
        rng = np.random.default_rng(2024)
        for _ in range(200):
            n = int(rng.integers(5, 501))
            kl, ku = int(rng.integers(0, 4)), int(rng.integers(0, 4))
            dense = random_band(rng, n, kl, ku)
            rhs = rng.standard_normal(n) + 1j * rng.standard_normal(n)
            expected = np.linalg.solve(dense, rhs)
            x = solve_banded(BandMatrix.from_dense(dense, kl, ku), rhs)
            assert np.linalg.norm(x - expected) / np.linalg.norm(expected) <= 1e-10

    def test_factorization_reuse(self):
        rng = np.random.default_rng(7)
        dense = random_band(rng, 40, 1, 2)
        matrix = BandMatrix.from_dense(dense, 1, 2)
        shared = factor(matrix)
        first = rng.standard_normal(40) + 1j * rng.standard_normal(40)
        second = rng.standard_normal(40) - 1j * rng.standard_normal(40)
        solve(shared, first)
        np.testing.assert_array_equal(solve(shared, second), solve(factor(matrix), second))

    def test_factor_leaves_matrix_untouched(self):
        rng = np.random.default_rng(8)
        matrix = BandMatrix.from_dense(random_band(rng, 20, 2, 2), 2, 2)
        before = matrix.storage.copy()
        factor(matrix)
        np.testing.assert_array_equal(matrix.storage, before)

    def test_real_factors_with_complex_rhs(self):
        rng = np.random.default_rng(9)
        dense = random_band(rng, 25, 1, 1, complex_entries=False)
        rhs = rng.standard_normal(25) + 1j * rng.standard_normal(25)
        x = solve_banded(BandMatrix.from_dense(dense, 1, 1), rhs)
        np.testing.assert_allclose(dense @ x, rhs, rtol=1e-12, atol=1e-12)

    def test_zero_row_is_singular(self):
        rng = np.random.default_rng(10)
        dense = random_band(rng, 12, 1, 1)
        dense[5, :] = 0.0
        with pytest.raises(SingularMatrix):
            factor(BandMatrix.from_dense(dense, 1, 1))

    def test_zero_matrix_is_singular(self):
        with pytest.raises(SingularMatrix) as exc_info:
            factor(BandMatrix.zeros(6, 1, 1))
        assert exc_info.value.pivot_index == 0

    def test_negligible_pivot_is_singular(self):
        dense = np.diag([1.0, 1.0, 1e-20, 1.0]).astype(np.complex128)
        with pytest.raises(SingularMatrix) as exc_info:
            factor(BandMatrix.from_dense(dense, 1, 1))
        assert exc_info.value.pivot_index == 2

    def test_threshold_is_configurable(self):
        dense = np.diag([1.0, 1e-20]).astype(np.complex128)
        factorization = factor(BandMatrix.from_dense(dense, 0, 0), pivot_threshold=0.0)
        assert factorization.min_pivot == pytest.approx(1e-20)

    def test_rhs_length_mismatch(self):
        factorization = factor(BandMatrix.from_dense(np.eye(4), 1, 1))
        with pytest.raises(DimensionMismatch):
            solve(factorization, np.ones(5))
