"""
Band Linear Algebra Module

This module provides Gaussian elimination with partial pivoting for complex
banded matrices. Matrices are kept in LAPACK general-band storage: the main
diagonal and ``lower_bandwidth``/``upper_bandwidth`` off-diagonals occupy the
bottom ``lower_bandwidth + upper_bandwidth + 1`` rows, and ``lower_bandwidth``
extra rows on top hold the fill-in created by row interchanges. Factorization
and triangular solves are delegated to LAPACK ``?gbtrf``/``?gbtrs``.

A factorization never changes after it is created, so one factorization can be
reused for any number of right-hand sides, from several threads at once.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numpy.typing import ArrayLike
from scipy.linalg import get_lapack_funcs

from app.errors import DimensionMismatch, SingularMatrix, SolverError

logger = logging.getLogger(__name__)

# Relative pivot size below which a matrix is reported singular.
DEFAULT_PIVOT_THRESHOLD = 1e-14


@dataclass
class BandMatrix:
    """Square banded matrix in LAPACK general-band storage.

    Entry ``A[i, j]`` lives at ``storage[kl + ku + i - j, j]`` where ``kl`` and
    ``ku`` are the lower and upper bandwidths. The first ``kl`` rows of
    ``storage`` are workspace for pivoting fill-in.
    """
    order: int
    lower_bandwidth: int
    upper_bandwidth: int
    storage: np.ndarray

    def __post_init__(self):
        kl, ku, n = self.lower_bandwidth, self.upper_bandwidth, self.order
        if n < 1:
            raise DimensionMismatch(f"Matrix order must be positive, got {n}")
        if kl < 0 or ku < 0:
            raise DimensionMismatch(f"Bandwidths must be non-negative, got kl={kl}, ku={ku}")
        if kl + ku + 1 > max(2 * n - 1, 1):
            raise DimensionMismatch(
                f"Band of width {kl + ku + 1} does not fit a matrix of order {n}"
            )
        expected = (2 * kl + ku + 1, n)
        if self.storage.shape != expected:
            raise DimensionMismatch(f"Band storage has shape {self.storage.shape}, expected {expected}")

    @classmethod
    def zeros(cls, order: int, lower_bandwidth: int, upper_bandwidth: int,
              dtype=np.complex128) -> "BandMatrix":
        storage = np.zeros((2 * lower_bandwidth + upper_bandwidth + 1, order), dtype=dtype)
        return cls(order, lower_bandwidth, upper_bandwidth, storage)

    @classmethod
    def from_dense(cls, dense: ArrayLike, lower_bandwidth: int, upper_bandwidth: int) -> "BandMatrix":
        """Pack a dense square matrix into band storage.

        Raises:
            DimensionMismatch: If the matrix is not square or has entries outside the band.
        """
        dense = np.asarray(dense)
        if dense.ndim != 2 or dense.shape[0] != dense.shape[1]:
            raise DimensionMismatch(f"Expected a square matrix, got shape {dense.shape}")
        n = dense.shape[0]
        dtype = np.result_type(dense.dtype, np.float64)
        matrix = cls.zeros(n, lower_bandwidth, upper_bandwidth, dtype=dtype)
        rows, cols = np.nonzero(dense)
        offsets = cols - rows
        if np.any(offsets > upper_bandwidth) or np.any(-offsets > lower_bandwidth):
            raise DimensionMismatch("Dense matrix has nonzero entries outside the declared band")
        matrix.add_entries(rows, cols, dense[rows, cols])
        return matrix

    @property
    def main_row(self) -> int:
        """Row of ``storage`` that holds the main diagonal."""
        return self.lower_bandwidth + self.upper_bandwidth

    def _diagonal_slice(self, offset: int):
        n = self.order
        if offset > self.upper_bandwidth or -offset > self.lower_bandwidth:
            raise DimensionMismatch(f"Diagonal offset {offset} lies outside the band")
        row = self.main_row - offset
        return (row, slice(offset, n)) if offset >= 0 else (row, slice(0, n + offset))

    def diagonal(self, offset: int = 0) -> np.ndarray:
        """Return a writable view of the diagonal ``A[i, i + offset]``."""
        row, cols = self._diagonal_slice(offset)
        return self.storage[row, cols]

    def set_diagonal(self, offset: int, values: ArrayLike) -> None:
        row, cols = self._diagonal_slice(offset)
        self.storage[row, cols] = values

    def add_entries(self, rows: ArrayLike, cols: ArrayLike, values: ArrayLike) -> None:
        """Accumulate ``values`` into ``A[rows, cols]``; repeated positions add up."""
        rows = np.asarray(rows, dtype=np.intp)
        cols = np.asarray(cols, dtype=np.intp)
        offsets = cols - rows
        if np.any(offsets > self.upper_bandwidth) or np.any(-offsets > self.lower_bandwidth):
            raise DimensionMismatch("Entry lies outside the declared band")
        np.add.at(self.storage, (self.main_row + rows - cols, cols), values)

    def set_identity_row(self, row: int) -> None:
        """Replace row ``row`` by the corresponding identity row (Dirichlet condition)."""
        n = self.order
        lo = max(0, row - self.lower_bandwidth)
        hi = min(n, row + self.upper_bandwidth + 1)
        cols = np.arange(lo, hi)
        self.storage[self.main_row + row - cols, cols] = 0
        self.storage[self.main_row, row] = 1

    def to_dense(self) -> np.ndarray:
        n = self.order
        dense = np.zeros((n, n), dtype=self.storage.dtype)
        for offset in range(-self.lower_bandwidth, self.upper_bandwidth + 1):
            values = self.diagonal(offset)
            if offset >= 0:
                dense[np.arange(n - offset), np.arange(offset, n)] = values
            else:
                dense[np.arange(-offset, n), np.arange(n + offset)] = values
        return dense

    def matvec(self, x: ArrayLike) -> np.ndarray:
        """Compute ``A @ x`` directly from band storage."""
        x = np.asarray(x)
        n = self.order
        if x.shape[0] != n:
            raise DimensionMismatch(f"Vector of length {x.shape[0]} for a matrix of order {n}")
        y = np.zeros(x.shape, dtype=np.result_type(self.storage.dtype, x.dtype))
        for offset in range(-self.lower_bandwidth, self.upper_bandwidth + 1):
            d = self.diagonal(offset)
            if offset >= 0:
                y[: n - offset] += (d * x[offset:].T).T
            else:
                y[-offset:] += (d * x[: n + offset].T).T
        return y

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.storage[self.lower_bandwidth:]))) if self.order else 0.0


@dataclass(frozen=True)
class BandFactorization:
    """Packed LU factors with pivots produced by :func:`factor`."""
    order: int
    lower_bandwidth: int
    upper_bandwidth: int
    lu: np.ndarray
    pivots: np.ndarray
    min_pivot: float


def factor(matrix: BandMatrix, pivot_threshold: float = DEFAULT_PIVOT_THRESHOLD) -> BandFactorization:
    """Factor a banded matrix as P A = L U with partial pivoting.

    The input matrix is left untouched.

    Args:
        matrix: Matrix to factor.
        pivot_threshold: Relative threshold; a pivot with magnitude below
            ``pivot_threshold * max|A|`` marks the matrix singular.

    Returns:
        The factorization, reusable across right-hand sides.

    Raises:
        SingularMatrix: If an exactly zero or numerically negligible pivot occurs.
    """
    kl, ku = matrix.lower_bandwidth, matrix.upper_bandwidth
    ab = np.array(matrix.storage, copy=True)
    scale = matrix.max_abs()
    if scale == 0.0:
        raise SingularMatrix("Matrix is identically zero", pivot_index=0)

    gbtrf, = get_lapack_funcs(('gbtrf',), (ab,))
    lu, pivots, info = gbtrf(ab, kl, ku, overwrite_ab=True)
    if info < 0:
        raise SolverError(f"gbtrf rejected argument {-info}")
    if info > 0:
        logger.debug(f"Exactly zero pivot at row {info - 1} of {matrix.order}")
        raise SingularMatrix(f"Zero pivot at row {info - 1}", pivot_index=info - 1)

    # U diagonal sits on the main row of the factored storage.
    u_diag = np.abs(lu[kl + ku, :])
    min_index = int(np.argmin(u_diag))
    min_pivot = float(u_diag[min_index])
    if min_pivot < pivot_threshold * scale:
        raise SingularMatrix(
            f"Pivot {min_pivot:.3e} at row {min_index} is below {pivot_threshold:.1e} * max|A|",
            pivot_index=min_index,
        )
    return BandFactorization(matrix.order, kl, ku, lu, pivots, min_pivot)


def solve(factorization: BandFactorization, rhs: ArrayLike) -> np.ndarray:
    """Solve A x = rhs using a stored factorization.

    Args:
        factorization: Result of :func:`factor`.
        rhs: Vector of length ``order`` or an array with ``order`` rows.

    Returns:
        The solution, with the common dtype of the factors and the right-hand side.

    Raises:
        DimensionMismatch: If ``rhs`` does not have ``order`` rows.
    """
    b = np.asarray(rhs)
    if b.ndim == 0 or b.shape[0] != factorization.order:
        raise DimensionMismatch(
            f"Right-hand side has {b.shape[0] if b.ndim else 0} rows, matrix order is {factorization.order}"
        )
    lu = factorization.lu
    if np.iscomplexobj(b) and not np.iscomplexobj(lu):
        return _gbtrs(factorization, b.real) + 1j * _gbtrs(factorization, b.imag)
    return _gbtrs(factorization, b.astype(lu.dtype, copy=False))


def _gbtrs(factorization: BandFactorization, b: np.ndarray) -> np.ndarray:
    gbtrs, = get_lapack_funcs(('gbtrs',), (factorization.lu,))
    x, info = gbtrs(factorization.lu, factorization.lower_bandwidth,
                    factorization.upper_bandwidth, b, factorization.pivots)
    if info != 0:
        raise SolverError(f"gbtrs failed with info={info}")
    return x


def solve_banded(matrix: BandMatrix, rhs: ArrayLike,
                 pivot_threshold: Optional[float] = None) -> np.ndarray:
    """Factor and solve in one call."""
    threshold = DEFAULT_PIVOT_THRESHOLD if pivot_threshold is None else pivot_threshold
    return solve(factor(matrix, threshold), rhs)
