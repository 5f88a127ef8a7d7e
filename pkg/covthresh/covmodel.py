"""
Dense numeric types for covariance and precision matrices.

Every matrix is stored dense; sparsity is exploited by splitting the problem
into connected components, not by sparse kernels.
"""
import logging
from typing import NamedTuple

import numpy as np
from numpy.typing import NDArray
from scipy.linalg import cho_factor, cho_solve, LinAlgError

from covthresh.exceptions import InputError, DimensionMismatchError, NotPositiveDefiniteError

logger = logging.getLogger(__name__)

# largest asymmetry silently averaged away when building a SymMatrix
SYMMETRY_TOL = 1e-12


class SymMatrix:
    """
    Immutable dense symmetric p x p matrix.

    The stored array is exactly symmetric: inputs are averaged with their
    transpose, and the array is flagged read-only.
    """

    __slots__ = ('_values',)

    def __init__(self, values, sym_tol: float = SYMMETRY_TOL):
        arr = np.array(values, dtype=np.float64, copy=True)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise InputError("matrix not square")
        if arr.shape[0] < 1:
            raise InputError("matrix must have at least one row")
        if not np.all(np.isfinite(arr)):
            raise InputError("matrix has non-finite entries")
        asym = np.max(np.abs(arr - arr.T)) if arr.size else 0.0
        if asym > sym_tol:
            raise InputError(f"matrix not symmetric (max asymmetry {asym:.3e})")
        arr = (arr + arr.T) / 2.0
        arr.flags.writeable = False
        self._values = arr

    @property
    def values(self) -> NDArray:
        return self._values

    @property
    def p(self) -> int:
        return self._values.shape[0]

    def __getitem__(self, key):
        return self._values[key]

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self._values
        return self._values.astype(dtype)

    def __eq__(self, other):
        if not isinstance(other, SymMatrix):
            return NotImplemented
        return np.array_equal(self._values, other._values)

    def __repr__(self):
        return f"SymMatrix(p={self.p})"

    def copy(self) -> NDArray:
        """Writable copy of the entries."""
        return self._values.copy()

    def diagonal(self) -> NDArray:
        return self._values.diagonal().copy()

    def submatrix(self, nodes) -> 'SymMatrix':
        idx = np.asarray(nodes, dtype=np.intp)
        return SymMatrix(self._values[np.ix_(idx, idx)])


def as_array(M) -> NDArray:
    """Return the entries of a SymMatrix or array-like as a float ndarray."""
    if isinstance(M, SymMatrix):
        return M.values
    return np.asarray(M, dtype=np.float64)


class DataMatrix:
    """n x p matrix of observations, one row per sample."""

    __slots__ = ('_rows',)

    def __init__(self, rows):
        arr = np.array(rows, dtype=np.float64, copy=True, ndmin=2)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise InputError("data matrix must be two dimensional with n >= 1 and p >= 1")
        if not np.all(np.isfinite(arr)):
            raise InputError("data matrix has non-finite entries")
        arr.flags.writeable = False
        self._rows = arr

    @classmethod
    def from_array(cls, rows, impute_mean: bool = False) -> 'DataMatrix':
        """Build a DataMatrix, optionally replacing missing (NaN) entries by column means."""
        arr = np.array(rows, dtype=np.float64, copy=True, ndmin=2)
        missing = np.isnan(arr)
        if missing.any():
            if not impute_mean:
                raise InputError(f"data matrix has {int(missing.sum())} missing values; pass impute_mean to fill them")
            observed = np.where(missing, 0.0, arr)
            counts = (~missing).sum(axis=0)
            if np.any(counts == 0):
                raise InputError("cannot impute a column with no observed values")
            means = observed.sum(axis=0) / counts
            arr[missing] = np.take(means, np.nonzero(missing)[1])
            logger.info("imputed %d missing values by column means", int(missing.sum()))
        return cls(arr)

    @property
    def rows(self) -> NDArray:
        return self._rows

    @property
    def n(self) -> int:
        return self._rows.shape[0]

    @property
    def p(self) -> int:
        return self._rows.shape[1]


def sample_covariance(X, center: bool = True) -> SymMatrix:
    """S = X'X / n, after subtracting column means when `center` is set."""
    data = X if isinstance(X, DataMatrix) else DataMatrix(X)
    rows = data.rows
    if center:
        rows = rows - rows.mean(axis=0)
    # X.T @ X is symmetric only up to rounding
    return SymMatrix(rows.T @ rows / data.n, sym_tol=np.inf)


def to_correlation(S: SymMatrix) -> SymMatrix:
    """Rescale S to unit diagonal: R_ij = S_ij / sqrt(S_ii S_jj)."""
    arr = as_array(S)
    d = arr.diagonal()
    if np.any(d <= 0):
        raise InputError("correlation needs a strictly positive diagonal")
    scale = np.sqrt(d)
    R = arr / np.outer(scale, scale)
    np.clip(R, -1.0, 1.0, out=R)
    np.fill_diagonal(R, 1.0)
    return SymMatrix(R, sym_tol=np.inf)


class SpdInverse(NamedTuple):
    inverse: SymMatrix
    logdet: float


def _cholesky(arr: NDArray):
    try:
        factor = cho_factor(arr, lower=True, check_finite=False)
    except LinAlgError as e:
        raise NotPositiveDefiniteError(f"matrix is not positive definite: {e}") from e
    if np.any(factor[0].diagonal() <= 0):
        raise NotPositiveDefiniteError("matrix is not positive definite: non-positive pivot")
    return factor


def spd_logdet(M) -> float:
    """log det(M) from the Cholesky factor of M."""
    factor = _cholesky(as_array(M))
    return float(2.0 * np.sum(np.log(factor[0].diagonal())))


def spd_factor_inverse(M) -> SpdInverse:
    """Invert a symmetric positive definite matrix via its Cholesky factor.

    Returns:
        SpdInverse: the inverse and log det(M).

    Raises:
        NotPositiveDefiniteError: if factorization meets a non-positive pivot.
    """
    arr = as_array(M)
    factor = _cholesky(arr)
    inv = cho_solve(factor, np.eye(arr.shape[0]), check_finite=False)
    logdet = float(2.0 * np.sum(np.log(factor[0].diagonal())))
    return SpdInverse(SymMatrix(inv, sym_tol=np.inf), logdet)


def objective(S, theta, lam: float) -> float:
    """-log det(Theta) + tr(S Theta) + lam * sum_ij |Theta_ij|, diagonal included."""
    s = as_array(S)
    t = as_array(theta)
    if s.shape != t.shape:
        raise DimensionMismatchError(f"S is {s.shape} but Theta is {t.shape}")
    if lam < 0:
        raise InputError(f"lambda must be nonnegative, got {lam}")
    logdet = spd_logdet(t)
    return float(-logdet + np.sum(s * t) + lam * np.sum(np.abs(t)))
