"""
Reading and writing matrices.

Dense matrices are plain CSV. Sparse precision estimates can also be written
as triplets: a `# p=N` header followed by one `i j value` line per nonzero
of the upper triangle (diagonal included), 1-based. Values are written with
repr so they re-read bitwise.
"""
import logging
import os
from typing import Union

import numpy as np
from numpy.typing import NDArray

from covthresh.covmodel import DataMatrix, SymMatrix, as_array
from covthresh.exceptions import InputError

logger = logging.getLogger(__name__)

PathLike = Union[str, os.PathLike]


def _read_csv(path: PathLike, header: bool) -> NDArray:
    try:
        arr = np.genfromtxt(path, delimiter=',', skip_header=1 if header else 0, dtype=np.float64)
        if arr.ndim < 2 and arr.size:
            # a single row and a single column both come back 1-D; the first data line tells them apart
            with open(path) as f:
                lines = f.read().splitlines()[1 if header else 0:]
            first = next(line for line in lines if line.strip() and not line.lstrip().startswith('#'))
            arr = arr.reshape(-1, first.count(',') + 1)
    except (OSError, ValueError) as e:
        raise InputError(f"cannot read {path}: {e}") from e
    if arr.size == 0:
        raise InputError(f"{path} holds no values")
    return arr


def read_symmetric(path: PathLike, header: bool = False) -> SymMatrix:
    """Read a square CSV matrix; asymmetry up to 1e-12 is averaged away, anything larger is an error."""
    arr = _read_csv(path, header)
    if np.isnan(arr).any():
        raise InputError(f"{path} has missing or non-numeric entries")
    return SymMatrix(arr)


def read_data_matrix(path: PathLike, header: bool = False, impute_mean: bool = False) -> DataMatrix:
    """Read an n x p CSV of observations; empty cells become NaN and need impute_mean."""
    return DataMatrix.from_array(_read_csv(path, header), impute_mean=impute_mean)


def write_csv(path: PathLike, M):
    np.savetxt(path, as_array(M), delimiter=',', fmt='%.17g')


def write_triplets(path: PathLike, M, tol: float = 0.0):
    arr = as_array(M)
    p = arr.shape[0]
    rows, cols = np.triu_indices(p)
    values = arr[rows, cols]
    keep = np.abs(values) > tol
    with open(path, 'w') as f:
        f.write(f"# p={p}\n")
        for i, j, v in zip(rows[keep].tolist(), cols[keep].tolist(), values[keep].tolist()):
            f.write(f"{i + 1} {j + 1} {v!r}\n")
    logger.debug("wrote %d triplets to %s", int(keep.sum()), path)


def read_triplets(path: PathLike) -> SymMatrix:
    """Inverse of write_triplets; the lower triangle is mirrored from the upper."""
    try:
        with open(path) as f:
            lines = f.read().splitlines()
    except OSError as e:
        raise InputError(f"cannot read {path}: {e}") from e
    if not lines or not lines[0].startswith('# p='):
        raise InputError(f"{path} is missing its '# p=N' header")
    try:
        p = int(lines[0][len('# p='):])
    except ValueError as e:
        raise InputError(f"bad triplet header in {path}: {lines[0]!r}") from e
    if p < 1:
        raise InputError(f"bad triplet header in {path}: {lines[0]!r}")
    arr = np.zeros((p, p))
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            i, j, v = line.split()
            i, j, v = int(i) - 1, int(j) - 1, float(v)
        except ValueError as e:
            raise InputError(f"{path}:{lineno}: expected 'i j value', got {line!r}") from e
        if not (0 <= i < p and 0 <= j < p):
            raise InputError(f"{path}:{lineno}: index outside 1..{p}")
        arr[i, j] = v
        arr[j, i] = v
    return SymMatrix(arr)


def write_matrix(path: PathLike, M, fmt: str = 'csv'):
    if fmt == 'csv':
        write_csv(path, M)
    elif fmt == 'triplet':
        write_triplets(path, M)
    else:
        raise InputError(f"unknown output format {fmt!r}")
