import numpy as np
import pytest

from covthresh.covmodel import SymMatrix, sample_covariance
from covthresh.exceptions import InputError
from covthresh.glasso import solve_block
from covthresh.matrix_io import (
    read_data_matrix,
    read_symmetric,
    read_triplets,
    write_csv,
    write_matrix,
    write_triplets,
)


def test_read_symmetric(tmp_path):
    path = tmp_path / "S.csv"
    path.write_text("1,0.5,0.1\n0.5,1,0.2\n0.1,0.2,1\n")
    S = read_symmetric(path)
    assert S.p == 3
    assert S[0, 1] == 0.5


def test_read_symmetric_with_header(tmp_path):
    path = tmp_path / "S.csv"
    path.write_text("a,b\n2,1\n1,2\n")
    np.testing.assert_array_equal(read_symmetric(path, header=True).values, [[2, 1], [1, 2]])


def test_read_symmetric_not_square(tmp_path):
    path = tmp_path / "S.csv"
    path.write_text("1,2,3\n4,5,6\n")
    with pytest.raises(InputError, match="matrix not square"):
        read_symmetric(path)


def test_read_symmetric_asymmetric(tmp_path):
    path = tmp_path / "S.csv"
    path.write_text("1,0.5\n0.4,1\n")
    with pytest.raises(InputError, match="not symmetric"):
        read_symmetric(path)


def test_read_symmetric_averages_tiny_asymmetry(tmp_path):
    path = tmp_path / "S.csv"
    path.write_text("1,0.50000000000001\n0.5,1\n")
    S = read_symmetric(path)
    assert S[0, 1] == S[1, 0]


def test_read_symmetric_missing_file(tmp_path):
    with pytest.raises(InputError):
        read_symmetric(tmp_path / "nope.csv")


def test_read_data_matrix_imputes(tmp_path):
    path = tmp_path / "X.csv"
    path.write_text("1,2\n,4\n3,\n")
    with pytest.raises(InputError, match="missing"):
        read_data_matrix(path)
    X = read_data_matrix(path, impute_mean=True)
    np.testing.assert_array_equal(X.rows, [[1, 2], [2, 4], [3, 3]])


def test_read_data_matrix_single_column(tmp_path):
    path = tmp_path / "X.csv"
    path.write_text("1\n2\n3\n4\n")
    X = read_data_matrix(path)
    assert (X.n, X.p) == (4, 1)
    assert sample_covariance(X)[0, 0] == pytest.approx(1.25)


def test_read_data_matrix_single_row(tmp_path):
    path = tmp_path / "X.csv"
    path.write_text("x,y,z\n1,2,3\n")
    X = read_data_matrix(path, header=True)
    assert (X.n, X.p) == (1, 3)


def test_read_symmetric_single_entry(tmp_path):
    path = tmp_path / "S.csv"
    path.write_text("2.5\n")
    assert read_symmetric(path).values.tolist() == [[2.5]]


def test_csv_round_trip_is_bitwise(tmp_path):
    rng = np.random.default_rng(0)
    B = rng.standard_normal((6, 6))
    S = SymMatrix(B @ B.T)
    path = tmp_path / "S.csv"
    write_csv(path, S)
    assert read_symmetric(path) == S


def test_triplet_round_trip_is_bitwise(tmp_path):
    S = [[1, 0.8, 0.0], [0.8, 1, 0.0], [0.0, 0.0, 2.0]]
    theta = solve_block(np.array(S)[:2, :2], 0.3).theta.values
    full = np.zeros((3, 3))
    full[:2, :2] = theta
    full[2, 2] = 1 / 2.3
    path = tmp_path / "theta.txt"
    write_triplets(path, full)
    back = read_triplets(path)
    np.testing.assert_array_equal(back.values, full)


def test_triplet_file_layout(tmp_path):
    path = tmp_path / "theta.txt"
    write_triplets(path, np.array([[2.0, -0.5, 0.0], [-0.5, 1.0, 0.0], [0.0, 0.0, 0.25]]))
    assert path.read_text().splitlines() == ["# p=3", "1 1 2.0", "1 2 -0.5", "2 2 1.0", "3 3 0.25"]


def test_read_triplets_errors(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("1 1 2.0\n")
    with pytest.raises(InputError):
        read_triplets(path)
    path.write_text("# p=2\n1 3 2.0\n")
    with pytest.raises(InputError):
        read_triplets(path)
    path.write_text("# p=2\n1 two 2.0\n")
    with pytest.raises(InputError):
        read_triplets(path)


def test_write_matrix_format(tmp_path):
    with pytest.raises(InputError):
        write_matrix(tmp_path / "x", np.eye(2), 'mtx')
    write_matrix(tmp_path / "x.txt", np.eye(2), 'triplet')
    assert read_triplets(tmp_path / "x.txt") == SymMatrix(np.eye(2))
