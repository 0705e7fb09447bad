import io

import numpy as np
import pytest
import scipy.sparse as sp

from pwsgd.errors import DataFormatError
from pwsgd.matio import (
    read_csv_matrix,
    read_matrix_market,
    write_csv_matrix,
    write_matrix_market,
)


def test_matrix_market_roundtrip(tmp_path):
    M = sp.random_array((12, 5), density=0.3, random_state=3, format="csr")
    path = tmp_path / "m.mtx"
    write_matrix_market(path, M)
    out = read_matrix_market(path)
    assert (abs(out - sp.csr_array(M)).max() if out.nnz else 0.0) <= 1e-12
    assert out.shape == (12, 5)


def test_matrix_market_dense_input(tmp_path):
    M = np.arange(6.0).reshape(3, 2)
    path = tmp_path / "d.mtx"
    write_matrix_market(path, M)
    np.testing.assert_allclose(read_matrix_market(path).todense(), M)


def test_matrix_market_bad_file(tmp_path):
    p = tmp_path / "junk.mtx"
    p.write_text("this is not a matrix\n")
    with pytest.raises(DataFormatError):
        read_matrix_market(p)


def test_csv_basic():
    M = read_csv_matrix(io.StringIO("1,2,3\n4,5,6\n"))
    np.testing.assert_allclose(M, [[1, 2, 3], [4, 5, 6]])


def test_csv_header_autodetected():
    M = read_csv_matrix(io.StringIO("a,b,c\n1,2,3\n"))
    np.testing.assert_allclose(M, [[1, 2, 3]])


def test_csv_bad_row_reports_line_number():
    with pytest.raises(DataFormatError, match=r"lines \[3\]"):
        read_csv_matrix(io.StringIO("1,2\n3,4\n5,x\n"))


def test_csv_ragged_row_rejected():
    with pytest.raises(DataFormatError, match="line 2"):
        read_csv_matrix(io.StringIO("1,2\n3,4,5\n"))


def test_csv_empty_rejected():
    with pytest.raises(DataFormatError):
        read_csv_matrix(io.StringIO(""))


def test_csv_roundtrip(tmp_path, rng):
    M = rng.standard_normal((8, 3))
    path = tmp_path / "m.csv"
    write_csv_matrix(path, M)
    np.testing.assert_array_equal(read_csv_matrix(path), M)  # repr() is lossless


def test_csv_roundtrip_with_header(tmp_path):
    path = tmp_path / "h.csv"
    write_csv_matrix(path, np.eye(2), header="x,y")
    np.testing.assert_allclose(read_csv_matrix(path), np.eye(2))
