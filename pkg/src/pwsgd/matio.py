"""Matrix Market and CSV readers/writers."""

from __future__ import annotations

import io

import numpy as np
import scipy.io
import scipy.sparse as sp

from .errors import DataFormatError
from .linalg import validate_sparse


def read_matrix_market(path) -> sp.csr_array:
    """Read a .mtx file into a validated CSR array."""
    try:
        M = scipy.io.mmread(path)
    except Exception as e:
        raise DataFormatError(f"{path}: not a readable Matrix Market file: {e}") from e
    return validate_sparse(M)


def write_matrix_market(path, M) -> None:
    """Write a sparse (or dense) matrix as a .mtx file."""
    if not sp.issparse(M):
        M = sp.csr_array(np.asarray(M, dtype=float))
    scipy.io.mmwrite(path, validate_sparse(M))


def read_csv_matrix(path_or_buf) -> np.ndarray:
    """Read a plain CSV file (one row per line, comma separated) as a dense matrix.

    A non-numeric first line is treated as a header and skipped.  Any other
    non-numeric field or a ragged row raises :class:`DataFormatError` with the
    offending 1-based line number.
    """
    if isinstance(path_or_buf, io.IOBase):
        lines = path_or_buf.read().splitlines()
        name = "<buffer>"
    else:
        name = str(path_or_buf)
        with open(path_or_buf, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()

    rows: list[list[float]] = []
    width = None
    bad: list[int] = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        fields = [f.strip() for f in line.split(",")]
        try:
            vals = [float(f) for f in fields]
        except ValueError:
            if lineno == 1 and not rows:
                continue  # header line
            bad.append(lineno)
            continue
        if width is None:
            width = len(vals)
        elif len(vals) != width:
            raise DataFormatError(
                f"{name}: line {lineno} has {len(vals)} fields, expected {width}"
            )
        rows.append(vals)
    if bad:
        raise DataFormatError(f"{name}: non-numeric fields on lines {bad}")
    if not rows:
        raise DataFormatError(f"{name}: no data rows")
    return np.asarray(rows, dtype=float)


def write_csv_matrix(path, M, header: str | None = None) -> None:
    """Write a dense matrix as plain CSV, optionally with a header line."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    with open(path, "w", encoding="utf-8") as fh:
        if header:
            fh.write(header + "\n")
        for row in M:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
