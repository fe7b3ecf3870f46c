"""Sparse matrix container, Matrix Market I/O, and deterministic test-matrix generators."""

from __future__ import annotations

import numpy as np
import scipy.io
import scipy.sparse


class MatrixFormatError(Exception):
    """Malformed or unsupported matrix input."""


class SparseMatrix:
    """Square sparse matrix in compressed sparse column (CSC) form.

    Row indices within each column are strictly increasing. The value array
    may contain explicit zeros; stored zeros count as part of the pattern
    (they become structural nonzeros downstream).
    """

    def __init__(self, n, col_ptr, row_idx, values):
        self.n = int(n)
        self.col_ptr = np.ascontiguousarray(col_ptr, dtype=np.int64)
        self.row_idx = np.ascontiguousarray(row_idx, dtype=np.int64)
        self.values = np.ascontiguousarray(values, dtype=np.float64)
        self._check()

    def _check(self):
        n = self.n
        if n < 1:
            raise ValueError("matrix dimension must be >= 1")
        if len(self.col_ptr) != n + 1 or self.col_ptr[0] != 0:
            raise ValueError("bad col_ptr")
        if np.any(np.diff(self.col_ptr) < 0) or self.col_ptr[-1] != len(self.row_idx):
            raise ValueError("col_ptr not monotone or inconsistent with nnz")
        if len(self.values) != len(self.row_idx):
            raise ValueError("values/row_idx length mismatch")
        for j in range(n):
            rows = self.row_idx[self.col_ptr[j]:self.col_ptr[j + 1]]
            if rows.size and (rows[0] < 0 or rows[-1] >= n):
                raise ValueError("row index out of range")
            if np.any(np.diff(rows) <= 0):
                raise ValueError(f"row indices in column {j} not strictly increasing")

    @property
    def nnz(self):
        return len(self.row_idx)

    @classmethod
    def from_coo(cls, n, rows, cols, vals):
        """Build from triplets; duplicates are summed, explicit zeros kept."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=np.float64)
        if rows.size:
            if rows.min() < 0 or rows.max() >= n or cols.min() < 0 or cols.max() >= n:
                raise MatrixFormatError("index out of range")
        order = np.lexsort((rows, cols))
        rows, cols, vals = rows[order], cols[order], vals[order]
        if rows.size:
            keep = np.empty(rows.size, dtype=bool)
            keep[0] = True
            keep[1:] = (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])
            idx = np.flatnonzero(keep)
            vals = np.add.reduceat(vals, idx)
            rows, cols = rows[idx], cols[idx]
        col_ptr = np.zeros(n + 1, dtype=np.int64)
        np.add.at(col_ptr, cols + 1, 1)
        np.cumsum(col_ptr, out=col_ptr)
        return cls(n, col_ptr, rows, vals)

    @classmethod
    def from_dense(cls, dense):
        dense = np.asarray(dense, dtype=np.float64)
        rows, cols = np.nonzero(dense)
        return cls.from_coo(dense.shape[0], rows, cols, dense[rows, cols])

    def to_dense(self):
        out = np.zeros((self.n, self.n))
        for j in range(self.n):
            lo, hi = self.col_ptr[j], self.col_ptr[j + 1]
            out[self.row_idx[lo:hi], j] = self.values[lo:hi]
        return out

    def to_coo(self):
        cols = np.repeat(np.arange(self.n, dtype=np.int64), np.diff(self.col_ptr))
        return self.row_idx.copy(), cols, self.values.copy()

    def col_rows(self, j):
        return self.row_idx[self.col_ptr[j]:self.col_ptr[j + 1]]

    def col_values(self, j):
        return self.values[self.col_ptr[j]:self.col_ptr[j + 1]]

    def pattern_symmetric(self):
        r, c, _ = self.to_coo()
        a = set(zip(r.tolist(), c.tolist()))
        return all((j, i) in a for (i, j) in a)

    def max_abs(self):
        return float(np.max(np.abs(self.values))) if self.nnz else 0.0

    def __eq__(self, other):
        return (isinstance(other, SparseMatrix) and self.n == other.n
                and np.array_equal(self.col_ptr, other.col_ptr)
                and np.array_equal(self.row_idx, other.row_idx)
                and np.array_equal(self.values, other.values))


def read_matrix_market(path) -> SparseMatrix:
    """Read a coordinate-format Matrix Market file into full (expanded) CSC form.

    Symmetric storage is expanded, duplicates are summed and columns sorted.
    Only real/integer/pattern fields and general/symmetric symmetry are accepted.
    """
    try:
        rows, cols, entries, fmt, field, symmetry = scipy.io.mminfo(path)
    except Exception as exc:
        raise MatrixFormatError(f"malformed Matrix Market header: {exc}") from exc
    if fmt != "coordinate":
        raise MatrixFormatError("only coordinate format is supported")
    if field == "complex":
        raise MatrixFormatError("complex matrices are not supported")
    if symmetry not in ("general", "symmetric"):
        raise MatrixFormatError(f"unsupported symmetry kind: {symmetry}")
    if rows != cols:
        raise MatrixFormatError(f"matrix is not square: {rows}x{cols}")
    try:
        mat = scipy.io.mmread(path)  # symmetric storage expanded by scipy
    except Exception as exc:
        raise MatrixFormatError(f"failed to parse {path}: {exc}") from exc
    coo = mat.tocoo()
    return SparseMatrix.from_coo(rows, coo.row, coo.col, coo.data)


def write_matrix_market(A: SparseMatrix, path):
    """Write in coordinate/real/general form, keeping explicit zeros."""
    r, c, v = A.to_coo()
    with open(path, "w") as f:
        f.write("%%MatrixMarket matrix coordinate real general\n")
        f.write(f"{A.n} {A.n} {A.nnz}\n")
        for i, j, x in zip(r, c, v):
            f.write(f"{i + 1} {j + 1} {x:.17g}\n")


def symmetrize_pattern(A: SparseMatrix) -> SparseMatrix:
    """Extend the pattern to pattern(A) | pattern(A^T).

    Positions present only in the transpose get an explicit numeric zero;
    existing values are unchanged. Idempotent.
    """
    r, c, v = A.to_coo()
    rows = np.concatenate([r, c])
    cols = np.concatenate([c, r])
    vals = np.concatenate([v, np.zeros_like(v)])
    # duplicate (i,i) and already-symmetric positions collapse to value + 0
    return SparseMatrix.from_coo(A.n, rows, cols, vals)


def gen_laplacian_2d(nx: int, ny: int) -> SparseMatrix:
    """5-point stencil on an nx-by-ny grid, diagonal 4, off-diagonals -1.

    Natural row-major node ordering; symmetric positive definite and
    diagonally dominant, so unpivoted LU always exists.
    """
    if nx < 1 or ny < 1:
        raise ValueError("grid dimensions must be >= 1")
    n = nx * ny
    rows, cols, vals = [], [], []

    def node(ix, iy):
        return iy * nx + ix

    for iy in range(ny):
        for ix in range(nx):
            i = node(ix, iy)
            rows.append(i); cols.append(i); vals.append(4.0)
            for dx, dy in ((-1, 0), (1, 0), (0, -1), (0, 1)):
                jx, jy = ix + dx, iy + dy
                if 0 <= jx < nx and 0 <= jy < ny:
                    rows.append(node(jx, jy)); cols.append(i); vals.append(-1.0)
    return SparseMatrix.from_coo(n, rows, cols, vals)


def gen_tridiagonal(n: int, diag=4.0, off=-1.0) -> SparseMatrix:
    if n < 1:
        raise ValueError("n must be >= 1")
    rows = list(range(n)) + list(range(1, n)) + list(range(n - 1))
    cols = list(range(n)) + list(range(n - 1)) + list(range(1, n))
    vals = [diag] * n + [off] * (2 * (n - 1))
    return SparseMatrix.from_coo(n, rows, cols, vals)


def gen_arrow(n: int) -> SparseMatrix:
    """Diagonal matrix plus a dense last row and column; diagonally dominant."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rows, cols, vals = [], [], []
    for i in range(n):
        rows.append(i); cols.append(i); vals.append(2.0 if i < n - 1 else float(n))
    for i in range(n - 1):
        rows.append(n - 1); cols.append(i); vals.append(-1.0)
        rows.append(i); cols.append(n - 1); vals.append(-1.0)
    return SparseMatrix.from_coo(n, rows, cols, vals)


def gen_random_diag_dominant(n: int, seed: int, bandwidth=10, density=0.4) -> SparseMatrix:
    """Random banded symmetric matrix made strictly diagonally dominant."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    dense = np.zeros((n, n))
    for j in range(n):
        for i in range(j + 1, min(n, j + 1 + bandwidth)):
            if rng.random() < density:
                x = rng.uniform(-1.0, 1.0)
                dense[i, j] = x
                dense[j, i] = x
    offsum = np.sum(np.abs(dense), axis=1)
    dense[np.diag_indices(n)] = offsum + 1.0 + rng.random(n)
    return SparseMatrix.from_dense(dense)
