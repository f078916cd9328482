"""Compressed sparse row matrices used for projection and motion operators.

The container is deliberately minimal: immutable-by-convention arrays in
canonical CSR form (sorted, deduplicated column indices per row), with the
products dispatched through :mod:`patmoco.kernels` so the numba and numpy
backends share one code path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels

__all__ = ["SparseMatrix", "canonical_row", "csr_equal"]

#: Entries with |value| below this are dropped during canonicalization.
DROP_TOL = 1e-15


def canonical_row(cols, vals, drop_tol=DROP_TOL):
    """Sort by column, sum duplicates, and drop numerically void entries.

    The sort is stable, so contributions to one column are summed in their
    original order; canonicalizing the same input twice is bit-identical.
    """
    cols = np.asarray(cols, dtype=np.int64)
    vals = np.asarray(vals, dtype=np.float64)
    if cols.size == 0:
        return cols, vals
    order = np.argsort(cols, kind="stable")
    cols = cols[order]
    vals = vals[order]
    starts = np.flatnonzero(np.r_[True, cols[1:] != cols[:-1]])
    sums = np.add.reduceat(vals, starts)
    ucols = cols[starts]
    keep = np.abs(sums) >= drop_tol
    return ucols[keep], sums[keep]


@dataclass(eq=False)
class SparseMatrix:
    """CSR matrix: ``row_ptr`` (n_rows+1), ``col_idx`` and ``values`` (nnz)."""

    n_rows: int
    n_cols: int
    row_ptr: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.row_ptr = np.ascontiguousarray(self.row_ptr, dtype=np.int64)
        self.col_idx = np.ascontiguousarray(self.col_idx, dtype=np.int64)
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        self.validate()

    def validate(self):
        """Check the CSR invariants; raises ValueError on violation."""
        if self.n_rows < 0 or self.n_cols < 0:
            raise ValueError("negative matrix dimensions")
        if len(self.row_ptr) != self.n_rows + 1:
            raise ValueError("row_ptr length must be n_rows + 1")
        if self.row_ptr[0] != 0 or self.row_ptr[-1] != len(self.values):
            raise ValueError("row_ptr must start at 0 and end at nnz")
        if np.any(np.diff(self.row_ptr) < 0):
            raise ValueError("row_ptr must be nondecreasing")
        if len(self.col_idx) != len(self.values):
            raise ValueError("col_idx and values length mismatch")
        if len(self.col_idx):
            if self.col_idx.min() < 0 or self.col_idx.max() >= self.n_cols:
                raise ValueError("column index out of range")
            # strictly increasing within each row: the only allowed
            # non-increase in col_idx is at a row boundary
            drops = np.flatnonzero(np.diff(self.col_idx) <= 0) + 1
            if not np.all(np.isin(drops, self.row_ptr)):
                raise ValueError("column indices must increase within each row")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("matrix values must be finite")

    @property
    def nnz(self):
        return len(self.values)

    @property
    def shape(self):
        return (self.n_rows, self.n_cols)

    def apply(self, x):
        """Exact sparse product ``A @ x``."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.n_cols,):
            raise ValueError(f"expected vector of length {self.n_cols}, got {x.shape}")
        return kernels.csr_matvec(self.row_ptr, self.col_idx, self.values, x, self.n_rows)

    def apply_transpose(self, y):
        """Exact sparse product ``A.T @ y`` (the algebraic adjoint of apply)."""
        y = np.asarray(y, dtype=np.float64)
        if y.shape != (self.n_rows,):
            raise ValueError(f"expected vector of length {self.n_rows}, got {y.shape}")
        return kernels.csr_rmatvec(self.row_ptr, self.col_idx, self.values, y, self.n_cols)

    def sparsity(self):
        """Fraction of zero entries, ``1 - nnz / (n_rows * n_cols)``."""
        total = self.n_rows * self.n_cols
        if total == 0:
            return 1.0
        return 1.0 - self.nnz / total

    def row(self, i):
        """Views of the column indices and values of row ``i``."""
        lo, hi = self.row_ptr[i], self.row_ptr[i + 1]
        return self.col_idx[lo:hi], self.values[lo:hi]

    def to_dense(self):
        dense = np.zeros((self.n_rows, self.n_cols))
        for i in range(self.n_rows):
            cols, vals = self.row(i)
            dense[i, cols] = vals
        return dense

    @classmethod
    def from_rows(cls, n_rows, n_cols, rows):
        """Build from an iterable of per-row ``(cols, vals)`` in row order.

        Each row must already be canonical (see :func:`canonical_row`).
        """
        row_ptr = np.zeros(n_rows + 1, dtype=np.int64)
        col_parts = []
        val_parts = []
        count = 0
        for i, (cols, vals) in enumerate(rows):
            row_ptr[i + 1] = row_ptr[i] + len(cols)
            col_parts.append(np.asarray(cols, dtype=np.int64))
            val_parts.append(np.asarray(vals, dtype=np.float64))
            count = i + 1
        if count != n_rows:
            raise ValueError(f"expected {n_rows} rows, got {count}")
        col_idx = np.concatenate(col_parts) if col_parts else np.empty(0, np.int64)
        values = np.concatenate(val_parts) if val_parts else np.empty(0, np.float64)
        return cls(n_rows, n_cols, row_ptr, col_idx, values)

    @classmethod
    def identity(cls, n):
        return cls(
            n,
            n,
            np.arange(n + 1, dtype=np.int64),
            np.arange(n, dtype=np.int64),
            np.ones(n),
        )


def csr_equal(a, b):
    """Bitwise equality of two CSR matrices (shape, pattern and values)."""
    return (
        a.shape == b.shape
        and np.array_equal(a.row_ptr, b.row_ptr)
        and np.array_equal(a.col_idx, b.col_idx)
        and np.array_equal(a.values, b.values)
    )
