"""Vertical-stretch deformation operators and their gamma-derivatives.

The deformed image at stretch factor ``a = 1 + gamma`` about the base line
``x2 = c`` is the pull-back ``f_a(y) = f(y1, c + (y2 - c) / a)``: the output
pixel samples the input image at the pre-image of its own center. Since the
map leaves ``x1`` untouched, the interpolation is one-dimensional linear
along each image column (the bilinear weights degenerate), and with the
column-major vectorization the operator is block diagonal with one identical
``n x n`` block per image column. Samples falling outside the grid read zero;
the phantom generator keeps supports away from the boundary so this never
clips real signal.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sparse import DROP_TOL, SparseMatrix

__all__ = ["MotionParams", "stretch_matrix", "stretch_apply_derivative"]


@dataclass(frozen=True, eq=False)
class MotionParams:
    """Per-angle stretch perturbations gamma and the known base line x2 = c."""

    gammas: np.ndarray
    baseline_c: float

    def __post_init__(self):
        object.__setattr__(
            self, "gammas", np.ascontiguousarray(self.gammas, dtype=np.float64)
        )
        if self.gammas.ndim != 1:
            raise ValueError("gammas must be a 1-d array")
        if np.any(1.0 + self.gammas <= 0.0):
            raise ValueError("stretch factors 1 + gamma must be positive")

    @property
    def n_angles(self):
        return len(self.gammas)

    def stretch_factors(self):
        return 1.0 + self.gammas

    def replace_gammas(self, gammas):
        return MotionParams(gammas, self.baseline_c)


def _source_rows(grid, gamma, baseline_c):
    """Fractional source row for every output row under the pull-back map."""
    a = 1.0 + gamma
    rows = np.arange(grid.n_side)
    _, x2 = grid.pixel_to_physical(rows, 0)
    x2_src = baseline_c + (x2 - baseline_c) / a
    row_f, _ = grid.physical_to_pixel(0.0, x2_src)
    return row_f


def stretch_matrix(grid, gamma, baseline_c):
    """Sparse N x N pull-back interpolation matrix for one stretch factor.

    ``gamma = 0`` returns the exact identity (the map fixes every pixel
    center, so the generic interpolation path is short-circuited to avoid
    leaving rounding dust in the weights).
    """
    a = 1.0 + gamma
    if a <= 0.0:
        raise ValueError("stretch factor 1 + gamma must be positive")
    n = grid.n_side
    if a == 1.0:
        return SparseMatrix.identity(grid.n_pixels)

    row_f = _source_rows(grid, gamma, baseline_c)
    r0 = np.floor(row_f).astype(np.int64)
    t = row_f - r0

    # one n x n block, shared by every image column
    block_cols = []
    block_vals = []
    block_ptr = np.zeros(n + 1, dtype=np.int64)
    for r in range(n):
        cols = []
        vals = []
        w0 = 1.0 - t[r]
        w1 = t[r]
        if 0 <= r0[r] < n and abs(w0) >= DROP_TOL:
            cols.append(r0[r])
            vals.append(w0)
        if 0 <= r0[r] + 1 < n and abs(w1) >= DROP_TOL:
            cols.append(r0[r] + 1)
            vals.append(w1)
        block_ptr[r + 1] = block_ptr[r] + len(cols)
        block_cols.extend(cols)
        block_vals.extend(vals)
    block_cols = np.asarray(block_cols, dtype=np.int64)
    block_vals = np.asarray(block_vals, dtype=np.float64)
    nnz_block = len(block_cols)

    # tile the block down the diagonal, one copy per image column
    offsets = np.arange(n, dtype=np.int64) * n
    col_idx = (block_cols[None, :] + offsets[:, None]).ravel()
    values = np.tile(block_vals, n)
    row_ptr = (block_ptr[1:][None, :] + nnz_block * np.arange(n, dtype=np.int64)[:, None]).ravel()
    row_ptr = np.concatenate(([0], row_ptr))
    return SparseMatrix(grid.n_pixels, grid.n_pixels, row_ptr, col_idx, values)


def stretch_apply_derivative(
    grid, gamma, baseline_c, f, backend="fd", fd_step=1e-5
):
    """Derivative of the deformed image with respect to gamma, as a vector.

    Parameters
    ----------
    f : Image
        Image on ``grid``.
    backend : {"fd", "analytic"}
        ``"fd"`` (default) uses the central difference
        ``[K(gamma + h) f - K(gamma - h) f] / (2 h)`` with ``h = fd_step``.
        ``"analytic"`` differentiates the interpolation directly: output
        pixel ``y`` receives ``-((y2 - c) / a^2)`` times the slope of the
        column-wise linear interpolant at the source point (the slope is
        piecewise constant between pixel centers, with the image extended by
        zero outside the grid, matching the matrix convention).
    """
    a = 1.0 + gamma
    if a <= 0.0:
        raise ValueError("stretch factor 1 + gamma must be positive")
    if f.grid != grid:
        raise ValueError("image grid does not match")
    if backend == "fd":
        if fd_step <= 0.0:
            raise ValueError("fd_step must be positive")
        if a - fd_step <= 0.0:
            raise ValueError("fd_step too large: 1 + gamma - h must stay positive")
        k_plus = stretch_matrix(grid, gamma + fd_step, baseline_c)
        k_minus = stretch_matrix(grid, gamma - fd_step, baseline_c)
        return (k_plus.apply(f.values) - k_minus.apply(f.values)) / (2.0 * fd_step)
    if backend != "analytic":
        raise ValueError(f"unknown derivative backend {backend!r}")

    n = grid.n_side
    px = grid.pixel_size
    rows = np.arange(n)
    _, x2 = grid.pixel_to_physical(rows, 0)
    row_f = _source_rows(grid, gamma, baseline_c)
    r0 = np.floor(row_f).astype(np.int64)

    mat = f.to_matrix()
    # column values extended by zero one pixel beyond each edge
    padded = np.zeros((n + 2, n))
    padded[1:-1, :] = mat
    idx = np.clip(r0 + 1, 0, n + 1)  # padded index of the upper stencil row
    valid = (r0 >= -1) & (r0 <= n - 1)  # stencil overlaps the grid at all
    upper = np.where(valid[:, None], padded[idx, :], 0.0)
    lower = np.where(valid[:, None], padded[np.clip(r0 + 2, 0, n + 1), :], 0.0)
    slope = (upper - lower) / px  # d/dx2 of the interpolant on [r0, r0+1)
    coeff = -(x2 - baseline_c) / a**2
    out = coeff[:, None] * slope
    return out.ravel(order="F")
