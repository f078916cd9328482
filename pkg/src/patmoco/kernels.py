"""Hot numeric kernels: CSR products and circular-arc splatting.

Every kernel exists in two interchangeable flavors: a numba ``@njit`` loop
(used by default when numba imports) and a vectorized pure-numpy fallback.
The active backend is chosen once at import time from the environment
variable ``PATMOCO_BACKEND`` (``"auto"``, ``"numba"`` or ``"numpy"``) and can
be switched at runtime with :func:`set_backend`, which the benchmark command
uses to time both paths in one process.

Both backends are deterministic: repeated calls with identical inputs give
bit-identical output. Across backends, results agree to rounding (vectorized
transcendental functions may differ from scalar libm by an ulp).
"""

from __future__ import annotations

import math
import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

__all__ = [
    "available_backends",
    "backend",
    "set_backend",
    "csr_matvec",
    "csr_rmatvec",
    "splat_arc",
]


# ---------------------------------------------------------------------------
# pure-numpy implementations


def _csr_matvec_numpy(row_ptr, col_idx, values, x, n_rows):
    y = np.zeros(n_rows)
    if len(values) == 0:
        return y
    prod = values * x[col_idx]
    nonempty = row_ptr[:-1] < row_ptr[1:]
    y[nonempty] = np.add.reduceat(prod, row_ptr[:-1][nonempty])
    return y


def _csr_rmatvec_numpy(row_ptr, col_idx, values, y, n_cols):
    if len(values) == 0:
        return np.zeros(n_cols)
    yr = np.repeat(y, np.diff(row_ptr))
    return np.bincount(col_idx, weights=values * yr, minlength=n_cols)


def _splat_arc_numpy(z1, z2, r, t0, dt, n_sub, w, extent, n_side):
    # Sample order (sample-major, fixed corner order) matches the numba loop
    # so per-column accumulation order is identical in both backends.
    inv_px = n_side / (2.0 * extent)
    t = t0 + (np.arange(n_sub) + 0.5) * dt
    x1 = z1 + r * np.cos(t)
    x2 = z2 + r * np.sin(t)
    gx = (x1 + extent) * inv_px - 0.5
    gy = (extent - x2) * inv_px - 0.5
    fx = np.floor(gx)
    fy = np.floor(gy)
    ix = fx.astype(np.int64)
    iy = fy.astype(np.int64)
    tx = gx - fx
    ty = gy - fy
    ix0 = np.clip(ix, 0, n_side - 1)
    ix1 = np.clip(ix + 1, 0, n_side - 1)
    iy0 = np.clip(iy, 0, n_side - 1)
    iy1 = np.clip(iy + 1, 0, n_side - 1)
    cols = np.stack(
        (
            ix0 * n_side + iy0,
            ix0 * n_side + iy1,
            ix1 * n_side + iy0,
            ix1 * n_side + iy1,
        ),
        axis=1,
    ).ravel()
    vals = np.stack(
        (
            w * (1.0 - tx) * (1.0 - ty),
            w * (1.0 - tx) * ty,
            w * tx * (1.0 - ty),
            w * tx * ty,
        ),
        axis=1,
    ).ravel()
    return cols, vals


# ---------------------------------------------------------------------------
# numba implementations

if numba is not None:

    @numba.njit(cache=True)
    def _csr_matvec_numba(row_ptr, col_idx, values, x, n_rows):
        y = np.zeros(n_rows)
        for i in range(n_rows):
            acc = 0.0
            for p in range(row_ptr[i], row_ptr[i + 1]):
                acc += values[p] * x[col_idx[p]]
            y[i] = acc
        return y

    @numba.njit(cache=True)
    def _csr_rmatvec_numba(row_ptr, col_idx, values, y, n_cols):
        x = np.zeros(n_cols)
        for i in range(len(y)):
            yi = y[i]
            for p in range(row_ptr[i], row_ptr[i + 1]):
                x[col_idx[p]] += values[p] * yi
        return x

    @numba.njit(cache=True)
    def _splat_arc_numba(z1, z2, r, t0, dt, n_sub, w, extent, n_side):
        inv_px = n_side / (2.0 * extent)
        cols = np.empty(4 * n_sub, dtype=np.int64)
        vals = np.empty(4 * n_sub)
        last = n_side - 1
        for k in range(n_sub):
            t = t0 + (k + 0.5) * dt
            x1 = z1 + r * math.cos(t)
            x2 = z2 + r * math.sin(t)
            gx = (x1 + extent) * inv_px - 0.5
            gy = (extent - x2) * inv_px - 0.5
            fx = math.floor(gx)
            fy = math.floor(gy)
            ix = int(fx)
            iy = int(fy)
            tx = gx - fx
            ty = gy - fy
            ix0 = min(max(ix, 0), last)
            ix1 = min(max(ix + 1, 0), last)
            iy0 = min(max(iy, 0), last)
            iy1 = min(max(iy + 1, 0), last)
            q = 4 * k
            cols[q] = ix0 * n_side + iy0
            vals[q] = w * (1.0 - tx) * (1.0 - ty)
            cols[q + 1] = ix0 * n_side + iy1
            vals[q + 1] = w * (1.0 - tx) * ty
            cols[q + 2] = ix1 * n_side + iy0
            vals[q + 2] = w * tx * (1.0 - ty)
            cols[q + 3] = ix1 * n_side + iy1
            vals[q + 3] = w * tx * ty
        return cols, vals


# ---------------------------------------------------------------------------
# backend selection

_IMPLS = {
    "numpy": {
        "csr_matvec": _csr_matvec_numpy,
        "csr_rmatvec": _csr_rmatvec_numpy,
        "splat_arc": _splat_arc_numpy,
    }
}
if numba is not None:
    _IMPLS["numba"] = {
        "csr_matvec": _csr_matvec_numba,
        "csr_rmatvec": _csr_rmatvec_numba,
        "splat_arc": _splat_arc_numba,
    }


def available_backends():
    """Names of the backends usable in this process."""
    return tuple(sorted(_IMPLS))


def _initial_backend():
    choice = os.environ.get("PATMOCO_BACKEND", "auto").strip().lower()
    if choice in ("", "auto"):
        return "numba" if "numba" in _IMPLS else "numpy"
    if choice not in _IMPLS:
        if choice == "numba":
            raise ImportError("PATMOCO_BACKEND=numba but numba is not importable")
        raise ValueError(f"unknown PATMOCO_BACKEND {choice!r}")
    return choice


_ACTIVE = _initial_backend()


def backend():
    """Name of the active backend, ``"numba"`` or ``"numpy"``."""
    return _ACTIVE


def set_backend(name):
    """Switch the active backend; returns the previous backend name."""
    global _ACTIVE
    if name not in _IMPLS:
        raise ValueError(f"unknown backend {name!r}; available: {available_backends()}")
    previous = _ACTIVE
    _ACTIVE = name
    return previous


def csr_matvec(row_ptr, col_idx, values, x, n_rows):
    """y = A @ x for a CSR matrix given by its three arrays."""
    return _IMPLS[_ACTIVE]["csr_matvec"](row_ptr, col_idx, values, x, n_rows)


def csr_rmatvec(row_ptr, col_idx, values, y, n_cols):
    """x = A.T @ y for a CSR matrix given by its three arrays."""
    return _IMPLS[_ACTIVE]["csr_rmatvec"](row_ptr, col_idx, values, y, n_cols)


def splat_arc(z1, z2, r, t0, dt, n_sub, w, extent, n_side):
    """Bilinear splat of ``n_sub`` circle samples onto pixel centers.

    Samples the circle of radius ``r`` about ``(z1, z2)`` at the midpoint
    angles ``t0 + (k + 1/2) dt`` and deposits weight ``w`` per sample onto the
    four pixel centers surrounding each sample (column-major pixel indices,
    ``n_side`` pixels per side, domain half-width ``extent``). Corner indices
    are clamped at the domain edge so the deposited mass is exactly
    ``n_sub * w`` for samples inside the domain.

    Returns ``(cols, vals)`` of length ``4 * n_sub``; duplicate columns are
    not merged here.
    """
    return _IMPLS[_ACTIVE]["splat_arc"](z1, z2, r, t0, dt, n_sub, w, extent, n_side)
