"""Coordinate conventions, image grids, scan geometry, and phantoms.

Conventions used throughout the package:

* The object lives on the square ``[-extent, extent]^2`` centered at the
  origin, strictly inside the unit disc on which the transducers sit.
* Pixel ``(row, col)`` of an ``n x n`` image has its center at
  ``x1 = -extent + (col + 1/2) * pixel_size`` and
  ``x2 =  extent - (row + 1/2) * pixel_size``; row 0 is the top of the image.
* Images are vectorized column-major: vector index ``k = col * n + row``.
  All operators in the package share this ordering.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ImageGrid",
    "Image",
    "ScanGeometry",
    "Ellipse",
    "make_grid",
    "make_scan",
    "make_phantom",
    "default_phantom_shapes",
    "gaussian_image",
    "write_pgm",
    "write_image",
    "read_image",
]

IMAGE_MAGIC = b"PATIMG01"


@dataclass(frozen=True)
class ImageGrid:
    """Square pixel grid with physical coordinates.

    Parameters
    ----------
    n_side : int
        Pixels per side (``>= 2``).
    extent : float
        Half-width of the physical domain; must satisfy ``0 < extent < 1``.
    """

    n_side: int
    extent: float

    def __post_init__(self):
        if self.n_side < 2:
            raise ValueError("n_side must be at least 2")
        if not (0.0 < self.extent < 1.0):
            raise ValueError("extent must lie in (0, 1)")

    @property
    def pixel_size(self):
        return 2.0 * self.extent / self.n_side

    @property
    def n_pixels(self):
        return self.n_side * self.n_side

    def pixel_to_physical(self, row, col):
        """Physical coordinates ``(x1, x2)`` of the center of pixel (row, col)."""
        px = self.pixel_size
        x1 = -self.extent + (np.asarray(col) + 0.5) * px
        x2 = self.extent - (np.asarray(row) + 0.5) * px
        return x1, x2

    def physical_to_pixel(self, x1, x2):
        """Fractional pixel indices ``(row, col)`` of a physical point.

        Exact inverse of :meth:`pixel_to_physical` on pixel centers.
        """
        px = self.pixel_size
        col = (np.asarray(x1) + self.extent) / px - 0.5
        row = (self.extent - np.asarray(x2)) / px - 0.5
        return row, col

    def pixel_centers(self):
        """Coordinate matrices ``(X1, X2)`` of all pixel centers, shape (n, n)."""
        idx = np.arange(self.n_side)
        x1, _ = self.pixel_to_physical(0, idx)
        _, x2 = self.pixel_to_physical(idx, 0)
        return np.meshgrid(x1, x2)  # X1 varies along columns, X2 along rows


@dataclass(eq=False)
class Image:
    """Discretized object: grid plus column-major value vector of length n^2."""

    grid: ImageGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        if self.values.shape != (self.grid.n_pixels,):
            raise ValueError(
                f"expected {self.grid.n_pixels} values, got {self.values.shape}"
            )

    def to_matrix(self):
        """(n, n) matrix with [row, col] indexing; row 0 is the top."""
        n = self.grid.n_side
        return self.values.reshape((n, n), order="F")

    @classmethod
    def from_matrix(cls, grid, matrix):
        return cls(grid, np.asarray(matrix, dtype=np.float64).ravel(order="F"))


@dataclass(frozen=True, eq=False)
class ScanGeometry:
    """Transducer angles on the unit circle and the shared radius grid."""

    angles: np.ndarray
    radii: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "angles", np.ascontiguousarray(self.angles, dtype=np.float64)
        )
        object.__setattr__(
            self, "radii", np.ascontiguousarray(self.radii, dtype=np.float64)
        )
        if self.angles.ndim != 1 or len(self.angles) == 0:
            raise ValueError("angles must be a nonempty 1-d array")
        if self.radii.ndim != 1 or len(self.radii) == 0:
            raise ValueError("radii must be a nonempty 1-d array")
        if self.radii[0] <= 0.0 or np.any(np.diff(self.radii) <= 0.0):
            raise ValueError("radii must be strictly positive and increasing")
        if self.radii[-1] > 2.0:
            raise ValueError("radii must not exceed 2 (diameter of the unit disc)")

    @property
    def n_angles(self):
        return len(self.angles)

    @property
    def n_radii(self):
        return len(self.radii)

    def transducer(self, i):
        """Position ``z_i = (cos phi_i, sin phi_i)`` on the unit circle."""
        phi = self.angles[i]
        return math.cos(phi), math.sin(phi)


def make_grid(n_side, extent):
    """Build an :class:`ImageGrid`; rejects ``n_side < 2`` and extent outside (0, 1)."""
    return ImageGrid(int(n_side), float(extent))


def make_scan(n_angles, start_deg, step_deg, n_radii, r_max):
    """Uniform scan: angles ``start + k*step`` (degrees), radii ``j*r_max/n_radii``.

    Radii run over ``j = 1..n_radii`` so that the degenerate zero-measure
    circle ``r = 0`` never appears.
    """
    if n_angles < 1:
        raise ValueError("n_angles must be positive")
    if n_radii < 1:
        raise ValueError("n_radii must be positive")
    if not (0.0 < r_max <= 2.0):
        raise ValueError("r_max must lie in (0, 2]")
    degrees = start_deg + step_deg * np.arange(n_angles, dtype=np.float64)
    radii = (np.arange(1, n_radii + 1, dtype=np.float64) * r_max) / n_radii
    return ScanGeometry(np.deg2rad(degrees), radii)


@dataclass(frozen=True)
class Ellipse:
    """Axis-aligned ellipse (a disc when rx == ry) with additive intensity."""

    cx: float
    cy: float
    rx: float
    ry: float
    value: float

    def __post_init__(self):
        if self.rx <= 0.0 or self.ry <= 0.0:
            raise ValueError("ellipse semi-axes must be positive")


def default_phantom_shapes():
    """Synthetic multi-ellipse phantom used by the experiment defaults.

    A cloud of medium and small ellipses rather than one smooth blob: the
    edge-rich data keeps the GCV-selected regularization moderate and gives
    every transducer strong vertical gradients, which is what makes the
    per-angle motion parameters identifiable. The support keeps a comfortable
    margin to the domain boundary under vertical stretches ``a`` in
    ``[0.95, 1.05]`` about the base line ``x2 = -1/2``.
    """
    return [
        Ellipse(-0.30, -0.30, 0.060, 0.050, 110.0),
        Ellipse(-0.10, -0.36, 0.050, 0.040, 90.0),
        Ellipse(0.14, -0.34, 0.070, 0.050, 120.0),
        Ellipse(0.33, -0.25, 0.045, 0.055, 100.0),
        Ellipse(-0.35, -0.08, 0.050, 0.060, 95.0),
        Ellipse(-0.12, -0.16, 0.070, 0.060, 80.0),
        Ellipse(0.10, -0.12, 0.055, 0.065, 125.0),
        Ellipse(0.30, -0.02, 0.050, 0.045, 85.0),
        Ellipse(-0.28, 0.10, 0.045, 0.050, 115.0),
        Ellipse(-0.05, 0.06, 0.050, 0.045, 105.0),
        Ellipse(0.18, 0.13, 0.060, 0.050, 90.0),
        Ellipse(-0.15, 0.24, 0.055, 0.045, 100.0),
        Ellipse(0.05, 0.28, 0.045, 0.055, 120.0),
        Ellipse(0.28, 0.26, 0.040, 0.045, 95.0),
        Ellipse(-0.33, 0.27, 0.035, 0.040, 110.0),
        Ellipse(0.00, -0.27, 0.030, 0.025, 60.0),
        Ellipse(-0.22, -0.02, 0.025, 0.030, 70.0),
        Ellipse(0.22, -0.20, 0.025, 0.025, 65.0),
        Ellipse(-0.02, 0.17, 0.028, 0.022, 75.0),
        Ellipse(0.35, 0.10, 0.025, 0.030, 80.0),
    ]


def make_phantom(grid, shapes):
    """Rasterize additive ellipses onto the grid; result clamped to [0, 255].

    Each shape must lie entirely inside the physical domain; a shape whose
    bounding box pokes out is rejected.
    """
    e = grid.extent
    for s in shapes:
        if (
            s.cx - s.rx < -e
            or s.cx + s.rx > e
            or s.cy - s.ry < -e
            or s.cy + s.ry > e
        ):
            raise ValueError(f"shape {s} extends outside the domain [-{e}, {e}]^2")
    x1, x2 = grid.pixel_centers()
    acc = np.zeros_like(x1)
    for s in shapes:
        inside = ((x1 - s.cx) / s.rx) ** 2 + ((x2 - s.cy) / s.ry) ** 2 <= 1.0
        acc[inside] += s.value
    np.clip(acc, 0.0, 255.0, out=acc)
    return Image.from_matrix(grid, acc)


def gaussian_image(grid, center=(0.0, 0.0), sigma=0.1, amplitude=1.0):
    """Smooth Gaussian bump sampled at pixel centers (handy test object)."""
    x1, x2 = grid.pixel_centers()
    dist2 = (x1 - center[0]) ** 2 + (x2 - center[1]) ** 2
    return Image.from_matrix(grid, amplitude * np.exp(-0.5 * dist2 / sigma**2))


# ---------------------------------------------------------------------------
# serialization


def write_pgm(image, path):
    """8-bit binary PGM, row-major scan order, values rounded and clamped to 0-255."""
    mat = image.to_matrix()
    px = np.clip(np.rint(mat), 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{px.shape[1]} {px.shape[0]}\n255\n".encode("ascii"))
        fh.write(px.tobytes(order="C"))


def write_image(image, path):
    """Lossless raw format: magic, n_side (i32 LE), extent (f64 LE), f64 payload."""
    with open(path, "wb") as fh:
        fh.write(IMAGE_MAGIC)
        fh.write(struct.pack("<i", image.grid.n_side))
        fh.write(struct.pack("<d", image.grid.extent))
        fh.write(image.values.astype("<f8").tobytes())


def read_image(path):
    """Read the raw format written by :func:`write_image`."""
    with open(path, "rb") as fh:
        magic = fh.read(len(IMAGE_MAGIC))
        if magic != IMAGE_MAGIC:
            raise ValueError(f"{path}: not a raw image file (bad magic {magic!r})")
        (n_side,) = struct.unpack("<i", fh.read(4))
        (extent,) = struct.unpack("<d", fh.read(8))
        payload = np.frombuffer(fh.read(8 * n_side * n_side), dtype="<f8")
        if len(payload) != n_side * n_side:
            raise ValueError(f"{path}: truncated image payload")
    return Image(ImageGrid(n_side, extent), payload.astype(np.float64))
