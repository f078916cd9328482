"""Numerically checkable sufficient conditions and a continuous-model oracle.

For the vertical-stretch motion model two sufficient criteria guarantee the
microlocal well-posedness conditions of the continuous transform: a bound on
the logarithmic derivative of the stretch profile (injective-immersion /
Bolker condition) and a visibility criterion on the angular coverage. Both
are evaluated numerically from the sampled stretch profile; the abstract
conditions themselves are not computable.

The module also provides a slow, independent quadrature of the continuous
generalized circular Radon transform, used to validate the discrete forward
operator end to end.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import QuadratureError

__all__ = [
    "StretchProfile",
    "BolkerVerdict",
    "c_epsilon",
    "bolker_bound_check",
    "visibility_check",
    "continuous_forward_oracle",
    "deformed_support_eps",
]


@dataclass(frozen=True, eq=False)
class StretchProfile:
    """Stretch factors ``a_i = 1 + gamma_i`` sampled on the angle grid."""

    angles: np.ndarray
    a: np.ndarray
    baseline_c: float
    eps: float

    def __post_init__(self):
        object.__setattr__(self, "angles", np.asarray(self.angles, dtype=np.float64))
        object.__setattr__(self, "a", np.asarray(self.a, dtype=np.float64))
        if self.angles.shape != self.a.shape:
            raise ValueError("angles and a must have matching shapes")
        if np.any(self.a <= 0.0):
            raise ValueError("stretch factors must be positive")
        if not (0.0 < self.eps <= 1.0):
            raise ValueError("eps must lie in (0, 1]")


def c_epsilon(eps):
    """Geometric constant ``1 / sqrt(2 eps - eps^2)`` for supports inside the
    disc of radius ``1 - eps``; strictly decreasing, diverging as eps -> 0."""
    if not (0.0 < eps <= 1.0):
        raise ValueError("eps must lie in (0, 1]")
    return 1.0 / math.sqrt(2.0 * eps - eps * eps)


@dataclass(frozen=True)
class BolkerVerdict:
    holds: bool
    margin: float
    worst_angle_index: int
    bound: float
    max_ratio: float


def bolker_bound_check(profile):
    """Check ``max |a'(phi) / a(phi)| <= 1 / ((3 + |c|) C_eps)`` on the grid.

    The derivative is estimated by central differences on the angle grid
    (one-sided at the ends), since the profile is only known at the scan
    angles. The bound is sufficient, not necessary: exceeding it does not
    prove ill-posedness, it only voids this guarantee.
    """
    phi = profile.angles
    a = profile.a
    if len(phi) < 3:
        raise ValueError("need at least 3 angle samples")
    da = np.empty_like(a)
    da[1:-1] = (a[2:] - a[:-2]) / (phi[2:] - phi[:-2])
    da[0] = (a[1] - a[0]) / (phi[1] - phi[0])
    da[-1] = (a[-1] - a[-2]) / (phi[-1] - phi[-2])
    ratios = np.abs(da / a)
    worst = int(np.argmax(ratios))
    bound = 1.0 / ((3.0 + abs(profile.baseline_c)) * c_epsilon(profile.eps))
    max_ratio = float(ratios[worst])
    return BolkerVerdict(
        holds=max_ratio <= bound,
        margin=bound - max_ratio,
        worst_angle_index=worst,
        bound=bound,
        max_ratio=max_ratio,
    )


def visibility_check(angles, profile, k_min_phi2):
    """Sufficient visibility criterion for the angular coverage.

    True if the angular span exceeds a full turn. Otherwise requires the
    span to fit inside ``[-pi/2, 3 pi/2]`` and the deformed support to stay
    strictly above ``max(sin alpha, sin beta)``; ``k_min_phi2`` is the
    minimum vertical coordinate of the deformed support, supplied by the
    caller from the phantom support and the stretch range. Returns False
    whenever the criterion's preconditions fail (nothing is then guaranteed
    either way).
    """
    angles = np.asarray(angles, dtype=np.float64)
    if len(angles) == 0:
        raise ValueError("angles must be nonempty")
    alpha = float(angles.min())
    beta = float(angles.max())
    if beta - alpha > 2.0 * math.pi:
        return True
    if alpha < -math.pi / 2.0 or beta > 3.0 * math.pi / 2.0:
        return False
    return k_min_phi2 > max(math.sin(alpha), math.sin(beta))


def deformed_support_eps(image, a_lo, a_hi, baseline_c, pad_pixels=0):
    """Margin eps with the deformed support inside the disc of radius 1 - eps.

    Takes the bounding box of the nonzero pixels, pushes its vertical edges
    through the extreme stretch factors, and measures the farthest corner
    from the origin. Also returns the minimum vertical coordinate of the
    deformed box (the quantity the visibility criterion needs).
    """
    mat = image.to_matrix()
    rows, cols = np.nonzero(mat)
    if len(rows) == 0:
        raise ValueError("image has empty support")
    grid = image.grid
    pad = pad_pixels * grid.pixel_size
    x1_lo, x2_hi = grid.pixel_to_physical(rows.min(), cols.min())
    x1_hi, x2_lo = grid.pixel_to_physical(rows.max(), cols.max())
    x1_lo, x1_hi = x1_lo - pad, x1_hi + pad
    x2_lo, x2_hi = x2_lo - pad, x2_hi + pad
    ys = [
        baseline_c + a * (y - baseline_c)
        for a in (a_lo, a_hi)
        for y in (x2_lo, x2_hi)
    ]
    y_min, y_max = min(ys), max(ys)
    radius = max(
        math.hypot(x, y) for x in (x1_lo, x1_hi) for y in (y_min, y_max)
    )
    if radius >= 1.0:
        raise ValueError("deformed support reaches the unit circle")
    return 1.0 - radius, y_min


# ---------------------------------------------------------------------------
# continuous-model oracle


def _ellipse_route(f, z1, z2, r, a, c, n):
    """Weighted integral over the deformed integration curve.

    The curve is the pre-image of the measurement circle under the stretch:
    an axis-aligned ellipse centered at ``(z1, c + (z2 - c)/a)`` with
    semi-axes ``r`` and ``r/a``. The weight is evaluated from its geometric
    definition (stretch Jacobian times distance over the projected normal),
    not from its algebraic simplification.
    """
    t = (np.arange(n) + 0.5) * (2.0 * math.pi / n)
    cx = z1
    cy = c + (z2 - c) / a
    x1 = cx + r * np.cos(t)
    x2 = cy + (r / a) * np.sin(t)
    phi1 = x1
    phi2 = c + a * (x2 - c)
    d1 = z1 - phi1
    d2 = z2 - phi2
    dist = np.hypot(d1, d2)
    denom = np.hypot(d1 * 1.0, d2 * a)  # |(z - Phi)^T D_x Phi|
    weight = a * dist / denom
    speed = np.hypot(-r * np.sin(t), (r / a) * np.cos(t))
    return float(np.sum(weight * f(x1, x2) * speed) * (2.0 * math.pi / n))


def _circle_route(f, z1, z2, r, a, c, n):
    """Plain circular integral of the stretched image ``f(Psi(y))``."""
    t = (np.arange(n) + 0.5) * (2.0 * math.pi / n)
    y1 = z1 + r * np.cos(t)
    y2 = z2 + r * np.sin(t)
    x1 = y1
    x2 = c + (y2 - c) / a
    return float(np.sum(f(x1, x2)) * r * (2.0 * math.pi / n))


def continuous_forward_oracle(f, phi, r, a, c, n_samples=20000):
    """Continuous generalized Radon transform of a smooth test function.

    ``f(x1, x2)`` must accept numpy arrays and have compact support inside
    the domain. The transform is computed along two independent routes --
    the weighted integral over the deformed curve and the circular integral
    of the pulled-back function -- which agree exactly by the change of
    variables that defines the model. The oracle evaluates both, verifies
    their agreement to 1e-6 relative and the self-convergence of the
    quadrature to 1e-8 when doubling the sample count, and raises
    :class:`QuadratureError` otherwise.
    """
    if a <= 0.0:
        raise ValueError("stretch factor must be positive")
    if r <= 0.0:
        raise ValueError("radius must be positive")
    if n_samples < 10000:
        raise ValueError("use at least 1e4 quadrature samples")
    z1 = math.cos(phi)
    z2 = math.sin(phi)
    i_ellipse = _ellipse_route(f, z1, z2, r, a, c, n_samples)
    n_circ = int(math.ceil(1.37 * n_samples))
    i_circle = _circle_route(f, z1, z2, r, a, c, n_circ)
    i_circle_fine = _circle_route(f, z1, z2, r, a, c, 2 * n_circ)

    scale = max(abs(i_ellipse), abs(i_circle_fine), 1e-300)
    if abs(i_circle_fine - i_circle) > 1e-8 * scale:
        raise QuadratureError(
            f"quadrature not converged at n={n_circ}: "
            f"{i_circle} vs {i_circle_fine}"
        )
    if abs(i_ellipse - i_circle_fine) > 1e-6 * scale:
        raise QuadratureError(
            f"route disagreement: ellipse {i_ellipse} vs circle {i_circle_fine}"
        )
    return i_circle_fine
