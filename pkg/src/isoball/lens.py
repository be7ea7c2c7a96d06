"""The orthogonal lens family U ∩ B(c, rho) and its non-orthogonal relatives.

U is the unit-volume ball of radius R centred at the origin; B is a second
ball of radius ``rho`` whose centre sits at distance ``d`` on the +x axis.
The lens is cut by the radical plane into a cap of U (beyond the plane) and a
cap of B (on the side of the origin).  Only the cap of the boundary of B is
free surface; the cap of U lies on the boundary of U.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import (
    BallGeometry,
    cap_area_sin2,
    cap_volume_sin2,
    log_unit_ball_volume,
)

__all__ = [
    "LensShape",
    "GeneralCap",
    "ConvergenceError",
    "lens_from_rho",
    "lens_volume",
    "lens_free_area",
    "solve_rho_for_volume",
    "flat_cut_free_area",
    "flat_cut_colatitude",
    "rim_normal_cosine",
    "general_cap_volume",
    "general_cap_free_area",
    "general_cap_at_volume",
    "general_cap_free_area_at_volume",
    "orthogonal_d_derivative",
    "d_sweep",
    "DEFAULT_TOL",
]

DEFAULT_TOL = 1e-12
MAX_BISECTIONS = 200


class ConvergenceError(ArithmeticError):
    """A root bracket could not be tightened to the requested tolerance."""


@dataclass(frozen=True)
class LensShape:
    """U ∩ B for a ball B meeting the boundary of U at right angles.

    ``flat`` marks the half-ball limit of the family (B degenerating to a
    half-space through the origin).  Its numeric fields are the limiting
    values; no measure is ever computed from ``rho = inf``.
    """

    ambient: BallGeometry
    rho: float
    center_dist: float
    plane_offset_u: float
    plane_offset_b: float
    theta_u: float
    theta_b: float
    flat: bool = False

    @property
    def rim_radius(self) -> float:
        if self.flat:
            return self.ambient.radius
        return self.ambient.radius * self.rho / self.center_dist

    @property
    def sin2_u(self) -> float:
        if self.flat:
            return 1.0
        return (self.rho / self.center_dist) ** 2

    @property
    def sin2_b(self) -> float:
        if self.flat:
            return 0.0
        return (self.ambient.radius / self.center_dist) ** 2

    @classmethod
    def flat_cut(cls, n: int) -> "LensShape":
        U = BallGeometry.unit(n)
        return cls(U, math.inf, math.inf, 0.0, math.inf, 0.5 * math.pi, 0.0, flat=True)


def lens_from_rho(n: int, rho: float) -> LensShape:
    if not rho > 0 or math.isinf(rho):
        raise ValueError(f"rho must be positive and finite, got {rho!r}")
    U = BallGeometry.unit(n)
    R = U.radius
    d = math.hypot(R, rho)
    return LensShape(
        ambient=U,
        rho=float(rho),
        center_dist=d,
        plane_offset_u=R * R / d,
        plane_offset_b=rho * rho / d,
        theta_u=math.atan2(rho, R),
        theta_b=math.atan2(R, rho),
    )


def lens_volume(shape: LensShape) -> float:
    if shape.flat:
        return 0.5
    n, R = shape.ambient.n, shape.ambient.radius
    # cos^2 of one colatitude is sin^2 of the other
    su, sb = shape.sin2_u, shape.sin2_b
    return cap_volume_sin2(n, R, su, cos2=sb) + cap_volume_sin2(n, shape.rho, sb, cos2=su)


def lens_free_area(shape: LensShape) -> float:
    """Area of the cap of the boundary of B that lies inside U."""
    n = shape.ambient.n
    if shape.flat:
        return math.exp(log_unit_ball_volume(n - 1) + (n - 1) * math.log(shape.ambient.radius))
    return cap_area_sin2(n, shape.rho, shape.sin2_b, cos2=shape.sin2_u)


def rim_normal_cosine(shape: LensShape) -> float:
    """Cosine between the two sphere normals at a rim point (0 means orthogonal)."""
    R = shape.ambient.radius
    if shape.flat:
        return 0.0
    # rim point in the (axis, radial) half-plane
    px, py = shape.plane_offset_u, shape.rim_radius
    nu = (px / R, py / R)
    nb = ((px - shape.center_dist) / shape.rho, py / shape.rho)
    return nu[0] * nb[0] + nu[1] * nb[1]


def _bisect_log(f, target, lo, hi, tol, max_iter=MAX_BISECTIONS):
    """Bisection in log space for an increasing ``f`` with f(lo) < target < f(hi).

    Runs until the bracket is exhausted at double precision, then checks the
    residual against ``tol``.  Returns ``(x, f(x))``.
    """
    llo, lhi = math.log(lo), math.log(hi)
    best = None
    for _ in range(max_iter):
        mid = 0.5 * (llo + lhi)
        x = math.exp(mid)
        fx = f(x)
        if best is None or abs(fx - target) < abs(best[1] - target):
            best = (x, fx)
        if fx == target:
            return x, fx
        if fx < target:
            llo = mid
        else:
            lhi = mid
        if lhi - llo <= 4e-16 * max(1.0, abs(mid)):
            break
    else:
        if abs(best[1] - target) > tol:
            raise ConvergenceError(
                f"bisection did not reach tolerance {tol} after {max_iter} iterations"
            )
    if abs(best[1] - target) > tol:
        raise ConvergenceError(
            f"bracket collapsed with residual {abs(best[1] - target):.3e} > tol {tol}"
        )
    return best


def _bracket(f, target, start):
    lo = hi = start
    for _ in range(400):
        if f(lo) < target:
            break
        lo *= 0.1
    else:
        raise ConvergenceError("could not bracket from below")
    for _ in range(400):
        if f(hi) > target:
            break
        hi *= 10.0
    else:
        raise ConvergenceError("could not bracket from above")
    return lo, hi


def solve_rho_for_volume(n: int, eps: float, tol: float = DEFAULT_TOL) -> LensShape:
    """The orthogonal lens of volume ``eps`` in the unit-volume n-ball.

    ``rho`` is found by bisection in log(rho), where the lens volume is
    strictly increasing.  Volumes within ``tol`` of 1/2 return the flat-cut
    limit member (``shape.flat``).
    """
    if not (0.0 < eps <= 0.5):
        raise ValueError(f"eps must lie in (0, 1/2), got {eps!r}")
    if not tol > 0:
        raise ValueError("tol must be positive")
    if 0.5 - eps <= tol:
        return LensShape.flat_cut(n)
    R = BallGeometry.unit(n).radius

    def vol(rho):
        return lens_volume(lens_from_rho(n, rho))

    lo, hi = _bracket(vol, eps, R)
    rho, _ = _bisect_log(vol, eps, lo, hi, tol)
    return lens_from_rho(n, rho)


def flat_cut_colatitude(n: int, eps: float, tol: float = DEFAULT_TOL) -> float:
    """Colatitude of the cap of U with volume ``eps`` (at most pi/2)."""
    if not (0.0 < eps <= 0.5):
        raise ValueError(f"eps must lie in (0, 1/2], got {eps!r}")
    if eps == 0.5:
        return 0.5 * math.pi
    U = BallGeometry.unit(n)

    def vol(s2):
        return cap_volume_sin2(n, U.radius, min(s2, 1.0))

    lo, _ = _bracket(vol, eps, 0.5)
    s2, _ = _bisect_log(vol, eps, lo, 1.0, tol)
    return math.asin(math.sqrt(s2))


def flat_cut_free_area(n: int, eps: float, tol: float = DEFAULT_TOL) -> float:
    """Area of the flat (n-1)-disk that cuts volume ``eps`` off U."""
    theta = flat_cut_colatitude(n, eps, tol)
    R = BallGeometry.unit(n).radius
    return math.exp(log_unit_ball_volume(n - 1) + (n - 1) * math.log(R * math.sin(theta)))


# -- non-orthogonal caps ----------------------------------------------------


@dataclass(frozen=True)
class GeneralCap:
    """U ∩ B without the orthogonality constraint."""

    ambient: BallGeometry
    rho: float
    center_dist: float

    def __post_init__(self):
        R, rho, d = self.ambient.radius, self.rho, self.center_dist
        if not (abs(R - rho) < d < R + rho):
            raise ValueError(
                f"balls do not intersect properly: R={R}, rho={rho}, d={d}"
            )

    @property
    def plane_offset_u(self) -> float:
        R, rho, d = self.ambient.radius, self.rho, self.center_dist
        return (d * d + R * R - rho * rho) / (2.0 * d)

    @property
    def plane_offset_b(self) -> float:
        return self.center_dist - self.plane_offset_u

    @property
    def rim_radius2(self) -> float:
        R, rho, d = self.ambient.radius, self.rho, self.center_dist
        # (R+rho-d)(R-rho+d)(-R+rho+d)(R+rho+d) / (2d)^2, free of cancellation
        return (R + rho - d) * (R - rho + d) * (-R + rho + d) * (R + rho + d) / (4.0 * d * d)


def general_cap_volume(cap: GeneralCap) -> float:
    n, R = cap.ambient.n, cap.ambient.radius
    w2 = cap.rim_radius2
    a, b = cap.plane_offset_u, cap.plane_offset_b
    rho = cap.rho
    return (
        cap_volume_sin2(n, R, w2 / (R * R), larger=a < 0, cos2=(a / R) ** 2)
        + cap_volume_sin2(n, rho, w2 / (rho * rho), larger=b < 0, cos2=(b / rho) ** 2)
    )


def general_cap_free_area(cap: GeneralCap) -> float:
    n = cap.ambient.n
    w2, b, rho = cap.rim_radius2, cap.plane_offset_b, cap.rho
    return cap_area_sin2(n, rho, w2 / (rho * rho), larger=b < 0, cos2=(b / rho) ** 2)


def general_cap_at_volume(n: int, eps: float, d: float, tol: float = DEFAULT_TOL) -> GeneralCap:
    """The cap U ∩ B(d e_x, rho) of volume ``eps`` for a fixed centre distance ``d``."""
    if not (0.0 < eps < 1.0):
        raise ValueError(f"eps must lie in (0, 1), got {eps!r}")
    U = BallGeometry.unit(n)
    R = U.radius
    if not d > 0:
        raise ValueError("d must be positive")
    lo, hi = abs(d - R), d + R

    def vol(rho):
        # limits tested in the same arithmetic as GeneralCap's validation
        if d >= R + rho:
            return 0.0
        if rho + d <= R:
            return math.exp(log_unit_ball_volume(n) + n * math.log(rho))
        if R + d <= rho:
            return 1.0
        return general_cap_volume(GeneralCap(U, rho, d))

    # keep strictly inside the proper-intersection interval
    lo_in = lo * (1 + 1e-15) if lo > 0 else hi * 1e-300
    hi_in = hi * (1 - 1e-15)
    if not (vol(lo_in) < eps < vol(hi_in)):
        raise ValueError(f"no ball at centre distance {d} gives intersection volume {eps}")
    rho, _ = _bisect_log(vol, eps, lo_in, hi_in, tol)
    return GeneralCap(U, rho, d)


def general_cap_free_area_at_volume(n: int, eps: float, d: float, tol: float = DEFAULT_TOL) -> float:
    return general_cap_free_area(general_cap_at_volume(n, eps, d, tol))


def orthogonal_d_derivative(n: int, eps: float, rel_step: float = 1e-3) -> float:
    """Normalized d-derivative of the free area at the orthogonal centre distance.

    Central difference of ``A(d)`` at fixed volume, scaled by ``d / A`` so the
    result is dimensionless.  Vanishes when the orthogonal lens is stationary.
    """
    d0 = solve_rho_for_volume(n, eps).center_dist
    dd = rel_step * d0
    a0 = general_cap_free_area_at_volume(n, eps, d0)
    ap = general_cap_free_area_at_volume(n, eps, d0 + dd)
    am = general_cap_free_area_at_volume(n, eps, d0 - dd)
    return (ap - am) / (2.0 * dd) * d0 / a0


def d_sweep(n: int, eps: float, rel: float = 0.2, points: int = 41):
    """Free area at fixed volume for centre distances within ``rel`` of orthogonal.

    Returns ``(d_values, areas)``; the orthogonal distance is the middle sample
    when ``points`` is odd.  Distances with no solution give NaN.
    """
    d0 = solve_rho_for_volume(n, eps).center_dist
    ds = d0 * (1.0 + np.linspace(-rel, rel, points))
    areas = np.empty(points)
    for i, d in enumerate(ds):
        try:
            areas[i] = general_cap_free_area_at_volume(n, eps, float(d))
        except ValueError:
            areas[i] = math.nan
    return ds, areas
