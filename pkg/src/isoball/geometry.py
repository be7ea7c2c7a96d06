"""Ball, sphere and spherical-cap measures in n dimensions.

Every Gamma evaluation goes through ``math.lgamma`` so that dimensions in
the thousands neither overflow nor lose precision.  Caps are parametrized by
their colatitude ``theta``: the angle at the ball centre between the pole and
the cap rim.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = [
    "BallGeometry",
    "CapSpec",
    "ball_volume",
    "unit_ball_volume",
    "unit_volume_radius",
    "sphere_area",
    "reg_inc_beta",
    "log_reg_inc_beta",
    "cap_volume",
    "cap_area",
    "cap_volume_sin2",
    "cap_area_sin2",
    "sample_uniform_ball",
    "mc_volume_estimate",
]

_CF_EPS = 1e-16
_CF_TINY = 1e-300
_CF_MAXITER = 10_000


def _check_dim(n, lowest=1):
    if int(n) != n or n < lowest:
        raise ValueError(f"n must be an integer >= {lowest}, got {n!r}")


def log_unit_ball_volume(n: int) -> float:
    """log of the volume of the unit n-ball."""
    return 0.5 * n * math.log(math.pi) - math.lgamma(0.5 * n + 1.0)


def unit_ball_volume(n: int) -> float:
    _check_dim(n)
    return math.exp(log_unit_ball_volume(n))


def ball_volume(n: int, radius: float) -> float:
    """Volume pi^(n/2) r^n / Gamma(n/2 + 1) of the n-ball of radius ``radius``."""
    _check_dim(n)
    if not radius > 0:
        raise ValueError(f"radius must be positive, got {radius!r}")
    return math.exp(log_unit_ball_volume(n) + n * math.log(radius))


def unit_volume_radius(n: int) -> float:
    """Radius of the n-ball of volume one."""
    _check_dim(n)
    return math.exp(math.lgamma(0.5 * n + 1.0) / n) / math.sqrt(math.pi)


def sphere_area(n: int, radius: float) -> float:
    """Area of the (n-1)-sphere bounding the n-ball of radius ``radius``."""
    _check_dim(n, 2)
    if not radius > 0:
        raise ValueError(f"radius must be positive, got {radius!r}")
    return math.exp(math.log(n) + log_unit_ball_volume(n) + (n - 1) * math.log(radius))


# -- regularized incomplete beta ------------------------------------------


def _betacf(x, a, b):
    # modified Lentz evaluation of the continued fraction for I_x(a, b)
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _CF_TINY:
        d = _CF_TINY
    d = 1.0 / d
    h = d
    for m in range(1, _CF_MAXITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _CF_TINY:
            d = _CF_TINY
        c = 1.0 + aa / c
        if abs(c) < _CF_TINY:
            c = _CF_TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _CF_TINY:
            d = _CF_TINY
        c = 1.0 + aa / c
        if abs(c) < _CF_TINY:
            c = _CF_TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _CF_EPS:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (x={x}, a={a}, b={b})")


def _log_front(x, y, a, b):
    # log of x^a y^b / B(a, b) with y = 1 - x
    return (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log(y)
    )


def _check_beta_args(x, a, b):
    if not (0.0 <= x <= 1.0):
        raise ValueError(f"x must lie in [0, 1], got {x!r}")
    if not (a > 0 and b > 0):
        raise ValueError(f"a and b must be positive, got a={a!r}, b={b!r}")


def _log_ibeta(x, y, a, b):
    # log I_x(a, b); y = 1 - x is passed separately so callers can supply it
    # without cancellation when x is close to 1
    if x == 0.0:
        return -math.inf
    if y == 0.0:
        return 0.0
    if x < (a + 1.0) / (a + b + 2.0):
        return _log_front(x, y, a, b) + math.log(_betacf(x, a, b)) - math.log(a)
    return math.log1p(-math.exp(_log_front(x, y, a, b)) * _betacf(y, b, a) / b)


def _ibeta(x, y, a, b):
    if x == 0.0:
        return 0.0
    if y == 0.0:
        return 1.0
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(_log_front(x, y, a, b)) * _betacf(x, a, b) / a
    return 1.0 - math.exp(_log_front(x, y, a, b)) * _betacf(y, b, a) / b


def log_reg_inc_beta(x: float, a: float, b: float, *, complement: bool = False) -> float:
    """log I_x(a, b), or log(1 - I_x(a, b)) with ``complement=True``.

    Tiny values keep full relative precision; this is what lets cap measures
    of huge balls be formed as exp(log prefactor + log I) without overflow.
    """
    _check_beta_args(x, a, b)
    if complement:
        return _log_ibeta(1.0 - x, x, b, a)
    return _log_ibeta(x, 1.0 - x, a, b)


def reg_inc_beta(x: float, a: float, b: float) -> float:
    """Regularized incomplete beta function I_x(a, b).

    Continued fraction with the usual switch to the mirrored argument when
    ``x > (a + 1) / (a + b + 2)``.
    """
    _check_beta_args(x, a, b)
    return _ibeta(x, 1.0 - x, a, b)


# -- caps --------------------------------------------------------------------


@dataclass(frozen=True)
class BallGeometry:
    """A ball of dimension ``n`` and radius ``radius`` centred at the origin."""

    n: int
    radius: float

    def __post_init__(self):
        _check_dim(self.n, 2)
        if not self.radius > 0:
            raise ValueError(f"radius must be positive, got {self.radius!r}")

    @classmethod
    def unit(cls, n: int) -> "BallGeometry":
        """The unit-volume ball in dimension ``n``."""
        _check_dim(n, 2)
        return cls(int(n), unit_volume_radius(n))

    @property
    def volume(self) -> float:
        return ball_volume(self.n, self.radius)

    @property
    def area(self) -> float:
        return sphere_area(self.n, self.radius)

    def contains(self, points, slack=0.0):
        pts = np.asarray(points, dtype=float)
        return np.einsum("...i,...i->...", pts, pts) <= (self.radius + slack) ** 2


@dataclass(frozen=True)
class CapSpec:
    geometry: BallGeometry
    colatitude: float

    def __post_init__(self):
        if not (0.0 <= self.colatitude <= math.pi):
            raise ValueError(f"colatitude must lie in [0, pi], got {self.colatitude!r}")


def cap_volume_sin2(n: int, radius: float, sin2: float, larger: bool = False,
                    cos2: float | None = None) -> float:
    """Cap volume from sin^2 of the colatitude.

    ``larger`` selects the cap with colatitude above pi/2.  Pass ``cos2``
    when it is known independently; nearly hemispherical caps then keep
    full precision.
    """
    if sin2 <= 0.0:
        return ball_volume(n, radius) if larger else 0.0
    sin2 = min(sin2, 1.0)
    cos2 = 1.0 - sin2 if cos2 is None else cos2
    log_half = log_unit_ball_volume(n) + n * math.log(radius) - math.log(2.0)
    a = 0.5 * (n + 1)
    if larger:
        return math.exp(log_half) * (2.0 - _ibeta(sin2, cos2, a, 0.5))
    return math.exp(log_half + _log_ibeta(sin2, cos2, a, 0.5))


def cap_area_sin2(n: int, radius: float, sin2: float, larger: bool = False,
                  cos2: float | None = None) -> float:
    """Lateral cap area from sin^2 of the colatitude (see ``cap_volume_sin2``)."""
    _check_dim(n, 2)
    if sin2 <= 0.0:
        return sphere_area(n, radius) if larger else 0.0
    sin2 = min(sin2, 1.0)
    cos2 = 1.0 - sin2 if cos2 is None else cos2
    log_half = (
        math.log(n) + log_unit_ball_volume(n) + (n - 1) * math.log(radius) - math.log(2.0)
    )
    a = 0.5 * (n - 1)
    if larger:
        return math.exp(log_half) * (2.0 - _ibeta(sin2, cos2, a, 0.5))
    return math.exp(log_half + _log_ibeta(sin2, cos2, a, 0.5))


def _sin2_and_side(theta):
    if theta <= 0.5 * math.pi:
        return math.sin(theta) ** 2, math.cos(theta) ** 2, False
    return math.sin(math.pi - theta) ** 2, math.cos(theta) ** 2, True


def cap_volume(spec: CapSpec) -> float:
    """Volume of the cap of ``spec.geometry`` with colatitude ``spec.colatitude``."""
    g = spec.geometry
    if spec.colatitude == math.pi:
        return g.volume
    s2, c2, larger = _sin2_and_side(spec.colatitude)
    return cap_volume_sin2(g.n, g.radius, s2, larger, c2)


def cap_area(spec: CapSpec) -> float:
    """Lateral ((n-1)-dimensional) area of the spherical cap."""
    g = spec.geometry
    if spec.colatitude == math.pi:
        return g.area
    s2, c2, larger = _sin2_and_side(spec.colatitude)
    return cap_area_sin2(g.n, g.radius, s2, larger, c2)


# -- Monte Carlo --------------------------------------------------------------

MC_CHUNK = 1 << 16


def sample_uniform_ball(rng: np.random.Generator, n: int, radius: float, size: int) -> np.ndarray:
    """Uniform points in the n-ball: Gaussian direction times radius * U^(1/n)."""
    g = rng.standard_normal((size, n))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    u = rng.random(size)
    return g * (radius * u ** (1.0 / n))[:, None]


def _default_workers():
    try:
        return max(1, int(os.environ.get("ISOBALL_THREADS", "1")))
    except ValueError:
        return 1


def mc_volume_estimate(
    indicator: Callable[[np.ndarray], np.ndarray],
    geometry: BallGeometry,
    samples: int,
    seed: int,
    workers: int | None = None,
) -> tuple[float, float]:
    """Hit-or-miss estimate of vol(set intersected with the ball).

    ``indicator`` maps an ``(k, n)`` array of points to a boolean array of
    length ``k``.  The sample budget is split into fixed chunks, each drawn
    from its own child of ``SeedSequence(seed)``, so the estimate does not
    depend on ``workers``.

    Returns ``(estimate, stderr)``.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    sizes = [MC_CHUNK] * (samples // MC_CHUNK)
    if samples % MC_CHUNK:
        sizes.append(samples % MC_CHUNK)
    streams = np.random.SeedSequence(seed).spawn(len(sizes))

    def count(job):
        size, ss = job
        pts = sample_uniform_ball(np.random.default_rng(ss), geometry.n, geometry.radius, size)
        return int(np.count_nonzero(indicator(pts)))

    workers = workers or _default_workers()
    jobs = list(zip(sizes, streams))
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            hits = sum(ex.map(count, jobs))
    else:
        hits = sum(map(count, jobs))
    p = hits / samples
    vol = geometry.volume
    return p * vol, math.sqrt(p * (1.0 - p) / samples) * vol
