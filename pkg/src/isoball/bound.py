"""Isoperimetric profile M(eps, n) and the distance bound D(eps, n).

A set of volume v inside U grows, under an outward neighbourhood expansion
of radius t, at rate at least M(v, n).  Growing two sets from volume eps to
volume 1/2 forces them to meet, so their distance is at most

    D(eps, n) = 2 * integral_eps^{1/2} dv / M(v, n).

The integral is computed twice: by adaptive Gauss-Kronrod quadrature and by
integrating v'(t) = M(v) with an embedded Runge-Kutta pair.  Agreement of
the two is the pipeline's internal consistency check.
"""
from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad, solve_ivp

from .lens import DEFAULT_TOL, LensShape, lens_free_area, solve_rho_for_volume

log = logging.getLogger(__name__)

__all__ = [
    "IsoPoint",
    "DistanceCurve",
    "ScanRow",
    "DimensionScan",
    "QuadratureError",
    "iso_value",
    "iso_profile",
    "distance_bound",
    "distance_bound_with_error",
    "growth_ode",
    "distance_curve",
    "dimension_scan",
    "DEFAULT_QUAD_TOL",
    "DEFAULT_ODE_TOL",
]

DEFAULT_QUAD_TOL = 1e-8
DEFAULT_ODE_TOL = 1e-9


class QuadratureError(ArithmeticError):
    pass


@dataclass(frozen=True)
class IsoPoint:
    eps: float
    m_value: float
    n: int
    error: str | None = None


def iso_value(n: int, v: float, tol: float = DEFAULT_TOL) -> float:
    """M(v, n): free area of the orthogonal lens of volume ``v <= 1/2``."""
    if not (0.0 < v <= 0.5):
        # by complement symmetry the pipeline never needs the lens above 1/2
        raise ValueError(f"iso_value is defined on (0, 1/2], got v={v!r}")
    if v == 0.5:
        return lens_free_area(LensShape.flat_cut(n))
    return lens_free_area(solve_rho_for_volume(n, v, tol))


def iso_profile(n: int, eps_grid, tol: float = DEFAULT_TOL) -> list[IsoPoint]:
    """M(eps, n) over a grid; a failing point is reported, not raised."""
    out = []
    for eps in eps_grid:
        eps = float(eps)
        try:
            out.append(IsoPoint(eps, iso_value(n, eps, tol), n))
        except (ValueError, ArithmeticError) as exc:
            log.warning("iso_profile n=%d eps=%r failed: %s", n, eps, exc)
            out.append(IsoPoint(eps, math.nan, n, str(exc)))
    return out


def _check_eps(eps):
    if not (0.0 < eps <= 0.5):
        raise ValueError(f"eps must be > 0 and <= 1/2, got {eps!r}")


def distance_bound_with_error(n: int, eps: float, quad_tol: float = DEFAULT_QUAD_TOL):
    """``(D, abserr)`` from adaptive Gauss-Kronrod quadrature."""
    _check_eps(eps)
    if eps == 0.5:
        return 0.0, 0.0
    res = quad(
        lambda v: 1.0 / iso_value(n, v),
        eps, 0.5, epsabs=0.5 * quad_tol, epsrel=0.0, limit=500, full_output=True,
    )
    val, err = res[0], res[1]
    # a fourth element (the QUADPACK message) is present only on failure
    if len(res) > 3 or err > 0.5 * quad_tol:
        raise QuadratureError(f"quadrature did not reach {quad_tol} (estimate {2 * err:.2e})")
    return 2.0 * val, 2.0 * err


def distance_bound(n: int, eps: float, quad_tol: float = DEFAULT_QUAD_TOL) -> float:
    """D(eps, n) = 2 * integral_eps^{1/2} dv / M(v, n)."""
    return distance_bound_with_error(n, eps, quad_tol)[0]


def growth_ode(n: int, eps: float, step_tol: float = DEFAULT_ODE_TOL, dense: bool = False):
    """Neighbourhood radius needed to grow volume ``eps`` to 1/2.

    Integrates v'(t) = M(v) from v(0) = eps with the Dormand-Prince 5(4)
    pair and stops on the event v = 1/2.  Stages that overshoot 1/2 use
    M(1 - v), the free area of the complement, so the lens solver is never
    queried above 1/2.  With ``dense=True`` also returns the (t, v) samples.
    """
    _check_eps(eps)
    if eps == 0.5:
        return (0.0, np.zeros(1), np.array([0.5])) if dense else 0.0

    def rhs(t, y):
        v = y[0]
        v = 1.0 - v if v > 0.5 else v
        return [iso_value(n, max(v, 0.5 * eps))]

    def reached(t, y):
        return y[0] - 0.5

    reached.terminal = True
    reached.direction = 1
    # M is increasing, so the expansion takes at most (1/2 - eps) / M(eps)
    t_max = 1.5 * (0.5 - eps) / iso_value(n, eps) + 1.0
    sol = solve_ivp(
        rhs, (0.0, t_max), [eps], method="RK45", rtol=step_tol, atol=1e-3 * step_tol,
        events=reached,
    )
    if sol.status == -1:
        raise ArithmeticError(f"growth ODE failed: {sol.message}")
    if not sol.t_events[0].size:
        raise ArithmeticError("growth ODE never reached volume 1/2")
    T = float(sol.t_events[0][0])
    if dense:
        return T, sol.t, sol.y[0]
    return T


@dataclass
class DistanceCurve:
    n: int
    samples: list[tuple[float, float]]
    quadrature_error: float


def distance_curve(n: int, eps_grid, quad_tol: float = DEFAULT_QUAD_TOL) -> DistanceCurve:
    samples, worst = [], 0.0
    for eps in eps_grid:
        d, err = distance_bound_with_error(n, float(eps), quad_tol)
        samples.append((float(eps), d))
        worst = max(worst, err)
    return DistanceCurve(n, samples, worst)


@dataclass(frozen=True)
class ScanRow:
    n: int
    eps: float
    m_value: float
    d_value: float
    quad_error: float
    d_ode: float | None = None
    error: str | None = None

    @property
    def gap(self) -> float | None:
        if self.d_ode is None:
            return None
        return abs(self.d_ode - self.d_value)


@dataclass
class DimensionScan:
    eps: float
    rows: list[ScanRow] = field(default_factory=list)

    @property
    def sup(self) -> float:
        vals = [r.d_value for r in self.rows if math.isfinite(r.d_value)]
        return max(vals) if vals else math.nan

    @property
    def argsup(self) -> int | None:
        ok = [r for r in self.rows if math.isfinite(r.d_value)]
        return max(ok, key=lambda r: r.d_value).n if ok else None

    def differences(self) -> list[float]:
        """D(eps, n_{k+1}) - D(eps, n_k) between consecutive rows."""
        d = [r.d_value for r in self.rows]
        return [b - a for a, b in zip(d, d[1:])]


def _scan_row(args):
    n, eps, quad_tol, ode_tol = args
    try:
        m = iso_value(n, eps) if eps <= 0.5 else math.nan
        d, err = distance_bound_with_error(n, eps, quad_tol)
        d_ode = 2.0 * growth_ode(n, eps, ode_tol) if ode_tol else None
        return ScanRow(n, eps, m, d, err, d_ode)
    except (ValueError, ArithmeticError) as exc:
        log.warning("dimension scan row n=%d failed: %s", n, exc)
        return ScanRow(n, eps, math.nan, math.nan, math.nan, None, str(exc))


def _workers(workers):
    if workers is not None:
        return max(1, int(workers))
    try:
        return max(1, int(os.environ.get("ISOBALL_THREADS", "1")))
    except ValueError:
        return 1


def dimension_scan(
    eps: float,
    n_list,
    quad_tol: float = DEFAULT_QUAD_TOL,
    ode_tol: float | None = None,
    workers: int | None = None,
) -> DimensionScan:
    """D(eps, n) for every n in ``n_list``, rows in input order.

    Pass ``ode_tol`` to also run the growth ODE per row (``ScanRow.d_ode``).
    Rows are independent; with more than one worker they run in separate
    processes.  A failing row carries its error message instead of aborting.
    """
    _check_eps(eps)
    n_list = [int(n) for n in n_list]
    if not n_list:
        raise ValueError("n_list must not be empty")
    jobs = [(n, eps, quad_tol, ode_tol) for n in n_list]
    workers = min(_workers(workers), len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            rows = list(ex.map(_scan_row, jobs))
    else:
        rows = [_scan_row(j) for j in jobs]
    return DimensionScan(eps, rows)
