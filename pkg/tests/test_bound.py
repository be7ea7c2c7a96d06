import math

import numpy as np
import pytest

import isoball.bound as bound
from isoball.bound import (
    DimensionScan,
    QuadratureError,
    dimension_scan,
    distance_bound,
    distance_bound_with_error,
    distance_curve,
    growth_ode,
    iso_profile,
    iso_value,
)
from isoball.geometry import unit_volume_radius
from isoball.lens import flat_cut_free_area

# independent Gauss-Legendre panel quadrature of 2/M with a separate lens solver, frozen
D_ORACLE = {
    (5, 0.01): 1.2640499935633565,
    (2, 0.1): 0.8128273813746497,
    (10, 0.3): 0.2937906605150336,
}


def test_iso_value_at_half_is_central_disk():
    assert iso_value(2, 0.5) == pytest.approx(2 / math.sqrt(math.pi), rel=1e-14)
    assert iso_value(3, 0.5) == pytest.approx(math.pi * unit_volume_radius(3) ** 2, rel=1e-14)
    assert iso_value(7, 0.5) == flat_cut_free_area(7, 0.5)


@pytest.mark.parametrize("v", [0.0, -0.1, 0.51, 1.0])
def test_iso_value_domain(v):
    with pytest.raises(ValueError):
        iso_value(3, v)


@pytest.mark.parametrize("n", [2, 3, 10, 60])
def test_iso_profile_strictly_increasing(n):
    pts = iso_profile(n, np.logspace(-4, math.log10(0.5), 50))
    m = [p.m_value for p in pts]
    assert all(p.error is None and p.n == n for p in pts)
    assert all(v > 0 for v in m)
    assert np.all(np.diff(m) > 0)


def test_iso_profile_isolates_failures():
    pts = iso_profile(3, [0.1, 0.7, 0.2])
    assert pts[0].error is None and pts[2].error is None
    assert math.isnan(pts[1].m_value) and "(0, 1/2]" in pts[1].error


def test_frozen_distance_values():
    for (n, eps), d in D_ORACLE.items():
        assert distance_bound(n, eps) == pytest.approx(d, rel=1e-9)


def test_distance_at_half_is_zero():
    assert distance_bound(10, 0.5) == 0.0
    assert growth_ode(10, 0.5) == 0.0
    assert distance_bound(3, 0.5 - 1e-9) < 1e-8


@pytest.mark.parametrize("eps", [0.0, -1.0, 0.6])
def test_distance_domain(eps):
    with pytest.raises(ValueError):
        distance_bound(3, eps)
    with pytest.raises(ValueError):
        growth_ode(3, eps)


def test_quadrature_failure_is_reported():
    with pytest.raises(QuadratureError):
        distance_bound_with_error(3, 1e-6, quad_tol=1e-300)


@pytest.mark.parametrize("n", [2, 10, 50])
def test_distance_strictly_decreasing_and_continuous(n):
    eps = np.linspace(0.01, 0.5, 60)
    curve = distance_curve(n, eps)
    d = np.array([v for _, v in curve.samples])
    assert d[-1] == 0.0
    assert np.all(np.diff(d) < 0)
    # each step is bounded by the integrand times the step, far from a jump
    steps = -np.diff(d)
    bound_steps = 2 * np.diff(eps) / np.array([iso_value(n, e) for e in eps[:-1]])
    assert np.all(steps <= bound_steps * (1 + 1e-6))
    assert curve.quadrature_error <= 1e-8


@pytest.mark.parametrize("n", [2, 10, 50])
@pytest.mark.parametrize("eps", [0.01, 0.1, 0.3])
def test_ode_matches_quadrature(n, eps):
    assert abs(2 * growth_ode(n, eps) - distance_bound(n, eps)) <= 1e-4


def test_ode_trajectory_increasing():
    T, t, v = growth_ode(3, 0.05, dense=True)
    assert T > 0
    assert np.all(np.diff(t) > 0) and np.all(np.diff(v) > 0)
    assert v[0] == 0.05


def test_lens_solver_never_sees_volume_above_half(monkeypatch):
    seen = []
    real = bound.solve_rho_for_volume

    def spy(n, eps, *a, **k):
        seen.append(eps)
        return real(n, eps, *a, **k)

    monkeypatch.setattr(bound, "solve_rho_for_volume", spy)
    growth_ode(4, 0.02)
    distance_bound(4, 0.02)
    dimension_scan(0.3, [2, 5], ode_tol=1e-9)
    assert seen and max(seen) <= 0.5


def test_scan_rows_and_summary():
    scan = dimension_scan(0.1, [2, 3, 4, 5], ode_tol=1e-9)
    assert [r.n for r in scan.rows] == [2, 3, 4, 5]
    assert all(r.gap <= 1e-4 for r in scan.rows)
    assert scan.sup == max(r.d_value for r in scan.rows)
    assert scan.argsup in (2, 3, 4, 5)
    assert scan.differences() == pytest.approx(
        [b.d_value - a.d_value for a, b in zip(scan.rows, scan.rows[1:])]
    )


def test_scan_repeated_dimension_is_deterministic():
    scan = dimension_scan(0.2, [3, 3, 3])
    assert scan.rows[0] == scan.rows[1] == scan.rows[2]


def test_scan_near_half():
    scan = dimension_scan(0.49, list(range(2, 12)))
    d = np.array([r.d_value for r in scan.rows])
    assert np.all(d > 0) and np.all(d < 0.05)
    gaps = np.abs(np.diff(d))
    assert np.all(np.diff(gaps) < 0)


def test_scan_worker_count_does_not_change_rows():
    a = dimension_scan(0.05, [2, 6, 3, 9], ode_tol=1e-9, workers=1)
    b = dimension_scan(0.05, [2, 6, 3, 9], ode_tol=1e-9, workers=2)
    assert a.rows == b.rows


def test_scan_isolates_failed_rows(monkeypatch):
    real = bound.distance_bound_with_error

    def flaky(n, eps, quad_tol):
        if n == 4:
            raise QuadratureError("forced")
        return real(n, eps, quad_tol)

    monkeypatch.setattr(bound, "distance_bound_with_error", flaky)
    scan = dimension_scan(0.1, [3, 4, 5], workers=1)
    assert [r.n for r in scan.rows] == [3, 4, 5]
    assert scan.rows[1].error == "forced" and math.isnan(scan.rows[1].d_value)
    assert scan.rows[0].error is None and scan.rows[2].error is None
    assert math.isfinite(scan.sup)


def test_scan_validation():
    with pytest.raises(ValueError):
        dimension_scan(0.1, [])
    with pytest.raises(ValueError):
        dimension_scan(0.0, [3])


def test_empty_scan_summary():
    s = DimensionScan(0.1)
    assert math.isnan(s.sup) and s.argsup is None and s.differences() == []
