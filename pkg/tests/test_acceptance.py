"""Acceptance criteria, one test per criterion.

Each test records a pass/fail line that the terminal summary prints under
"acceptance criteria".  Run just these with::

    pytest tests/test_acceptance.py -v
"""
import json
import math
import time

import numpy as np
import pytest
from scipy import integrate

from isoball.bound import distance_bound, growth_ode
from isoball.cli import main
from isoball.geometry import (
    BallGeometry,
    CapSpec,
    cap_area,
    cap_volume,
    mc_volume_estimate,
    sphere_area,
    unit_ball_volume,
)
from isoball.lemmas import lemma_suite
from isoball.lens import (
    d_sweep,
    lens_free_area,
    lens_volume,
    orthogonal_d_derivative,
    solve_rho_for_volume,
)
from isoball.variational import euler_lagrange_residual, lens_profile, minimize_profile


def eventually_monotone_from(values, max_start_frac=2 / 3):
    """First index after which ``values`` never increases, if early enough."""
    v = np.asarray(values)
    limit = int(max_start_frac * len(v))
    for i in range(limit + 1):
        if np.all(np.diff(v[i:]) <= 0):
            return i
    return None


# -- 1 -------------------------------------------------------------------------------


def test_c1_cap_measures_against_quadrature(record_criterion):
    t0 = time.perf_counter()
    worst_q = worst_c = 0.0
    thetas = np.linspace(0.05, math.pi - 0.05, 25)
    for n in range(2, 13):
        g = BallGeometry.unit(n)
        R = g.radius
        k = unit_ball_volume(n - 1)
        s = sphere_area(n - 1, 1.0) if n > 2 else 2.0
        for t in thetas:
            vq, _ = integrate.quad(
                lambda x: k * max(R * R - x * x, 0.0) ** ((n - 1) / 2),
                R * math.cos(t), R, epsabs=0, epsrel=1e-13, limit=200,
            )
            aq, _ = integrate.quad(
                lambda u: s * (R * math.sin(u)) ** (n - 2) * R, 0.0, t, epsabs=0, epsrel=1e-13, limit=200,
            )
            worst_q = max(
                worst_q,
                abs(cap_volume(CapSpec(g, t)) / vq - 1),
                abs(cap_area(CapSpec(g, t)) / aq - 1),
            )
            v2 = cap_volume(CapSpec(g, t)) + cap_volume(CapSpec(g, math.pi - t))
            a2 = cap_area(CapSpec(g, t)) + cap_area(CapSpec(g, math.pi - t))
            worst_c = max(worst_c, abs(v2 / g.volume - 1), abs(a2 / g.area - 1))
    dt = time.perf_counter() - t0
    ok = worst_q <= 1e-8 and worst_c <= 1e-10 and dt < 10
    record_criterion("c1", ok, f"quadrature rel {worst_q:.1e} (<=1e-8), complement {worst_c:.1e} (<=1e-10), {dt:.1f}s")
    assert worst_q <= 1e-8
    assert worst_c <= 1e-10
    assert dt < 10


# -- 2 -------------------------------------------------------------------------------


def _sphere_cap_mc(shape, samples, seed):
    """Hit-or-miss area of the part of the sphere of B lying inside U.

    Points are uniform on the polar cap of the sphere of B facing O with
    half-angle 1.5 theta_b (polar angle by rejection against sin^(n-2)),
    whose area comes from a 1-D quadrature.
    """
    n, R, rho, d = shape.ambient.n, shape.ambient.radius, shape.rho, shape.center_dist
    phi0 = min(1.5 * shape.theta_b, 0.5 * math.pi)
    sig = sphere_area(n - 1, 1.0) if n > 2 else 2.0
    window, _ = integrate.quad(lambda u: sig * (rho * math.sin(u)) ** (n - 2) * rho, 0, phi0, epsrel=1e-13)
    rng = np.random.default_rng(seed)
    hits = done = 0
    while done < samples:
        k = min(1 << 16, samples - done)
        phi = rng.uniform(0, phi0, 4 * k)
        phi = phi[rng.random(phi.size) <= (np.sin(phi) / math.sin(phi0)) ** (n - 2)][:k]
        k = phi.size
        # any other coordinate only enters through its norm rho sin(phi)
        x = d - rho * np.cos(phi)
        hits += int(np.count_nonzero(x * x + (rho * np.sin(phi)) ** 2 <= R * R))
        done += k
    p = hits / done
    return p * window, math.sqrt(p * (1 - p) / done) * window


def _planar_segments(R, rho, d):
    a = R * R * math.acos((d * d + R * R - rho * rho) / (2 * d * R))
    b = rho * rho * math.acos((d * d + rho * rho - R * R) / (2 * d * rho))
    c = 0.5 * math.sqrt((-d + R + rho) * (d + R - rho) * (d - R + rho) * (d + R + rho))
    return a + b - c


def test_c2_lens_closed_forms_against_monte_carlo(record_criterion):
    t0 = time.perf_counter()
    worst_sigma = 0.0
    for i, n in enumerate((2, 3, 6, 10)):
        s = solve_rho_for_volume(n, 0.2)
        c = s.center_dist
        ind = lambda p: (p[:, 0] - c) ** 2 + np.einsum("ij,ij->i", p[:, 1:], p[:, 1:]) <= s.rho**2
        est, se = mc_volume_estimate(ind, s.ambient, 1_000_000, seed=1000 + i)
        worst_sigma = max(worst_sigma, abs(est - lens_volume(s)) / se)
        est, se = _sphere_cap_mc(s, 1_000_000, seed=2000 + i)
        worst_sigma = max(worst_sigma, abs(est - lens_free_area(s)) / se)
    worst_planar = 0.0
    for eps in (0.01, 0.1, 0.25, 0.4):
        s = solve_rho_for_volume(2, eps)
        ref = _planar_segments(s.ambient.radius, s.rho, s.center_dist)
        worst_planar = max(worst_planar, abs(lens_volume(s) / ref - 1))
    dt = time.perf_counter() - t0
    ok = worst_sigma <= 4 and worst_planar <= 1e-10 and dt < 120
    record_criterion("c2", ok, f"MC worst {worst_sigma:.2f} stderr (<=4), planar rel {worst_planar:.1e} (<=1e-10), {dt:.1f}s")
    assert worst_sigma <= 4
    assert worst_planar <= 1e-10
    assert dt < 120


# -- 3 -------------------------------------------------------------------------------


def test_c3_variational_cross_check(record_criterion):
    t0 = time.perf_counter()
    worst_gap = worst_deriv = 0.0
    minimum_in_middle = True
    for n in (2, 3, 5):
        for eps in (0.05, 0.1, 0.25):
            res = minimize_profile(n, eps, 2000)
            ref = lens_free_area(solve_rho_for_volume(n, eps))
            assert res.converged
            worst_gap = max(worst_gap, abs(res.area / ref - 1))
            worst_deriv = max(worst_deriv, abs(orthogonal_d_derivative(n, eps)))
            _, areas = d_sweep(n, eps, rel=0.2, points=41)
            mid = areas[20]
            minimum_in_middle &= bool(np.nanmin(areas[15:26]) == mid and mid < areas[19] and mid < areas[21])
    dt = time.perf_counter() - t0
    ok = worst_gap <= 5e-3 and worst_deriv <= 1e-4 and minimum_in_middle and dt < 600
    record_criterion(
        "c3", ok,
        f"area gap {worst_gap:.1e} (<=5e-3), d-derivative {worst_deriv:.1e} (<=1e-4), "
        f"local min at orthogonal: {minimum_in_middle}, {dt:.0f}s",
    )
    assert worst_gap <= 5e-3
    assert worst_deriv <= 1e-4
    assert minimum_in_middle
    assert dt < 600


# -- 4 -------------------------------------------------------------------------------


def test_c4_lens_euler_lagrange_residual(record_criterion):
    t0 = time.perf_counter()
    worst = 0.0
    for n in (2, 3, 5):
        for eps in (0.05, 0.1, 0.25):
            s = solve_rho_for_volume(n, eps)
            worst = max(worst, euler_lagrange_residual(lens_profile(s, 4000), (n - 1) / s.rho))
    dt = time.perf_counter() - t0
    record_criterion("c4", worst <= 1e-3 and dt < 60, f"max residual {worst:.1e} (<=1e-3), {dt:.1f}s")
    assert worst <= 1e-3
    assert dt < 60


# -- 5 -------------------------------------------------------------------------------


def test_c5_bound_pipeline_consistency(record_criterion):
    t0 = time.perf_counter()
    worst = 0.0
    for n in (2, 10, 50):
        for eps in (0.01, 0.1, 0.3):
            worst = max(worst, abs(2 * growth_ode(n, eps) - distance_bound(n, eps)))
    decreasing = True
    for n in (2, 10, 50):
        d = [distance_bound(n, e) for e in np.linspace(0.01, 0.5, 25)]
        decreasing &= bool(np.all(np.diff(d) < 0))
    zero = all(distance_bound(n, 0.5) == 0.0 for n in (2, 10, 50))
    dt = time.perf_counter() - t0
    ok = worst <= 1e-4 and decreasing and zero and dt < 120
    record_criterion("c5", ok, f"ODE/quadrature gap {worst:.1e} (<=1e-4), strictly decreasing: {decreasing}, D(1/2)=0: {zero}, {dt:.1f}s")
    assert worst <= 1e-4
    assert decreasing and zero
    assert dt < 120


# -- 6 -------------------------------------------------------------------------------


def test_c6_dimension_scan(tmp_path, record_criterion, capsys):
    t0 = time.perf_counter()
    code = main(["distance", "--eps", "0.01", "--n-range", "2:100", "--format", "json", "--out", str(tmp_path)])
    dt = time.perf_counter() - t0
    capsys.readouterr()
    assert code == 0
    doc = json.loads((tmp_path / "distance.json").read_text())
    cols = doc["columns"]
    rows = [dict(zip(cols, r)) for r in doc["rows"]]
    scan = doc["summary"]["scans"][0]
    assert [r["n"] for r in rows] == list(range(2, 101))
    gaps_ok = all(r["gap"] is not None and r["gap"] <= 1e-4 for r in rows)
    absdiff = np.abs(scan["differences"])
    start = eventually_monotone_from(absdiff)
    ok = start is not None and gaps_ok and dt < 300
    knee = rows[start]["n"] if start is not None else None
    tail_small = bool(absdiff[-1] < 1e-3)
    with capsys.disabled():
        print(f"\n  observed sup D(0.01, n) over n=2..100: {scan['sup_D']:.10f} at n={scan['argsup_n']}")
    record_criterion(
        "c6", ok and tail_small,
        f"99 rows in {dt:.0f}s, |dD| non-increasing from n={knee}, last |dD|={absdiff[-1]:.1e}, "
        f"sup D={scan['sup_D']:.6f} at n={scan['argsup_n']}",
    )
    assert start is not None
    assert gaps_ok
    assert tail_small
    assert dt < 300


# -- 7 -------------------------------------------------------------------------------


def test_c7_symmetry_lab_suite(record_criterion):
    t0 = time.perf_counter()
    checks = lemma_suite("R/200", seed=0)
    dt = time.perf_counter() - t0
    failed = [c.name for c in checks if c.passed is not True]
    record_criterion(
        "c7", not failed and dt < 300,
        f"{len(checks)} checks at h=R/200, failed/skipped: {failed or 'none'}, {dt:.0f}s",
    )
    assert not failed
    assert dt < 300


# -- 8 -------------------------------------------------------------------------------

RUNS = [
    ["profile", "--n", "3", "--eps-grid", "log:1e-4:0.5:20"],
    ["profile", "--n", "7", "--eps-grid", "lin:0.05:0.5:4", "--format", "json"],
    ["distance", "--eps-grid", "0.05,0.2", "--n-range", "2:6"],
    ["distance", "--eps", "0.3", "--n", "12", "--format", "json"],
    ["variational", "--n", "3", "--eps", "0.1", "--m", "400", "--seed", "7"],
    ["variational", "--n", "2", "--eps", "0.25", "--m", "300", "--seed", "3", "--format", "json"],
    ["verify-lemmas", "--h", "R/25", "--seed", "1", "--seed", "2", "--bodies", "5", "--bodies-3d", "1"],
]


def test_c8_replay_is_byte_identical(tmp_path, record_criterion, capsys):
    mismatched = []
    for i, argv in enumerate(RUNS):
        first, again = tmp_path / f"run{i}", tmp_path / f"replay{i}"
        assert main(argv + ["--out", str(first)]) == 0
        manifest = first / f"{argv[0]}.manifest.json"
        assert main(["replay", str(manifest), "--out", str(again)]) == 0
        a = {p.name: p.read_bytes() for p in first.iterdir()}
        b = {p.name: p.read_bytes() for p in again.iterdir()}
        if a != b or len(a) < 2:
            mismatched.append(" ".join(argv))
    capsys.readouterr()
    record_criterion("c8", not mismatched, f"{len(RUNS)} runs replayed, mismatches: {mismatched or 'none'}")
    assert not mismatched
