"""Free-area minimization over bodies of revolution inside U.

A body of revolution about the x-axis is described by its profile r(x) on a
grid x_0 < ... < x_m: the cross-section at x is the (n-1)-ball of radius
r(x).  Volume is the trapezoid rule for kappa_{n-1} r^{n-1}.  Free area is
the exact lateral area of the piecewise-linear surface (a chain of
frustums), except that a segment whose two end nodes are pressed against the
boundary of U ("clipped") lies on that boundary and carries no free area.

The lateral element is sigma_{n-2} r^{n-2} sqrt(1 + r'^2) dx.  The
frustum over one segment integrates it exactly:

    kappa_{n-1} * L * (b^{n-1} - a^{n-1}) / (b - a),

with L the slant length, a and b the end radii, and
sigma_{n-2} = (n - 1) kappa_{n-1}.
"""
from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cho_solve_banded, cholesky_banded

from .geometry import BallGeometry, cap_volume_sin2, unit_ball_volume
from .lens import (
    LensShape,
    flat_cut_colatitude,
    general_cap_at_volume,
    solve_rho_for_volume,
)

log = logging.getLogger(__name__)

__all__ = [
    "Profile",
    "VariationalResult",
    "make_profile",
    "profile_volume",
    "profile_free_area",
    "volume_gradient",
    "area_gradient",
    "lens_profile",
    "flat_profile",
    "mean_curvature",
    "euler_lagrange_residual",
    "minimize_profile",
    "profile_to_csv",
    "CLIP_TOL",
    "MIN_NODES",
]

CLIP_TOL = 1e-9  # in units of R
MIN_NODES = 100
VOLUME_TOL = 1e-8
MU_MAX = 1e16


@dataclass(frozen=True, eq=False)
class Profile:
    ambient: BallGeometry
    grid: np.ndarray
    radii: np.ndarray
    clip_mask: np.ndarray
    v0: float = 0.0

    @property
    def n(self) -> int:
        return self.ambient.n

    @property
    def bound(self) -> np.ndarray:
        R = self.ambient.radius
        return np.sqrt(np.maximum(R * R - self.grid**2, 0.0))


def _bound(R, x):
    return np.sqrt(np.maximum(R * R - x * x, 0.0))


def _end_cap_volume(n, R, x_end, toward_plus):
    # volume of U beyond the plane x = x_end, on the side away from the grid
    c = x_end / R if toward_plus else -x_end / R
    if c >= 1.0:
        return 0.0
    s2 = max(1.0 - c * c, 0.0)
    return cap_volume_sin2(n, R, s2, larger=c < 0, cos2=c * c)


def _clip_state(R, x, r, tol):
    bound = _bound(R, x)
    clip = r >= bound - tol * R
    r = np.where(clip, bound, r)
    return r, clip


def _v0(n, R, x, clip):
    v0 = 0.0
    if clip[-1]:
        v0 += _end_cap_volume(n, R, x[-1], True)
    if clip[0]:
        v0 += _end_cap_volume(n, R, x[0], False)
    return v0


def make_profile(ambient: BallGeometry, grid, radii, tol_clip: float = CLIP_TOL) -> Profile:
    """Build a Profile, clamping radii into [0, bound] and deriving the clip mask.

    ``tol_clip`` is relative to R.  A clipped end node means the body keeps
    filling U past the end of the grid; that remainder is ``v0``.
    """
    x = np.asarray(grid, dtype=float).copy()
    r = np.asarray(radii, dtype=float).copy()
    if x.ndim != 1 or x.shape != r.shape or x.size < 2:
        raise ValueError("grid and radii must be 1-D arrays of equal length >= 2")
    if np.any(np.diff(x) <= 0):
        raise ValueError("grid must be strictly increasing")
    R = ambient.radius
    if x[0] < -R * (1 + 1e-12) or x[-1] > R * (1 + 1e-12):
        raise ValueError("grid must lie inside [-R, R]")
    x = np.clip(x, -R, R)
    r = np.clip(r, 0.0, _bound(R, x))
    r, clip = _clip_state(R, x, r, tol_clip)
    for a in (x, r, clip):
        a.flags.writeable = False
    return Profile(ambient, x, r, clip, _v0(ambient.n, R, x, clip))


# -- discrete functionals -----------------------------------------------------


def _power_sums(a, b, p, order):
    """S = sum_k a^k b^(p-k) and its partial derivatives up to ``order``."""
    m = a.size
    # power tables P[:, j] = base^j for j = 0..p
    A = np.ones((m, p + 1))
    B = np.ones((m, p + 1))
    for j in range(1, p + 1):
        A[:, j] = A[:, j - 1] * a
        B[:, j] = B[:, j - 1] * b
    k = np.arange(p + 1, dtype=float)
    out = [np.einsum("ij,ij->i", A, B[:, ::-1])]
    if order >= 1:
        # index j below is the reduced exponent after differentiation
        out.append(np.einsum("ij,ij,j->i", A[:, :p], B[:, :p][:, ::-1], k[1:]) if p else np.zeros(m))
        out.append(np.einsum("ij,ij,j->i", A[:, :p], B[:, :p][:, ::-1], k[1:][::-1]) if p else np.zeros(m))
    if order >= 2:
        z = np.zeros(m)
        if p >= 2:
            AB2 = A[:, : p - 1] * B[:, : p - 1][:, ::-1]
            kk = k[2:] * k[1:-1]
            out.append(AB2 @ kk)
            out.append(AB2 @ (k[1:-1] * k[1:-1][::-1]))
            out.append(AB2 @ kk[::-1])
        else:
            out.extend([z, z, z])
    return out


def _charged(n, r, clip):
    # segments carrying free area: not both ends on the boundary of U and,
    # in the plane, not a zero-width sliver on the axis
    seg = ~(clip[:-1] & clip[1:])
    if n == 2:
        seg &= ~((r[:-1] == 0.0) & (r[1:] == 0.0))
    return seg


def _area_parts(n, x, r, clip, order=1):
    """Free area, gradient and (order 2) tridiagonal Hessian (diag, offdiag)."""
    kap = unit_ball_volume(n - 1)
    p = n - 2
    h = np.diff(x)
    a, b = r[:-1], r[1:]
    dr = b - a
    L = np.hypot(h, dr)
    seg = _charged(n, r, clip)
    sums = _power_sums(a, b, p, order)
    S = sums[0]
    area = kap * np.sum(np.where(seg, L * S, 0.0))
    m = r.size
    ends = []
    for i in (0, m - 1):
        if r[i] > 0 and not clip[i]:
            area += kap * r[i] ** (n - 1)
            ends.append(i)
    if order == 0:
        return area, None, None, None
    Sa, Sb = sums[1], sums[2]
    La, Lb = -dr / L, dr / L
    ga = np.where(seg, kap * (La * S + L * Sa), 0.0)
    gb = np.where(seg, kap * (Lb * S + L * Sb), 0.0)
    grad = np.zeros(m)
    grad[:-1] += ga
    grad[1:] += gb
    for i in ends:
        grad[i] += kap * (n - 1) * r[i] ** (n - 2)
    if order == 1:
        return area, grad, None, None
    Saa, Sab, Sbb = sums[3], sums[4], sums[5]
    q = h * h / L**3
    haa = np.where(seg, kap * (q * S + 2 * La * Sa + L * Saa), 0.0)
    hbb = np.where(seg, kap * (q * S + 2 * Lb * Sb + L * Sbb), 0.0)
    hab = np.where(seg, kap * (-q * S + La * Sb + Lb * Sa + L * Sab), 0.0)
    diag = np.zeros(m)
    diag[:-1] += haa
    diag[1:] += hbb
    for i in ends:
        if n >= 3:
            diag[i] += kap * (n - 1) * (n - 2) * r[i] ** (n - 3)
    return area, grad, diag, hab


def _volume_parts(n, x, r, order=1):
    kap = unit_ball_volume(n - 1)
    h = np.diff(x)
    w = np.zeros(r.size)
    w[:-1] += 0.5 * h
    w[1:] += 0.5 * h
    vol = kap * np.sum(w * r ** (n - 1))
    if order == 0:
        return vol, None, None
    grad = kap * (n - 1) * w * r ** (n - 2)
    if order == 1:
        return vol, grad, None
    if n == 2:
        diag = np.zeros_like(r)
    else:
        diag = kap * (n - 1) * (n - 2) * w * r ** (n - 3)
    return vol, grad, diag


def profile_volume(p: Profile) -> float:
    """Trapezoid rule for kappa_{n-1} r^{n-1} over the grid, plus v0."""
    return _volume_parts(p.n, p.grid, p.radii, order=0)[0] + p.v0


def profile_free_area(p: Profile) -> float:
    """Lateral area of the unclipped frustum chain plus any free end disks."""
    return _area_parts(p.n, p.grid, p.radii, p.clip_mask, order=0)[0]


def volume_gradient(p: Profile) -> np.ndarray:
    return _volume_parts(p.n, p.grid, p.radii)[1]


def area_gradient(p: Profile) -> np.ndarray:
    """Gradient of the free area with the clip mask held fixed."""
    return _area_parts(p.n, p.grid, p.radii, p.clip_mask)[1]


# -- reference profiles -------------------------------------------------------


def _uniform_grid(R, m, support=None):
    lo, hi = support if support is not None else (-R, R)
    return np.linspace(lo, hi, m + 1)


def lens_profile(shape: LensShape, m: int, support=None) -> Profile:
    """The exact orthogonal lens sampled on a uniform grid of ``m`` segments."""
    U = shape.ambient
    if shape.flat:
        return flat_profile(U.n, 0.5, m, support)
    R = U.radius
    x = _uniform_grid(R, m, support)
    d, rho = shape.center_dist, shape.rho
    rb = np.sqrt(np.maximum(rho * rho - (x - d) ** 2, 0.0))
    r = np.where(x >= d - rho, np.minimum(rb, _bound(R, x)), 0.0)
    return make_profile(U, x, r)


def flat_profile(n: int, eps: float, m: int, support=None) -> Profile:
    """Half-space cut: U filled beyond the plane cutting off volume ``eps``."""
    U = BallGeometry.unit(n)
    R = U.radius
    x = _uniform_grid(R, m, support)
    xc = R * math.cos(flat_cut_colatitude(n, eps))
    r = np.where(x >= xc - 1e-14 * R, _bound(R, x), 0.0)
    return make_profile(U, x, r)


# -- curvature ------------------------------------------------------------------


def mean_curvature(p: Profile) -> tuple[np.ndarray, np.ndarray]:
    """Mean curvature (sum of principal curvatures) at interior free nodes.

    Uses the three-point osculating circle of neighbouring profile points,
    which is exact on circular arcs and second-order accurate in general; it
    stays well conditioned where r' is unbounded, as at the pole of a sphere.
    The outward normal is the body's (pointing away from the axis).

    Returns ``(indices, H)`` for the nodes where i-1, i, i+1 are all unclipped
    with positive radius.
    """
    x, r, clip, n = p.grid, p.radii, p.clip_mask, p.n
    ok = (~clip) & (r > 0)
    idx = np.nonzero(ok[:-2] & ok[1:-1] & ok[2:])[0] + 1
    if idx.size == 0:
        return idx, np.zeros(0)
    ux, uy = x[idx - 1] - x[idx], r[idx - 1] - r[idx]
    wx, wy = x[idx + 1] - x[idx], r[idx + 1] - r[idx]
    u2, w2 = ux * ux + uy * uy, wx * wx + wy * wy
    D = 2.0 * (ux * wy - uy * wx)
    qx = wy * u2 - uy * w2
    qy = ux * w2 - wx * u2
    q2 = qx * qx + qy * qy
    # curvature vector (centre - P) / |centre - P|^2
    kx, ky = D * qx / q2, D * qy / q2
    # tangent |u|^2 w - |w|^2 u is exact on circles
    tx, ty = u2 * wx - w2 * ux, u2 * wy - w2 * uy
    tn = np.hypot(tx, ty)
    nx, ny = -ty / tn, tx / tn
    H = -(kx * nx + ky * ny) + (n - 2) * ny / r[idx]
    return idx, H


def euler_lagrange_residual(p: Profile, lam: float) -> float:
    """max |H - lam| over interior free nodes, or inf if there are none."""
    idx, H = mean_curvature(p)
    if idx.size == 0:
        return math.inf
    return float(np.max(np.abs(H - lam)))


# -- optimizer --------------------------------------------------------------------


@dataclass
class StartResult:
    label: str
    area: float
    violation: float
    multiplier: float
    converged: bool


@dataclass
class VariationalResult:
    profile: Profile
    area: float
    multiplier: float
    converged: bool
    volume_violation: float
    starts: list[StartResult] = field(default_factory=list)


class _Problem:
    def __init__(self, n, eps, x):
        self.n, self.eps, self.x = n, eps, x
        self.U = BallGeometry.unit(n)
        self.R = self.U.radius
        self.bound = _bound(self.R, x)

    def state(self, r):
        r = np.clip(r, 0.0, self.bound)
        return _clip_state(self.R, self.x, r, CLIP_TOL)

    def measures(self, r, clip, order):
        A = _area_parts(self.n, self.x, r, clip, order)
        V = _volume_parts(self.n, self.x, r, order)
        v0 = _v0(self.n, self.R, self.x, clip)
        return A, (V[0] + v0,) + V[1:]

    def merit(self, r, clip, lam, mu):
        A, V = self.measures(r, clip, 0)
        c = V[0] - self.eps
        return A[0] - lam * c + 0.5 * mu * c * c, A[0], c


def _newton_direction(diag, off, u, g, mu, free):
    """Solve (T + mu u u^T) p = -g on the free set; T tridiagonal."""
    idx = np.nonzero(free)[0]
    k = idx.size
    if k == 0:
        return np.zeros_like(g)
    d = diag[idx].copy()
    # coupling only between free nodes that are grid neighbours
    adj = np.diff(idx) == 1
    o = np.where(adj, off[idx[:-1]], 0.0)
    scale = max(np.max(np.abs(d)), 1e-300)
    tau = 0.0
    for _ in range(60):
        ab = np.zeros((2, k))
        ab[0, 1:] = o
        ab[1] = d + tau
        try:
            cb = cholesky_banded(ab, lower=False)
            break
        except LinAlgError:
            tau = max(2.0 * tau, 1e-10 * scale)
    else:
        return -g * free
    gf, uf = g[idx], u[idx]
    y = cho_solve_banded((cb, False), gf)
    z = cho_solve_banded((cb, False), uf)
    step = y - z * (mu * (uf @ y) / (1.0 + mu * (uf @ z)))
    out = np.zeros_like(g)
    out[idx] = -step
    return out


def _solve_al(prob, r, lam, mu, max_outer=60, max_inner=200):
    """Augmented-Lagrangian outer loop with a projected-Newton inner loop."""
    r, clip = prob.state(r)
    R = prob.R
    c = math.inf
    for outer in range(max_outer):
        for inner in range(max_inner):
            (A, gA, dA, oA), (V, gV, dV) = prob.measures(r, clip, 2)
            c = V - prob.eps
            lam_eff = lam - mu * c
            g = gA - lam_eff * gV
            # tridiagonal part; mu gV gV^T enters through Sherman-Morrison
            diag = dA - lam_eff * dV
            off = oA
            fixed = clip | (prob.bound <= 0.0) | ((r <= 0.0) & (g > 0.0))
            if prob.n == 2:
                # lifting an axis node next to another axis node opens a
                # sliver whose perimeter jumps by twice the segment length
                z = r <= 0.0
                zl = np.concatenate(([True], z[:-1]))
                zr = np.concatenate((z[1:], [True]))
                fixed |= z & (zl | zr)
            free = ~fixed
            step = _newton_direction(diag, off, gV, g, mu, free)
            f0 = A - lam * c + 0.5 * mu * c * c
            alpha, accepted = 1.0, False
            for _ in range(50):
                r_new, clip_new = prob.state(r + alpha * step)
                f1 = prob.merit(r_new, clip_new, lam, mu)[0]
                if f1 <= f0 + 1e-4 * g @ (r_new - r):
                    accepted = True
                    break
                alpha *= 0.5
            if not accepted:
                # projected gradient fallback with a diagonal scaling
                sd = -g * free / np.maximum(np.abs(diag), 1e-12 * max(np.max(np.abs(diag)), 1e-300))
                alpha = 1.0
                for _ in range(60):
                    r_new, clip_new = prob.state(r + alpha * sd)
                    f1 = prob.merit(r_new, clip_new, lam, mu)[0]
                    if f1 <= f0 + 1e-4 * g @ (r_new - r):
                        accepted = True
                        break
                    alpha *= 0.5
            if not accepted:
                break
            moved = np.max(np.abs(r_new - r))
            r, clip = r_new, clip_new
            if moved <= 1e-14 * R or abs(f0 - f1) <= 1e-16 * max(abs(f0), 1e-300):
                break
        V = prob.measures(r, clip, 0)[1][0]
        c_new = V - prob.eps
        if abs(c_new) <= 0.1 * VOLUME_TOL and outer > 0:
            lam -= mu * c_new
            c = c_new
            break
        lam -= mu * c_new
        if abs(c_new) > 0.25 * abs(c):
            mu *= 10.0
            if mu > MU_MAX:
                c = c_new
                break
        c = c_new
    return r, clip, lam, mu, c


def _finish(prob, r, clip, lam, mu, c):
    area = _area_parts(prob.n, prob.x, r, clip, 0)[0]
    return area, abs(c)


def _release_moves(prob, r, clip, lam, mu, c, budget=400):
    """Discrete local search on where the surface leaves the boundary of U.

    Newton moves can press nodes onto the boundary but never pull them off it,
    since that would re-charge the segment they sat on.  Try releasing the
    contact-line node and keep the move when the re-optimized area drops.
    """
    area, viol = _finish(prob, r, clip, lam, mu, c)
    for _ in range(budget):
        improved = False
        inner = clip & (prob.bound > 0)
        free = ~clip & (r > 0)
        cand = np.nonzero(
            inner & (np.concatenate(([False], free[:-1])) | np.concatenate((free[1:], [False])))
        )[0]
        for i in cand:
            trial = r.copy()
            trial[i] = prob.bound[i] * (1.0 - 1e-3)
            rt, ct, lt, mt, cc = _solve_al(prob, trial, lam, mu)
            at, vt = _finish(prob, rt, ct, lt, mt, cc)
            if vt <= VOLUME_TOL and at < area * (1.0 - 1e-12):
                r, clip, lam, mu, c, area, viol = rt, ct, lt, mt, cc, at, vt
                improved = True
                break
        if not improved:
            break
    return r, clip, lam, mu, c


def _flat_start(prob, r):
    """Flat cut with nodes below the cut partly filled to match eps.

    A pure step profile has no free node that can change the volume at first
    order, which would stall the multiplier update.
    """
    r = r.copy()
    n, x, kap = prob.n, prob.x, unit_ball_volume(prob.n - 1)

    def vol(r):
        return _volume_parts(n, x, r, 0)[0] + _v0(n, prob.R, x, prob.state(r)[1])

    while vol(r) > prob.eps and r.any():
        r[int(np.argmax(r > 0))] = 0.0
    k = int(np.argmax(r > 0)) - 1
    while k >= 0:
        wk = 0.5 * (x[min(k + 1, x.size - 1)] - x[max(k - 1, 0)])
        need = (prob.eps - vol(r)) / (kap * wk) + r[k] ** (n - 1)
        top = prob.bound[k] * (1.0 - 1e-6)
        if need <= 0:
            r[k] = 0.5 * top
            break
        r[k] = min(need ** (1.0 / (n - 1)), top)
        if r[k] < top:
            break
        k -= 1
    return r


def _perturbed_start(prob, rng):
    n, eps, x, R = prob.n, prob.eps, prob.x, prob.R
    lens = solve_rho_for_volume(n, eps)
    d = lens.center_dist * (1.0 + rng.uniform(-0.15, 0.15))
    try:
        cap = general_cap_at_volume(n, eps, d)
    except ValueError:
        cap = general_cap_at_volume(n, eps, lens.center_dist)
    rho, dd = cap.rho, cap.center_dist
    rb = np.sqrt(np.maximum(rho * rho - (x - dd) ** 2, 0.0))
    r = np.where(x >= dd - rho, np.minimum(rb, prob.bound), 0.0)
    k = np.arange(1, 5)
    coef = rng.normal(scale=0.02 * R, size=k.size) / k
    bump = np.sin(np.outer((x + R) / (2 * R) * math.pi, k)) @ coef
    free = (r > 0) & (r < prob.bound)
    r = np.where(free, r + bump, r)
    return np.clip(r, 0.0, prob.bound), f"perturbed(d={d / lens.center_dist:.3f}d*)"


def minimize_profile(
    n: int,
    eps: float,
    m: int,
    seed: int = 0,
    support: tuple[float, float] | None = None,
    starts: int = 5,
) -> VariationalResult:
    """Locally minimal free area among profiles of volume ``eps``.

    Runs ``starts`` >= 5 optimizations: from the orthogonal lens, from the
    flat cut, and from seeded perturbed non-orthogonal caps.  Each is an
    augmented-Lagrangian solve with projected-Newton inner iterations under
    0 <= r_i <= sqrt(R^2 - x_i^2), followed by contact-line release moves.
    The best feasible result is returned; ``converged`` is False when no
    start met the volume tolerance.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    if not (0.0 < eps < 0.5):
        raise ValueError("eps must lie in (0, 1/2)")
    if m < MIN_NODES:
        raise ValueError(f"m must be >= {MIN_NODES}")
    if starts < 5:
        raise ValueError("at least 5 starts are required")
    U = BallGeometry.unit(n)
    R = U.radius
    x = _uniform_grid(R, m, support)
    prob = _Problem(n, eps, x)
    rng = np.random.default_rng(seed)

    lens = solve_rho_for_volume(n, eps)
    inits = [
        (lens_profile(lens, m, support).radii, "lens"),
        (_flat_start(prob, flat_profile(n, eps, m, support).radii), "flat"),
    ]
    while len(inits) < starts:
        inits.append(_perturbed_start(prob, rng))

    best = None
    records = []
    for r0, label in inits:
        r0c, clip0 = prob.state(r0)
        A0, V0 = prob.measures(r0c, clip0, 1)
        gA, gV = A0[1], V0[1]
        # median ratio: the contact-line and pole nodes carry O(1/h) outliers
        free = ~clip0 & (r0c > 0) & (gV > 0)
        lam = float(np.median(gA[free] / gV[free])) if free.any() else 0.0
        mu = 10.0 * max(A0[0], 1e-12) / max(eps, 1e-12) ** 2
        r, clip, lam, mu, c = _solve_al(prob, r0c, lam, mu)
        r, clip, lam, mu, c = _release_moves(prob, r, clip, lam, mu, c)
        area, viol = _finish(prob, r, clip, lam, mu, c)
        ok = viol <= VOLUME_TOL
        records.append(StartResult(label, area, viol, lam, ok))
        log.debug("start %s: area=%.12g viol=%.2e lam=%.6g", label, area, viol, lam)
        key = (not ok, area if ok else viol)
        if best is None or key < best[0]:
            best = (key, r, lam, ok, viol, area)
    _, r, lam, ok, viol, area = best
    prof = make_profile(U, x, r)
    if not ok:
        log.warning("minimize_profile n=%d eps=%g: volume violation %.2e", n, eps, viol)
    return VariationalResult(prof, profile_free_area(prof), lam, ok, viol, records)


def profile_to_csv(p: Profile) -> str:
    """CSV text with columns x, r, clipped."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x", "r", "clipped"])
    for xi, ri, ci in zip(p.grid, p.radii, p.clip_mask):
        w.writerow([repr(float(xi)), repr(float(ri)), int(ci)])
    return buf.getvalue()
