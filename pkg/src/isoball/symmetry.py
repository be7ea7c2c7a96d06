"""Discrete bench for halving planes, reflection and sector symmetry in 2-D and 3-D.

A planar body is a shapely polygon; a spatial body is a boolean occupancy
grid on the lattice of cubes ``[k h, (k + 1) h]``, whose centres
``(k + 1/2) h`` are symmetric under every coordinate reflection.  Only the
bounding box of the occupied cells is stored.

Measures:

* volume: polygon area, or ``h^3`` times the occupied-cell count;
* free measure: the part of the boundary farther than ``1.5 h`` from the
  boundary of U.  In 3-D it is the area of a marching-cubes mesh of the
  Gaussian-smoothed occupancy.

Splitting by a plane through O never adds the cut face to either side.  In
3-D a cell contributes to the positive side with a linear ramp of width
``h`` across the plane, so the volume split is continuous in the plane normal
and can be bisected.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
import shapely
from scipy import ndimage
from shapely import affinity
from shapely.geometry import LineString, MultiPolygon, Point, Polygon
from skimage.measure import marching_cubes

from .geometry import BallGeometry
from .lens import solve_rho_for_volume

__all__ = [
    "CentralPlane",
    "DiscreteBody",
    "SymmetryError",
    "NoSignChangeError",
    "ToleranceError",
    "ResolutionError",
    "split_measures",
    "find_halving_plane",
    "halving_tolerance",
    "reflect_glue",
    "volume_tolerance",
    "symmetry_defect",
    "perpendicular_incidence",
    "quarters_check",
    "dyadic_sector_check",
    "sector_measures",
    "lens_body",
    "ball_body",
    "random_body",
    "export_body",
    "import_body",
    "BAND",
    "SMOOTHING",
]

BAND = 1.5  # free-boundary exclusion band around the boundary of U, in units of h
SMOOTHING = 1.0  # Gaussian width (in cells) applied before marching cubes
MIN_SECTOR_CELLS = 3.0
SNAP = 1e-12  # polygon overlay grid, relative to R


class SymmetryError(ValueError):
    pass


class NoSignChangeError(SymmetryError):
    pass


class ToleranceError(SymmetryError):
    pass


class ResolutionError(SymmetryError):
    pass


# -- planes ------------------------------------------------------------------------


@dataclass(frozen=True)
class CentralPlane:
    """Hyperplane through the origin, given by its unit normal."""

    normal: tuple[float, ...]

    def __post_init__(self):
        v = np.asarray(self.normal, dtype=float)
        if v.ndim != 1 or v.size not in (2, 3):
            raise ValueError("normal must have 2 or 3 components")
        if abs(float(np.linalg.norm(v)) - 1.0) > 1e-12:
            raise ValueError(f"normal must be a unit vector, |v| = {np.linalg.norm(v)!r}")
        object.__setattr__(self, "normal", tuple(float(c) for c in v))

    @classmethod
    def from_vector(cls, v) -> "CentralPlane":
        v = np.asarray(v, dtype=float)
        norm = np.linalg.norm(v)
        if not norm > 0:
            raise ValueError("normal vector must be nonzero")
        return cls(tuple(v / norm))

    @property
    def vector(self) -> np.ndarray:
        return np.asarray(self.normal)

    @property
    def dimension(self) -> int:
        return len(self.normal)

    def signed_distance(self, points) -> np.ndarray:
        return np.asarray(points, dtype=float) @ self.vector

    def reflect(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        return pts - 2.0 * np.multiply.outer(pts @ self.vector, self.vector)


def _orthonormal_pair(a):
    """Two unit vectors completing ``a`` to a right-handed orthonormal frame."""
    a = np.asarray(a, dtype=float)
    a = a / np.linalg.norm(a)
    seed = np.eye(3)[int(np.argmin(np.abs(a)))]
    e1 = seed - (seed @ a) * a
    e1 /= np.linalg.norm(e1)
    return e1, np.cross(a, e1)


def _pencil(pivot, dimension):
    """Normal of the plane rotated by angle phi about the pivot."""
    if dimension == 2:
        if pivot is not None:
            raise ValueError("in 2-D the pivot is the origin; pass pivot=None")
        return lambda phi: np.array([math.cos(phi), math.sin(phi)])
    if pivot is None:
        raise ValueError("in 3-D the pivot is a line through O; pass its direction")
    e1, e2 = _orthonormal_pair(pivot)
    return lambda phi: math.cos(phi) * e1 + math.sin(phi) * e2


# -- bodies ------------------------------------------------------------------------


def _quad_segs(radius, h):
    return max(8, math.ceil(0.5 * math.pi * radius / h))


def _disk(center, radius, h):
    return Point(*center).buffer(radius, quad_segs=_quad_segs(radius, h))


@dataclass(frozen=True, eq=False)
class DiscreteBody:
    """A body inside the unit-volume ball ``ambient`` at resolution ``h``.

    Exactly one representation is set: ``polygon`` (2-D) or ``occupancy``
    with lattice offset ``start`` (3-D).  ``axis`` marks a body of
    revolution (or, in 2-D, of mirror symmetry about that line).
    """

    ambient: BallGeometry
    resolution: float
    polygon: Polygon | MultiPolygon | None = None
    occupancy: np.ndarray | None = None
    start: tuple[int, ...] | None = None
    axis: tuple[float, ...] | None = None

    def __post_init__(self):
        n, h, R = self.ambient.n, self.resolution, self.ambient.radius
        if n not in (2, 3):
            raise ValueError("the lab runs in dimensions 2 and 3 only")
        if not h > 0:
            raise ValueError("resolution must be positive")
        if self.axis is not None:
            a = np.asarray(self.axis, dtype=float)
            object.__setattr__(self, "axis", tuple(float(c) for c in a / np.linalg.norm(a)))
        if n == 2:
            if self.polygon is None or self.occupancy is not None:
                raise ValueError("a 2-D body is a polygon")
            pts = shapely.get_coordinates(self.polygon)
            if pts.size and np.max(np.hypot(pts[:, 0], pts[:, 1])) > R + h:
                raise ValueError("polygon leaves the ambient ball")
        else:
            if self.occupancy is None or self.polygon is not None:
                raise ValueError("a 3-D body is an occupancy grid")
            occ = np.asarray(self.occupancy, dtype=bool)
            if occ.ndim != 3 or self.start is None or len(self.start) != 3:
                raise ValueError("occupancy must be 3-D with a 3-component start")
            occ = occ.copy()
            occ.flags.writeable = False
            object.__setattr__(self, "occupancy", occ)
            object.__setattr__(self, "start", tuple(int(s) for s in self.start))
            c = self.centers
            if c.size and np.max(np.einsum("ij,ij->i", c, c)) > (R + h) ** 2:
                raise ValueError("occupied cells leave the ambient ball")

    @property
    def dimension(self) -> int:
        return self.ambient.n

    # -- 3-D helpers --

    @cached_property
    def centers(self) -> np.ndarray:
        """Centres of the occupied cells, shape (k, 3)."""
        idx = np.argwhere(self.occupancy)
        return (idx + np.asarray(self.start) + 0.5) * self.resolution

    @cached_property
    def _mesh(self):
        """Triangle centroids, areas and free mask of the smoothed surface."""
        h, R = self.resolution, self.ambient.radius
        if not self.occupancy.any():
            z = np.zeros((0, 3))
            return z, np.zeros(0), np.zeros(0, bool)
        field, corner = self._smoothed()
        verts, faces, _, _ = marching_cubes(field, level=0.5, spacing=(h, h, h))
        verts += corner
        tri = verts[faces]
        cross = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        area = 0.5 * np.linalg.norm(cross, axis=1)
        cen = tri.mean(axis=1)
        free = np.linalg.norm(cen, axis=1) < R - BAND * h
        return cen, area, free

    def _smoothed(self):
        pad = int(math.ceil(3 * SMOOTHING)) + 1
        occ = np.pad(self.occupancy.astype(np.float32), pad)
        field = ndimage.gaussian_filter(occ, SMOOTHING, mode="constant")
        corner = (np.asarray(self.start) - pad + 0.5) * self.resolution
        return field, corner

    # -- measures --

    @cached_property
    def volume(self) -> float:
        if self.dimension == 2:
            return float(self.polygon.area)
        return float(np.count_nonzero(self.occupancy)) * self.resolution**3

    @cached_property
    def free_boundary(self):
        """2-D only: the boundary curves outside the band around the boundary of U."""
        if self.dimension != 2:
            raise AttributeError("free_boundary is a 2-D notion")
        R, h = self.ambient.radius, self.resolution
        inner = Point(0.0, 0.0).buffer(R - BAND * h, quad_segs=4 * _quad_segs(R, h))
        return self.polygon.boundary.intersection(inner)

    @cached_property
    def free_measure(self) -> float:
        if self.dimension == 2:
            return float(self.free_boundary.length)
        _, area, free = self._mesh
        return float(area[free].sum())

    @cached_property
    def boundary_measure(self) -> float:
        """Total boundary length or area, free or not."""
        if self.dimension == 2:
            return float(self.polygon.boundary.length)
        return float(self._mesh[1].sum())


def _from_indicator(ambient, h, indicator, lo, hi, axis=None, slab=64):
    """Voxelize ``indicator(x, y, z)`` (broadcast arrays) inside U over a box."""
    R = ambient.radius
    kmin = [max(math.floor(l / h) - 1, -math.ceil(R / h) - 1) for l in lo]
    kmax = [min(math.ceil(u / h) + 1, math.ceil(R / h) + 1) for u in hi]
    ax = [(np.arange(a, b) + 0.5) * h for a, b in zip(kmin, kmax)]
    occ = np.zeros(tuple(len(a) for a in ax), dtype=bool)
    Y, Z = ax[1][None, :, None], ax[2][None, None, :]
    for i in range(0, len(ax[0]), slab):
        X = ax[0][i : i + slab, None, None]
        inside = X * X + Y * Y + Z * Z <= R * R
        occ[i : i + slab] = inside & indicator(X, Y, Z)
    nz = np.argwhere(occ)
    if nz.size == 0:
        return DiscreteBody(ambient, h, occupancy=np.zeros((1, 1, 1), bool), start=(0, 0, 0), axis=axis)
    a, b = nz.min(axis=0), nz.max(axis=0) + 1
    occ = occ[a[0] : b[0], a[1] : b[1], a[2] : b[2]]
    return DiscreteBody(ambient, h, occupancy=occ, start=tuple(np.asarray(kmin) + a), axis=axis)


def lens_body(dimension: int, eps: float, h: float | None = None) -> DiscreteBody:
    """The orthogonal lens of volume ``eps`` with its axis along +x.

    ``h`` defaults to R/200.
    """
    U = BallGeometry.unit(dimension)
    R = U.radius
    h = R / 200 if h is None else h
    shape = solve_rho_for_volume(dimension, eps)
    rho, d = shape.rho, shape.center_dist
    axis = (1.0, 0.0) if dimension == 2 else (1.0, 0.0, 0.0)
    if dimension == 2:
        poly = _disk((0, 0), R, h).intersection(_disk((d, 0), rho, h))
        return DiscreteBody(U, h, polygon=poly, axis=axis)
    w = shape.rim_radius

    def inside(X, Y, Z):
        return (X - d) ** 2 + Y * Y + Z * Z <= rho * rho

    return _from_indicator(U, h, inside, (d - rho, -w, -w), (R, w, w), axis=axis)


def ball_body(dimension: int, radius: float | None = None, h: float | None = None) -> DiscreteBody:
    """Ball centred at O; ``radius`` defaults to R (the ambient ball itself)."""
    U = BallGeometry.unit(dimension)
    R = U.radius
    h = R / 200 if h is None else h
    r = R if radius is None else radius
    if dimension == 2:
        poly = _disk((0, 0), R, h) if r >= R else _disk((0, 0), r, h)
        return DiscreteBody(U, h, polygon=poly, axis=(1.0, 0.0))
    return _from_indicator(
        U, h, lambda X, Y, Z: X * X + Y * Y + Z * Z <= r * r, (-r,) * 3, (r,) * 3,
        axis=(1.0, 0.0, 0.0),
    )


def random_body(dimension: int, seed: int, h: float | None = None, balls: tuple[int, int] = (2, 5)) -> DiscreteBody:
    """Seeded union of 2..5 balls, clipped to U."""
    U = BallGeometry.unit(dimension)
    R = U.radius
    h = R / 200 if h is None else h
    rng = np.random.default_rng(seed)
    k = int(rng.integers(balls[0], balls[1] + 1))
    dirs = rng.standard_normal((k, dimension))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    centers = dirs * (0.8 * R * rng.random(k) ** (1.0 / dimension))[:, None]
    radii = R * rng.uniform(0.15, 0.5, k)
    if dimension == 2:
        parts = [_disk(c, r, h) for c, r in zip(centers, radii)]
        poly = shapely.union_all(parts).intersection(_disk((0, 0), R, h))
        return DiscreteBody(U, h, polygon=poly)

    def inside(X, Y, Z):
        out = np.zeros(np.broadcast_shapes(X.shape, Y.shape, Z.shape), dtype=bool)
        for c, r in zip(centers, radii):
            out |= (X - c[0]) ** 2 + (Y - c[1]) ** 2 + (Z - c[2]) ** 2 <= r * r
        return out

    lo = np.maximum((centers - radii[:, None]).min(axis=0), -R)
    hi = np.minimum((centers + radii[:, None]).max(axis=0), R)
    return _from_indicator(U, h, inside, lo, hi)


# -- splitting ---------------------------------------------------------------------


def _half_plane(normal, R):
    # large rectangle on the positive side of the line through O
    box = Polygon([(0, -4 * R), (4 * R, -4 * R), (4 * R, 4 * R), (0, 4 * R)])
    ang = math.degrees(math.atan2(normal[1], normal[0]))
    return affinity.rotate(box, ang, origin=(0, 0))


def _ramp(s, h):
    return np.clip(0.5 + s / h, 0.0, 1.0)


def _side_weights(s):
    # triangle centroids exactly on the plane are shared
    return np.where(s > 0, 1.0, np.where(s < 0, 0.0, 0.5))


def split_measures(body: DiscreteBody, plane: CentralPlane):
    """``(vol_plus, vol_minus, free_plus, free_minus)`` for the two sides of ``plane``."""
    _check_plane(body, plane)
    if body.dimension == 2:
        hp = _half_plane(plane.vector, body.ambient.radius)
        vp = float(body.polygon.intersection(hp).area)
        fp = float(body.free_boundary.intersection(hp).length)
        return vp, body.volume - vp, fp, body.free_measure - fp
    h = body.resolution
    w = _ramp(body.centers @ plane.vector, h)
    vp = float(w.sum()) * h**3
    cen, area, free = body._mesh
    fa = area * free
    fp = float(fa @ _side_weights(cen @ plane.vector))
    return vp, body.volume - vp, fp, body.free_measure - fp


def _check_plane(body, plane):
    if plane.dimension != body.dimension:
        raise ValueError("plane and body dimensions differ")


def halving_tolerance(body: DiscreteBody) -> float:
    """Advertised bound on |vol_plus - vol_minus| for a halving plane: 2 h S."""
    return 2.0 * body.resolution * body.boundary_measure


def find_halving_plane(body: DiscreteBody, pivot=None, angle_tol: float = 1e-9) -> CentralPlane:
    """A central plane through ``pivot`` splitting the volume in half.

    The plane is rotated about the pivot (the origin in 2-D, a line through O
    with direction ``pivot`` in 3-D).  Turning it by pi swaps the sides, so
    the volume difference changes sign on [0, pi]; the root is bisected.
    """
    normal_at = _pencil(pivot, body.dimension)
    if not body.volume > 0:
        raise NoSignChangeError("body has no volume; every plane is degenerate")

    def diff(phi):
        vp, vm, _, _ = split_measures(body, CentralPlane.from_vector(normal_at(phi)))
        return vp - vm

    a, b = 0.0, math.pi
    fa = diff(a)
    if fa == 0.0:
        return CentralPlane.from_vector(normal_at(a))
    fb = diff(b)
    if fa * fb > 0:
        raise NoSignChangeError("volume difference does not change sign about this pivot")
    tiny = 1e-12 * body.volume
    while b - a > angle_tol:
        m = 0.5 * (a + b)
        fm = diff(m)
        if abs(fm) <= tiny:
            a = b = m
            break
        if (fm > 0) == (fa > 0):
            a, fa = m, fm
        else:
            b = m
    return CentralPlane.from_vector(normal_at(0.5 * (a + b)))


# -- reflection ----------------------------------------------------------------------


def volume_tolerance(body: DiscreteBody) -> float:
    """Volume of a 3h band over the boundary: 3 h S."""
    return 3.0 * body.resolution * body.boundary_measure


def _lattice_index(points, h):
    return np.floor(points / h).astype(np.int64)


def reflect_glue(body: DiscreteBody, plane: CentralPlane, side: str = "plus") -> DiscreteBody:
    """One side of ``body`` united with its mirror image across ``plane``.

    Requires ``plane`` to halve the volume within ``halving_tolerance``.
    """
    _check_plane(body, plane)
    if side not in ("plus", "minus"):
        raise ValueError("side must be 'plus' or 'minus'")
    vp, vm, _, _ = split_measures(body, plane)
    tol = halving_tolerance(body)
    if abs(vp - vm) > tol:
        raise ToleranceError(f"plane does not halve the body: |dV| = {abs(vp - vm):.3e} > {tol:.3e}")
    nu = plane.vector if side == "plus" else -plane.vector
    if body.dimension == 2:
        hp = _half_plane(nu, body.ambient.radius)
        keep = body.polygon.intersection(hp)
        mirror = _mirror_2d(keep, nu)
        # snapping keeps GEOS robust along the shared edge on the plane
        glued = shapely.union(keep, mirror, grid_size=SNAP * body.ambient.radius)
        return DiscreteBody(body.ambient, body.resolution, polygon=glued, axis=body.axis)
    return _reflect_glue_3d(body, nu)


def _mirror_2d(geom, nu):
    # reflection x -> x - 2 (x.nu) nu as an affine map
    a, b = nu
    m = [1 - 2 * a * a, -2 * a * b, -2 * a * b, 1 - 2 * b * b, 0.0, 0.0]
    return affinity.affine_transform(geom, m)


def _lookup(body, idx):
    # occupancy at global lattice indices, False outside the stored box
    rel = idx - np.asarray(body.start)
    shape = np.asarray(body.occupancy.shape)
    ok = np.all((rel >= 0) & (rel < shape), axis=-1)
    out = np.zeros(idx.shape[:-1], dtype=bool)
    r = rel[ok]
    out[ok] = body.occupancy[r[:, 0], r[:, 1], r[:, 2]]
    return out


def _reflect_glue_3d(body, nu, slab=32):
    h, R = body.resolution, body.ambient.radius
    cen = body.centers
    kept = cen[cen @ nu >= 0]
    if kept.size == 0:
        empty = np.zeros((1, 1, 1), bool)
        return DiscreteBody(body.ambient, h, occupancy=empty, start=(0, 0, 0), axis=body.axis)
    both = np.vstack([kept, kept - 2.0 * np.outer(kept @ nu, nu)])
    kmin = np.maximum(_lattice_index(both.min(axis=0), h) - 1, -math.ceil(R / h) - 1)
    kmax = np.minimum(_lattice_index(both.max(axis=0), h) + 2, math.ceil(R / h) + 1)
    shape = tuple(int(v) for v in kmax - kmin)
    src = body.occupancy.astype(np.uint8)
    start = np.asarray(body.start)
    # output cell o has centre (o + kmin + 1/2) h; the source cell holding
    # the mirror image of that centre has (fractional) input index
    # M (o + kmin + 1/2) - 1/2 - start, with M the reflection matrix
    M = np.eye(3) - 2.0 * np.outer(nu, nu)
    mirrored = ndimage.affine_transform(
        src, M, offset=M @ (kmin + 0.5) - 0.5 - start, output_shape=shape,
        order=0, mode="constant", cval=0,
    ).astype(bool)
    own = np.zeros(shape, dtype=bool)
    lo = np.maximum(start, kmin)
    hi = np.minimum(start + np.asarray(src.shape), kmax)
    if np.all(hi > lo):
        dst = tuple(slice(a - k, b - k) for a, b, k in zip(lo, hi, kmin))
        own[dst] = body.occupancy[tuple(slice(a - k, b - k) for a, b, k in zip(lo, hi, start))]
    occ = np.empty(shape, dtype=bool)
    ax = [(np.arange(a, b) + 0.5) * h for a, b in zip(kmin, kmax)]
    Y, Z = ax[1][None, :, None], ax[2][None, None, :]
    for i0 in range(0, shape[0], slab):
        X = ax[0][i0 : i0 + slab, None, None]
        sd = X * nu[0] + Y * nu[1] + Z * nu[2]
        inside = X * X + Y * Y + Z * Z <= R * R
        sl = slice(i0, i0 + slab)
        occ[sl] = np.where(sd >= 0, own[sl], mirrored[sl]) & inside
    return DiscreteBody(body.ambient, h, occupancy=occ, start=tuple(kmin), axis=body.axis)


def symmetry_defect(body: DiscreteBody, plane: CentralPlane) -> float:
    """Mismatch volume between body and mirror image, per unit boundary measure.

    A length: 0 for an exactly symmetric body, about h for voxel rounding.
    """
    _check_plane(body, plane)
    if body.boundary_measure == 0:
        return 0.0
    if body.dimension == 2:
        mirror = _mirror_2d(body.polygon, plane.vector)
        diff = shapely.symmetric_difference(body.polygon, mirror, grid_size=SNAP * body.ambient.radius)
        return float(diff.area) / body.boundary_measure
    h = body.resolution
    cen = body.centers
    img = _lattice_index(plane.reflect(cen), h)
    missing = np.count_nonzero(~_lookup(body, img))
    # |A \ rA| = |rA \ A|, so the symmetric difference is twice this
    return 2.0 * missing * h**3 / body.boundary_measure


# -- normals ----------------------------------------------------------------------------


def _edge_normals_2d(ring):
    xy = np.asarray(ring.coords)[:-1]
    e = np.roll(xy, -1, axis=0) - xy
    nrm = np.stack([e[:, 1], -e[:, 0]], axis=1)
    nrm /= np.linalg.norm(nrm, axis=1, keepdims=True)
    if not ring.is_ccw:
        nrm = -nrm
    return xy, e, nrm


def _incidence_2d(body, plane):
    R, h = body.ambient.radius, body.resolution
    t = np.array([-plane.normal[1], plane.normal[0]])
    line = LineString([tuple(-2 * R * t), tuple(2 * R * t)])
    hits = shapely.get_coordinates(body.free_boundary.intersection(line))
    polys = body.polygon.geoms if isinstance(body.polygon, MultiPolygon) else [body.polygon]
    rings = [r for p in polys for r in [p.exterior, *p.interiors]]
    worst = 0.0
    for q in hits:
        best = None
        for ring in rings:
            xy, e, nrm = _edge_normals_2d(ring)
            # distance from q to every edge
            tt = np.clip(np.einsum("ij,ij->i", q - xy, e) / np.einsum("ij,ij->i", e, e), 0, 1)
            dist = np.linalg.norm(xy + tt[:, None] * e - q, axis=1)
            j = int(np.argmin(dist))
            if best is None or dist[j] < best[0]:
                # vertex normals averaged from the adjacent edges, then
                # interpolated along the edge: second order on smooth arcs
                n0 = nrm[j] + nrm[j - 1]
                n1 = nrm[j] + nrm[(j + 1) % len(nrm)]
                n0 /= np.linalg.norm(n0)
                n1 /= np.linalg.norm(n1)
                nv = (1.0 - tt[j]) * n0 + tt[j] * n1
                best = (dist[j], nv / np.linalg.norm(nv))
        if best is not None:
            worst = max(worst, abs(float(best[1] @ plane.vector)))
    return worst, len(hits)


def _fit_sphere(points):
    # algebraic least squares: |p|^2 = 2 p.c + (r^2 - |c|^2)
    A = np.hstack([2.0 * points, np.ones((len(points), 1))])
    sol, *_ = np.linalg.lstsq(A, np.einsum("ij,ij->i", points, points), rcond=None)
    c = sol[:3]
    r = math.sqrt(max(sol[3] + c @ c, 0.0))
    return c, r


def _incidence_3d(body, plane, margin):
    h, R = body.resolution, body.ambient.radius
    field, corner = body._smoothed()
    verts, _, _, _ = marching_cubes(field, level=0.5, spacing=(h, h, h))
    verts += corner
    free = verts[np.linalg.norm(verts, axis=1) < R - margin * h]
    if len(free) < 4:
        return 0.0, 0
    c, r = _fit_sphere(free)
    resid = np.abs(np.linalg.norm(free - c, axis=1) - r)
    if np.sqrt(np.mean(resid**2)) > h:
        raise SymmetryError("free surface is not a sphere patch; incidence needs a lens body")
    s = free @ plane.vector
    trace = free[np.abs(s) <= 0.5 * h]
    if trace.size == 0:
        return 0.0, 0
    trace = trace - np.outer(trace @ plane.vector, plane.vector)
    nrm = trace - c
    nrm /= np.linalg.norm(nrm, axis=1, keepdims=True)
    return float(np.max(np.abs(nrm @ plane.vector))), len(trace)


def perpendicular_incidence(body: DiscreteBody, plane: CentralPlane, margin: float = 4.0) -> float:
    """Largest |<surface normal, plane normal>| along the plane's trace on the free surface.

    0 means the surface normal lies in the plane at every sampled point.
    In 2-D the normal is taken from the polygon edges at each crossing.  In
    3-D the body must be a lens: a sphere is fitted to the free surface
    vertices lying at least ``margin * h`` inside U, the trace is sampled from
    those within h/2 of the plane, and normals come from the fitted centre.
    Returns 0 when the plane misses the free surface.
    """
    _check_plane(body, plane)
    if body.dimension == 2:
        return _incidence_2d(body, plane)[0]
    return _incidence_3d(body, plane, margin)[0]


# -- quarters and sectors -------------------------------------------------------------


def _require_axis(body):
    if body.dimension != 3:
        raise SymmetryError("quarters and sectors need a 3-D body of revolution")
    if body.axis is None:
        raise SymmetryError("body has no revolution axis")
    return np.asarray(body.axis)


def _region_measures(body, normals):
    """Volume and free measure of the intersection of half-spaces {x . nu >= 0}."""
    h = body.resolution
    w = np.ones(len(body.centers))
    cen, area, free = body._mesh
    fw = area * free
    for nu in normals:
        w = w * _ramp(body.centers @ nu, h)
        fw = fw * _side_weights(cen @ nu)
    return float(w.sum()) * h**3, float(fw.sum())


def quarters_check(body: DiscreteBody, p1: CentralPlane, p2: CentralPlane, tol: float = 1e-9):
    """The four ``(volume, free)`` parts cut by two perpendicular axis planes.

    Order: (+, +), (+, -), (-, +), (-, -) with respect to (p1, p2).
    """
    a = _require_axis(body)
    n1, n2 = p1.vector, p2.vector
    if abs(n1 @ n2) > tol:
        raise SymmetryError("planes are not perpendicular")
    if abs(n1 @ a) > tol or abs(n2 @ a) > tol:
        raise SymmetryError("both planes must contain the revolution axis")
    return [
        _region_measures(body, (s1 * n1, s2 * n2))
        for s1 in (1, -1)
        for s2 in (1, -1)
    ]


def _max_axis_distance(body, a):
    c = body.centers
    return float(np.max(np.linalg.norm(c - np.outer(c @ a, a), axis=1)))


def sector_measures(body: DiscreteBody, k: int, phase: float = 0.0):
    """``(volume, free)`` of the wedge of dihedral angle pi / 2^k starting at ``phase``."""
    a = _require_axis(body)
    if k < 1:
        raise ValueError("k must be >= 1")
    alpha = math.pi / 2**k
    h = body.resolution
    if alpha * _max_axis_distance(body, a) < MIN_SECTOR_CELLS * h:
        raise ResolutionError(f"sector k={k} is thinner than {MIN_SECTOR_CELLS:g} cells at h={h:.3g}")
    e1, e2 = _orthonormal_pair(a)
    u = math.cos(phase) * e1 + math.sin(phase) * e2
    v = np.cross(a, u)
    # phi in [0, pi] and phi <= alpha, measured from u towards v
    return _region_measures(body, (v, math.sin(alpha) * u - math.cos(alpha) * v))


def dyadic_sector_check(body: DiscreteBody, k: int, phase: float = 0.0):
    """``(vol_fraction, free_fraction)`` of the pi / 2^k wedge; both ideally 2^-(k+1)."""
    vol, free = sector_measures(body, k, phase)
    fm = body.free_measure
    return vol / body.volume, (free / fm if fm > 0 else math.nan)


# -- import / export --------------------------------------------------------------------


def export_body(body: DiscreteBody, path) -> list[Path]:
    """Write a body: CSV vertex loops in 2-D, JSON header plus raw cells in 3-D.

    Returns the files written.  In 3-D ``path`` names the header; the cells go
    next to it with suffix ``.bin``, one byte per cell in C order.
    """
    path = Path(path)
    if body.dimension == 2:
        polys = body.polygon.geoms if isinstance(body.polygon, MultiPolygon) else [body.polygon]
        with path.open("w", newline="") as fh:
            fh.write(f"# dimension=2\n# resolution={body.resolution!r}\n")
            if body.axis is not None:
                fh.write(f"# axis={body.axis[0]!r},{body.axis[1]!r}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["polygon", "ring", "x", "y"])
            for i, p in enumerate(polys):
                if p.is_empty:
                    continue
                for j, ring in enumerate([p.exterior, *p.interiors]):
                    for x, y in ring.coords[:-1]:
                        w.writerow([i, j, repr(float(x)), repr(float(y))])
        return [path]
    data = path.with_suffix(".bin")
    header = {
        "dimension": 3,
        "resolution": body.resolution,
        "origin": [s * body.resolution for s in body.start],
        "shape": list(body.occupancy.shape),
        "axis": list(body.axis) if body.axis is not None else None,
        "data": data.name,
        "dtype": "uint8",
        "order": "C",
    }
    path.write_text(json.dumps(header, indent=2) + "\n")
    data.write_bytes(np.ascontiguousarray(body.occupancy, dtype=np.uint8).tobytes())
    return [path, data]


def import_body(path) -> DiscreteBody:
    path = Path(path)
    if path.suffix == ".json":
        header = json.loads(path.read_text())
        if header.get("dimension") != 3:
            raise ValueError("voxel header must have dimension 3")
        h = float(header["resolution"])
        start = [round(o / h) for o in header["origin"]]
        if any(abs(s * h - o) > 1e-9 * h for s, o in zip(start, header["origin"])):
            raise ValueError("origin is not on the lattice of the given resolution")
        raw = np.frombuffer((path.parent / header["data"]).read_bytes(), dtype=np.uint8)
        occ = raw.reshape(header["shape"]).astype(bool)
        return DiscreteBody(BallGeometry.unit(3), h, occupancy=occ, start=tuple(start), axis=header.get("axis"))
    meta, rows = {}, []
    with path.open(newline="") as fh:
        lines = []
        for line in fh:
            if line.startswith("#"):
                key, _, val = line[1:].strip().partition("=")
                meta[key.strip()] = val.strip()
            else:
                lines.append(line)
    reader = csv.DictReader(lines)
    for row in reader:
        rows.append((int(row["polygon"]), int(row["ring"]), float(row["x"]), float(row["y"])))
    if meta.get("dimension", "2") != "2":
        raise ValueError("CSV bodies are 2-D")
    rings: dict[int, dict[int, list]] = {}
    for i, j, x, y in rows:
        rings.setdefault(i, {}).setdefault(j, []).append((x, y))
    polys = [Polygon(r[0], [r[j] for j in sorted(r) if j > 0]) for _, r in sorted(rings.items())]
    geom = polys[0] if len(polys) == 1 else MultiPolygon(polys)
    axis = tuple(float(v) for v in meta["axis"].split(",")) if "axis" in meta else None
    return DiscreteBody(BallGeometry.unit(2), float(meta["resolution"]), polygon=geom, axis=axis)
