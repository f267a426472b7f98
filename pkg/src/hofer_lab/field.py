"""Discretized annulus S^1 x (0, 1), scalar fields on it, and planar regions.

Values live at cell centres. theta has period exactly 1, so the total area of
the annulus is 1 and every cell has area 1 / (n_theta * n_h).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Callable

import numpy as np


class GeometryError(ValueError):
    """Raised when a region or construction does not fit the annulus."""


class OrientationError(GeometryError):
    """Raised for clockwise (negatively oriented) region boundaries."""


@dataclass(frozen=True)
class AnnulusGrid:
    n_theta: int
    n_h: int

    def __post_init__(self):
        if self.n_theta < 1 or self.n_h < 1:
            raise ValueError("grid dimensions must be positive")

    @property
    def cell_area(self) -> float:
        return 1.0 / (self.n_theta * self.n_h)

    @property
    def theta(self) -> np.ndarray:
        return (np.arange(self.n_theta) + 0.5) / self.n_theta

    @property
    def h(self) -> np.ndarray:
        return (np.arange(self.n_h) + 0.5) / self.n_h

    @property
    def shape(self) -> tuple[int, int]:
        # h-major: values[j, i] sits at (theta[i], h[j])
        return (self.n_h, self.n_theta)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """Return (theta, h) node coordinates, each of shape ``(n_h, n_theta)``."""
        th, hh = np.meshgrid(self.theta, self.h)
        return th, hh

    @classmethod
    def square(cls, n: int) -> "AnnulusGrid":
        return cls(n, n)


@dataclass(frozen=True, eq=False)
class ScalarField:
    """A compactly supported function on the annulus sampled at cell centres.

    Rows whose centre lies within ``support_margin`` of either boundary
    circle are set to zero on construction, so compact support holds by
    construction rather than by checking.
    """

    grid: AnnulusGrid
    values: np.ndarray
    support_margin: float = 0.0

    def __post_init__(self):
        vals = np.array(self.values, dtype=float, copy=True)
        if vals.shape != self.grid.shape:
            raise ValueError(f"values shape {vals.shape} does not match grid {self.grid.shape}")
        if not 0.0 <= self.support_margin < 0.5:
            raise ValueError("support_margin must lie in [0, 1/2)")
        if not np.all(np.isfinite(vals)):
            raise ValueError("field values must be finite")
        h = self.grid.h
        vals[(h < self.support_margin) | (h > 1.0 - self.support_margin), :] = 0.0
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_function(cls, grid: AnnulusGrid, fn: Callable[[np.ndarray, np.ndarray], np.ndarray],
                      support_margin: float = 0.0) -> "ScalarField":
        th, hh = grid.mesh()
        return cls(grid, np.broadcast_to(fn(th, hh), grid.shape), support_margin)

    @classmethod
    def zeros(cls, grid: AnnulusGrid, support_margin: float = 0.0) -> "ScalarField":
        return cls(grid, np.zeros(grid.shape), support_margin)

    def _combine(self, other: "ScalarField", values: np.ndarray) -> "ScalarField":
        if other.grid != self.grid:
            raise ValueError("fields live on different grids")
        return ScalarField(self.grid, values, min(self.support_margin, other.support_margin))

    def __add__(self, other: "ScalarField") -> "ScalarField":
        return self._combine(other, self.values + other.values)

    def __sub__(self, other: "ScalarField") -> "ScalarField":
        return self._combine(other, self.values - other.values)

    def __mul__(self, c: float) -> "ScalarField":
        return ScalarField(self.grid, self.values * float(c), self.support_margin)

    __rmul__ = __mul__

    def __neg__(self) -> "ScalarField":
        return self * -1.0

    @property
    def oscillation(self) -> float:
        """max - min over the grid nodes."""
        return float(self.values.max() - self.values.min())

    @property
    def is_zonal(self) -> bool:
        """True when the field depends on h only (every row is constant)."""
        v = self.values
        return bool(np.all(v == v[:, :1]))


def integrate(f: ScalarField) -> float:
    """Midpoint-rule approximation of the integral of ``f`` against the area form."""
    return float(f.values.sum() * f.grid.cell_area)


# -- regions -----------------------------------------------------------------

def region_area(r: "Region | np.ndarray") -> float:
    """Signed shoelace area; positive for counterclockwise boundaries."""
    v = r.vertices if isinstance(r, Region) else np.asarray(r, dtype=float)
    x, y = v[:, 0], v[:, 1]
    return float(0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


@dataclass(frozen=True, eq=False)
class Region:
    """Closed polygon in the lifted coordinates (theta_lift, h), counterclockwise.

    ``vertices`` is an ``(N, 2)`` array; the closing edge is implicit.
    """

    vertices: np.ndarray
    meta: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        v = np.array(self.vertices, dtype=float, copy=True)
        if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3:
            raise GeometryError("a region needs at least three (theta, h) vertices")
        if np.allclose(v[0], v[-1]):
            v = v[:-1]
        a = region_area(v)
        if a < 0:
            raise OrientationError(f"boundary is clockwise (signed area {a:.6g})")
        if a == 0:
            raise GeometryError("degenerate region")
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)

    @property
    def area(self) -> float:
        return region_area(self)

    @property
    def centroid(self) -> tuple[float, float]:
        x, y = self.vertices[:, 0], self.vertices[:, 1]
        cross = x * np.roll(y, -1) - np.roll(x, -1) * y
        a = cross.sum() / 2
        cx = np.sum((x + np.roll(x, -1)) * cross) / (6 * a)
        cy = np.sum((y + np.roll(y, -1)) * cross) / (6 * a)
        return float(cx), float(cy)

    def is_simple(self) -> bool:
        import shapely

        return bool(shapely.LinearRing(self.vertices).is_simple)

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        lo = self.vertices.min(axis=0)
        hi = self.vertices.max(axis=0)
        return float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1])


def rounded_rectangle(t0: float, t1: float, h0: float, h1: float, radius: float,
                      arc_points: int = 16, edge_spacing: float = 0.01) -> np.ndarray:
    """Counterclockwise boundary of a rectangle with quarter-circle corners.

    Straight edges are subdivided so no edge is longer than ``edge_spacing``.
    """
    if radius < 0 or 2 * radius > min(t1 - t0, h1 - h0):
        raise GeometryError("corner radius does not fit the rectangle")
    corners = [  # (centre, start angle)
        ((t1 - radius, h0 + radius), -np.pi / 2),
        ((t1 - radius, h1 - radius), 0.0),
        ((t0 + radius, h1 - radius), np.pi / 2),
        ((t0 + radius, h0 + radius), np.pi),
    ]
    pts = []
    prev = None
    for (cx, cy), a0 in corners:
        ang = a0 + np.linspace(0.0, np.pi / 2, arc_points)
        arc = np.column_stack([cx + radius * np.cos(ang), cy + radius * np.sin(ang)])
        if prev is not None:
            pts.extend(_subdivide(prev, arc[0], edge_spacing))
        pts.extend(arc)
        prev = arc[-1]
    pts.extend(_subdivide(prev, pts[0], edge_spacing))
    out = np.asarray(pts)
    keep = np.ones(len(out), dtype=bool)
    keep[1:] = np.any(np.abs(np.diff(out, axis=0)) > 1e-14, axis=1)
    return out[keep]


def _subdivide(a, b, spacing):
    a = np.asarray(a)
    b = np.asarray(b)
    k = max(1, int(math.ceil(np.hypot(*(b - a)) / spacing)))
    s = np.arange(1, k)[:, None] / k
    return list(a + s * (b - a))


def disk_top(A: float, delta: float, delta_prime: float) -> float:
    """Height of the top edge of the disk built by :func:`build_disk_region`."""
    r = min(delta, delta_prime) / 2
    width = 1.0 - 2 * delta
    return delta + (A + (4 - np.pi) * r * r) / width


def build_disk_region(A: float, delta: float = 0.02, delta_prime: float = 0.01) -> Region:
    """Smoothed rectangle (delta, 1 - delta) x (delta, top) of area ``A``.

    The top edge is placed so that the rounded rectangle has area exactly
    ``A``; ``delta_prime`` sets the corner radius and is the clearance kept
    above the disk for the spiral band.
    """
    if not A > 0.5:
        raise GeometryError(f"A = {A} <= 1/2: the disk would be displaceable")
    if not A < 1.0:
        raise GeometryError("disk area must be below the annulus area 1")
    if delta <= 0 or delta_prime <= 0 or delta >= 0.25:
        raise GeometryError("delta and delta_prime must be small positive numbers")
    top = disk_top(A, delta, delta_prime)
    if top + delta_prime + delta >= 1.0 - delta:
        raise GeometryError(f"disk of area {A} with delta={delta} does not fit in the annulus")
    r = min(delta, delta_prime) / 2
    verts = rounded_rectangle(delta, 1.0 - delta, delta, top, r)
    return Region(verts, meta={"A": A, "delta": delta, "delta_prime": delta_prime,
                               "rect": (delta, 1.0 - delta, delta, top)})


def cosine_ramp(x: np.ndarray) -> np.ndarray:
    """C^1 step: 0 for x <= 0, 1 for x >= 1, (1 - cos(pi x)) / 2 in between."""
    x = np.clip(x, 0.0, 1.0)
    return 0.5 * (1.0 - np.cos(np.pi * x))


def region_distance(r: Region, theta: np.ndarray, h: np.ndarray, periodic: bool = True) -> np.ndarray:
    """Signed distance to the region boundary (negative inside), theta periodic."""
    import shapely

    poly = shapely.Polygon(r.vertices)
    ring = poly.exterior
    th = np.asarray(theta, dtype=float)
    hh = np.asarray(h, dtype=float)
    shifts = (-1.0, 0.0, 1.0) if periodic else (0.0,)
    best = None
    inside = np.zeros(th.shape, dtype=bool)
    for s in shifts:
        pts = shapely.points(th + s, hh)
        d = shapely.distance(pts, ring)
        best = d if best is None else np.minimum(best, d)
        inside |= shapely.contains_xy(poly, th + s, hh)
    return np.where(inside, -best, best)


def region_indicator(grid: AnnulusGrid, r: Region) -> np.ndarray:
    """Boolean mask of cells whose centre lies inside ``r``."""
    import shapely

    poly = shapely.Polygon(r.vertices)
    th, hh = grid.mesh()
    mask = np.zeros(grid.shape, dtype=bool)
    for s in (-1.0, 0.0, 1.0):
        mask |= shapely.contains_xy(poly, th + s, hh)
    return mask


# -- CSV interfaces ----------------------------------------------------------

def write_field_csv(f: ScalarField, path: str | Path) -> None:
    """First line ``n_theta,n_h,support_margin``; then one line per h-row."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w") as fh:
        fh.write(f"{f.grid.n_theta},{f.grid.n_h},{f.support_margin!r}\n")
        for row in f.values:
            fh.write(",".join(repr(float(x)) for x in row))
            fh.write("\n")
    tmp.replace(path)


def read_field_csv(path: str | Path) -> ScalarField:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if len(header) != 3:
            raise ValueError("field CSV header must be n_theta,n_h,support_margin")
        n_theta, n_h = int(header[0]), int(header[1])
        margin = float(header[2])
        data = np.array([float(x) for line in fh for x in line.strip().split(",") if x.strip()])
    if data.size != n_theta * n_h:
        raise ValueError(f"expected {n_theta * n_h} values, found {data.size}")
    return ScalarField(AnnulusGrid(n_theta, n_h), data.reshape(n_h, n_theta), margin)


def write_region_csv(r: Region, path: str | Path) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    np.savetxt(tmp, r.vertices, delimiter=",", header="theta_lift,h", comments="", fmt="%.17g")
    tmp.replace(path)


def read_region_csv(path: str | Path) -> Region:
    return Region(np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2))
