"""Hamiltonian flows on the annulus, Hofer lengths and translation numbers.

Sign convention for the area form dtheta ^ dh: the flow of H solves

    dtheta/dt = dH/dh,    dh/dt = -dH/dtheta,

so H(theta, h) = h rotates every circle by +1 per unit time. theta is never
reduced mod 1 during integration; the accumulated value is the lift to the
universal cover R x (0, 1) that is the identity near the boundary.
"""

from __future__ import annotations

import math
import weakref
from dataclasses import dataclass, field as dc_field, replace
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from . import _kernels
from .field import AnnulusGrid, Region, ScalarField


class FlowError(RuntimeError):
    """Numerical fault while integrating or reading a flow."""


class StepSizeError(FlowError):
    """A node would move by more than the allowed number of cells in one step."""


class TranslationError(FlowError):
    """Translation number not within tolerance of an integer, or lift unavailable."""


TAU_TOL = 0.05

_COEFFS: "weakref.WeakKeyDictionary[ScalarField, np.ndarray]" = weakref.WeakKeyDictionary()


def _coefficients(f: ScalarField) -> np.ndarray:
    c = _COEFFS.get(f)
    if c is None:
        c = _kernels.spline_coefficients(f.values)
        _COEFFS[f] = c
    return c


# -- paths -------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ZonalRate:
    """Exact flow of an h-only Hamiltonian given its derivative ``rate(h)``."""

    rate: Callable[[np.ndarray], np.ndarray]

    def advance(self, theta, h, duration, dt, max_cells, grid, label="", tangent=None) -> None:
        _shear_tangent(tangent, self.rate, h, duration)
        theta += duration * self.rate(h)

    def negated(self) -> "ZonalRate":
        rate = self.rate
        return ZonalRate(lambda h: -rate(h))


@dataclass(frozen=True, eq=False)
class Separable:
    """H(theta, h) = scale * f(theta) * g(h) with finely sampled 1D profiles.

    ``f`` is sampled at cell centres of a periodic grid, ``g`` at cell
    centres of (0, 1) and continued by zero. Both are interpolated by cubic
    splines, so the flow is resolved far below the field grid spacing. Steps
    are subdivided where the velocity gradient is large, ``resolve``
    substeps per unit of gradient times dt.
    """

    f: np.ndarray
    g: np.ndarray
    scale: float = 1.0
    resolve: float = 10.0

    def __post_init__(self):
        object.__setattr__(self, "_cf", _kernels.periodic_coefficients(self.f))
        object.__setattr__(self, "_cg", _kernels.clamped_coefficients(self.g))

    @classmethod
    def from_functions(cls, f: Callable, g: Callable, scale: float = 1.0,
                       samples: int = 4096) -> "Separable":
        x = (np.arange(samples) + 0.5) / samples
        return cls(f(x), g(x), scale)

    def negated(self) -> "Separable":
        return Separable(self.f, self.g, -self.scale, self.resolve)

    def advance(self, theta, h, duration, dt, max_cells, grid, label="", tangent=None) -> None:
        nsteps = max(1, int(math.ceil(duration / dt - 1e-9)))
        step = duration / nsteps
        worst = _kernels.rk4_separable(self._cf, self._cg, theta, h, self.scale, step, nsteps,
                                       grid.n_theta, grid.n_h, max_cells, self.resolve,
                                       _kernels.NO_TANGENT if tangent is None else tangent)
        _check_step(worst, max_cells, step, label)


@dataclass(frozen=True, eq=False)
class Conjugation:
    """Factorization ``S^-1 o flow(generator) o S`` of a segment's time-t map.

    ``S`` is the zonal shear ``(theta, h) -> (theta + rate(h), h)``. A segment
    whose field equals ``generator o S`` has exactly this time-t map; the
    factored form lets the integrator work with the unsheared generator,
    which may be a ScalarField or an exact generator such as Separable.
    """

    generator: object
    rate: Callable[[np.ndarray], np.ndarray]

    def negated(self) -> "Conjugation":
        return Conjugation(-self.generator if isinstance(self.generator, ScalarField)
                           else self.generator.negated(), self.rate)


@dataclass(frozen=True, eq=False)
class Segment:
    """One autonomous piece of a path.

    ``field`` is always the sampled Hamiltonian (it defines the Hofer
    length). When ``exact`` is given (ZonalRate or Separable) the flow is
    computed from it instead of from the spline of the samples; when
    ``conjugation`` is given the flow is computed in factored form.
    """

    field: ScalarField
    duration: float
    conjugation: Conjugation | None = None
    label: str = ""
    exact: object = None

    def __post_init__(self):
        if not self.duration >= 0:
            raise ValueError("segment duration must be non-negative")
        if isinstance(self.exact, ZonalRate) and not self.field.is_zonal:
            raise ValueError("zonal rate given for a field that depends on theta")


@dataclass(frozen=True, eq=False)
class HamiltonianPath:
    """Piecewise-autonomous Hamiltonian: fields applied one after another."""

    segments: tuple[Segment, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))

    @classmethod
    def autonomous(cls, f: ScalarField, duration: float = 1.0, label: str = "") -> "HamiltonianPath":
        return cls((Segment(f, duration, label=label),))

    def __add__(self, other: "HamiltonianPath") -> "HamiltonianPath":
        return HamiltonianPath(self.segments + other.segments)

    def __mul__(self, k: int) -> "HamiltonianPath":
        return HamiltonianPath(self.segments * int(k))

    @property
    def duration(self) -> float:
        return float(sum(s.duration for s in self.segments))

    def reversed(self) -> "HamiltonianPath":
        """Generator of the inverse map: segments reversed with negated fields."""
        segs = []
        for s in reversed(self.segments):
            conj = s.conjugation.negated() if s.conjugation is not None else None
            exact = s.exact.negated() if s.exact is not None else None
            segs.append(Segment(-s.field, s.duration, conj, s.label + "^-1" if s.label else "", exact))
        return HamiltonianPath(tuple(segs))

    @property
    def grid(self) -> AnnulusGrid:
        if not self.segments:
            raise ValueError("empty path has no grid")
        return self.segments[0].field.grid


def hofer_length(path: HamiltonianPath) -> float:
    """Sum over segments of duration * (max H - min H) over the grid nodes."""
    return float(sum(s.duration * s.field.oscillation for s in path.segments))


def hamiltonian_vector_field(H: ScalarField) -> tuple[np.ndarray, np.ndarray]:
    """Centered-difference samples of (dtheta/dt, dh/dt) = (dH/dh, -dH/dtheta)."""
    v = H.values
    g = H.grid
    dth = (np.roll(v, -1, axis=1) - np.roll(v, 1, axis=1)) * (g.n_theta / 2.0)
    padded = np.pad(v, ((1, 1), (0, 0)))
    dh = (padded[2:] - padded[:-2]) * (g.n_h / 2.0)
    return dh, -dth


# -- integration -------------------------------------------------------------

def _shear_tangent(tangent, rate, h, scale=1.0, step=1e-7) -> None:
    """Left-multiply tangents by the Jacobian of theta += scale * rate(h).

    That Jacobian is unipotent, so the slope (taken by central differences
    of ``rate``) only affects the off-diagonal entry, never the determinant.
    """
    if tangent is None:
        return
    s = scale * (rate(h + step) - rate(h - step)) / (2 * step)
    tangent[:, 0] += s * tangent[:, 2]
    tangent[:, 1] += s * tangent[:, 3]


def _advance_segment(seg: Segment, theta: np.ndarray, h: np.ndarray, dt: float,
                     max_cells: float, tangent: np.ndarray | None = None) -> None:
    if seg.duration == 0 or not np.any(seg.field.values):
        return
    grid = seg.field.grid
    if seg.conjugation is not None:
        rate = seg.conjugation.rate
        _shear_tangent(tangent, rate, h)
        theta += rate(h)
        _advance_generator(seg.conjugation.generator, seg.duration, theta, h, dt, max_cells,
                           grid, seg.label, tangent)
        _shear_tangent(tangent, rate, h, -1.0)
        theta -= rate(h)
    elif seg.exact is not None:
        _advance_generator(seg.exact, seg.duration, theta, h, dt, max_cells, grid, seg.label,
                           tangent)
    else:
        _advance_field(seg.field, seg.duration, theta, h, dt, max_cells, seg.label, tangent)


def _advance_generator(gen, duration, theta, h, dt, max_cells, grid, label, tangent) -> None:
    if isinstance(gen, ScalarField):
        _advance_field(gen, duration, theta, h, dt, max_cells, label, tangent)
    else:
        gen.advance(theta, h, duration, dt, max_cells, grid, label, tangent)


def _check_step(worst: float, max_cells: float, step: float, label: str) -> None:
    if worst > max_cells:
        name = f" '{label}'" if label else ""
        raise StepSizeError(
            f"segment{name}: a node moved {worst:.2f} cells in one step (limit {max_cells}); "
            f"reduce dt below {step * max_cells / worst:.3g}")


def _zonal_rate(f: ScalarField) -> Callable[[np.ndarray], np.ndarray]:
    """dH/dh of an h-only field: centred differences, linear in between.

    The compact stencil is exact wherever the field is locally linear in h,
    where a global spline would ring next to any kink of the profile.
    """
    g = f.grid
    col = np.concatenate([[0.0], f.values[:, 0], [0.0]])
    rate = (col[2:] - col[:-2]) * (g.n_h / 2.0)
    nodes = g.h
    return lambda h: np.interp(h, nodes, rate, left=0.0, right=0.0)


def _advance_field(f: ScalarField, duration: float, theta, h, dt, max_cells, label,
                   tangent=None) -> None:
    if f.is_zonal:
        ZonalRate(_zonal_rate(f)).advance(theta, h, duration, dt, max_cells, f.grid, label, tangent)
        return
    c = _coefficients(f)
    M = _kernels.NO_TANGENT if tangent is None else tangent
    nsteps = max(1, int(math.ceil(duration / dt - 1e-9)))
    step = duration / nsteps
    worst = _kernels.rk4_advect(c, theta, h, 1.0, step, nsteps, max_cells, M)
    _check_step(worst, max_cells, step, label)


def advect(path: HamiltonianPath, theta, h, dt: float, max_cells: float = 1.0,
           tangent: bool = False):
    """Push points through every segment of ``path``; returns new (theta_lift, h).

    With ``tangent=True`` a third array of shape ``(..., 2, 2)`` is returned:
    the Jacobian of the computed map at each point, propagated through the
    same integrator steps.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    th = np.array(theta, dtype=float, copy=True).ravel()
    hh = np.array(h, dtype=float, copy=True).ravel()
    M = np.tile([1.0, 0.0, 0.0, 1.0], (th.size, 1)) if tangent else None
    for seg in path.segments:
        _advance_segment(seg, th, hh, dt, max_cells, M)
    shape = np.shape(theta)
    if tangent:
        return th.reshape(shape), hh.reshape(shape), M.reshape(shape + (2, 2))
    return th.reshape(shape), hh.reshape(shape)


@dataclass(eq=False)
class FlowMap:
    """Images of the nodes of ``grid`` under a time-1 map, theta unwrapped.

    ``jacobian`` (if present) holds the Jacobian of the computed map at each
    node, propagated alongside the node by the integrator. ``path`` and
    ``dt`` are kept so that further points can be pushed through the same
    flow exactly; maps read from files have neither and carry no valid lift.
    """

    grid: AnnulusGrid
    theta: np.ndarray
    h: np.ndarray
    jacobian: np.ndarray | None = None
    path: HamiltonianPath | None = None
    dt: float | None = None
    lift_valid: bool = True
    meta: dict = dc_field(default_factory=dict)

    @classmethod
    def identity(cls, grid: AnnulusGrid) -> "FlowMap":
        th, hh = grid.mesh()
        jac = np.broadcast_to(np.eye(2), grid.shape + (2, 2)).copy()
        return cls(grid, th, hh, jac, HamiltonianPath(), 1.0)

    def displacement(self) -> tuple[np.ndarray, np.ndarray]:
        th, hh = self.grid.mesh()
        return self.theta - th, self.h - hh

    def apply(self, theta, h):
        """Image of arbitrary points: exact re-advection when the flow is known."""
        if self.path is not None and self.dt is not None:
            return advect(self.path, theta, h, self.dt)
        return self.interpolate(theta, h)

    def interpolate(self, theta, h):
        """Bilinear interpolation of the lifted displacement (periodic in theta)."""
        g = self.grid
        dth, dh = self.displacement()
        theta = np.asarray(theta, dtype=float)
        h = np.asarray(h, dtype=float)
        x = theta * g.n_theta - 0.5
        y = np.clip(h * g.n_h - 0.5, 0.0, g.n_h - 1.0)
        ix = np.floor(x).astype(int)
        iy = np.minimum(np.floor(y).astype(int), g.n_h - 2) if g.n_h > 1 else np.zeros_like(x, dtype=int)
        tx = x - ix
        ty = y - iy
        i0 = ix % g.n_theta
        i1 = (ix + 1) % g.n_theta
        j1 = np.minimum(iy + 1, g.n_h - 1)

        def lerp(a):
            return ((1 - tx) * (1 - ty) * a[iy, i0] + tx * (1 - ty) * a[iy, i1]
                    + (1 - tx) * ty * a[j1, i0] + tx * ty * a[j1, i1])

        return theta + lerp(dth), h + lerp(dh)


def integrate_flow(path: HamiltonianPath, dt: float, grid: AnnulusGrid | None = None,
                   jacobian: bool = True, max_cells: float = 1.0) -> FlowMap:
    """Time-1 map of ``path`` sampled on ``grid`` (default: the field grid).

    Non-zonal segments are integrated with classical RK4 using steps of at
    most ``dt``; h-only segments are advanced in closed form, theta moving
    by the duration times the centred-difference slope of the profile. A
    :class:`StepSizeError` is raised if any node moves more than
    ``max_cells`` cells of the field grid within one step.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    for s in path.segments:
        if s.duration > 0 and dt > s.duration + 1e-12 and not s.field.is_zonal:
            raise ValueError(f"dt={dt} exceeds a segment duration {s.duration}")
    if grid is None:
        grid = path.grid if path.segments else AnnulusGrid(64, 64)
    th, hh = grid.mesh()
    t0, h0 = th.ravel(), hh.ravel()
    if jacobian:
        out_t, out_h, jac = advect(path, t0, h0, dt, max_cells, tangent=True)
        img_t = out_t.reshape(grid.shape)
        img_h = out_h.reshape(grid.shape)
        jac = jac.reshape(grid.shape + (2, 2))
    else:
        out_t, out_h = advect(path, t0, h0, dt, max_cells)
        img_t = out_t.reshape(grid.shape)
        img_h = out_h.reshape(grid.shape)
        jac = None
    return FlowMap(grid, img_t, img_h, jac, path, dt)


def area_distortion(m: FlowMap) -> float:
    """max over interior nodes of |det(Jacobian) - 1|.

    Uses the propagated Jacobians when available, otherwise centered
    differences across neighbouring nodes.
    """
    g = m.grid
    if m.jacobian is not None:
        J = m.jacobian
    else:
        J = np.empty(g.shape + (2, 2))
        J[..., 0, 0] = (np.roll(m.theta, -1, 1) - np.roll(m.theta, 1, 1)) * g.n_theta / 2
        J[..., 1, 0] = (np.roll(m.h, -1, 1) - np.roll(m.h, 1, 1)) * g.n_theta / 2
        J[..., 0, 1] = np.gradient(m.theta, 1.0 / g.n_h, axis=0)
        J[..., 1, 1] = np.gradient(m.h, 1.0 / g.n_h, axis=0)
    det = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
    interior = det[1:-1] if g.n_h > 2 else det
    return float(np.max(np.abs(interior - 1.0)))


# -- translation numbers -----------------------------------------------------

def _default_dt(path: HamiltonianPath) -> float:
    durs = [s.duration for s in path.segments if s.duration > 0 and not s.field.is_zonal]
    return min([1e-3] + durs)


def translation_winding(path: HamiltonianPath, seed: tuple[float, float], dt: float | None = None,
                        strict: bool = True, tol: float = TAU_TOL) -> float:
    """Lift displacement of ``seed`` along the whole path.

    For a path whose endpoint stabilizes the disk containing ``seed`` this is
    the translation number; with ``strict`` a value farther than ``tol`` from
    an integer raises :class:`TranslationError`.
    """
    dt = _default_dt(path) if dt is None else dt
    th, _ = advect(path, np.array([seed[0]]), np.array([seed[1]]), dt)
    w = float(th[0] - seed[0])
    if strict and abs(w - round(w)) > tol:
        raise TranslationError(
            f"winding {w:.4f} is not within {tol} of an integer: the endpoint does not "
            "stabilize the disk or the integration is under-resolved")
    return w


def translation_iterate(m: FlowMap, seed: tuple[float, float], N: int = 50) -> float:
    """pi_R(phi~^N(p~)) / N, composing the map by bilinear interpolation."""
    if N < 1:
        raise ValueError("N must be >= 1")
    if not m.lift_valid:
        raise TranslationError("map carries no lift to the universal cover (read from file?)")
    g = m.grid
    lo = 0.5 / g.n_h
    t = np.array([float(seed[0])])
    h = np.array([float(seed[1])])
    t0 = t[0]
    for _ in range(N):
        t, h = m.interpolate(t, h)
        if not (lo <= h[0] <= 1.0 - lo) or not np.isfinite(t[0]):
            raise FlowError("trajectory left the grid interior: corrupted map")
    return float((t[0] - t0) / N)


# -- regions -----------------------------------------------------------------

def _best_shift(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.round(a[:, 0].mean() - b[:, 0].mean()))


def hausdorff(a: Region, b: Region, densify: float = 0.05) -> float:
    """Hausdorff distance of the boundaries, after the best integer theta shift."""
    import shapely

    va = a.vertices.copy()
    va[:, 0] -= _best_shift(a.vertices, b.vertices)
    return float(shapely.hausdorff_distance(shapely.LinearRing(va), shapely.LinearRing(b.vertices),
                                            densify=densify))


def region_transport(m: FlowMap, r: Region, target: Region | None = None,
                     max_gap: float = 0.004, stretch: float = 2.0, max_rounds: int = 10,
                     max_vertices: int = 200_000) -> tuple[Region, float]:
    """Image of ``r`` under the map and its Hausdorff distance to ``target``.

    Boundary vertices are pushed through the flow; wherever consecutive
    images are more than ``max_gap`` apart and also more than ``stretch``
    times farther apart than their preimages, a midpoint is inserted and
    the pass repeats.
    """
    import shapely

    target = r if target is None else target
    src = np.asarray(r.vertices, dtype=float)
    it, ih = m.apply(src[:, 0], src[:, 1])
    img = np.column_stack([it, ih])
    for _ in range(max_rounds):
        gaps = np.hypot(*(np.roll(img, -1, axis=0) - img).T)
        src_gaps = np.hypot(*(np.roll(src, -1, axis=0) - src).T)
        bad = np.nonzero((gaps > max_gap) & (gaps > stretch * src_gaps))[0]
        if bad.size == 0 or len(src) + bad.size > max_vertices:
            break
        a = src[bad]
        b = np.roll(src, -1, axis=0)[bad]
        mid = 0.5 * (a + b)
        mt, mh = m.apply(mid[:, 0], mid[:, 1])
        src = np.insert(src, bad + 1, mid, axis=0)
        img = np.insert(img, bad + 1, np.column_stack([mt, mh]), axis=0)
    if not shapely.LinearRing(img).is_simple:
        raise FlowError("transported boundary self-intersects: under-resolved transport")
    image = Region(img)
    return image, hausdorff(image, target)


# -- CSV interfaces ----------------------------------------------------------

def write_flowmap_csv(m: FlowMap, path: str | Path) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w") as fh:
        fh.write(f"{m.grid.n_theta},{m.grid.n_h}\n")
        np.savetxt(fh, np.column_stack([m.theta.ravel(), m.h.ravel()]), delimiter=",",
                   header="theta_lift,h", comments="", fmt="%.17g")
    tmp.replace(path)


def read_flowmap_csv(path: str | Path) -> FlowMap:
    """Maps read from disk cannot certify their lift, so ``lift_valid`` is False."""
    with open(path) as fh:
        nt, nh = (int(x) for x in fh.readline().split(","))
        fh.readline()
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    g = AnnulusGrid(nt, nh)
    if data.shape != (nt * nh, 2):
        raise FlowError("flow map CSV has the wrong number of nodes")
    return FlowMap(g, data[:, 0].reshape(g.shape), data[:, 1].reshape(g.shape), lift_valid=False)


def trajectory(path: HamiltonianPath, seed: tuple[float, float], dt: float,
               samples_per_segment: int = 20) -> np.ndarray:
    """(t, theta_lift, h) samples of one seed along the path."""
    rows = [(0.0, float(seed[0]), float(seed[1]))]
    t0 = 0.0
    th = np.array([float(seed[0])])
    hh = np.array([float(seed[1])])
    for seg in path.segments:
        k = max(1, samples_per_segment)
        piece = Segment(seg.field, seg.duration / k, seg.conjugation, seg.label, seg.exact)
        sub = HamiltonianPath((piece,))
        for i in range(k):
            th, hh = advect(sub, th, hh, min(dt, piece.duration) if piece.duration > 0 else dt)
            rows.append((t0 + (i + 1) * piece.duration, float(th[0]), float(hh[0])))
        t0 += seg.duration
    return np.asarray(rows)


def write_trajectory_csv(rows: np.ndarray, path: str | Path) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    np.savetxt(tmp, rows, delimiter=",", header="t,theta_lift,h", comments="", fmt="%.17g")
    tmp.replace(path)
