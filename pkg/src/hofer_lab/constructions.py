"""Explicit Hamiltonians on the annulus and the disk-translation isotopy psi_n.

The isotopy moves the disk D = (delta, 1-delta) x (delta, top) through three
stages:

1. *Spiral transfer.* A conveyor flow ``U`` lifts D rigidly by ``d`` until it
   fills the upper box D' = (delta, 1-delta) x (1-delta-hD, 1-delta); the
   return current runs down a narrow gap around theta = 0. The stage is
   conjugated by the zonal twist ``T`` that winds the gap n times through the
   band above D, so its generator ``H_U o T`` is supported near D, D' and a
   spiral joining them. The time map is ``T^-1 o U o T``.
2. *Shear.* A zonal Hamiltonian rotates the overlap band n times and untwists
   the spiral band, so that on D' the composite of stages 1 and 2 is a lift
   of the rigid translation by d, shifted by n.
3. *Down transport.* The conveyor run backwards brings the disk home.

Every point of D therefore winds exactly n times and returns to its start.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field as dc_field

import numpy as np

from .field import (AnnulusGrid, GeometryError, Region, ScalarField, build_disk_region,
                    cosine_ramp, disk_top, region_distance)
from .flow import (Conjugation, FlowMap, HamiltonianPath, Segment, Separable, ZonalRate,
                   area_distortion, hofer_length, integrate_flow, region_transport,
                   translation_iterate, translation_winding)


def _ramp_integral(x: np.ndarray) -> np.ndarray:
    """Integral of cosine_ramp from 0 to x (x clipped to [0, 1])."""
    x = np.clip(x, 0.0, 1.0)
    return 0.5 * x - np.sin(np.pi * x) / (2 * np.pi)


# -- parameters ----------------------------------------------------------------

def default_deltas(A: float) -> dict[str, float]:
    """delta = min(0.015, 0.075 (2A - 1)), delta' = delta/3, delta'' = 2 delta/3."""
    d = round(min(0.015, 0.075 * (2 * A - 1)), 12)
    return {"delta": d, "delta_prime": d / 3, "delta_dblprime": 2 * d / 3,
            "corridor_width": d / 3}


@dataclass(frozen=True)
class ConstructionSpec:
    """Geometry and discretization of one psi_n run.

    ``delta`` is the clearance from the boundary circles and the height of
    the spiral band, ``delta_prime`` the gap between the disk and the band,
    ``delta_dblprime`` the width of the lower ramp of the shear. Left unset
    they follow :func:`default_deltas`, which shrinks them with the slack
    ``2A - 1`` that the length bound leaves for the boundary overheads.
    """

    n: int = 1
    A: float = 0.6
    delta: float | None = None
    delta_prime: float | None = None
    delta_dblprime: float | None = None
    corridor_width: float | None = None
    grid: int = 512
    dt: float = 5e-4
    tracer: int = 32
    cfl: float = 0.8
    resolve: float = 160.0

    def __post_init__(self):
        if not 0.5 < self.A < 1.0:
            raise GeometryError(f"A = {self.A} must lie in (1/2, 1)")
        for name, value in default_deltas(self.A).items():
            if getattr(self, name) is None:
                object.__setattr__(self, name, value)
        for name in ("delta", "delta_prime", "delta_dblprime", "corridor_width", "dt"):
            if not getattr(self, name) > 0:
                raise GeometryError(f"{name} must be positive")
        if self.corridor_width >= self.delta / 2:
            raise GeometryError("corridor_width must be below delta / 2")
        if self.grid < 16 or self.tracer < 4:
            raise GeometryError("grid too coarse")
        if not 0 < self.cfl <= 1:
            raise GeometryError("cfl must lie in (0, 1]")
        build_disk_region(self.A, self.delta, self.delta_prime)  # raises if it does not fit
        if self.overlap_bottom - self.delta_dblprime <= self.delta:
            raise GeometryError("shear ramp runs into the boundary collar")

    @property
    def margin(self) -> float:
        """Support margin of every field built here."""
        return self.delta / 4

    @property
    def top(self) -> float:
        return disk_top(self.A, self.delta, self.delta_prime)

    @property
    def disk_height(self) -> float:
        return self.top - self.delta

    @property
    def lift(self) -> float:
        """Vertical travel d of the conveyor."""
        return 1.0 - 2 * self.delta - self.disk_height

    @property
    def band(self) -> tuple[float, float]:
        """The spiral band, directly above the disk."""
        b0 = self.top + self.delta_prime
        return b0, b0 + self.delta

    @property
    def overlap_bottom(self) -> float:
        """Bottom edge of the lifted disk D'."""
        return self.delta + self.lift

    def disk(self) -> Region:
        return build_disk_region(self.A, self.delta, self.delta_prime)

    def field_grid(self) -> AnnulusGrid:
        return AnnulusGrid.square(self.grid)

    def replace(self, **kw) -> "ConstructionSpec":
        return ConstructionSpec(**{**asdict(self), **kw})


# -- elementary fields ---------------------------------------------------------

def collar(h: np.ndarray, inner: float, outer: float) -> np.ndarray:
    """1 on [inner, 1 - inner], 0 within ``outer`` of the boundary, cosine between."""
    w = inner - outer
    return cosine_ramp((h - outer) / w) * cosine_ramp((1 - outer - h) / w)


def build_hat_H(delta: float = 0.01, grid: AnnulusGrid | None = None) -> ScalarField:
    """H(theta, h) = h away from the boundary, cut off by cosine ramps on [delta/4, delta].

    The default cutoff ends below the default disk (which starts at h = 0.02),
    so the field is exactly h on a neighbourhood of the disk.
    """
    if not 0 < delta < 0.1:
        raise ValueError("delta must lie in (0, 0.1)")
    grid = AnnulusGrid.square(512) if grid is None else grid
    return ScalarField.from_function(grid, lambda t, h: h * collar(h, delta, delta / 4),
                                     support_margin=delta / 4)


def build_plateau_K(disk: Region, grid: AnnulusGrid, width: float) -> ScalarField:
    """1 on the ``width``-neighbourhood of the disk, cosine ramp to 0 over a further ``width``."""
    th, hh = grid.mesh()
    d = region_distance(disk, th, hh)
    return ScalarField(grid, 1.0 - cosine_ramp((d - width) / width), support_margin=width)


def bump(grid: AnnulusGrid, centre: tuple[float, float], radius: float, height: float = 1.0
         ) -> ScalarField:
    """height * (1 - r^2/R^2)^3 on a disk of radius R, periodic in theta."""
    th, hh = grid.mesh()
    dt = (th - centre[0] + 0.5) % 1.0 - 0.5
    q = 1.0 - (dt ** 2 + (hh - centre[1]) ** 2) / radius ** 2
    return ScalarField(grid, height * np.clip(q, 0.0, None) ** 3)


def random_disk_bumps(disk: Region, grid: AnnulusGrid, rng: np.random.Generator,
                      count: int = 3) -> ScalarField:
    """Sum of ``count`` bumps with random centres, radii and signed heights, all inside ``disk``."""
    t0, h0, t1, h1 = disk.bounds
    total = ScalarField.zeros(grid)
    placed = 0
    while placed < count:
        R = rng.uniform(0.03, 0.15)
        c = (rng.uniform(t0, t1), rng.uniform(h0, h1))
        if region_distance(disk, np.array([c[0]]), np.array([c[1]]))[0] > -R - 2.0 / grid.n_h:
            continue
        total = total + bump(grid, c, R, rng.uniform(-1.0, 1.0))
        placed += 1
    return total


# -- swap flow -------------------------------------------------------------------

def _polyline_distance(poly: np.ndarray, theta: np.ndarray, h: np.ndarray) -> np.ndarray:
    import shapely

    line = shapely.LineString(poly)
    best = None
    for s in (-1.0, 0.0, 1.0):
        d = shapely.distance(shapely.points(theta + s, h), line)
        best = d if best is None else np.minimum(best, d)
    return best


def build_swap_flow(source: Region, sink: Region, corridor: np.ndarray, width: float,
                    grid: AnnulusGrid | None = None) -> ScalarField:
    """Autonomous field that exchanges area between two regions along a corridor.

    The field is 1 on a strip of width ``width/2`` around the corridor and
    vanishes at distance ``width`` from it. On each region it decreases
    linearly from 1 at the corridor end to 0 across the region, tapered to 0
    at the region boundary. Area flows out of one region along one side of
    the strip and back along the other side at unit rate, so the time-t map
    moves area t each way.
    """
    grid = AnnulusGrid.square(256) if grid is None else grid
    corridor = np.asarray(corridor, dtype=float)
    if corridor.ndim != 2 or len(corridor) < 2:
        raise GeometryError("corridor must be a polyline with at least two vertices")
    import shapely

    line = shapely.LineString(corridor)
    if not line.is_simple:
        raise GeometryError("corridor intersects itself")
    if corridor[:, 1].min() - width < 0 or corridor[:, 1].max() + width > 1:
        raise GeometryError("corridor neighbourhood reaches the boundary of the annulus")
    th, hh = grid.mesh()
    tube = 1.0 - cosine_ramp((_polyline_distance(corridor, th, hh) - width / 4) / (width / 4))
    parts = [tube]
    for region, end, nxt in ((source, corridor[0], corridor[1]), (sink, corridor[-1], corridor[-2])):
        u = end - nxt
        u = u / np.hypot(*u)
        along = (th - end[0]) * u[0] + (hh - end[1]) * u[1]
        proj = (region.vertices - end) @ u
        extent = max(proj.max(), width)
        linear = np.clip(1.0 - along / extent, 0.0, 1.0)
        edge = cosine_ramp(-region_distance(region, th, hh) / (width / 2))
        parts.append(linear * edge)
    vals = np.maximum.reduce(parts)
    return ScalarField(grid, vals, support_margin=0.0)


# -- spiral, shear, conveyor -----------------------------------------------------

def band_profile(h: np.ndarray, spec: ConstructionSpec) -> np.ndarray:
    """1 below the spiral band, 0 above it, cosine across it."""
    b0, b1 = spec.band
    return 1.0 - cosine_ramp((np.asarray(h) - b0) / (b1 - b0))


def twist_rate(spec: ConstructionSpec):
    """Angle function of the zonal twist T: n below the band, 0 above it."""
    n = spec.n
    return lambda h: n * band_profile(h, spec)


def build_spiral(n: int, spec: ConstructionSpec, samples: int = 400) -> np.ndarray:
    """Core curve of the transfer stage inside the spiral band.

    It is the image under T^-1 of the vertical segment at theta = 0 through
    the band: it starts at the top of the disk layer and gains exactly ``n``
    turns in theta-lift before it reaches the upper box. Adjacent coils must
    stay ``corridor_width / 2`` apart, a clearance of a quarter corridor width
    on each side of every coil.
    """
    b0, b1 = spec.band
    h = np.linspace(b0, b1, samples)
    theta = -n * band_profile(h, spec)
    theta = theta - theta[0]
    poly = np.column_stack([theta, h])
    if n != 0 and coil_gap(poly) < spec.corridor_width / 2:
        raise GeometryError("spiral coils are closer than half the corridor width")
    return poly


def coil_gap(poly: np.ndarray) -> float:
    """Smallest distance between the polyline and its translates by one turn."""
    import shapely

    line = shapely.LineString(poly)
    return float(min(line.distance(shapely.LineString(poly + [s, 0.0])) for s in (-1.0, 1.0)))


def shear_profile(spec: ConstructionSpec, n: int | None = None):
    """(g, g') of the shear stage as functions of h, before the boundary cutoff.

    g' = n on [overlap_bottom, band bottom], cosine ramp up from
    ``overlap_bottom - delta''``, the band profile across the spiral band and
    zero above it.
    """
    n = spec.n if n is None else n
    lo = spec.overlap_bottom
    w = spec.delta_dblprime
    b0, b1 = spec.band

    def gprime(h):
        h = np.asarray(h, dtype=float)
        return n * cosine_ramp((h - lo + w) / w) * band_profile(h, spec)

    def g(h):
        h = np.asarray(h, dtype=float)
        low = w * _ramp_integral((h - lo + w) / w)
        mid = np.clip(h - lo, 0.0, b0 - lo)
        x = (h - b0) / (b1 - b0)
        top = (b1 - b0) * (np.clip(x, 0.0, 1.0) - _ramp_integral(x))
        return n * (low + mid + top)

    return g, gprime


def _ramp_slope(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x)
    return np.where((x > 0) & (x < 1), 0.5 * np.pi * np.sin(np.pi * np.clip(x, 0, 1)), 0.0)


def _with_top_cutoff(g, gprime, delta: float):
    """Multiply g by a ramp that brings it to 0 across [1 - 3 delta/4, 1 - delta/4]."""
    m = delta / 4
    c0, wc = 1 - delta + m, delta - 2 * m

    def value(h):
        return g(h) * (1.0 - cosine_ramp((np.asarray(h) - c0) / wc))

    def rate(h):
        x = (np.asarray(h) - c0) / wc
        return gprime(h) * (1.0 - cosine_ramp(x)) - g(h) * _ramp_slope(x) / wc

    return value, rate


def shear_stage(n: int, spec: ConstructionSpec, grid: AnnulusGrid | None = None) -> Segment:
    """Unit-time zonal segment of the shear, with its exact angle rate."""
    grid = spec.field_grid() if grid is None else grid
    value, rate = _with_top_cutoff(*shear_profile(spec, n), spec.delta)
    field = ScalarField.from_function(grid, lambda t, h: value(h), support_margin=spec.margin)
    return Segment(field, 1.0, label="shear", exact=ZonalRate(rate))


def build_shear(n: int, spec: ConstructionSpec, grid: AnnulusGrid | None = None) -> ScalarField:
    """Zonal field g(h) of the shear stage, cut off near the top circle."""
    return shear_stage(n, spec, grid).field


def conveyor_phi(theta: np.ndarray, delta: float) -> np.ndarray:
    """Periodic profile with slope 1 on [delta/2, 1 - delta/2].

    Across the gap of width ``delta`` around theta = 0 the slope is
    1 - (2/delta) sin^2, which has the opposite mean, so the profile closes up.
    """
    lo = delta / 2
    gapw = 2 * lo
    u = (np.asarray(theta) - lo) % 1.0
    rigid = 1.0 - gapw
    w = np.clip(u - rigid, 0.0, None)
    gap = rigid + w - (1.0 / gapw) * (w - gapw / (2 * np.pi) * np.sin(2 * np.pi * w / gapw))
    return np.where(u <= rigid, u, gap)


@dataclass(frozen=True)
class Conveyor:
    """Rigid upward transport of the box (delta/2, 1-delta/2) x (delta, 1-delta).

    ``field`` is the sampled Hamiltonian, ``generator`` its exact separable
    form used for integration.
    """

    field: ScalarField
    generator: Separable
    speed: float
    duration: float

    @property
    def length(self) -> float:
        return self.duration * self.field.oscillation


def build_conveyor(spec: ConstructionSpec, grid: AnnulusGrid | None = None) -> Conveyor:
    """H_U = -a * phi(theta) * collar(h), run long enough to lift D by d.

    The speed ``a`` is the largest allowed by the step-size guard at
    ``spec.dt`` on the field grid, which keeps the number of steps minimal.
    """
    grid = spec.field_grid() if grid is None else grid
    d, m = spec.delta, spec.margin
    s = np.linspace(0.0, 1.0, 20001)
    phi = conveyor_phi(s, d)
    dphi = np.gradient(phi, s)
    dchi = (np.pi / 2) / (d - m)
    v_theta = np.abs(phi).max() * dchi * grid.n_theta
    v_h = np.abs(dphi).max() * grid.n_h
    a = spec.cfl / (spec.dt * max(v_theta, v_h))
    gen = Separable.from_functions(lambda t: conveyor_phi(t, d), lambda h: collar(h, d, m), -a)
    gen = Separable(gen.f, gen.g, gen.scale, resolve=spec.resolve)
    H = ScalarField.from_function(grid, lambda t, h: -a * conveyor_phi(t, d) * collar(h, d, m),
                                  support_margin=m)
    return Conveyor(H, gen, a, spec.lift / a)


# -- assembly --------------------------------------------------------------------

@dataclass
class TransportCertificate:
    n: int
    A: float
    tau: float
    hofer_length: float
    stage_lengths: list[float]
    stage_expected: list[float]
    area_distortion: float
    disk_return_error: float
    tau_iterate: float = float("nan")
    lower_bound: float = 0.0
    upper_bound: float = 0.0
    baseline: float = float("nan")
    tolerance: float = 0.0
    runtime: float = 0.0
    notes: list[str] = dc_field(default_factory=list)

    @property
    def tau_ok(self) -> bool:
        return abs(self.tau - self.n) <= 0.05

    @property
    def sandwich_ok(self) -> bool:
        return self.lower_bound <= self.hofer_length < self.upper_bound

    @property
    def disk_ok(self) -> bool:
        return self.disk_return_error <= self.tolerance

    @property
    def passed(self) -> bool:
        return self.tau_ok and self.sandwich_ok and self.disk_ok

    def to_dict(self) -> dict:
        return {
            "n": self.n, "A": self.A, "tau": self.tau, "tau_iterate": self.tau_iterate,
            "length": self.hofer_length, "stage_lengths": list(self.stage_lengths),
            "stage_expected": list(self.stage_expected),
            "lower_bound": self.lower_bound, "upper_bound": self.upper_bound,
            "baseline": self.baseline, "area_distortion": self.area_distortion,
            "disk_return_error": self.disk_return_error, "disk_tolerance": self.tolerance,
            "passed": self.passed, "notes": list(self.notes),
        }


def expected_stage_lengths(spec: ConstructionSpec) -> list[float]:
    """Closed-form accounting: swept area for the two transports, band width times n for the shear."""
    width = 1.0 - 2 * spec.delta
    transfer = width * spec.lift
    b0, b1 = spec.band
    shear = abs(spec.n) * (b0 - spec.overlap_bottom + spec.delta_dblprime / 2 + (b1 - b0) / 2)
    return [transfer, shear, transfer]


def build_psi_path(spec: ConstructionSpec) -> HamiltonianPath:
    grid = spec.field_grid()
    conv = build_conveyor(spec, grid)
    rate = twist_rate(spec)
    spiral_field = ScalarField.from_function(
        grid, lambda t, h: -conv.speed * conveyor_phi(t + rate(h), spec.delta)
        * collar(h, spec.delta, spec.margin), support_margin=spec.margin)
    transfer = Segment(spiral_field, conv.duration, Conjugation(conv.generator, rate),
                       "spiral transfer")
    shear = shear_stage(spec.n, spec, grid)
    down = Segment(-conv.field, conv.duration, label="down transport",
                   exact=conv.generator.negated())
    return HamiltonianPath((transfer, shear, down))


def naive_rotation_baseline(n: int, A: float, delta: float = 0.015, delta_prime: float = 0.005,
                            grid: AnnulusGrid | None = None) -> float:
    """Hofer length of rotating the whole band containing the disk n times."""
    if n == 0:
        return 0.0
    return hofer_length(HamiltonianPath((baseline_stage(n, A, delta, delta_prime, grid),)))


def baseline_stage(n: int, A: float, delta: float = 0.015, delta_prime: float = 0.005,
                   grid: AnnulusGrid | None = None) -> Segment:
    """g' = n on the disk's height range, cosine ramps from the support margin
    below it and over ``delta`` above it, cut off near the top circle."""
    grid = AnnulusGrid.square(512) if grid is None else grid
    lo, hi = delta, disk_top(A, delta, delta_prime)
    m = delta / 4
    w = delta - m

    def gprime(h):
        h = np.asarray(h, dtype=float)
        return n * cosine_ramp((h - m) / w) * (1.0 - cosine_ramp((h - hi) / delta))

    def g(h):
        h = np.asarray(h, dtype=float)
        x = (h - hi) / delta
        up = delta * (np.clip(x, 0.0, 1.0) - _ramp_integral(x))
        return n * (w * _ramp_integral((h - m) / w) + np.clip(h - lo, 0.0, hi - lo) + up)

    value, rate = _with_top_cutoff(g, gprime, delta)
    field = ScalarField.from_function(grid, lambda t, h: value(h), support_margin=m)
    return Segment(field, 1.0, label="rotation", exact=ZonalRate(rate))


def certify_psi(path: HamiltonianPath, spec: ConstructionSpec, with_baseline: bool = True
                ) -> tuple[TransportCertificate, FlowMap]:
    """Measure translation number, length, area distortion and disk return of a psi_n path."""
    t0 = time.perf_counter()
    disk = spec.disk()
    x0, x1, y0, y1 = disk.meta["rect"]
    seed = (0.5 * (x0 + x1), 0.5 * (y0 + y1))
    tracer = AnnulusGrid.square(spec.tracer)
    fmap = integrate_flow(path, spec.dt, grid=tracer)
    tau = translation_winding(path, seed, spec.dt, strict=False)
    tau_it = translation_iterate(fmap, seed, N=50)
    _, err = region_transport(fmap, disk, disk)
    lengths = [s.duration * s.field.oscillation for s in path.segments]
    cert = TransportCertificate(
        n=spec.n, A=spec.A, tau=tau, hofer_length=hofer_length(path), stage_lengths=lengths,
        stage_expected=expected_stage_lengths(spec), area_distortion=area_distortion(fmap),
        disk_return_error=err, tau_iterate=tau_it,
        lower_bound=(2 * spec.A - 1) / 2 * abs(spec.n),
        upper_bound=(2 * spec.A - 1) * abs(spec.n) + 1,
        tolerance=2 * max(spec.delta, spec.delta_prime, spec.delta_dblprime),
    )
    if with_baseline:
        cert.baseline = naive_rotation_baseline(spec.n, spec.A, spec.delta, spec.delta_prime,
                                                spec.field_grid())
    cert.runtime = time.perf_counter() - t0
    return cert, fmap


def assemble_psi(spec: ConstructionSpec, certify: bool = True
                 ) -> tuple[HamiltonianPath, TransportCertificate | None]:
    path = build_psi_path(spec)
    if not certify:
        return path, None
    cert, _ = certify_psi(path, spec)
    return path, cert
