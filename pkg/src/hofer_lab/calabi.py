"""Calabi invariants: the disk homomorphism and the median formula on the sphere.

For an autonomous ``F`` on the sphere of area ``2A`` the Calabi quasimorphism
is ``integral(F) - 2A * F(X)`` with ``X`` the median component of the Reeb
graph. Pulling it back along the cap embeddings ``j_s`` and differencing two
of them gives the quasimorphism ``rho`` on the annulus.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .field import Region, ScalarField, integrate, region_distance
from .flow import HamiltonianPath
from .reeb import MedianResult, SphereModel, build_reeb, find_median


class SupportError(ValueError):
    """A field is not supported where the computation requires it to be."""


@dataclass(frozen=True)
class EmbeddingSpec:
    A: float
    s1: float = 0.0
    s2: float | None = None

    def __post_init__(self):
        if not 0.5 < self.A < 1.0:
            raise ValueError(f"A = {self.A} must lie in (1/2, 1)")
        if self.s2 is None:
            object.__setattr__(self, "s2", 2 * self.A - 1)
        top = 2 * self.A - 1 + 1e-12
        if not 0.0 <= self.s1 < self.s2 <= top:
            raise ValueError(f"need 0 <= s1 < s2 <= 2A-1, got s1={self.s1}, s2={self.s2}")


@dataclass(frozen=True)
class CalabiValue:
    value: float
    integral: float
    correction: float
    median: MedianResult | None = None

    @classmethod
    def from_terms(cls, integral: float, correction: float, median=None) -> "CalabiValue":
        return cls(integral - correction, integral, correction, median)


def calabi_disk(path: HamiltonianPath, disk: Region | None = None, tol: float = 0.0) -> float:
    """Sum of duration times spatial integral over the segments.

    With ``disk`` given, every nonzero value must sit inside it (up to ``tol``
    in distance), otherwise SupportError.
    """
    total = 0.0
    for seg in path.segments:
        if disk is not None:
            th, hh = seg.field.grid.mesh()
            nz = seg.field.values != 0
            if nz.any():
                d = region_distance(disk, th[nz], hh[nz])
                if d.max() > tol:
                    raise SupportError(f"segment {seg.label!r} leaks {d.max():.3g} outside the disk")
        total += seg.duration * integrate(seg.field)
    return total


def cal_sphere_autonomous(F: ScalarField, model: SphereModel) -> CalabiValue:
    """Median formula for the Calabi quasimorphism of the time-1 map of F.

    The integral runs over the whole sphere, so the caps contribute
    ``offset`` times their area when the model is shifted by a constant.
    """
    if F is not model.base:
        model = SphereModel(F, model.s, model.A, model.offset)
    graph = build_reeb(model)
    median = find_median(graph)
    integral = integrate(F) + model.offset * (1.0 + model.s + model.top_cap)
    return CalabiValue.from_terms(integral, 2 * model.A * median.value, median)


def cal_j(F: ScalarField, s: float, A: float) -> float:
    return cal_sphere_autonomous(F, SphereModel(F, s, A)).value


def rho(F: ScalarField, spec: EmbeddingSpec) -> float:
    return cal_j(F, spec.s2, spec.A) - cal_j(F, spec.s1, spec.A)


def rho_report(F: ScalarField, spec: EmbeddingSpec) -> dict:
    """Everything needed to audit one evaluation of rho."""
    c1 = cal_sphere_autonomous(F, SphereModel(F, spec.s1, spec.A))
    c2 = cal_sphere_autonomous(F, SphereModel(F, spec.s2, spec.A))
    return {
        "s1": spec.s1, "s2": spec.s2, "A": spec.A,
        "integral": c1.integral,
        "median_value": [c1.median.value, c2.median.value],
        "cal_j_s1": c1.value, "cal_j_s2": c2.value,
        "rho": c2.value - c1.value,
    }


def write_json(doc: dict, path: str | Path) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(doc, indent=2, sort_keys=True, default=_jsonable))
    tmp.replace(path)


def _jsonable(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"cannot serialise {type(x).__name__}")
