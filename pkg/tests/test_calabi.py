import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hofer_lab.calabi import (CalabiValue, EmbeddingSpec, SupportError, cal_j,
                              cal_sphere_autonomous, calabi_disk, rho, rho_report, write_json)
from hofer_lab.constructions import build_plateau_K, bump, random_disk_bumps
from hofer_lab.field import AnnulusGrid, ScalarField, build_disk_region, integrate
from hofer_lab.flow import HamiltonianPath
from hofer_lab.reeb import SphereModel

A = 0.6
TOL = 0.01


@pytest.fixture(scope="module")
def g256():
    return AnnulusGrid.square(256)


@pytest.fixture(scope="module")
def disk_bump(g256):
    """A bump inside the disk with integral exactly 0.05."""
    f = bump(g256, (0.5, 0.3), 0.2)
    return f * (0.05 / integrate(f))


# -- disk Calabi -----------------------------------------------------------------

def test_calabi_disk_examples(g256, disk_bump, disk):
    assert calabi_disk(HamiltonianPath()) == 0.0
    f = disk_bump * 2.0
    assert calabi_disk(HamiltonianPath.autonomous(f), disk) == pytest.approx(0.1, abs=1e-12)
    there_and_back = HamiltonianPath.autonomous(f) + HamiltonianPath.autonomous(f).reversed()
    assert calabi_disk(there_and_back, disk) == pytest.approx(0.0, abs=1e-15)


def test_calabi_disk_is_additive(disk_bump, disk):
    a = HamiltonianPath.autonomous(disk_bump, 0.3)
    b = HamiltonianPath.autonomous(disk_bump * -2.0, 1.1)
    assert calabi_disk(a + b, disk) == pytest.approx(calabi_disk(a) + calabi_disk(b), abs=1e-15)


def test_calabi_disk_rejects_leaks(g256, disk):
    outside = bump(g256, (0.5, 0.85), 0.1)
    with pytest.raises(SupportError):
        calabi_disk(HamiltonianPath.autonomous(outside), disk)


# -- sphere formula --------------------------------------------------------------

def test_zero_field(g256):
    assert cal_sphere_autonomous(ScalarField.zeros(g256), SphereModel(ScalarField.zeros(g256), 0.1, A)).value == 0.0


@pytest.mark.parametrize("s", [0.0, 0.1, 2 * A - 1])
def test_hat_formula(hat256, s):
    c = cal_sphere_autonomous(hat256, SphereModel(hat256, s, A))
    assert c.value == pytest.approx(integrate(hat256) - 2 * A * (A - s), abs=TOL)
    assert c.integral == pytest.approx(0.5, abs=0.02)


def test_cal_j_endpoints(hat256):
    I = integrate(hat256)
    assert cal_j(hat256, 0.0, A) == pytest.approx(I - 2 * A * A, abs=TOL)
    assert cal_j(hat256, 2 * A - 1, A) == pytest.approx(I - 2 * A * (1 - A), abs=TOL)


def test_plateau_does_not_depend_on_s(g256):
    K = build_plateau_K(build_disk_region(A, 0.02, 0.01), g256, 0.01)
    vals = [cal_j(K, s, A) for s in (0.0, (2 * A - 1) / 2, 2 * A - 1)]
    assert max(vals) - min(vals) <= TOL
    assert vals[0] == pytest.approx(integrate(K) - 2 * A, abs=TOL)


def test_disk_bump_cal_j_is_its_integral(disk_bump):
    for s in (0.0, 0.1, 2 * A - 1):
        assert cal_j(disk_bump, s, A) == pytest.approx(0.05, abs=TOL)


def test_value_is_integral_minus_correction_exactly(hat256):
    c = cal_sphere_autonomous(hat256, SphereModel(hat256, 0.07, A))
    assert c.value == c.integral - c.correction
    assert c.correction == 2 * A * c.median.value
    assert CalabiValue.from_terms(1.25, 0.5).value == 0.75


@given(c=st.floats(-3, 3))
def test_shift_neutrality(c):
    g = AnnulusGrid.square(64)
    F = bump(g, (0.3, 0.5), 0.2) + bump(g, (0.7, 0.45), 0.15, -0.5)
    base = cal_sphere_autonomous(F, SphereModel(F, 0.05, A)).value
    shifted = cal_sphere_autonomous(F, SphereModel(F, 0.05, A, offset=c)).value
    assert shifted == pytest.approx(base, abs=1e-9)


# -- rho -------------------------------------------------------------------------

def test_embedding_spec():
    spec = EmbeddingSpec(A)
    assert (spec.s1, spec.s2) == (0.0, pytest.approx(2 * A - 1))
    for bad in (dict(A=0.5), dict(A=A, s1=0.1, s2=0.1), dict(A=A, s2=0.5), dict(A=A, s1=-0.1)):
        with pytest.raises(ValueError):
            EmbeddingSpec(**bad)


def test_rho_of_hat(hat256):
    r = rho(hat256, EmbeddingSpec(A))
    assert r == pytest.approx(2 * A * (2 * A - 1), abs=TOL)
    assert r > 0


@pytest.mark.parametrize("n", [1, 2, 3])
def test_rho_homogeneity(hat256, disk_bump, n):
    spec = EmbeddingSpec(A)
    assert rho(hat256 * n, spec) == pytest.approx(n * rho(hat256, spec), abs=n * TOL)
    assert rho(disk_bump * n, spec) == pytest.approx(0.0, abs=n * TOL)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_rho_vanishes_on_disk_bumps(g256, disk, seed):
    F = random_disk_bumps(disk, g256, np.random.default_rng(seed))
    assert rho(F, EmbeddingSpec(A)) == pytest.approx(0.0, abs=TOL)


def test_rho_general_embeddings(hat256):
    spec = EmbeddingSpec(A, 0.05, 0.15)
    assert rho(hat256, spec) == pytest.approx(2 * A * 0.1, abs=TOL)


def test_rho_report_json(tmp_path, hat256):
    doc = rho_report(hat256, EmbeddingSpec(A))
    assert set(doc) == {"s1", "s2", "A", "integral", "median_value", "cal_j_s1", "cal_j_s2", "rho"}
    write_json(doc, tmp_path / "r.json")
    back = json.loads((tmp_path / "r.json").read_text())
    assert back["rho"] == doc["rho"]
    assert back["median_value"] == pytest.approx([A, 1 - A], abs=TOL)
