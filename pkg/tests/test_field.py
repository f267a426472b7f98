import numpy as np
import pytest
from hypothesis import given, strategies as st

from hofer_lab.field import (AnnulusGrid, GeometryError, OrientationError, Region, ScalarField,
                             build_disk_region, integrate, read_field_csv, read_region_csv,
                             region_area, region_distance, region_indicator, rounded_rectangle,
                             write_field_csv, write_region_csv)

SQUARE = np.array([[0.1, 0.1], [0.6, 0.1], [0.6, 0.6], [0.1, 0.6]])


def test_grid_geometry():
    g = AnnulusGrid(64, 32)
    assert g.shape == (32, 64)
    assert g.cell_area * g.n_theta * g.n_h == pytest.approx(1.0, abs=1e-15)
    th, hh = g.mesh()
    assert th[0, 0] == pytest.approx(0.5 / 64) and hh[0, 0] == pytest.approx(0.5 / 32)
    with pytest.raises(ValueError):
        AnnulusGrid(0, 4)


def test_integrate_constant_is_total_area():
    g = AnnulusGrid.square(64)
    assert integrate(ScalarField(g, np.ones(g.shape))) == pytest.approx(1.0, abs=1e-14)


def test_integrate_height_function():
    f = ScalarField.from_function(AnnulusGrid.square(128), lambda t, h: h)
    assert integrate(f) == pytest.approx(0.5, abs=1e-12)


def test_integrate_rectangle_indicator():
    g = AnnulusGrid.square(256)
    mask = region_indicator(g, Region(SQUARE))
    assert integrate(ScalarField(g, mask.astype(float))) == pytest.approx(0.25, abs=4 / 256)


def test_integration_is_second_order():
    exact = 1 / np.pi  # (2/pi) from sin(pi h), 1/2 from cos^2(pi theta)
    errs = []
    for n in (16, 32, 64):
        f = ScalarField.from_function(AnnulusGrid.square(n),
                                      lambda t, h: np.sin(np.pi * h) * np.cos(np.pi * t) ** 2)
        errs.append(abs(integrate(f) - exact))
    assert errs[1] / errs[0] < 0.3 and errs[2] / errs[1] < 0.3


@given(a=st.floats(-3, 3), b=st.floats(-3, 3), seed=st.integers(0, 2**16))
def test_integration_is_linear(a, b, seed):
    g = AnnulusGrid.square(16)
    r = np.random.default_rng(seed)
    F = ScalarField(g, r.normal(size=g.shape))
    G = ScalarField(g, r.normal(size=g.shape))
    lhs = integrate(F * a + G * b)
    assert lhs == pytest.approx(a * integrate(F) + b * integrate(G), abs=1e-12)


def test_support_margin_zeroes_boundary_rows():
    g = AnnulusGrid.square(64)
    f = ScalarField(g, np.ones(g.shape), support_margin=0.05)
    assert not f.values[g.h < 0.05].any() and not f.values[g.h > 0.95].any()
    assert f.values[g.h == g.h[32]].all()


def test_field_rejects_bad_values():
    g = AnnulusGrid.square(8)
    with pytest.raises(ValueError):
        ScalarField(g, np.full(g.shape, np.nan))
    with pytest.raises(ValueError):
        ScalarField(g, np.zeros((3, 3)))


def test_region_area_square_and_orientation():
    assert region_area(SQUARE) == pytest.approx(0.25)
    assert region_area(SQUARE[::-1]) == pytest.approx(-0.25)
    with pytest.raises(OrientationError):
        Region(SQUARE[::-1])


@pytest.mark.parametrize("A", [0.55, 0.6, 0.75, 0.85])
def test_disk_region_has_requested_area(A):
    r = build_disk_region(A, 0.02, 0.01)
    assert r.area == pytest.approx(A, rel=1e-3)
    assert r.is_simple()


def test_disk_region_example():
    r = build_disk_region(0.6, 0.02, 0.01)
    assert abs(r.area - 0.6) <= 0.006
    x0, x1, y0, y1 = r.meta["rect"]
    assert (x0, x1, y0) == (0.02, 0.98, 0.02)


@pytest.mark.parametrize("A", [0.5, 0.3, 0.99, 1.2])
def test_disk_region_rejects(A):
    with pytest.raises(GeometryError):
        build_disk_region(A, 0.02, 0.01)


def test_rounded_rectangle_arcs():
    v = rounded_rectangle(0.0, 1.0, 0.0, 0.5, 0.1, arc_points=16)
    assert region_area(v) == pytest.approx(0.5 - (4 - np.pi) * 0.01, rel=1e-3)


def test_region_distance_sign_and_periodicity():
    r = Region(SQUARE)
    d = region_distance(r, np.array([0.35, 0.35, 1.35]), np.array([0.35, 0.8, 0.35]))
    assert d[0] == pytest.approx(-0.25)
    assert d[1] == pytest.approx(0.2)
    assert d[2] == pytest.approx(-0.25)


def test_field_csv_roundtrip(tmp_path):
    g = AnnulusGrid(8, 6)
    f = ScalarField(g, np.arange(48.0).reshape(6, 8) / 7, support_margin=0.1)
    write_field_csv(f, tmp_path / "f.csv")
    first = (tmp_path / "f.csv").read_text().splitlines()[0]
    assert first.split(",")[:2] == ["8", "6"]
    back = read_field_csv(tmp_path / "f.csv")
    np.testing.assert_array_equal(back.values, f.values)
    assert back.support_margin == f.support_margin


def test_region_csv_roundtrip(tmp_path):
    r = build_disk_region(0.6)
    write_region_csv(r, tmp_path / "r.csv")
    np.testing.assert_allclose(read_region_csv(tmp_path / "r.csv").vertices, r.vertices)
