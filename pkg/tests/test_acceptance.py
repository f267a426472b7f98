"""Acceptance criteria 1 to 6 at full resolution.

Each test prints one ``criterion k: PASS|FAIL`` line (collected again in the
terminal summary) and then asserts the same condition.
"""

import json
import time

import numpy as np
import pytest

from hofer_lab.calabi import EmbeddingSpec, cal_j, rho
from hofer_lab.cli import EXIT_OK, main
from hofer_lab.constructions import (ConstructionSpec, build_hat_H, build_plateau_K,
                                     build_psi_path, certify_psi, naive_rotation_baseline,
                                     random_disk_bumps)
from hofer_lab.field import AnnulusGrid, build_disk_region
from hofer_lab.flow import (HamiltonianPath, area_distortion, hofer_length, integrate_flow,
                            translation_winding)
from hofer_lab.reeb import SphereModel, build_reeb, find_median, perturbed_measures

from .oracles import level_components
from .test_reeb import random_smooth_field

A = 0.6
RESULTS: list[str] = []


def report(k: int, ok: bool, detail: str) -> None:
    line = f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS.append(line)
    print(line)


def balanced(g, m, eta=1e-3) -> bool:
    half = g.total_measure / 2
    if m.component_measures and max(m.component_measures) > half + 1e-9:
        return False
    return all(max(c) > half - 1e-9 for c in perturbed_measures(g, m, eta))


GRAPH_CHECKS: list[bool] = []


def median_of(F, s):
    g = build_reeb(SphereModel(F, s, A))
    m = find_median(g)
    GRAPH_CHECKS.append(g.is_tree() and balanced(g, m))
    return m


@pytest.fixture(scope="module")
def grid():
    return AnnulusGrid.square(512)


@pytest.fixture(scope="module")
def hat(grid):
    return build_hat_H(0.01, grid)


@pytest.fixture(scope="module")
def psi():
    """Certificates and maps of psi_1, psi_2, psi_3 at the default spec."""
    out = {}
    for n in (1, 2, 3):
        t0 = time.perf_counter()
        spec = ConstructionSpec(n=n, A=A, grid=512, dt=5e-4)
        cert, fmap = certify_psi(build_psi_path(spec), spec)
        out[n] = (spec, cert, fmap, time.perf_counter() - t0)
    return out


def test_criterion_1_median_formula(tmp_path):
    field = tmp_path / "hat.csv"
    assert main(["field", "hat", "--grid", "512", "--out", str(field)]) == EXIT_OK
    rows, ok = [], True
    for s in (0.0, 0.1, 0.2):
        out = tmp_path / f"reeb_{s}.json"
        t0 = time.perf_counter()
        rc = main(["reeb", str(field), "--s", str(s), "--area", str(A), "--out", str(out)])
        dt = time.perf_counter() - t0
        value = json.loads(out.read_text())["median"]["value"] if rc == EXIT_OK else float("nan")
        good = rc == EXIT_OK and abs(value - (A - s)) <= 0.01 and dt < 30
        ok &= good
        rows.append(f"s={s}: {value:.4f} (want {A - s:.2f}, {dt:.1f}s)")
    report(1, ok, "; ".join(rows))
    assert ok


def test_criterion_2_quasimorphism_constant(hat):
    spec = EmbeddingSpec(A)
    values = {n: rho(hat * n, spec) for n in (1, 2, 3)}
    for n in (1, 2, 3):
        for s in (spec.s1, spec.s2):
            median_of(hat * n, s)
    ok = all(abs(values[n] - n * 0.24) <= n * 0.01 for n in values)
    report(2, ok, "; ".join(f"rho({n}H)={v:.4f} (want {0.24 * n:.2f})"
                            for n, v in values.items()))
    assert ok


def test_criterion_3_disk_support(grid):
    disk = build_disk_region(A, 0.02, 0.01)
    spec = EmbeddingSpec(A)
    bumps = [rho(random_disk_bumps(disk, grid, np.random.default_rng(seed)), spec)
             for seed in (1, 2, 3)]
    K = build_plateau_K(disk, grid, 0.01)
    cal = [cal_j(K, s, A) for s in np.linspace(0.0, 2 * A - 1, 5)]
    for s in (0.0, 0.1, 0.2):
        median_of(K, s)
    spread = max(cal) - min(cal)
    ok = all(abs(r) <= 0.01 for r in bumps) and spread <= 0.01
    report(3, ok, f"bump rho {', '.join(f'{r:.2e}' for r in bumps)}; "
                  f"cal_j(K) spread over s = {spread:.2e}")
    assert ok


def test_criterion_4_length_sandwich(psi):
    rows, ok = [], True
    for n, (spec, cert, _, runtime) in psi.items():
        lo, hi = (2 * A - 1) / 2 * n, (2 * A - 1) * n + 1
        good = abs(cert.tau - n) <= 0.05 and lo <= cert.hofer_length < hi and runtime < 60
        ok &= good
        rows.append(f"n={n}: tau={cert.tau:.4f} length={cert.hofer_length:.4f} "
                    f"in [{lo:.1f}, {hi:.1f}) {runtime:.0f}s")
    report(4, ok, "; ".join(rows))
    assert ok


def test_criterion_5_beats_rotation(psi):
    length = psi[3][1].hofer_length
    baseline = naive_rotation_baseline(3, A)
    ok = length < baseline
    report(5, ok, f"length(psi_3)={length:.4f} < baseline(3, {A})={baseline:.4f}")
    assert ok


def test_criterion_6_property_suites(psi, hat):
    notes, ok = [], True
    # area distortion on every acceptance flow map
    tracer = AnnulusGrid.square(32)
    maps = {f"psi_{n}": v[2] for n, v in psi.items()}
    maps["H"] = integrate_flow(HamiltonianPath.autonomous(hat), 5e-4, grid=tracer)
    dist = {k: area_distortion(m) for k, m in maps.items()}
    ok &= max(dist.values()) <= 1e-2
    notes.append(f"max area distortion {max(dist.values()):.1e}")
    # Reeb graph against flood fill: 20 random fields, 20 levels each
    mismatches = 0
    for seed in range(20):
        rng = np.random.default_rng(1000 + seed)
        f = random_smooth_field(rng, AnnulusGrid.square(64))
        g = build_reeb(SphereModel(f, rng.uniform(0, 2 * A - 1), A))
        levels = rng.uniform(f.values.min(), f.values.max(), 20)
        mismatches += sum(g.component_count(c) != level_components(f.values, c) for c in levels)
        GRAPH_CHECKS.append(g.is_tree() and balanced(g, find_median(g)))
    ok &= mismatches == 0
    notes.append(f"oracle mismatches {mismatches}/400")
    # additivity: Hofer length exactly, winding within 0.05
    a = HamiltonianPath.autonomous(hat, 1.0)
    b = HamiltonianPath.autonomous(hat * 2, 0.5)
    exact = hofer_length(a + b) == hofer_length(a) + hofer_length(b)
    seed = (0.3, 0.5)
    w = [translation_winding(a * k, seed) for k in (1, 2, 3)]
    wind = all(abs(w[k - 1] - k * w[0]) <= 0.05 for k in (1, 2, 3))
    ok &= exact and wind
    notes.append(f"length additivity exact={exact}, windings {', '.join(f'{x:.3f}' for x in w)}")
    # median balance on every graph built in this module
    ok &= all(GRAPH_CHECKS)
    notes.append(f"median balanced on {sum(GRAPH_CHECKS)}/{len(GRAPH_CHECKS)} graphs")
    report(6, ok, "; ".join(notes))
    assert ok
