import csv
import json

import pytest

from hofer_lab.cli import (EXIT_FAILED, EXIT_NUMERICAL, EXIT_OK, EXIT_PRECONDITION, main,
                           read_config)

SMALL = ["--grid", "128", "--tracer", "8"]


@pytest.fixture(scope="module")
def hat_csv(tmp_path_factory):
    out = tmp_path_factory.mktemp("fields") / "hat.csv"
    assert main(["field", "hat", "--grid", "128", "--out", str(out)]) == EXIT_OK
    return out


def test_reeb_hat(hat_csv, tmp_path):
    out, edges = tmp_path / "reeb.json", tmp_path / "reeb.dot"
    assert main(["reeb", str(hat_csv), "--s", "0.1", "--out", str(out),
                 "--edges", str(edges)]) == EXIT_OK
    doc = json.loads(out.read_text())
    assert doc["median"]["value"] == pytest.approx(0.5, abs=0.01)
    assert edges.read_text().strip()


def test_rho_hat_and_scaled(tmp_path, hat_csv):
    out = tmp_path / "rho.json"
    assert main(["rho", str(hat_csv), "--out", str(out)]) == EXIT_OK
    assert json.loads(out.read_text())["rho"] == pytest.approx(0.24, abs=0.01)
    scaled = tmp_path / "hat2.csv"
    assert main(["field", "hat", "--grid", "128", "--scale", "2", "--out", str(scaled)]) == EXIT_OK
    assert main(["rho", str(scaled), "--out", str(out)]) == EXIT_OK
    assert json.loads(out.read_text())["rho"] == pytest.approx(0.48, abs=0.02)


def test_rho_of_disk_bumps(tmp_path):
    f, out = tmp_path / "bumps.csv", tmp_path / "rho.json"
    assert main(["field", "bumps", "--grid", "128", "--seed", "3", "--out", str(f)]) == EXIT_OK
    assert main(["rho", str(f), "--out", str(out)]) == EXIT_OK
    assert json.loads(out.read_text())["rho"] == pytest.approx(0.0, abs=0.01)


def test_missing_input_is_precondition(tmp_path):
    assert main(["reeb", str(tmp_path / "nope.csv"), "--out", str(tmp_path / "x.json")]) \
        == EXIT_PRECONDITION
    assert not (tmp_path / "x.json").exists()


def test_bad_area_is_precondition(tmp_path, hat_csv):
    assert main(["rho", str(hat_csv), "--area", "0.4", "--out", str(tmp_path / "r.json")]) \
        == EXIT_PRECONDITION
    assert main(["certify", "--area", "0.5", "--out", str(tmp_path / "c.json")]) \
        == EXIT_PRECONDITION


@pytest.fixture(scope="module")
def certified(tmp_path_factory):
    d = tmp_path_factory.mktemp("cert")
    outs = []
    for k in range(2):
        out = d / f"cert{k}.json"
        frames = ["--frames", str(d / "frames"), "--frames-per-stage", "2"] if k == 0 else []
        assert main(["certify", "--n", "1", *SMALL, "--out", str(out), *frames]) == EXIT_OK
        outs.append(out)
    return d, outs


def test_certify_output(certified):
    _, (out, _) = certified
    doc = json.loads(out.read_text())
    for key in ("n", "A", "tau", "length", "stage_lengths", "lower_bound", "upper_bound",
                "baseline", "area_distortion", "disk_return_error", "spec"):
        assert key in doc
    assert doc["tau"] == pytest.approx(1.0, abs=0.05)
    assert doc["passed"] is True
    assert doc["spec"]["grid"] == 128


def test_certify_is_deterministic(certified):
    _, (a, b) = certified
    assert a.read_bytes() == b.read_bytes()


def test_certify_frames(certified):
    d, _ = certified
    names = sorted(p.name for p in (d / "frames").iterdir())
    assert "stage0_field.pgm" in names and "stage2_disk02.svg" in names
    assert len(names) == 3 * (1 + 2)
    assert (d / "frames" / "stage1_field.pgm").read_bytes().startswith(b"P5\n128 128\n255\n")


def test_certify_failure_exit_code(tmp_path):
    # a wide clearance delta inflates the shear stage past the upper bound at n = 3
    out = tmp_path / "c.json"
    rc = main(["certify", "--n", "3", "--delta", "0.05", "--delta-prime", "0.01",
               "--delta-dblprime", "0.01", *SMALL, "--out", str(out)])
    doc = json.loads(out.read_text())
    assert rc == EXIT_FAILED
    assert doc["passed"] is False and doc["length"] >= doc["upper_bound"]


def test_config_file_and_flag_precedence(tmp_path, hat_csv):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# scenario\ns = 0.2\nout = %s\n" % (tmp_path / "cfg.json"))
    assert read_config(cfg) == {"s": "0.2", "out": str(tmp_path / "cfg.json")}
    assert main(["reeb", str(hat_csv), "--config", str(cfg)]) == EXIT_OK
    assert json.loads((tmp_path / "cfg.json").read_text())["median"]["value"] == \
        pytest.approx(0.4, abs=0.01)
    flag_out = tmp_path / "flag.json"
    assert main(["reeb", str(hat_csv), "--config", str(cfg), "--s", "0.05",
                 "--out", str(flag_out)]) == EXIT_OK
    assert json.loads(flag_out.read_text())["median"]["value"] == pytest.approx(0.55, abs=0.01)


def test_config_errors(tmp_path, hat_csv):
    bad = tmp_path / "bad.cfg"
    bad.write_text("nonsense_key = 1\n")
    assert main(["reeb", str(hat_csv), "--config", str(bad), "--out",
                 str(tmp_path / "o.json")]) == EXIT_PRECONDITION
    assert main(["reeb", str(hat_csv), "--config", str(tmp_path / "missing.cfg"), "--out",
                 str(tmp_path / "o.json")]) == EXIT_PRECONDITION


def test_empty_sweep(tmp_path):
    out = tmp_path / "sweep.csv"
    assert main(["sweep", "--out", str(out)]) == EXIT_OK
    assert out.read_text().strip().split(",")[:3] == ["n", "A", "status"]
    assert len(out.read_text().strip().splitlines()) == 1


def test_sweep_with_rejected_row(tmp_path, monkeypatch):
    monkeypatch.setenv("HOFER_LAB_THREADS", "1")
    out = tmp_path / "sweep.csv"
    rc = main(["sweep", "--n-values", "1", "--area-values", "0.5,0.6", *SMALL, "--out", str(out)])
    assert rc == EXIT_PRECONDITION
    rows = list(csv.DictReader(out.open()))
    assert [r["status"] for r in rows] == ["rejected", "pass"]
    assert float(rows[1]["tau"]) == pytest.approx(1.0, abs=0.05)


def test_numerical_fault_exit_code(tmp_path, monkeypatch):
    import hofer_lab.cli as cli
    from hofer_lab.flow import StepSizeError

    def boom(*a, **k):
        raise StepSizeError("step guard tripped")

    monkeypatch.setattr(cli, "certify_psi", boom)
    out = tmp_path / "c.json"
    assert main(["certify", "--n", "1", *SMALL, "--out", str(out)]) == EXIT_NUMERICAL
    assert not out.exists()


def test_missing_output_is_precondition(hat_csv):
    assert main(["reeb", str(hat_csv)]) == EXIT_PRECONDITION
