"""Command line entry point: ``hofer-lab {field,reeb,rho,certify,sweep}``.

Exit codes: 0 success, 1 a certificate was computed but did not pass,
2 a precondition failed (bad parameters, missing files, invalid geometry),
3 a numerical fault was detected (step-size guard, non-tree Reeb graph,
non-integer translation number). Every output file is written to a temporary
name and renamed, so a failed run never leaves a partial file behind.

Each command also accepts ``--config FILE``, a flat ``key = value`` file
whose keys are the long flag names (dashes or underscores). Flags given on
the command line win over the file.
"""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import fields
from pathlib import Path

import numpy as np

from .calabi import EmbeddingSpec, SupportError, rho_report, write_json
from .constructions import (ConstructionSpec, build_hat_H, build_plateau_K, build_psi_path,
                            bump, certify_psi, random_disk_bumps)
from .field import (AnnulusGrid, GeometryError, Region, ScalarField, build_disk_region,
                    read_field_csv, write_field_csv)
from .flow import FlowError, HamiltonianPath, advect
from .reeb import ReebError, SphereModel, build_reeb, find_median, write_reeb_json

log = logging.getLogger("hofer_lab")

EXIT_OK, EXIT_FAILED, EXIT_PRECONDITION, EXIT_NUMERICAL = 0, 1, 2, 3


class ConfigError(ValueError):
    """Malformed scenario file or parameter outside its domain."""


# -- scenario files --------------------------------------------------------------

def read_config(path: str | Path) -> dict[str, str]:
    """Parse a flat ``key = value`` file; ``#`` starts a comment."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} does not exist")
    out = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _apply_config(args: argparse.Namespace, parser: argparse.ArgumentParser) -> None:
    """Fill arguments the user did not give on the command line from ``--config``."""
    if not getattr(args, "config", None):
        return
    cfg = read_config(args.config)
    actions = {a.dest: a for a in parser._actions}
    for key, raw in cfg.items():
        if key not in actions:
            raise ConfigError(f"unknown config key {key!r}")
        if getattr(args, key) != parser.get_default(key):
            continue  # flag wins
        conv = actions[key].type or str
        setattr(args, key, conv(raw))


def _list(conv):
    def parse(text: str):
        return [conv(s) for s in text.replace(",", " ").split()]
    return parse


# -- frames ------------------------------------------------------------------------

def write_pgm(f: ScalarField, path: str | Path) -> None:
    """8-bit greyscale image of a field, top row = largest h."""
    v = f.values[::-1]
    lo, hi = float(v.min()), float(v.max())
    img = np.zeros_like(v) if hi == lo else (v - lo) / (hi - lo)
    data = np.round(255 * img).astype(np.uint8)
    header = f"P5\n{data.shape[1]} {data.shape[0]}\n255\n".encode()
    _write_bytes(path, header + data.tobytes())


def write_svg(curves: list[np.ndarray], path: str | Path, size: int = 512) -> None:
    """Curves given as (theta_lift, h) vertices, wrapped into the unit square."""
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
             f'viewBox="0 0 1 1"><rect width="1" height="1" fill="white" stroke="black" '
             f'stroke-width="0.002"/>']
    for pts in curves:
        x = np.mod(pts[:, 0], 1.0)
        y = 1.0 - pts[:, 1]
        coords = " ".join(f"{a:.5f},{b:.5f}" for a, b in zip(x, y))
        parts.append(f'<polyline points="{coords}" fill="none" stroke="black" '
                     f'stroke-width="0.002"/>')
    parts.append("</svg>\n")
    _write_bytes(path, "\n".join(parts).encode())


def _write_bytes(path: str | Path, data: bytes) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    tmp.replace(path)


def emit_frames(path: HamiltonianPath, disk: Region, dt: float, outdir: Path,
                per_stage: int = 4) -> list[Path]:
    """Field image per stage and the disk boundary at ``per_stage`` times per stage."""
    outdir.mkdir(parents=True, exist_ok=True)
    written = []
    th, hh = disk.vertices[:, 0].copy(), disk.vertices[:, 1].copy()
    for k, seg in enumerate(path.segments):
        p = outdir / f"stage{k}_field.pgm"
        write_pgm(seg.field, p)
        written.append(p)
        piece = HamiltonianPath((type(seg)(seg.field, seg.duration / per_stage, seg.conjugation,
                                           seg.label, seg.exact),))
        for j in range(per_stage):
            th, hh = advect(piece, th, hh, min(dt, piece.duration))
            p = outdir / f"stage{k}_disk{j + 1:02d}.svg"
            write_svg([np.column_stack([th, hh])], p)
            written.append(p)
    return written


# -- commands ----------------------------------------------------------------------

def cmd_field(args) -> int:
    grid = AnnulusGrid.square(args.grid)
    if args.kind == "hat":
        f = build_hat_H(args.hat_delta, grid)
    elif args.kind == "plateau":
        disk = build_disk_region(args.area, args.delta, args.delta_prime)
        f = build_plateau_K(disk, grid, args.delta_prime)
    elif args.kind == "bumps":
        disk = build_disk_region(args.area, args.delta, args.delta_prime)
        f = random_disk_bumps(disk, grid, np.random.default_rng(args.seed))
    elif args.kind == "twobump":
        f = bump(grid, (0.25, 0.5), 0.15, 1.0) + bump(grid, (0.75, 0.5), 0.15, 2.0)
    else:  # pragma: no cover - argparse restricts the choices
        raise ConfigError(args.kind)
    write_field_csv(f * args.scale, args.out)
    return EXIT_OK


def cmd_reeb(args) -> int:
    F = read_field_csv(args.field)
    graph = build_reeb(SphereModel(F, args.s, args.area))
    median = find_median(graph)
    write_reeb_json(graph, median, args.out)
    if args.edges:
        _write_bytes(args.edges, graph.edge_list().encode())
    log.info("median value %.6f (%s %d)", median.value, median.kind, median.index)
    return EXIT_OK


def cmd_rho(args) -> int:
    F = read_field_csv(args.field)
    spec = EmbeddingSpec(args.area, args.s1, args.s2)
    report = rho_report(F, spec)
    write_json(report, args.out)
    log.info("rho = %.6f", report["rho"])
    return EXIT_OK


_SPEC_FLAGS = ("delta", "delta_prime", "delta_dblprime", "corridor_width", "grid", "dt",
               "tracer")


def _spec_from(args, n: int, A: float) -> ConstructionSpec:
    kw = {k: getattr(args, k) for k in _SPEC_FLAGS if getattr(args, k, None) is not None}
    return ConstructionSpec(n=n, A=A, **kw)


def cmd_certify(args) -> int:
    spec = _spec_from(args, args.n, args.area)
    path = build_psi_path(spec)
    cert, _ = certify_psi(path, spec)
    doc = cert.to_dict()
    doc["spec"] = {f.name: getattr(spec, f.name) for f in fields(spec)}
    write_json(doc, args.out)
    if args.frames:
        emit_frames(path, spec.disk(), spec.dt, Path(args.frames), args.frames_per_stage)
    log.info("n=%d A=%.3f tau=%.3f length=%.4f in [%.3f, %.3f) baseline=%.4f %s",
             cert.n, cert.A, cert.tau, cert.hofer_length, cert.lower_bound, cert.upper_bound,
             cert.baseline, "PASS" if cert.passed else "FAIL")
    return EXIT_OK if cert.passed else EXIT_FAILED


SWEEP_COLUMNS = ("n", "A", "status", "tau", "length", "lower_bound", "upper_bound", "baseline",
                 "area_distortion", "disk_return_error", "message")


def _sweep_row(job: tuple[int, float, dict]) -> dict:
    n, A, overrides = job
    row = {"n": n, "A": A}
    try:
        spec = ConstructionSpec(n=n, A=A, **overrides)
    except (ValueError, GeometryError) as exc:
        return {**row, "status": "rejected", "message": str(exc)}
    try:
        cert, _ = certify_psi(build_psi_path(spec), spec)
    except (FlowError, ReebError) as exc:
        return {**row, "status": "fault", "message": str(exc)}
    d = cert.to_dict()
    row.update({k: d[k] for k in SWEEP_COLUMNS if k in d})
    row["status"] = "pass" if cert.passed else "fail"
    return row


def _workers(jobs: int) -> int:
    cap = os.environ.get("HOFER_LAB_THREADS")
    limit = int(cap) if cap else (os.cpu_count() or 1)
    return max(1, min(jobs, limit))


def cmd_sweep(args) -> int:
    ns = args.n_values if args.n_values is not None else []
    As = args.area_values if args.area_values is not None else []
    overrides = {k: getattr(args, k) for k in _SPEC_FLAGS if getattr(args, k, None) is not None}
    jobs = [(n, A, overrides) for n, A in itertools.product(ns, As)]
    workers = _workers(len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            rows = list(pool.map(_sweep_row, jobs))
    else:
        rows = [_sweep_row(j) for j in jobs]
    buf = io.StringIO()
    w = csv.DictWriter(buf, SWEEP_COLUMNS, extrasaction="ignore", lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: r.get(k, "") for k in SWEEP_COLUMNS})
    _write_bytes(args.out, buf.getvalue().encode())
    statuses = {r["status"] for r in rows}
    if "rejected" in statuses:
        return EXIT_PRECONDITION
    if "fault" in statuses:
        return EXIT_NUMERICAL
    return EXIT_FAILED if "fail" in statuses else EXIT_OK


# -- parser ------------------------------------------------------------------------

def _spec_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--delta-prime", type=float, default=None)
    p.add_argument("--delta-dblprime", type=float, default=None)
    p.add_argument("--corridor-width", type=float, default=None)
    p.add_argument("--grid", type=int, default=None, help="field grid size (default 512)")
    p.add_argument("--dt", type=float, default=None, help="time step (default 5e-4)")
    p.add_argument("--tracer", type=int, default=None,
                   help="size of the node grid whose images are certified")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hofer-lab", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("field", help="write a built-in field as CSV")
    p.add_argument("kind", choices=("hat", "plateau", "bumps", "twobump"))
    p.add_argument("--grid", type=int, default=512)
    p.add_argument("--area", type=float, default=0.6)
    p.add_argument("--hat-delta", type=float, default=0.01, help="boundary cutoff of the hat field")
    p.add_argument("--delta", type=float, default=0.02, help="disk clearance (plateau, bumps)")
    p.add_argument("--delta-prime", type=float, default=0.01)
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_field)

    p = sub.add_parser("reeb", help="Reeb graph and median of a field on the sphere model")
    p.add_argument("field")
    p.add_argument("--s", type=float, default=0.0, help="area of the bottom cap")
    p.add_argument("--area", type=float, default=0.6)
    p.add_argument("--edges", default=None, help="also write a graphviz edge list here")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_reeb)

    p = sub.add_parser("rho", help="the quasimorphism rho of an autonomous field")
    p.add_argument("field")
    p.add_argument("--s1", type=float, default=0.0)
    p.add_argument("--s2", type=float, default=None, help="default 2A - 1")
    p.add_argument("--area", type=float, default=0.6)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_rho)

    p = sub.add_parser("certify", help="build psi_n and certify both length bounds")
    p.add_argument("--n", type=int, default=1)
    p.add_argument("--area", type=float, default=0.6)
    _spec_options(p)
    p.add_argument("--frames", default=None, help="directory for PGM/SVG frames")
    p.add_argument("--frames-per-stage", type=int, default=4)
    p.add_argument("--seed", type=int, default=0, help="accepted for uniformity; runs are deterministic")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("sweep", help="certify every (n, A) pair, one CSV row each")
    p.add_argument("--n-values", type=_list(int), default=None)
    p.add_argument("--area-values", type=_list(float), default=None)
    _spec_options(p)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_sweep)

    for name, sp in sub.choices.items():
        sp.add_argument("--config", default=None, help="flat key = value scenario file")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    sp = parser._subparsers._group_actions[0].choices[args.command]
    try:
        _apply_config(args, sp)
        if getattr(args, "out", "") is None:
            raise ConfigError("an output path is required (--out or config key out)")
        for key in ("field", "config"):
            value = getattr(args, key, None)
            if value and not Path(value).is_file():
                raise ConfigError(f"input file {value} does not exist")
        return args.func(args)
    except (FlowError, ReebError) as exc:
        log.error("numerical fault: %s", exc)
        return EXIT_NUMERICAL
    except (ValueError, GeometryError, SupportError, OSError) as exc:
        log.error("precondition failed: %s", exc)
        return EXIT_PRECONDITION


if __name__ == "__main__":
    sys.exit(main())
