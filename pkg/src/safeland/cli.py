"""Command-line entry points: ``simulate``, ``detect`` and ``report``.

Exit codes: 0 success, 2 bad input or configuration, 3 no admissible
landing zone, 4 mission aborted (for example on timeout).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .camera import CameraModel
from .imaging import canny_edges, read_pnm, to_grayscale, write_edge_map, write_pnm
from .pipeline import PipelineConfig, run_mission
from .plz import MIN_PLZ_AREA_M2, plz_candidates
from .report import (DECISION_FIELDS, DESCENT_FIELDS, PLZ_FIELDS, REPORT_NAME, TRACK_FIELDS, RunReport,
                     aggregate, build_report, load_report, overlay, plot_errors, plot_overview,
                     plot_timeline, plz_rows_plain, track_vectors, write_csv, _fmt)
from .sim import ScenarioError, load_scenario

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NO_PLZ = 3
EXIT_ABORT = 4

PLAIN_PLZ_FIELDS = PLZ_FIELDS[:9]


class InputError(ValueError):
    pass


def _exit_for(report: RunReport) -> int:
    if report.final_phase == "Landed":
        return EXIT_OK
    if report.exit_reason == "no_plz":
        return EXIT_NO_PLZ
    return EXIT_ABORT


def cmd_simulate(scenario_path, out_dir, overrides: dict | None = None, seed: int | None = None,
                 trace: bool = False) -> RunReport:
    """Run one scenario end to end and write its artifacts under ``out_dir``.

    Layout: ``report.json``, ``frames/`` (scan frames, edge map, depth
    frames as 16-bit millimetre PGM, overlay), ``traces/plz.csv`` and, with
    ``trace``, the per-tick ``decision.csv``, ``tracks.csv`` and
    ``descent.csv``, plus ``figures/overview.png`` and ``figures/timeline.png``.
    """
    scenario = load_scenario(scenario_path)
    if seed is not None:
        scenario = scenario.with_seed(seed)
    merged = dict(scenario.pipeline)
    merged.update({k: v for k, v in (overrides or {}).items() if v is not None})
    config = PipelineConfig.from_overrides(merged)

    out = Path(out_dir)
    frames = out / "frames"
    traces = out / "traces"
    figures = out / "figures"
    for d in (frames, traces, figures):
        d.mkdir(parents=True, exist_ok=True)

    def sink(name, img):
        write_pnm(frames / name, img)

    result = run_mission(scenario, config, frame_sink=sink)
    report = build_report(result)

    if result.first_frame is not None:
        write_pnm(frames / "overlay.ppm", overlay(result.first_frame, result.zones, track_vectors(result)))
    write_csv(traces / "plz.csv", report.plz_rows, PLZ_FIELDS)
    if trace:
        write_csv(traces / "decision.csv", result.decision_rows, DECISION_FIELDS)
        write_csv(traces / "tracks.csv", result.track_rows, TRACK_FIELDS)
        write_csv(traces / "descent.csv", result.descent_rows, DESCENT_FIELDS)
    plot_overview(result, figures / "overview.png")
    plot_timeline(result, figures / "timeline.png", config.margin_s)
    (out / REPORT_NAME).write_text(report.to_json())
    return report


def read_image(path) -> np.ndarray:
    path = Path(path)
    try:
        if path.suffix.lower() in (".pgm", ".ppm", ".pnm"):
            img = read_pnm(path)
            if img.dtype == np.uint16:
                img = (img >> 8).astype(np.uint8)
        else:
            import matplotlib.image as mpimg
            img = mpimg.imread(path)
            if img.dtype != np.uint8:
                img = np.clip(np.round(img * 255.0), 0, 255).astype(np.uint8)
            if img.ndim == 3 and img.shape[2] == 4:
                img = img[:, :, :3]
    except (OSError, ValueError, SyntaxError) as exc:
        raise InputError(f"cannot read image {path}: {exc}") from exc
    return img


def cmd_detect(image_path, altitude_m: float, focal_px: float, out_dir,
               min_area_m2: float = MIN_PLZ_AREA_M2):
    """Edge detection and zone search on one image; writes ``plz.csv``, ``edges.pgm`` and ``overlay.ppm``."""
    if not altitude_m > 0 or not focal_px > 0:
        raise InputError("altitude and focal length must be positive")
    img = read_image(image_path)
    gray = to_grayscale(img)
    cam = CameraModel(float(focal_px), float(altitude_m), gray.shape[1], gray.shape[0])
    edges = canny_edges(gray)
    zones = plz_candidates(edges, cam, min_area_m2)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "plz.csv", plz_rows_plain(zones), PLAIN_PLZ_FIELDS)
    write_edge_map(out / "edges.pgm", edges)
    write_pnm(out / "overlay.ppm", overlay(np.asarray(gray).round().clip(0, 255).astype(np.uint8), zones))
    return zones


def cmd_report(run_dirs, out_dir=None, stream=None):
    """Aggregate finished runs; prints a CSV table and writes ``aggregate.json``/``errors.png`` when ``out_dir`` is set.

    Returns the aggregate and the list of skipped directories.
    """
    stream = stream or sys.stdout
    reports, skipped = [], []
    for d in run_dirs:
        try:
            reports.append(load_report(d))
        except (OSError, ValueError, TypeError) as exc:
            skipped.append(str(d))
            log.warning("skipping %s: %s", d, exc)
    if not reports:
        raise InputError("no readable run reports: " + ", ".join(skipped))
    agg = aggregate(reports)
    fields = ["scenario_id", "final_phase", "mean_distance_err_pct", "mean_area_err_pct", "mean_velocity_err_pct"]
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(fields)
    for r in agg["runs"]:
        w.writerow(["" if r[k] is None else _fmt(r[k]) for k in fields])
    w.writerow(["MEAN", ""] + ["" if agg[k] is None else _fmt(agg[k]) for k in fields[2:]])
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "aggregate.json").write_text(json.dumps({**agg, "skipped": skipped}, sort_keys=True, indent=2) + "\n")
        plot_errors(agg["runs"], out / "errors.png")
    return agg, skipped


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="safeland", description="Safe-landing zone detection and landing simulator.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run a scenario end to end")
    s.add_argument("--scenario", required=True, help="scenario JSON file")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    s.add_argument("--margin-s", type=float, default=None, help="clearance margin in seconds (default 20)")
    s.add_argument("--min-area-m2", type=float, default=None, help="minimum zone area (default 3)")
    s.add_argument("--fps", type=int, default=None, help="frame rate (default: the scenario camera, 30)")
    s.add_argument("--trace", action="store_true", help="write per-tick CSV traces")

    d = sub.add_parser("detect", help="find landing zones in one image")
    d.add_argument("image")
    d.add_argument("--altitude-m", type=float, required=True)
    d.add_argument("--focal-px", type=float, required=True)
    d.add_argument("--min-area-m2", type=float, default=MIN_PLZ_AREA_M2)
    d.add_argument("--out", required=True)

    r = sub.add_parser("report", help="aggregate errors over finished runs")
    r.add_argument("runs", nargs="+", help="run directories")
    r.add_argument("--out", default=None, help="directory for aggregate.json and errors.png")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "simulate":
            overrides = {"margin_s": args.margin_s, "min_area_m2": args.min_area_m2, "fps": args.fps}
            rep = cmd_simulate(args.scenario, args.out, overrides, args.seed, args.trace)
            td = rep.touchdown_m
            print(f"scenario={rep.scenario_id},phase={rep.final_phase},reason={rep.exit_reason},"
                  f"target={'' if rep.target_plz_id is None else rep.target_plz_id},"
                  f"touchdown={'' if td is None else f'{td[0]:.3f};{td[1]:.3f}'},time_s={rep.total_time_s:.3f}")
            return _exit_for(rep)
        if args.command == "detect":
            zones = cmd_detect(args.image, args.altitude_m, args.focal_px, args.out, args.min_area_m2)
            admitted = [z for z in zones if z.admitted]
            w = csv.writer(sys.stdout, lineterminator="\n")
            w.writerow(PLAIN_PLZ_FIELDS)
            for row in plz_rows_plain(admitted):
                w.writerow([_fmt(row[k]) for k in PLAIN_PLZ_FIELDS])
            return EXIT_OK if admitted else EXIT_NO_PLZ
        _, skipped = cmd_report(args.runs, args.out)
        for s in skipped:
            print(f"skipped: {s} (no readable {REPORT_NAME})", file=sys.stderr)
        return EXIT_OK
    except ScenarioError as exc:
        where = f" at {exc.path}" if exc.path else ""
        print(f"error: scenario invalid{where}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InputError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
