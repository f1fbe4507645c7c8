"""Run reports: scored PLZ and mover rows, CSV traces, overlays and figures.

Everything written here is a pure function of the mission result, so two
runs of the same scenario produce byte-identical files.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from shapely.geometry import Point  # noqa: E402

from .plz import PLZ  # noqa: E402
from .sim import KMH_PER_MPS, WorldState, local_empty_circle  # noqa: E402

REPORT_VERSION = 1
REPORT_NAME = "report.json"
FLOAT_DIGITS = 6

YELLOW = (255, 220, 0)
GREY = (160, 160, 160)
RED = (230, 40, 40)
CYAN = (0, 200, 255)

PLZ_FIELDS = ["plz_id", "center_row", "center_col", "x_m", "y_m", "diameter_px", "diameter_m", "area_m2",
              "admitted", "truth_diameter_m", "truth_area_m2", "distance_err_pct", "area_err_pct"]
TRACK_FIELDS = ["kind", "frame_index", "track_id", "centroid_row", "centroid_col", "velocity_mps",
                "plz_id", "distance_m", "t_x_s"]
DECISION_FIELDS = ["frame_index", "time_s", "phase", "x_m", "y_m", "altitude_m", "target_plz_id", "t_d",
                   "min_margin", "verdict", "truth_margin"]
DESCENT_FIELDS = ["tick", "altitude_m", "x_m", "y_m", "q0_m", "q1_m", "q2_m", "q3_m", "chosen",
                  "tof_range_m", "tof_saturated", "consistency", "maneuver"]


def pct_error(est: float, truth: float) -> float:
    if not truth > 0:
        raise ValueError("truth must be positive")
    return abs(est - truth) / truth * 100.0


def _round(v):
    if isinstance(v, float):
        if not math.isfinite(v):
            return None
        r = round(v, FLOAT_DIGITS)
        return 0.0 if r == 0 else r
    if isinstance(v, dict):
        return {str(k): _round(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_round(x) for x in v]
    if isinstance(v, np.generic):
        return _round(v.item())
    return v


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if not math.isfinite(v):
            return "inf" if v > 0 else ("-inf" if v < 0 else "nan")
        return repr(round(v, FLOAT_DIGITS))
    return v


@dataclass
class RunReport:
    scenario_id: str
    seed: int
    final_phase: str
    exit_reason: str
    touchdown_m: list | None
    total_time_s: float
    target_plz_id: int | None
    plz_rows: list = field(default_factory=list)
    mover_rows: list = field(default_factory=list)
    decision: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    schema_version: int = REPORT_VERSION

    def to_json(self) -> str:
        return json.dumps(_round(asdict(self)), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_dict(cls, doc: dict) -> "RunReport":
        if doc.get("schema_version") != REPORT_VERSION:
            raise ValueError(f"unsupported report version {doc.get('schema_version')!r}")
        return cls(**doc)


def score_zones(world: WorldState, zones: list[PLZ]) -> list[dict]:
    """Compare each zone with the exact largest empty circle around its center."""
    cam = world.camera
    search = 2.0 * cam.meters_per_px
    rows = []
    for z in zones:
        (tx, ty), td = local_empty_circle(world, z.world_xy, search)
        row = {"plz_id": z.id, "center_row": z.center_px[0], "center_col": z.center_px[1],
               "x_m": z.world_xy[0], "y_m": z.world_xy[1], "diameter_px": z.diameter_px,
               "diameter_m": z.diameter_m, "area_m2": z.area_m2, "admitted": int(z.admitted),
               "truth_diameter_m": td, "truth_area_m2": math.pi * td * td / 4.0,
               "distance_err_pct": None, "area_err_pct": None}
        if td > 0:
            row["distance_err_pct"] = pct_error(z.diameter_m, td)
            row["area_err_pct"] = pct_error(z.area_m2, row["truth_area_m2"])
        rows.append(row)
    return rows


def score_movers(result) -> list[dict]:
    """Match each frozen track to the nearest scripted mover at the track's time."""
    scen = result.scenario
    rows = []
    for est in result.estimates:
        if not scen.movers:
            break
        t = est.t0_s
        dists = [float(np.hypot(*(m.position(t) - est.position_m))) for m in scen.movers]
        mi = int(np.argmin(dists))
        truth = scen.movers[mi].speed_mps
        rows.append({"track_id": est.track_id, "mover": mi,
                     "est_speed_kmh": est.speed_mps * KMH_PER_MPS,
                     "truth_speed_kmh": truth * KMH_PER_MPS,
                     "speed_err_pct": pct_error(est.speed_mps, truth) if truth > 0 else None,
                     "position_err_m": dists[mi]})
    return rows


def footprint_overlap(scen, xy, radius_m: float) -> float:
    """Area shared by the drone's body disc and any obstacle footprint."""
    body = Point(*xy).buffer(radius_m, quad_segs=64)
    return float(sum(body.intersection(ob.polygon).area for ob in scen.obstacles))


def _mean(xs):
    xs = [x for x in xs if x is not None]
    return float(np.mean(xs)) if xs else None


def build_report(result) -> RunReport:
    scen = result.scenario
    world0 = WorldState(scen, Fraction(0), scen.drone)
    plz_rows = score_zones(world0, result.zones)
    mover_rows = score_movers(result)
    admitted = [r for r in plz_rows if r["admitted"]]

    rows = [r for r in result.decision_rows if r["verdict"] != ""]
    phases = {}
    for r in result.decision_rows:
        phases[r["phase"]] = phases.get(r["phase"], 0) + 1
    margins = [r["min_margin"] for r in rows if math.isfinite(r["min_margin"])]
    decision = {
        "frames": len(result.decision_rows),
        "frames_per_phase": phases,
        "transitions": [list(t) for t in result.transitions],
        "wait_frames": sum(r["verdict"] == "Wait" for r in rows),
        "min_margin_s": min(margins) if margins else None,
        "relocations": sum(r["maneuver"] == "relocate" for r in result.descent_rows),
    }
    touchdown = None
    inside = None
    if result.final_phase.value == "Landed":
        touchdown = [result.drone.x_m, result.drone.y_m]
        if result.target is not None:
            tx, ty = result.target.world_xy
            inside = math.hypot(touchdown[0] - tx, touchdown[1] - ty) <= result.target.radius_m
    summary = {
        "plz_admitted": len(admitted),
        "mean_distance_err_pct": _mean([r["distance_err_pct"] for r in admitted]),
        "mean_area_err_pct": _mean([r["area_err_pct"] for r in admitted]),
        "mean_velocity_err_pct": _mean([r["speed_err_pct"] for r in mover_rows]),
        "touchdown_in_target": inside,
        "touchdown_obstacle_overlap_m2": None if touchdown is None else footprint_overlap(
            scen, touchdown, result.drone.body_radius_m),
    }
    return RunReport(
        scenario_id=scen.id, seed=scen.seed, final_phase=result.final_phase.value,
        exit_reason=result.reason, touchdown_m=touchdown, total_time_s=result.total_time_s,
        target_plz_id=None if result.target is None else result.target.id,
        plz_rows=plz_rows, mover_rows=mover_rows, decision=decision, summary=summary)


def write_csv(path, rows, fields) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: "" if r.get(k) is None else _fmt(r.get(k)) for k in fields})


def plz_rows_plain(zones: list[PLZ]) -> list[dict]:
    return [{"plz_id": z.id, "center_row": z.center_px[0], "center_col": z.center_px[1],
             "x_m": z.world_xy[0], "y_m": z.world_xy[1], "diameter_px": z.diameter_px,
             "diameter_m": z.diameter_m, "area_m2": z.area_m2, "admitted": int(z.admitted)}
            for z in zones]


# --- raster overlay -------------------------------------------------------------

def _put(img, rr, cc, color):
    h, w = img.shape[:2]
    rr = np.round(rr).astype(int)
    cc = np.round(cc).astype(int)
    ok = (rr >= 0) & (rr < h) & (cc >= 0) & (cc < w)
    img[rr[ok], cc[ok]] = color


def draw_circle(img, center, radius, color, dashed=False):
    n = max(16, int(2 * math.pi * radius))
    a = np.linspace(0.0, 2 * math.pi, n, endpoint=False)
    if dashed:
        a = a[(np.arange(n) // 6) % 2 == 0]
    _put(img, center[0] + radius * np.sin(a), center[1] + radius * np.cos(a), color)


def draw_line(img, p0, p1, color):
    n = int(max(abs(p1[0] - p0[0]), abs(p1[1] - p0[1]))) + 1
    t = np.linspace(0.0, 1.0, n + 1)
    _put(img, p0[0] + (p1[0] - p0[0]) * t, p0[1] + (p1[1] - p0[1]) * t, color)


def overlay(frame: np.ndarray, zones: list[PLZ], tracks=(), vector_s: float = 2.0) -> np.ndarray:
    """RGB copy of ``frame``: admitted zones solid yellow, rejected ones dashed grey, tracks with velocity arrows.

    ``tracks`` holds ``(centroid_px, velocity_px_per_s)`` pairs; arrows show
    ``vector_s`` seconds of motion.
    """
    img = np.asarray(frame)
    if img.ndim == 2:
        img = np.repeat(img[:, :, None], 3, axis=2)
    img = img.astype(np.uint8).copy()
    for z in zones:
        color, dashed = (YELLOW, False) if z.admitted else (GREY, True)
        draw_circle(img, z.center_px, z.diameter_px / 2.0, color, dashed)
        _put(img, np.array([z.center_px[0]]), np.array([z.center_px[1]]), color)
    for (r, c), (vr, vc) in tracks:
        draw_circle(img, (r, c), 4, RED)
        draw_line(img, (r, c), (r + vr * vector_s, c + vc * vector_s), CYAN)
    return img


def track_vectors(result):
    """(centroid_px, velocity in px/s) for each frozen track, at the scan camera's scale."""
    s = result.scenario.camera.meters_per_px
    return [(e.centroid_px, (e.velocity_mps[1] / s, e.velocity_mps[0] / s)) for e in result.estimates]


# --- figures ----------------------------------------------------------------------

def plot_overview(result, path) -> None:
    fig, ax = plt.subplots(figsize=(6.4, 4.8), dpi=100)
    if result.first_frame is not None:
        ax.imshow(overlay(result.first_frame, result.zones, track_vectors(result)))
    if result.target is not None:
        z = result.target
        ax.add_patch(plt.Circle((z.center_px[1], z.center_px[0]), z.diameter_px / 2, fill=False,
                                ec="lime", lw=1.5))
    ax.set_title(f"{result.scenario.id}: {len(result.zones)} zones, target {getattr(result.target, 'id', '-')}")
    ax.set_axis_off()
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)


PHASE_COLORS = {"Scan": "0.85", "Approach": "tab:blue", "Hold": "tab:orange", "Descend": "tab:green",
                "Landed": "k", "Abort": "tab:red"}


def plot_timeline(result, path, margin_s: float) -> None:
    rows = result.decision_rows
    t = np.array([r["time_s"] for r in rows])
    alt = np.array([r["altitude_m"] for r in rows])
    fig, (a1, a2) = plt.subplots(2, 1, sharex=True, figsize=(7, 5), dpi=100)
    a1.plot(t, alt, "k-", lw=1)
    a1.set_ylabel("altitude (m)")
    start = 0
    for k in range(1, len(rows) + 1):
        if k == len(rows) or rows[k]["phase"] != rows[start]["phase"]:
            a1.axvspan(t[start], t[k - 1] + 1.0 / result.fps, color=PHASE_COLORS.get(rows[start]["phase"], "w"),
                       alpha=0.25, lw=0, label=rows[start]["phase"])
            start = k
    handles, labels = a1.get_legend_handles_labels()
    seen = dict(zip(labels, handles))
    a1.legend(seen.values(), seen.keys(), loc="upper right", fontsize=8)
    est = np.array([np.nan if r["min_margin"] == "" else r["min_margin"] for r in rows], dtype=float)
    tru = np.array([np.nan if r["truth_margin"] == "" else r["truth_margin"] for r in rows], dtype=float)
    a2.plot(t, np.where(np.isfinite(est), est, np.nan), label="estimated")
    a2.plot(t, np.where(np.isfinite(tru), tru, np.nan), "--", label="truth")
    a2.axhline(margin_s, color="r", lw=0.8)
    a2.set_ylabel("margin (s)")
    a2.set_xlabel("time (s)")
    a2.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)


def plot_errors(table: list[dict], path) -> None:
    ids = [r["scenario_id"] for r in table]
    x = np.arange(len(ids))
    fig, ax = plt.subplots(figsize=(max(5, len(ids) * 0.8), 4), dpi=100)
    for i, (key, label) in enumerate([("mean_distance_err_pct", "distance"), ("mean_area_err_pct", "area"),
                                      ("mean_velocity_err_pct", "velocity")]):
        vals = [np.nan if r[key] is None else r[key] for r in table]
        ax.bar(x + (i - 1) * 0.27, vals, 0.27, label=label)
    ax.set_xticks(x, ids, rotation=30, ha="right")
    ax.set_ylabel("error (%)")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)


# --- aggregation -------------------------------------------------------------------

def load_report(run_dir) -> RunReport:
    with open(Path(run_dir) / REPORT_NAME) as fh:
        return RunReport.from_dict(json.load(fh))


def aggregate(reports: list[RunReport]) -> dict:
    """Per-run summary rows plus means over runs that have each value."""
    table = [{"scenario_id": r.scenario_id, "final_phase": r.final_phase,
              "mean_distance_err_pct": r.summary.get("mean_distance_err_pct"),
              "mean_area_err_pct": r.summary.get("mean_area_err_pct"),
              "mean_velocity_err_pct": r.summary.get("mean_velocity_err_pct")} for r in reports]
    return {
        "runs": table,
        "mean_distance_err_pct": _mean([r["mean_distance_err_pct"] for r in table]),
        "mean_area_err_pct": _mean([r["mean_area_err_pct"] for r in table]),
        "mean_velocity_err_pct": _mean([r["mean_velocity_err_pct"] for r in table]),
    }
