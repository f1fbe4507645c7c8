"""End-to-end landing loop over a simulated scenario.

The drone hovers for a short scan: the first frame feeds zone detection, the
following ones feed frame differencing and tracking. After the scan each
track is frozen into a constant-velocity ground estimate, which the decision
rule evaluates every frame while the drone approaches, holds and descends.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np

from .decision import (CLEARANCE_MARGIN_S, HOLD_ALTITUDE_FLOOR_M, SLOW_FACTOR, ClearanceVerdict,
                       DroneState, LandingPhase, check_transition, clearance_decision, drone_eta,
                       rank_key, select_plz, step_phase)
from .descent import DescentConfig, Maneuver, descend_step
from .imaging import CannyParams, canny_edges
from .plz import CLUSTER_RADIUS_PX, MIN_PLZ_AREA_M2, PLZ, plz_candidates
from .sim import (Scenario, ScenarioError, WorldState, depth_to_pgm16, render_depth, render_frame,
                  tof_reading, truth_margin)
from .tracking import (DIFF_THRESHOLD, GATE_PX, MIN_BLOB_PX, STATIC_FLOOR_MPS, VELOCITY_WINDOW,
                       Tracker, estimate_velocity, frame_diff, pixel_velocity, reach, segment_objects)

log = logging.getLogger(__name__)

P = LandingPhase


@dataclass
class PipelineConfig:
    margin_s: float = CLEARANCE_MARGIN_S
    absolute_margin: bool = True
    min_area_m2: float = MIN_PLZ_AREA_M2
    fps: int | None = None  # None: the scenario camera's rate
    scan_frames: int = 31
    velocity_window: int = VELOCITY_WINDOW
    min_track_len: int = 3
    diff_threshold: float = DIFF_THRESHOLD
    min_blob_px: int = MIN_BLOB_PX
    bridge_px: float = 30.0  # joins the two crescents of a disc up to ~60 px across
    gate_px: float = GATE_PX
    max_missed: int = 5
    static_floor_mps: float = STATIC_FLOOR_MPS
    cluster_radius_px: float = CLUSTER_RADIUS_PX
    canny_low: float = 50.0
    canny_high: float = 150.0
    canny_sigma: float = 1.4
    slow_factor: float = SLOW_FACTOR
    hold_floor_m: float = HOLD_ALTITUDE_FLOOR_M
    arrive_tol_m: float = 0.05
    tof_rel_tol: float = 0.05
    touchdown_m: float = 0.3
    nudge_speed_mps: float = 0.2

    @classmethod
    def from_overrides(cls, overrides: dict | None = None, base: "PipelineConfig | None" = None):
        base = base or cls()
        names = {f.name for f in dataclasses.fields(cls)}
        clean = {}
        for k, v in (overrides or {}).items():
            if k not in names:
                raise ScenarioError(f"unknown pipeline setting {k!r}", f"pipeline/{k}")
            if v is not None:
                clean[k] = v
        return replace(base, **clean)

    @property
    def canny(self) -> CannyParams:
        return CannyParams(self.canny_low, self.canny_high, self.canny_sigma)

    @property
    def descent(self) -> DescentConfig:
        return DescentConfig(tof_rel_tol=self.tof_rel_tol, touchdown_m=self.touchdown_m,
                             nudge_speed_mps=self.nudge_speed_mps)


@dataclass
class ObjectEstimate:
    """Ground-plane constant-velocity model of one track, frozen at the end of the scan."""
    track_id: int
    position_m: np.ndarray  # at time t0_s
    t0_s: float
    velocity_mps: np.ndarray
    speed_mps: float
    centroid_px: tuple[float, float]

    def position(self, t_s: float) -> np.ndarray:
        return self.position_m + self.velocity_mps * (t_s - self.t0_s)


@dataclass
class MissionResult:
    scenario: Scenario
    config: PipelineConfig
    fps: int
    zones: list[PLZ] = field(default_factory=list)
    estimates: list[ObjectEstimate] = field(default_factory=list)
    decision_rows: list[dict] = field(default_factory=list)
    descent_rows: list[dict] = field(default_factory=list)
    track_rows: list[dict] = field(default_factory=list)
    transitions: list[tuple[int, str, str]] = field(default_factory=list)
    target: PLZ | None = None
    drone: DroneState | None = None
    reason: str = ""
    first_frame: np.ndarray | None = None
    edges: np.ndarray | None = None
    path: list[tuple[float, float, float]] = field(default_factory=list)

    @property
    def final_phase(self) -> LandingPhase:
        return self.drone.phase

    @property
    def total_time_s(self) -> float:
        return self.decision_rows[-1]["time_s"] if self.decision_rows else 0.0


def _move_toward(drone: DroneState, xy, dist: float) -> DroneState:
    dx, dy = xy[0] - drone.x_m, xy[1] - drone.y_m
    d = math.hypot(dx, dy)
    if d <= dist or d == 0:
        return replace(drone, x_m=float(xy[0]), y_m=float(xy[1]))
    return replace(drone, x_m=drone.x_m + dx / d * dist, y_m=drone.y_m + dy / d * dist)


def freeze_tracks(tracker: Tracker, drone: DroneState, cam, fps: int, config: PipelineConfig):
    """Turn pixel tracks into ground-plane position/velocity estimates."""
    out = []
    s = cam.meters_per_px
    for t in tracker.tracks:
        if len(t.centroid_history) < config.min_track_len:
            continue
        speed = estimate_velocity(t, fps, cam, config.velocity_window)
        vr, vc = pixel_velocity(t, config.velocity_window)
        row, col = t.centroid
        dx, dy = cam.pixel_to_offset(row, col)
        # a difference-image centroid sits halfway between the two frames
        t0 = (t.last_frame - 0.5) / fps
        out.append(ObjectEstimate(
            track_id=t.id,
            position_m=np.array([drone.x_m + float(dx), drone.y_m + float(dy)]),
            t0_s=t0,
            velocity_mps=np.array([vc * fps * s, vr * fps * s]),
            speed_mps=speed,
            centroid_px=(row, col),
        ))
    return out


def evaluate_zones(zones, estimates, drone, t_s, config) -> dict[int, tuple[ClearanceVerdict, float]]:
    verdicts = {}
    for z in zones:
        zx, zy = z.world_xy
        reaches = []
        for o in estimates:
            px, py = o.position(t_s)
            reaches.append(reach(o.track_id, z.id, math.hypot(px - zx, py - zy), o.speed_mps,
                                 z.radius_m, config.static_floor_mps))
        t_d = drone_eta(drone, z)
        verdicts[z.id] = (clearance_decision(reaches, t_d, config.margin_s, z.id, config.absolute_margin), t_d)
    return verdicts


def run_mission(scenario: Scenario, config: PipelineConfig | None = None,
                frame_sink=None) -> MissionResult:
    """Fly one scenario from scan to touchdown (or abort).

    ``frame_sink(name, image)`` receives the scan frames, the edge map and
    periodic depth frames when given.
    """
    config = config or PipelineConfig.from_overrides(scenario.pipeline)
    fps = int(config.fps or scenario.fps)
    dt = Fraction(1, fps)
    n_max = int(round(scenario.duration_s * fps))
    res = MissionResult(scenario, config, fps)
    drone = scenario.drone
    tracker = Tracker(config.gate_px, config.max_missed)
    prev = None
    rejected: set[int] = set()
    target = None
    decide_from = max(1, config.scan_frames - 1)

    def set_phase(k, d, new):
        if new != d.phase:
            check_transition(d.phase, new)
            res.transitions.append((k, d.phase.value, new.value))
            return replace(d, phase=new)
        return d

    for k in range(n_max + 1):
        t = Fraction(k, fps)
        t_s = float(t)
        world = WorldState(scenario, t, drone)
        cam = world.camera
        res.path.append((drone.x_m, drone.y_m, drone.altitude_m))
        row = {"frame_index": k, "time_s": t_s, "x_m": drone.x_m, "y_m": drone.y_m,
               "altitude_m": drone.altitude_m}

        if k <= decide_from:
            frame = render_frame(world)
            if frame_sink is not None:
                frame_sink(f"frame_{k:05d}.pgm", frame)
            if k == 0:
                edges = canny_edges(frame, config.canny)
                zones = plz_candidates(edges, cam, config.min_area_m2,
                                       cluster_radius_px=config.cluster_radius_px)
                for z in zones:
                    z.origin_m = drone.xy
                res.zones, res.first_frame, res.edges = zones, frame, edges
                if frame_sink is not None:
                    frame_sink("edges_00000.pgm", edges * 255)
            else:
                mask = frame_diff(prev, frame, config.diff_threshold)
                dets = segment_objects(mask, config.min_blob_px, config.bridge_px)
                tracker.associate(dets, k)
            prev = frame
            if k < decide_from:
                row.update(phase=drone.phase.value, target_plz_id="", t_d="", min_margin="",
                           verdict="", truth_margin="")
                res.decision_rows.append(row)
                continue
            res.estimates = freeze_tracks(tracker, drone, cam, fps, config)
            for o in res.estimates:
                res.track_rows.append({"kind": "track", "frame_index": k, "track_id": o.track_id,
                                       "centroid_row": o.centroid_px[0], "centroid_col": o.centroid_px[1],
                                       "velocity_mps": o.speed_mps, "plz_id": "", "distance_m": "",
                                       "t_x_s": ""})

        admitted = [z for z in res.zones if z.admitted and z.id not in rejected]
        if not admitted:
            drone = set_phase(k, drone, P.ABORT)
            res.reason = "no_plz"
            row.update(phase=drone.phase.value, target_plz_id="", t_d="", min_margin="", verdict="",
                       truth_margin="")
            res.decision_rows.append(row)
            break

        verdicts = evaluate_zones(admitted, res.estimates, drone, t_s, config)
        if k == decide_from:
            for z in admitted:
                for o in res.estimates:
                    px, py = o.position(t_s)
                    r = reach(o.track_id, z.id, math.hypot(px - z.world_xy[0], py - z.world_xy[1]),
                              o.speed_mps, z.radius_m, config.static_floor_mps)
                    res.track_rows.append({"kind": "reach", "frame_index": k, "track_id": o.track_id,
                                           "centroid_row": "", "centroid_col": "", "velocity_mps": "",
                                           "plz_id": z.id, "distance_m": r.distance_m,
                                           "t_x_s": "" if r.t_x_seconds is None else r.t_x_seconds})
        if target is None:
            target = select_plz([v for v, _ in verdicts.values()], admitted, drone)
            if target is None:
                target = min(admitted, key=lambda z: rank_key(z, drone))
            drone = set_phase(k, drone, P.APPROACH)
            res.target = target
        verdict, t_d = verdicts[target.id]
        tx, ty = target.world_xy
        truth = truth_margin(world, (tx, ty), t_d, config.absolute_margin)
        row.update(target_plz_id=target.id, t_d=t_d, min_margin=verdict.margin_seconds,
                   verdict=verdict.status.value, truth_margin=truth)

        arrived = math.hypot(tx - drone.x_m, ty - drone.y_m) <= config.arrive_tol_m
        new_phase, speed = step_phase(drone, verdict, arrived, config.slow_factor, config.hold_floor_m)
        drone = set_phase(k, drone, new_phase)
        row["phase"] = drone.phase.value
        res.decision_rows.append(row)

        if drone.phase in (P.APPROACH, P.HOLD):
            drone = _move_toward(drone, (tx, ty), speed * float(dt))
        elif drone.phase == P.DESCEND:
            depth = render_depth(world)
            tof = tof_reading(world)
            anchor = (tx, ty, max(0.0, target.radius_m - drone.body_radius_m))
            step_res = descend_step(drone, depth, tof, float(dt), config.descent, anchor)
            rep = step_res.report
            res.descent_rows.append({
                "tick": k, "altitude_m": drone.altitude_m, "x_m": drone.x_m, "y_m": drone.y_m,
                **{f"q{i}_m": ("" if a is None else a) for i, a in enumerate(rep.averages)},
                "chosen": "" if rep.chosen is None else rep.chosen,
                "tof_range_m": tof.range_m, "tof_saturated": int(tof.saturated),
                "consistency": "" if step_res.consistency is None else step_res.consistency.value,
                "maneuver": step_res.maneuver.value,
            })
            if frame_sink is not None and k % fps == 0:
                frame_sink(f"depth_{k:05d}.pgm", depth_to_pgm16(depth))
            if step_res.maneuver == Maneuver.NO_SAFE_QUADRANT:
                rejected.add(target.id)
                target = None
            if step_res.drone.phase != drone.phase:
                res.transitions.append((k, drone.phase.value, step_res.drone.phase.value))
            drone = step_res.drone
            if drone.phase == P.LANDED:
                res.path.append((drone.x_m, drone.y_m, drone.altitude_m))
                res.reason = "landed"
                break
    else:
        drone = set_phase(n_max, drone, P.ABORT)
        res.reason = "timeout"

    res.drone = drone
    log.info("scenario %s finished: %s (%s)", scenario.id, drone.phase.value, res.reason)
    return res
