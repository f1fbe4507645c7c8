"""Moving-object detection by frame differencing, tracking and time-to-reach.

The camera is assumed to hover while frames are compared; no ego-motion
compensation is attempted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .camera import CameraModel
from .plz import PLZ, px_to_meters

DIFF_THRESHOLD = 25
MIN_BLOB_PX = 50
GATE_PX = 40.0
VELOCITY_WINDOW = 10
STATIC_FLOOR_MPS = 0.05


class VelocityUnavailable(ValueError):
    """Track history too short to fit a velocity."""


@dataclass
class Detection:
    centroid: tuple[float, float]  # (row, col)
    bbox: tuple[int, int, int, int]  # row0, col0, row1, col1 (exclusive)
    area_px: int


@dataclass
class TrackedObject:
    id: int
    centroid_history: list = field(default_factory=list)  # [((row, col), frame_index)]
    bbox: tuple[int, int, int, int] = (0, 0, 0, 0)
    velocity_mps: float | None = None
    velocity_dir: tuple[float, float] = (0.0, 0.0)  # unit (drow, dcol)
    missed: int = 0

    @property
    def centroid(self):
        return self.centroid_history[-1][0]

    @property
    def last_frame(self):
        return self.centroid_history[-1][1]


@dataclass(frozen=True)
class ReachEstimate:
    object_id: int
    plz_id: int
    distance_m: float
    t_x_seconds: float | None  # None for a static object
    static: bool = False
    inside_zone: bool = False


def frame_diff(prev: np.ndarray, curr: np.ndarray, threshold: float = DIFF_THRESHOLD) -> np.ndarray:
    """Changed-pixel mask: max-over-channels absolute difference above ``threshold``."""
    prev = np.asarray(prev)
    curr = np.asarray(curr)
    if prev.shape != curr.shape:
        raise ValueError(f"frame sizes differ: {prev.shape} vs {curr.shape}")
    if not 0 < threshold < 255:
        raise ValueError("threshold must lie in (0, 255)")
    d = np.abs(prev.astype(np.int16) - curr.astype(np.int16))
    if d.ndim == 3:
        d = d.max(axis=2)
    return (d > threshold).astype(np.uint8)


def segment_objects(mask: np.ndarray, min_blob_px: int = MIN_BLOB_PX, bridge_px: float = 0) -> list[Detection]:
    """Group changed pixels into blobs.

    Blobs are 8-connected components of the mask. With ``bridge_px > 0``
    pixels closer than ``2 * bridge_px`` are grouped too, which joins the
    leading and trailing crescents a moving disc leaves in a difference
    image. Area and centroid count only the original mask pixels.
    """
    if min_blob_px < 1:
        raise ValueError("min_blob_px must be at least 1")
    mask = np.asarray(mask) > 0
    grouped = mask
    if bridge_px > 0 and mask.any():
        grouped = ndimage.distance_transform_edt(~mask) <= bridge_px
    labels, n = ndimage.label(grouped, structure=np.ones((3, 3), dtype=bool))
    labels = np.where(mask, labels, 0)
    out = []
    for k in range(1, n + 1):
        rr, cc = np.nonzero(labels == k)
        if len(rr) < min_blob_px:
            continue
        out.append(Detection(
            centroid=(float(rr.mean()), float(cc.mean())),
            bbox=(int(rr.min()), int(cc.min()), int(rr.max()) + 1, int(cc.max()) + 1),
            area_px=int(len(rr)),
        ))
    return out


class Tracker:
    """Greedy nearest-centroid tracker. Single owner, advanced one frame at a time."""

    def __init__(self, gate_px: float = GATE_PX, max_missed: int = 5):
        if gate_px <= 0:
            raise ValueError("gate_px must be positive")
        self.gate_px = gate_px
        self.max_missed = max_missed
        self.tracks: list[TrackedObject] = []
        self.retired: list[TrackedObject] = []
        self._next_id = 0

    def associate(self, detections: list[Detection], frame_index: int) -> list[TrackedObject]:
        pairs = []
        for ti, t in enumerate(self.tracks):
            for di, d in enumerate(detections):
                dist = math.dist(t.centroid, d.centroid)
                if dist <= self.gate_px:
                    pairs.append((dist, ti, di))
        pairs.sort()
        used_t, used_d = set(), set()
        for dist, ti, di in pairs:
            if ti in used_t or di in used_d:
                continue
            used_t.add(ti)
            used_d.add(di)
            t, d = self.tracks[ti], detections[di]
            t.centroid_history.append((d.centroid, frame_index))
            t.bbox = d.bbox
            t.missed = 0

        alive = []
        for ti, t in enumerate(self.tracks):
            if ti not in used_t:
                t.missed += 1
            if t.missed > self.max_missed:
                self.retired.append(t)
            else:
                alive.append(t)
        for di, d in enumerate(detections):
            if di not in used_d:
                alive.append(TrackedObject(self._next_id, [(d.centroid, frame_index)], d.bbox))
                self._next_id += 1
        self.tracks = alive
        return self.tracks


def associate(tracks, detections, gate_px, frame_index, tracker: Tracker | None = None):
    """Functional wrapper around :meth:`Tracker.associate`."""
    tracker = tracker or Tracker(gate_px)
    tracker.tracks = list(tracks)
    if tracks:
        tracker._next_id = max(tracker._next_id, max(t.id for t in tracks) + 1)
    return tracker.associate(detections, frame_index)


def pixel_velocity(track: TrackedObject, window: int = VELOCITY_WINDOW) -> tuple[float, float]:
    """Least-squares (drow, dcol) per frame over the trailing window."""
    hist = track.centroid_history[-(window + 1):] if window else track.centroid_history
    if len(hist) < 2:
        raise VelocityUnavailable(f"track {track.id} has {len(hist)} observation(s)")
    f = np.array([h[1] for h in hist], dtype=np.float64)
    pts = np.array([h[0] for h in hist], dtype=np.float64)
    fc = f - f.mean()
    denom = np.sum(fc * fc)
    slope = (fc @ (pts - pts.mean(axis=0))) / denom
    return float(slope[0]), float(slope[1])


def estimate_velocity(track: TrackedObject, fps: float, cam: CameraModel,
                      window: int = VELOCITY_WINDOW) -> float:
    """Ground speed in m/s from the pixel shift rate; also sets the track's velocity fields."""
    if fps <= 0:
        raise ValueError("fps must be positive")
    vr, vc = pixel_velocity(track, window)
    speed_px = math.hypot(vr, vc)
    track.velocity_mps = float(px_to_meters(speed_px * fps, cam))
    track.velocity_dir = (vr / speed_px, vc / speed_px) if speed_px > 0 else (0.0, 0.0)
    return track.velocity_mps


def reach(object_id: int, plz_id: int, distance_m: float, speed_mps: float,
          zone_radius_m: float = 0.0, static_floor: float = STATIC_FLOOR_MPS) -> ReachEstimate:
    """Time for an object to cover ``distance_m`` at ``speed_mps``; slow objects are static."""
    inside = distance_m < zone_radius_m
    if speed_mps < static_floor:
        return ReachEstimate(object_id, plz_id, distance_m, None, True, inside)
    return ReachEstimate(object_id, plz_id, distance_m, distance_m / speed_mps, False, inside)


def time_to_reach(track: TrackedObject, plz: PLZ, cam: CameraModel,
                  static_floor: float = STATIC_FLOOR_MPS) -> ReachEstimate:
    """Straight-line distance from the track's latest centroid to the zone center, over speed."""
    if track.velocity_mps is None:
        raise VelocityUnavailable(f"track {track.id} has no velocity estimate")
    d_px = math.dist(track.centroid, plz.center_px)
    return reach(track.id, plz.id, float(px_to_meters(d_px, cam)), track.velocity_mps,
                 plz.radius_m, static_floor)
