"""Quadrant-depth descent control with a ToF cross-check.

Each depth frame is split into four quadrants (top-left, top-right,
bottom-left, bottom-right). The deepest quadrant is the emptiest and the
drone drifts toward it while descending. A ToF range that disagrees with the
flat-ground expectation means something sits directly below, and the drone
sidesteps instead of descending.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .camera import CameraModel
from .decision import DroneState, LandingPhase, check_transition

TOF_MAX_RANGE_M = 60.0


class NoSafeQuadrant(RuntimeError):
    pass


class Consistency(str, Enum):
    CONSISTENT = "Consistent"
    OBSTACLE_BELOW = "ObstacleBelow"


class Maneuver(str, Enum):
    DESCEND = "descend"
    NUDGE = "descend+nudge"
    RELOCATE = "relocate"
    TOUCHDOWN = "touchdown"
    NO_SAFE_QUADRANT = "no_safe_quadrant"


@dataclass
class DepthFrame:
    depth: np.ndarray  # (H, W) metres; non-finite or <= 0 means invalid
    camera: CameraModel

    @property
    def shape(self):
        return self.depth.shape


@dataclass(frozen=True)
class TofReading:
    range_m: float
    max_range_m: float = TOF_MAX_RANGE_M
    saturated: bool = False


@dataclass(frozen=True)
class QuadrantReport:
    averages: tuple  # four floats, None where a quadrant has no valid pixel
    chosen: int | None
    valid_fraction: tuple
    level: bool = False  # all averages within tolerance of each other


@dataclass(frozen=True)
class DescentConfig:
    tof_rel_tol: float = 0.05
    level_rel_tol: float = 0.01
    touchdown_m: float = 0.3
    nudge_speed_mps: float = 0.2
    nadir_window_px: int = 5


@dataclass(frozen=True)
class DescentStep:
    drone: DroneState
    maneuver: Maneuver
    report: QuadrantReport
    consistency: Consistency | None
    nadir_depth_m: float | None
    expected_m: float


def quadrant_bounds(height: int, width: int):
    """Row/col slices of the four quadrants; odd sizes give the extra pixel to the bottom/right."""
    if height < 2 or width < 2:
        raise ValueError(f"frame {height}x{width} too small to split into quadrants")
    r, c = height // 2, width // 2
    top, bottom = slice(0, r), slice(r, height)
    left, right = slice(0, c), slice(c, width)
    return [(top, left), (top, right), (bottom, left), (bottom, right)]


def split_quadrants(frame) -> list[np.ndarray]:
    depth = frame.depth if isinstance(frame, DepthFrame) else np.asarray(frame)
    return [depth[rs, cs] for rs, cs in quadrant_bounds(*depth.shape)]


def quadrant_index(row: int, col: int, height: int, width: int) -> int:
    quadrant_bounds(height, width)
    return 2 * int(row >= height // 2) + int(col >= width // 2)


def pixel_depth_expected(pixel, altitude_m: float, cam: CameraModel) -> float:
    """Flat-ground depth seen along a pixel's ray: ``H / cos(theta)``.

    theta is the angle off nadir, ``atan(r / f)`` for radial offset ``r``
    from the principal point, so ``1 / cos(theta) = hypot(f, r) / f``.
    """
    if altitude_m <= 0:
        raise ValueError("altitude must be positive")
    cr, cc = cam.principal_point
    r = np.hypot(np.asarray(pixel[0], dtype=np.float64) - cr, np.asarray(pixel[1], dtype=np.float64) - cc)
    return altitude_m * np.hypot(cam.focal_px, r) / cam.focal_px


def avg_quadrant_depth(quadrant: np.ndarray) -> float | None:
    """Mean over valid pixels, or None when the quadrant has none."""
    q = np.asarray(quadrant, dtype=np.float64)
    valid = np.isfinite(q) & (q > 0)
    if not valid.any():
        return None
    return float(q[valid].mean())


def choose_quadrant(averages) -> int:
    """Index of the deepest quadrant; ties go to the lowest index."""
    best, idx = -math.inf, None
    for i, a in enumerate(averages):
        if a is not None and a > best:
            best, idx = a, i
    if idx is None:
        raise NoSafeQuadrant("no quadrant has a valid depth")
    return idx


def quadrant_report(frame: DepthFrame, level_rel_tol: float = 0.01) -> QuadrantReport:
    quads = split_quadrants(frame)
    avgs = tuple(avg_quadrant_depth(q) for q in quads)
    frac = tuple(float(np.mean(np.isfinite(q) & (q > 0))) for q in quads)
    try:
        chosen = choose_quadrant(avgs)
    except NoSafeQuadrant:
        return QuadrantReport(avgs, None, frac, False)
    vals = [a for a in avgs if a is not None]
    level = len(vals) == 4 and (max(vals) - min(vals)) <= level_rel_tol * max(vals)
    return QuadrantReport(avgs, chosen, frac, level)


def tof_consistency(tof: TofReading, expected_nadir_depth: float, rel_tol: float = 0.05) -> Consistency:
    """Compare the ToF range with the expected nadir depth.

    A saturated sensor cannot report anything closer than its limit, so it
    is taken as consistent (the caller records the saturation).
    """
    if not 0 < rel_tol < 1:
        raise ValueError("rel_tol must lie in (0, 1)")
    if tof.saturated:
        return Consistency.CONSISTENT
    if abs(tof.range_m - expected_nadir_depth) <= rel_tol * expected_nadir_depth:
        return Consistency.CONSISTENT
    return Consistency.OBSTACLE_BELOW


def quadrant_direction(index: int, cam: CameraModel) -> tuple[float, float]:
    """Unit ground vector (x, y) from nadir toward a quadrant's center."""
    (rs, cs) = quadrant_bounds(cam.height_px, cam.width_px)[index]
    row = (rs.start + rs.stop - 1) / 2.0
    col = (cs.start + cs.stop - 1) / 2.0
    dx, dy = cam.pixel_to_offset(row, col)
    n = math.hypot(dx, dy)
    return float(dx / n), float(dy / n)


def nadir_depth(frame: DepthFrame, window: int) -> float | None:
    h, w = frame.shape
    r0, c0 = max(0, (h - window) // 2), max(0, (w - window) // 2)
    return avg_quadrant_depth(frame.depth[r0:r0 + window, c0:c0 + window])


def descend_step(drone: DroneState, depth: DepthFrame, tof: TofReading, dt: float,
                 config: DescentConfig = DescentConfig(), anchor=None) -> DescentStep:
    """One control tick of the descent.

    ``anchor`` is an optional ``(x, y, max_offset_m)`` keeping the gentle
    quadrant nudges inside the landing circle; relocations away from an
    obstacle below are not limited by it.
    """
    if drone.phase != LandingPhase.DESCEND:
        raise ValueError(f"descend_step called in phase {drone.phase.value}")
    cam = depth.camera
    expected = float(pixel_depth_expected(cam.principal_point, drone.altitude_m, cam))
    report = quadrant_report(depth, config.level_rel_tol)
    seen = nadir_depth(depth, config.nadir_window_px)
    if report.chosen is None:
        held = replace(drone, phase=check_transition(drone.phase, LandingPhase.HOLD))
        return DescentStep(held, Maneuver.NO_SAFE_QUADRANT, report, None, seen, expected)

    consistency = tof_consistency(tof, expected, config.tof_rel_tol)
    ux, uy = quadrant_direction(report.chosen, cam)
    if consistency == Consistency.OBSTACLE_BELOW:
        step = cam.width_px / 4.0 * cam.meters_per_px  # half a quadrant's ground width
        moved = replace(drone, x_m=drone.x_m + ux * step, y_m=drone.y_m + uy * step)
        return DescentStep(moved, Maneuver.RELOCATE, report, consistency, seen, expected)

    x, y = drone.x_m, drone.y_m
    maneuver = Maneuver.DESCEND
    if not report.level:
        x += ux * config.nudge_speed_mps * dt
        y += uy * config.nudge_speed_mps * dt
        if anchor is not None:
            ax, ay, max_off = anchor
            off = math.hypot(x - ax, y - ay)
            if off > max_off:
                s = max_off / off if off > 0 else 0.0
                x, y = ax + (x - ax) * s, ay + (y - ay) * s
        maneuver = Maneuver.NUDGE
    alt = drone.altitude_m - drone.descent_speed_mps * dt
    if alt <= config.touchdown_m:
        landed = replace(drone, x_m=x, y_m=y, altitude_m=0.0,
                         phase=check_transition(drone.phase, LandingPhase.LANDED))
        return DescentStep(landed, Maneuver.TOUCHDOWN, report, consistency, seen, expected)
    return DescentStep(replace(drone, x_m=x, y_m=y, altitude_m=alt), maneuver, report, consistency, seen, expected)
