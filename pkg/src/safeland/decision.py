"""Drone ETA, the clearance-margin rule, zone selection and the landing phase machine."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

from .camera import CameraModel
from .plz import PLZ
from .tracking import ReachEstimate

CLEARANCE_MARGIN_S = 20.0
SLOW_FACTOR = 0.25
HOLD_ALTITUDE_FLOOR_M = 3.0


class LandingPhase(str, Enum):
    SCAN = "Scan"
    APPROACH = "Approach"
    HOLD = "Hold"
    DESCEND = "Descend"
    LANDED = "Landed"
    ABORT = "Abort"


P = LandingPhase
LEGAL_TRANSITIONS = {
    P.SCAN: {P.APPROACH},
    P.APPROACH: {P.HOLD, P.DESCEND},
    P.HOLD: {P.APPROACH, P.DESCEND},
    P.DESCEND: {P.HOLD, P.LANDED},
    P.LANDED: set(),
    P.ABORT: set(),
}


class IllegalTransition(RuntimeError):
    pass


def check_transition(old: LandingPhase, new: LandingPhase) -> LandingPhase:
    """Return ``new`` if the move is legal (staying put always is); raise otherwise."""
    if new == old or new == P.ABORT or new in LEGAL_TRANSITIONS[old]:
        return new
    raise IllegalTransition(f"{old.value} -> {new.value}")


@dataclass(frozen=True)
class DroneState:
    x_m: float = 0.0
    y_m: float = 0.0
    altitude_m: float = 10.0
    cruise_speed_mps: float = 2.0
    descent_speed_mps: float = 1.0
    phase: LandingPhase = LandingPhase.SCAN
    body_radius_m: float = 0.4

    def __post_init__(self):
        if self.altitude_m < 0:
            raise ValueError("altitude must be non-negative")
        if self.cruise_speed_mps <= 0 or self.descent_speed_mps <= 0:
            raise ValueError("speeds must be positive")

    @property
    def xy(self):
        return (self.x_m, self.y_m)


class Status(str, Enum):
    CLEARED = "Cleared"
    WAIT = "Wait"


@dataclass(frozen=True)
class ClearanceVerdict:
    plz_id: int
    status: Status
    margin_seconds: float
    blocking_object: int | None = None


def drone_eta(drone: DroneState, plz: PLZ, cam: CameraModel | None = None) -> float:
    """Horizontal travel at cruise speed plus vertical descent at descent speed.

    The horizontal leg is the zone's ground position (pixel offset scaled by
    altitude/focal when the frame was taken) measured from the drone's
    current position. ``cam`` is accepted for symmetry with the other
    pixel-based helpers and is not otherwise needed.
    """
    zx, zy = plz.world_xy
    horizontal = math.hypot(zx - drone.x_m, zy - drone.y_m)
    return horizontal / drone.cruise_speed_mps + drone.altitude_m / drone.descent_speed_mps


def clearance_decision(reaches: list[ReachEstimate], t_d: float, margin: float = CLEARANCE_MARGIN_S,
                       plz_id: int | None = None, absolute: bool = True) -> ClearanceVerdict:
    """Clear the zone only if every moving object misses the drone's ETA by more than ``margin``.

    A static object inside the zone blocks it regardless of timing and is
    reported with a margin of 0. With ``absolute=False`` the signed form
    ``T_x - T_d`` is used instead, so objects arriving before the drone block.
    """
    if margin <= 0:
        raise ValueError("margin must be positive")
    if plz_id is None:
        plz_id = reaches[0].plz_id if reaches else -1
    best, blocker = math.inf, None
    for r in reaches:
        if r.static:
            if r.inside_zone:
                return ClearanceVerdict(plz_id, Status.WAIT, 0.0, r.object_id)
            continue
        m = abs(r.t_x_seconds - t_d) if absolute else r.t_x_seconds - t_d
        if m < best:
            best, blocker = m, r.object_id
    if best > margin:
        return ClearanceVerdict(plz_id, Status.CLEARED, best, None)
    return ClearanceVerdict(plz_id, Status.WAIT, best, blocker)


def rank_key(plz: PLZ, drone: DroneState):
    return (drone_eta(drone, plz), -plz.area_m2, plz.id)


def select_plz(verdicts: list[ClearanceVerdict], plzs: list[PLZ], drone: DroneState) -> PLZ | None:
    """Cleared zone with the smallest ETA; ties go to the larger area, then the lower id."""
    cleared = {v.plz_id for v in verdicts if v.status == Status.CLEARED}
    pool = [z for z in plzs if z.id in cleared]
    if not pool:
        return None
    return min(pool, key=lambda z: rank_key(z, drone))


def step_phase(drone: DroneState, verdict: ClearanceVerdict, arrived: bool = False,
               slow_factor: float = SLOW_FACTOR,
               hold_floor_m: float = HOLD_ALTITUDE_FLOOR_M) -> tuple[LandingPhase, float]:
    """Next phase and speed command for one frame.

    The speed is horizontal in Approach/Hold and vertical in Descend. A Wait
    verdict slows the approach to ``slow_factor`` of cruise; a Cleared verdict
    starts the descent once the drone is over the zone. Below ``hold_floor_m``
    a descent is no longer interrupted.
    """
    phase = drone.phase
    cleared = verdict.status == Status.CLEARED
    slow = slow_factor * drone.cruise_speed_mps
    if phase == P.SCAN:
        raise IllegalTransition("step_phase needs a chosen target; move Scan -> Approach first")
    if phase in (P.LANDED, P.ABORT):
        return phase, 0.0
    if phase == P.DESCEND:
        if not cleared and drone.altitude_m > hold_floor_m:
            return check_transition(phase, P.HOLD), slow
        return phase, drone.descent_speed_mps
    if not cleared:
        return check_transition(phase, P.HOLD), slow
    if arrived:
        return check_transition(phase, P.DESCEND), drone.descent_speed_mps
    return check_transition(phase, P.APPROACH), drone.cruise_speed_mps
