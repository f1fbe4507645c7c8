"""Vision-based safe landing for small UAVs: landing-zone detection, moving-object
clearance, quadrant-depth descent and a deterministic scenario simulator."""

from .camera import CameraModel
from .decision import ClearanceVerdict, DroneState, LandingPhase, Status, clearance_decision, drone_eta
from .descent import DepthFrame, TofReading, descend_step, pixel_depth_expected
from .imaging import CannyParams, canny_edges
from .plz import PLZ, cluster_contours, detect_plz, polygon_gap_px, zone_area
from .sim import Scenario, ScenarioError, WorldState, load_scenario

__version__ = "0.1.0"

__all__ = [
    "CameraModel", "ClearanceVerdict", "DroneState", "LandingPhase", "Status", "clearance_decision",
    "drone_eta", "DepthFrame", "TofReading", "descend_step", "pixel_depth_expected", "CannyParams",
    "canny_edges", "PLZ", "cluster_contours", "detect_plz", "polygon_gap_px", "zone_area", "Scenario",
    "ScenarioError", "WorldState", "load_scenario",
]
