"""Deterministic synthetic world with exact ground truth.

The ground plane holds polygonal obstacles (with heights) and disc-shaped
movers travelling at constant velocity. A nadir pinhole camera at the drone
renders intensity and depth frames; a ToF ray measures the range straight
down. World x runs along image columns, world y along image rows.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path

import jsonschema
import numpy as np
import shapely
from scipy.optimize import minimize
from shapely.geometry import Point, Polygon

from .camera import CameraModel
from .decision import DroneState
from .descent import TOF_MAX_RANGE_M, DepthFrame, TofReading

SCHEMA_VERSION = 1
KMH_PER_MPS = 3.6
SUPERSAMPLE = 4

_POINT = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}

SCENARIO_SCHEMA = {
    "type": "object",
    "required": ["schema_version", "id", "camera", "drone"],
    "additionalProperties": False,
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "id": {"type": "string", "minLength": 1},
        "description": {"type": "string"},
        "seed": {"type": "integer"},
        "duration_s": {"type": "number", "exclusiveMinimum": 0},
        "world": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "extent_m": {"type": "array", "items": _POINT, "minItems": 2, "maxItems": 2},
            },
        },
        "ground": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "intensity": {"type": "number", "minimum": 0, "maximum": 255},
                "texture_amplitude": {"type": "number", "minimum": 0, "maximum": 20},
                "texture_cell_m": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "camera": {
            "type": "object",
            "required": ["focal_px"],
            "additionalProperties": False,
            "properties": {
                "focal_px": {"type": "number", "exclusiveMinimum": 0},
                "width_px": {"type": "integer", "minimum": 8},
                "height_px": {"type": "integer", "minimum": 8},
                "fps": {"type": "integer", "minimum": 1},
            },
        },
        "drone": {
            "type": "object",
            "required": ["position_m"],
            "additionalProperties": False,
            "properties": {
                "position_m": {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3},
                "cruise_speed_mps": {"type": "number", "exclusiveMinimum": 0},
                "descent_speed_mps": {"type": "number", "exclusiveMinimum": 0},
                "body_radius_m": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "obstacles": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["footprint_m"],
                "additionalProperties": False,
                "properties": {
                    "footprint_m": {"type": "array", "items": _POINT, "minItems": 3},
                    "height_m": {"type": "number", "minimum": 0},
                    "contrast": {"type": "number", "minimum": -255, "maximum": 255},
                },
            },
        },
        "movers": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["start_m"],
                "additionalProperties": False,
                "properties": {
                    "start_m": _POINT,
                    "velocity_mps": _POINT,
                    "speed_kmh": {"type": "number", "minimum": 0},
                    "heading_deg": {"type": "number"},
                    "radius_m": {"type": "number", "exclusiveMinimum": 0},
                    "contrast": {"type": "number", "minimum": -255, "maximum": 255},
                },
                "oneOf": [
                    {"required": ["velocity_mps"], "not": {"required": ["speed_kmh"]}},
                    {"required": ["speed_kmh"], "not": {"required": ["velocity_mps"]}},
                ],
            },
        },
        "sensors": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"depth_noise_m": {"type": "number", "minimum": 0}},
        },
        "pipeline": {"type": "object"},
    },
}


class ScenarioError(ValueError):
    """Scenario document does not match the schema; ``path`` names the field."""

    def __init__(self, message, path=""):
        super().__init__(f"{path or '<root>'}: {message}")
        self.path = path


@dataclass
class Obstacle:
    footprint: np.ndarray  # (n, 2) metres
    height_m: float = 2.0
    contrast: float = 90.0

    def __post_init__(self):
        self.footprint = np.asarray(self.footprint, dtype=np.float64)
        self.polygon = Polygon(self.footprint)
        shapely.prepare(self.polygon)


@dataclass
class Mover:
    start: np.ndarray
    velocity: np.ndarray
    radius_m: float = 0.5
    contrast: float = -90.0

    def __post_init__(self):
        self.start = np.asarray(self.start, dtype=np.float64)
        self.velocity = np.asarray(self.velocity, dtype=np.float64)

    @property
    def speed_mps(self) -> float:
        return float(math.hypot(*self.velocity))

    def position(self, t) -> np.ndarray:
        return self.start + self.velocity * float(t)


@dataclass
class Scenario:
    id: str
    camera: CameraModel  # altitude is the drone's start altitude
    fps: int
    drone: DroneState
    obstacles: list = field(default_factory=list)
    movers: list = field(default_factory=list)
    seed: int = 0
    duration_s: float = 120.0
    extent_m: tuple = ((-100.0, 100.0), (-100.0, 100.0))
    ground_intensity: float = 128.0
    texture_amplitude: float = 3.0
    texture_cell_m: float = 0.05
    depth_noise_m: float = 0.0
    pipeline: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict, repr=False)

    @classmethod
    def from_dict(cls, doc: dict) -> "Scenario":
        validator = jsonschema.Draft202012Validator(SCENARIO_SCHEMA)
        errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
        if errors:
            err = errors[0]
            path = "/".join(str(p) for p in err.absolute_path)
            raise ScenarioError(err.message, path)
        cam = doc["camera"]
        d = doc["drone"]
        x, y, alt = d["position_m"]
        if alt <= 0:
            raise ScenarioError("drone altitude must be positive", "drone/position_m/2")
        drone = DroneState(
            x_m=float(x), y_m=float(y), altitude_m=float(alt),
            cruise_speed_mps=d.get("cruise_speed_mps", 2.0),
            descent_speed_mps=d.get("descent_speed_mps", 1.0),
            body_radius_m=d.get("body_radius_m", 0.4),
        )
        obstacles = [
            Obstacle(o["footprint_m"], o.get("height_m", 2.0), o.get("contrast", 90.0))
            for o in doc.get("obstacles", [])
        ]
        movers = []
        for m in doc.get("movers", []):
            if "velocity_mps" in m:
                v = m["velocity_mps"]
            else:
                sp = m["speed_kmh"] / KMH_PER_MPS
                a = math.radians(m.get("heading_deg", 0.0))
                v = [sp * math.cos(a), sp * math.sin(a)]
            movers.append(Mover(m["start_m"], v, m.get("radius_m", 0.5), m.get("contrast", -90.0)))
        ground = doc.get("ground", {})
        scen = cls(
            id=doc["id"],
            camera=CameraModel(float(cam["focal_px"]), float(alt),
                               int(cam.get("width_px", 640)), int(cam.get("height_px", 480))),
            fps=int(cam.get("fps", 30)),
            drone=drone,
            obstacles=obstacles,
            movers=movers,
            seed=int(doc.get("seed", 0)),
            duration_s=float(doc.get("duration_s", 120.0)),
            extent_m=tuple(tuple(map(float, r)) for r in doc.get("world", {}).get(
                "extent_m", [[-100.0, 100.0], [-100.0, 100.0]])),
            ground_intensity=float(ground.get("intensity", 128.0)),
            texture_amplitude=float(ground.get("texture_amplitude", 3.0)),
            texture_cell_m=float(ground.get("texture_cell_m", 0.05)),
            depth_noise_m=float(doc.get("sensors", {}).get("depth_noise_m", 0.0)),
            pipeline=dict(doc.get("pipeline", {})),
            raw=doc,
        )
        (x0, x1), (y0, y1) = scen.extent_m
        for i, mv in enumerate(scen.movers):
            for t in (0.0, scen.duration_s):
                px, py = mv.position(t)
                if not (x0 <= px <= x1 and y0 <= py <= y1):
                    raise ScenarioError(f"mover leaves the world extent by t={t:g} s", f"movers/{i}")
        return scen

    def with_seed(self, seed: int) -> "Scenario":
        doc = dict(self.raw)
        doc["seed"] = int(seed)
        return Scenario.from_dict(doc)

    def initial_world(self) -> "WorldState":
        return WorldState(self, Fraction(0), self.drone)


def load_scenario(path) -> Scenario:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"invalid JSON: {exc}") from exc
    return Scenario.from_dict(doc)


@dataclass(frozen=True)
class WorldState:
    scenario: Scenario
    time: Fraction
    drone: DroneState

    @property
    def time_s(self) -> float:
        return float(self.time)

    @property
    def mover_positions(self) -> list[np.ndarray]:
        return [m.position(self.time) for m in self.scenario.movers]

    @property
    def camera(self) -> CameraModel:
        return self.scenario.camera.at_altitude(self.drone.altitude_m)


def step(world: WorldState, dt) -> WorldState:
    """Advance time by ``dt``; movers follow the closed-form constant-velocity path."""
    dt = Fraction(dt)
    if dt <= 0:
        raise ValueError("dt must be positive")
    return replace(world, time=world.time + dt)


# --- rendering ----------------------------------------------------------------

def _mix64(x):
    x = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    x = (x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return x ^ (x >> np.uint64(31))


def ground_texture(xs, ys, seed: int, amplitude: float, cell_m: float) -> np.ndarray:
    """World-anchored value noise in [-amplitude, amplitude], piecewise constant per cell."""
    ix = np.floor(np.asarray(xs) / cell_m).astype(np.int64).view(np.uint64)
    iy = np.floor(np.asarray(ys) / cell_m).astype(np.int64).view(np.uint64)
    with np.errstate(over="ignore"):
        h = _mix64(ix * np.uint64(0x9E3779B97F4A7C15) ^ _mix64(iy + np.uint64(seed & 0xFFFFFFFF)))
    u = (h >> np.uint64(11)).astype(np.float64) / float(1 << 53)
    return amplitude * (2.0 * u - 1.0)


def pixel_grid(world: WorldState):
    """World (x, y) of every pixel center in the current camera view."""
    cam = world.camera
    rows = np.arange(cam.height_px, dtype=np.float64)
    cols = np.arange(cam.width_px, dtype=np.float64)
    dx, dy = cam.pixel_to_offset(rows[:, None], cols[None, :])
    shape = (cam.height_px, cam.width_px)
    return (np.broadcast_to(world.drone.x_m + dx, shape),
            np.broadcast_to(world.drone.y_m + dy, shape))


def _pixel_box(world, bounds, pad=1):
    cam = world.camera
    xmin, ymin, xmax, ymax = bounds
    r0, c0 = cam.offset_to_pixel(xmin - world.drone.x_m, ymin - world.drone.y_m)
    r1, c1 = cam.offset_to_pixel(xmax - world.drone.x_m, ymax - world.drone.y_m)
    r0 = max(0, int(math.floor(r0)) - pad)
    c0 = max(0, int(math.floor(c0)) - pad)
    r1 = min(cam.height_px, int(math.ceil(r1)) + pad + 1)
    c1 = min(cam.width_px, int(math.ceil(c1)) + pad + 1)
    if r0 >= r1 or c0 >= c1:
        return None
    return r0, r1, c0, c1


def _coverage(world, box, inside):
    """Fraction of each pixel in ``box`` covered by the region ``inside(x, y)``.

    Pixels whose four corners agree are taken as fully in or out; the rest
    are estimated from SUPERSAMPLE^2 sub-samples.
    """
    cam = world.camera
    x_d, y_d = world.drone.x_m, world.drone.y_m
    r0, r1, c0, c1 = box
    cr = np.arange(r0, r1 + 1, dtype=np.float64) - 0.5
    cc = np.arange(c0, c1 + 1, dtype=np.float64) - 0.5
    dx, dy = cam.pixel_to_offset(cr[:, None], cc[None, :])
    corner = inside(x_d + dx, y_d + dy)
    n_in = (corner[:-1, :-1].astype(np.int8) + corner[1:, :-1] + corner[:-1, 1:] + corner[1:, 1:])
    cov = (n_in == 4).astype(np.float64)
    mixed = np.nonzero((n_in > 0) & (n_in < 4))
    if len(mixed[0]):
        n = SUPERSAMPLE
        sub = (np.arange(n) + 0.5) / n - 0.5
        rows = (mixed[0] + r0)[:, None, None] + sub[None, :, None]
        cols = (mixed[1] + c0)[:, None, None] + sub[None, None, :]
        sx, sy = cam.pixel_to_offset(np.broadcast_to(rows, (len(rows), n, n)),
                                     np.broadcast_to(cols, (len(cols), n, n)))
        cov[mixed] = inside(x_d + sx, y_d + sy).reshape(len(rows), -1).mean(axis=1)
    return cov


def render_frame(world: WorldState) -> np.ndarray:
    """8-bit grayscale nadir view: textured ground and roofs, flat mover discs."""
    scen = world.scenario
    xs, ys = pixel_grid(world)
    tex = ground_texture(xs, ys, scen.seed, scen.texture_amplitude, scen.texture_cell_m)
    img = scen.ground_intensity + tex
    for ob in scen.obstacles:
        box = _pixel_box(world, ob.polygon.bounds)
        if box is None:
            continue
        cov = _coverage(world, box, lambda x, y, p=ob.polygon: shapely.contains_xy(p, x, y))
        r0, r1, c0, c1 = box
        # roofs carry the same texture so edge localisation is not pulled to one side
        target = scen.ground_intensity + ob.contrast + tex[r0:r1, c0:c1]
        img[r0:r1, c0:c1] += cov * (target - img[r0:r1, c0:c1])
    for mv, pos in zip(scen.movers, world.mover_positions):
        rad = mv.radius_m
        box = _pixel_box(world, (pos[0] - rad, pos[1] - rad, pos[0] + rad, pos[1] + rad))
        if box is None:
            continue
        cov = _coverage(world, box, lambda x, y, p=pos, r=rad: (x - p[0]) ** 2 + (y - p[1]) ** 2 < r * r)
        r0, r1, c0, c1 = box
        target = scen.ground_intensity + mv.contrast
        img[r0:r1, c0:c1] += cov * (target - img[r0:r1, c0:c1])
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def height_map(world: WorldState) -> np.ndarray:
    """Obstacle height under every pixel center (0 on open ground)."""
    xs, ys = pixel_grid(world)
    hmap = np.zeros(xs.shape)
    for ob in world.scenario.obstacles:
        box = _pixel_box(world, ob.polygon.bounds)
        if box is None or ob.height_m <= 0:
            continue
        r0, r1, c0, c1 = box
        inside = shapely.contains_xy(ob.polygon, xs[r0:r1, c0:c1], ys[r0:r1, c0:c1])
        sub = hmap[r0:r1, c0:c1]
        sub[inside] = np.maximum(sub[inside], ob.height_m)
    return hmap


def render_depth(world: WorldState) -> DepthFrame:
    """Metric depth along each pixel ray: ``(H - h) / cos(theta)``."""
    cam = world.camera
    H = world.drone.altitude_m
    rows = np.arange(cam.height_px, dtype=np.float64)[:, None]
    cols = np.arange(cam.width_px, dtype=np.float64)[None, :]
    cr, cc = cam.principal_point
    sec = np.hypot(cam.focal_px, np.hypot(rows - cr, cols - cc)) / cam.focal_px
    depth = (H - height_map(world)) * sec
    noise = world.scenario.depth_noise_m
    if noise > 0:
        t = world.time
        rng = np.random.default_rng([world.scenario.seed, t.numerator, t.denominator])
        depth = depth + rng.normal(0.0, noise, depth.shape)
    depth[depth <= 0] = np.nan
    return DepthFrame(depth, cam)


def surface_height(scenario: Scenario, x: float, y: float) -> float:
    h = 0.0
    for ob in scenario.obstacles:
        if ob.polygon.covers(Point(x, y)):
            h = max(h, ob.height_m)
    return h


def tof_reading(world: WorldState) -> TofReading:
    """Range straight down to the first surface, saturating at the sensor limit."""
    d = world.drone
    rng = d.altitude_m - surface_height(world.scenario, d.x_m, d.y_m)
    if rng > TOF_MAX_RANGE_M:
        return TofReading(TOF_MAX_RANGE_M, TOF_MAX_RANGE_M, saturated=True)
    return TofReading(rng)


def depth_to_pgm16(frame: DepthFrame) -> np.ndarray:
    """Millimetre quantization for 16-bit PGM output; invalid pixels become 0."""
    mm = np.rint(np.nan_to_num(frame.depth, nan=0.0) * 1000.0)
    return np.clip(mm, 0, 65535).astype(np.uint16)


# --- ground truth -------------------------------------------------------------

def fov_bounds(world: WorldState):
    """Ground rectangle of the view, with the border one pixel outside the image."""
    cam = world.camera
    x0, y0 = cam.pixel_to_offset(-1.0, -1.0)
    x1, y1 = cam.pixel_to_offset(cam.height_px, cam.width_px)
    d = world.drone
    return d.x_m + float(x0), d.y_m + float(y0), d.x_m + float(x1), d.y_m + float(y1)


def clearance(world: WorldState, xs, ys, include_movers: bool = True) -> np.ndarray:
    """Distance from ground points to the nearest drawn outline.

    Outlines are obstacle footprint boundaries, mover circles and the view
    border, i.e. everything that shows up as an edge. A point on a roof is
    measured to the roof's outline.
    """
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    x0, y0, x1, y1 = fov_bounds(world)
    c = np.minimum.reduce([xs - x0, x1 - xs, ys - y0, y1 - ys])
    pts = shapely.points(xs, ys)
    for ob in world.scenario.obstacles:
        c = np.minimum(c, shapely.distance(ob.polygon.exterior, pts))
    if include_movers:
        for mv, p in zip(world.scenario.movers, world.mover_positions):
            c = np.minimum(c, np.abs(np.hypot(xs - p[0], ys - p[1]) - mv.radius_m))
    return np.maximum(c, 0.0)


def on_obstacle(world: WorldState, x: float, y: float) -> bool:
    return surface_height(world.scenario, x, y) > 0 or any(
        ob.polygon.covers(Point(x, y)) for ob in world.scenario.obstacles)


def local_empty_circle(world: WorldState, center_xy, search_m: float):
    """Largest empty circle whose center lies within ``search_m`` of ``center_xy``."""
    cx, cy = center_xy

    def neg(p):
        off = math.hypot(p[0] - cx, p[1] - cy)
        pen = max(0.0, off - search_m) * 1e3
        return -float(clearance(world, p[0], p[1])) + pen

    best = minimize(neg, x0=[cx, cy], method="Nelder-Mead",
                    options={"xatol": 1e-6, "fatol": 1e-9, "initial_simplex": [
                        [cx, cy], [cx + search_m, cy], [cx, cy + search_m]]})
    x, y = best.x
    if math.hypot(x - cx, y - cy) > search_m * (1 + 1e-6):
        x, y = cx, cy
    r = float(clearance(world, x, y))
    return (float(x), float(y)), 2.0 * r


def largest_empty_circle(world: WorldState, grid_m: float | None = None):
    """Global largest empty circle in the view: grid search refined by Nelder-Mead."""
    cam = world.camera
    step_m = grid_m or cam.meters_per_px * 2.0
    x0, y0, x1, y1 = fov_bounds(world)
    xs, ys = np.meshgrid(np.arange(x0, x1, step_m), np.arange(y0, y1, step_m))
    c = clearance(world, xs, ys)
    k = np.argmax(c)
    return local_empty_circle(world, (xs.flat[k], ys.flat[k]), 2.0 * step_m)


def ground_truth(world: WorldState, zones=None) -> dict:
    """Exact quantities for scoring: gaps, largest empty circle, mover speeds, times to reach.

    ``zones`` is an optional list of ``(zone_id, (x, y))`` targets.
    """
    scen = world.scenario
    obs = scen.obstacles
    gaps = {}
    for i in range(len(obs)):
        for j in range(i + 1, len(obs)):
            gaps[f"{i}-{j}"] = float(obs[i].polygon.distance(obs[j].polygon))
    center, diameter = largest_empty_circle(world)
    speeds = [m.speed_mps for m in scen.movers]
    reach = []
    for zid, (zx, zy) in zones or []:
        for mi, (mv, p) in enumerate(zip(scen.movers, world.mover_positions)):
            dist = math.hypot(p[0] - zx, p[1] - zy)
            sp = mv.speed_mps
            reach.append({"mover": mi, "zone": zid, "distance_m": dist,
                          "t_x_s": dist / sp if sp > 0 else None})
    return {
        "time_s": world.time_s,
        "obstacle_gaps_m": gaps,
        "largest_empty_circle": {"center_m": center, "diameter_m": diameter,
                                 "area_m2": math.pi * diameter ** 2 / 4.0},
        "mover_speeds_mps": speeds,
        "mover_speeds_kmh": [s * KMH_PER_MPS for s in speeds],
        "reach": reach,
    }


def truth_margin(world: WorldState, zone_xy, margin_eta: float, absolute: bool = True) -> float:
    """Clearance margin from exact mover positions and speeds against a given drone ETA."""
    best = math.inf
    for mv, p in zip(world.scenario.movers, world.mover_positions):
        sp = mv.speed_mps
        if sp <= 0:
            continue
        tx = math.hypot(p[0] - zone_xy[0], p[1] - zone_xy[1]) / sp
        best = min(best, abs(tx - margin_eta) if absolute else tx - margin_eta)
    return best
