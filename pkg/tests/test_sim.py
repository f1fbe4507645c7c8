import hashlib
import math
from fractions import Fraction

import numpy as np
import pytest

from safeland.decision import DroneState
from safeland.imaging import canny_edges
from safeland.plz import detect_plz
from safeland.sim import (Scenario, ScenarioError, WorldState, clearance, ground_truth, largest_empty_circle,
                          load_scenario, render_depth, render_frame, step, tof_reading)
from safeland.tracking import frame_diff, segment_objects

from conftest import walls_doc
from oracles import is_disc_edge_free


def doc(**kw):
    d = {"schema_version": 1, "id": "t", "camera": {"focal_px": 500}, "drone": {"position_m": [0, 0, 10]},
         "duration_s": 20}
    d.update(kw)
    return d


def world(d, t=0, **drone):
    s = Scenario.from_dict(d)
    return WorldState(s, Fraction(t), DroneState(**{**vars(s.drone), **drone}) if drone else s.drone)


# --- scenario schema -------------------------------------------------------------

def test_schema_error_carries_path():
    d = doc()
    d["camera"]["focal_px"] = -5
    with pytest.raises(ScenarioError) as ei:
        Scenario.from_dict(d)
    assert ei.value.path == "camera/focal_px"


def test_schema_version_required():
    d = doc()
    d["schema_version"] = 2
    with pytest.raises(ScenarioError):
        Scenario.from_dict(d)


def test_unknown_field_rejected():
    with pytest.raises(ScenarioError):
        Scenario.from_dict(doc(wind_mps=3))


def test_mover_must_stay_in_extent():
    with pytest.raises(ScenarioError) as ei:
        Scenario.from_dict(doc(movers=[{"start_m": [0, 0], "velocity_mps": [10, 0]}]))
    assert ei.value.path == "movers/0"


def test_speed_heading_form():
    s = Scenario.from_dict(doc(movers=[{"start_m": [0, 0], "speed_kmh": 10.2, "heading_deg": 90}]))
    assert s.movers[0].speed_mps * 3.6 == pytest.approx(10.2)
    assert s.movers[0].velocity[0] == pytest.approx(0.0, abs=1e-12)


def test_load_bad_json(tmp_path):
    p = tmp_path / "s.json"
    p.write_text("{nope")
    with pytest.raises(ScenarioError):
        load_scenario(p)


# --- kinematics ------------------------------------------------------------------

def test_step_moves_linearly():
    w = world(doc(movers=[{"start_m": [0, 0], "velocity_mps": [1, 0]}]))
    w2 = step(w, 0.5)
    assert np.array_equal(w2.mover_positions[0], [0.5, 0.0])


def test_two_half_steps_equal_one():
    w = world(doc(movers=[{"start_m": [0.3, -1], "velocity_mps": [0.37, 0.11]}]))
    a = step(step(w, Fraction(1, 30)), Fraction(1, 30))
    b = step(w, Fraction(2, 30))
    assert a == b
    assert np.array_equal(a.mover_positions[0], b.mover_positions[0])


def test_step_rejects_nonpositive():
    with pytest.raises(ValueError):
        step(world(doc()), 0)


# --- rendering -----------------------------------------------------------------------

def test_empty_world_has_no_edges():
    f = render_frame(world(doc()))
    assert canny_edges(f).sum() == 0
    assert abs(int(f.max()) - int(f.min())) <= 6


def test_box_width_in_pixels():
    f = render_frame(world(doc(obstacles=[{"footprint_m": [[-1, -1], [1, -1], [1, 1], [-1, 1]]}])))
    row = f[240].astype(float)
    inside = row > 128 + 45
    assert abs(inside.sum() - 100) <= 1


def test_mover_shift_in_pixels():
    d = doc(movers=[{"start_m": [0, 0], "velocity_mps": [1, 0]}])
    w0 = world(d)
    f0 = render_frame(w0)
    f1 = render_frame(step(w0, Fraction(1, 10)))
    c = []
    for f in (f0, f1):
        rr, cc = np.nonzero(f < 128 - 45)
        c.append((rr.mean(), cc.mean()))
    assert abs((c[1][1] - c[0][1]) - 5.0) <= 1.0
    assert abs(c[1][0] - c[0][0]) <= 0.5


def test_render_is_deterministic_and_seeded():
    d = walls_doc(movers=[{"start_m": [0, -1], "velocity_mps": [0, 0.5]}])
    a = render_frame(world(d, Fraction(1, 3)))
    b = render_frame(world(d, Fraction(1, 3)))
    assert np.array_equal(a, b)
    c = render_frame(world({**d, "seed": d["seed"] + 1}, Fraction(1, 3)))
    assert not np.array_equal(a, c)


def test_flat_depth_center_and_45_degrees():
    d = doc()
    d["camera"].update(width_px=1101, height_px=481)
    dep = render_depth(world(d)).depth
    assert dep[240, 550] == 10.0
    assert dep[240, 1050] == pytest.approx(10 * math.sqrt(2), rel=1e-12)


def test_box_top_depth():
    d = doc(obstacles=[{"footprint_m": [[-1, -1], [1, -1], [1, 1], [-1, 1]], "height_m": 3}])
    w = world(d)
    dep = render_depth(w).depth
    cam = w.camera
    cr, cc = cam.principal_point
    for r, c in ((240, 320), (200, 280), (260, 360)):
        sec = math.hypot(cam.focal_px, math.hypot(r - cr, c - cc)) / cam.focal_px
        assert dep[r, c] == pytest.approx(7.0 * sec, rel=1e-12)
    assert dep[10, 10] > 10.0


def test_depth_noise_is_seeded():
    d = doc(sensors={"depth_noise_m": 0.05})
    a = render_depth(world(d)).depth
    b = render_depth(world(d)).depth
    assert np.array_equal(a, b)
    assert 0.03 < np.std(a - render_depth(world(doc())).depth) < 0.07


def test_tof_examples():
    assert tof_reading(world(doc(), altitude_m=12.0)).range_m == 12.0
    box = doc(obstacles=[{"footprint_m": [[-1, -1], [1, -1], [1, 1], [-1, 1]], "height_m": 3}])
    assert tof_reading(world(box)).range_m == 7.0
    t = tof_reading(world(doc(), altitude_m=80.0))
    assert t.saturated and t.range_m == 60.0


def test_depth_matches_tof_over_open_ground():
    d = doc()
    d["camera"].update(width_px=641, height_px=481)
    w = world(d, x_m=3.3, y_m=-1.2)
    assert render_depth(w).depth[240, 320] == tof_reading(w).range_m


def test_projection_round_trip():
    w = world(doc(), x_m=1.5, y_m=-2.0)
    cam = w.camera
    rng = np.random.default_rng(1)
    pts = rng.uniform(-4, 4, (100, 2))
    r, c = cam.offset_to_pixel(pts[:, 0], pts[:, 1])
    dx, dy = cam.pixel_to_offset(r, c)
    assert np.allclose(dx, pts[:, 0]) and np.allclose(dy, pts[:, 1])


# --- ground truth ------------------------------------------------------------------

def test_walls_gap_truth():
    g = ground_truth(world(walls_doc()))
    assert g["obstacle_gaps_m"]["0-1"] == pytest.approx(4.0)
    lec = g["largest_empty_circle"]
    assert lec["diameter_m"] == pytest.approx(4.0, abs=1e-6)
    assert lec["area_m2"] == pytest.approx(12.566, abs=1e-3)


def test_mover_speed_truth():
    g = ground_truth(world(doc(movers=[{"start_m": [0, 0], "speed_kmh": 10.2}])), zones=[(0, (3.0, 4.0))])
    assert g["mover_speeds_kmh"][0] == pytest.approx(10.2)
    assert g["reach"][0]["distance_m"] == pytest.approx(5.0)


def test_truth_circle_agrees_with_raster():
    w = world(walls_doc())
    edges = canny_edges(render_frame(w))
    (cx, cy), diam = largest_empty_circle(w)
    cam = w.camera
    r, c = cam.offset_to_pixel(cx, cy)
    rad_px = diam / 2 / cam.meters_per_px
    assert is_disc_edge_free(edges, (r, c), rad_px - 1.0)
    z = detect_plz(edges, cam)[0]
    assert abs(z.diameter_px - 2 * rad_px) <= 1.0


def test_clearance_sees_view_border():
    w = world(doc())
    x0 = -320.5 * 0.02  # center of pixel column -1; column 0 sits at -319.5 px
    assert clearance(w, x0 + 0.5, 0.0) == pytest.approx(0.5)


def test_crescent_pair_is_one_detection():
    d = doc(movers=[{"start_m": [0, 0], "velocity_mps": [1, 0]}])
    w0 = world(d)
    m = frame_diff(render_frame(w0), render_frame(step(w0, Fraction(1, 30))))
    assert len(segment_objects(m, 50, bridge_px=0)) != 1
    assert len(segment_objects(m, 1, bridge_px=30)) == 1


def test_frame_hash_stable():
    f = render_frame(world(walls_doc()))
    h1 = hashlib.sha256(f.tobytes()).hexdigest()
    h2 = hashlib.sha256(render_frame(world(walls_doc())).tobytes()).hexdigest()
    assert h1 == h2
