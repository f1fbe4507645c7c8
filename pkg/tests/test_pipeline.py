import math

import pytest

from safeland.decision import LEGAL_TRANSITIONS, LandingPhase
from safeland.pipeline import PipelineConfig, run_mission
from safeland.sim import Scenario, ScenarioError

from conftest import walls_doc


@pytest.fixture(scope="module")
def flat_run():
    s = Scenario.from_dict({"schema_version": 1, "id": "flat", "camera": {"focal_px": 500},
                            "drone": {"position_m": [2.0, -1.0, 6.0]}, "duration_s": 20})
    return run_mission(s)


def test_flat_lands_under_start(flat_run):
    r = flat_run
    assert r.reason == "landed" and r.final_phase == LandingPhase.LANDED
    assert math.hypot(r.drone.x_m - 2.0, r.drone.y_m + 1.0) < 0.05
    assert [t[1:] for t in r.transitions] == [("Scan", "Approach"), ("Approach", "Descend"),
                                              ("Descend", "Landed")]


def test_transitions_are_legal(flat_run):
    for _, a, b in flat_run.transitions:
        assert LandingPhase(b) in LEGAL_TRANSITIONS[LandingPhase(a)] or b == "Abort"


def test_descent_rows_are_level_on_flat_ground(flat_run):
    rows = flat_run.descent_rows
    assert rows and all(r["consistency"] == "Consistent" for r in rows)
    assert rows[-1]["maneuver"] == "touchdown"
    alts = [r["altitude_m"] for r in rows]
    assert all(b < a for a, b in zip(alts, alts[1:]))


def test_unknown_override_rejected():
    with pytest.raises(ScenarioError):
        PipelineConfig.from_overrides({"margin": 3})


def test_override_applies():
    c = PipelineConfig.from_overrides({"margin_s": 5, "fps": None})
    assert c.margin_s == 5 and c.fps is None


def test_no_zone_aborts():
    s = Scenario.from_dict(walls_doc(duration_s=5))
    r = run_mission(s, PipelineConfig(min_area_m2=1000.0))
    assert r.reason == "no_plz" and r.final_phase == LandingPhase.ABORT


def test_timeout_aborts():
    s = Scenario.from_dict(walls_doc(duration_s=3))
    r = run_mission(s)
    assert r.reason == "timeout" and r.final_phase == LandingPhase.ABORT
    assert r.decision_rows[-1]["frame_index"] == 90


def test_lands_beside_low_box():
    # the drone starts over a low box, the only clear zone is beside it
    doc = {"schema_version": 1, "id": "box", "camera": {"focal_px": 500}, "duration_s": 40,
           "drone": {"position_m": [0, 0, 10]},
           "obstacles": [{"footprint_m": [[-0.5, -0.5], [0.5, -0.5], [0.5, 0.5], [-0.5, 0.5]], "height_m": 1.5}]}
    r = run_mission(Scenario.from_dict(doc))
    assert r.reason == "landed"
    z = r.target
    assert math.hypot(r.drone.x_m - z.world_xy[0], r.drone.y_m - z.world_xy[1]) <= z.radius_m
    assert max(abs(r.drone.x_m), abs(r.drone.y_m)) > 0.5 + r.drone.body_radius_m
