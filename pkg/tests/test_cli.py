import json

import numpy as np
import pytest

from safeland.cli import EXIT_ABORT, EXIT_CONFIG, EXIT_NO_PLZ, EXIT_OK, cmd_report, main
from safeland.imaging import write_pnm
from safeland.report import REPORT_VERSION, RunReport, pct_error

from conftest import walls_doc


def write(path, doc):
    path.write_text(json.dumps(doc))
    return path


@pytest.fixture(scope="module")
def flat_dir(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("flat")
    scen = write(tmp / "flat.json", {"schema_version": 1, "id": "flat", "camera": {"focal_px": 500},
                                     "drone": {"position_m": [0, 0, 5]}, "duration_s": 15})
    out = tmp / "run"
    assert main(["simulate", "--scenario", str(scen), "--out", str(out), "--trace"]) == EXIT_OK
    return out


def test_simulate_artifacts(flat_dir):
    for name in ("report.json", "traces/plz.csv", "traces/decision.csv", "traces/tracks.csv",
                 "traces/descent.csv", "figures/overview.png", "figures/timeline.png", "frames/frame_00000.pgm",
                 "frames/edges_00000.pgm", "frames/overlay.ppm"):
        assert (flat_dir / name).exists(), name
    rep = json.loads((flat_dir / "report.json").read_text())
    assert rep["schema_version"] == REPORT_VERSION
    assert rep["final_phase"] == "Landed"
    assert abs(rep["touchdown_m"][0]) < 0.05 and abs(rep["touchdown_m"][1]) < 0.05
    assert rep["summary"]["touchdown_obstacle_overlap_m2"] == 0.0


def test_simulate_bad_scenario(tmp_path, capsys):
    d = walls_doc()
    d["drone"]["position_m"] = [0, 0]
    scen = write(tmp_path / "bad.json", d)
    assert main(["simulate", "--scenario", str(scen), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert "drone/position_m" in capsys.readouterr().err


def test_simulate_missing_file(tmp_path):
    assert main(["simulate", "--scenario", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == EXIT_CONFIG


def test_simulate_timeout_is_abort(tmp_path):
    scen = write(tmp_path / "s.json", walls_doc(duration_s=2))
    assert main(["simulate", "--scenario", str(scen), "--out", str(tmp_path / "o")]) == EXIT_ABORT
    assert json.loads((tmp_path / "o" / "report.json").read_text())["final_phase"] == "Abort"


def test_simulate_no_zone(tmp_path):
    scen = write(tmp_path / "s.json", walls_doc(duration_s=2))
    code = main(["simulate", "--scenario", str(scen), "--out", str(tmp_path / "o"), "--min-area-m2", "500"])
    assert code == EXIT_NO_PLZ


def test_detect_blank_image(tmp_path, capsys):
    img = tmp_path / "white.pgm"
    write_pnm(img, np.full((480, 640), 255, np.uint8))
    assert main(["detect", str(img), "--altitude-m", "10", "--focal-px", "500", "--out", str(tmp_path / "d")]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 2
    row = dict(zip(lines[0].split(","), lines[1].split(",")))
    assert float(row["diameter_px"]) == 480.0
    assert (tmp_path / "d" / "overlay.ppm").exists() and (tmp_path / "d" / "plz.csv").exists()


def test_detect_corridor_image(tmp_path, capsys):
    img = np.full((480, 440), 40, np.uint8)
    img[:, 120:320] = 200  # 200 px bright corridor between 120 px dark strips
    p = tmp_path / "c.pgm"
    write_pnm(p, img)
    assert main(["detect", str(p), "--altitude-m", "10", "--focal-px", "500", "--out", str(tmp_path / "d")]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    rows = [dict(zip(lines[0].split(","), ln.split(","))) for ln in lines[1:]]
    best = max(rows, key=lambda r: float(r["diameter_px"]))
    assert abs(float(best["diameter_px"]) - 200) <= 1.0


def test_detect_too_small_everywhere(tmp_path):
    p = tmp_path / "w.pgm"
    write_pnm(p, np.full((80, 80), 255, np.uint8))  # 1.6 m across at 0.02 m/px
    assert main(["detect", str(p), "--altitude-m", "10", "--focal-px", "500", "--out", str(tmp_path)]) == EXIT_NO_PLZ


def test_detect_bad_inputs(tmp_path):
    p = tmp_path / "w.pgm"
    write_pnm(p, np.full((10, 10), 255, np.uint8))
    assert main(["detect", str(p), "--altitude-m", "0", "--focal-px", "500", "--out", str(tmp_path)]) == EXIT_CONFIG
    bad = tmp_path / "x.pgm"
    bad.write_bytes(b"garbage")
    assert main(["detect", str(bad), "--altitude-m", "1", "--focal-px", "5", "--out", str(tmp_path)]) == EXIT_CONFIG


def fake_run(path, dist_err, vel_err=None):
    path.mkdir(parents=True)
    rep = RunReport("s" + path.name, 0, "Landed", "landed", [0.0, 0.0], 1.0, 0,
                    summary={"mean_distance_err_pct": dist_err, "mean_area_err_pct": 2 * dist_err,
                             "mean_velocity_err_pct": vel_err})
    (path / "report.json").write_text(rep.to_json())
    return path


def test_report_single_run(flat_dir, tmp_path):
    agg, skipped = cmd_report([flat_dir], tmp_path)
    rep = json.loads((flat_dir / "report.json").read_text())
    assert agg["mean_area_err_pct"] == pytest.approx(rep["summary"]["mean_area_err_pct"])
    assert skipped == [] and (tmp_path / "errors.png").exists()


def test_report_mean_and_skips(tmp_path, capsys):
    a = fake_run(tmp_path / "a", 1.0, 2.0)
    b = fake_run(tmp_path / "b", 3.0)
    code = main(["report", str(a), str(b), str(tmp_path / "missing")])
    assert code == 0
    cap = capsys.readouterr()
    assert "missing" in cap.err
    last = cap.out.strip().splitlines()[-1].split(",")
    assert last[0] == "MEAN" and float(last[2]) == 2.0 and float(last[4]) == 2.0


def test_report_nothing_readable(tmp_path):
    assert main(["report", str(tmp_path / "x")]) == EXIT_CONFIG


def test_pct_error():
    assert pct_error(101, 100) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        pct_error(1, 0)
