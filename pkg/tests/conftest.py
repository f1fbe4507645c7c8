import numpy as np
import pytest

from safeland.camera import CameraModel


@pytest.fixture
def cam10():
    """640x480, f = 500 px at 10 m: 0.02 m per pixel."""
    return CameraModel(500.0, 10.0)


def walls_doc(**extra):
    """Two parallel walls 4 m apart under a 10 m drone."""
    doc = {
        "schema_version": 1,
        "id": "walls",
        "seed": 7,
        "duration_s": 30,
        "camera": {"focal_px": 500},
        "drone": {"position_m": [0, 0, 10]},
        "obstacles": [
            {"footprint_m": [[-6, -8], [-2, -8], [-2, 8], [-6, 8]], "height_m": 2},
            {"footprint_m": [[2, -8], [6, -8], [6, 8], [2, 8]], "height_m": 3},
        ],
    }
    doc.update(extra)
    return doc


def square_image(size=(100, 100), box=(30, 70, 30, 70), fg=0, bg=255):
    img = np.full(size, bg, dtype=np.uint8)
    r0, r1, c0, c1 = box
    img[r0:r1, c0:c1] = fg
    return img


ACCEPTANCE_LINES = []


def record_acceptance(number, name, passed, detail=""):
    line = f"ACCEPTANCE {number} {'PASS' if passed else 'FAIL'}: {name}" + (f" ({detail})" if detail else "")
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: s.split()[1]):
            terminalreporter.write_line(line)
