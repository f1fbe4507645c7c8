"""Seeded random corridor and clutter scenes for accuracy checks."""

import math
import random

from shapely.geometry import Polygon

from safeland.sim import Scenario


def _rotate(pts, a, cx=0.0, cy=0.0):
    ca, sa = math.cos(a), math.sin(a)
    return [[cx + x * ca - y * sa, cy + x * sa + y * ca] for x, y in pts]


def random_scene(seed: int, altitude_m: float = 10.0) -> Scenario:
    """Even seeds: two long walls with a random gap and heading. Odd seeds: disjoint random boxes."""
    rng = random.Random(seed)
    obs = []
    if seed % 2 == 0:
        gap = rng.uniform(2.2, 5.0)
        ang = rng.uniform(0, math.pi)
        off = rng.uniform(-1, 1)
        for side in (-1, 1):
            c0 = off + side * (gap / 2 + 2)
            pts = [(c0 - 2, -12), (c0 + 2, -12), (c0 + 2, 12), (c0 - 2, 12)]
            obs.append({"footprint_m": _rotate(pts, ang), "height_m": rng.uniform(1, 4)})
    else:
        placed = []
        for _ in range(rng.randint(3, 7)):
            cx, cy = rng.uniform(-6, 6), rng.uniform(-4.5, 4.5)
            w, h = rng.uniform(0.5, 2.5), rng.uniform(0.5, 2.5)
            fp = _rotate([(-w, -h), (w, -h), (w, h), (-w, h)], rng.uniform(0, math.pi), cx, cy)
            poly = Polygon(fp)
            # keep footprints apart: an outline hidden inside another roof is not visible
            if any(poly.distance(p) < 0.3 for p in placed):
                continue
            placed.append(poly)
            # strong enough contrast to cross the upper hysteresis threshold
            obs.append({"footprint_m": fp, "height_m": rng.uniform(1, 4),
                        "contrast": rng.choice([-100, -90, 90, 110])})
    return Scenario.from_dict({"schema_version": 1, "id": f"scene{seed:02d}", "seed": seed,
                               "camera": {"focal_px": 500}, "drone": {"position_m": [0, 0, altitude_m]},
                               "obstacles": obs})
