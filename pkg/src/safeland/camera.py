"""Nadir pinhole camera: pixel <-> ground-plane conversion."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np


@dataclass(frozen=True)
class CameraModel:
    """Downward-looking pinhole camera at a given altitude.

    The principal point sits at the geometric image center in pixel-center
    coordinates, ``((height - 1) / 2, (width - 1) / 2)``. Image columns run
    along world +x and rows along world +y.
    """

    focal_px: float
    altitude_m: float
    width_px: int = 640
    height_px: int = 480

    def __post_init__(self):
        if self.focal_px <= 0:
            raise ValueError("focal_px must be positive")
        if self.altitude_m <= 0:
            raise ValueError("altitude_m must be positive")

    @property
    def principal_point(self) -> tuple[float, float]:
        return (self.height_px - 1) / 2.0, (self.width_px - 1) / 2.0

    @property
    def meters_per_px(self) -> float:
        return self.altitude_m / self.focal_px

    def at_altitude(self, altitude_m: float) -> "CameraModel":
        return replace(self, altitude_m=altitude_m)

    def pixel_to_offset(self, row, col):
        """Ground offset (dx, dy) in metres of a pixel from the nadir point."""
        cr, cc = self.principal_point
        s = self.meters_per_px
        return (np.asarray(col) - cc) * s, (np.asarray(row) - cr) * s

    def offset_to_pixel(self, dx, dy):
        cr, cc = self.principal_point
        s = self.focal_px / self.altitude_m
        return cr + np.asarray(dy) * s, cc + np.asarray(dx) * s
