"""Grayscale conversion, Gaussian smoothing and Canny edge detection.

Frames are plain numpy arrays: ``(H, W)`` for grayscale or ``(H, W, 3)`` for
color, intensities in [0, 255]. Edge maps are ``uint8`` arrays holding 0/1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

# ITU-R BT.601 luma weights (R, G, B). Tests read this constant.
LUMA_WEIGHTS = (0.299, 0.587, 0.114)

EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True)
class CannyParams:
    low_threshold: float = 50.0
    high_threshold: float = 150.0
    gaussian_sigma: float = 1.4

    def __post_init__(self):
        if not 0 <= self.low_threshold < self.high_threshold <= 255:
            raise ValueError(
                f"need 0 <= low < high <= 255, got {self.low_threshold}, {self.high_threshold}"
            )
        if self.gaussian_sigma <= 0:
            raise ValueError("gaussian_sigma must be positive")


def to_grayscale(frame: np.ndarray) -> np.ndarray:
    """Collapse a color frame to one channel with the luma weights.

    A 2-D frame is returned unchanged.
    """
    frame = np.asarray(frame)
    if frame.ndim == 2:
        return frame
    if frame.ndim != 3 or frame.shape[2] not in (1, 3):
        raise ValueError(f"expected 1 or 3 channels, got shape {frame.shape}")
    if frame.shape[2] == 1:
        return frame[:, :, 0]
    return frame.astype(np.float64) @ np.asarray(LUMA_WEIGHTS)


def gaussian_kernel(sigma: float, truncate: float = 3.0) -> np.ndarray:
    """Sampled, normalized 1-D Gaussian with radius ``ceil(truncate * sigma)``."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    radius = max(1, int(math.ceil(truncate * sigma)))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def gaussian_smooth(gray: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur with replicate padding. Returns float64."""
    gray = np.asarray(gray, dtype=np.float64)
    if gray.ndim != 2:
        raise ValueError("gaussian_smooth expects a single-channel frame")
    k = gaussian_kernel(sigma)
    out = ndimage.correlate1d(gray, k, axis=0, mode="nearest")
    return ndimage.correlate1d(out, k, axis=1, mode="nearest")


def sobel_gradients(img: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Unnormalized 3x3 Sobel derivatives (d/dcol, d/drow), replicate padding."""
    gx = ndimage.sobel(img, axis=1, mode="nearest")
    gy = ndimage.sobel(img, axis=0, mode="nearest")
    return gx, gy


def gradient_magnitude(gray: np.ndarray, sigma: float = 1.4) -> np.ndarray:
    gx, gy = sobel_gradients(gaussian_smooth(gray, sigma))
    return np.hypot(gx, gy)


def _non_max_suppression(mag, gx, gy):
    # Direction bins in image coordinates (row grows downward). Ties along the
    # gradient keep the pixel whose forward neighbour is equal, so an ideal
    # step yields a single-pixel line.
    angle = np.degrees(np.arctan2(gy, gx)) % 180.0
    # quantize so mathematically equal magnitudes compare equal despite roundoff
    mag = np.round(mag, 6)
    p = np.pad(mag, 1, mode="constant")
    h, w = mag.shape

    def shifted(dr, dc):
        return p[1 + dr:1 + dr + h, 1 + dc:1 + dc + w]

    fwd = np.empty_like(mag)
    bwd = np.empty_like(mag)
    b0 = (angle < 22.5) | (angle >= 157.5)
    b45 = (angle >= 22.5) & (angle < 67.5)
    b90 = (angle >= 67.5) & (angle < 112.5)
    b135 = (angle >= 112.5) & (angle < 157.5)
    for sel, (dr, dc) in ((b0, (0, 1)), (b45, (1, 1)), (b90, (1, 0)), (b135, (1, -1))):
        fwd[sel] = shifted(dr, dc)[sel]
        bwd[sel] = shifted(-dr, -dc)[sel]
    return (mag > 0) & (mag >= fwd) & (mag > bwd)


def canny_edges(gray: np.ndarray, params: CannyParams | None = None) -> np.ndarray:
    """Binary Canny edge map (1 = edge).

    Smoothing, Sobel gradients, non-maximum suppression, then hysteresis that
    keeps every weak pixel 8-connected to a strong one. The outermost ring is
    always 0.
    """
    params = params or CannyParams()
    gray = to_grayscale(gray)
    if gray.shape[0] < 3 or gray.shape[1] < 3:
        raise ValueError(f"frame {gray.shape} smaller than the 3x3 gradient support")
    smoothed = gaussian_smooth(gray, params.gaussian_sigma)
    gx, gy = sobel_gradients(smoothed)
    mag = np.hypot(gx, gy)
    thin = _non_max_suppression(mag, gx, gy)
    thin[0, :] = thin[-1, :] = False
    thin[:, 0] = thin[:, -1] = False

    candidate = thin & (mag >= params.low_threshold)
    strong = thin & (mag >= params.high_threshold)
    labels, n = ndimage.label(candidate, structure=EIGHT_CONNECTED)
    if n == 0:
        return np.zeros(gray.shape, dtype=np.uint8)
    keep = np.zeros(n + 1, dtype=bool)
    keep[np.unique(labels[strong])] = True
    keep[0] = False
    return keep[labels].astype(np.uint8)


# --- netpbm I/O -------------------------------------------------------------

def _read_token(buf: bytes, pos: int) -> tuple[bytes, int]:
    while True:
        while pos < len(buf) and buf[pos:pos + 1].isspace():
            pos += 1
        if buf[pos:pos + 1] == b"#":
            while pos < len(buf) and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        break
    start = pos
    while pos < len(buf) and not buf[pos:pos + 1].isspace():
        pos += 1
    return buf[start:pos], pos


def read_pnm(path) -> np.ndarray:
    """Read a binary PGM (P5) or PPM (P6). 16-bit samples come back as uint16."""
    buf = Path(path).read_bytes()
    magic, pos = _read_token(buf, 0)
    if magic not in (b"P5", b"P6"):
        raise ValueError(f"{path}: not a binary PGM/PPM (magic {magic!r})")
    w, pos = _read_token(buf, pos)
    h, pos = _read_token(buf, pos)
    maxval, pos = _read_token(buf, pos)
    w, h, maxval = int(w), int(h), int(maxval)
    pos += 1  # single whitespace byte before the raster
    channels = 3 if magic == b"P6" else 1
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype(np.uint8)
    count = w * h * channels
    data = np.frombuffer(buf, dtype=dtype, count=count, offset=pos)
    if data.size != count:
        raise ValueError(f"{path}: truncated raster")
    data = data.astype(np.uint16 if maxval > 255 else np.uint8)
    return data.reshape(h, w, 3) if channels == 3 else data.reshape(h, w)


def write_pnm(path, img: np.ndarray) -> None:
    img = np.asarray(img)
    if img.ndim == 3 and img.shape[2] == 3:
        magic = b"P6"
    elif img.ndim == 2:
        magic = b"P5"
    else:
        raise ValueError(f"cannot write image of shape {img.shape}")
    if img.dtype == np.uint16:
        maxval, raw = 65535, img.astype(">u2").tobytes()
    else:
        maxval, raw = 255, np.clip(np.rint(img), 0, 255).astype(np.uint8).tobytes()
    h, w = img.shape[:2]
    header = magic + b"\n%d %d\n%d\n" % (w, h, maxval)
    Path(path).write_bytes(header + raw)


def write_edge_map(path, edges: np.ndarray) -> None:
    write_pnm(path, (np.asarray(edges) > 0).astype(np.uint8) * 255)
