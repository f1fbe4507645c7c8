"""Potential landing zone (PLZ) detection on a binary edge map.

Edge pixels are grouped into contours (8-connected chains), contours closer
than a pixel radius are merged into obstacle polygons, and the largest empty
circles between obstacles are located with an exact Euclidean distance
transform. Pixel sizes become metres through the altitude/focal ratio of the
nadir camera.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .camera import CameraModel

MIN_PLZ_AREA_M2 = 3.0
CLUSTER_RADIUS_PX = 30.0
FRAME_BORDER = -1  # owner id of the virtual obstacle ring around the frame

_NEIGHBOURS = ((-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1))


@dataclass
class Contour:
    points: np.ndarray  # (n, 2) int, (row, col), DFS order

    def __len__(self):
        return len(self.points)


@dataclass
class ObstaclePolygon:
    member_contours: tuple[int, ...]
    hull_points: np.ndarray  # (h, 2) float, counter-clockwise in (row, col)
    points: np.ndarray = field(repr=False, default=None)


@dataclass
class PLZ:
    id: int
    center_px: tuple[float, float]
    diameter_px: float
    diameter_m: float
    area_m2: float
    edge_pair: tuple[tuple[float, float], tuple[float, float]]
    admitted: bool = True
    center_offset_m: tuple[float, float] = (0.0, 0.0)
    gap_px: float | None = None  # polygon-to-polygon gap of the two bounding obstacles
    origin_m: tuple[float, float] = (0.0, 0.0)  # drone (x, y) when the frame was taken

    @property
    def radius_m(self) -> float:
        return self.diameter_m / 2.0

    @property
    def world_xy(self) -> tuple[float, float]:
        return (self.origin_m[0] + self.center_offset_m[0],
                self.origin_m[1] + self.center_offset_m[1])


# --- contours and clustering -------------------------------------------------

def extract_contours(edges: np.ndarray) -> list[Contour]:
    """Split the edge pixels into 8-connected components, each traced depth-first.

    Components are returned in raster order of their first pixel. Every edge
    pixel belongs to exactly one contour.
    """
    edges = np.asarray(edges) > 0
    labels, n = ndimage.label(edges, structure=np.ones((3, 3), dtype=bool))
    if n == 0:
        return []
    contours = []
    for sl_idx, sl in enumerate(ndimage.find_objects(labels), start=1):
        sub = labels[sl] == sl_idx
        rr, cc = np.nonzero(sub)
        rr = rr + sl[0].start
        cc = cc + sl[1].start
        remaining = set(zip(rr.tolist(), cc.tolist()))
        start = (int(rr[0]), int(cc[0]))
        order = []
        stack = [start]
        remaining.discard(start)
        while stack:
            p = stack.pop()
            order.append(p)
            for dr, dc in reversed(_NEIGHBOURS):
                q = (p[0] + dr, p[1] + dc)
                if q in remaining:
                    remaining.discard(q)
                    stack.append(q)
        contours.append(Contour(np.asarray(order, dtype=np.int64)))
    # find_objects is indexed by label, and labels are assigned in raster order
    return contours


class UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, a):
        root = a
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[a] != root:
            self.parent[a], a = root, self.parent[a]
        return root

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            # smaller root wins so component ids follow input order
            if rb < ra:
                ra, rb = rb, ra
            self.parent[rb] = ra


def min_point_gap(a: np.ndarray, b: np.ndarray) -> float:
    """Smallest Euclidean distance between two point sets."""
    a = np.asarray(a, dtype=np.float64).reshape(-1, 2)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 2)
    if len(a) > len(b):
        a, b = b, a
    d, _ = cKDTree(b).query(a, k=1)
    return float(np.min(d))


def convex_hull(points: np.ndarray) -> np.ndarray:
    """Monotone-chain hull; collinear and tiny inputs degrade to a segment or point."""
    pts = np.unique(np.asarray(points, dtype=np.float64).reshape(-1, 2), axis=0)
    if len(pts) <= 2:
        return pts

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower, upper = [], []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    for p in pts[::-1]:
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.asarray(lower[:-1] + upper[:-1])


def cluster_contours(contours: list[Contour], radius_px: float = CLUSTER_RADIUS_PX) -> list[ObstaclePolygon]:
    """Merge contours whose closest points are less than ``radius_px`` apart.

    The merge is transitive, so a chain of close contours forms a single
    obstacle. Each cluster carries the convex hull of its member pixels.
    """
    if radius_px <= 0:
        raise ValueError("radius_px must be positive")
    n = len(contours)
    pts = [np.asarray(c.points, dtype=np.float64).reshape(-1, 2) for c in contours]
    lo = np.array([p.min(axis=0) for p in pts]) if n else np.zeros((0, 2))
    hi = np.array([p.max(axis=0) for p in pts]) if n else np.zeros((0, 2))
    trees = [None] * n
    uf = UnionFind(n)
    for i in range(n):
        for j in range(i + 1, n):
            # bounding boxes further apart than the radius cannot link
            sep = np.maximum(0.0, np.maximum(lo[j] - hi[i], lo[i] - hi[j]))
            if math.hypot(*sep) >= radius_px or uf.find(i) == uf.find(j):
                continue
            if trees[i] is None:
                trees[i] = cKDTree(pts[i])
            d, _ = trees[i].query(pts[j], k=1, distance_upper_bound=radius_px)
            if np.min(d) < radius_px:
                uf.union(i, j)
    groups: dict[int, list[int]] = {}
    for i in range(n):
        groups.setdefault(uf.find(i), []).append(i)
    polys = []
    for root in sorted(groups):
        members = tuple(groups[root])
        allpts = np.concatenate([pts[m] for m in members])
        polys.append(ObstaclePolygon(members, convex_hull(allpts), allpts))
    return polys


# --- gap between polygons ----------------------------------------------------

def _segments(hull):
    hull = np.asarray(hull, dtype=np.float64).reshape(-1, 2)
    if len(hull) == 1:
        return hull, hull
    if len(hull) == 2:
        return hull[:1], hull[1:]
    return hull, np.roll(hull, -1, axis=0)


def _point_segment(p, a, b):
    """Closest points on segments a-b to each point p. Shapes (P,1,2) vs (1,S,2)."""
    ab = b - a
    denom = np.sum(ab * ab, axis=-1)
    t = np.where(denom > 0, np.sum((p - a) * ab, axis=-1) / np.where(denom > 0, denom, 1.0), 0.0)
    t = np.clip(t, 0.0, 1.0)
    q = a + t[..., None] * ab
    return np.linalg.norm(p - q, axis=-1), q


def _inside_convex(poly, pts):
    """Points inside or on a CCW convex polygon with >= 3 vertices."""
    a = poly
    b = np.roll(poly, -1, axis=0)
    cr = ((b[:, 0] - a[:, 0])[None, :] * (pts[:, 1:2] - a[:, 1][None, :])
          - (b[:, 1] - a[:, 1])[None, :] * (pts[:, 0:1] - a[:, 0][None, :]))
    return np.all(cr >= -1e-9, axis=1)


def _segments_cross(a1, a2, b1, b2):
    def orient(p, q, r):
        return ((q[..., 0] - p[..., 0]) * (r[..., 1] - p[..., 1])
                - (q[..., 1] - p[..., 1]) * (r[..., 0] - p[..., 0]))
    d1 = orient(b1, b2, a1)
    d2 = orient(b1, b2, a2)
    d3 = orient(a1, a2, b1)
    d4 = orient(a1, a2, b2)
    return (d1 * d2 < 0) & (d3 * d4 < 0)


def hull_gap(h1: np.ndarray, h2: np.ndarray):
    """Distance between two convex hulls and a pair of points realising it."""
    h1 = convex_hull(h1)
    h2 = convex_hull(h2)
    if len(h1) >= 3:
        inside = _inside_convex(h1, h2)
        if inside.any():
            p = tuple(h2[np.argmax(inside)])
            return 0.0, (p, p)
    if len(h2) >= 3:
        inside = _inside_convex(h2, h1)
        if inside.any():
            p = tuple(h1[np.argmax(inside)])
            return 0.0, (p, p)
    a1, a2 = _segments(h1)
    b1, b2 = _segments(h2)
    cross = _segments_cross(a1[:, None], a2[:, None], b1[None, :], b2[None, :])
    if cross.any():
        i, j = np.unravel_index(np.argmax(cross), cross.shape)
        # intersection point of the two crossing segments
        da, db = a2[i] - a1[i], b2[j] - b1[j]
        den = da[0] * db[1] - da[1] * db[0]
        t = ((b1[j][0] - a1[i][0]) * db[1] - (b1[j][1] - a1[i][1]) * db[0]) / den
        p = tuple(a1[i] + t * da)
        return 0.0, (p, p)
    d12, q12 = _point_segment(h1[:, None, :], b1[None, :, :], b2[None, :, :])
    d21, q21 = _point_segment(h2[:, None, :], a1[None, :, :], a2[None, :, :])
    i12 = np.unravel_index(np.argmin(d12), d12.shape)
    i21 = np.unravel_index(np.argmin(d21), d21.shape)
    if d12[i12] <= d21[i21]:
        return float(d12[i12]), (tuple(h1[i12[0]]), tuple(q12[i12]))
    return float(d21[i21]), (tuple(q21[i21]), tuple(h2[i21[0]]))


def polygon_gap_px(p1: ObstaclePolygon, p2: ObstaclePolygon):
    """Shortest distance between two obstacle polygons, with its endpoints.

    Returns ``(gap, ((r1, c1), (r2, c2)))``; the gap is the straight-line
    length between the two endpoints and is 0 when the hulls touch.
    """
    if p1 is p2:
        raise ValueError("polygon_gap_px needs two different polygons")
    return hull_gap(p1.hull_points, p2.hull_points)


# --- metric conversion -------------------------------------------------------

def px_to_meters(d_px, cam: CameraModel):
    """Ground distance for an image distance: ``d_px * altitude / focal``."""
    return d_px * cam.altitude_m / cam.focal_px


def zone_area(diameter_m: float) -> float:
    """Area of the landing circle, ``pi * D^2 / 4``."""
    if diameter_m < 0:
        raise ValueError("diameter must be non-negative")
    return math.pi * diameter_m ** 2 / 4.0


def zone_area_literal(diameter_m: float) -> float:
    """Square-of-diameter area ``D * D``; kept for comparison with zone_area."""
    if diameter_m < 0:
        raise ValueError("diameter must be non-negative")
    return diameter_m * diameter_m


# --- zone detection ----------------------------------------------------------

def _frame_ring(h, w):
    rows = np.arange(-1, h + 1)
    cols = np.arange(0, w)
    ring = np.concatenate([
        np.stack([np.full(w, -1), cols], axis=1),
        np.stack([np.full(w, h), cols], axis=1),
        np.stack([rows, np.full(h + 2, -1)], axis=1),
        np.stack([rows, np.full(h + 2, w)], axis=1),
    ])
    return ring


def clearance_map(edges: np.ndarray) -> np.ndarray:
    """Distance from every pixel to the nearest edge pixel or the frame border.

    The border acts as an obstacle one pixel outside the image.
    """
    occ = np.pad(np.asarray(edges) > 0, 1, mode="constant", constant_values=True)
    return ndimage.distance_transform_edt(~occ)[1:-1, 1:-1]


def plz_candidates(edges: np.ndarray, cam: CameraModel, min_area_m2: float = MIN_PLZ_AREA_M2,
                   min_radius_px: float = 2.0, cluster_radius_px: float = CLUSTER_RADIUS_PX) -> list[PLZ]:
    """All empty circles found in the edge map, admitted or not.

    Centers are local maxima of the clearance map. Maxima are visited by
    decreasing radius (then closeness to the principal point, then raster
    order) and dropped when they fall inside a circle already accepted.
    """
    edges = np.asarray(edges) > 0
    h, w = edges.shape
    dist = clearance_map(edges)
    peak = ndimage.maximum_filter(dist, size=3, mode="constant", cval=0.0)
    rr, cc = np.nonzero((dist >= peak) & (dist >= min_radius_px))
    if len(rr) == 0:
        return []
    rad = dist[rr, cc]
    pr, pc = cam.principal_point
    to_pp = np.hypot(rr - pr, cc - pc)
    order = np.lexsort((cc, rr, to_pp, -rad))

    acc_r, acc_c, acc_rad = [], [], []
    for k in order:
        if acc_r:
            d = np.hypot(np.asarray(acc_r) - rr[k], np.asarray(acc_c) - cc[k])
            if np.any(d < np.asarray(acc_rad)):
                continue
        acc_r.append(rr[k])
        acc_c.append(cc[k])
        acc_rad.append(rad[k])

    # obstacle points with their owning polygon, for the edge pair
    contours = extract_contours(edges)
    polys = cluster_contours(contours, cluster_radius_px) if contours else []
    owner_of_contour = {}
    for pid, poly in enumerate(polys):
        for m in poly.member_contours:
            owner_of_contour[m] = pid
    obs_pts = [_frame_ring(h, w)]
    obs_own = [np.full(len(obs_pts[0]), FRAME_BORDER)]
    for ci, c in enumerate(contours):
        obs_pts.append(c.points)
        obs_own.append(np.full(len(c.points), owner_of_contour[ci]))
    obs_pts = np.concatenate(obs_pts).astype(np.float64)
    obs_own = np.concatenate(obs_own)
    tree = cKDTree(obs_pts)

    zones = []
    for r0, c0, radius in zip(acc_r, acc_c, acc_rad):
        center = np.array([r0, c0], dtype=np.float64)
        near = np.asarray(tree.query_ball_point(center, radius + 1.5), dtype=np.int64)
        dn = np.hypot(*(obs_pts[near] - center).T)
        first = near[np.argmin(dn)]
        others = near[obs_own[near] != obs_own[first]]
        pool = others if len(others) else near
        sep = np.hypot(*(obs_pts[pool] - obs_pts[first]).T)
        second = pool[np.argmax(sep)]
        pa, pb = obs_pts[first], obs_pts[second]
        gap = None
        oa, ob = obs_own[first], obs_own[second]
        if oa != FRAME_BORDER and ob != FRAME_BORDER and oa != ob:
            gap, _ = polygon_gap_px(polys[oa], polys[ob])
        diameter_px = 2.0 * float(radius)
        diameter_m = float(px_to_meters(diameter_px, cam))
        area = zone_area(diameter_m)
        dx, dy = cam.pixel_to_offset(r0, c0)
        zones.append(PLZ(
            id=0,
            center_px=(float(r0), float(c0)),
            diameter_px=diameter_px,
            diameter_m=diameter_m,
            area_m2=area,
            edge_pair=((float(pa[0]), float(pa[1])), (float(pb[0]), float(pb[1]))),
            admitted=area >= min_area_m2,
            center_offset_m=(float(dx), float(dy)),
            gap_px=gap,
        ))
    # acceptance order is already by decreasing radius
    for i, z in enumerate(zones):
        z.id = i
    return zones


def detect_plz(edges: np.ndarray, cam: CameraModel, min_area_m2: float = MIN_PLZ_AREA_M2, **kw) -> list[PLZ]:
    """Admitted landing zones (area >= ``min_area_m2``), largest first."""
    return [z for z in plz_candidates(edges, cam, min_area_m2, **kw) if z.admitted]


def circle_is_empty(edges: np.ndarray, zone: PLZ) -> bool:
    """Rasterize the open disc of a zone and confirm it holds no edge pixel."""
    edges = np.asarray(edges) > 0
    r = zone.diameter_px / 2.0
    cr, cc = zone.center_px
    h, w = edges.shape
    r0, r1 = max(0, int(math.floor(cr - r))), min(h, int(math.ceil(cr + r)) + 1)
    c0, c1 = max(0, int(math.floor(cc - r))), min(w, int(math.ceil(cc + r)) + 1)
    yy, xx = np.mgrid[r0:r1, c0:c1]
    # relative slack absorbs rounding of r = sqrt(integer)
    inside = (yy - cr) ** 2 + (xx - cc) ** 2 < r * r * (1.0 - 1e-9)
    return not np.any(edges[r0:r1, c0:c1] & inside)
