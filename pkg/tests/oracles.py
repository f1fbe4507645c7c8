"""Independent brute-force references used by the unit and acceptance tests."""

import math
import random

import numpy as np
from scipy import ndimage
from shapely.geometry import MultiPoint


def closure_clusters(point_sets, radius):
    """Connected components of the graph 'min pairwise point gap < radius', by BFS over all pairs."""
    n = len(point_sets)
    adj = [[False] * n for _ in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            d = min(math.dist(p, q) for p in point_sets[i] for q in point_sets[j])
            adj[i][j] = adj[j][i] = d < radius
    seen, groups = set(), []
    for s in range(n):
        if s in seen:
            continue
        comp, todo = [], [s]
        seen.add(s)
        while todo:
            a = todo.pop()
            comp.append(a)
            for b in range(n):
                if adj[a][b] and b not in seen:
                    seen.add(b)
                    todo.append(b)
        groups.append(tuple(sorted(comp)))
    return sorted(groups)


def _pt_seg(p, a, b):
    ax, ay = a
    bx, by = b
    dx, dy = bx - ax, by - ay
    L = dx * dx + dy * dy
    t = 0.0 if L == 0 else max(0.0, min(1.0, ((p[0] - ax) * dx + (p[1] - ay) * dy) / L))
    return math.hypot(p[0] - ax - t * dx, p[1] - ay - t * dy)


def hull_pair_gap(pts1, pts2):
    """Exhaustive gap between the convex hulls of two point sets (0 if they meet)."""
    g1 = MultiPoint([tuple(p) for p in pts1]).convex_hull
    g2 = MultiPoint([tuple(p) for p in pts2]).convex_hull
    if g1.intersects(g2):
        return 0.0
    v1 = list(g1.exterior.coords)[:-1] if g1.geom_type == "Polygon" else list(g1.coords)
    v2 = list(g2.exterior.coords)[:-1] if g2.geom_type == "Polygon" else list(g2.coords)

    def edges(v):
        return [(v[i], v[(i + 1) % len(v)]) for i in range(len(v))] if len(v) > 1 else [(v[0], v[0])]

    best = math.inf
    for p in v1:
        for a, b in edges(v2):
            best = min(best, _pt_seg(p, a, b))
    for p in v2:
        for a, b in edges(v1):
            best = min(best, _pt_seg(p, a, b))
    return best


def random_contours(rng: random.Random, n, size=200):
    """Random short pixel paths (as (row, col) lists), some near each other."""
    out = []
    for _ in range(n):
        r, c = rng.randrange(size), rng.randrange(size)
        path = [(r, c)]
        for _ in range(rng.randrange(1, 25)):
            r = min(size - 1, max(0, r + rng.choice((-1, 0, 1))))
            c = min(size - 1, max(0, c + rng.choice((-1, 0, 1))))
            path.append((r, c))
        out.append(sorted(set(path)))
    return out


def pixel_lec(edges, center, search):
    """Largest empty circle with a center on the pixel grid within ``search`` px of ``center``.

    Radius at a center is the distance to the nearest edge pixel or to the
    virtual border one pixel outside the frame, found by brute force.
    """
    h, w = edges.shape
    er, ec = np.nonzero(edges)
    er = er.astype(float)
    ec = ec.astype(float)
    best = 0.0
    cr, cc = center
    for r in range(int(math.floor(cr - search)), int(math.ceil(cr + search)) + 1):
        for c in range(int(math.floor(cc - search)), int(math.ceil(cc + search)) + 1):
            if not (0 <= r < h and 0 <= c < w):
                continue
            rad = min(r + 1, h - r, c + 1, w - c)
            if len(er):
                rad = min(rad, float(np.min(np.hypot(er - r, ec - c))))
            best = max(best, rad)
    return 2.0 * best


def flood_components(edges):
    """8-connected components by explicit flood fill; returns sorted component sizes."""
    edges = np.asarray(edges) > 0
    seen = np.zeros_like(edges)
    sizes = []
    h, w = edges.shape
    for r0 in range(h):
        for c0 in range(w):
            if edges[r0, c0] and not seen[r0, c0]:
                stack = [(r0, c0)]
                seen[r0, c0] = True
                n = 0
                while stack:
                    r, c = stack.pop()
                    n += 1
                    for dr in (-1, 0, 1):
                        for dc in (-1, 0, 1):
                            q = (r + dr, c + dc)
                            if 0 <= q[0] < h and 0 <= q[1] < w and edges[q] and not seen[q]:
                                seen[q] = True
                                stack.append(q)
                sizes.append(n)
    return sorted(sizes)


def is_disc_edge_free(edges, center, radius):
    yy, xx = np.mgrid[0:edges.shape[0], 0:edges.shape[1]]
    return not np.any((edges > 0) & ((yy - center[0]) ** 2 + (xx - center[1]) ** 2 < radius ** 2 - 1e-6))


__all__ = ["closure_clusters", "hull_pair_gap", "random_contours", "pixel_lec", "flood_components",
           "is_disc_edge_free", "ndimage"]
