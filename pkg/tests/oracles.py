"""Independent brute-force oracles the fast paths are checked against.

Everything here is deliberately slow, scalar Python: per-voxel loops and
textbook formulas with no shared code with the package internals.
"""

from __future__ import annotations

import math


def ray_cast_inside(px: float, py: float, polygon: list[tuple[float, float]]) -> bool:
    """Even-odd point-in-polygon: +x ray, edges half-open [lower, upper)."""
    inside = False
    n = len(polygon)
    for idx in range(n):
        ax, ay = polygon[idx]
        bx, by = polygon[(idx + 1) % n]
        if (ay > py) != (by > py):
            x_cross = ax + (py - ay) * (bx - ax) / (by - ay)
            if px < x_cross:
                inside = not inside
    return inside


def point_segment_distance(px, py, ax, ay, bx, by) -> float:
    dx, dy = bx - ax, by - ay
    length2 = dx * dx + dy * dy
    if length2 == 0:
        return math.hypot(px - ax, py - ay)
    t = ((px - ax) * dx + (py - ay) * dy) / length2
    t = min(1.0, max(0.0, t))
    return math.hypot(px - (ax + t * dx), py - (ay + t * dy))


def min_edge_distance(px, py, polygon) -> float:
    n = len(polygon)
    return min(
        point_segment_distance(px, py, *polygon[i], *polygon[(i + 1) % n])
        for i in range(n)
    )


def brute_overlap_counts(flat_a, flat_b) -> tuple[int, int, int]:
    """(|A|, |B|, |A∩B|) by walking every voxel."""
    na = nb = ni = 0
    for a, b in zip(flat_a, flat_b):
        if a:
            na += 1
        if b:
            nb += 1
        if a and b:
            ni += 1
    return na, nb, ni


def brute_dice(flat_a, flat_b) -> float:
    na, nb, ni = brute_overlap_counts(flat_a, flat_b)
    if na + nb == 0:
        return 1.0
    return 2.0 * ni / (na + nb)


def ball_voxel_set(cols, rows, slices, spacing, center, radius) -> set[tuple[int, int, int]]:
    """All (i,j,k) whose world center is within ``radius`` mm of ``center``.

    Identity-orientation grids only: world = index * spacing per axis.
    ``spacing`` = (col, row, slice) step; ``center`` in world mm.
    """
    hits = set()
    for k in range(slices):
        for j in range(rows):
            for i in range(cols):
                d = math.sqrt(
                    (i * spacing[0] - center[0]) ** 2
                    + (j * spacing[1] - center[1]) ** 2
                    + (k * spacing[2] - center[2]) ** 2)
                if d <= radius:
                    hits.add((i, j, k))
    return hits


def random_simple_polygon(rng, n_vertices: int, cx: float, cy: float,
                          r_min: float, r_max: float) -> list[tuple[float, float]]:
    """Star-shaped (hence simple) polygon around (cx, cy)."""
    angles = sorted(rng.uniform(0, 2 * math.pi) for _ in range(n_vertices))
    # Collapse near-duplicate angles to keep edges non-degenerate.
    filtered = [angles[0]]
    for a in angles[1:]:
        if a - filtered[-1] > 1e-3:
            filtered.append(a)
    while len(filtered) < 3:
        filtered.append(filtered[-1] + 0.5)
    return [
        (cx + rng.uniform(r_min, r_max) * math.cos(a),
         cy + rng.uniform(r_min, r_max) * math.sin(a))
        for a in filtered
    ]
