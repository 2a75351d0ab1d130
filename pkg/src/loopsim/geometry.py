"""Planar geometry helpers shared across the simulator.

Angles are radians in (-pi, pi]. Polylines are float arrays of shape (N, 2)
with N >= 2 and no zero-length segments.
"""
from __future__ import annotations

import math

import numpy as np

TWO_PI = 2.0 * math.pi


def wrap_angle(a: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    r = math.remainder(a, TWO_PI)
    if r <= -math.pi:
        r += TWO_PI
    return r


def wrap_angles(a: np.ndarray) -> np.ndarray:
    """Vectorized wrap to (-pi, pi]."""
    r = np.remainder(np.asarray(a, dtype=float) + math.pi, TWO_PI) - math.pi
    # np.remainder gives [-pi, pi); move exact -pi to +pi
    return np.where(r <= -math.pi, r + TWO_PI, r)


def polyline_lengths(points: np.ndarray) -> np.ndarray:
    """Cumulative arc length at each vertex, starting at 0."""
    seg = np.linalg.norm(np.diff(points, axis=0), axis=1)
    return np.concatenate([[0.0], np.cumsum(seg)])


def polyline_length(points: np.ndarray) -> float:
    return float(polyline_lengths(points)[-1])


def point_at_arc(points: np.ndarray, cum: np.ndarray, s: float) -> np.ndarray:
    """Point at arc length s, linearly interpolated and clamped to the ends."""
    s = min(max(s, 0.0), float(cum[-1]))
    i = int(np.searchsorted(cum, s, side="right")) - 1
    i = min(i, len(points) - 2)
    seg = cum[i + 1] - cum[i]
    t = 0.0 if seg <= 0 else (s - cum[i]) / seg
    return points[i] + t * (points[i + 1] - points[i])


def heading_at_arc(points: np.ndarray, cum: np.ndarray, s: float) -> float:
    """Tangent heading of the segment containing arc length s."""
    s = min(max(s, 0.0), float(cum[-1]))
    i = int(np.searchsorted(cum, s, side="right")) - 1
    i = min(max(i, 0), len(points) - 2)
    d = points[i + 1] - points[i]
    return math.atan2(d[1], d[0])


def project_to_polyline(points: np.ndarray, p) -> tuple[float, float]:
    """Project p onto the polyline.

    Returns (arc length of the closest point, distance to it).
    """
    p = np.asarray(p, dtype=float)
    a = points[:-1]
    b = points[1:]
    ab = b - a
    denom = np.einsum("ij,ij->i", ab, ab)
    t = np.clip(np.einsum("ij,ij->i", p - a, ab) / np.maximum(denom, 1e-12), 0.0, 1.0)
    proj = a + t[:, None] * ab
    d = np.linalg.norm(proj - p, axis=1)
    i = int(np.argmin(d))
    cum = polyline_lengths(points)
    s = cum[i] + t[i] * math.sqrt(denom[i])
    return float(s), float(d[i])


def point_segment_distance(p, a, b) -> float:
    """Distance from point p to segment ab."""
    p = np.asarray(p, dtype=float)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    ab = b - a
    denom = float(ab @ ab)
    if denom <= 0.0:
        return float(np.linalg.norm(p - a))
    t = min(max(float((p - a) @ ab) / denom, 0.0), 1.0)
    return float(np.linalg.norm(a + t * ab - p))


def min_distance_to_polyline(points: np.ndarray, p) -> float:
    """Minimum distance from p to any segment of the polyline (vectorized)."""
    p = np.asarray(p, dtype=float)
    a = points[:-1]
    b = points[1:]
    ab = b - a
    denom = np.maximum(np.einsum("ij,ij->i", ab, ab), 1e-12)
    t = np.clip(np.einsum("ij,ij->i", p - a, ab) / denom, 0.0, 1.0)
    proj = a + t[:, None] * ab
    return float(np.min(np.linalg.norm(proj - p, axis=1)))


def segment_segment_distance(p1, p2, q1, q2) -> float:
    """Minimum distance between segments p1p2 and q1q2."""
    if _segments_intersect(p1, p2, q1, q2):
        return 0.0
    return min(
        point_segment_distance(p1, q1, q2),
        point_segment_distance(p2, q1, q2),
        point_segment_distance(q1, p1, p2),
        point_segment_distance(q2, p1, p2),
    )


def _orient(a, b, c) -> float:
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def _segments_intersect(p1, p2, q1, q2) -> bool:
    d1 = _orient(q1, q2, p1)
    d2 = _orient(q1, q2, p2)
    d3 = _orient(p1, p2, q1)
    d4 = _orient(p1, p2, q2)
    if ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)):
        return True
    return False


def point_in_ring(p, ring: np.ndarray) -> bool:
    """Even-odd ray-cast containment test.

    The polyline is treated as a closed ring (last point joins the first if
    they differ). Points exactly on the boundary may land on either side;
    callers that care about the boundary must test distance separately.
    """
    x, y = float(p[0]), float(p[1])
    pts = ring
    if not np.array_equal(pts[0], pts[-1]):
        pts = np.vstack([pts, pts[:1]])
    xa, ya = pts[:-1, 0], pts[:-1, 1]
    xb, yb = pts[1:, 0], pts[1:, 1]
    crosses = (ya > y) != (yb > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        xint = xa + (y - ya) * (xb - xa) / (yb - ya)
    hit = crosses & (x < xint)
    return bool(np.count_nonzero(hit) % 2 == 1)


def rotation(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def to_frame(points: np.ndarray, origin, theta: float) -> np.ndarray:
    """World points -> coordinates of a frame at origin with heading theta."""
    rel = np.asarray(points, dtype=float) - np.asarray(origin, dtype=float)
    c, s = math.cos(theta), math.sin(theta)
    x = rel[..., 0] * c + rel[..., 1] * s
    y = -rel[..., 0] * s + rel[..., 1] * c
    return np.stack([x, y], axis=-1)
