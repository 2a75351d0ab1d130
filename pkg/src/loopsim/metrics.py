"""Collision/offroad geometry, per-step rewards, and episode classification.

Reward terms (weights multiply the first three):

    R_collision  = min(d_collision - 1.0, 0)
    R_offroad    = clip(-1.0 - d_offroad, -2, 0)
    R_progress   = clip(d_progress - 0.1, -2, 1)
    R_smoothness = -0.5 if (delta_accel > 1.5 or delta_turning > 0.1) else 0
    R_completion = 10 if is_goal else 0

d_collision is the gap between the ego box and the nearest other box
(negative = penetration, +inf when there are no other agents); d_offroad is
the signed distance to the nearest road edge / solid line (negative on-road);
d_progress is the per-step reduction in distance-to-goal.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import (min_distance_to_polyline, point_in_ring,
                       segment_segment_distance)
from .scenario import LaneGraph

GOAL_RADIUS = 2.0  # completion threshold, meters


@dataclass(frozen=True)
class RewardWeights:
    offroad: float = 1.0
    collision: float = 1.0
    progress: float = 10.0


@dataclass(frozen=True)
class StepSignals:
    d_collision: float   # m; <= 0 means penetration; +inf with no other agents
    d_offroad: float     # m; signed, negative on-road
    d_progress: float    # m; reduction of goal distance this step
    delta_accel: float   # m/s^2; |accel_t - accel_{t-1}|
    delta_turning: float  # rad; |steer_t - steer_{t-1}|
    is_goal: bool

    def __post_init__(self):
        for name in ("d_offroad", "d_progress", "delta_accel", "delta_turning"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ValueError(f"StepSignals.{name}: non-finite value {v}")
        if math.isnan(self.d_collision):
            raise ValueError("StepSignals.d_collision: NaN")


def box_corners(x: float, y: float, heading: float,
                length: float, width: float) -> np.ndarray:
    """Corners of an oriented box, counterclockwise. Length runs along heading."""
    c, s = math.cos(heading), math.sin(heading)
    hl, hw = 0.5 * length, 0.5 * width
    dx = np.array([hl, -hl, -hl, hl])
    dy = np.array([hw, hw, -hw, -hw])
    return np.stack([x + dx * c - dy * s, y + dx * s + dy * c], axis=1)


def _project(corners: np.ndarray, axis: np.ndarray) -> tuple[float, float]:
    p = corners @ axis
    return float(p.min()), float(p.max())


def box_gap(box_a, box_b) -> float:
    """Minimum separation between two oriented boxes.

    Positive = clearance, negative = penetration depth (minimum translation
    along a face axis that would separate the boxes), zero = exact touch.
    Boxes are (x, y, heading, length, width).
    """
    ca = box_corners(*box_a)
    cb = box_corners(*box_b)
    axes = []
    for c, heading in ((ca, box_a[2]), (cb, box_b[2])):
        axes.append(np.array([math.cos(heading), math.sin(heading)]))
        axes.append(np.array([-math.sin(heading), math.cos(heading)]))
    depth = math.inf
    separated = False
    for axis in axes:
        amin, amax = _project(ca, axis)
        bmin, bmax = _project(cb, axis)
        overlap = min(amax, bmax) - max(amin, bmin)
        if overlap < 0:
            separated = True
            break
        # push distance along this axis; differs from the raw overlap when one
        # projection interval contains the other
        depth = min(depth, amax - bmin, bmax - amin)
    if not separated:
        return -depth
    best = math.inf
    for i in range(4):
        p1, p2 = ca[i], ca[(i + 1) % 4]
        for j in range(4):
            q1, q2 = cb[j], cb[(j + 1) % 4]
            best = min(best, segment_segment_distance(p1, p2, q1, q2))
    return best


def collision_gap(ego_box, other_boxes) -> float:
    """Gap to the nearest other box; +inf when other_boxes is empty."""
    best = math.inf
    for ob in other_boxes:
        best = min(best, box_gap(ego_box, ob))
    return best


def on_road(pos, lane_graph: LaneGraph) -> bool:
    """Containment in the drivable region bounded by the road-edge rings.

    Each road-edge polyline is treated as a closed ring; overall containment
    is the even-odd parity across all rings, so interior rings act as holes.
    """
    parity = False
    for ring in lane_graph.road_edges:
        if point_in_ring(pos, ring):
            parity = not parity
    return parity


def offroad_distance(pos, lane_graph: LaneGraph) -> float:
    """Signed distance to the nearest road edge or solid line.

    Negative on-road, positive off-road, 0 exactly on a boundary polyline.
    """
    if not lane_graph.road_edges:
        raise ValueError("offroad_distance: lane graph has no road edges")
    d = math.inf
    for line in list(lane_graph.road_edges) + list(lane_graph.solid_lines):
        d = min(d, min_distance_to_polyline(line, pos))
    if d == 0.0:
        return 0.0
    return -d if on_road(pos, lane_graph) else d


def step_reward(sig: StepSignals, w: RewardWeights) -> tuple[float, dict]:
    """Weighted sum of the five reward terms; returns (total, per-term dict)."""
    r_col = min(sig.d_collision - 1.0, 0.0)
    r_off = float(np.clip(-1.0 - sig.d_offroad, -2.0, 0.0))
    r_prog = float(np.clip(sig.d_progress - 0.1, -2.0, 1.0))
    r_smooth = -0.5 if (sig.delta_accel > 1.5 or sig.delta_turning > 0.1) else 0.0
    r_comp = 10.0 if sig.is_goal else 0.0
    total = (w.collision * r_col + w.offroad * r_off + w.progress * r_prog
             + r_smooth + r_comp)
    return total, {"collision": r_col, "offroad": r_off, "progress": r_prog,
                   "smoothness": r_smooth, "completion": r_comp}


def is_uncomfortable(accel: float, max_accel: float) -> bool:
    """True when the commanded acceleration magnitude exceeds the vehicle limit."""
    return abs(accel) > max_accel


TERMINALS = ("collided", "offroad", "completed", "stuck")


def classify_episode(signals: list[StepSignals]) -> str:
    """Episode outcome with fixed priority: collided > offroad > completed > stuck."""
    if any(s.d_collision <= 0.0 for s in signals):
        return "collided"
    if any(s.d_offroad > 0.0 for s in signals):
        return "offroad"
    if any(s.is_goal for s in signals):
        return "completed"
    return "stuck"


@dataclass(frozen=True)
class MetricsReport:
    n: int
    completed: float
    collided: float
    offroad: float
    stuck: float

    @classmethod
    def from_terminals(cls, terminals: list[str]) -> "MetricsReport":
        n = len(terminals)
        if n == 0:
            raise ValueError("MetricsReport: empty scenario set")
        counts = {t: 0 for t in TERMINALS}
        for t in terminals:
            counts[t] += 1
        return cls(n=n,
                   completed=counts["completed"] / n,
                   collided=counts["collided"] / n,
                   offroad=counts["offroad"] / n,
                   stuck=counts["stuck"] / n)

    def row(self) -> str:
        return (f"completed={self.completed:.3f} collided={self.collided:.3f} "
                f"offroad={self.offroad:.3f} stuck={self.stuck:.3f} n={self.n}")
