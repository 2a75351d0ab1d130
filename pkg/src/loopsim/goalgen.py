"""Equidistant goal-variant generation over the lane graph.

From the ego's start lane, depth-first search enumerates lane paths whose arc
length (measured from the ego's projected start point) exceeds the logged
start-to-goal distance. Entering a lane costs by how the lane is reached:
lane changes are expensive, turns and straight continuations cheap; paths
above the cost budget are dropped. Each surviving path yields one candidate
goal at exactly the logged distance along it, so every candidate is
equidistant from the start. Greedy non-maximum suppression (ascending cost)
thins candidates closer than a radius; the logged goal is injected at cost 0
ahead of all paths so it always survives.

Conventions: transitions happen at the current lane's end. Exits enter the
next lane at its start; lane changes enter the neighbor at the arc offset
matched to the current lane's end point, consuming no distance. A lane is
never entered twice on one path.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import (heading_at_arc, point_at_arc, polyline_lengths,
                       project_to_polyline, wrap_angle)
from .scenario import Lane, LaneGraph, Scenario, CURRENT_FRAME

GO = "go"
TURN_LEFT = "turn_left"
TURN_RIGHT = "turn_right"
LANE_CHANGE = "lane_change"

START_LANE_TOLERANCE = 5.0  # m, max projection distance of ego onto a lane


class GoalGenError(ValueError):
    pass


@dataclass(frozen=True)
class ActionCosts:
    lane_change: float = 5.0
    turn_left: float = 1.0
    turn_right: float = 1.0
    go: float = 1.0
    max_cost: float = 10.0
    nms_radius: float = 2.5
    turn_threshold: float = math.radians(30.0)

    def of(self, action: str) -> float:
        return {GO: self.go, TURN_LEFT: self.turn_left,
                TURN_RIGHT: self.turn_right, LANE_CHANGE: self.lane_change}[action]


@dataclass(frozen=True)
class LanePath:
    lane_ids: tuple[str, ...]
    actions: tuple[str, ...]      # action entering each lane; first entry is ""
    pieces: tuple[np.ndarray, ...]  # traversed sub-centerline per lane (may be empty)
    cost: float

    @property
    def length(self) -> float:
        return sum(_piece_length(p) for p in self.pieces)


@dataclass(frozen=True)
class GoalCandidate:
    x: float
    y: float
    cost: float
    lane_ids: tuple[str, ...]
    actions: tuple[str, ...]


@dataclass(frozen=True)
class GoalSet:
    goals: tuple[GoalCandidate, ...]
    radius: float
    target_distance: float


def _piece_length(points: np.ndarray) -> float:
    if len(points) < 2:
        return 0.0
    return float(np.sum(np.linalg.norm(np.diff(points, axis=0), axis=1)))


def _sub_polyline(points: np.ndarray, s_from: float) -> np.ndarray:
    """Tail of the polyline from arc length s_from to the end."""
    cum = polyline_lengths(points)
    total = float(cum[-1])
    if s_from >= total:
        return points[-1:].copy()
    start = point_at_arc(points, cum, s_from)
    i = int(np.searchsorted(cum, s_from, side="right"))
    return np.vstack([start, points[i:]])


def lane_turn(lane: Lane) -> float:
    """Net heading change along the lane centerline, wrapped."""
    cl = lane.centerline
    h0 = math.atan2(cl[1, 1] - cl[0, 1], cl[1, 0] - cl[0, 0])
    h1 = math.atan2(cl[-1, 1] - cl[-2, 1], cl[-1, 0] - cl[-2, 0])
    return wrap_angle(h1 - h0)


def classify_transition(lane_graph: LaneGraph, from_id: str, to_id: str,
                        costs: ActionCosts) -> str:
    """Label for entering to_id from from_id (neighbor -> lane change,
    exit -> turn left/right/go by the target lane's net heading change)."""
    fr = lane_graph.lane(from_id)
    if to_id in (fr.left_neighbor, fr.right_neighbor):
        return LANE_CHANGE
    if to_id not in fr.exits:
        raise GoalGenError(f"no transition from {from_id!r} to {to_id!r}")
    turn = lane_turn(lane_graph.lane(to_id))
    if turn > costs.turn_threshold:
        return TURN_LEFT
    if turn < -costs.turn_threshold:
        return TURN_RIGHT
    return GO


def find_start_lane(lane_graph: LaneGraph, pos) -> tuple[str, float]:
    """Nearest lane and arc offset for a position; error beyond tolerance."""
    best = None
    for ln in sorted(lane_graph.lanes, key=lambda l: l.lane_id):
        s, d = project_to_polyline(ln.centerline, pos)
        if best is None or d < best[2] - 1e-12:
            best = (ln.lane_id, s, d)
    if best is None or best[2] > START_LANE_TOLERANCE:
        raise GoalGenError(f"start position {tuple(pos)} not on any lane")
    return best[0], best[1]


def search_paths(lane_graph: LaneGraph, start_lane: str, start_arc: float,
                 target_distance: float, costs: ActionCosts) -> list[LanePath]:
    """All lane paths longer than target_distance with cost <= max_cost."""
    out: list[LanePath] = []
    first = _sub_polyline(lane_graph.lane(start_lane).centerline, start_arc)

    def expand(lane_id: str, pieces: list[np.ndarray], lane_ids: list[str],
               actions: list[str], cost: float, length: float,
               visited: frozenset[str]) -> None:
        if length > target_distance:
            if cost <= costs.max_cost:
                out.append(LanePath(tuple(lane_ids), tuple(actions),
                                    tuple(p.copy() for p in pieces), cost))
            return
        lane = lane_graph.lane(lane_id)
        end_point = pieces[-1][-1] if len(pieces[-1]) else lane.centerline[-1]
        nexts = []
        for ex in lane.exits:
            nexts.append((ex, classify_transition(lane_graph, lane_id, ex, costs), 0.0))
        for nb in (lane.left_neighbor, lane.right_neighbor):
            if nb is not None:
                s, _ = project_to_polyline(lane_graph.lane(nb).centerline, end_point)
                nexts.append((nb, LANE_CHANGE, s))
        for to_id, action, offset in sorted(nexts, key=lambda t: t[0]):
            if to_id in visited:
                continue
            new_cost = cost + costs.of(action)
            if new_cost > costs.max_cost:
                continue
            piece = _sub_polyline(lane_graph.lane(to_id).centerline, offset)
            expand(to_id, pieces + [piece], lane_ids + [to_id],
                   actions + [action], new_cost,
                   length + _piece_length(piece), visited | {to_id})

    expand(start_lane, [first], [start_lane], [""], 0.0,
           _piece_length(first), frozenset([start_lane]))
    return out


def goals_from_paths(paths: list[LanePath], target_distance: float) -> list[GoalCandidate]:
    """One candidate per path, at target_distance along its pieces."""
    cands = []
    for path in paths:
        remaining = target_distance
        point = None
        for piece in path.pieces:
            plen = _piece_length(piece)
            if remaining <= plen and plen > 0:
                cum = polyline_lengths(piece)
                point = point_at_arc(piece, cum, remaining)
                break
            remaining -= plen
        if point is None:
            raise GoalGenError(
                f"path {path.lane_ids} shorter than target {target_distance}")
        cands.append(GoalCandidate(float(point[0]), float(point[1]),
                                   path.cost, path.lane_ids, path.actions))
    return cands


def nms_goals(cands: list[GoalCandidate], radius: float) -> list[GoalCandidate]:
    """Greedy suppression in ascending (cost, lane-id) order."""
    kept: list[GoalCandidate] = []
    for c in sorted(cands, key=lambda c: (c.cost, c.lane_ids)):
        if all(math.hypot(c.x - k.x, c.y - k.y) >= radius for k in kept):
            kept.append(c)
    return kept


def build_goal_set(sc: Scenario, costs: ActionCosts = ActionCosts()) -> GoalSet:
    """Goal variants for a scenario; the logged goal is always entry 0."""
    sdc = sc.sdc_track.state_at(CURRENT_FRAME)
    start_lane, start_arc = find_start_lane(sc.lane_graph, (sdc.x, sdc.y))
    paths = search_paths(sc.lane_graph, start_lane, start_arc,
                         sc.goal_distance, costs)
    cands = goals_from_paths(paths, sc.goal_distance)
    original = GoalCandidate(sc.goal[0], sc.goal[1], 0.0, (), ())
    kept = nms_goals([original] + cands, costs.nms_radius)
    return GoalSet(goals=tuple(kept), radius=costs.nms_radius,
                   target_distance=sc.goal_distance)


# ---------------------------------------------------------------------------
# routing (used by the lane-follow policy)

LC_BLEND = 15.0  # m of neighbor lane skipped so a lane change ramps in diagonally


@dataclass(frozen=True)
class RoutePlan:
    points: np.ndarray        # (M, 2) control polyline, jumps blended
    cum: np.ndarray           # (M,) cumulative arc length
    speed_limits: np.ndarray  # (M,) per-point lane speed limit

    def point_at(self, s: float) -> np.ndarray:
        return point_at_arc(self.points, self.cum, s)

    def heading_at(self, s: float) -> float:
        return heading_at_arc(self.points, self.cum, s)

    def speed_at(self, s: float) -> float:
        i = int(np.searchsorted(self.cum, min(max(s, 0.0), float(self.cum[-1])),
                                side="right")) - 1
        return float(self.speed_limits[min(max(i, 0), len(self.speed_limits) - 1)])

    @property
    def length(self) -> float:
        return float(self.cum[-1])


def route_to_point(lane_graph: LaneGraph, start_pos, goal,
                   costs: ActionCosts = ActionCosts()) -> RoutePlan | None:
    """Cheapest lane path passing near the goal, as a control polyline.

    Returns None when no path with cost <= max_cost comes within the start
    tolerance of the goal.
    """
    try:
        start_lane, start_arc = find_start_lane(lane_graph, start_pos)
    except GoalGenError:
        return None
    gx, gy = float(goal[0]), float(goal[1])
    cap = math.hypot(gx - start_pos[0], gy - start_pos[1]) + 100.0
    candidates: list[tuple[float, float, list[tuple[np.ndarray, float]]]] = []

    def expand(lane_id, pieces, cost, length, visited):
        cl = lane_graph.lane(lane_id)
        done = length > cap
        if not done:
            lane = lane_graph.lane(lane_id)
            end_point = pieces[-1][0][-1] if len(pieces[-1][0]) else lane.centerline[-1]
            nexts = []
            for ex in lane.exits:
                nexts.append((ex, classify_transition(lane_graph, lane_id, ex, costs), 0.0))
            for nb in (lane.left_neighbor, lane.right_neighbor):
                if nb is not None:
                    s, _ = project_to_polyline(lane_graph.lane(nb).centerline, end_point)
                    nexts.append((nb, LANE_CHANGE, s))
            grew = False
            for to_id, action, offset in sorted(nexts, key=lambda t: t[0]):
                if to_id in visited:
                    continue
                new_cost = cost + costs.of(action)
                if new_cost > costs.max_cost:
                    continue
                sub = _sub_polyline(lane_graph.lane(to_id).centerline, offset)
                if action == LANE_CHANGE:
                    sub = _sub_polyline(lane_graph.lane(to_id).centerline,
                                        offset + LC_BLEND)
                grew = True
                expand(to_id, pieces + [(sub, lane_graph.lane(to_id).speed_limit)],
                       new_cost, length + _piece_length(sub), visited | {to_id})
            done = not grew
        if done:
            pts, limits = _join_pieces(pieces)
            if len(pts) >= 2:
                _, d = project_to_polyline(pts, (gx, gy))
                candidates.append((d, cost, pieces))

    first = _sub_polyline(lane_graph.lane(start_lane).centerline, start_arc)
    expand(start_lane, [(first, lane_graph.lane(start_lane).speed_limit)],
           0.0, _piece_length(first), frozenset([start_lane]))
    if not candidates:
        return None
    candidates.sort(key=lambda c: (round(c[0], 6), c[1]))
    dist, _, pieces = candidates[0]
    if dist > START_LANE_TOLERANCE:
        return None
    pts, limits = _join_pieces(pieces)
    s_goal, _ = project_to_polyline(pts, (gx, gy))
    return _truncate_route(pts, limits, s_goal)


def _join_pieces(pieces) -> tuple[np.ndarray, np.ndarray]:
    pts: list[np.ndarray] = []
    limits: list[float] = []
    for piece, limit in pieces:
        for q in piece:
            if pts and math.hypot(q[0] - pts[-1][0], q[1] - pts[-1][1]) < 1e-9:
                continue
            pts.append(np.asarray(q, dtype=float))
            limits.append(float(limit))
    if not pts:
        return np.zeros((0, 2)), np.zeros(0)
    return np.array(pts), np.array(limits)


def _truncate_route(pts: np.ndarray, limits: np.ndarray, s_goal: float) -> RoutePlan:
    cum = polyline_lengths(pts)
    end = point_at_arc(pts, cum, s_goal)
    i = int(np.searchsorted(cum, s_goal, side="right"))
    pts2 = np.vstack([pts[:i], end])
    limits2 = np.concatenate([limits[:i], limits[max(i - 1, 0):max(i, 1)]])
    # drop a duplicate tail point if the goal projects exactly onto a vertex
    if len(pts2) >= 2 and np.linalg.norm(pts2[-1] - pts2[-2]) < 1e-9:
        pts2 = pts2[:-1]
        limits2 = limits2[:-1]
    return RoutePlan(points=pts2, cum=polyline_lengths(pts2), speed_limits=limits2)
