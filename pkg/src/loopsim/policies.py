"""Scripted planners: logged-trajectory replay and route-following IDM.

A planner is any object with observe(view) -> PlannerOutput, where view is
the per-step simulator snapshot. Waypoint planners emit at least 10 future
poses 0.1 s apart; action planners emit a single (accel, steer) command.
Planners hold no mutable state besides per-episode caches, so one planner
instance serves exactly one episode.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import Action
from .geometry import project_to_polyline
from .goalgen import route_to_point, RoutePlan
from .scenario import CURRENT_FRAME, N_FRAMES, Scenario, Track

PLAN_HORIZON = 10
IDM_FALLBACK_SPEED = 15.0  # m/s desired speed when no lane limit applies
LATERAL_TOLERANCE = 2.0    # m, max lateral offset for a leader on the path


class PolicyError(RuntimeError):
    """Planner cannot produce output; the episode is marked stuck."""


class UnroutableGoalError(PolicyError):
    pass


class AgentRemovedError(PolicyError):
    pass


@dataclass(frozen=True)
class PlannerOutput:
    """Either a waypoint plan (K >= 10 rows of x, y, heading) or one action."""
    waypoints: np.ndarray | None = None
    action: Action | None = None

    def __post_init__(self):
        if (self.waypoints is None) == (self.action is None):
            raise ValueError("PlannerOutput: exactly one of waypoints/action")
        if self.waypoints is not None:
            wp = np.asarray(self.waypoints, dtype=float)
            if wp.ndim != 2 or wp.shape[1] != 3 or wp.shape[0] < PLAN_HORIZON:
                raise ValueError(f"PlannerOutput.waypoints: shape {wp.shape}, "
                                 f"need (>={PLAN_HORIZON}, 3)")
            if not np.all(np.isfinite(wp)):
                raise ValueError("PlannerOutput.waypoints: non-finite")
            object.__setattr__(self, "waypoints", wp)


# ---------------------------------------------------------------------------
# intelligent driver model

@dataclass(frozen=True)
class IdmParams:
    time_headway: float = 1.5    # s
    min_gap: float = 2.0         # m
    max_accel: float = 1.5       # m/s^2
    comfort_decel: float = 1.67  # m/s^2
    exponent: float = 4.0
    hard_decel: float = 5.0      # m/s^2, clamp floor for the output

    def __post_init__(self):
        for name in ("time_headway", "min_gap", "max_accel", "comfort_decel",
                     "exponent", "hard_decel"):
            if getattr(self, name) <= 0:
                raise ValueError(f"IdmParams.{name}: must be positive")


def idm_accel(v: float, gap: float, closing_speed: float,
              desired_speed: float, p: IdmParams = IdmParams()) -> float:
    """IDM longitudinal acceleration, clamped to [-hard_decel, max_accel].

    gap is bumper-to-bumper distance to the leader (math.inf with no leader),
    closing_speed is v - v_leader.
    """
    if gap <= 0.0:
        return -p.hard_decel
    free = 1.0 - (max(v, 0.0) / desired_speed) ** p.exponent
    s_star = (p.min_gap + v * p.time_headway
              + v * closing_speed / (2.0 * math.sqrt(p.max_accel * p.comfort_decel)))
    interaction = 0.0 if math.isinf(gap) else (s_star / gap) ** 2
    a = p.max_accel * (free - interaction)
    return min(max(a, -p.hard_decel), p.max_accel)


def idm_equilibrium_gap(v: float, desired_speed: float,
                        p: IdmParams = IdmParams()) -> float:
    """Steady-state gap behind a leader moving at the same speed v."""
    return (p.min_gap + v * p.time_headway) / math.sqrt(
        1.0 - (v / desired_speed) ** p.exponent)


def find_leader(points: np.ndarray, cum: np.ndarray, s_self: float,
                self_length: float, others) -> tuple[float, float] | None:
    """Nearest agent ahead along a path polyline.

    others yields (x, y, length, speed). An agent counts when its center
    projects onto the path within LATERAL_TOLERANCE and strictly ahead of
    s_self. Returns (bumper gap, leader speed) or None.
    """
    best = None
    for (x, y, length, speed) in others:
        s, d = project_to_polyline(points, (x, y))
        if d > LATERAL_TOLERANCE or s <= s_self:
            continue
        gap = (s - s_self) - 0.5 * (self_length + length)
        if best is None or gap < best[0]:
            best = (gap, speed)
    return best


# ---------------------------------------------------------------------------
# planners

def expert_waypoints(track: Track, frame: int, horizon: int = PLAN_HORIZON) -> np.ndarray:
    """Logged poses for frames frame+1 .. frame+horizon.

    Lookahead past the last frame repeats the final valid pose. Raises
    AgentRemovedError when the very next frame is invalid (agent disappears).
    """
    if frame + 1 >= N_FRAMES or not track.valid_at(frame + 1):
        raise AgentRemovedError(f"agent {track.agent_id}: no valid frame after {frame}")
    rows = []
    last = None
    for k in range(1, horizon + 1):
        f = frame + k
        if f < N_FRAMES and track.valid_at(f):
            st = track.state_at(f)
            last = [st.x, st.y, st.heading]
        rows.append(list(last))
    return np.array(rows, dtype=float)


class ExpertPlanner:
    """Replays the logged future of the ego track."""

    def __init__(self, scenario: Scenario):
        self.track = scenario.sdc_track

    def observe(self, view) -> PlannerOutput:
        frame = CURRENT_FRAME + view.step
        return PlannerOutput(waypoints=expert_waypoints(self.track, frame))


class StationaryPlanner:
    """Holds the initial pose (used to park the ego in NPC interaction tests)."""

    def __init__(self, scenario: Scenario):
        pass

    def observe(self, view) -> PlannerOutput:
        wp = np.tile([view.ego.x, view.ego.y, view.ego.theta], (PLAN_HORIZON, 1))
        return PlannerOutput(waypoints=wp)


class JitterPlanner:
    """Adds seeded Gaussian position noise to another planner's waypoints.

    Stands in for the prediction error of a learned trajectory model. With
    the tracking controller enabled the noise is filtered through the
    feasibility and smoothness costs; with tracking disabled the perturbed
    points are executed verbatim, so the same policy degrades sharply.
    """

    def __init__(self, inner, rng: np.random.Generator, sigma: float = 0.8):
        self.inner = inner
        self.rng = rng
        self.sigma = sigma

    def observe(self, view) -> PlannerOutput:
        out = self.inner.observe(view)
        if out.waypoints is None:
            raise PolicyError("JitterPlanner requires a waypoint-mode planner")
        wp = np.array(out.waypoints, dtype=float)
        wp[:, :2] += self.rng.normal(0.0, self.sigma, size=(len(wp), 2))
        return PlannerOutput(waypoints=wp)


class LaneFollowPlanner:
    """Follows the cheapest lane-graph route to the goal.

    Waypoints sit on the route centerline and advance with an IDM speed
    profile: the desired speed is the lane limit over the next stretch and
    the leader is the nearest agent ahead on the route. The route ends at
    the goal and waypoints clamp there, so the vehicle drives through the
    completion radius at speed and only halts if the episode outlives the
    goal.

    open_loop=True plans the whole episode once at the first observe() and
    replays the stored waypoints with no feedback afterwards.
    """

    LOOKAHEAD = 15.0  # m of route scanned for upcoming speed limits

    def __init__(self, scenario: Scenario, idm: IdmParams = IdmParams(),
                 open_loop: bool = False, dt: float = 0.1):
        self.scenario = scenario
        self.idm = idm
        self.open_loop = open_loop
        self.dt = dt
        self.route: RoutePlan | None = None
        self._plan: np.ndarray | None = None

    def _ensure_route(self, view) -> RoutePlan:
        if self.route is None:
            route = route_to_point(self.scenario.lane_graph,
                                   (view.ego.x, view.ego.y), self.scenario.goal)
            if route is None:
                raise UnroutableGoalError(
                    f"scenario {self.scenario.scenario_id}: no lane path to goal")
            self.route = route
        return self.route

    def _march(self, view, horizon: int) -> np.ndarray:
        route = self._ensure_route(view)
        ego = view.ego
        s0, _ = project_to_polyline(route.points, (ego.x, ego.y))
        leader = find_leader(route.points, route.cum, s0, view.ego_length,
                             ((a.state.x, a.state.y, a.state.length, a.state.speed)
                              for a in view.agents))
        rows = []
        s, v = s0, ego.v
        for _ in range(horizon):
            v0 = min(route.speed_at(s + d) for d in (0.0, self.LOOKAHEAD / 2, self.LOOKAHEAD))
            if leader is not None:
                a = idm_accel(v, leader[0] - (s - s0), v - leader[1], v0, self.idm)
            else:
                a = idm_accel(v, math.inf, 0.0, v0, self.idm)
            v = max(v + a * self.dt, 0.0)
            s = s + v * self.dt
            p = route.point_at(s)
            rows.append([p[0], p[1], route.heading_at(s)])
        return np.array(rows, dtype=float)

    def observe(self, view) -> PlannerOutput:
        if not self.open_loop:
            return PlannerOutput(waypoints=self._march(view, PLAN_HORIZON))
        if self._plan is None:
            self._plan = self._march(view, N_FRAMES - 1 - CURRENT_FRAME + PLAN_HORIZON)
        k = view.step
        return PlannerOutput(waypoints=self._plan[k:k + PLAN_HORIZON])
