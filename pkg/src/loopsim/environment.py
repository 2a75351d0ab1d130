"""Closed-loop simulation: per-step stepping, rollouts, and batch runs.

The ego vehicle is driven by a planner; all other agents either replay their
logs ("expert") or follow their logged path with IDM speed control ("idm",
vehicles only). An episode starts at frame 10 of the scenario and runs at
most 80 steps; it ends on collision, road departure, goal arrival (< 2 m),
or the step cap, classified in that priority order.

Determinism: a rollout is a pure function of (scenario, planner, config,
seed). Batch runs derive one RNG stream per scenario from (seed, scenario
id), never from worker identity, and merge results in scenario order, so
the worker count cannot change any output byte.
"""
from __future__ import annotations

import hashlib
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .controller import MpcConfig, MpcResult, mpc_track
from .dynamics import (Action, EgoState, VehicleParams,
                       clamp_action, step_bicycle, step_default)
from .geometry import polyline_lengths, point_at_arc, heading_at_arc, to_frame, wrap_angle
from .goalgen import find_start_lane, GoalGenError
from .metrics import (GOAL_RADIUS, MetricsReport, RewardWeights, StepSignals,
                      classify_episode, collision_gap, is_uncomfortable,
                      offroad_distance, step_reward)
from .policies import (IdmParams, PlannerOutput, PolicyError, find_leader,
                       idm_accel, IDM_FALLBACK_SPEED)
from .scenario import CURRENT_FRAME, N_FRAMES, AgentState, LaneGraph, Scenario

MAX_STEPS = 80
HISTORY_FRAMES = 11

OBS_EGO_DIMS = 4
OBS_GOAL_DIMS = 2
OBS_MAP_POINTS = 32
OBS_AGENTS = 8
OBS_AGENT_DIMS = 6
SIM_OBS_DIMS = (OBS_EGO_DIMS + OBS_GOAL_DIMS + 2 * OBS_MAP_POINTS
                + OBS_AGENT_DIMS * OBS_AGENTS)  # 118


class SimulationError(RuntimeError):
    """Unexpected failure inside a rollout; carries the scenario id."""


@dataclass(frozen=True)
class EnvConfig:
    dynamics: str = "bicycle"        # "default" | "bicycle"
    use_mpc: bool = True
    npc_policy: str = "expert"       # "expert" | "idm"
    reward_weights: RewardWeights = RewardWeights()
    vehicle: VehicleParams = VehicleParams()
    mpc: MpcConfig = MpcConfig()
    idm: IdmParams = IdmParams()
    max_steps: int = MAX_STEPS

    def __post_init__(self):
        if self.dynamics not in ("default", "bicycle"):
            raise ValueError(f"EnvConfig.dynamics: {self.dynamics!r}")
        if self.npc_policy not in ("expert", "idm"):
            raise ValueError(f"EnvConfig.npc_policy: {self.npc_policy!r}")


@dataclass(frozen=True)
class AgentView:
    agent_id: str
    kind: str
    state: AgentState


@dataclass(frozen=True)
class SimulatorView:
    scenario_id: str
    ego: EgoState
    ego_length: float
    ego_width: float
    agents: tuple[AgentView, ...]
    lane_graph: LaneGraph
    goal: tuple[float, float]
    step: int
    ego_history: tuple[EgoState, ...]  # most recent last, includes current


@dataclass(frozen=True)
class Transition:
    obs: np.ndarray
    action: np.ndarray  # realized (accel, steer)
    reward: float
    next_obs: np.ndarray
    done: bool


@dataclass
class StepRecord:
    step: int
    ego: EgoState
    action: tuple[float, float]
    signals: StepSignals
    reward: float
    reward_terms: dict
    agents: list  # (agent_id, x, y, heading, length, width)


@dataclass
class EpisodeResult:
    scenario_id: str
    terminal: str
    steps: int
    final_goal_distance: float
    reward_total: float
    uncomfort_steps: int
    records: list[StepRecord]
    transitions: list[Transition]
    error: str | None = None


class _IdmNpc:
    """Path-following NPC: logged geometry, IDM speed."""

    def __init__(self, track, lane_graph: LaneGraph):
        pts = []
        for f in range(N_FRAMES):
            if not track.valid_at(f):
                continue
            st = track.state_at(f)
            if not pts or math.hypot(st.x - pts[-1][0], st.y - pts[-1][1]) > 1e-6:
                pts.append([st.x, st.y])
        st0 = track.state_at(CURRENT_FRAME)
        self.length = st0.length
        self.width = st0.width
        self.stationary = len(pts) < 2
        self.pose = (st0.x, st0.y, st0.heading)
        self.v = st0.speed
        if not self.stationary:
            self.path = np.array(pts, dtype=float)
            self.cum = polyline_lengths(self.path)
            from .geometry import project_to_polyline
            self.s, _ = project_to_polyline(self.path, (st0.x, st0.y))
        self.lane_graph = lane_graph

    def desired_speed(self) -> float:
        try:
            lane_id, _ = find_start_lane(self.lane_graph, self.pose[:2])
            return self.lane_graph.lane(lane_id).speed_limit
        except GoalGenError:
            return IDM_FALLBACK_SPEED

    def advance(self, others, idm: IdmParams, dt: float) -> None:
        """others yields (x, y, length, speed) of every other agent."""
        if self.stationary:
            self.v = 0.0
            return
        leader = find_leader(self.path, self.cum, self.s, self.length, others)
        gap, closing = (math.inf, 0.0) if leader is None else (leader[0], self.v - leader[1])
        a = idm_accel(self.v, gap, closing, self.desired_speed(), idm)
        self.v = max(self.v + a * dt, 0.0)
        self.s = min(self.s + self.v * dt, float(self.cum[-1]))
        if self.s >= float(self.cum[-1]):
            self.v = 0.0
        p = point_at_arc(self.path, self.cum, self.s)
        h = heading_at_arc(self.path, self.cum, self.s)
        self.pose = (float(p[0]), float(p[1]), h)

    def state(self) -> AgentState:
        x, y, h = self.pose
        return AgentState(x=x, y=y, heading=wrap_angle(h),
                          vx=self.v * math.cos(h), vy=self.v * math.sin(h),
                          length=self.length, width=self.width, valid=True)


class Environment:
    """Steps one scenario. reset() then env_step(output) until done."""

    def __init__(self, scenario: Scenario, config: EnvConfig = EnvConfig()):
        self.sc = scenario
        self.cfg = config
        self.dt = scenario.dt
        self._warm: np.ndarray | None = None

    # -- lifecycle ----------------------------------------------------------

    def reset(self) -> SimulatorView:
        sdc = self.sc.sdc_track.state_at(CURRENT_FRAME)
        if not sdc.valid:
            raise SimulationError(
                f"scenario {self.sc.scenario_id}: SDC invalid at frame {CURRENT_FRAME}")
        self.ego = EgoState(x=sdc.x, y=sdc.y, theta=sdc.heading, v=sdc.speed)
        self.ego_length = sdc.length
        self.ego_width = sdc.width
        self.step_count = 0
        self.prev_action = (0.0, 0.0)
        self.signals_log: list[StepSignals] = []
        self._history = [self.ego]
        self._warm = None
        self._idm_npcs: dict[int, _IdmNpc] = {}
        if self.cfg.npc_policy == "idm":
            for i, tr in enumerate(self.sc.tracks):
                if i != self.sc.sdc_index and tr.agent_kind == "vehicle" \
                        and tr.valid_at(CURRENT_FRAME):
                    self._idm_npcs[i] = _IdmNpc(tr, self.sc.lane_graph)
        return self._view()

    def _npc_states(self, frame: int) -> list[tuple[int, AgentState]]:
        out = []
        for i, tr in enumerate(self.sc.tracks):
            if i == self.sc.sdc_index:
                continue
            if i in self._idm_npcs:
                out.append((i, self._idm_npcs[i].state()))
            elif 0 <= frame < N_FRAMES and tr.valid_at(frame):
                out.append((i, tr.state_at(frame)))
        return out

    def _view(self) -> SimulatorView:
        frame = CURRENT_FRAME + self.step_count
        agents = tuple(
            AgentView(self.sc.tracks[i].agent_id, self.sc.tracks[i].agent_kind, st)
            for i, st in self._npc_states(frame))
        return SimulatorView(
            scenario_id=self.sc.scenario_id,
            ego=self.ego, ego_length=self.ego_length, ego_width=self.ego_width,
            agents=agents, lane_graph=self.sc.lane_graph, goal=self.sc.goal,
            step=self.step_count, ego_history=tuple(self._history[-HISTORY_FRAMES:]))

    # -- stepping -----------------------------------------------------------

    def _advance_ego(self, out: PlannerOutput) -> tuple[EgoState, Action]:
        p = self.cfg.vehicle
        if out.action is not None:
            a = out.action
            if not (math.isfinite(a.accel) and math.isfinite(a.steer)):
                raise PolicyError("policy produced a non-finite action")
            applied = clamp_action(a, p)
            return step_bicycle(self.ego, applied, p, self.dt), applied
        wp = out.waypoints
        if self.cfg.use_mpc:
            ref = wp[:self.cfg.mpc.horizon]
            result: MpcResult = mpc_track(self.ego, ref, p, self.cfg.mpc,
                                          dt=self.dt, warm_start=self._warm)
            self._warm = result.shifted()
            action = result.first_action
            new = step_bicycle(self.ego, action, p, self.dt)
            if self.cfg.dynamics == "default":
                new = step_default(self.ego, (new.x, new.y, new.theta), self.dt)
            return new, action
        # tracking disabled: waypoints are applied verbatim regardless of the
        # dynamics choice; the pseudo-action below only feeds the smoothness
        # and comfort terms
        new = step_default(self.ego, wp[0], self.dt)
        accel = (new.v - self.ego.v) / self.dt
        dth = wrap_angle(new.theta - self.ego.theta)
        if self.ego.v > 1e-6:
            steer = math.atan(dth * p.wheelbase / (self.ego.v * self.dt))
        else:
            steer = 0.0
        return new, Action(accel=accel, steer=steer)

    def env_step(self, out: PlannerOutput) -> tuple[SimulatorView, float, bool, str | None, dict]:
        """Advance one step. Returns (view, reward, done, terminal, info)."""
        if self.step_count >= self.cfg.max_steps:
            raise SimulationError(f"scenario {self.sc.scenario_id}: episode already over")
        prev = self.ego
        prev_npc = self._npc_states(CURRENT_FRAME + self.step_count)
        new_ego, applied = self._advance_ego(out)

        if self._idm_npcs:
            states_now = {i: st for i, st in prev_npc}
            for i, npc in self._idm_npcs.items():
                others = [(st.x, st.y, st.length, st.speed)
                          for j, st in states_now.items() if j != i]
                others.append((prev.x, prev.y, self.ego_length, prev.v))
                npc.advance(others, self.cfg.idm, self.dt)

        self.ego = new_ego
        self.step_count += 1
        self._history.append(new_ego)
        npcs = self._npc_states(CURRENT_FRAME + self.step_count)

        ego_box = (new_ego.x, new_ego.y, new_ego.theta, self.ego_length, self.ego_width)
        other_boxes = [(st.x, st.y, st.heading, st.length, st.width) for _, st in npcs]
        d_col = collision_gap(ego_box, other_boxes)
        d_off = offroad_distance((new_ego.x, new_ego.y), self.sc.lane_graph)
        gx, gy = self.sc.goal
        dist_prev = math.hypot(prev.x - gx, prev.y - gy)
        dist_new = math.hypot(new_ego.x - gx, new_ego.y - gy)
        sig = StepSignals(
            d_collision=d_col,
            d_offroad=d_off,
            d_progress=dist_prev - dist_new,
            delta_accel=abs(applied.accel - self.prev_action[0]),
            delta_turning=abs(applied.steer - self.prev_action[1]),
            is_goal=dist_new < GOAL_RADIUS)
        self.prev_action = (applied.accel, applied.steer)
        self.signals_log.append(sig)
        reward, terms = step_reward(sig, self.cfg.reward_weights)

        terminal = None
        if d_col <= 0.0:
            terminal = "collided"
        elif d_off > 0.0:
            terminal = "offroad"
        elif sig.is_goal:
            terminal = "completed"
        elif self.step_count >= self.cfg.max_steps:
            terminal = "stuck"
        done = terminal is not None
        info = {"signals": sig, "reward_terms": terms, "applied": applied,
                "uncomfort": is_uncomfortable(applied.accel, self.cfg.vehicle.max_accel),
                "goal_distance": dist_new}
        return self._view(), reward, done, terminal, info


# ---------------------------------------------------------------------------
# observations

def build_observation(view: SimulatorView) -> np.ndarray:
    """Fixed 118-dim simulator-state vector.

    Layout: ego (x, y, theta, v) | goal in ego frame (2) | 32 nearest lane
    centerline points in ego frame (64) | 8 nearest agents x (rel pos, rel
    vel, rel heading, bounding radius) (48). Empty slots stay zero.
    """
    ego = view.ego
    out = np.zeros(SIM_OBS_DIMS)
    out[0:4] = (ego.x, ego.y, ego.theta, ego.v)
    origin = (ego.x, ego.y)
    out[4:6] = to_frame(np.array(view.goal), origin, ego.theta)

    pts = np.vstack([ln.centerline for ln in view.lane_graph.lanes])
    d = np.linalg.norm(pts - np.array(origin), axis=1)
    order = np.lexsort((pts[:, 1], pts[:, 0], d))[:OBS_MAP_POINTS]
    rel = to_frame(pts[order], origin, ego.theta)
    out[6:6 + 2 * len(order)] = rel.ravel()

    base = OBS_EGO_DIMS + OBS_GOAL_DIMS + 2 * OBS_MAP_POINTS
    agents = sorted(view.agents,
                    key=lambda a: (math.hypot(a.state.x - ego.x, a.state.y - ego.y),
                                   a.agent_id))
    c, s = math.cos(ego.theta), math.sin(ego.theta)
    ego_v = (ego.v * c, ego.v * s)
    for slot, av in enumerate(agents[:OBS_AGENTS]):
        st = av.state
        rp = to_frame(np.array([st.x, st.y]), origin, ego.theta)
        dvx, dvy = st.vx - ego_v[0], st.vy - ego_v[1]
        j = base + slot * OBS_AGENT_DIMS
        out[j:j + 2] = rp
        out[j + 2] = dvx * c + dvy * s
        out[j + 3] = -dvx * s + dvy * c
        out[j + 4] = wrap_angle(st.heading - ego.theta)
        out[j + 5] = 0.5 * math.hypot(st.length, st.width)
    return out


# ---------------------------------------------------------------------------
# rollouts and batches

def rng_for(seed: int, scenario_id: str) -> np.random.Generator:
    """Per-scenario stream from (seed, scenario id); worker-independent."""
    digest = hashlib.sha256(f"{seed}:{scenario_id}".encode()).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "little"))


def rollout(planner_factory, scenario: Scenario, cfg: EnvConfig,
            seed: int = 0, feature_provider=None) -> EpisodeResult:
    """Run one episode; policy errors mark the episode stuck."""
    env = Environment(scenario, cfg)
    rng = rng_for(seed, scenario.scenario_id)
    planner = planner_factory(scenario, rng)
    view = env.reset()
    records: list[StepRecord] = []
    transitions: list[Transition] = []
    reward_total = 0.0
    uncomfort = 0
    error = None
    goal_distance = math.hypot(view.ego.x - scenario.goal[0],
                               view.ego.y - scenario.goal[1])
    terminal = None
    obs = _fused_obs(view, scenario, feature_provider)
    try:
        while True:
            out = planner.observe(view)
            view, reward, done, terminal, info = env.env_step(out)
            next_obs = _fused_obs(view, scenario, feature_provider)
            applied: Action = info["applied"]
            reward_total += reward
            uncomfort += bool(info["uncomfort"])
            goal_distance = info["goal_distance"]
            records.append(StepRecord(
                step=view.step, ego=view.ego,
                action=(applied.accel, applied.steer),
                signals=info["signals"], reward=reward,
                reward_terms=info["reward_terms"],
                agents=[(a.agent_id, a.state.x, a.state.y, a.state.heading,
                         a.state.length, a.state.width) for a in view.agents]))
            transitions.append(Transition(
                obs=obs, action=np.array([applied.accel, applied.steer]),
                reward=reward, next_obs=next_obs, done=done))
            obs = next_obs
            if done:
                break
    except PolicyError as e:
        terminal = "stuck"
        error = f"{type(planner).__name__}: {e}"
    except Exception as e:
        raise SimulationError(f"scenario {scenario.scenario_id}: {e}") from e
    if terminal is None:
        terminal = "stuck"
    expected = classify_episode(env.signals_log) if env.signals_log else "stuck"
    if error is None and terminal != expected:
        raise SimulationError(
            f"scenario {scenario.scenario_id}: terminal {terminal} != log {expected}")
    return EpisodeResult(
        scenario_id=scenario.scenario_id, terminal=terminal,
        steps=env.step_count, final_goal_distance=goal_distance,
        reward_total=reward_total, uncomfort_steps=uncomfort,
        records=records, transitions=transitions, error=error)


def _fused_obs(view: SimulatorView, scenario: Scenario, provider) -> np.ndarray:
    sim = build_observation(view)
    if provider is None:
        return sim
    from .sac import fuse_observation
    return fuse_observation(sim, provider.features(scenario.scenario_id, view.step))


def batch_simulate(scenarios: list[Scenario], planner_factory, cfg: EnvConfig,
                   seed: int = 0, workers: int = 1, buffer=None,
                   train_hook=None, sync_every: int = 32,
                   feature_provider=None) -> tuple[MetricsReport, list[EpisodeResult]]:
    """Simulate scenarios in deterministic order with optional training syncs.

    Scenarios are processed in consecutive blocks of sync_every. Each block
    is simulated (in parallel when workers > 1), then transitions are pushed
    to the buffer in scenario order, then train_hook fires once per full
    block. Results are identical for any worker count.
    """
    results: list[EpisodeResult | None] = [None] * len(scenarios)

    def run(i: int) -> None:
        results[i] = rollout(planner_factory, scenarios[i], cfg, seed=seed,
                             feature_provider=feature_provider)

    for block_start in range(0, len(scenarios), sync_every):
        idx = range(block_start, min(block_start + sync_every, len(scenarios)))
        if workers <= 1:
            for i in idx:
                run(i)
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                futures = [pool.submit(run, i) for i in idx]
                for f in futures:
                    f.result()
        if buffer is not None:
            for i in idx:
                for tr in results[i].transitions:
                    buffer.push(tr)
        if train_hook is not None and len(idx) == sync_every:
            train_hook(block_start // sync_every)

    done = [r for r in results if r is not None]
    report = MetricsReport.from_terminals([r.terminal for r in done])
    return report, done
