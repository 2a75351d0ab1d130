"""Scenario data model, file format, and synthetic scenario templates.

A scenario holds 91 frames of agent tracks sampled at 0.1 s (frames 0..10 are
history, frame 10 is the current state, frames 11..90 are the logged future),
a lane graph, and a goal for the ego vehicle ("SDC", self-driven car).

File format: one scenario per file, JSON-lines, one record per line with a
"kind" tag. Canonical form is produced by save_scenario (compact separators,
fixed key order, lanes sorted by id); loading a canonical file and saving it
again reproduces the bytes. See docs/formats.md for the field table.
"""
from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import polyline_lengths, point_at_arc, heading_at_arc, wrap_angle

N_FRAMES = 91
CURRENT_FRAME = 10
DT = 0.1
FORMAT_VERSION = 1

AGENT_KINDS = ("vehicle", "pedestrian", "cyclist")

# Column layout of a track state row.
STATE_FIELDS = ("x", "y", "heading", "vx", "vy", "length", "width", "valid")
IX, IY, IHEADING, IVX, IVY, ILENGTH, IWIDTH, IVALID = range(8)


class ScenarioError(ValueError):
    """Scenario validation/parsing failure; message names the offending field."""


@dataclass(frozen=True)
class AgentState:
    x: float
    y: float
    heading: float
    vx: float
    vy: float
    length: float
    width: float
    valid: bool

    @property
    def speed(self) -> float:
        return math.hypot(self.vx, self.vy)


@dataclass(frozen=True)
class Track:
    agent_id: str
    agent_kind: str
    states: np.ndarray  # (91, 8) float64, read-only

    def state_at(self, frame: int) -> AgentState:
        r = self.states[frame]
        return AgentState(r[IX], r[IY], r[IHEADING], r[IVX], r[IVY],
                          r[ILENGTH], r[IWIDTH], bool(r[IVALID]))

    def valid_at(self, frame: int) -> bool:
        return bool(self.states[frame, IVALID])


@dataclass(frozen=True)
class Lane:
    lane_id: str
    centerline: np.ndarray  # (N, 2)
    exits: tuple[str, ...]
    left_neighbor: str | None
    right_neighbor: str | None
    speed_limit: float


@dataclass(frozen=True)
class LaneGraph:
    lanes: tuple[Lane, ...]
    road_edges: tuple[np.ndarray, ...]   # boundary polylines; closed rings bound the drivable area
    solid_lines: tuple[np.ndarray, ...]  # uncrossable painted lines
    _by_id: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_by_id", {ln.lane_id: ln for ln in self.lanes})

    def lane(self, lane_id: str) -> Lane:
        return self._by_id[lane_id]

    def has_lane(self, lane_id: str) -> bool:
        return lane_id in self._by_id


@dataclass(frozen=True)
class Scenario:
    scenario_id: str
    dt: float
    tracks: tuple[Track, ...]
    sdc_index: int
    lane_graph: LaneGraph
    goal: tuple[float, float]
    goal_distance: float  # arc length along the logged SDC trajectory, current frame -> goal

    @property
    def sdc_track(self) -> Track:
        return self.tracks[self.sdc_index]


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.asarray(arr, dtype=float)
    arr.setflags(write=False)
    return arr


def validate_scenario(sc: Scenario) -> None:
    """Raise ScenarioError naming the offending field on any contract breach."""
    if sc.dt != DT:
        raise ScenarioError(f"dt: expected {DT}, got {sc.dt}")
    if not sc.tracks:
        raise ScenarioError("tracks: empty")
    if not (0 <= sc.sdc_index < len(sc.tracks)):
        raise ScenarioError(f"sdc_index: {sc.sdc_index} out of range")
    for ti, tr in enumerate(sc.tracks):
        if tr.agent_kind not in AGENT_KINDS:
            raise ScenarioError(f"tracks[{ti}].agent_kind: {tr.agent_kind!r}")
        if tr.states.shape != (N_FRAMES, 8):
            raise ScenarioError(f"tracks[{ti}].states: shape {tr.states.shape}, expected (91, 8)")
        for fi in range(N_FRAMES):
            row = tr.states[fi]
            if not row[IVALID]:
                continue
            if not np.all(np.isfinite(row[:7])):
                raise ScenarioError(f"tracks[{ti}].states[{fi}]: non-finite value on valid frame")
            if not (-math.pi < row[IHEADING] <= math.pi):
                raise ScenarioError(f"tracks[{ti}].states[{fi}].heading: {row[IHEADING]} outside (-pi, pi]")
            if row[ILENGTH] <= 0 or row[IWIDTH] <= 0:
                raise ScenarioError(f"tracks[{ti}].states[{fi}]: non-positive extent")
    if not sc.sdc_track.valid_at(CURRENT_FRAME):
        raise ScenarioError(f"tracks[{sc.sdc_index}].states[{CURRENT_FRAME}].valid: SDC invalid at current frame")
    ids = [ln.lane_id for ln in sc.lane_graph.lanes]
    if len(set(ids)) != len(ids):
        raise ScenarioError("lanes: duplicate lane_id")
    known = set(ids)
    for ln in sc.lane_graph.lanes:
        _check_polyline(ln.centerline, f"lanes[{ln.lane_id}].centerline")
        if ln.speed_limit <= 0 or not math.isfinite(ln.speed_limit):
            raise ScenarioError(f"lanes[{ln.lane_id}].speed_limit: {ln.speed_limit}")
        for ex in ln.exits:
            if ex not in known:
                raise ScenarioError(f"lanes[{ln.lane_id}].exits: unknown lane {ex!r}")
        for nb in (ln.left_neighbor, ln.right_neighbor):
            if nb is not None and nb not in known:
                raise ScenarioError(f"lanes[{ln.lane_id}].neighbor: unknown lane {nb!r}")
    for i, edge in enumerate(sc.lane_graph.road_edges):
        _check_polyline(edge, f"road_edges[{i}]")
    for i, line in enumerate(sc.lane_graph.solid_lines):
        _check_polyline(line, f"solid_lines[{i}]")
    gx, gy = sc.goal
    if not (math.isfinite(gx) and math.isfinite(gy)):
        raise ScenarioError("goal: non-finite")
    if not (math.isfinite(sc.goal_distance) and sc.goal_distance >= 0):
        raise ScenarioError(f"goal_distance: {sc.goal_distance}")


def _check_polyline(points: np.ndarray, name: str) -> None:
    if points.ndim != 2 or points.shape[1] != 2 or points.shape[0] < 2:
        raise ScenarioError(f"{name}: need an (N>=2, 2) array, got shape {points.shape}")
    if not np.all(np.isfinite(points)):
        raise ScenarioError(f"{name}: non-finite point")
    seg = np.linalg.norm(np.diff(points, axis=0), axis=1)
    if np.any(seg <= 0):
        raise ScenarioError(f"{name}: zero-length segment at index {int(np.argmin(seg))}")


# ---------------------------------------------------------------------------
# serialization

def _points_list(arr: np.ndarray) -> list:
    return [[float(x), float(y)] for x, y in arr]


def save_scenario(sc: Scenario, fp) -> None:
    """Write the canonical line-delimited form."""
    def emit(obj):
        fp.write(json.dumps(obj, separators=(",", ":")) + "\n")

    emit({"kind": "scenario", "format_version": FORMAT_VERSION,
          "scenario_id": sc.scenario_id, "dt": sc.dt, "sdc_index": sc.sdc_index,
          "goal": [float(sc.goal[0]), float(sc.goal[1])],
          "goal_distance": float(sc.goal_distance)})
    for ln in sorted(sc.lane_graph.lanes, key=lambda l: l.lane_id):
        emit({"kind": "lane", "lane_id": ln.lane_id,
              "speed_limit": float(ln.speed_limit),
              "exits": list(ln.exits),
              "left_neighbor": ln.left_neighbor,
              "right_neighbor": ln.right_neighbor,
              "centerline": _points_list(ln.centerline)})
    for edge in sc.lane_graph.road_edges:
        emit({"kind": "road_edge", "points": _points_list(edge)})
    for line in sc.lane_graph.solid_lines:
        emit({"kind": "solid_line", "points": _points_list(line)})
    for tr in sc.tracks:
        emit({"kind": "track", "agent_id": tr.agent_id, "agent_kind": tr.agent_kind,
              "states": [[float(v) for v in row] for row in tr.states]})


def scenario_to_text(sc: Scenario) -> str:
    buf = io.StringIO()
    save_scenario(sc, buf)
    return buf.getvalue()


def load_scenario(fp) -> Scenario:
    """Parse and validate one scenario; errors name the line and field."""
    header = None
    lanes: list[Lane] = []
    edges: list[np.ndarray] = []
    solids: list[np.ndarray] = []
    tracks: list[Track] = []
    for lineno, raw in enumerate(fp, start=1):
        raw = raw.strip()
        if not raw:
            continue
        try:
            rec = json.loads(raw)
        except json.JSONDecodeError as e:
            raise ScenarioError(f"line {lineno}: invalid JSON ({e})") from None
        kind = rec.get("kind")
        try:
            if kind == "scenario":
                header = rec
            elif kind == "lane":
                lanes.append(Lane(
                    lane_id=str(rec["lane_id"]),
                    centerline=_freeze(np.array(rec["centerline"], dtype=float)),
                    exits=tuple(rec["exits"]),
                    left_neighbor=rec["left_neighbor"],
                    right_neighbor=rec["right_neighbor"],
                    speed_limit=float(rec["speed_limit"])))
            elif kind == "road_edge":
                edges.append(_freeze(np.array(rec["points"], dtype=float)))
            elif kind == "solid_line":
                solids.append(_freeze(np.array(rec["points"], dtype=float)))
            elif kind == "track":
                states = np.array(rec["states"], dtype=float)
                tracks.append(Track(agent_id=str(rec["agent_id"]),
                                    agent_kind=str(rec["agent_kind"]),
                                    states=_freeze(states)))
            else:
                raise ScenarioError(f"line {lineno}: unknown kind {kind!r}")
        except KeyError as e:
            raise ScenarioError(f"line {lineno}: missing field {e.args[0]!r} in {kind!r} record") from None
    if header is None:
        raise ScenarioError("missing scenario header record")
    if header.get("format_version") != FORMAT_VERSION:
        raise ScenarioError(f"format_version: {header.get('format_version')!r}, expected {FORMAT_VERSION}")
    sc = Scenario(
        scenario_id=str(header["scenario_id"]),
        dt=float(header["dt"]),
        tracks=tuple(tracks),
        sdc_index=int(header["sdc_index"]),
        lane_graph=LaneGraph(tuple(lanes), tuple(edges), tuple(solids)),
        goal=(float(header["goal"][0]), float(header["goal"][1])),
        goal_distance=float(header["goal_distance"]))
    validate_scenario(sc)
    return sc


def load_scenario_path(path) -> Scenario:
    with open(path, "r") as fp:
        return load_scenario(fp)


def save_scenario_path(sc: Scenario, path) -> None:
    with open(path, "w") as fp:
        save_scenario(sc, fp)


# ---------------------------------------------------------------------------
# synthetic scenarios

LANE_WIDTH = 3.5
HALF_WIDTH = LANE_WIDTH / 2.0
TURN_RADIUS = 7.0
ARM_LENGTH = 80.0
JUNCTION_OFFSET = TURN_RADIUS  # approach lanes stop this far before the junction center

VEHICLE_LENGTH = 4.8
VEHICLE_WIDTH = 2.1


def _straight(start, heading, length, spacing=4.0) -> np.ndarray:
    n = max(2, int(math.ceil(length / spacing)) + 1)
    s = np.linspace(0.0, length, n)
    c, si = math.cos(heading), math.sin(heading)
    return np.stack([start[0] + s * c, start[1] + s * si], axis=1)


def _arc(start, start_heading, radius, turn, spacing=1.5) -> np.ndarray:
    """Circular arc from start with initial tangent start_heading.

    turn > 0 curves left, turn < 0 curves right; |turn| is the total heading
    change. The returned polyline includes both endpoints.
    """
    sgn = 1.0 if turn > 0 else -1.0
    cx = start[0] - sgn * radius * math.sin(start_heading)
    cy = start[1] + sgn * radius * math.cos(start_heading)
    n = max(3, int(math.ceil(abs(turn) * radius / spacing)) + 1)
    phi0 = math.atan2(start[1] - cy, start[0] - cx)
    phis = phi0 + sgn * np.linspace(0.0, abs(turn), n)
    return np.stack([cx + radius * np.cos(phis), cy + radius * np.sin(phis)], axis=1)


def _drivable_region(lanes: list[Lane]):
    """Union of lane corridors, as shapely geometry (fixture plumbing only)."""
    from shapely.geometry import LineString
    from shapely.ops import unary_union
    pads = [LineString(ln.centerline).buffer(HALF_WIDTH + 0.01, cap_style="square")
            for ln in lanes]
    return unary_union(pads)


def _region_rings(lanes: list[Lane]) -> list[np.ndarray]:
    """Road-edge rings (exterior + holes) of the drivable region outline."""
    region = _drivable_region(lanes).simplify(0.05)
    polys = getattr(region, "geoms", [region])
    rings = []
    for poly in polys:
        for ring in [poly.exterior, *poly.interiors]:
            pts = np.array(ring.coords, dtype=float)
            rings.append(_normalize_ring(pts))
    rings.sort(key=lambda r: (r[0, 0], r[0, 1]))
    return rings


def _normalize_ring(pts: np.ndarray) -> np.ndarray:
    """Canonical ring: CCW, starting at the lexicographically smallest vertex."""
    if np.array_equal(pts[0], pts[-1]):
        pts = pts[:-1]
    area2 = np.sum(pts[:, 0] * np.roll(pts[:, 1], -1) - np.roll(pts[:, 0], -1) * pts[:, 1])
    if area2 < 0:
        pts = pts[::-1]
    start = int(np.lexsort((pts[:, 1], pts[:, 0]))[0])
    pts = np.roll(pts, -start, axis=0)
    return np.vstack([pts, pts[:1]])


def _drive_track(agent_id: str, path: np.ndarray, start_arc: float, speed: float,
                 length=VEHICLE_LENGTH, width=VEHICLE_WIDTH,
                 agent_kind="vehicle") -> Track:
    """Constant-speed track along a path polyline, clamped at the path end."""
    cum = polyline_lengths(path)
    rows = np.zeros((N_FRAMES, 8))
    for f in range(N_FRAMES):
        s = min(start_arc + speed * DT * f, float(cum[-1]))
        p = point_at_arc(path, cum, s)
        h = heading_at_arc(path, cum, s)
        v = speed if s < float(cum[-1]) else 0.0
        rows[f] = [p[0], p[1], wrap_angle(h), v * math.cos(h), v * math.sin(h),
                   length, width, 1.0]
    return Track(agent_id=agent_id, agent_kind=agent_kind, states=_freeze(rows))


def _route_polyline(lanes_by_id: dict[str, Lane], route: list[str]) -> np.ndarray:
    pts = [lanes_by_id[route[0]].centerline]
    for lid in route[1:]:
        pts.append(lanes_by_id[lid].centerline[1:])
    return np.vstack(pts)


def _build_straight_lanes() -> tuple[list[Lane], list[list[str]]]:
    """Three parallel lanes split into chained segments so lane changes matter."""
    lanes = []
    seg_x = [(0.0, 60.0), (60.0, 120.0), (120.0, 180.0)]
    names = {0: "a", 1: "b", 2: "c"}  # bottom, middle, top
    for row, y in enumerate((-LANE_WIDTH, 0.0, LANE_WIDTH)):
        for si, (x0, x1) in enumerate(seg_x):
            nxt = f"{names[row]}{si + 1}" if si + 1 < len(seg_x) else None
            lanes.append(Lane(
                lane_id=f"{names[row]}{si}",
                centerline=_freeze(_straight((x0, y), 0.0, x1 - x0)),
                exits=(nxt,) if nxt else (),
                left_neighbor=f"{names[row + 1]}{si}" if row + 1 <= 2 else None,
                right_neighbor=f"{names[row - 1]}{si}" if row - 1 >= 0 else None,
                speed_limit=10.0))
    routes = [[f"{n}0", f"{n}1", f"{n}2"] for n in ("a", "b", "c")]
    return lanes, routes


def _build_junction_lanes(out_arms: list[str]) -> tuple[list[Lane], list[list[str]]]:
    """One-way junction: a single approach from the west plus turn/through exits.

    out_arms lists the outgoing arms, subset of {"e": through, "n": left turn,
    "s": right turn}. Outgoing lanes for non-west arms start at the junction
    edge and run outward.
    """
    lanes: list[Lane] = []
    R = TURN_RADIUS
    exits = []
    if "e" in out_arms:
        exits.append("go_e")
        lanes.append(Lane("go_e", _freeze(_straight((-R, 0.0), 0.0, R + ARM_LENGTH)),
                          ("out_e",), None, None, 9.0))
        lanes.append(Lane("out_e", _freeze(_straight((ARM_LENGTH, 0.0), 0.0, 40.0)),
                          (), None, None, 9.0))
    if "n" in out_arms:
        exits.append("turn_n")
        lanes.append(Lane("turn_n", _freeze(_arc((-R, 0.0), 0.0, R, math.pi / 2)),
                          ("out_n",), None, None, 7.0))
        lanes.append(Lane("out_n", _freeze(_straight((0.0, R), math.pi / 2, ARM_LENGTH - R)),
                          (), None, None, 9.0))
    if "s" in out_arms:
        exits.append("turn_s")
        lanes.append(Lane("turn_s", _freeze(_arc((-R, 0.0), 0.0, R, -math.pi / 2)),
                          ("out_s",), None, None, 7.0))
        lanes.append(Lane("out_s", _freeze(_straight((0.0, -R), -math.pi / 2, ARM_LENGTH - R)),
                          (), None, None, 9.0))
    lanes.insert(0, Lane("in_w", _freeze(_straight((-ARM_LENGTH, 0.0), 0.0, ARM_LENGTH - R)),
                         tuple(sorted(exits)), None, None, 9.0))
    routes = [["in_w", "go_e", "out_e"]] if "e" in out_arms else []
    if "n" in out_arms:
        routes.append(["in_w", "turn_n", "out_n"])
    if "s" in out_arms:
        routes.append(["in_w", "turn_s", "out_s"])
    return lanes, routes


def _build_y_lanes() -> tuple[list[Lane], list[list[str]]]:
    """Single approach forking into a mild (Go) and a sharp (left-turn) branch."""
    lanes = [Lane("stem", _freeze(_straight((-ARM_LENGTH, 0.0), 0.0, ARM_LENGTH)),
                  ("fork_go", "fork_l"), None, None, 9.0)]
    mild = _arc((0.0, 0.0), 0.0, 40.0, math.radians(20.0))
    lanes.append(Lane("fork_go", _freeze(mild), ("tail_go",), None, None, 9.0))
    tail_go = _straight(mild[-1], math.radians(20.0), 60.0)
    lanes.append(Lane("tail_go", _freeze(tail_go), (), None, None, 9.0))
    sharp = _arc((0.0, 0.0), 0.0, 12.0, math.radians(60.0))
    lanes.append(Lane("fork_l", _freeze(sharp), ("tail_l",), None, None, 7.0))
    tail_l = _straight(sharp[-1], math.radians(60.0), 60.0)
    lanes.append(Lane("tail_l", _freeze(tail_l), (), None, None, 9.0))
    routes = [["stem", "fork_go", "tail_go"], ["stem", "fork_l", "tail_l"]]
    return lanes, routes


TEMPLATES = ("straight-3-lane", "t-junction", "y-junction", "4-way")


def synth_scenario(template: str, npcs: int = 0, seed: int = 0,
                   sdc_route: int = 0) -> Scenario:
    """Build a deterministic synthetic scenario.

    template: one of TEMPLATES. npcs: number of extra vehicles, placed on
    random routes with spacing chosen so that no logged boxes ever intersect.
    sdc_route: index into the template's route list for the ego path.
    """
    if template == "straight-3-lane":
        lanes, routes = _build_straight_lanes()
    elif template == "t-junction":
        lanes, routes = _build_junction_lanes(["e", "n"])
    elif template == "y-junction":
        lanes, routes = _build_y_lanes()
    elif template == "4-way":
        lanes, routes = _build_junction_lanes(["e", "n", "s"])
    else:
        raise ScenarioError(f"template: unknown {template!r}")

    rng = np.random.default_rng(seed)
    by_id = {ln.lane_id: ln for ln in lanes}
    route = routes[sdc_route % len(routes)]
    sdc_path = _route_polyline(by_id, route)
    # start far enough back for lane changes to matter on the straight map,
    # and close enough that junction templates cross the junction within 9 s
    if template == "straight-3-lane":
        sdc_speed, sdc_start = 8.0, 8.0
    else:
        sdc_speed, sdc_start = 7.0, 32.0
    sdc = _drive_track("sdc", sdc_path, start_arc=sdc_start, speed=sdc_speed)

    tracks = [sdc]
    tries = 0
    while len(tracks) < npcs + 1 and tries < npcs * 60 + 60:
        tries += 1
        r = routes[int(rng.integers(0, len(routes)))]
        path = _route_polyline(by_id, r)
        start = float(rng.uniform(0.0, polyline_lengths(path)[-1] * 0.6))
        speed = float(rng.uniform(4.0, 8.0))
        cand = _drive_track(f"npc{len(tracks) - 1}", path, start, speed)
        if all(_tracks_clear(cand, t) for t in tracks):
            tracks.append(cand)

    sdc_cum = polyline_lengths(sdc_path)
    start_arc = sdc_start + sdc_speed * DT * CURRENT_FRAME
    end_arc = min(sdc_start + sdc_speed * DT * (N_FRAMES - 1), float(sdc_cum[-1]))
    goal = point_at_arc(sdc_path, sdc_cum, end_arc)
    rings = _region_rings(lanes)
    solids = []
    if template == "straight-3-lane":
        solids = [_freeze(_straight((0.0, -LANE_WIDTH - HALF_WIDTH), 0.0, 180.0, spacing=30.0)),
                  _freeze(_straight((0.0, LANE_WIDTH + HALF_WIDTH), 0.0, 180.0, spacing=30.0))]
    sc = Scenario(
        scenario_id=f"{template}-s{seed}-r{sdc_route % len(routes)}-n{npcs}",
        dt=DT,
        tracks=tuple(tracks),
        sdc_index=0,
        lane_graph=LaneGraph(tuple(lanes), tuple(_freeze(r) for r in rings), tuple(solids)),
        goal=(float(goal[0]), float(goal[1])),
        goal_distance=float(end_arc - start_arc))
    validate_scenario(sc)
    return sc


def _tracks_clear(a: Track, b: Track, margin: float = 1.0) -> bool:
    """True when the two logged tracks never come close at any frame."""
    pa, pb = a.states[:, :2], b.states[:, :2]
    d = np.linalg.norm(pa - pb, axis=1)
    ra = 0.5 * math.hypot(a.states[0, ILENGTH], a.states[0, IWIDTH])
    rb = 0.5 * math.hypot(b.states[0, ILENGTH], b.states[0, IWIDTH])
    return bool(np.all(d > ra + rb + margin))
