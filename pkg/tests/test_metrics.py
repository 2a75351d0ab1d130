"""Reward terms against an exact substitution table; box gap and offroad
distance against shapely and Monte-Carlo oracles."""
import math

import numpy as np
import pytest
from shapely.geometry import LineString, Point, Polygon

from loopsim.metrics import (
    GOAL_RADIUS, TERMINALS, MetricsReport, RewardWeights, StepSignals,
    box_corners, box_gap, classify_episode, collision_gap, is_uncomfortable,
    offroad_distance, on_road, step_reward,
)

W = RewardWeights()
INF = math.inf


def sig(d_col=INF, d_off=-5.0, d_prog=0.0, da=0.0, dd=0.0, goal=False):
    return StepSignals(d_collision=d_col, d_offroad=d_off, d_progress=d_prog,
                       delta_accel=da, delta_turning=dd, is_goal=goal)


# -- reward substitution table -------------------------------------------------
# rows: signals, expected per-term values, expected total under default weights

TABLE = [
    # collision term: min(d_col - 1, 0)
    (sig(),                  dict(collision=0.0),     -1.0),
    (sig(d_col=2.0),         dict(collision=0.0),     -1.0),
    (sig(d_col=1.0),         dict(collision=0.0),     -1.0),
    (sig(d_col=0.5),         dict(collision=-0.5),    -1.5),
    (sig(d_col=0.0),         dict(collision=-1.0),    -2.0),
    (sig(d_col=-0.3),        dict(collision=-1.3),    -2.3),
    # offroad term: clip(-1 - d_off, -2, 0)
    (sig(d_off=-1.0),        dict(offroad=0.0),       -1.0),
    (sig(d_off=-0.5),        dict(offroad=-0.5),      -1.5),
    (sig(d_off=0.0),         dict(offroad=-1.0),      -2.0),
    (sig(d_off=0.2),         dict(offroad=-1.2),      -2.2),
    (sig(d_off=2.0),         dict(offroad=-2.0),      -3.0),
    (sig(d_off=9.0),         dict(offroad=-2.0),      -3.0),
    # progress term: clip(d_prog - 0.1, -2, 1), weighted x10
    (sig(d_prog=0.8),        dict(progress=0.7),       7.0),
    (sig(d_prog=1.5),        dict(progress=1.0),      10.0),
    (sig(d_prog=0.1),        dict(progress=0.0),       0.0),
    (sig(d_prog=-0.5),       dict(progress=-0.6),     -6.0),
    (sig(d_prog=-3.0),       dict(progress=-2.0),    -20.0),
    # smoothness gate: -0.5 iff delta_accel > 1.5 or delta_turning > 0.1
    (sig(da=2.0),            dict(smoothness=-0.5),   -1.5),
    (sig(da=1.5),            dict(smoothness=0.0),    -1.0),
    (sig(dd=0.2),            dict(smoothness=-0.5),   -1.5),
    (sig(dd=0.1),            dict(smoothness=0.0),    -1.0),
    (sig(da=9.0, dd=9.0),    dict(smoothness=-0.5),   -1.5),  # OR gate, one hit
    # completion bonus
    (sig(goal=True),         dict(completion=10.0),    9.0),
    # combined
    (sig(d_col=0.5, d_off=1.0, d_prog=0.5, da=2.0, dd=0.5, goal=True),
     dict(collision=-0.5, offroad=-2.0, progress=0.4, smoothness=-0.5,
          completion=10.0),
     11.0),
]


@pytest.mark.parametrize("s,terms,total", TABLE)
def test_reward_table(s, terms, total):
    got_total, got_terms = step_reward(s, W)
    for name, val in terms.items():
        assert got_terms[name] == pytest.approx(val, abs=1e-12), name
    assert got_total == pytest.approx(total, abs=1e-12)


def test_reward_custom_weights():
    s = sig(d_col=0.5, d_off=0.0, d_prog=0.5)
    total, terms = step_reward(s, RewardWeights(offroad=2.0, collision=3.0,
                                                progress=1.0))
    expect = 3.0 * (-0.5) + 2.0 * (-1.0) + 1.0 * 0.4
    assert total == pytest.approx(expect, abs=1e-12)


def test_reward_total_is_weighted_sum(rng):
    for _ in range(200):
        s = sig(d_col=float(rng.uniform(-2, 5)), d_off=float(rng.uniform(-8, 4)),
                d_prog=float(rng.uniform(-4, 3)), da=float(rng.uniform(0, 4)),
                dd=float(rng.uniform(0, 1)), goal=bool(rng.integers(2)))
        w = RewardWeights(*rng.uniform(0.1, 5.0, size=3))
        total, t = step_reward(s, w)
        expect = (w.collision * t["collision"] + w.offroad * t["offroad"]
                  + w.progress * t["progress"] + t["smoothness"] + t["completion"])
        assert total == pytest.approx(expect, abs=1e-9)


def test_signals_validation():
    with pytest.raises(ValueError, match="d_collision"):
        sig(d_col=math.nan)
    with pytest.raises(ValueError, match="d_offroad"):
        sig(d_off=math.inf)
    with pytest.raises(ValueError, match="d_progress"):
        sig(d_prog=math.nan)
    sig(d_col=math.inf)  # +inf collision gap is the no-agents case


# -- oriented box gap ------------------------------------------------------------

def _poly(box):
    return Polygon(box_corners(*box))


def test_box_corners_layout():
    c = box_corners(0.0, 0.0, 0.0, 4.0, 2.0)
    assert c == pytest.approx(np.array([[2, 1], [-2, 1], [-2, -1], [2, -1]]))
    # heading rotates the long axis
    c = box_corners(0.0, 0.0, math.pi / 2, 4.0, 2.0)
    assert c == pytest.approx(np.array([[-1, 2], [-1, -2], [1, -2], [1, 2]]))


def test_box_gap_hand_cases():
    a = (0.0, 0.0, 0.0, 4.0, 2.0)
    assert box_gap(a, (10.0, 0.0, 0.0, 4.0, 2.0)) == pytest.approx(6.0)
    assert box_gap(a, (0.0, 10.0, 0.0, 4.0, 2.0)) == pytest.approx(8.0)
    # exact touch
    assert box_gap(a, (4.0, 0.0, 0.0, 4.0, 2.0)) == pytest.approx(0.0, abs=1e-12)
    # coincident: penetration is the smaller face overlap
    assert box_gap(a, a) == pytest.approx(-2.0)
    # half overlap along x: axis overlaps are (2, 2) -> depth 2
    assert box_gap(a, (2.0, 0.0, 0.0, 4.0, 2.0)) == pytest.approx(-2.0)
    # mostly overlapping along y
    assert box_gap(a, (0.0, 1.5, 0.0, 4.0, 2.0)) == pytest.approx(-0.5)
    # diagonal corner-to-corner separation
    assert box_gap(a, (7.0, 5.0, 0.0, 4.0, 2.0)) == pytest.approx(math.hypot(3.0, 3.0))
    # 90 degree rotation swaps extents
    assert box_gap(a, (0.0, 5.0, math.pi / 2, 4.0, 2.0)) == pytest.approx(2.0)


def test_box_gap_symmetry(rng):
    for _ in range(100):
        a = (*rng.uniform(-5, 5, 2), rng.uniform(-math.pi, math.pi),
             rng.uniform(1, 6), rng.uniform(0.5, 3))
        b = (*rng.uniform(-5, 5, 2), rng.uniform(-math.pi, math.pi),
             rng.uniform(1, 6), rng.uniform(0.5, 3))
        assert box_gap(a, b) == pytest.approx(box_gap(b, a), abs=1e-9)


def test_box_gap_random_pairs_vs_shapely(rng):
    """1000 random pairs: sign must agree with polygon intersection, and the
    separated-case magnitude must match polygon distance."""
    checked = 0
    while checked < 1000:
        a = (*rng.uniform(-8, 8, 2), rng.uniform(-math.pi, math.pi),
             rng.uniform(1, 6), rng.uniform(0.5, 3))
        b = (*rng.uniform(-8, 8, 2), rng.uniform(-math.pi, math.pi),
             rng.uniform(1, 6), rng.uniform(0.5, 3))
        g = box_gap(a, b)
        if abs(g) < 1e-6:
            continue  # grazing contact: boundary side is unspecified
        pa, pb = _poly(a), _poly(b)
        overlap = pa.intersection(pb).area > 1e-12
        assert (g < 0) == overlap, (a, b, g)
        if g > 0:
            assert g == pytest.approx(pa.distance(pb), abs=0.05)
            assert g == pytest.approx(pa.distance(pb), abs=1e-6)
        checked += 1


def test_box_gap_penetration_depth_is_minimal_translation(rng):
    """Sliding either box by depth along the best face axis separates them."""
    for _ in range(50):
        a = (*rng.uniform(-2, 2, 2), rng.uniform(-math.pi, math.pi), 4.0, 2.0)
        b = (*rng.uniform(-2, 2, 2), rng.uniform(-math.pi, math.pi), 4.0, 2.0)
        g = box_gap(a, b)
        if g >= -1e-4:
            continue
        depth = -g
        # moving b by depth (+eps) along one of the face axes must separate
        axes = []
        for heading in (a[2], b[2]):
            axes.append((math.cos(heading), math.sin(heading)))
            axes.append((-math.sin(heading), math.cos(heading)))
        seps = []
        for ax, ay in axes:
            for sgn in (1.0, -1.0):
                b2 = (b[0] + sgn * (depth + 1e-6) * ax,
                      b[1] + sgn * (depth + 1e-6) * ay, b[2], b[3], b[4])
                seps.append(box_gap(a, b2) >= -1e-9)
        assert any(seps)
        # but no translation by less than depth separates (convexity: test a
        # shrunk translation along every probe direction)
        for ang in np.linspace(0, 2 * math.pi, 32, endpoint=False):
            b3 = (b[0] + 0.5 * depth * math.cos(ang),
                  b[1] + 0.5 * depth * math.sin(ang), b[2], b[3], b[4])
            assert box_gap(a, b3) < 1e-9


def test_collision_gap_empty_and_min():
    ego = (0.0, 0.0, 0.0, 4.0, 2.0)
    assert collision_gap(ego, []) == math.inf
    others = [(10.0, 0.0, 0.0, 4.0, 2.0), (7.0, 0.0, 0.0, 4.0, 2.0)]
    assert collision_gap(ego, others) == pytest.approx(3.0)


# -- offroad -----------------------------------------------------------------------

def _boundary_oracle(lane_graph):
    lines = [LineString(e) for e in lane_graph.road_edges]
    lines += [LineString(s) for s in lane_graph.solid_lines]
    return lines


def _region_oracle(lane_graph):
    """Even-odd region built from the edge rings."""
    rings = [Polygon(e) for e in lane_graph.road_edges]

    def contains(p):
        pt = Point(p)
        parity = False
        for r in rings:
            if r.contains(pt):
                parity = not parity
        return parity

    return contains


def test_offroad_known_points(straight):
    g = straight.lane_graph
    assert on_road((40.0, 0.0), g)
    assert not on_road((40.0, 8.0), g)
    # centerline of the middle lane: nearest boundary is a solid line at 5.25
    assert offroad_distance((40.0, 0.0), g) == pytest.approx(-5.25)
    assert offroad_distance((40.0, 8.0), g) == pytest.approx(8.0 - 5.26)
    assert offroad_distance((40.0, -8.0), g) == pytest.approx(8.0 - 5.26)


def test_offroad_sign_grid_vs_shapely(straight, tee, four_way):
    rng = np.random.default_rng(42)
    for sc in (straight, tee, four_way):
        g = sc.lane_graph
        contains = _region_oracle(g)
        lines = _boundary_oracle(g)
        xs = np.concatenate([e[:, 0] for e in g.road_edges])
        ys = np.concatenate([e[:, 1] for e in g.road_edges])
        lo = (xs.min() - 5, ys.min() - 5)
        hi = (xs.max() + 5, ys.max() + 5)
        n = 0
        while n < 340:
            p = rng.uniform(lo, hi)
            pt = Point(p)
            d_true = min(l.distance(pt) for l in lines)
            if d_true < 1e-6:
                continue  # boundary points may land on either side
            d = offroad_distance(p, g)
            assert (d > 0) == (not contains(p)), (sc.scenario_id, p)
            assert abs(d) == pytest.approx(d_true, abs=1e-9)
            n += 1


def test_offroad_requires_edges(straight):
    from loopsim.scenario import LaneGraph
    bare = LaneGraph(straight.lane_graph.lanes, (), ())
    with pytest.raises(ValueError, match="road edges"):
        offroad_distance((0.0, 0.0), bare)


# -- comfort / classification --------------------------------------------------------

def test_is_uncomfortable_threshold():
    assert not is_uncomfortable(6.0, 6.0)
    assert is_uncomfortable(6.0001, 6.0)
    assert is_uncomfortable(-7.0, 6.0)
    assert not is_uncomfortable(0.0, 6.0)


def test_classify_priority():
    col = sig(d_col=-0.1)
    off = sig(d_off=0.5)
    goal = sig(goal=True)
    ok = sig()
    assert classify_episode([ok, col, off, goal]) == "collided"
    assert classify_episode([ok, off, goal]) == "offroad"
    assert classify_episode([ok, goal, ok]) == "completed"
    assert classify_episode([ok, ok]) == "stuck"
    assert classify_episode([]) == "stuck"
    # touching (gap exactly 0) counts as collided
    assert classify_episode([sig(d_col=0.0)]) == "collided"


def test_report_fractions():
    terms = ["completed"] * 3 + ["collided"] * 2 + ["offroad"] + ["stuck"] * 2
    r = MetricsReport.from_terminals(terms)
    assert r.n == 8
    assert r.completed == pytest.approx(3 / 8)
    assert r.collided == pytest.approx(2 / 8)
    assert r.offroad == pytest.approx(1 / 8)
    assert r.stuck == pytest.approx(2 / 8)
    assert r.completed + r.collided + r.offroad + r.stuck == pytest.approx(1.0, abs=1e-9)
    assert "completed=0.375" in r.row()
    assert "n=8" in r.row()


def test_report_empty_set_rejected():
    with pytest.raises(ValueError, match="empty"):
        MetricsReport.from_terminals([])


def test_report_fraction_sum_random(rng):
    for _ in range(50):
        terms = [TERMINALS[i] for i in rng.integers(0, 4, size=rng.integers(1, 40))]
        r = MetricsReport.from_terminals(terms)
        assert r.completed + r.collided + r.offroad + r.stuck == pytest.approx(1.0, abs=1e-9)


def test_goal_radius_constant():
    assert GOAL_RADIUS == 2.0
