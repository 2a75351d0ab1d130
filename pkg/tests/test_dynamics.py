"""Ego dynamics: teleport specs, bicycle kinematics vs closed forms."""
import math

import numpy as np
import pytest

from loopsim.dynamics import (Action, EgoState, VehicleParams, clamp_action,
                              step_bicycle, step_default)

DT = 0.1
P = VehicleParams()


# -- teleport --------------------------------------------------------------------

def test_default_speed_from_chord():
    s = EgoState(0.0, 0.0, 0.0, 3.0)
    out = step_default(s, (1.0, 0.0, 0.0), DT)
    assert out.x == 1.0 and out.y == 0.0
    assert out.v == pytest.approx(10.0)


def test_default_zero_motion():
    s = EgoState(2.0, -1.0, 0.3, 5.0)
    out = step_default(s, (2.0, -1.0, 0.3), DT)
    assert out.v == 0.0
    assert out.theta == pytest.approx(0.3)


def test_default_lateral_hop():
    s = EgoState(0.0, 0.0, 0.0, 0.0)
    out = step_default(s, (0.0, 0.5, math.pi / 2), DT)
    assert out.v == pytest.approx(5.0)
    assert out.theta == pytest.approx(math.pi / 2)


def test_default_wraps_heading():
    out = step_default(EgoState(0, 0, 0, 0), (1.0, 0.0, 3 * math.pi), DT)
    assert out.theta == pytest.approx(math.pi)


# -- clamping --------------------------------------------------------------------

def test_clamp_action_box():
    a = clamp_action(Action(accel=50.0, steer=-2.0), P)
    assert a.accel == P.max_accel
    assert a.steer == -P.max_steer
    a = clamp_action(Action(accel=-50.0, steer=2.0), P)
    assert a.accel == -P.max_accel
    assert a.steer == P.max_steer
    inside = clamp_action(Action(1.0, 0.1), P)
    assert inside == Action(1.0, 0.1)


def test_bicycle_speed_floor_and_ceiling():
    s = EgoState(0, 0, 0, 0.2)
    out = step_bicycle(s, Action(-6.0, 0.0), P, DT)
    assert out.v == 0.0  # no reverse
    s = EgoState(0, 0, 0, 29.9)
    out = step_bicycle(s, Action(6.0, 0.0), P, DT)
    assert out.v == P.max_speed


# -- straight line -----------------------------------------------------------------

def test_bicycle_straight_uses_pre_update_speed():
    s = EgoState(0.0, 0.0, 0.0, 10.0)
    out = step_bicycle(s, Action(2.0, 0.0), P, DT)
    # position advances with v, not v + a dt
    assert out.x == pytest.approx(1.0)
    assert out.y == 0.0
    assert out.v == pytest.approx(10.2)


def test_bicycle_constant_accel_speed_profile():
    s = EgoState(0.0, 0.0, 0.0, 0.0)
    for _ in range(40):
        s = step_bicycle(s, Action(1.5, 0.0), P, DT)
    assert s.v == pytest.approx(1.5 * 4.0)
    # x = sum v_k dt with v_k = a k dt: a dt^2 n(n-1)/2
    assert s.x == pytest.approx(1.5 * DT * DT * 40 * 39 / 2)


def test_bicycle_heading_wraps():
    s = EgoState(0.0, 0.0, math.pi - 1e-3, 10.0)
    out = step_bicycle(s, Action(0.0, 0.5), P, DT)
    assert -math.pi < out.theta <= math.pi


# -- circle ------------------------------------------------------------------------

def _fit_circle(xs, ys):
    """Least-squares circle fit (Kasa): returns (cx, cy, r)."""
    A = np.stack([xs, ys, np.ones_like(xs)], axis=1)
    b = xs ** 2 + ys ** 2
    sol, *_ = np.linalg.lstsq(A, b, rcond=None)
    cx, cy = sol[0] / 2, sol[1] / 2
    r = math.sqrt(sol[2] + cx ** 2 + cy ** 2)
    return cx, cy, r


def test_bicycle_circle_radius_within_1pct():
    steer = 0.3
    v = 5.0
    expected = P.wheelbase / math.tan(steer)
    s = EgoState(0.0, 0.0, 0.0, v)
    xs, ys = [], []
    for _ in range(2000):
        s = step_bicycle(s, Action(0.0, steer), P, DT)
        xs.append(s.x)
        ys.append(s.y)
    _, _, r = _fit_circle(np.array(xs), np.array(ys))
    assert abs(r - expected) / expected < 0.01


def test_bicycle_circle_closes():
    # after turning through 2*pi the trajectory returns near the start
    steer = 0.4
    v = 4.0
    omega = v / P.wheelbase * math.tan(steer)
    n = int(round(2 * math.pi / (omega * DT)))
    s = EgoState(0.0, 0.0, 0.0, v)
    first = None
    for k in range(n):
        s = step_bicycle(s, Action(0.0, steer), P, DT)
        if first is None:
            first = s
    r = P.wheelbase / math.tan(steer)
    assert math.hypot(s.x, s.y) < 0.05 * r


def test_bicycle_dt_halving_second_order_radius():
    """Euler vertices sit on a circle whose radius error is O(dt^2).

    Radius of the polygon circumscribing circle: (v dt / 2) / sin(d_theta / 2)
    = R (1 + d_theta^2 / 24 + ...). Halving dt must cut the radial error by
    about 4x.
    """
    steer = 0.35
    v = 6.0
    R = P.wheelbase / math.tan(steer)

    def radial_error(dt):
        s = EgoState(0.0, 0.0, 0.0, v)
        xs, ys = [], []
        steps = int(round(40.0 / dt))  # fixed simulated time
        for _ in range(steps):
            s = step_bicycle(s, Action(0.0, steer), P, dt)
            xs.append(s.x)
            ys.append(s.y)
        _, _, r = _fit_circle(np.array(xs), np.array(ys))
        return abs(r - R)

    e1 = radial_error(0.1)
    e2 = radial_error(0.05)
    assert e1 / e2 == pytest.approx(4.0, rel=0.15)


def test_bicycle_zero_speed_never_turns():
    s = EgoState(1.0, 2.0, 0.5, 0.0)
    out = step_bicycle(s, Action(0.0, 0.5), P, DT)
    assert (out.x, out.y, out.theta) == (1.0, 2.0, 0.5)
