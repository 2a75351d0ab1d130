"""Ego vehicle dynamics: waypoint teleport and a kinematic bicycle model.

The bicycle step is forward Euler at dt = 0.1 s. Position and heading are
advanced with the pre-update speed, so a constant steering angle at constant
speed traces vertices of a regular polygon inscribed in a circle of radius
close to wheelbase / tan(steer).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .geometry import wrap_angle


@dataclass(frozen=True)
class VehicleParams:
    wheelbase: float = 2.8      # m
    max_accel: float = 6.0      # m/s^2, symmetric accel/brake bound
    max_steer: float = 0.5      # rad
    max_speed: float = 30.0     # m/s


@dataclass(frozen=True)
class EgoState:
    x: float
    y: float
    theta: float  # rad, (-pi, pi]
    v: float      # m/s, >= 0


@dataclass(frozen=True)
class Action:
    accel: float  # m/s^2
    steer: float  # rad


def clamp_action(a: Action, p: VehicleParams) -> Action:
    return Action(
        accel=min(max(a.accel, -p.max_accel), p.max_accel),
        steer=min(max(a.steer, -p.max_steer), p.max_steer))


def step_default(state: EgoState, waypoint, dt: float) -> EgoState:
    """Teleport to the waypoint; speed is the chord length over dt.

    waypoint is (x, y, heading).
    """
    x, y, heading = float(waypoint[0]), float(waypoint[1]), float(waypoint[2])
    v = math.hypot(x - state.x, y - state.y) / dt
    return EgoState(x=x, y=y, theta=wrap_angle(heading), v=v)


def step_bicycle(state: EgoState, action: Action, p: VehicleParams,
                 dt: float) -> EgoState:
    """One kinematic bicycle step with the action clamped to the vehicle box."""
    a = clamp_action(action, p)
    x = state.x + state.v * math.cos(state.theta) * dt
    y = state.y + state.v * math.sin(state.theta) * dt
    theta = wrap_angle(state.theta + state.v / p.wheelbase * math.tan(a.steer) * dt)
    v = min(max(state.v + a.accel * dt, 0.0), p.max_speed)
    return EgoState(x=x, y=y, theta=theta, v=v)


