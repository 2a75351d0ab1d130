"""Waypoint-tracking MPC over the kinematic bicycle model.

Single shooting: the decision variable is the action sequence, rolled out
through the bicycle step; the quadratic tracking cost is minimized with
projected gradient descent and a backtracking line search, so the reported
cost never increases across iterations. Gradients are exact (reverse
accumulation through the rollout), with the speed clamp treated as a
zero-derivative region.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import Action, EgoState, VehicleParams
from .geometry import wrap_angle

MAX_REFERENCE_DISTANCE = 50.0  # m, sanity bound on the first reference point


@dataclass(frozen=True)
class MpcConfig:
    horizon: int = 10
    iterations: int = 50
    tolerance: float = 1e-6
    w_pos: float = 1.0
    w_heading: float = 0.1
    w_accel: float = 0.01
    w_steer: float = 0.01
    w_jerk: float = 0.01

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError(f"MpcConfig.horizon: {self.horizon}")
        if self.iterations < 1:
            raise ValueError(f"MpcConfig.iterations: {self.iterations}")
        for name in ("w_pos", "w_heading", "w_accel", "w_steer", "w_jerk"):
            if getattr(self, name) < 0:
                raise ValueError(f"MpcConfig.{name}: negative weight")


class MpcError(RuntimeError):
    """Solver hit a non-finite cost; carries the iteration index."""

    def __init__(self, iteration: int, message: str):
        super().__init__(f"iteration {iteration}: {message}")
        self.iteration = iteration


@dataclass(frozen=True)
class MpcResult:
    actions: np.ndarray          # (H, 2): accel, steer
    cost: float
    iterations: int
    cost_history: tuple[float, ...]

    @property
    def first_action(self) -> Action:
        return Action(accel=float(self.actions[0, 0]),
                      steer=float(self.actions[0, 1]))

    def shifted(self) -> np.ndarray:
        """Warm start for the next solve: drop the applied first action."""
        return np.vstack([self.actions[1:], self.actions[-1:]])


def _rollout(state: EgoState, u: np.ndarray, p: VehicleParams, dt: float) -> np.ndarray:
    """States (H+1, 4) of x, y, theta, v under the action sequence."""
    H = len(u)
    s = np.empty((H + 1, 4))
    s[0] = (state.x, state.y, state.theta, state.v)
    for k in range(H):
        x, y, th, v = s[k]
        s[k + 1, 0] = x + v * math.cos(th) * dt
        s[k + 1, 1] = y + v * math.sin(th) * dt
        s[k + 1, 2] = th + v / p.wheelbase * math.tan(u[k, 1]) * dt
        s[k + 1, 3] = min(max(v + u[k, 0] * dt, 0.0), p.max_speed)
    return s


def _cost(states: np.ndarray, u: np.ndarray, ref: np.ndarray, cfg: MpcConfig) -> float:
    H = len(u)
    J = 0.0
    for k in range(1, H + 1):
        ex = states[k, 0] - ref[k - 1, 0]
        ey = states[k, 1] - ref[k - 1, 1]
        eth = wrap_angle(states[k, 2] - ref[k - 1, 2])
        J += cfg.w_pos * (ex * ex + ey * ey) + cfg.w_heading * eth * eth
    J += cfg.w_accel * float(np.sum(u[:, 0] ** 2))
    J += cfg.w_steer * float(np.sum(u[:, 1] ** 2))
    if H > 1:
        d = np.diff(u, axis=0)
        J += cfg.w_jerk * float(np.sum(d * d))
    return J


def _gradient(state: EgoState, u: np.ndarray, ref: np.ndarray,
              p: VehicleParams, cfg: MpcConfig, dt: float) -> tuple[float, np.ndarray]:
    """Cost and exact gradient w.r.t. the action sequence (adjoint sweep)."""
    H = len(u)
    s = _rollout(state, u, p, dt)
    J = _cost(s, u, ref, cfg)
    grad = np.zeros_like(u)
    lam = np.zeros(4)  # dJ/d state_k, accumulated backwards
    for k in range(H, 0, -1):
        ex = s[k, 0] - ref[k - 1, 0]
        ey = s[k, 1] - ref[k - 1, 1]
        eth = wrap_angle(s[k, 2] - ref[k - 1, 2])
        lam = lam + np.array([2 * cfg.w_pos * ex, 2 * cfg.w_pos * ey,
                              2 * cfg.w_heading * eth, 0.0])
        x, y, th, v = s[k - 1]
        a, steer = u[k - 1]
        vr = v + a * dt
        g_clip = 1.0 if 0.0 <= vr <= p.max_speed else 0.0
        # dJ/du_{k-1} through state k
        grad[k - 1, 0] += lam[3] * g_clip * dt
        grad[k - 1, 1] += lam[2] * v * dt / (p.wheelbase * math.cos(steer) ** 2)
        # pull lambda back through the step to state k-1
        new = np.empty(4)
        new[0] = lam[0]
        new[1] = lam[1]
        new[2] = lam[2] - lam[0] * v * math.sin(th) * dt + lam[1] * v * math.cos(th) * dt
        new[3] = (lam[0] * math.cos(th) * dt + lam[1] * math.sin(th) * dt
                  + lam[2] * math.tan(steer) * dt / p.wheelbase + lam[3] * g_clip)
        lam = new
    grad[:, 0] += 2 * cfg.w_accel * u[:, 0]
    grad[:, 1] += 2 * cfg.w_steer * u[:, 1]
    if H > 1:
        d = np.diff(u, axis=0)
        grad[1:] += 2 * cfg.w_jerk * d
        grad[:-1] -= 2 * cfg.w_jerk * d
    return J, grad


def _project(u: np.ndarray, p: VehicleParams) -> np.ndarray:
    out = u.copy()
    out[:, 0] = np.clip(out[:, 0], -p.max_accel, p.max_accel)
    out[:, 1] = np.clip(out[:, 1], -p.max_steer, p.max_steer)
    return out


def mpc_track(state: EgoState, reference: np.ndarray, params: VehicleParams,
              cfg: MpcConfig = MpcConfig(), dt: float = 0.1,
              warm_start: np.ndarray | None = None) -> MpcResult:
    """Track reference poses (H rows of x, y, heading), one per future step.

    Returns the optimized action sequence and its cost; rolling the actions
    through the bicycle step reproduces the trajectory the cost was computed
    on. The solve is deterministic.
    """
    ref = np.asarray(reference, dtype=float)
    if ref.ndim != 2 or ref.shape[1] != 3 or len(ref) < 1:
        raise ValueError(f"mpc_track: reference shape {ref.shape}, need (H>=1, 3)")
    if not np.all(np.isfinite(ref)):
        raise ValueError("mpc_track: non-finite reference")
    if math.hypot(ref[0, 0] - state.x, ref[0, 1] - state.y) > MAX_REFERENCE_DISTANCE:
        raise ValueError("mpc_track: first reference point farther than "
                         f"{MAX_REFERENCE_DISTANCE} m from the ego")
    H = len(ref)
    if warm_start is not None and warm_start.shape == (H, 2):
        u = _project(np.asarray(warm_start, dtype=float), params)
    else:
        u = np.zeros((H, 2))
    J, grad = _gradient(state, u, ref, params, cfg, dt)
    if not math.isfinite(J):
        raise MpcError(0, "non-finite initial cost")
    history = [J]
    alpha = 1.0
    iterations = 0
    for it in range(cfg.iterations):
        iterations = it + 1
        if not np.all(np.isfinite(grad)):
            raise MpcError(it, "non-finite gradient")
        step = alpha
        accepted = False
        for _ in range(40):
            u_try = _project(u - step * grad, params)
            s_try = _rollout(state, u_try, params, dt)
            J_try = _cost(s_try, u_try, ref, cfg)
            if not math.isfinite(J_try):
                raise MpcError(it, "non-finite cost in line search")
            if J_try < J:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
        improvement = J - J_try
        u, J = u_try, J_try
        history.append(J)
        alpha = step * 2.0
        if improvement < cfg.tolerance:
            break
        grad = _gradient(state, u, ref, params, cfg, dt)[1]
    return MpcResult(actions=u, cost=J, iterations=iterations,
                     cost_history=tuple(history))
