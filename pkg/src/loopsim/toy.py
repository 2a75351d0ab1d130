"""Velocity-controlled point-to-goal task reusing the driving reward terms.

The agent is a point in a bounded square; the action is a 2D velocity
command in [-bound, bound]^2 integrated at dt. The reward uses the same
five-term shape as the driving environment: collision distance is infinite
(nothing to hit), offroad distance is distance past the square boundary,
progress is the per-step reduction in goal distance, smoothness penalizes
command jumps, completion pays out inside the goal radius.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.random import Generator, default_rng

from .environment import Transition
from .metrics import GOAL_RADIUS, RewardWeights, StepSignals, step_reward
from .sac import ReplayBuffer, SacAgent, SacConfig, sac_update

TOY_OBS_DIMS = 4


@dataclass(frozen=True)
class ToyConfig:
    bound: float = 6.0
    dt: float = 0.1
    half_size: float = 50.0
    goal_min_radius: float = 10.0
    goal_max_radius: float = 20.0
    max_steps: int = 80
    weights: RewardWeights = field(default_factory=RewardWeights)


class PointGoalEnv:
    """Observation: goal offset (2) + previous velocity command (2).

    Both blocks are scaled to roughly unit range (offsets by the maximum
    goal radius, commands by the action bound) so the tanh layers of a
    freshly initialized network stay out of saturation.
    """

    def __init__(self, cfg: ToyConfig | None = None):
        self.cfg = cfg or ToyConfig()
        self.pos = np.zeros(2)
        self.goal = np.zeros(2)
        self.prev = np.zeros(2)
        self.steps = 0

    def reset(self, rng: Generator) -> np.ndarray:
        radius = rng.uniform(self.cfg.goal_min_radius, self.cfg.goal_max_radius)
        angle = rng.uniform(-np.pi, np.pi)
        self.goal = radius * np.array([np.cos(angle), np.sin(angle)])
        self.pos = np.zeros(2)
        self.prev = np.zeros(2)
        self.steps = 0
        return self._obs()

    def _obs(self) -> np.ndarray:
        return np.concatenate([(self.goal - self.pos) / self.cfg.goal_max_radius,
                               self.prev / self.cfg.bound])

    def step(self, action: np.ndarray):
        cmd = np.clip(np.asarray(action, dtype=float), -self.cfg.bound, self.cfg.bound)
        before = float(np.linalg.norm(self.goal - self.pos))
        self.pos = self.pos + cmd * self.cfg.dt
        self.steps += 1
        after = float(np.linalg.norm(self.goal - self.pos))
        outside = float(np.max(np.abs(self.pos)) - self.cfg.half_size)
        signals = StepSignals(
            d_collision=np.inf,
            d_offroad=outside,
            d_progress=before - after,
            delta_accel=float(np.linalg.norm(cmd - self.prev)),
            delta_turning=0.0,
            is_goal=after < GOAL_RADIUS,
        )
        reward, _ = step_reward(signals, self.cfg.weights)
        self.prev = cmd
        done = signals.is_goal or outside > 0.0 or self.steps >= self.cfg.max_steps
        return self._obs(), reward, done, signals


def toy_agent_config(**overrides) -> SacConfig:
    base = dict(obs_dim=TOY_OBS_DIMS, act_dim=2, hidden=64, depth=3,
                lr=3e-4, batch_size=128, action_bounds=(6.0, 6.0))
    base.update(overrides)
    return SacConfig(**base)


def run_episode(env: PointGoalEnv, agent: SacAgent, rng: Generator,
                stochastic: bool, buffer: ReplayBuffer | None = None) -> bool:
    """Roll one episode; returns whether the goal was reached."""
    obs = env.reset(rng)
    completed = False
    while True:
        action = agent.act(obs, rng=rng if stochastic else None)
        next_obs, reward, done, signals = env.step(action)
        if buffer is not None:
            buffer.push(Transition(obs=obs, action=np.asarray(action, dtype=float),
                                   reward=reward, next_obs=next_obs, done=done))
        obs = next_obs
        if done:
            completed = signals.is_goal
            break
    return completed


def train_point_goal(seed: int = 0, episodes: int = 200,
                     updates_per_episode: int = 24,
                     cfg: ToyConfig | None = None,
                     agent_cfg: SacConfig | None = None) -> SacAgent:
    env = PointGoalEnv(cfg)
    agent_cfg = agent_cfg or toy_agent_config()
    seeds = np.random.SeedSequence(seed).spawn(3)
    agent = SacAgent(agent_cfg, default_rng(seeds[0]))
    roll_rng = default_rng(seeds[1])
    train_rng = default_rng(seeds[2])
    buffer = ReplayBuffer(capacity=50_000)
    for _ in range(episodes):
        run_episode(env, agent, roll_rng, stochastic=True, buffer=buffer)
        if len(buffer) < agent_cfg.batch_size:
            continue
        for _ in range(updates_per_episode):
            sac_update(agent, buffer.sample(agent_cfg.batch_size, train_rng),
                       train_rng)
    return agent


def evaluate_point_goal(agent: SacAgent, seed: int = 1, episodes: int = 50,
                        cfg: ToyConfig | None = None) -> float:
    env = PointGoalEnv(cfg)
    rng = default_rng(seed)
    done = sum(run_episode(env, agent, rng, stochastic=False)
               for _ in range(episodes))
    return done / episodes
