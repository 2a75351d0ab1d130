"""Soft actor-critic on hand-rolled MLPs (value-network variant).

Networks: twin Q(s, a), a state-value net V(s) with a slowly tracking target
copy, and a Gaussian actor whose output is squashed through tanh and scaled
to the action bounds (log-prob carries the Jacobian correction). Updates:

    Q target   = r + gamma * (1 - done) * V_target(s')
    V target   = min(Q1, Q2)(s, a~) - alpha * log pi(a~ | s)
    actor loss = mean(alpha * log pi(a~ | s) - min(Q1, Q2)(s, a~))

with one Adam step per network per update and a soft target update
V_target <- tau * V + (1 - tau) * V_target. All gradients are exact
reverse-mode through the Mlp class, including the actor's path through the
critics' inputs; the tests check every path against finite differences.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from .dynamics import Action
from .environment import build_observation
from .mlp import Adam, Mlp, soft_update
from .policies import PlannerOutput

CHECKPOINT_VERSION = 1
LOG2PI = math.log(2.0 * math.pi)
SQUASH_EPS = 1e-12


class SacNumericsError(RuntimeError):
    """A loss went non-finite; carries the offending batch index."""

    def __init__(self, message: str, batch_index: int):
        super().__init__(f"{message} (batch index {batch_index})")
        self.batch_index = batch_index


@dataclass(frozen=True)
class SacConfig:
    obs_dim: int
    act_dim: int = 2
    hidden: int = 256
    depth: int = 6                      # hidden layers
    lr: float = 1e-4
    gamma: float = 0.99
    tau: float = 0.005
    alpha: float = 0.2
    batch_size: int = 256
    action_bounds: tuple = (6.0, 0.5)   # accel, steer magnitudes
    log_std_min: float = -5.0
    log_std_max: float = 2.0

    def __post_init__(self):
        if self.obs_dim < 1 or self.act_dim < 1:
            raise ValueError("SacConfig: obs_dim and act_dim must be >= 1")
        if self.lr <= 0:
            raise ValueError(f"SacConfig.lr: {self.lr}")
        if not 0.0 < self.tau <= 1.0:
            raise ValueError(f"SacConfig.tau: {self.tau}, need (0, 1]")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"SacConfig.gamma: {self.gamma}, need [0, 1)")
        if len(self.action_bounds) != self.act_dim:
            raise ValueError("SacConfig.action_bounds: one bound per action dim")
        if any(b <= 0 for b in self.action_bounds):
            raise ValueError("SacConfig.action_bounds: bounds must be positive")


class SacAgent:
    def __init__(self, cfg: SacConfig, rng: np.random.Generator):
        self.cfg = cfg
        hid = [cfg.hidden] * cfg.depth
        self.q1 = Mlp([cfg.obs_dim + cfg.act_dim] + hid + [1], rng)
        self.q2 = Mlp([cfg.obs_dim + cfg.act_dim] + hid + [1], rng)
        self.value = Mlp([cfg.obs_dim] + hid + [1], rng)
        self.value_target = self.value.copy()
        self.actor = Mlp([cfg.obs_dim] + hid + [2 * cfg.act_dim], rng)
        self.opt_q1 = Adam(self.q1.parameters(), cfg.lr)
        self.opt_q2 = Adam(self.q2.parameters(), cfg.lr)
        self.opt_value = Adam(self.value.parameters(), cfg.lr)
        self.opt_actor = Adam(self.actor.parameters(), cfg.lr)

    @property
    def bounds(self) -> np.ndarray:
        return np.asarray(self.cfg.action_bounds, dtype=float)

    # -- actor distribution --------------------------------------------------

    def _head(self, obs: np.ndarray):
        """Actor forward pass split into mean and soft-clipped log-std."""
        out, cache = self.actor.forward(obs)
        a = self.cfg.act_dim
        mu, raw = out[:, :a], out[:, a:]
        mid = 0.5 * (self.cfg.log_std_min + self.cfg.log_std_max)
        half = 0.5 * (self.cfg.log_std_max - self.cfg.log_std_min)
        traw = np.tanh(raw)
        log_std = mid + half * traw
        return mu, log_std, traw, half, cache

    def sample_action(self, obs: np.ndarray, rng: np.random.Generator
                      ) -> tuple[np.ndarray, np.ndarray]:
        """Stochastic squashed action and its log-prob, batch-shaped."""
        obs = np.atleast_2d(obs)
        mu, log_std, _, _, _ = self._head(obs)
        eps = rng.standard_normal(mu.shape)
        return self._squash(mu, log_std, eps)[:2]

    def _squash(self, mu, log_std, eps):
        std = np.exp(log_std)
        u = mu + std * eps
        t = np.tanh(u)
        act = self.bounds * t
        logp = np.sum(-0.5 * LOG2PI - log_std - 0.5 * eps * eps
                      - np.log(self.bounds * (1.0 - t * t) + SQUASH_EPS), axis=1)
        return act, logp, u, t, std

    def act(self, obs: np.ndarray, rng: np.random.Generator | None = None) -> np.ndarray:
        """Single action; deterministic (tanh of the mean) without an rng."""
        obs = np.asarray(obs, dtype=float)
        if obs.ndim != 1 or obs.shape[0] != self.cfg.obs_dim:
            raise ValueError(f"act: obs shape {obs.shape}, expected ({self.cfg.obs_dim},)")
        if rng is None:
            mu, _, _, _, _ = self._head(obs[None])
            return (self.bounds * np.tanh(mu))[0]
        return self.sample_action(obs[None], rng)[0][0]


@dataclass(frozen=True)
class SacLosses:
    q1: float
    q2: float
    value: float
    actor: float


def sac_gradients(agent: SacAgent, batch: dict, eps: np.ndarray
                  ) -> tuple[SacLosses, dict]:
    """Losses and parameter gradients for all four networks.

    Everything is evaluated at the current parameters with the exploration
    noise eps supplied explicitly, so the result is a deterministic function
    of (parameters, batch, eps) and each gradient can be checked against
    finite differences of its loss. No parameters are modified.
    """
    cfg = agent.cfg
    obs = batch["obs"]
    act = batch["action"]
    rew = batch["reward"]
    nxt = batch["next_obs"]
    done = batch["done"].astype(float)
    B = len(obs)

    # twin Q regression toward r + gamma (1 - done) V_target(s')
    v_next = agent.value_target(nxt)[:, 0]
    y = rew + cfg.gamma * (1.0 - done) * v_next
    _check_finite(y, "q target")
    losses_q = []
    grads_q = []
    qa_in = np.concatenate([obs, act], axis=1)
    for q in (agent.q1, agent.q2):
        pred, cache = q.forward(qa_in)
        err = pred[:, 0] - y
        losses_q.append(float(np.mean(err * err)))
        grads, _ = q.backward(cache, (2.0 * err / B)[:, None])
        grads_q.append(grads)

    # fresh squashed sample from the current actor
    mu, log_std, traw, half, actor_cache = agent._head(obs)
    a_new, logp, u, t, std = agent._squash(mu, log_std, eps)
    _check_finite(logp, "log prob")

    q1_in = np.concatenate([obs, a_new], axis=1)
    p1, c1 = agent.q1.forward(q1_in)
    p2, c2 = agent.q2.forward(q1_in)
    qmin = np.minimum(p1[:, 0], p2[:, 0])
    pick1 = (p1[:, 0] <= p2[:, 0]).astype(float)

    # V regression toward min Q - alpha log pi (targets held fixed)
    v_target_val = qmin - cfg.alpha * logp
    pred_v, cache_v = agent.value.forward(obs)
    err_v = pred_v[:, 0] - v_target_val
    loss_v = float(np.mean(err_v * err_v))
    grads_v, _ = agent.value.backward(cache_v, (2.0 * err_v / B)[:, None])

    # actor: mean(alpha log pi - min Q), gradient through the critics' inputs
    loss_actor = float(np.mean(cfg.alpha * logp - qmin))
    _, gx1 = agent.q1.backward(c1, (-pick1 / B)[:, None])
    _, gx2 = agent.q2.backward(c2, (-(1.0 - pick1) / B)[:, None])
    g_act = (gx1 + gx2)[:, cfg.obs_dim:]          # dL/da_new

    one_m_t2 = 1.0 - t * t
    dlogp_du = 2.0 * t * one_m_t2 / (one_m_t2 + SQUASH_EPS / agent.bounds)
    da_du = agent.bounds * one_m_t2
    g_mu = (cfg.alpha / B) * dlogp_du + g_act * da_du
    g_log_std = ((cfg.alpha / B) * (-1.0 + dlogp_du * eps * std)
                 + g_act * da_du * eps * std)
    g_out = np.concatenate([g_mu, g_log_std * half * (1.0 - traw * traw)], axis=1)
    grads_a, _ = agent.actor.backward(actor_cache, g_out)

    losses = SacLosses(q1=losses_q[0], q2=losses_q[1], value=loss_v,
                       actor=loss_actor)
    for name, val in asdict(losses).items():
        if not math.isfinite(val):
            raise SacNumericsError(f"{name} loss non-finite", _first_bad(err_v))
    return losses, {"q1": grads_q[0], "q2": grads_q[1], "value": grads_v,
                    "actor": grads_a}


def sac_update(agent: SacAgent, batch: dict, rng: np.random.Generator) -> SacLosses:
    """One gradient step for each network plus the soft target update."""
    eps = rng.standard_normal((len(batch["obs"]), agent.cfg.act_dim))
    losses, grads = sac_gradients(agent, batch, eps)
    agent.opt_q1.step(grads["q1"])
    agent.opt_q2.step(grads["q2"])
    agent.opt_value.step(grads["value"])
    agent.opt_actor.step(grads["actor"])
    soft_update(agent.value_target, agent.value, agent.cfg.tau)
    return losses


def _check_finite(arr: np.ndarray, what: str) -> None:
    bad = ~np.isfinite(arr)
    if bad.any():
        raise SacNumericsError(f"{what} non-finite", int(np.argmax(bad)))


def _first_bad(arr: np.ndarray) -> int:
    bad = ~np.isfinite(arr)
    return int(np.argmax(bad)) if bad.any() else 0


# ---------------------------------------------------------------------------
# replay buffer

class ReplayBuffer:
    """Uniform-sampling ring buffer of transitions."""

    def __init__(self, capacity: int = 200_000):
        self.capacity = capacity
        self._items: list = []
        self._next = 0

    def push(self, transition) -> None:
        if len(self._items) < self.capacity:
            self._items.append(transition)
        else:
            self._items[self._next] = transition
        self._next = (self._next + 1) % self.capacity

    def __len__(self) -> int:
        return len(self._items)

    def sample(self, n: int, rng: np.random.Generator) -> dict:
        if not self._items:
            raise ValueError("ReplayBuffer.sample: buffer empty")
        idx = rng.integers(0, len(self._items), size=n)
        items = [self._items[i] for i in idx]
        return {
            "obs": np.stack([t.obs for t in items]),
            "action": np.stack([t.action for t in items]),
            "reward": np.array([t.reward for t in items], dtype=float),
            "next_obs": np.stack([t.next_obs for t in items]),
            "done": np.array([t.done for t in items], dtype=bool),
        }


# ---------------------------------------------------------------------------
# observation fusion and feature providers

def fuse_observation(sim_vec: np.ndarray, il_vec: np.ndarray | None,
                     expected_dim: int | None = None) -> np.ndarray:
    """Concatenate simulator state block with an optional feature block.

    Order is fixed: simulator block first. A None feature block contributes
    nothing; expected_dim (when given) asserts the fused size.
    """
    sim_vec = np.asarray(sim_vec, dtype=float)
    parts = [sim_vec]
    if il_vec is not None:
        parts.append(np.asarray(il_vec, dtype=float))
    out = np.concatenate(parts)
    if expected_dim is not None and out.shape[0] != expected_dim:
        raise ValueError(f"fuse_observation: got {out.shape[0]} dims, "
                         f"declared {expected_dim}")
    return out


class ZeroFeatures:
    """Feature provider that always supplies zeros (dim may be 0)."""

    def __init__(self, dim: int):
        self.dim = dim

    def features(self, scenario_id: str, step: int) -> np.ndarray | None:
        if self.dim == 0:
            return None
        return np.zeros(self.dim)


class RecordedFeatures:
    """Per-scenario recorded feature vectors from <dir>/<scenario_id>.npz.

    Each file holds one float array "features" of shape (steps, dim). A
    missing file or step yields zeros of the provider's dimension.
    """

    def __init__(self, directory):
        self.directory = Path(directory)
        files = sorted(self.directory.glob("*.npz"))
        if not files:
            raise FileNotFoundError(f"no .npz feature files in {directory}")
        self._cache: dict[str, np.ndarray | None] = {}
        self.dim = int(self._load_file(files[0]).shape[1])

    @staticmethod
    def _load_file(path: Path) -> np.ndarray:
        with np.load(path) as z:
            arr = np.asarray(z["features"], dtype=float)
        if arr.ndim != 2:
            raise ValueError(f"{path}: features must be 2-D (steps, dim)")
        return arr

    def _table(self, scenario_id: str) -> np.ndarray | None:
        if scenario_id not in self._cache:
            path = self.directory / f"{scenario_id}.npz"
            self._cache[scenario_id] = self._load_file(path) if path.exists() else None
        return self._cache[scenario_id]

    def features(self, scenario_id: str, step: int) -> np.ndarray:
        table = self._table(scenario_id)
        if table is None or not (0 <= step < len(table)):
            return np.zeros(self.dim)
        return table[step]


def write_features(directory, scenario_id: str, table: np.ndarray) -> None:
    """Writer for the recorded-feature file format (used by tests/tools)."""
    path = Path(directory) / f"{scenario_id}.npz"
    np.savez(path, features=np.asarray(table, dtype=float))


# ---------------------------------------------------------------------------
# planner wrapper and offline training

class SacPlanner:
    """Action-mode planner around the actor network."""

    def __init__(self, agent: SacAgent, scenario, rng: np.random.Generator,
                 feature_provider=None, stochastic: bool = False):
        self.agent = agent
        self.scenario = scenario
        self.rng = rng
        self.features = feature_provider
        self.stochastic = stochastic

    def observe(self, view) -> PlannerOutput:
        sim = build_observation(view)
        feat = None
        if self.features is not None:
            feat = self.features.features(self.scenario.scenario_id, view.step)
        obs = fuse_observation(sim, feat, expected_dim=self.agent.cfg.obs_dim)
        a = self.agent.act(obs, self.rng if self.stochastic else None)
        return PlannerOutput(action=Action(accel=float(a[0]), steer=float(a[1])))


def save_checkpoint(path, agent: SacAgent, extra: dict | None = None) -> None:
    """Versioned checkpoint: JSON meta header plus raw parameter arrays."""
    meta = {"format_version": CHECKPOINT_VERSION,
            "config": asdict(agent.cfg),
            "nets": {name: getattr(agent, name).sizes
                     for name in ("q1", "q2", "value", "value_target", "actor")},
            "extra": extra or {}}
    arrays = {}
    for name in ("q1", "q2", "value", "value_target", "actor"):
        net: Mlp = getattr(agent, name)
        for i, (W, b) in enumerate(zip(net.weights, net.biases)):
            arrays[f"{name}.W{i}"] = W
            arrays[f"{name}.b{i}"] = b
    np.savez(path, meta=np.array(json.dumps(meta)), **arrays)


def load_checkpoint(path) -> tuple[SacAgent, dict]:
    with np.load(path) as z:
        meta = json.loads(str(z["meta"]))
        if meta.get("format_version") != CHECKPOINT_VERSION:
            raise ValueError(f"checkpoint {path}: format_version "
                             f"{meta.get('format_version')!r}, expected {CHECKPOINT_VERSION}")
        cfg_d = dict(meta["config"])
        cfg_d["action_bounds"] = tuple(cfg_d["action_bounds"])
        cfg = SacConfig(**cfg_d)
        agent = SacAgent(cfg, np.random.default_rng(0))
        for name in ("q1", "q2", "value", "value_target", "actor"):
            net: Mlp = getattr(agent, name)
            for i in range(net.n_layers):
                net.weights[i][...] = z[f"{name}.W{i}"]
                net.biases[i][...] = z[f"{name}.b{i}"]
    return agent, meta.get("extra", {})


def train_offline(scenarios, agent: SacAgent, env_cfg, seed: int,
                  epochs: int = 1, workers: int = 1, updates_per_sync: int = 32,
                  sync_every: int = 32, buffer: ReplayBuffer | None = None,
                  feature_provider=None, on_sync=None):
    """Alternate simulation and training: rollouts with the stochastic actor
    fill the buffer; after every sync_every scenarios the agent takes
    updates_per_sync gradient steps. Returns (reports, buffer)."""
    from .environment import batch_simulate
    if buffer is None:
        buffer = ReplayBuffer()
    train_rng = np.random.default_rng(
        np.random.SeedSequence([seed, 0xC0FFEE]).generate_state(1)[0])
    reports = []

    def factory(sc, rng):
        return SacPlanner(agent, sc, rng, feature_provider, stochastic=True)

    def hook(block_index):
        if len(buffer) < agent.cfg.batch_size:
            return
        for _ in range(updates_per_sync):
            sac_update(agent, buffer.sample(agent.cfg.batch_size, train_rng),
                       train_rng)
        if on_sync is not None:
            on_sync(block_index)

    for _ in range(epochs):
        report, _ = batch_simulate(scenarios, factory, env_cfg, seed=seed,
                                   workers=workers, buffer=buffer,
                                   train_hook=hook, sync_every=sync_every,
                                   feature_provider=feature_provider)
        reports.append(report)
    return reports, buffer
