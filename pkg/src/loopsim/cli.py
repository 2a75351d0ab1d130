"""Command-line harness.

Subcommands:
  simulate       run closed-loop episodes over a scenario directory; writes
                 results.jsonl, manifest.json, and per-episode step logs
  evaluate       like simulate but prints the aggregate outcome table and
                 skips step logs
  gen-benchmark  expand each scenario into equidistant goal variants
  train-rl       offline actor-critic training over a scenario directory
  render         draw an episode step log to SVG frames

Configuration precedence: built-in defaults < --config JSON file < explicit
command-line flags. Every run writes a manifest recording the merged
configuration, the seed, the package version, and the git commit; manifests
carry no timestamps so reruns are byte-identical.

Errors exit nonzero with a one-line machine-readable JSON object on stderr.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import subprocess
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .environment import SIM_OBS_DIMS, EnvConfig, batch_simulate
from .goalgen import ActionCosts, build_goal_set
from .metrics import MetricsReport, RewardWeights
from .policies import (ExpertPlanner, JitterPlanner, LaneFollowPlanner,
                       StationaryPlanner)
from .render import render_episode
from .sac import (RecordedFeatures, SacAgent, SacConfig, SacPlanner,
                  load_checkpoint, save_checkpoint, train_offline)
from .scenario import CURRENT_FRAME, Scenario, load_scenario_path, save_scenario_path

SDC_POLICIES = ("expert", "lanefollow", "lanefollow-open", "lanefollow-noisy",
                "stationary", "sac")


@dataclass(frozen=True)
class RunConfig:
    """Merged harness settings (defaults < config file < flags)."""
    scenario_dir: str = "scenarios"
    out_dir: str = "out"
    sdc_policy: str = "lanefollow"
    npc_policy: str = "expert"
    dynamics: str = "bicycle"
    no_mpc: bool = False
    workers: int = 4
    seed: int = 0
    reward_weights: tuple[float, float, float] = (1.0, 1.0, 10.0)
    il_features: str = "none"
    checkpoint: str = ""
    epochs: int = 1
    max_cost: float = 10.0
    nms_radius: float = 2.5
    waypoint_noise: float = 0.8

    def __post_init__(self):
        if self.sdc_policy not in SDC_POLICIES:
            raise ValueError(f"sdc_policy must be one of {SDC_POLICIES}, "
                             f"got {self.sdc_policy!r}")
        if len(self.reward_weights) != 3:
            raise ValueError("reward_weights needs exactly 3 values "
                             "(offroad, collision, progress)")


def goal_selection_nearest(endpoints, goal) -> int:
    """Index of the candidate endpoint closest to the goal.

    endpoints is an (N, 2) array of candidate plan end positions. Ties go to
    the lowest index.
    """
    pts = np.asarray(endpoints, dtype=float).reshape(-1, 2)
    if len(pts) == 0:
        raise ValueError("goal_selection_nearest: no candidates")
    d = np.hypot(pts[:, 0] - goal[0], pts[:, 1] - goal[1])
    return int(np.argmin(d))


# ---------------------------------------------------------------------------
# configuration plumbing

def _merge_config(args: argparse.Namespace) -> RunConfig:
    values = dataclasses.asdict(RunConfig())
    if getattr(args, "config", None):
        loaded = json.loads(Path(args.config).read_text())
        if not isinstance(loaded, dict):
            raise ValueError(f"config file {args.config}: expected a JSON object")
        unknown = set(loaded) - set(values)
        if unknown:
            raise ValueError(f"config file {args.config}: unknown keys {sorted(unknown)}")
        values.update(loaded)
    for key in values:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    values["reward_weights"] = _parse_weights(values["reward_weights"])
    return RunConfig(**values)


def _parse_weights(raw) -> tuple[float, float, float]:
    if isinstance(raw, str):
        raw = raw.split(",")
    vals = tuple(float(v) for v in raw)
    if len(vals) != 3:
        raise ValueError("reward_weights needs exactly 3 values "
                         "(offroad, collision, progress)")
    return vals


def _git_commit() -> str:
    try:
        out = subprocess.run(["git", "rev-parse", "HEAD"],
                             capture_output=True, text=True, timeout=10,
                             cwd=Path(__file__).resolve().parent)
        if out.returncode == 0:
            return out.stdout.strip()
    except OSError:
        pass
    return "unknown"


def _write_manifest(out_dir: Path, command: str, cfg: RunConfig) -> None:
    manifest = {
        "command": command,
        "version": __version__,
        "commit": _git_commit(),
        "seed": cfg.seed,
        "config": dataclasses.asdict(cfg),
    }
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _load_scenarios(directory: str) -> list[Scenario]:
    files = sorted(Path(directory).glob("*.jsonl"))
    if not files:
        raise FileNotFoundError(f"no .jsonl scenario files in {directory}")
    return [load_scenario_path(f) for f in files]


def _env_config(cfg: RunConfig) -> EnvConfig:
    w = cfg.reward_weights
    return EnvConfig(dynamics=cfg.dynamics, use_mpc=not cfg.no_mpc,
                     npc_policy=cfg.npc_policy,
                     reward_weights=RewardWeights(offroad=w[0], collision=w[1],
                                                  progress=w[2]))


def _feature_provider(cfg: RunConfig):
    if cfg.il_features == "none" or not cfg.il_features:
        return None
    return RecordedFeatures(cfg.il_features)


def _planner_factory(cfg: RunConfig, env_cfg: EnvConfig, provider):
    name = cfg.sdc_policy
    if name == "expert":
        return lambda sc, rng: ExpertPlanner(sc)
    if name == "stationary":
        return lambda sc, rng: StationaryPlanner(sc)
    if name == "lanefollow":
        return lambda sc, rng: LaneFollowPlanner(sc, env_cfg.idm)
    if name == "lanefollow-open":
        return lambda sc, rng: LaneFollowPlanner(sc, env_cfg.idm, open_loop=True)
    if name == "lanefollow-noisy":
        return lambda sc, rng: JitterPlanner(LaneFollowPlanner(sc, env_cfg.idm),
                                             rng, sigma=cfg.waypoint_noise)
    if not cfg.checkpoint:
        raise ValueError("sdc_policy 'sac' requires --checkpoint")
    agent, _ = load_checkpoint(cfg.checkpoint)
    return lambda sc, rng: SacPlanner(agent, sc, rng, provider, stochastic=False)


# ---------------------------------------------------------------------------
# subcommands

def _run_batch(cfg: RunConfig):
    scenarios = _load_scenarios(cfg.scenario_dir)
    env_cfg = _env_config(cfg)
    provider = _feature_provider(cfg)
    factory = _planner_factory(cfg, env_cfg, provider)
    return batch_simulate(scenarios, factory, env_cfg, seed=cfg.seed,
                          workers=cfg.workers, feature_provider=provider) + (scenarios,)


def _write_results(out_dir: Path, results) -> None:
    with (out_dir / "results.jsonl").open("w") as fp:
        for r in results:
            fp.write(json.dumps({
                "scenario_id": r.scenario_id,
                "terminal": r.terminal,
                "steps": r.steps,
                "final_goal_distance": round(r.final_goal_distance, 6),
                "reward_total": round(r.reward_total, 6),
                "uncomfort_steps": r.uncomfort_steps,
                "error": r.error,
            }, separators=(",", ":")) + "\n")


def _write_episode_logs(out_dir: Path, results) -> None:
    logs = out_dir / "logs"
    logs.mkdir(parents=True, exist_ok=True)
    for r in results:
        with (logs / f"{r.scenario_id}.jsonl").open("w") as fp:
            for rec in r.records:
                fp.write(json.dumps({
                    "step": rec.step,
                    "ego": [round(rec.ego.x, 6), round(rec.ego.y, 6),
                            round(rec.ego.theta, 6), round(rec.ego.v, 6)],
                    "action": [round(rec.action[0], 6), round(rec.action[1], 6)],
                    "reward": round(rec.reward, 6),
                    "agents": [[a[0]] + [round(v, 6) for v in a[1:]]
                               for a in rec.agents],
                }, separators=(",", ":")) + "\n")


def _table(report: MetricsReport) -> str:
    head = f"{'n':>6}  {'Compl.':>7}  {'Col.':>7}  {'Off.':>7}  {'Stu.':>7}"
    row = (f"{report.n:>6}  {report.completed:>7.3f}  {report.collided:>7.3f}"
           f"  {report.offroad:>7.3f}  {report.stuck:>7.3f}")
    return head + "\n" + row


def _cmd_simulate(cfg: RunConfig) -> int:
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report, results, _ = _run_batch(cfg)
    _write_results(out_dir, results)
    _write_episode_logs(out_dir, results)
    _write_manifest(out_dir, "simulate", cfg)
    print(report.row())
    return 0


def _cmd_evaluate(cfg: RunConfig) -> int:
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report, results, _ = _run_batch(cfg)
    _write_results(out_dir, results)
    _write_manifest(out_dir, "evaluate", cfg)
    print(_table(report))
    return 0


def _cmd_gen_benchmark(cfg: RunConfig) -> int:
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    scenarios = _load_scenarios(cfg.scenario_dir)
    costs = ActionCosts(max_cost=cfg.max_cost, nms_radius=cfg.nms_radius)
    summary_rows = []
    total = 0
    for sc in scenarios:
        goal_set = build_goal_set(sc, costs)
        for k, g in enumerate(goal_set.goals):
            variant = dataclasses.replace(
                sc, scenario_id=f"{sc.scenario_id}.g{k:02d}", goal=(g.x, g.y))
            save_scenario_path(variant, out_dir / f"{variant.scenario_id}.jsonl")
            total += 1
        summary_rows.append({
            "scenario_id": sc.scenario_id,
            "goal_distance": round(sc.goal_distance, 6),
            "goals": [[round(g.x, 6), round(g.y, 6), g.cost] for g in goal_set.goals],
        })
    with (out_dir / "goals.jsonl").open("w") as fp:
        for row in summary_rows:
            fp.write(json.dumps(row, separators=(",", ":")) + "\n")
    _write_manifest(out_dir, "gen-benchmark", cfg)
    print(f"wrote {total} goal variants from {len(scenarios)} scenarios")
    return 0


def _cmd_train_rl(cfg: RunConfig) -> int:
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    scenarios = _load_scenarios(cfg.scenario_dir)
    env_cfg = _env_config(cfg)
    provider = _feature_provider(cfg)
    feat_dim = provider.dim if provider is not None else 0
    agent_cfg = SacConfig(obs_dim=SIM_OBS_DIMS + feat_dim)
    agent = SacAgent(agent_cfg, np.random.default_rng(cfg.seed))
    reports, _ = train_offline(scenarios, agent, env_cfg, seed=cfg.seed,
                               epochs=cfg.epochs, workers=cfg.workers,
                               feature_provider=provider)
    save_checkpoint(out_dir / "checkpoint.npz", agent,
                    extra={"epochs": cfg.epochs, "seed": cfg.seed,
                           "feature_dim": feat_dim})
    with (out_dir / "training_log.jsonl").open("w") as fp:
        for epoch, rep in enumerate(reports):
            fp.write(json.dumps({
                "epoch": epoch, "n": rep.n, "completed": rep.completed,
                "collided": rep.collided, "offroad": rep.offroad,
                "stuck": rep.stuck}, separators=(",", ":")) + "\n")
    _write_manifest(out_dir, "train-rl", cfg)
    print(f"trained {cfg.epochs} epoch(s); final: {reports[-1].row()}")
    return 0


def _cmd_render(args: argparse.Namespace) -> int:
    scenario = load_scenario_path(args.scenario)
    log_path = Path(args.episode_log)
    # episode logs are written as <scenario_id>.jsonl; a mismatched stem means
    # the log belongs to a different scenario
    if log_path.stem != scenario.scenario_id:
        raise ValueError(
            f"episode log {log_path.name} does not match scenario "
            f"{scenario.scenario_id!r}")
    steps = [json.loads(line)
             for line in log_path.read_text().splitlines() if line]
    sdc = scenario.sdc_track.state_at(CURRENT_FRAME)
    written = render_episode(scenario, steps, (sdc.length, sdc.width),
                             args.out_dir)
    if not written:
        print("warning: empty episode log, no frames written", file=sys.stderr)
    print(f"wrote {len(written)} frames to {args.out_dir}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing

def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scenario-dir", dest="scenario_dir")
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--config", help="JSON file of RunConfig overrides")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)


def _add_sim_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--sdc-policy", dest="sdc_policy", choices=SDC_POLICIES)
    p.add_argument("--npc-policy", dest="npc_policy", choices=("expert", "idm"))
    p.add_argument("--dynamics", choices=("default", "bicycle"))
    p.add_argument("--no-mpc", dest="no_mpc", action="store_const", const=True,
                   help="skip trajectory tracking; apply plans directly")
    p.add_argument("--reward-weights", dest="reward_weights",
                   help="offroad,collision,progress (default 1,1,10)")
    p.add_argument("--il-features", dest="il_features",
                   help="directory of recorded feature files, or 'none'")
    p.add_argument("--checkpoint", help="actor-critic checkpoint (.npz)")
    p.add_argument("--waypoint-noise", dest="waypoint_noise", type=float,
                   help="sigma (m) for the lanefollow-noisy policy")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="loopsim",
        description="closed-loop driving simulation and benchmark harness")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    for name in ("simulate", "evaluate"):
        p = sub.add_parser(name)
        _add_common(p)
        _add_sim_flags(p)

    p = sub.add_parser("gen-benchmark")
    _add_common(p)
    p.add_argument("--max-cost", dest="max_cost", type=float)
    p.add_argument("--nms-radius", dest="nms_radius", type=float)

    p = sub.add_parser("train-rl")
    _add_common(p)
    _add_sim_flags(p)
    p.add_argument("--epochs", type=int)

    p = sub.add_parser("render")
    p.add_argument("--scenario", required=True, help="scenario .jsonl file")
    p.add_argument("--episode-log", dest="episode_log", required=True,
                   help="step log written by the simulate command")
    p.add_argument("--out-dir", dest="out_dir", required=True)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "render":
            return _cmd_render(args)
        cfg = _merge_config(args)
        handler = {"simulate": _cmd_simulate,
                   "evaluate": _cmd_evaluate,
                   "gen-benchmark": _cmd_gen_benchmark,
                   "train-rl": _cmd_train_rl}[args.command]
        return handler(cfg)
    except Exception as e:  # noqa: BLE001 - single reporting point for the CLI
        print(json.dumps({"error": type(e).__name__, "message": str(e)}),
              file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
