"""Deterministic closed-loop driving simulation with goal-variant benchmark
generation and an offline reinforcement-learning harness."""

from .dynamics import Action, EgoState, VehicleParams, step_bicycle, step_default
from .environment import (
    SIM_OBS_DIMS,
    EnvConfig,
    Environment,
    EpisodeResult,
    SimulationError,
    Transition,
    batch_simulate,
    build_observation,
    rng_for,
    rollout,
)
from .goalgen import ActionCosts, GoalCandidate, GoalSet, build_goal_set, route_to_point
from .metrics import (
    GOAL_RADIUS,
    MetricsReport,
    RewardWeights,
    StepSignals,
    classify_episode,
    step_reward,
)
from .policies import (
    ExpertPlanner,
    IdmParams,
    JitterPlanner,
    LaneFollowPlanner,
    PlannerOutput,
    PolicyError,
    StationaryPlanner,
)
from .controller import MpcConfig, MpcError, MpcResult, mpc_track
from .sac import (
    RecordedFeatures,
    ReplayBuffer,
    SacAgent,
    SacConfig,
    SacPlanner,
    ZeroFeatures,
    fuse_observation,
    load_checkpoint,
    sac_update,
    save_checkpoint,
    train_offline,
)
from .scenario import (
    CURRENT_FRAME,
    DT,
    N_FRAMES,
    TEMPLATES,
    Lane,
    LaneGraph,
    Scenario,
    ScenarioError,
    Track,
    load_scenario,
    load_scenario_path,
    save_scenario,
    save_scenario_path,
    synth_scenario,
    validate_scenario,
)

__version__ = "0.1.0"

__all__ = [
    "Action", "EgoState", "VehicleParams", "step_bicycle", "step_default",
    "SIM_OBS_DIMS", "EnvConfig", "Environment", "EpisodeResult",
    "SimulationError", "Transition", "batch_simulate", "build_observation",
    "rng_for", "rollout",
    "ActionCosts", "GoalCandidate", "GoalSet", "build_goal_set", "route_to_point",
    "GOAL_RADIUS", "MetricsReport", "RewardWeights", "StepSignals",
    "classify_episode", "step_reward",
    "ExpertPlanner", "IdmParams", "JitterPlanner", "LaneFollowPlanner",
    "PlannerOutput", "PolicyError", "StationaryPlanner",
    "MpcConfig", "MpcError", "MpcResult", "mpc_track",
    "RecordedFeatures", "ReplayBuffer", "SacAgent", "SacConfig", "SacPlanner",
    "ZeroFeatures", "fuse_observation", "load_checkpoint", "sac_update",
    "save_checkpoint", "train_offline",
    "CURRENT_FRAME", "DT", "N_FRAMES", "TEMPLATES", "Lane", "LaneGraph", "Scenario",
    "ScenarioError", "Track", "load_scenario", "load_scenario_path",
    "save_scenario", "save_scenario_path", "synth_scenario", "validate_scenario",
    "__version__",
]
