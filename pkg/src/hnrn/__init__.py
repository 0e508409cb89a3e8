"""Hierarchical multi-agent navigation workbench.

A deterministic 2D simulator with laser sensing, a hazard classifier built on
a Gaussian-emission hidden Markov model, a goal-drive controller fused with a
learned collision-avoidance actor, a reciprocal velocity-obstacle baseline,
and an evaluation harness for success / collision / time / length benchmarks.
"""

__version__ = "0.1.0"

from .control import FusionParams, HnrnPolicy, fuse, target_drive
from .ddpg import DdpgConfig, RewardConfig, TrainingRegime, run_training
from .hmm import GaussianHmm, StateRanking, baum_welch, classify, collision_reward, reduce_scan
from .nn import Adam, Mlp, OutputActivation, soft_update
from .orca import OrcaParams, build_constraints, orca_policy_step, solve_velocity
from .sim import (
    Action,
    AgentState,
    AgentStatus,
    LaserScan,
    Pose2D,
    ScenarioMode,
    WorldState,
    cast_laser,
    make_scenario,
    step_world,
)

__all__ = [
    "Action",
    "Adam",
    "AgentState",
    "AgentStatus",
    "DdpgConfig",
    "FusionParams",
    "GaussianHmm",
    "HnrnPolicy",
    "LaserScan",
    "Mlp",
    "OrcaParams",
    "OutputActivation",
    "Pose2D",
    "RewardConfig",
    "ScenarioMode",
    "StateRanking",
    "TrainingRegime",
    "WorldState",
    "baum_welch",
    "build_constraints",
    "cast_laser",
    "classify",
    "collision_reward",
    "fuse",
    "make_scenario",
    "orca_policy_step",
    "reduce_scan",
    "run_training",
    "soft_update",
    "solve_velocity",
    "step_world",
    "target_drive",
]
