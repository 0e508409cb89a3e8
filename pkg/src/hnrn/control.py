"""Analytic goal-drive control, hazard-weighted action fusion, and the
assembled hierarchical policy (hazard classifier gating avoidance on top of
the goal drive).
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .hmm import GaussianHmm, StateRanking, classify, reduce_scan
from .nn import Mlp
from .sim import Action, ContractError, LaserScan, Pose2D, wrap_angle

REAR_EPSILON = 1e-6


@dataclass
class FusionParams:
    weight_target: float = 1.0  # lambda_1
    weight_avoid: float = 0.4  # lambda_2


def target_drive(pose: Pose2D, goal: tuple[float, float], rear_tiebreak: bool = True) -> Action:
    """Drive command toward a goal point.

    The heading error is the goal bearing atan2(dx, dy) minus the agent yaw;
    forward speed is its cosine and turn rate its sine, so a dead-ahead goal
    gives full speed and a lateral goal a pure turn. A goal exactly behind
    leaves the turn command at zero (an unstable equilibrium); the default
    tie-break forces a full turn there.
    """
    dx = goal[0] - pose.x
    dy = goal[1] - pose.y
    if dx == 0.0 and dy == 0.0:
        return Action(0.0, 0.0)
    desired = wrap_angle(math.atan2(dx, dy) - pose.yaw)
    v_z = math.sin(desired)
    if rear_tiebreak and abs(desired) > math.pi - REAR_EPSILON:
        v_z = 1.0
    return Action(math.cos(desired), v_z)


def fuse(v_target: Action, v_collision: Action, hazard: float, params: FusionParams) -> Action:
    """Weighted blend of the goal-drive and avoidance commands.

    Componentwise weight_target * v_target + weight_avoid * hazard *
    v_collision, clamped back into the valid command range.
    """
    if not 0.0 <= hazard <= 1.0:
        raise ContractError(f"hazard {hazard} outside [0, 1]")
    vx = params.weight_target * v_target.v_x + params.weight_avoid * hazard * v_collision.v_x
    vz = params.weight_target * v_target.v_z + params.weight_avoid * hazard * v_collision.v_z
    return Action(vx, vz).clamped()


@dataclass
class HnrnPolicy:
    """Per-agent hierarchical policy instance.

    Holds a sliding window of recent reduced scans for the hazard classifier;
    the underlying model and actor are shared read-only across agents.
    """

    hmm: GaussianHmm
    ranking: StateRanking
    actor: Mlp
    fusion: FusionParams = field(default_factory=FusionParams)
    window: int = 8
    _frames: deque = field(default_factory=deque, repr=False)

    def reset(self) -> None:
        self._frames.clear()

    def act(
        self, scan: LaserScan, pose: Pose2D, goal: tuple[float, float]
    ) -> tuple[Action, int, float]:
        """Fused command for the current scan, with (state, hazard) diagnostics."""
        obs = reduce_scan(scan, self.hmm.obs_dim)
        self._frames.append(obs)
        while len(self._frames) > self.window:
            self._frames.popleft()
        state, hazard = classify(self.hmm, self.ranking, np.array(self._frames))
        v_target = target_drive(pose, goal)
        out = self.actor.forward(obs)
        v_collision = Action(float(out[0]), float(out[1])).clamped()
        return fuse(v_target, v_collision, hazard, self.fusion), state, hazard
