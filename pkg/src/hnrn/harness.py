"""Experiment protocol: run episodes under any policy, aggregate the
benchmark metrics, and collect hazard-model training data.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .config import EvalConfig, HmmConfig, RunConfig, WorldConfig
from .control import FusionParams, HnrnPolicy, target_drive
from .ddpg import select_action
from .hmm import GaussianHmm, ObservationSeq, StateRanking, collision_reward, reduce_scan
from .nn import Mlp
from .orca import OrcaParams, orca_policy_step, velocity_to_action
from .sim import (
    Action,
    AgentStatus,
    ContractError,
    ScenarioMode,
    WorldState,
    cast_laser,
    default_mode,
    make_scenario,
    step_world,
)

TRAJECTORY_HEADER = (
    "episode",
    "step",
    "agent_id",
    "x",
    "y",
    "yaw",
    "v_x",
    "v_z",
    "status",
    "state",
    "hazard",
)


@dataclass
class EpisodeMetrics:
    success: bool
    collision_count: int
    time_spent: float | None
    trajectory_length: float | None
    outcomes: list[str]
    steps: int

    @property
    def collision_rate(self) -> float:
        return self.collision_count / max(len(self.outcomes), 1)


@dataclass
class CellStats:
    """Mean/std of every metric for one (policy, agent count) cell."""

    success_mean: float
    success_std: float
    collision_mean: float
    collision_std: float
    time_mean: float | None
    time_std: float | None
    length_mean: float | None
    length_std: float | None


@dataclass
class AggregateReport:
    agent_counts: tuple[int, ...]
    policies: tuple[str, ...]
    cells: dict[tuple[str, int], CellStats]
    episodes: dict[tuple[str, int], list[EpisodeMetrics]] = field(default_factory=dict)


class TargetOnlyPolicy:
    """Goal drive alone; no sensing, no avoidance."""

    name = "target"

    def __init__(self, world_cfg: WorldConfig):
        self.world_cfg = world_cfg

    def reset(self, world: WorldState) -> None:
        pass

    def act(self, world: WorldState):
        actions = []
        for agent in world.agents:
            if agent.active:
                actions.append(target_drive(agent.pose, agent.goal))
            else:
                actions.append(Action(0.0, 0.0))
        return actions, [None] * world.n_agents


class OrcaPolicy:
    name = "orca"

    def __init__(self, params: OrcaParams, world_cfg: WorldConfig):
        self.params = params
        self.world_cfg = world_cfg

    def reset(self, world: WorldState) -> None:
        pass

    def act(self, world: WorldState):
        velocities = orca_policy_step(world, self.params, self.world_cfg.speed_scale)
        actions = []
        for agent, vel in zip(world.agents, velocities):
            if vel is None:
                actions.append(Action(0.0, 0.0))
            else:
                actions.append(
                    velocity_to_action(vel, agent.pose.yaw, self.world_cfg.speed_scale)
                )
        return actions, [None] * world.n_agents


class RawDdpgPolicy:
    """The avoidance actor executed directly, without fusion or gating."""

    name = "ddpg"

    def __init__(self, actor: Mlp, world_cfg: WorldConfig, obs_dim: int):
        self.actor = actor
        self.world_cfg = world_cfg
        self.obs_dim = obs_dim

    def reset(self, world: WorldState) -> None:
        pass

    def act(self, world: WorldState):
        actions = []
        for i, agent in enumerate(world.agents):
            if agent.active:
                scan = cast_laser(
                    world, i, self.world_cfg.n_beams, self.world_cfg.max_laser_range
                )
                obs = reduce_scan(scan, self.obs_dim)
                actions.append(select_action(self.actor, obs, None, explore=False))
            else:
                actions.append(Action(0.0, 0.0))
        return actions, [None] * world.n_agents


class HnrnSystemPolicy:
    """Hazard-gated fusion of goal drive and the learned avoidance actor."""

    name = "hnrn"

    def __init__(
        self,
        hmm: GaussianHmm,
        ranking: StateRanking,
        actor: Mlp,
        fusion: FusionParams,
        world_cfg: WorldConfig,
        window: int = 8,
    ):
        self.hmm = hmm
        self.ranking = ranking
        self.actor = actor
        self.fusion = fusion
        self.world_cfg = world_cfg
        self.window = window
        self._agents: list[HnrnPolicy] = []

    def reset(self, world: WorldState) -> None:
        self._agents = [
            HnrnPolicy(self.hmm, self.ranking, self.actor, self.fusion, self.window)
            for _ in range(world.n_agents)
        ]

    def act(self, world: WorldState):
        actions: list[Action] = []
        diags: list[tuple[int, float] | None] = []
        for i, agent in enumerate(world.agents):
            if agent.active:
                scan = cast_laser(
                    world, i, self.world_cfg.n_beams, self.world_cfg.max_laser_range
                )
                action, state, hazard = self._agents[i].act(scan, agent.pose, agent.goal)
                actions.append(action)
                diags.append((state, hazard))
            else:
                actions.append(Action(0.0, 0.0))
                diags.append(None)
        return actions, diags


def run_episode(
    world: WorldState,
    policy,
    horizon: int,
    speed_scale: float = 1.0,
    log_writer=None,
    episode_index: int = 0,
) -> EpisodeMetrics:
    """Step the world under a policy until every agent is done or the horizon
    expires. Time and trajectory length are captured at the moment the last
    agent reaches its goal, and stay absent when the episode fails."""
    if horizon <= 0:
        raise ContractError("horizon must be positive")
    policy.reset(world)
    time_spent: float | None = None
    trajectory_length: float | None = None

    for _ in range(horizon):
        if not any(a.active for a in world.agents):
            break
        actions, diags = policy.act(world)
        step_world(world, actions, speed_scale)
        if log_writer is not None:
            for i, agent in enumerate(world.agents):
                diag = diags[i]
                log_writer.writerow(
                    (
                        episode_index,
                        world.step_count - 1,
                        i,
                        f"{agent.pose.x:.6f}",
                        f"{agent.pose.y:.6f}",
                        f"{agent.pose.yaw:.6f}",
                        f"{actions[i].v_x:.6f}",
                        f"{actions[i].v_z:.6f}",
                        agent.status.value,
                        "" if diag is None else diag[0],
                        "" if diag is None else f"{diag[1]:.6f}",
                    )
                )
        if all(a.status is AgentStatus.REACHED for a in world.agents):
            time_spent = world.step_count * world.dt
            trajectory_length = float(sum(a.path_length for a in world.agents))
            break

    outcomes = [a.status.value for a in world.agents]
    collisions = sum(a.status is AgentStatus.COLLIDED for a in world.agents)
    success = all(a.status is AgentStatus.REACHED for a in world.agents)
    return EpisodeMetrics(
        success=success,
        collision_count=collisions,
        time_spent=time_spent if success else None,
        trajectory_length=trajectory_length if success else None,
        outcomes=outcomes,
        steps=world.step_count,
    )


def trial_seed(base_seed: int, agent_count: int, trial: int) -> int:
    """Stable scenario seed shared by every policy for a (count, trial) pair."""
    return base_seed * 1_000_000 + agent_count * 1_000 + trial


def evaluate(
    policies: dict[str, object],
    world_cfg: WorldConfig,
    agent_counts: tuple[int, ...],
    trials: int,
    base_seed: int,
    horizon: int,
    log_writer=None,
) -> AggregateReport:
    """Run trials x agent_counts x policies episodes and aggregate mean/std
    per cell. Scenario seeds are paired across policies."""
    if trials < 1:
        raise ContractError("trials must be >= 1")
    cells: dict[tuple[str, int], CellStats] = {}
    episodes: dict[tuple[str, int], list[EpisodeMetrics]] = {}
    episode_counter = 0
    for name, policy in policies.items():
        for count in agent_counts:
            runs: list[EpisodeMetrics] = []
            for trial in range(trials):
                world = build_world(world_cfg, count, trial_seed(base_seed, count, trial))
                metrics = run_episode(
                    world,
                    policy,
                    horizon,
                    world_cfg.speed_scale,
                    log_writer=log_writer,
                    episode_index=episode_counter,
                )
                runs.append(metrics)
                episode_counter += 1
            episodes[(name, count)] = runs
            cells[(name, count)] = _aggregate(runs)
    return AggregateReport(
        agent_counts=tuple(agent_counts),
        policies=tuple(policies.keys()),
        cells=cells,
        episodes=episodes,
    )


def build_world(world_cfg: WorldConfig, n_agents: int, seed: int, mode: ScenarioMode | None = None) -> WorldState:
    return make_scenario(
        n_agents,
        mode or default_mode(n_agents),
        seed,
        arena_half_extent=world_cfg.arena_half_extent,
        dt=world_cfg.dt,
        agent_radius=world_cfg.agent_radius,
        goal_tolerance=world_cfg.goal_tolerance,
        max_turn_rate=world_cfg.max_turn_rate,
        antipodal_radius=world_cfg.antipodal_radius,
        spawn_jitter=world_cfg.spawn_jitter,
        min_separation=world_cfg.min_separation,
        min_goal_distance=world_cfg.min_goal_distance,
        spawn_margin=world_cfg.spawn_margin,
    )


def _aggregate(runs: list[EpisodeMetrics]) -> CellStats:
    success = np.array([1.0 if r.success else 0.0 for r in runs])
    collision = np.array([r.collision_rate for r in runs])
    times = np.array([r.time_spent for r in runs if r.time_spent is not None])
    lengths = np.array([r.trajectory_length for r in runs if r.trajectory_length is not None])
    return CellStats(
        success_mean=float(success.mean()),
        success_std=float(success.std()),
        collision_mean=float(collision.mean()),
        collision_std=float(collision.std()),
        time_mean=float(times.mean()) if len(times) else None,
        time_std=float(times.std()) if len(times) else None,
        length_mean=float(lengths.mean()) if len(lengths) else None,
        length_std=float(lengths.std()) if len(lengths) else None,
    )


_METRIC_FIELDS = (
    ("success_rate", "success_mean", "success_std"),
    ("collision_rate", "collision_mean", "collision_std"),
    ("time_spent", "time_mean", "time_std"),
    ("trajectory_length", "length_mean", "length_std"),
)


def write_report(path: str, report: AggregateReport) -> None:
    """Delimiter-separated table: one row per (metric, policy), one
    (mean, std) column pair per agent count."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        header = ["metric", "policy"]
        for count in report.agent_counts:
            header += [f"mean_{count}", f"std_{count}"]
        writer.writerow(header)
        for metric, mean_attr, std_attr in _METRIC_FIELDS:
            for policy in report.policies:
                row: list[str] = [metric, policy]
                for count in report.agent_counts:
                    cell = report.cells[(policy, count)]
                    mean = getattr(cell, mean_attr)
                    std = getattr(cell, std_attr)
                    row.append("" if mean is None else f"{mean:.6f}")
                    row.append("" if std is None else f"{std:.6f}")
                writer.writerow(row)


def collect_hmm_data(
    world_cfg: WorldConfig,
    orca_params: OrcaParams,
    hmm_cfg: HmmConfig,
    episodes: int,
    seed: int,
    agent_counts: tuple[int, ...] = (2, 4, 8, 16, 20, 32),
    horizon: int = 300,
    orca_fraction: float = 0.7,
    mode: ScenarioMode | None = None,
) -> list[ObservationSeq]:
    """Record reduced scans and per-frame proximity rewards for every agent
    across a mix of avoidance-driven and uniform-random episodes.

    The two behaviors cover the hazard spectrum: the avoidance baseline keeps
    clearances (low hazard) while random walks blunder into close quarters.
    """
    if episodes < 1:
        raise ContractError("need at least one episode to collect data")
    if not 0.0 <= orca_fraction <= 1.0:
        raise ContractError("orca_fraction must lie in [0, 1]")
    sequences: list[ObservationSeq] = []
    orca_policy = OrcaPolicy(orca_params, world_cfg)
    rng = np.random.default_rng(seed)
    acc = 0.0
    for ep in range(episodes):
        count = agent_counts[ep % len(agent_counts)]
        world = build_world(world_cfg, count, trial_seed(seed, count, ep), mode=mode)
        acc += orca_fraction
        use_orca = acc >= 1.0
        if use_orca:
            acc -= 1.0

        frames: list[list[np.ndarray]] = [[] for _ in range(count)]
        rewards: list[list[float]] = [[] for _ in range(count)]
        for _ in range(horizon):
            if not any(a.active for a in world.agents):
                break
            for i, agent in enumerate(world.agents):
                if not agent.active:
                    continue
                scan = cast_laser(world, i, world_cfg.n_beams, world_cfg.max_laser_range)
                frames[i].append(reduce_scan(scan, hmm_cfg.obs_dim))
                rewards[i].append(collision_reward(scan))
            if use_orca:
                actions, _ = orca_policy.act(world)
            else:
                draws = rng.uniform(-1.0, 1.0, size=(count, 2))
                actions = [
                    Action(float(draws[i, 0]), float(draws[i, 1]))
                    if world.agents[i].active
                    else Action(0.0, 0.0)
                    for i in range(count)
                ]
            step_world(world, actions, world_cfg.speed_scale)

        for i in range(count):
            if frames[i]:
                sequences.append(
                    ObservationSeq(
                        frames=np.array(frames[i]),
                        episode=ep,
                        rewards=np.array(rewards[i]),
                    )
                )
    return sequences


def save_dataset(path: str, sequences: list[ObservationSeq]) -> None:
    lengths = np.array([s.frames.shape[0] for s in sequences], dtype=np.int64)
    np.savez(
        path,
        frames=np.concatenate([s.frames for s in sequences]),
        rewards=np.concatenate(
            [s.rewards if s.rewards is not None else np.zeros(len(s.frames)) for s in sequences]
        ),
        lengths=lengths,
        episodes=np.array([s.episode for s in sequences], dtype=np.int64),
    )


def load_dataset(path: str) -> list[ObservationSeq]:
    data = np.load(path)
    frames, rewards = data["frames"], data["rewards"]
    lengths, episode_ids = data["lengths"], data["episodes"]
    sequences = []
    offset = 0
    for length, ep in zip(lengths, episode_ids):
        sequences.append(
            ObservationSeq(
                frames=frames[offset : offset + length],
                episode=int(ep),
                rewards=rewards[offset : offset + length],
            )
        )
        offset += length
    return sequences
