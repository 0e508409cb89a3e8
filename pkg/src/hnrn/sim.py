"""Deterministic 2D multi-agent world: differential-drive kinematics, circular
agent collision checks, ray-cast laser sensing, and scenario construction.

Angle convention: yaw is a compass-style bearing in (-pi, pi], measured from
the +y axis toward +x. An agent at yaw moves along (sin(yaw), cos(yaw)), and
the bearing of a displacement (dx, dy) is atan2(dx, dy). Goal-drive control
and laser beam indexing use the same convention, so heading errors are plain
bearing differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

TWO_PI = 2.0 * math.pi


class ContractError(ValueError):
    """An operation was called in violation of its preconditions."""


class ScenarioError(RuntimeError):
    """Scenario construction could not satisfy its placement constraints."""


def wrap_angle(angle: float) -> float:
    """Normalize an angle into (-pi, pi]."""
    w = (angle + math.pi) % TWO_PI - math.pi
    return math.pi if w == -math.pi else w


def heading_vector(yaw: float) -> tuple[float, float]:
    """Unit vector along a bearing: (sin(yaw), cos(yaw))."""
    return math.sin(yaw), math.cos(yaw)


def bearing_to(dx: float, dy: float) -> float:
    """Bearing of the displacement (dx, dy), in (-pi, pi]."""
    return wrap_angle(math.atan2(dx, dy))


@dataclass
class Pose2D:
    x: float
    y: float
    yaw: float  # normalized into (-pi, pi] after every update


@dataclass
class Action:
    """Normalized differential-drive command, both components in [-1, 1]."""

    v_x: float
    v_z: float

    def clamped(self) -> "Action":
        return Action(min(1.0, max(-1.0, self.v_x)), min(1.0, max(-1.0, self.v_z)))


class AgentStatus(Enum):
    ACTIVE = "active"
    REACHED = "reached"
    COLLIDED = "collided"


@dataclass
class AgentState:
    pose: Pose2D
    radius: float
    goal: tuple[float, float]
    last_action: Action = field(default_factory=lambda: Action(0.0, 0.0))
    status: AgentStatus = AgentStatus.ACTIVE
    path_length: float = 0.0

    @property
    def active(self) -> bool:
        return self.status is AgentStatus.ACTIVE

    @property
    def physical(self) -> bool:
        """Whether the agent still occupies space (reached agents de-spawn)."""
        return self.status is not AgentStatus.REACHED

    def goal_distance(self) -> float:
        return math.hypot(self.goal[0] - self.pose.x, self.goal[1] - self.pose.y)

    def velocity(self, speed_scale: float) -> tuple[float, float]:
        """World-frame velocity realized by the last executed action."""
        if not self.active:
            return 0.0, 0.0
        hx, hy = heading_vector(self.pose.yaw)
        v = speed_scale * self.last_action.v_x
        return v * hx, v * hy


@dataclass
class WorldState:
    agents: list[AgentState]
    arena_half_extent: float = 6.0
    dt: float = 0.1
    step_count: int = 0
    rng_seed: int = 0
    goal_tolerance: float = 0.2
    max_turn_rate: float = 1.0  # rad/s at v_z = 1

    @property
    def n_agents(self) -> int:
        return len(self.agents)

    def active_indices(self) -> list[int]:
        return [i for i, a in enumerate(self.agents) if a.active]


@dataclass
class LaserScan:
    ranges: np.ndarray  # shape (N,), each in [0, max_range]
    max_range: float

    @property
    def n_beams(self) -> int:
        return len(self.ranges)

    @property
    def angle_increment(self) -> float:
        return TWO_PI / len(self.ranges)


def step_world(world: WorldState, actions: list[Action], speed_scale: float) -> WorldState:
    """Advance the world by one control period (in place).

    Active agents integrate their action, then pairwise and wall overlaps mark
    collisions, then goal arrivals are checked. Collided agents stay frozen
    where they are; reached agents leave the physical world.
    """
    if len(actions) != len(world.agents):
        raise ContractError(
            f"expected {len(world.agents)} actions, got {len(actions)}"
        )
    dt = world.dt
    half = world.arena_half_extent

    for agent, action in zip(world.agents, actions):
        if not agent.active:
            continue
        hx, hy = heading_vector(agent.pose.yaw)
        step = speed_scale * action.v_x * dt
        dx, dy = step * hx, step * hy
        agent.pose.x = min(half, max(-half, agent.pose.x + dx))
        agent.pose.y = min(half, max(-half, agent.pose.y + dy))
        agent.path_length += math.hypot(dx, dy)
        agent.pose.yaw = wrap_angle(agent.pose.yaw + world.max_turn_rate * action.v_z * dt)
        agent.last_action = action

    # Collisions first: an agent cannot arrive in the same step it overlaps.
    _mark_collisions(world)

    for agent in world.agents:
        if agent.active and agent.goal_distance() <= world.goal_tolerance:
            agent.status = AgentStatus.REACHED

    world.step_count += 1
    return world


def _mark_collisions(world: WorldState) -> None:
    half = world.arena_half_extent
    agents = world.agents
    collided: set[int] = set()
    for i, a in enumerate(agents):
        if not a.physical:
            continue
        if abs(a.pose.x) + a.radius > half or abs(a.pose.y) + a.radius > half:
            collided.add(i)
        for j in range(i + 1, len(agents)):
            b = agents[j]
            if not b.physical:
                continue
            d = math.hypot(a.pose.x - b.pose.x, a.pose.y - b.pose.y)
            if d < a.radius + b.radius:
                collided.add(i)
                collided.add(j)
    for i in collided:
        if agents[i].active:
            agents[i].status = AgentStatus.COLLIDED


def cast_laser(world: WorldState, agent_id: int, n_beams: int, max_range: float) -> LaserScan:
    """Ray-cast a full-circle scan for one agent.

    Beam k points along bearing yaw + k * 2*pi/n_beams; its range is the
    distance to the nearest other physical agent disc or arena wall, clamped
    to max_range.
    """
    if agent_id < 0 or agent_id >= len(world.agents):
        raise KeyError(f"unknown agent id {agent_id}")
    me = world.agents[agent_id]
    ox, oy = me.pose.x, me.pose.y
    bearings = me.pose.yaw + np.arange(n_beams) * (TWO_PI / n_beams)
    dx = np.sin(bearings)
    dy = np.cos(bearings)

    ranges = np.full(n_beams, np.inf)

    # Arena walls: exit time of the ray from the axis-aligned box.
    half = world.arena_half_extent
    with np.errstate(divide="ignore"):
        tx = np.where(dx > 0, (half - ox) / dx, np.where(dx < 0, (-half - ox) / dx, np.inf))
        ty = np.where(dy > 0, (half - oy) / dy, np.where(dy < 0, (-half - oy) / dy, np.inf))
    ranges = np.minimum(ranges, np.minimum(tx, ty))

    # Other agent discs via the ray-circle quadratic.
    for j, other in enumerate(world.agents):
        if j == agent_id or not other.physical:
            continue
        mx, my = other.pose.x - ox, other.pose.y - oy
        dm = dx * mx + dy * my
        disc = dm * dm - (mx * mx + my * my - other.radius**2)
        mask = disc >= 0.0
        if not mask.any():
            continue
        root = np.sqrt(np.where(mask, disc, 0.0))
        t_near = dm - root
        t_far = dm + root
        hit = np.where(mask & (t_far > 0.0), np.maximum(t_near, 0.0), np.inf)
        ranges = np.minimum(ranges, hit)

    return LaserScan(ranges=np.minimum(ranges, max_range), max_range=max_range)


ANTIPODAL_COUNTS = (2, 4, 8, 16)


class ScenarioMode(Enum):
    ANTIPODAL = "antipodal"
    RANDOM = "random"


def default_mode(n_agents: int) -> ScenarioMode:
    """Antipodal placement for the small crossing counts, random otherwise."""
    return ScenarioMode.ANTIPODAL if n_agents in ANTIPODAL_COUNTS else ScenarioMode.RANDOM


def make_scenario(
    n_agents: int,
    mode: ScenarioMode,
    seed: int,
    arena_half_extent: float = 6.0,
    dt: float = 0.1,
    agent_radius: float = 0.1,
    goal_tolerance: float = 0.2,
    max_turn_rate: float = 1.0,
    antipodal_radius: float = 5.0,
    spawn_jitter: float = 0.1,
    min_separation: float = 0.8,
    min_goal_distance: float = 1.0,
    spawn_margin: float = 0.5,
    max_retries: int = 200,
) -> WorldState:
    """Build a reproducible starting world.

    Antipodal mode places agents evenly on a circle (with a small seeded
    position jitter so repeated trials vary) and assigns each agent's goal to
    the diametrically opposite spawn. Random mode rejection-samples spawn and
    goal positions subject to minimum separations. Every agent starts facing
    its goal.
    """
    if n_agents < 1:
        raise ContractError("n_agents must be >= 1")
    rng = np.random.default_rng(seed)
    agents: list[AgentState] = []

    if mode is ScenarioMode.ANTIPODAL:
        if antipodal_radius + spawn_jitter + agent_radius >= arena_half_extent:
            raise ScenarioError("antipodal circle does not fit inside the arena")
        angles = np.arange(n_agents) * (TWO_PI / n_agents)
        jitter = rng.uniform(-spawn_jitter, spawn_jitter, size=(n_agents, 2))
        spawns = np.stack(
            [antipodal_radius * np.cos(angles), antipodal_radius * np.sin(angles)], axis=1
        ) + jitter
        if n_agents % 2 == 0:
            goals = spawns[(np.arange(n_agents) + n_agents // 2) % n_agents]
        else:
            goals = -spawns  # no opposite partner; use the antipode of the spawn
        for k in range(n_agents):
            sx, sy = float(spawns[k, 0]), float(spawns[k, 1])
            gx, gy = float(goals[k, 0]), float(goals[k, 1])
            yaw = bearing_to(gx - sx, gy - sy)
            agents.append(AgentState(Pose2D(sx, sy, yaw), agent_radius, (gx, gy)))
    elif mode is ScenarioMode.RANDOM:
        bound = arena_half_extent - spawn_margin
        if bound <= 0:
            raise ScenarioError("spawn_margin leaves no room to place agents")
        spawns = _sample_separated(rng, n_agents, bound, min_separation, max_retries)
        goals = np.empty_like(spawns)
        for k in range(n_agents):
            placed = False
            for _ in range(max_retries):
                candidate = rng.uniform(-bound, bound, size=2)
                if np.hypot(*(candidate - spawns[k])) < min_goal_distance:
                    continue
                if k > 0 and np.min(np.hypot(*(goals[:k] - candidate).T)) < min_separation:
                    continue
                goals[k] = candidate
                placed = True
                break
            if not placed:
                raise ScenarioError(f"could not place goal {k} after {max_retries} tries")
        for k in range(n_agents):
            sx, sy = float(spawns[k, 0]), float(spawns[k, 1])
            gx, gy = float(goals[k, 0]), float(goals[k, 1])
            yaw = bearing_to(gx - sx, gy - sy)
            agents.append(AgentState(Pose2D(sx, sy, yaw), agent_radius, (gx, gy)))
    else:
        raise ContractError(f"unknown scenario mode {mode!r}")

    return WorldState(
        agents=agents,
        arena_half_extent=arena_half_extent,
        dt=dt,
        rng_seed=seed,
        goal_tolerance=goal_tolerance,
        max_turn_rate=max_turn_rate,
    )


def _sample_separated(
    rng: np.random.Generator, n: int, bound: float, min_separation: float, max_retries: int
) -> np.ndarray:
    points = np.empty((n, 2))
    for k in range(n):
        for _ in range(max_retries):
            candidate = rng.uniform(-bound, bound, size=2)
            if k == 0 or np.min(np.hypot(*(points[:k] - candidate).T)) >= min_separation:
                points[k] = candidate
                break
        else:
            raise ScenarioError(f"could not place agent {k} after {max_retries} tries")
    return points
