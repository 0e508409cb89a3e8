"""Decentralized reciprocal collision avoidance.

Each agent builds one half-plane velocity constraint per nearby neighbor from
the truncated velocity-obstacle cone (sharing avoidance responsibility
equally), then picks the feasible velocity nearest its goal-directed
preference with a small incremental linear program. When the constraints
admit no velocity at all, the fallback returns the velocity minimizing the
worst constraint violation.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .sim import Action, WorldState, bearing_to, wrap_angle

log = logging.getLogger(__name__)


@dataclass
class OrcaParams:
    max_speed: float = 1.0
    max_neighbors: int = 10
    neighbor_dist: float = 2.0
    protect_radius: float = 0.4
    body_radius: float = 0.1
    time_horizon: float = 0.1
    # Constant clockwise rotation of every preferred velocity. A shared
    # turning convention keeps symmetric crossings from freezing into the
    # mutual-blockade equilibrium, where the solver returns ~0 for everyone.
    pref_bias: float = 0.1


@dataclass
class OrcaAgentView:
    position: np.ndarray  # (2,)
    velocity: np.ndarray  # (2,)
    radius: float


@dataclass
class HalfPlane:
    """Permitted velocities satisfy (v - point) . normal >= 0."""

    point: np.ndarray
    normal: np.ndarray  # unit length


def _det(a: np.ndarray, b: np.ndarray) -> float:
    return float(a[0] * b[1] - a[1] * b[0])


def preferred_velocity(
    view: OrcaAgentView, goal: tuple[float, float], params: OrcaParams, dt: float
) -> np.ndarray:
    """Goal-directed velocity, saturated at max speed and tapered on arrival,
    rotated clockwise by the configured symmetry-breaking bias."""
    to_goal = np.array([goal[0], goal[1]]) - view.position
    dist = float(np.hypot(*to_goal))
    if dist == 0.0:
        return np.zeros(2)
    vel = to_goal * (min(params.max_speed, dist / dt) / dist)
    if params.pref_bias != 0.0:
        c, s = math.cos(-params.pref_bias), math.sin(-params.pref_bias)
        vel = np.array([c * vel[0] - s * vel[1], s * vel[0] + c * vel[1]])
    return vel


def build_constraints(
    self_view: OrcaAgentView,
    neighbors: list[OrcaAgentView],
    params: OrcaParams,
    dt: float,
) -> list[HalfPlane]:
    """One half-plane per neighbor from the truncated velocity-obstacle cone.

    The combined radius is this agent's protect radius plus the neighbor's
    body radius. Agents already inside the combined radius get an escape
    constraint over one simulation timestep instead of the horizon cone.
    """
    planes: list[HalfPlane] = []
    for nb in neighbors:
        rel_pos = nb.position - self_view.position
        rel_vel = self_view.velocity - nb.velocity
        combined = params.protect_radius + nb.radius
        dist_sq = float(rel_pos @ rel_pos)

        if dist_sq == 0.0:
            # Coincident centers leave no geometry to work with; push +x.
            log.warning("coincident agent positions; escaping along +x")
            unit_w = np.array([1.0, 0.0])
            u = (combined / dt) * unit_w
            planes.append(HalfPlane(self_view.velocity + 0.5 * u, unit_w))
            continue

        if dist_sq > combined * combined:
            inv_horizon = 1.0 / params.time_horizon
            w = rel_vel - inv_horizon * rel_pos
            w_len_sq = float(w @ w)
            dot1 = float(w @ rel_pos)
            if dot1 < 0.0 and dot1 * dot1 > combined * combined * w_len_sq:
                # Nearest exclusion boundary is the cutoff disc of the cone.
                w_len = math.sqrt(w_len_sq)
                unit_w = w / w_len
                u = (combined * inv_horizon - w_len) * unit_w
                normal = unit_w
            else:
                # Nearest boundary is one of the cone legs.
                leg = math.sqrt(dist_sq - combined * combined)
                if _det(rel_pos, w) > 0.0:
                    direction = (
                        np.array(
                            [
                                rel_pos[0] * leg - rel_pos[1] * combined,
                                rel_pos[0] * combined + rel_pos[1] * leg,
                            ]
                        )
                        / dist_sq
                    )
                else:
                    direction = (
                        -np.array(
                            [
                                rel_pos[0] * leg + rel_pos[1] * combined,
                                -rel_pos[0] * combined + rel_pos[1] * leg,
                            ]
                        )
                        / dist_sq
                    )
                u = float(rel_vel @ direction) * direction - rel_vel
                normal = np.array([-direction[1], direction[0]])
        else:
            # Already overlapping: separate within one control period.
            inv_dt = 1.0 / dt
            w = rel_vel - inv_dt * rel_pos
            w_len = float(np.hypot(*w))
            if w_len == 0.0:
                unit_w = -rel_pos / math.sqrt(dist_sq)
            else:
                unit_w = w / w_len
            u = (combined * inv_dt - w_len) * unit_w
            normal = unit_w

        planes.append(HalfPlane(self_view.velocity + 0.5 * u, normal))
    return planes


def _clip_to_disc(v: np.ndarray, radius: float) -> np.ndarray:
    speed = float(np.hypot(*v))
    if speed > radius:
        return v * (radius / speed)
    return v


def _solve_on_boundary(
    planes: list[HalfPlane], index: int, pref: np.ndarray, radius: float
) -> np.ndarray | None:
    """Point on the boundary line of planes[index], inside the disc and the
    earlier half-planes, nearest to pref. None if that set is empty."""
    hp = planes[index]
    direction = np.array([hp.normal[1], -hp.normal[0]])
    along = float(hp.point @ direction)
    disc = along * along - float(hp.point @ hp.point) + radius * radius
    if disc < 0.0:
        return None
    root = math.sqrt(disc)
    t_left = -along - root
    t_right = -along + root

    for j in range(index):
        prev = planes[j]
        denom = float(direction @ prev.normal)
        rhs = float((prev.point - hp.point) @ prev.normal)
        if abs(denom) <= 1e-12:
            if rhs > 0.0:
                return None  # parallel and the whole line is excluded
            continue
        t = rhs / denom
        if denom > 0.0:
            t_left = max(t_left, t)
        else:
            t_right = min(t_right, t)
        if t_left > t_right:
            return None

    t_star = float((pref - hp.point) @ direction)
    t_star = min(t_right, max(t_left, t_star))
    return hp.point + t_star * direction


def _solve_feasible(
    planes: list[HalfPlane], pref: np.ndarray, radius: float
) -> tuple[np.ndarray, int | None]:
    """Incremental nearest-point LP. Returns (velocity, None) when all
    constraints hold, else (best velocity so far, index of the first
    unsatisfiable constraint)."""
    v = _clip_to_disc(pref, radius)
    for i, hp in enumerate(planes):
        if float((v - hp.point) @ hp.normal) < 0.0:
            res = _solve_on_boundary(planes, i, pref, radius)
            if res is None:
                return v, i
            v = res
    return v, None


def solve_velocity(
    planes: list[HalfPlane], pref: np.ndarray, params: OrcaParams
) -> np.ndarray:
    """Feasible velocity nearest the preferred one, or the min-max-violation
    velocity when the half-planes and speed disc have empty intersection."""
    radius = params.max_speed
    v, failed_at = _solve_feasible(planes, pref, radius)
    if failed_at is None:
        return v

    # Infeasible: relax all constraints outward by t until the intersection
    # first becomes non-empty; bisection converges to the min-max violation.
    t_high = max(float(hp.point @ hp.normal) for hp in planes)
    t_high = max(t_high, 1e-9)
    t_low = 0.0
    for _ in range(80):
        t_mid = 0.5 * (t_low + t_high)
        shifted = [HalfPlane(hp.point - t_mid * hp.normal, hp.normal) for hp in planes]
        _, fail = _solve_feasible(shifted, pref, radius)
        if fail is None:
            t_high = t_mid
        else:
            t_low = t_mid
    shifted = [HalfPlane(hp.point - t_high * hp.normal, hp.normal) for hp in planes]
    v, fail = _solve_feasible(shifted, pref, radius)
    if fail is not None:  # numerical edge; relax a touch further
        shifted = [
            HalfPlane(hp.point - (t_high + 1e-9) * hp.normal, hp.normal) for hp in planes
        ]
        v, _ = _solve_feasible(shifted, pref, radius)
    return v


def velocity_to_action(velocity: np.ndarray, yaw: float, speed_scale: float = 1.0) -> Action:
    """Project a desired world velocity onto the differential-drive command:
    forward speed from the heading-aligned component, turn rate from the
    bearing error (same mapping as the goal-drive controller)."""
    speed = float(np.hypot(*velocity))
    if speed < 1e-12:
        return Action(0.0, 0.0)
    err = wrap_angle(bearing_to(float(velocity[0]), float(velocity[1])) - yaw)
    return Action((speed / speed_scale) * math.cos(err), math.sin(err)).clamped()


def orca_policy_step(
    world: WorldState, params: OrcaParams, speed_scale: float = 1.0
) -> list[np.ndarray | None]:
    """Velocities for all agents against one frozen snapshot (None for agents
    no longer active)."""
    positions = [np.array([a.pose.x, a.pose.y]) for a in world.agents]
    velocities = [np.array(a.velocity(speed_scale)) for a in world.agents]
    results: list[np.ndarray | None] = [None] * world.n_agents

    for i, agent in enumerate(world.agents):
        if not agent.active:
            continue
        candidates = []
        for j, other in enumerate(world.agents):
            if j == i or not other.physical:
                continue
            d = float(np.hypot(*(positions[j] - positions[i])))
            if d <= params.neighbor_dist:
                candidates.append((d, j))
        candidates.sort()
        neighbors = [
            OrcaAgentView(positions[j], velocities[j], world.agents[j].radius)
            for _, j in candidates[: params.max_neighbors]
        ]
        self_view = OrcaAgentView(positions[i], velocities[i], agent.radius)
        pref = preferred_velocity(self_view, agent.goal, params, world.dt)
        planes = build_constraints(self_view, neighbors, params, world.dt)
        results[i] = solve_velocity(planes, pref, params)
    return results
