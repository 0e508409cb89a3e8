"""Collision-avoidance learner: replay buffer, exploration noise, reward
shaping, deterministic actor-critic updates, and the three training regimes
(avoidance-only, end-to-end hybrid reward, and two-stage curriculum).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .hmm import collision_reward, reduce_scan
from .nn import Adam, Mlp, OutputActivation, soft_update
from .sim import (
    Action,
    AgentStatus,
    ContractError,
    LaserScan,
    ScenarioMode,
    WorldState,
    cast_laser,
    make_scenario,
    step_world,
)

log = logging.getLogger(__name__)


class TrainingRegime(Enum):
    COLLISION_ONLY = "collision-only"
    HYBRID_REWARD = "hybrid"
    TWO_STAGE = "two-stage"


@dataclass
class DdpgConfig:
    actor_lr: float = 1e-4
    critic_lr: float = 1e-5
    batch_size: int = 128
    # The published parameter table lists tau=0.99 and gamma=0.001, which
    # inverts the usual roles; defaults follow convention and both stay
    # configurable so the literal table values remain runnable.
    discount: float = 0.99
    soft_update_mix: float = 0.001
    ou_theta: float = 0.15
    ou_sigma: float = 0.2
    ou_sigma_final: float = 0.05
    max_steps_per_episode: int = 30
    regime: TrainingRegime = TrainingRegime.COLLISION_ONLY
    replay_capacity: int = 100_000
    warmup_transitions: int = 1_000
    train_iters_per_step: int = 2
    # Rewards are stored scaled so critic targets are O(1) at the configured
    # learning rates; the optimal policy is invariant to the positive scale.
    reward_scale: float = 1.0 / 1260.0
    actor_hidden: tuple[int, ...] = (256, 128)
    critic_hidden: tuple[int, ...] = (256, 128)
    two_stage_fraction: float = 0.5


@dataclass
class RewardConfig:
    collision_penalty: float = -1260.0  # worst achievable coverage value
    goal_progress_weight: float = 10.0
    goal_bonus: float = 100.0


@dataclass
class Transition:
    s: np.ndarray
    a: np.ndarray
    r: float
    s_next: np.ndarray
    done: bool


class ReplayBuffer:
    """Fixed-capacity ring of transitions with seeded uniform sampling."""

    def __init__(self, capacity: int, seed: int = 0):
        self.capacity = capacity
        self.rng = np.random.default_rng(seed)
        self.size = 0
        self._cursor = 0
        self._s: np.ndarray | None = None
        self._a: np.ndarray | None = None
        self._r: np.ndarray | None = None
        self._s2: np.ndarray | None = None
        self._done: np.ndarray | None = None

    def add(self, t: Transition) -> None:
        if self._s is None:
            d = len(t.s)
            self._s = np.empty((self.capacity, d))
            self._a = np.empty((self.capacity, len(t.a)))
            self._r = np.empty(self.capacity)
            self._s2 = np.empty((self.capacity, d))
            self._done = np.empty(self.capacity)
        i = self._cursor
        self._s[i] = t.s
        self._a[i] = t.a
        self._r[i] = t.r
        self._s2[i] = t.s_next
        self._done[i] = 1.0 if t.done else 0.0
        self._cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch_size: int) -> tuple[np.ndarray, ...]:
        idx = self.rng.integers(0, self.size, size=batch_size)
        return (
            self._s[idx],
            self._a[idx],
            self._r[idx],
            self._s2[idx],
            self._done[idx],
        )


class OUNoise:
    """Temporally correlated exploration noise, mean-reverting to zero."""

    def __init__(self, dim: int, theta: float, sigma: float, seed: int = 0):
        self.theta = theta
        self.sigma = sigma
        self.rng = np.random.default_rng(seed)
        self.state = np.zeros(dim)

    def sample(self) -> np.ndarray:
        self.state = (
            self.state
            - self.theta * self.state
            + self.sigma * self.rng.standard_normal(len(self.state))
        )
        return self.state.copy()


def compute_reward(scan: LaserScan, collided: bool, cfg: RewardConfig) -> float:
    """Avoidance-only reward: laser coverage deficit plus a collision penalty."""
    return collision_reward(scan) + (cfg.collision_penalty if collided else 0.0)


def compute_hybrid_reward(
    scan: LaserScan,
    collided: bool,
    prev_goal_dist: float,
    goal_dist: float,
    reached: bool,
    cfg: RewardConfig,
) -> float:
    """Avoidance reward plus goal-progress shaping and a terminal arrival bonus."""
    r = compute_reward(scan, collided, cfg)
    r += cfg.goal_progress_weight * (prev_goal_dist - goal_dist)
    if reached:
        r += cfg.goal_bonus
    return r


def select_action(
    actor: Mlp, observation: np.ndarray, noise: OUNoise | None, explore: bool
) -> Action:
    out = actor.forward(observation)
    if explore and noise is not None:
        out = out + noise.sample()
    return Action(float(out[0]), float(out[1])).clamped()


class DdpgLearner:
    """Actor-critic pair with target networks and their optimizers."""

    def __init__(self, obs_dim: int, cfg: DdpgConfig, seed: int = 0):
        self.cfg = cfg
        self.obs_dim = obs_dim
        ss = np.random.SeedSequence(seed)
        actor_seed, critic_seed, buffer_seed = (
            int(c.generate_state(1, np.uint32)[0]) for c in ss.spawn(3)
        )
        self.actor = Mlp(
            [obs_dim, *cfg.actor_hidden, 2],
            OutputActivation.TANH,
            seed=actor_seed,
            final_scale=0.1,
        )
        self.critic = Mlp(
            [obs_dim + 2, *cfg.critic_hidden, 1],
            OutputActivation.IDENTITY,
            seed=critic_seed,
        )
        self.actor_target = self.actor.copy()
        self.critic_target = self.critic.copy()
        self.actor_opt = Adam(cfg.actor_lr)
        self.critic_opt = Adam(cfg.critic_lr)
        self.buffer = ReplayBuffer(cfg.replay_capacity, seed=buffer_seed)

    def train_step(self) -> tuple[float, float] | None:
        """One gradient update of critic and actor from a replay batch.

        Returns (critic loss, actor loss), or None while the buffer is still
        smaller than a batch.
        """
        cfg = self.cfg
        if self.buffer.size < cfg.batch_size:
            return None
        s, a, r, s2, done = self.buffer.sample(cfg.batch_size)
        batch = cfg.batch_size

        a2 = self.actor_target.forward(s2)
        q2 = self.critic_target.forward(np.concatenate([s2, a2], axis=1)).ravel()
        y = r + cfg.discount * (1.0 - done) * q2

        q = self.critic.forward(np.concatenate([s, a], axis=1)).ravel()
        td = q - y
        critic_loss = float(np.mean(td * td))
        w_grads, b_grads, _ = self.critic.backward((2.0 / batch) * td[:, None])
        self.critic_opt.step(self.critic.parameters(), _interleave(w_grads, b_grads))

        a_pi = self.actor.forward(s)
        q_pi = self.critic.forward(np.concatenate([s, a_pi], axis=1))
        actor_loss = float(-np.mean(q_pi))
        _, _, input_grad = self.critic.backward(np.full((batch, 1), -1.0 / batch))
        w_grads, b_grads, _ = self.actor.backward(input_grad[:, self.obs_dim :])
        self.actor_opt.step(self.actor.parameters(), _interleave(w_grads, b_grads))

        soft_update(self.actor_target, self.actor, cfg.soft_update_mix)
        soft_update(self.critic_target, self.critic, cfg.soft_update_mix)

        if not (np.isfinite(critic_loss) and np.isfinite(actor_loss)):
            raise RuntimeError(
                f"training diverged: critic_loss={critic_loss}, actor_loss={actor_loss}"
            )
        return critic_loss, actor_loss


def _interleave(w_grads: list[np.ndarray], b_grads: list[np.ndarray]) -> list[np.ndarray]:
    out: list[np.ndarray] = []
    for w, b in zip(w_grads, b_grads):
        out.append(w)
        out.append(b)
    return out


@dataclass
class EpisodeRecord:
    episode: int
    actor_loss: float
    critic_loss: float
    success_rate: float
    mean_reward: float


@dataclass
class TrainingResult:
    actor: Mlp
    critic: Mlp
    records: list[EpisodeRecord]


@dataclass
class ScenarioSpec:
    """What kind of world each training episode runs in.

    Random placement is the training default: with the short episode cap,
    agents spawned on the antipodal circle never get close enough to interact.
    """

    n_agents: int = 4
    mode: ScenarioMode = ScenarioMode.RANDOM
    arena_half_extent: float = 6.0
    dt: float = 0.1
    agent_radius: float = 0.1
    goal_tolerance: float = 0.2
    speed_scale: float = 1.0
    max_turn_rate: float = 1.0
    antipodal_radius: float = 5.0
    n_beams: int = 360
    max_laser_range: float = 3.5
    obs_dim: int = 36

    def build(self, n_agents: int, mode: ScenarioMode, seed: int) -> WorldState:
        return make_scenario(
            n_agents,
            mode,
            seed,
            arena_half_extent=self.arena_half_extent,
            dt=self.dt,
            agent_radius=self.agent_radius,
            goal_tolerance=self.goal_tolerance,
            max_turn_rate=self.max_turn_rate,
            antipodal_radius=self.antipodal_radius,
        )


def run_training(
    scenario: ScenarioSpec,
    cfg: DdpgConfig,
    reward_cfg: RewardConfig,
    episodes: int,
    seed: int,
) -> TrainingResult:
    """Train the avoidance actor for a number of episodes under one regime.

    collision-only runs multi-agent scenarios on the coverage reward; hybrid
    runs the same scenarios end-to-end on the shaped reward; two-stage runs a
    single-agent empty arena on the shaped reward for the configured fraction
    of episodes before switching to the multi-agent scene.
    """
    ss = np.random.SeedSequence(seed)
    learner_ss, run_ss = ss.spawn(2)
    learner = DdpgLearner(scenario.obs_dim, cfg, seed=int(learner_ss.generate_state(1)[0]))
    records: list[EpisodeRecord] = []
    if episodes <= 0:
        return TrainingResult(learner.actor, learner.critic, records)

    episode_seeds = run_ss.spawn(episodes)
    switch_at = int(round(cfg.two_stage_fraction * episodes))

    for ep in range(episodes):
        ep_ss = episode_seeds[ep]
        world_seed = int(ep_ss.generate_state(1)[0])
        first_stage = cfg.regime is TrainingRegime.TWO_STAGE and ep < switch_at
        if first_stage:
            world = scenario.build(1, ScenarioMode.RANDOM, world_seed)
        else:
            world = scenario.build(scenario.n_agents, scenario.mode, world_seed)

        frac = ep / max(episodes - 1, 1)
        sigma = cfg.ou_sigma + (cfg.ou_sigma_final - cfg.ou_sigma) * frac
        noise_seeds = ep_ss.spawn(world.n_agents)
        noises = [
            OUNoise(2, cfg.ou_theta, sigma, seed=int(s.generate_state(1)[0]))
            for s in noise_seeds
        ]

        record = _run_training_episode(world, scenario, cfg, reward_cfg, learner, noises, first_stage)
        records.append(
            EpisodeRecord(
                episode=ep,
                actor_loss=record[0],
                critic_loss=record[1],
                success_rate=record[2],
                mean_reward=record[3],
            )
        )
    return TrainingResult(learner.actor, learner.critic, records)


def _run_training_episode(
    world: WorldState,
    scenario: ScenarioSpec,
    cfg: DdpgConfig,
    reward_cfg: RewardConfig,
    learner: DdpgLearner,
    noises: list[OUNoise],
    hybrid_stage: bool,
) -> tuple[float, float, float, float]:
    use_hybrid = hybrid_stage or cfg.regime in (
        TrainingRegime.HYBRID_REWARD,
        TrainingRegime.TWO_STAGE,
    )
    observations = [
        reduce_scan(
            cast_laser(world, i, scenario.n_beams, scenario.max_laser_range),
            scenario.obs_dim,
        )
        for i in range(world.n_agents)
    ]
    goal_dists = [a.goal_distance() for a in world.agents]

    rewards: list[float] = []
    actor_losses: list[float] = []
    critic_losses: list[float] = []

    for _ in range(cfg.max_steps_per_episode):
        active_before = [a.active for a in world.agents]
        if not any(active_before):
            break
        actions = [
            select_action(learner.actor, observations[i], noises[i], explore=True)
            if active_before[i]
            else Action(0.0, 0.0)
            for i in range(world.n_agents)
        ]
        step_world(world, actions, scenario.speed_scale)

        for i, agent in enumerate(world.agents):
            if not active_before[i]:
                continue
            scan = cast_laser(world, i, scenario.n_beams, scenario.max_laser_range)
            obs_next = reduce_scan(scan, scenario.obs_dim)
            collided = agent.status is AgentStatus.COLLIDED
            reached = agent.status is AgentStatus.REACHED
            dist = agent.goal_distance()
            if use_hybrid:
                r = compute_hybrid_reward(
                    scan, collided, goal_dists[i], dist, reached, reward_cfg
                )
            else:
                r = compute_reward(scan, collided, reward_cfg)
            rewards.append(r)
            learner.buffer.add(
                Transition(
                    s=observations[i],
                    a=np.array([actions[i].v_x, actions[i].v_z]),
                    r=r * cfg.reward_scale,
                    s_next=obs_next,
                    done=collided or reached,
                )
            )
            observations[i] = obs_next
            goal_dists[i] = dist

        if learner.buffer.size >= cfg.warmup_transitions:
            for _ in range(cfg.train_iters_per_step):
                losses = learner.train_step()
                if losses is not None:
                    critic_losses.append(losses[0])
                    actor_losses.append(losses[1])

    n_reached = sum(a.status is AgentStatus.REACHED for a in world.agents)
    return (
        float(np.mean(actor_losses)) if actor_losses else float("nan"),
        float(np.mean(critic_losses)) if critic_losses else float("nan"),
        n_reached / world.n_agents,
        float(np.mean(rewards)) if rewards else 0.0,
    )
