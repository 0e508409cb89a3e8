"""Run configuration: dataclasses for every subsystem plus a flat key-value
config file loader (INI sections named after the subsystems, keys named after
the published parameter table where one exists).
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field, fields

from .control import FusionParams
from .ddpg import DdpgConfig, RewardConfig, TrainingRegime
from .orca import OrcaParams
from .sim import ScenarioMode


class ConfigError(ValueError):
    pass


@dataclass
class WorldConfig:
    arena_half_extent: float = 6.0
    dt: float = 0.1
    n_beams: int = 360
    max_laser_range: float = 3.5
    agent_radius: float = 0.1
    goal_tolerance: float = 0.2
    speed_scale: float = 1.0
    max_turn_rate: float = 1.0
    antipodal_radius: float = 5.0
    spawn_jitter: float = 0.1
    min_separation: float = 0.8
    min_goal_distance: float = 1.0
    spawn_margin: float = 0.5


@dataclass
class HmmConfig:
    n_states: int = 10
    obs_dim: int = 36
    em_iterations: int = 50
    em_tolerance: float = 1e-4
    variance_floor: float = 1e-4
    window: int = 8


@dataclass
class TrainRunConfig:
    episodes: int = 300
    n_agents: int = 4
    mode: ScenarioMode = ScenarioMode.RANDOM


@dataclass
class EvalConfig:
    agent_counts: tuple[int, ...] = (2, 4, 8, 16, 20, 32)
    trials: int = 30
    horizon: int = 600
    seed: int = 1
    orca_fraction: float = 0.7
    random_fraction: float = 0.3
    collect_episodes: int = 24
    collect_horizon: int = 300
    output_dir: str = "out"


@dataclass
class RunConfig:
    world: WorldConfig = field(default_factory=WorldConfig)
    hmm: HmmConfig = field(default_factory=HmmConfig)
    ddpg: DdpgConfig = field(default_factory=DdpgConfig)
    reward: RewardConfig = field(default_factory=RewardConfig)
    fusion: FusionParams = field(default_factory=FusionParams)
    orca: OrcaParams = field(default_factory=OrcaParams)
    train: TrainRunConfig = field(default_factory=TrainRunConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)


# (section, key) -> (sub-config attribute, field name). Published table
# parameters keep their table names; everything else is snake_case.
_KEY_MAP: dict[tuple[str, str], tuple[str, str]] = {
    ("sim", "Delay of control"): ("world", "dt"),
    ("sim", "Max laser range"): ("world", "max_laser_range"),
    ("sim", "beam_count"): ("world", "n_beams"),
    ("sim", "arena_half_extent"): ("world", "arena_half_extent"),
    ("sim", "agent_radius"): ("world", "agent_radius"),
    ("sim", "goal_tolerance"): ("world", "goal_tolerance"),
    ("sim", "speed_scale"): ("world", "speed_scale"),
    ("sim", "max_turn_rate"): ("world", "max_turn_rate"),
    ("sim", "antipodal_radius"): ("world", "antipodal_radius"),
    ("sim", "spawn_jitter"): ("world", "spawn_jitter"),
    ("sim", "min_separation"): ("world", "min_separation"),
    ("sim", "min_goal_distance"): ("world", "min_goal_distance"),
    ("sim", "spawn_margin"): ("world", "spawn_margin"),
    ("hmm", "Hidden state number of HMM"): ("hmm", "n_states"),
    ("hmm", "observation_dim"): ("hmm", "obs_dim"),
    ("hmm", "em_iterations"): ("hmm", "em_iterations"),
    ("hmm", "em_tolerance"): ("hmm", "em_tolerance"),
    ("hmm", "variance_floor"): ("hmm", "variance_floor"),
    ("hmm", "window"): ("hmm", "window"),
    ("ddpg", "Learning rate of actor"): ("ddpg", "actor_lr"),
    ("ddpg", "Learning rate of critic"): ("ddpg", "critic_lr"),
    ("ddpg", "Batch size"): ("ddpg", "batch_size"),
    ("ddpg", "tau in DDPG"): ("ddpg", "soft_update_mix"),
    ("ddpg", "gamma in DDPG"): ("ddpg", "discount"),
    ("ddpg", "Max step in one episode"): ("ddpg", "max_steps_per_episode"),
    ("ddpg", "replay_capacity"): ("ddpg", "replay_capacity"),
    ("ddpg", "warmup_transitions"): ("ddpg", "warmup_transitions"),
    ("ddpg", "train_iters_per_step"): ("ddpg", "train_iters_per_step"),
    ("ddpg", "reward_scale"): ("ddpg", "reward_scale"),
    ("ddpg", "ou_theta"): ("ddpg", "ou_theta"),
    ("ddpg", "ou_sigma"): ("ddpg", "ou_sigma"),
    ("ddpg", "ou_sigma_final"): ("ddpg", "ou_sigma_final"),
    ("ddpg", "two_stage_fraction"): ("ddpg", "two_stage_fraction"),
    ("ddpg", "actor_hidden"): ("ddpg", "actor_hidden"),
    ("ddpg", "critic_hidden"): ("ddpg", "critic_hidden"),
    ("ddpg", "collision_penalty"): ("reward", "collision_penalty"),
    ("ddpg", "goal_progress_weight"): ("reward", "goal_progress_weight"),
    ("ddpg", "goal_bonus"): ("reward", "goal_bonus"),
    ("ddpg", "train_episodes"): ("train", "episodes"),
    ("ddpg", "train_agents"): ("train", "n_agents"),
    ("ddpg", "train_mode"): ("train", "mode"),
    ("control", "lambda_1"): ("fusion", "weight_target"),
    ("control", "lambda_2"): ("fusion", "weight_avoid"),
    ("orca", "Max speed in ORCA"): ("orca", "max_speed"),
    ("orca", "Max neighbors in ORCA"): ("orca", "max_neighbors"),
    ("orca", "Neighbor distance in ORCA"): ("orca", "neighbor_dist"),
    ("orca", "Protect radius in ORCA"): ("orca", "protect_radius"),
    ("orca", "Radius in ORCA"): ("orca", "body_radius"),
    ("orca", "Time horizon in ORCA"): ("orca", "time_horizon"),
    ("orca", "pref_bias"): ("orca", "pref_bias"),
    ("eval", "agent_counts"): ("eval", "agent_counts"),
    ("eval", "trials"): ("eval", "trials"),
    ("eval", "horizon"): ("eval", "horizon"),
    ("eval", "seed"): ("eval", "seed"),
    ("eval", "orca_fraction"): ("eval", "orca_fraction"),
    ("eval", "random_fraction"): ("eval", "random_fraction"),
    ("eval", "collect_episodes"): ("eval", "collect_episodes"),
    ("eval", "collect_horizon"): ("eval", "collect_horizon"),
    ("eval", "output_dir"): ("eval", "output_dir"),
}


def _coerce(raw: str, template) -> object:
    if isinstance(template, bool):
        return raw.strip().lower() in ("1", "true", "yes", "on")
    if isinstance(template, int):
        return int(raw)
    if isinstance(template, float):
        return float(raw)
    if isinstance(template, tuple):
        inner = type(template[0]) if template else int
        return tuple(inner(tok) for tok in raw.replace(",", " ").split())
    if isinstance(template, ScenarioMode):
        return ScenarioMode(raw.strip().lower())
    if isinstance(template, TrainingRegime):
        return TrainingRegime(raw.strip().lower())
    return raw


def load_config(path: str | None) -> RunConfig:
    """Defaults, overridden by the config file when one is given.

    Unknown sections or keys are errors; a typo should fail loudly rather
    than silently run with defaults.
    """
    cfg = RunConfig()
    if path is None:
        return cfg
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser()
    parser.optionxform = str  # keys are case-sensitive and may contain spaces
    parser.read(path)
    for section in parser.sections():
        for key, raw in parser.items(section):
            target = _KEY_MAP.get((section, key))
            if target is None:
                raise ConfigError(f"unknown config key [{section}] {key!r}")
            sub_name, field_name = target
            sub = getattr(cfg, sub_name)
            current = getattr(sub, field_name)
            try:
                setattr(sub, field_name, _coerce(raw, current))
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad value for [{section}] {key!r}: {raw!r}") from exc
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig) -> None:
    if cfg.world.dt <= 0:
        raise ConfigError("Delay of control must be positive")
    if cfg.hmm.obs_dim < 1 or cfg.world.n_beams % cfg.hmm.obs_dim != 0:
        raise ConfigError("observation_dim must divide beam_count")
    if not 0 <= cfg.ddpg.discount < 1:
        raise ConfigError("gamma in DDPG must lie in [0, 1)")
    if not 0 < cfg.ddpg.soft_update_mix <= 1:
        raise ConfigError("tau in DDPG must lie in (0, 1]")
    if cfg.orca.protect_radius < cfg.orca.body_radius:
        raise ConfigError("Protect radius in ORCA must be >= Radius in ORCA")
    if abs(cfg.eval.orca_fraction + cfg.eval.random_fraction - 1.0) > 1e-9:
        raise ConfigError("orca_fraction and random_fraction must sum to 1")


def resolve_seed(cli_seed: int | None, cfg: RunConfig) -> int:
    """Seed precedence: HNRN_SEED env var, then --seed, then the config file."""
    env = os.environ.get("HNRN_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise ConfigError(f"HNRN_SEED must be an integer, got {env!r}") from exc
    if cli_seed is not None:
        return cli_seed
    return cfg.eval.seed


def write_default_config(path: str) -> None:
    """Emit a config file holding every default, as documentation."""
    cfg = RunConfig()
    lines: list[str] = []
    sections: dict[str, list[str]] = {}
    for (section, key), (sub_name, field_name) in _KEY_MAP.items():
        value = getattr(getattr(cfg, sub_name), field_name)
        if isinstance(value, tuple):
            rendered = " ".join(str(v) for v in value)
        elif isinstance(value, (ScenarioMode, TrainingRegime)):
            rendered = value.value
        else:
            rendered = str(value)
        sections.setdefault(section, []).append(f"{key} = {rendered}")
    for section in ("sim", "hmm", "ddpg", "control", "orca", "eval"):
        lines.append(f"[{section}]")
        lines.extend(sections.get(section, []))
        lines.append("")
    with open(path, "w") as f:
        f.write("\n".join(lines))
