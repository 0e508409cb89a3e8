"""Command-line entry point.

Subcommands: collect, train-hmm, rank-states, train-ddpg, eval, demo, and
write-config. Every subcommand accepts --config and --seed; the HNRN_SEED
environment variable overrides both the config seed and --seed.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys

from . import __version__
from .config import ConfigError, RunConfig, load_config, resolve_seed, write_default_config
from .ddpg import DdpgConfig, ScenarioSpec, TrainingRegime, run_training
from .harness import (
    TRAJECTORY_HEADER,
    HnrnSystemPolicy,
    OrcaPolicy,
    RawDdpgPolicy,
    TargetOnlyPolicy,
    build_world,
    collect_hmm_data,
    evaluate,
    load_dataset,
    run_episode,
    save_dataset,
    write_report,
)
from .hmm import baum_welch, load_hmm, rank_states, save_hmm
from .nn import load_mlp, save_mlp
from .plots import save_report_figures, save_trajectory_figure, save_training_curves_figure


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="config file path (defaults apply when omitted)")
    parser.add_argument("--seed", type=int, help="base seed (HNRN_SEED overrides)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hnrn", description="Hierarchical multi-agent navigation workbench"
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("collect", help="record hazard-model training data")
    _add_common(p)
    p.add_argument("--out", default="dataset.npz")
    p.add_argument("--episodes", type=int)
    p.add_argument("--horizon", type=int)

    p = sub.add_parser("train-hmm", help="fit and rank the hazard model")
    _add_common(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", default="hazard_hmm.bin")

    p = sub.add_parser("rank-states", help="recompute the hazard ranking of a model")
    _add_common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", default="hazard_hmm.bin")

    p = sub.add_parser("train-ddpg", help="train the avoidance actor")
    _add_common(p)
    p.add_argument(
        "--regime",
        choices=[r.value for r in TrainingRegime],
        default=TrainingRegime.COLLISION_ONLY.value,
    )
    p.add_argument("--episodes", type=int)
    p.add_argument("--agents", type=int)
    p.add_argument("--out-dir")

    p = sub.add_parser("eval", help="run the benchmark grid and write the report")
    _add_common(p)
    p.add_argument("--policies", default="orca,target")
    p.add_argument("--counts", help="comma-separated agent counts")
    p.add_argument("--trials", type=int)
    p.add_argument("--horizon", type=int)
    p.add_argument("--hmm", help="ranked hazard-model checkpoint (for hnrn)")
    p.add_argument("--actor", help="actor checkpoint (for hnrn / ddpg)")
    p.add_argument("--out-dir")

    p = sub.add_parser("demo", help="run one episode with a full diagnostic log")
    _add_common(p)
    p.add_argument("--policy", default="target", choices=["hnrn", "orca", "ddpg", "target"])
    p.add_argument("--count", type=int, default=4)
    p.add_argument("--hmm")
    p.add_argument("--actor")
    p.add_argument("--out-dir")

    p = sub.add_parser("write-config", help="write every default as a config file")
    p.add_argument("--out", default="hnrn.cfg")

    return parser


def _out_dir(args, cfg: RunConfig) -> str:
    out = args.out_dir if getattr(args, "out_dir", None) else cfg.eval.output_dir
    os.makedirs(out, exist_ok=True)
    return out


def _build_policies(names: list[str], cfg: RunConfig, args) -> dict[str, object]:
    policies: dict[str, object] = {}
    for name in names:
        if name == "orca":
            policies[name] = OrcaPolicy(cfg.orca, cfg.world)
        elif name == "target":
            policies[name] = TargetOnlyPolicy(cfg.world)
        elif name == "ddpg":
            if not args.actor:
                raise ConfigError("policy 'ddpg' needs --actor")
            policies[name] = RawDdpgPolicy(load_mlp(args.actor), cfg.world, cfg.hmm.obs_dim)
        elif name == "hnrn":
            if not args.hmm or not args.actor:
                raise ConfigError("policy 'hnrn' needs --hmm and --actor")
            hmm, ranking = load_hmm(args.hmm)
            policies[name] = HnrnSystemPolicy(
                hmm, ranking, load_mlp(args.actor), cfg.fusion, cfg.world, cfg.hmm.window
            )
        else:
            raise ConfigError(f"unknown policy {name!r}")
    return policies


def cmd_collect(args) -> int:
    cfg = load_config(args.config)
    seed = resolve_seed(args.seed, cfg)
    sequences = collect_hmm_data(
        cfg.world,
        cfg.orca,
        cfg.hmm,
        episodes=args.episodes or cfg.eval.collect_episodes,
        seed=seed,
        agent_counts=cfg.eval.agent_counts,
        horizon=args.horizon or cfg.eval.collect_horizon,
        orca_fraction=cfg.eval.orca_fraction,
    )
    save_dataset(args.out, sequences)
    frames = sum(len(s.frames) for s in sequences)
    print(f"collected {len(sequences)} sequences, {frames} frames -> {args.out}")
    return 0


def cmd_train_hmm(args) -> int:
    cfg = load_config(args.config)
    seed = resolve_seed(args.seed, cfg)
    sequences = load_dataset(args.dataset)
    model, history = baum_welch(
        sequences,
        cfg.hmm.n_states,
        max_iters=cfg.hmm.em_iterations,
        tol=cfg.hmm.em_tolerance,
        seed=seed,
        variance_floor=cfg.hmm.variance_floor,
    )
    ranking = rank_states(model, sequences)
    save_hmm(args.out, model, ranking)
    print(
        f"trained {cfg.hmm.n_states}-state model in {len(history)} iterations, "
        f"final log-likelihood {history[-1]:.2f} -> {args.out}"
    )
    return 0


def cmd_rank_states(args) -> int:
    cfg = load_config(args.config)
    del cfg  # ranking has no tunables beyond the model and data
    model, _ = load_hmm(args.model)
    sequences = load_dataset(args.dataset)
    ranking = rank_states(model, sequences)
    save_hmm(args.out, model, ranking)
    order = ",".join(str(s) for s in ranking.order)
    print(f"ranked states (least hazardous first): {order} -> {args.out}")
    return 0


def cmd_train_ddpg(args) -> int:
    cfg = load_config(args.config)
    seed = resolve_seed(args.seed, cfg)
    out = _out_dir(args, cfg)
    regime = TrainingRegime(args.regime)
    ddpg_cfg = DdpgConfig(**{**cfg.ddpg.__dict__, "regime": regime})
    scenario = ScenarioSpec(
        n_agents=args.agents or cfg.train.n_agents,
        mode=cfg.train.mode,
        arena_half_extent=cfg.world.arena_half_extent,
        dt=cfg.world.dt,
        agent_radius=cfg.world.agent_radius,
        goal_tolerance=cfg.world.goal_tolerance,
        speed_scale=cfg.world.speed_scale,
        max_turn_rate=cfg.world.max_turn_rate,
        antipodal_radius=cfg.world.antipodal_radius,
        n_beams=cfg.world.n_beams,
        max_laser_range=cfg.world.max_laser_range,
        obs_dim=cfg.hmm.obs_dim,
    )
    episodes = args.episodes if args.episodes is not None else cfg.train.episodes
    result = run_training(scenario, ddpg_cfg, cfg.reward, episodes, seed)

    tag = regime.value
    actor_path = os.path.join(out, f"actor_{tag}.bin")
    curves_path = os.path.join(out, f"curves_{tag}.csv")
    save_mlp(actor_path, result.actor)
    with open(curves_path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["episode", "actor_loss", "critic_loss", "success_rate", "mean_reward"])
        for r in result.records:
            writer.writerow(
                [
                    r.episode,
                    f"{r.actor_loss:.6f}",
                    f"{r.critic_loss:.6f}",
                    f"{r.success_rate:.6f}",
                    f"{r.mean_reward:.6f}",
                ]
            )
    figure_path = save_training_curves_figure(
        {tag: result.records}, os.path.join(out, f"curves_{tag}.png")
    )
    print(f"trained {episodes} episodes ({tag}) -> {actor_path}, {curves_path}, {figure_path}")
    return 0


def cmd_eval(args) -> int:
    cfg = load_config(args.config)
    seed = resolve_seed(args.seed, cfg)
    out = _out_dir(args, cfg)
    names = [n.strip() for n in args.policies.split(",") if n.strip()]
    policies = _build_policies(names, cfg, args)
    counts = (
        tuple(int(tok) for tok in args.counts.replace(",", " ").split())
        if args.counts
        else cfg.eval.agent_counts
    )
    trials = args.trials or cfg.eval.trials
    horizon = args.horizon or cfg.eval.horizon

    log_path = os.path.join(out, "trajectories.csv")
    report_path = os.path.join(out, "report.csv")
    with open(log_path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(TRAJECTORY_HEADER)
        report = evaluate(policies, cfg.world, counts, trials, seed, horizon, log_writer=writer)
    write_report(report_path, report)
    figures = save_report_figures(report, out)
    for (policy, count), cell in report.cells.items():
        print(
            f"{policy} @ {count}: success {cell.success_mean:.3f}/{cell.success_std:.3f} "
            f"collision {cell.collision_mean:.3f}/{cell.collision_std:.3f}"
        )
    print(f"report -> {report_path}; log -> {log_path}; figures -> {', '.join(figures)}")
    return 0


def cmd_demo(args) -> int:
    cfg = load_config(args.config)
    seed = resolve_seed(args.seed, cfg)
    out = _out_dir(args, cfg)
    policy = _build_policies([args.policy], cfg, args)[args.policy]
    world = build_world(cfg.world, args.count, seed)
    goals = [a.goal for a in world.agents]

    log_path = os.path.join(out, f"demo_{args.policy}.csv")
    with open(log_path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(TRAJECTORY_HEADER)
        metrics = run_episode(
            world, policy, cfg.eval.horizon, cfg.world.speed_scale, log_writer=writer
        )
    figure = save_trajectory_figure(
        log_path,
        os.path.join(out, f"demo_{args.policy}.png"),
        cfg.world.arena_half_extent,
        goals,
    )
    time_s = "-" if metrics.time_spent is None else f"{metrics.time_spent:.1f}s"
    length = "-" if metrics.trajectory_length is None else f"{metrics.trajectory_length:.2f}m"
    print(
        f"demo {args.policy} @ {args.count}: success={metrics.success} "
        f"collisions={metrics.collision_count} time={time_s} length={length}"
    )
    print(f"log -> {log_path}; figure -> {figure}")
    return 0


_COMMANDS = {
    "collect": cmd_collect,
    "train-hmm": cmd_train_hmm,
    "rank-states": cmd_rank_states,
    "train-ddpg": cmd_train_ddpg,
    "eval": cmd_eval,
    "demo": cmd_demo,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "write-config":
        write_default_config(args.out)
        print(f"wrote defaults -> {args.out}")
        return 0
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
