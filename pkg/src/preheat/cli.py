"""Command-line entry point: ``preheat {simulate,train,evaluate,compare,sweep}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import torch

from preheat.errors import PreheatError

log = logging.getLogger("preheat")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML run config (defaults are bundled)")
    p.add_argument("--seed", type=int, help="seed for episode sampling, training and evaluation")
    p.add_argument("--out", help="output directory")
    p.add_argument("--fidelity", choices=("dfn", "reduced"), help="electrochemical model")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="preheat", description="Film plus pulse preheating of a cold pouch cell.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one scenario episode and write its trace and energy report")
    _common(p)
    p.add_argument("--scenario", choices=("ptc-only", "pulse-only", "combined-policy"))
    p.add_argument("--checkpoint", help="policy checkpoint for combined-policy")
    p.add_argument("--substeps", action="store_true", help="one trace row per substep")
    p.add_argument("--basis", choices=("cell", "table"), help="energy bookkeeping basis")
    p.add_argument("--T0", type=float, help="initial temperature [K]")
    p.add_argument("--soc", type=float, help="initial SOC")

    p = sub.add_parser("train", help="train a combined heating policy")
    _common(p)
    p.add_argument("--episodes", type=int)
    p.add_argument("--agent", choices=("mpo", "awr"))
    p.add_argument("--resume", help="checkpoint to continue from")

    p = sub.add_parser("evaluate", help="roll out a checkpoint and write traces and statistics")
    _common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--episodes", type=int, help="number of evaluation episodes")
    p.add_argument("--stochastic", action="store_true", help="sample actions instead of using the mean")
    p.add_argument("--substeps", action="store_true")

    p = sub.add_parser("compare", help="film-only vs pulse-only vs combined from the same start")
    _common(p)
    p.add_argument("--checkpoint", help="combined policy; trained first when omitted")
    p.add_argument("--episodes", type=int, help="training episodes when no checkpoint is given")

    p = sub.add_parser("sweep", help="combined heating at several film voltage limits")
    _common(p)
    p.add_argument("--vmax", type=float, nargs="+", help="film voltage limits [V]")
    p.add_argument("--episodes", type=int, help="training episodes per level")
    return parser


def _config(args, **extra):
    from preheat.experiments import load_run_config

    overrides = {"seed": args.seed, "out_dir": args.out, "fidelity": args.fidelity, **extra}
    return load_run_config(args.config, **overrides)


def _with_training(cfg, episodes=None, agent=None):
    training = dict(cfg.training)
    if episodes is not None:
        training["episodes"] = episodes
    if agent is not None:
        training["agent"] = agent
    return cfg.replace(training=training)


def _progress(row) -> None:
    log.info(
        "episode %d  return %.2f  length %d  final T_range %.3f",
        row["episode"], row["return"], row["length"], row["final_T_range"],
    )


def cmd_simulate(args) -> int:
    from preheat.experiments import run_scenario, write_scenario

    cfg = _config(
        args,
        scenario=args.scenario,
        checkpoint=args.checkpoint,
        trace_substeps=True if args.substeps else None,
        energy_basis=args.basis,
        initial_temperature=args.T0,
        initial_soc=args.soc,
    )
    trace, report = run_scenario(cfg)
    write_scenario(cfg.out_dir, cfg.scenario, trace, report)
    print(
        f"{cfg.scenario}: time to target {report.time_to_target:.1f} s, film {report.ptc_energy:.1f} J, "
        f"pulse {report.pulse_energy:.1f} J, final T_range {report.final_T_range:.3f} K"
    )
    return 0


def cmd_train(args) -> int:
    from preheat.experiments import action_bounds, build_env
    from preheat.rl.training import TrainConfig, train

    cfg = _with_training(_config(args, scenario="train"), args.episodes, args.agent)
    env = build_env(cfg)
    tcfg = TrainConfig(**{**cfg.training, "seed": cfg.seed})
    result = train(env, tcfg, out_dir=cfg.out_dir, resume=args.resume, bounds=action_bounds(env), log=_progress)
    print(f"trained {result.episode} episodes; checkpoint at {Path(cfg.out_dir) / 'checkpoint.pt'}")
    return 0


def cmd_evaluate(args) -> int:
    from preheat.experiments import build_env, write_json
    from preheat.rl.training import agent_from_checkpoint, evaluate_policy
    from preheat.trace import write_trace_csv

    cfg = _config(args, trace_substeps=True if args.substeps else None)
    env = build_env(cfg)
    agent = agent_from_checkpoint(args.checkpoint)
    n = args.episodes or cfg.eval_episodes
    stats, traces = evaluate_policy(agent.policy, env, n, deterministic=not args.stochastic, seed=cfg.seed)
    out = Path(cfg.out_dir)
    for k, trace in enumerate(traces):
        write_trace_csv(out / f"eval_{k:03d}_trace.csv", trace)
    write_json(out / "eval_stats.json", stats.as_dict())
    print(f"mean return {stats.mean_return:.2f}, reached {stats.reached_fraction:.0%}, mean time {stats.mean_time_to_target:.1f} s")
    return 0


def cmd_compare(args) -> int:
    from preheat.experiments import compare

    cfg = _with_training(_config(args, scenario="compare", checkpoint=args.checkpoint), args.episodes)
    results = compare(cfg, log=_progress)
    print(f"{'scenario':<16}{'film [J]':>12}{'pulse [J]':>12}{'total [J]':>12}{'time [s]':>10}{'T_range [K]':>13}")
    for kind, (_, reports) in results.items():
        r = reports[cfg.energy_basis]
        print(f"{kind:<16}{r.ptc_energy:12.1f}{r.pulse_energy:12.1f}{r.total_energy:12.1f}{r.time_to_target:10.1f}{r.final_T_range:13.3f}")
    return 0


def cmd_sweep(args) -> int:
    from preheat.experiments import run_vmax_sweep

    cfg = _with_training(_config(args, scenario="sweep", v_max_list=tuple(args.vmax) if args.vmax else None), args.episodes)
    points = run_vmax_sweep(cfg, log=_progress)
    print(f"{'v_max [V]':>10}{'RTR [K/s]':>12}{'pulse share':>13}{'mean v [V]':>12}{'saturated':>11}")
    for p in points:
        print(f"{p.v_max:10.1f}{p.mean_rtr:12.4f}{p.pulse_share:13.3f}{p.mean_v_ptc:12.2f}{p.saturated_fraction:11.2f}")
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "compare": cmd_compare,
    "sweep": cmd_sweep,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    torch.set_num_threads(1)
    try:
        return COMMANDS[args.command](args)
    except PreheatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
