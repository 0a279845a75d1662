"""Command-line entry point.

Settings for ``simulate`` are layered as defaults < preset < config file <
flags.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

import numpy as np

from . import __version__
from .config import HILL, TWOBODY_J2, PRESETS, ConfigError, MissionConfig, apply_preset, load_config
from .guidance_env import (InspectionGraph, brute_force_router, build_graph, greedy_rollout,
                           random_instance)
from .harness import SCENARIOS, export, metrics_from_csv, rta_scenario, run_mission
from .rta import KINDS

_FIDELITY_FLAGS = {"hill": HILL, "twobody-j2": TWOBODY_J2, "twobody_j2": TWOBODY_J2}


def _cmd_simulate(args) -> int:
    cfg = MissionConfig()
    if args.preset:
        cfg = apply_preset(cfg, args.preset)
    if args.config:
        cfg = load_config(args.config, cfg)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.fidelity:
        changes["fidelity"] = _FIDELITY_FLAGS[args.fidelity]
    if args.rta:
        changes["rta_enabled"] = args.rta == "on"
    cfg = dataclasses.replace(cfg, **changes)
    log, metrics = run_mission(cfg)
    paths = export(log, metrics, args.out)
    print(json.dumps(metrics.to_dict()))
    print(f"wrote {', '.join(str(p) for p in paths.values())}")
    return 0


def _cmd_graph(args) -> int:
    graph = build_graph(args.count, seed=args.seed)
    graph.to_csv(args.emit)
    print(f"wrote {len(graph)} points to {args.emit}")
    return 0


def _cmd_plan(args) -> int:
    points, starts = random_instance(args.points, args.agents, args.seed)
    seqs, greedy = greedy_rollout(points, starts)
    print(f"greedy cost {greedy:.3f} m, sequences {seqs}")
    if args.oracle:
        best = brute_force_router(points, args.agents, starts)
        ratio = greedy / best.cost if best.cost > 0 else 1.0
        print(f"optimal cost {best.cost:.3f} m, sequences {[list(s) for s in best.sequences]}")
        print(f"greedy/optimal ratio {ratio:.4f}")
    return 0


def _cmd_rta_demo(args) -> int:
    trace = rta_scenario(args.scenario, seed=args.seed, steps=args.steps)
    print("step agent speed " + " ".join(KINDS) + " max_slack")
    for k in range(trace.flags.shape[0]):
        for i in range(trace.flags.shape[1]):
            flags = trace.flags[k, i]
            if flags.any() or args.all:
                speed = np.linalg.norm(trace.vel[k, i])
                print(f"{k} {i} {speed:.4f} " + " ".join(str(int(f)) for f in flags)
                      + f" {trace.max_slack[k, i]:.3e}")
    summary = {"max_speed": trace.max_speed, "slack_free": trace.slack_free}
    if trace.pos.shape[1] > 1:
        summary["min_separation"] = trace.min_separation
    print(json.dumps(summary))
    return 0


def _cmd_metrics(args) -> int:
    points = InspectionGraph.from_csv(args.graph).points if args.graph else build_graph().points
    metrics = metrics_from_csv(args.log, points, mass=args.mass)
    print(json.dumps(metrics.to_dict(), indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="satinspect",
                                     description="Multi-agent satellite inspection simulator")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one inspection mission and export logs")
    p.add_argument("--config", help="TOML mission config")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--fidelity", choices=sorted(_FIDELITY_FLAGS))
    p.add_argument("--rta", choices=["on", "off"])
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("graph", help="write the inspection points to CSV")
    p.add_argument("--emit", required=True, help="output CSV path")
    p.add_argument("--count", type=int, default=20)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=_cmd_graph)

    p = sub.add_parser("plan", help="greedy routing cost on a random instance")
    p.add_argument("--points", type=int, required=True)
    p.add_argument("--agents", type=int, required=True)
    p.add_argument("--oracle", action="store_true", help="also solve exactly by brute force")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_plan)

    p = sub.add_parser("rta-demo", help="print safety-filter activations in a canned scenario")
    p.add_argument("--scenario", choices=SCENARIOS, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--steps", type=int, default=100)
    p.add_argument("--all", action="store_true", help="print inactive steps too")
    p.set_defaults(func=_cmd_rta_demo)

    p = sub.add_parser("metrics", help="recompute metrics from a trajectory CSV")
    p.add_argument("--log", required=True, help="trajectory CSV")
    p.add_argument("--graph", help="graph CSV (default: the standard 20-point graph)")
    p.add_argument("--mass", type=float, default=1.0)
    p.set_defaults(func=_cmd_metrics)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError, OSError, ArithmeticError, IndexError) as exc:
        print(f"satinspect {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
