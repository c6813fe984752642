"""Command-line pipeline orchestration.

Subcommands: generate, build-graph, train, index, identify-seh, dispatch,
evaluate, oracle-check.  Every run writes a manifest (config hash, seed,
version) next to its outputs so results can be reproduced exactly.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, PipelineConfig, load_config, parse_override_value
from .errors import ValidationError

logger = logging.getLogger("scdn")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_MISSING_INPUT = 3


def _setup_logging() -> None:
    level = os.environ.get("SCDN_LOG", "info").upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO),
                        format="%(levelname)s %(name)s: %(message)s")


def _write_manifest(out: Path, config: PipelineConfig, command: str,
                    extra: dict | None = None) -> None:
    manifest = {"command": command, "config_hash": config.config_hash(),
                "seed": config.seed, "version": __version__}
    manifest.update(extra or {})
    (out / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=1),
                                       encoding="utf-8")


def _require(path: Path, what: str) -> Path:
    if not path.exists():
        print(f"error: missing {what}: {path}", file=sys.stderr)
        raise SystemExit(EXIT_MISSING_INPUT)
    return path


def _out_dir(config: PipelineConfig, sub: str = "") -> Path:
    out = Path(config.out) / sub if sub else Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# subcommands

def cmd_generate(config: PipelineConfig, args) -> int:
    from .fileio import write_order_history, write_trajectory_events
    from .simgen import generate_city, generate_sc_trajectories
    from .simgen.city import save_scenario

    config.simgen.rng_seed = config.seed
    scenario = generate_city(config.simgen)
    out = _out_dir(config, "scenario")
    save_scenario(scenario, out)
    trajectories = generate_sc_trajectories(scenario)
    write_trajectory_events(trajectories.events, out / "trajectories.jsonl")
    write_order_history(trajectories.history, out / "order_history.jsonl")
    (out / "courier_rank.json").write_text(
        json.dumps(trajectories.courier_rank, sort_keys=True), encoding="utf-8")
    _write_manifest(out, config, "generate",
                    {"n_orders": len(scenario.orders), "n_fus": len(scenario.fus),
                     "n_events": len(trajectories.events)})
    print(f"scenario written to {out} ({len(scenario.orders)} orders, "
          f"{len(scenario.fus)} FUs, {len(trajectories.events)} events)")
    return EXIT_OK


def cmd_build_graph(config: PipelineConfig, args) -> int:
    from .fileio import read_order_history, read_trajectory_events, save_graph
    from .pipeline import build_graph
    from .simgen.city import load_scenario

    scen_dir = _require(Path(args.scenario), "scenario directory")
    _require(scen_dir / "trajectories.jsonl", "trajectory file")
    scenario = load_scenario(scen_dir)
    events = read_trajectory_events(scen_dir / "trajectories.jsonl")
    history = read_order_history(scen_dir / "order_history.jsonl")
    rank = json.loads((scen_dir / "courier_rank.json").read_text(encoding="utf-8"))
    graph = build_graph(events, rank, history, scenario.aoi_stats,
                        scenario.config.scenario,
                        gap_threshold_s=config.network.gap_threshold_s)
    out = _out_dir(config)
    save_graph(graph, out / "graph.json")
    _write_manifest(out, config, "build-graph",
                    {"n_nodes": graph.n_nodes,
                     "n_edges": {t: len(e) for t, e in graph.edges.items()}})
    print(f"graph written to {out / 'graph.json'} ({graph.n_nodes} nodes)")
    return EXIT_OK


def cmd_train(config: PipelineConfig, args) -> int:
    from .embedding import train
    from .fileio import load_graph

    graph = load_graph(_require(Path(args.graph), "graph file"))
    out = _out_dir(config)
    (out / "resolved_config.json").write_text(
        json.dumps(config.resolved(), sort_keys=True, indent=1), encoding="utf-8")
    result = train(graph, config.eatne, rng_seed=config.seed)
    result.table.save_binary(out / "embeddings.bin")
    if args.export_jsonl:
        result.table.save_jsonl(out / "embeddings.jsonl")
    curves = {"epoch_losses": result.epoch_losses, "val_auc": result.val_auc,
              "best_epoch": result.best_epoch, "pair_counts": result.pair_counts}
    (out / "training_curves.json").write_text(json.dumps(curves, sort_keys=True),
                                              encoding="utf-8")
    _write_manifest(out, config, "train",
                    {"epochs": len(result.epoch_losses),
                     "best_val_auc": max(result.val_auc, default=0.0)})
    print(f"embeddings written to {out / 'embeddings.bin'} "
          f"({len(result.table)} FUs, best val AUC "
          f"{max(result.val_auc, default=0.0):.4f})")
    return EXIT_OK


def cmd_index(config: PipelineConfig, args) -> int:
    from .embedding.store import EmbeddingTable, estimate_cold_start
    from .indices import export_hpp_csv
    from .network import build_extended_network
    from .pipeline import indices_from_table
    from .simgen.city import load_scenario

    table = EmbeddingTable.load_binary(_require(Path(args.embeddings), "embedding table"))
    scenario = load_scenario(_require(Path(args.scenario), "scenario directory"))
    extended = build_extended_network(scenario.fus, scenario.centroids,
                                      config.network.distance_threshold_m)
    before = len(table)
    table = estimate_cold_start(table, extended)
    hpp_index, fei_table = indices_from_table(
        table, scenario.fus, scenario.centroids, scenario.order_volumes(),
        neighbor_radius_m=config.indices.neighbor_radius_m)
    out = _out_dir(config)
    table.save_binary(out / "embeddings_extended.bin")
    fei_table.export_csv(out / "fei.csv")
    rows = export_hpp_csv(hpp_index, sorted(table.fus), out / "hpp.csv",
                          floor=config.indices.hpp_export_floor)
    _write_manifest(out, config, "index",
                    {"coverage_before": before, "coverage_after": len(table),
                     "hpp_rows": rows})
    print(f"indices written to {out} (coverage {before} -> {len(table)} FUs)")
    return EXIT_OK


def cmd_identify_seh(config: PipelineConfig, args) -> int:
    from .embedding.store import EmbeddingTable
    from .indices import HppIndex
    from .pipeline import indices_from_table
    from .seh import build_instance, solve_ga
    from .simgen.city import load_scenario

    table = EmbeddingTable.load_binary(_require(Path(args.embeddings), "embedding table"))
    scenario = load_scenario(_require(Path(args.scenario), "scenario directory"))
    volumes = scenario.order_volumes()
    hpp_index, fei_table = indices_from_table(
        table, scenario.fus, scenario.centroids, volumes,
        neighbor_radius_m=config.indices.neighbor_radius_m)
    seh_cfg = config.seh
    try:
        instance = build_instance(
            fei_table, hpp_index, volumes, config.indices.fei_threshold,
            n_groups=seh_cfg.n_groups or None, size_min=seh_cfg.size_min,
            size_max=seh_cfg.size_max, volume_floor=seh_cfg.volume_floor,
            hpp_floor=seh_cfg.hpp_floor, allow_unassigned=seh_cfg.allow_unassigned)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    partition = solve_ga(instance, seh_cfg.ga_params(config.seed))
    out = _out_dir(config)
    doc = {"fus": instance.fus, "n_groups": instance.n_groups,
           "groups": partition.groups, "unassigned": partition.unassigned,
           "objective": partition.objective, "feasible": partition.feasible,
           "violations": partition.report.violations if partition.report else [],
           "seed": config.seed, "fitness_trace": partition.trace}
    (out / "seh_partition.json").write_text(json.dumps(doc, sort_keys=True),
                                            encoding="utf-8")
    _write_manifest(out, config, "identify-seh",
                    {"objective": partition.objective, "feasible": partition.feasible})
    print(f"partition written to {out / 'seh_partition.json'} "
          f"(objective {partition.objective:.4f}, feasible {partition.feasible})")
    return EXIT_OK


def _dispatch_common(config: PipelineConfig, args):
    from .embedding.store import EmbeddingTable
    from .simgen.city import load_scenario

    scenario = load_scenario(_require(Path(args.scenario), "scenario directory"))
    table = None
    if args.embeddings:
        table = EmbeddingTable.load_binary(_require(Path(args.embeddings),
                                                    "embedding table"))
    return scenario, table


def cmd_dispatch(config: PipelineConfig, args) -> int:
    from .simgen.evaluate import run_single_cycle

    scenario, table = _dispatch_common(config, args)
    d = config.dispatch
    assignment, report = run_single_cycle(
        scenario, table, args.method, max_orders=args.max_orders or None,
        weights=d.goal_weights(), p1=d.p1, p2=d.p2, scale_m=d.scale_m,
        candidate_limit=d.candidate_limit, iteration_cap=d.iteration_cap,
        bundle_cap=d.bundle_cap)
    out = _out_dir(config)
    doc = {"entries": [asdict(e) for e in assignment.entries],
           "unassigned": assignment.unassigned,
           "total_cost": assignment.total_cost, "partial": assignment.partial,
           "report": report.canonical_dict()}
    (out / "assignment.json").write_text(json.dumps(doc, sort_keys=True),
                                         encoding="utf-8")
    (out / "timing.json").write_text(json.dumps({"wall_time_s": report.wall_time_s}),
                                     encoding="utf-8")
    _write_manifest(out, config, "dispatch", {"method": args.method,
                                              "total_md": report.total_md})
    print(f"assignment written to {out / 'assignment.json'} "
          f"(total MD {report.total_md:.4f}, {report.md_evaluations} evaluations, "
          f"{report.wall_time_s:.2f}s)")
    return EXIT_OK


def cmd_evaluate(config: PipelineConfig, args) -> int:
    import csv

    from .simgen.evaluate import evaluate_pipeline

    scenario, table = _dispatch_common(config, args)
    d = config.dispatch
    reports = evaluate_pipeline(scenario, table, methods=("ruled", "scdn"),
                                max_orders=args.max_orders or None,
                                weights=d.goal_weights(), p1=d.p1, p2=d.p2,
                                scale_m=d.scale_m, candidate_limit=d.candidate_limit,
                                iteration_cap=d.iteration_cap, bundle_cap=d.bundle_cap)
    out = _out_dir(config)
    doc = {m: r.canonical_dict() for m, r in reports.items()}
    ruled, scdn = reports["ruled"], reports["scdn"]
    if ruled.total_md > 0:
        doc["md_improvement"] = (ruled.total_md - scdn.total_md) / ruled.total_md
    (out / "evaluation.json").write_text(json.dumps(doc, sort_keys=True),
                                         encoding="utf-8")
    (out / "timing.json").write_text(
        json.dumps({m: r.wall_time_s for m, r in reports.items()}), encoding="utf-8")
    with (out / "combination_histogram.csv").open("w", newline="",
                                                  encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "orders_per_courier", "couriers"])
        for method, report in reports.items():
            for level in sorted(report.combination_histogram):
                writer.writerow([method, level, report.combination_histogram[level]])
    _write_manifest(out, config, "evaluate",
                    {m: r.total_md for m, r in reports.items()})
    print(f"evaluation written to {out / 'evaluation.json'} "
          f"(ruled {ruled.total_md:.3f} vs scdn {scdn.total_md:.3f})")
    return EXIT_OK


def cmd_oracle_check(config: PipelineConfig, args) -> int:
    from .oracles import run_all

    results = run_all()
    width = max(len(r.name) for r in results)
    failed = 0
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        failed += not r.passed
        print(f"{status}  {r.name:<{width}}  {r.seconds:7.2f}s  {r.detail}")
    print(f"{len(results) - failed}/{len(results)} oracles passed")
    return EXIT_OK if failed == 0 else EXIT_ERROR


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scdn",
        description="Courier-trajectory embeddings, pooling indices, and "
                    "order-assignment pruning.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", type=str, default=None, help="JSON config file")
        p.add_argument("--seed", type=int, default=None, help="global RNG seed")
        p.add_argument("--out", type=str, default=None, help="output directory")

    common(sub.add_parser("generate", help="synthesize a city scenario"))

    p = sub.add_parser("build-graph", help="build the FU graph from trajectories")
    common(p)
    p.add_argument("--scenario", required=True, help="scenario directory")

    p = sub.add_parser("train", help="train FU embeddings")
    common(p)
    p.add_argument("--graph", required=True, help="graph JSON file")
    p.add_argument("--export-jsonl", action="store_true",
                   help="also write embeddings as JSON-Lines")

    p = sub.add_parser("index", help="cold-start extension, HPP and FEI tables")
    common(p)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--scenario", required=True)

    p = sub.add_parser("identify-seh", help="solve the hotspot partition")
    common(p)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--scenario", required=True)

    p = sub.add_parser("dispatch", help="run one assignment cycle")
    common(p)
    p.add_argument("--scenario", required=True)
    p.add_argument("--embeddings", default=None)
    p.add_argument("--method", choices=("ruled", "scdn"), default="scdn")
    p.add_argument("--max-orders", type=int, default=0)

    p = sub.add_parser("evaluate", help="compare ruled vs scdn on one cycle")
    common(p)
    p.add_argument("--scenario", required=True)
    p.add_argument("--embeddings", default=None)
    p.add_argument("--max-orders", type=int, default=0)

    common(sub.add_parser("oracle-check", help="run every verification oracle"))
    return parser


_COMMANDS = {
    "generate": cmd_generate,
    "build-graph": cmd_build_graph,
    "train": cmd_train,
    "index": cmd_index,
    "identify-seh": cmd_identify_seh,
    "dispatch": cmd_dispatch,
    "evaluate": cmd_evaluate,
    "oracle-check": cmd_oracle_check,
}


def _split_overrides(argv: list[str]) -> tuple[list[str], dict]:
    """Pull out dot-keyed overrides like `--eatne.walk_length 10`."""
    known: list[str] = []
    overrides: dict[str, object] = {}
    k = 0
    while k < len(argv):
        arg = argv[k]
        if arg.startswith("--") and "." in arg.split("=", 1)[0]:
            key, eq, inline = arg[2:].partition("=")
            if eq:
                overrides[key] = parse_override_value(inline)
            else:
                if k + 1 >= len(argv):
                    raise ConfigError(f"override {arg} missing a value")
                overrides[key] = parse_override_value(argv[k + 1])
                k += 1
        else:
            known.append(arg)
        k += 1
    return known, overrides


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        argv, overrides = _split_overrides(argv)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = load_config(args.config, overrides)
        if args.seed is not None:
            config.seed = args.seed
        if args.out is not None:
            config.out = args.out
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"error: missing config file: {exc.filename}", file=sys.stderr)
        return EXIT_MISSING_INPUT
    try:
        return _COMMANDS[args.command](config, args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
