"""Command-line surface: ingest, synth, train, compare, evaluate.

Every command exits nonzero on failure after printing a single
``error:<code>: message`` line to stderr. Set PARCELPLAN_LOG to control
log verbosity.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from pathlib import Path

from .agents import planner_roster
from .baselines import (
    BaselineKind,
    apply_assignment,
    comparison_csv,
    comparison_rows,
    comparison_text,
    evaluate_plan,
    run_baseline,
    sustainability,
)
from .config import RunConfig, load_config
from .errors import ConfigurationError, ParcelPlanError, ParseError, ValidationError
from .graph import (
    LandUse,
    SpatialGraph,
    build_knn_graph,
    parse_adjacency,
    parse_parcels,
    select_readjustment_parcels,
    serialize_adjacency,
    serialize_parcels,
    to_geojson,
)
from .rewards import diversity_score, global_reward
from .synth import generate_csv
from .training import curves_to_csv, load_policies, train

log = logging.getLogger("parcelplan")


def _setup_logging() -> None:
    level = os.environ.get("PARCELPLAN_LOG", "WARNING").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
    )


def write_bundle(graph: SpatialGraph, path: Path) -> None:
    """Persist a graph as parcels.csv + adjacency.csv under ``path``."""
    path.mkdir(parents=True, exist_ok=True)
    ordered = [graph.parcels[pid] for pid in graph.ids()]
    (path / "parcels.csv").write_text(serialize_parcels(ordered), encoding="utf-8")
    (path / "adjacency.csv").write_text(serialize_adjacency(graph), encoding="utf-8")


def load_bundle(path: Path) -> SpatialGraph:
    """Rebuild a graph from a bundle directory; re-marks readjustables."""
    try:
        parcels_text = (path / "parcels.csv").read_text(encoding="utf-8")
        adjacency_text = (path / "adjacency.csv").read_text(encoding="utf-8")
    except FileNotFoundError as exc:
        raise ConfigurationError(f"graph bundle incomplete under {path}: {exc}") from None
    parcels = parse_parcels(parcels_text)
    select_readjustment_parcels(parcels)
    graph = SpatialGraph(parcels={p.id: p for p in parcels})
    graph.adjacency = parse_adjacency(adjacency_text, graph.parcels)
    return graph


def _resolve_config(args: argparse.Namespace) -> RunConfig:
    cfg = load_config(getattr(args, "config", None))
    if getattr(args, "out", None):
        cfg.out_dir = Path(args.out)
    if getattr(args, "k", None) is not None:
        cfg.k = args.k
    if getattr(args, "methods", None):
        cfg.methods = tuple(m.strip().upper() for m in args.methods.split(","))
    train_kwargs = {}
    if getattr(args, "seed", None) is not None:
        train_kwargs["seed"] = args.seed
    if getattr(args, "radius_m", None) is not None:
        train_kwargs["radius_m"] = args.radius_m
    if getattr(args, "epochs", None) is not None:
        train_kwargs["epochs"] = args.epochs
    if train_kwargs:
        from dataclasses import replace

        cfg.train = replace(cfg.train, **train_kwargs)
    return cfg.validate()


def cmd_ingest(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    source = Path(args.parcels) if args.parcels else cfg.parcels_csv
    if source is None:
        raise ConfigurationError("ingest needs a parcel CSV (--parcels or [paths] parcels)")
    parcels = parse_parcels(source.read_text(encoding="utf-8"))
    readjustable = select_readjustment_parcels(parcels)
    graph = build_knn_graph(parcels, cfg.k)
    for pid in readjustable:
        graph.parcels[pid].readjustable = True
    bundle = cfg.out_dir / "bundle"
    write_bundle(graph, bundle)
    degrees = [len(graph.adjacency[pid]) for pid in graph.ids()]
    n_edges = sum(degrees) // 2
    print(f"parcels: {len(parcels)}")
    print(f"edges: {n_edges}")
    print(f"min_degree: {min(degrees)}")
    print(f"readjustable: {len(readjustable)}")
    print(f"bundle: {bundle}")
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    spec = cfg.synth
    if getattr(args, "seed", None) is not None:
        from dataclasses import replace

        spec = replace(spec, seed=args.seed)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    out = cfg.out_dir / "parcels.csv"
    out.write_text(generate_csv(spec), encoding="utf-8")
    print(f"parcels: {spec.width * spec.height}")
    print(f"csv: {out}")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    bundle = Path(args.bundle) if args.bundle else cfg.bundle_dir
    if bundle is None:
        raise ConfigurationError("train needs a graph bundle (--bundle or [paths] bundle)")
    graph = load_bundle(bundle)
    roster = cfg.roster(graph)
    if cfg.mode == "topdown":
        roster = planner_roster(roster)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    checkpoint_dir = cfg.out_dir / "checkpoint"

    trace_handle = None
    trace_writer = None
    if args.trace:
        trace_handle = open(cfg.out_dir / "episodes.jsonl", "w", encoding="utf-8")

        def trace_writer(record: dict) -> None:
            trace_handle.write(json.dumps(record, sort_keys=True) + "\n")

    try:
        result = train(graph, roster, cfg.train, checkpoint_dir, trace_writer)
    finally:
        if trace_handle is not None:
            trace_handle.close()

    curves_path = cfg.out_dir / "curves.csv"
    curves_path.write_text(
        curves_to_csv(result.curves, [a.id for a in roster]), encoding="utf-8"
    )
    manifest = {
        "command": "train",
        "mode": cfg.mode,
        "bundle": str(bundle),
        "seed": cfg.train.seed,
        "config": cfg.train.to_dict(),
        "homes": {role.value: pid for role, pid in (cfg.homes or {}).items()},
    }
    (cfg.out_dir / "run_manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=1) + "\n", encoding="utf-8"
    )
    print(f"episodes: {len(result.curves)}")
    print(f"checkpoint: {checkpoint_dir}")
    print(f"curves: {curves_path}")
    return 0


def _plan_csv(assignment: dict[int, LandUse]) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["id", "assigned_land_use"])
    for pid in sorted(assignment):
        writer.writerow([pid, assignment[pid].value])
    return out.getvalue()


def cmd_compare(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    bundle = Path(args.bundle) if args.bundle else cfg.bundle_dir
    if bundle is None:
        raise ConfigurationError("compare needs a graph bundle (--bundle or [paths] bundle)")
    graph = load_bundle(bundle)
    roster = cfg.roster(graph)
    methods = [BaselineKind.from_code(m) for m in cfg.methods]

    policies_by_kind = {}
    for kind, path in (
        (BaselineKind.MARL, cfg.checkpoint),
        (BaselineKind.DTP, cfg.dtp_checkpoint),
    ):
        if kind in methods:
            if path is None:
                raise ConfigurationError(
                    f"method {kind.value} needs a trained checkpoint "
                    f"([paths] {'checkpoint' if kind is BaselineKind.MARL else 'dtp_checkpoint'})"
                )
            policies_by_kind[kind] = load_policies(path)

    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    reports = {}
    per_seed_lines = [
        "method,seed,global_reward,equity_reward,sustainability,diversity"
    ]
    for kind in methods:
        method_reports = []
        for seed in cfg.compare_seeds:
            outcome = run_baseline(
                kind,
                graph,
                roster,
                seed,
                weights=cfg.train.weights,
                target_uses=cfg.train.target_uses,
                policies=policies_by_kind.get(kind),
            )
            report = evaluate_plan(graph, outcome, cfg.train.weights, cfg.train.target_uses)
            method_reports.append(report)
            per_seed_lines.append(
                f"{kind.value},{seed},{report.global_reward!r},"
                f"{report.equity_reward!r},{report.sustainability!r},{report.diversity!r}"
            )
            if seed == cfg.compare_seeds[0]:
                (cfg.out_dir / f"plan_{kind.value}.csv").write_text(
                    _plan_csv(outcome.assignment), encoding="utf-8"
                )
                (cfg.out_dir / f"plan_{kind.value}.geojson").write_text(
                    json.dumps(to_geojson(graph, outcome.assignment), sort_keys=True)
                    + "\n",
                    encoding="utf-8",
                )
        reports[kind] = method_reports

    rows = comparison_rows(graph, reports, cfg.train.target_uses)
    (cfg.out_dir / "comparison.csv").write_text(comparison_csv(rows), encoding="utf-8")
    (cfg.out_dir / "comparison_per_seed.csv").write_text(
        "\n".join(per_seed_lines) + "\n", encoding="utf-8"
    )
    print(comparison_text(rows), end="")
    print(f"out: {cfg.out_dir}")
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    bundle = Path(args.bundle) if args.bundle else cfg.bundle_dir
    if bundle is None:
        raise ConfigurationError("evaluate needs a graph bundle (--bundle or [paths] bundle)")
    graph = load_bundle(bundle)
    plan_path = Path(args.plan)
    assignment: dict[int, LandUse] = {}
    reader = csv.reader(io.StringIO(plan_path.read_text(encoding="utf-8")))
    header = next(reader, None)
    if header != ["id", "assigned_land_use"]:
        raise ParseError(f"bad plan header {header!r}")
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 2:
            raise ParseError(f"line {lineno}: wrong number of fields")
        try:
            assignment[int(row[0])] = LandUse.from_code(row[1].strip())
        except ValueError as exc:
            raise ParseError(f"line {lineno}: {exc}") from None

    readjustable = {pid for pid, p in graph.parcels.items() if p.readjustable}
    missing = readjustable - set(assignment)
    if missing:
        raise ValidationError(
            f"plan leaves readjustable parcels unassigned: {sorted(missing)}"
        )
    final = apply_assignment(graph, assignment)
    result = {
        "global_reward": global_reward(final, cfg.train.target_uses),
        "sustainability": sustainability(final),
        "diversity": diversity_score(final),
        "global_reward_delta": global_reward(final, cfg.train.target_uses)
        - global_reward(graph, cfg.train.target_uses),
        "sustainability_delta": sustainability(final) - sustainability(graph),
        "diversity_delta": diversity_score(final) - diversity_score(graph),
    }
    print(json.dumps(result, sort_keys=True, indent=1))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="parcelplan",
        description="Participatory land-use readjustment: simulate, train, compare.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="INI run configuration file")
        p.add_argument("--seed", type=int, help="override the run seed")
        p.add_argument("--out", help="output directory")
        p.add_argument("--k", type=int, help="KNN neighbor count")
        p.add_argument("--radius-m", type=float, dest="radius_m", help="walkability radius")
        p.add_argument("--epochs", type=int, help="training epochs")
        p.add_argument("--methods", help="comma-separated methods for compare")

    p_ingest = sub.add_parser("ingest", help="parse parcels and build the KNN graph bundle")
    common(p_ingest)
    p_ingest.add_argument("--parcels", help="parcel CSV path")
    p_ingest.set_defaults(fn=cmd_ingest)

    p_synth = sub.add_parser("synth", help="generate a synthetic grid district CSV")
    common(p_synth)
    p_synth.set_defaults(fn=cmd_synth)

    p_train = sub.add_parser("train", help="train consensus policies on a graph bundle")
    common(p_train)
    p_train.add_argument("--bundle", help="graph bundle directory")
    p_train.add_argument("--trace", action="store_true", help="write episode JSONL traces")
    p_train.set_defaults(fn=cmd_train)

    p_compare = sub.add_parser("compare", help="run baseline methods and tabulate metrics")
    common(p_compare)
    p_compare.add_argument("--bundle", help="graph bundle directory")
    p_compare.set_defaults(fn=cmd_compare)

    p_eval = sub.add_parser("evaluate", help="score a plan CSV against a bundle")
    common(p_eval)
    p_eval.add_argument("--bundle", help="graph bundle directory")
    p_eval.add_argument("--plan", required=True, help="plan CSV (id,assigned_land_use)")
    p_eval.set_defaults(fn=cmd_evaluate)
    return parser


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ParcelPlanError as exc:
        print(f"error:{exc.code}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error:io: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
