"""
Command-line entry point: ``race run``, ``race tournament`` and ``race line``.

Exit codes: 0 on success, 2 on configuration errors, 3 when a race aborts.
The log level is taken from the ``RACE_LOG`` environment variable.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Sequence

from .controllers import audit_racing_line, compute_racing_line
from .harness import (
    ConfigError,
    Pairing,
    RaceAborted,
    RaceConfig,
    _load_env,
    aggregate,
    export,
    render_trace_svg,
    resolve_data,
    run_race,
    run_tournament,
    spec_from_dict,
)
from .track import load_track
from .vehicle import load_vehicle

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ABORTED = 3

log = logging.getLogger("teamrace")


def _setup_logging() -> None:
    level = os.environ.get("RACE_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="race", description="Deterministic 2v2 team racing simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a single race")
    run.add_argument("--track", default="oval", help="track JSON file or bundled name")
    run.add_argument("--vehicle", default="kart", help="vehicle JSON file or bundled name")
    run.add_argument("--team-a", default="mcts-lqng", help="controller kind for team A")
    run.add_argument("--team-b", default="fixed-lqng", help="controller kind for team B")
    run.add_argument("--grid", type=int, default=1, help="grid permutation id 1..6")
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--max-time", type=float, default=180.0)
    run.add_argument("--trace", type=Path, help="write the canonical trace here")
    run.add_argument("--svg", type=Path, help="render the race to an SVG file")

    tour = sub.add_parser("tournament", help="run a seeded tournament")
    tour.add_argument("--config", type=Path, help="JSON tournament configuration")
    tour.add_argument("--races", type=int, default=48)
    tour.add_argument("--out", type=Path, required=True)
    tour.add_argument("--format", choices=("csv", "json"), default="csv")
    tour.add_argument("--jobs", type=int, default=1)

    line = sub.add_parser("line", help="compute the offline racing line")
    line.add_argument("--track", default="oval")
    line.add_argument("--vehicle", default="kart")
    line.add_argument("--out", type=Path, required=True)
    return parser


def _load_tournament_config(path: Path | None) -> dict:
    """Tournament settings; pairings default to MCTS-LQNG vs Fixed-LQNG on the oval."""
    cfg: dict = {}
    if path is not None:
        try:
            cfg = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read tournament config {path}: {exc}") from exc
        if not isinstance(cfg, dict):
            raise ConfigError("tournament config must be a JSON object")
    return cfg


def _pairings(cfg: dict) -> list[Pairing]:
    raw = cfg.get("pairings")
    if raw is None:
        raw = [{"team_a": cfg.get("team_a", "mcts-lqng"), "team_b": cfg.get("team_b", "fixed-lqng")}]
    out = []
    for i, p in enumerate(raw):
        if not isinstance(p, dict) or "team_a" not in p or "team_b" not in p:
            raise ConfigError(f"pairing {i} needs team_a and team_b")
        a, b = spec_from_dict(p["team_a"]), spec_from_dict(p["team_b"])
        out.append(Pairing(p.get("name", f"{a.kind.value}_vs_{b.kind.value}"), a, b))
    return out


def cmd_run(args: argparse.Namespace) -> int:
    config = RaceConfig(
        track=args.track,
        vehicle=args.vehicle,
        team_a=spec_from_dict(args.team_a),
        team_b=spec_from_dict(args.team_b),
        grid_id=args.grid,
        seed=args.seed,
        max_time=args.max_time,
    )
    result, trace = run_race(config)
    if args.trace:
        trace.write(args.trace)
    if args.svg:
        track, _, _ = _load_env(args.track, args.vehicle)
        render_trace_svg(trace, track, args.svg)
    summary = {
        "finish_order": result.finish_order,
        "finish_times": result.finish_times,
        "teams": result.teams,
        "points": result.score.team_points,
        "winner_team": result.winner_team(),
        "violations": result.violations,
        "trace_sha256": result.trace_hash,
    }
    print(json.dumps(summary, indent=1, sort_keys=True))
    return EXIT_OK


def cmd_tournament(args: argparse.Namespace) -> int:
    cfg = _load_tournament_config(args.config)
    if args.jobs < 1:
        raise ConfigError("--jobs must be at least 1")
    rows = run_tournament(
        _pairings(cfg),
        races=args.races,
        base_seed=int(cfg.get("seed", 0)),
        track=cfg.get("track", "oval"),
        vehicle=cfg.get("vehicle", "kart"),
        jobs=args.jobs,
        max_time=float(cfg.get("max_time", 180.0)),
    )
    export(rows, args.out, args.format)
    print(json.dumps(aggregate(rows), indent=1, sort_keys=True))
    return EXIT_OK


def cmd_line(args: argparse.Namespace) -> int:
    try:
        track = load_track(resolve_data(args.track, "track"))
        vehicle = load_vehicle(resolve_data(args.vehicle, "vehicle"))
    except (ValueError, KeyError, OSError) as exc:
        raise ConfigError(str(exc)) from exc
    line = compute_racing_line(track, vehicle)
    problems = audit_racing_line(line, track, vehicle)
    if problems:
        raise ConfigError("racing line failed its audit: " + "; ".join(problems))
    args.out.write_text(json.dumps(line.to_dict(), indent=1), encoding="utf-8")
    print(f"racing line: {line.total_time:.3f} s, {line.lane_changes} lane changes -> {args.out}")
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    handlers = {"run": cmd_run, "tournament": cmd_tournament, "line": cmd_line}
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RaceAborted as exc:
        print(f"race aborted: {exc}", file=sys.stderr)
        return EXIT_ABORTED


if __name__ == "__main__":
    sys.exit(main())
