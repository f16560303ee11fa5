"""
Deterministic 2v2 races and tournaments.

A race advances all players in fixed steps.  Every controller sees the same
pre-tick snapshot, then the dynamics, contact resolution, bookkeeping and
rule audit run in player-id order.
"""

from __future__ import annotations

import csv
import hashlib
import itertools
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Any, Mapping, Sequence

from . import rewards as rw
from .controllers import (
    Controller,
    ControllerContext,
    ControllerKind,
    ControllerSpec,
    DeviationAccumulator,
    PlannerSchedule,
    RacingLine,
    load_or_compute_racing_line,
)
from .discrete_game import GameConfig
from .lqng import LqngWeights
from .mcts import MctsParams, WorldSnapshot
from .rules import (
    COLLISION,
    ILLEGAL_LANE_CHANGE,
    OFF_TRACK,
    RuleAuditor,
    RuleParams,
    TeamScore,
    score_finish,
    update_lane_change_count,
)
from .track import TrackModel, load_track
from .vehicle import DT, ContinuousState, VehicleParams, load_vehicle, step

log = logging.getLogger(__name__)

TEAM_A, TEAM_B = "A", "B"
GRID_STAGGER = 10.0
GRID_PERMUTATIONS = tuple(itertools.combinations(range(4), 2))  # team A's slots, ids 1..6
LANE_HYSTERESIS = 0.2  # metres past a lane boundary before the lane id changes


class ConfigError(ValueError):
    """Invalid race or tournament configuration."""


class RaceAborted(RuntimeError):
    """A controller failed; the race is not scored."""


# ------------------------------------------------------------------ config


def resolve_data(name: str, kind: str) -> Path:
    """A file path, or the name of a bundled track/vehicle (e.g. ``oval``, ``kart``)."""
    p = Path(name)
    if p.exists():
        return p
    bundled = resources.files("teamrace") / "data" / f"{name}.json"
    if bundled.is_file():
        return Path(str(bundled))
    raise ConfigError(f"{kind} file not found: {name}")


@lru_cache(maxsize=8)
def _load_env(track: str, vehicle: str) -> tuple[TrackModel, VehicleParams, RacingLine]:
    try:
        tr = load_track(resolve_data(track, "track"))
        veh = load_vehicle(resolve_data(vehicle, "vehicle"))
    except ConfigError:
        raise
    except (ValueError, KeyError, OSError) as exc:
        raise ConfigError(str(exc)) from exc
    return tr, veh, load_or_compute_racing_line(tr, veh)


@dataclass(frozen=True)
class RaceConfig:
    track: str = "oval"
    vehicle: str = "kart"
    team_a: ControllerSpec = field(default_factory=lambda: ControllerSpec.default(ControllerKind.MCTS_LQNG))
    team_b: ControllerSpec = field(default_factory=lambda: ControllerSpec.default(ControllerKind.FIXED_LQNG))
    grid_id: int = 1
    seed: int = 0
    max_time: float = 180.0
    dt: float = DT
    zeta: float = 1.0
    schedule: PlannerSchedule = field(default_factory=PlannerSchedule)
    record_rewards: bool = False
    record_states: bool = True

    def __post_init__(self) -> None:
        if not 1 <= self.grid_id <= len(GRID_PERMUTATIONS):
            raise ConfigError(f"grid_id must be in 1..{len(GRID_PERMUTATIONS)}")
        if self.max_time <= 0:
            raise ConfigError("max_time must be positive")
        if self.dt <= 0:
            raise ConfigError("dt must be positive")

    def to_dict(self) -> dict:
        return _jsonable(asdict(self))

    def digest(self) -> str:
        return hashlib.sha256(_canonical(self.to_dict())).hexdigest()


def _jsonable(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if hasattr(obj, "value") and isinstance(obj, ControllerKind):
        return obj.value
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


def _canonical(obj: Any) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()


def spec_from_dict(data: Mapping[str, Any] | str) -> ControllerSpec:
    """Controller spec from a kind name or ``{"kind": ..., "mcts": {...}, "weights": {...}}``."""
    if isinstance(data, str):
        data = {"kind": data}
    data = dict(data)
    try:
        kind = ControllerKind.parse(data.pop("kind"))
        base = ControllerSpec.default(kind)
        mcts = base.mcts
        weights = base.weights
        if "mcts" in data:
            mcts = replace(mcts or MctsParams(), **data.pop("mcts"))
        if "weights" in data:
            weights = replace(weights or LqngWeights(), **data.pop("weights"))
        lookahead = data.pop("lookahead", base.lookahead)
        if data:
            raise ConfigError(f"unknown controller keys: {sorted(data)}")
        return ControllerSpec(kind, mcts=mcts, weights=weights, lookahead=lookahead)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad controller spec: {exc}") from exc


# -------------------------------------------------------------------- grid


def grid_lanes(track: TrackModel) -> tuple[int, int]:
    if track.lanes < 2:
        raise ConfigError("starting grid needs at least 2 lanes")
    lo = track.lanes // 2
    return (lo, lo + 1) if track.lanes > 2 else (1, 2)


def make_grid(permutation_id: int, track: TrackModel) -> tuple[dict[int, ContinuousState], dict[int, str]]:
    """Start states for slots 1..4 and the team owning each slot.

    Slots 1-2 are the front row (s = 10 m), 3-4 the rear row (s = 0); the
    permutation id picks team A's two slots in lexicographic order, so id 1
    puts team A on the front row.
    """
    if not 1 <= permutation_id <= len(GRID_PERMUTATIONS):
        raise ConfigError(f"grid permutation id must be in 1..{len(GRID_PERMUTATIONS)}")
    lanes = grid_lanes(track)
    a_slots = GRID_PERMUTATIONS[permutation_id - 1]
    states, teams = {}, {}
    for slot in range(4):
        pid = slot + 1
        s = GRID_STAGGER if slot < 2 else 0.0
        lane = lanes[slot % 2]
        x, y, h = track.pose_at(s, track.lane_offset(lane))
        r = track.checkpoint_for_progress(s)
        sec = track.section_of((x, y))
        states[pid] = ContinuousState(x, y, 0.0, h, last_checkpoint=r, section=sec, lane=lane)
        teams[pid] = TEAM_A if slot in a_slots else TEAM_B
    return states, teams


# ----------------------------------------------------------------- results


@dataclass
class RaceResult:
    finish_order: list[int]
    finish_times: dict[int, float | None]
    dnf: dict[int, bool]
    teams: dict[int, str]
    score: TeamScore
    violations: dict[int, dict[str, int]]
    deviation: dict[int, tuple[float, float]]
    seed: int
    grid_id: int
    trace_hash: str = ""

    def team_members(self, team: str) -> list[int]:
        return sorted(p for p, t in self.teams.items() if t == team)

    def winner_team(self) -> str:
        return "" if self.score.winner is None else self.teams[self.score.winner]

    def team_total(self, team: str, kind: str) -> int:
        return sum(self.violations[p].get(kind, 0) for p in self.team_members(team))

    def team_deviation(self, team: str) -> tuple[float, float]:
        vals = [self.deviation[p] for p in self.team_members(team)]
        return (sum(v[0] for v in vals) / len(vals), sum(v[1] for v in vals) / len(vals))


@dataclass
class Trace:
    header: dict
    ticks: list = field(default_factory=list)
    events: list = field(default_factory=list)
    plans: list = field(default_factory=list)
    crossings: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "header": self.header,
            "ticks": self.ticks,
            "events": self.events,
            "plans": self.plans,
            "crossings": self.crossings,
        }

    def to_bytes(self) -> bytes:
        return _canonical(self.to_dict())

    def digest(self) -> str:
        return hashlib.sha256(self.to_bytes()).hexdigest()

    def write(self, path: str | Path) -> None:
        Path(path).write_bytes(self.to_bytes())


def _r(x: float) -> float:
    return round(x, 6)


# -------------------------------------------------------------- race loop


def _resolve_contacts(states: dict[int, ContinuousState], order: Sequence[int], radius: float, v_max: float) -> None:
    """Separate overlapping discs and remove approaching normal velocity (inelastic)."""
    for a, b in itertools.combinations(order, 2):
        sa, sb = states[a], states[b]
        dx, dy = sb.x - sa.x, sb.y - sa.y
        d = math.hypot(dx, dy)
        if d >= 2.0 * radius:
            continue
        if d < 1e-9:
            nx, ny = math.cos(sa.theta), math.sin(sa.theta)
        else:
            nx, ny = dx / d, dy / d
        push = (2.0 * radius - d) / 2.0
        ha = (math.cos(sa.theta), math.sin(sa.theta))
        hb = (math.cos(sb.theta), math.sin(sb.theta))
        va = (sa.v * ha[0], sa.v * ha[1])
        vb = (sb.v * hb[0], sb.v * hb[1])
        rel = (vb[0] - va[0]) * nx + (vb[1] - va[1]) * ny
        if rel < 0.0:
            j = rel / 2.0
            va = (va[0] + j * nx, va[1] + j * ny)
            vb = (vb[0] - j * nx, vb[1] - j * ny)
        new_va = min(max(va[0] * ha[0] + va[1] * ha[1], 0.0), v_max)
        new_vb = min(max(vb[0] * hb[0] + vb[1] * hb[1], 0.0), v_max)
        states[a] = replace(sa, x=sa.x - push * nx, y=sa.y - push * ny, v=new_va)
        states[b] = replace(sb, x=sb.x + push * nx, y=sb.y + push * ny, v=new_vb)


def _lane_with_hysteresis(track: TrackModel, offset: float, prev_lane: int | None) -> int:
    nearest = track.lane_for_offset(offset)
    if prev_lane is None or nearest == prev_lane:
        return nearest
    if abs(offset - track.lane_offset(prev_lane)) > track.lane_width / 2.0 + LANE_HYSTERESIS:
        return nearest
    return prev_lane


def _unwrapped_progress(track: TrackModel, st: ContinuousState) -> float:
    s = track.project(st.pos).s
    if track.closed and s < st.last_checkpoint * track.spacing - track.total_length / 2.0:
        s += track.total_length
    return s


def run_race(config: RaceConfig) -> tuple[RaceResult, Trace]:
    track, vehicle, line = _load_env(config.track, config.vehicle)
    states, teams = make_grid(config.grid_id, track)
    pids = sorted(states)
    game = GameConfig(track, vehicle, dict(teams), zeta=config.zeta)
    specs = {pid: (config.team_a if teams[pid] == TEAM_A else config.team_b) for pid in pids}
    controllers = {
        pid: Controller(
            pid,
            specs[pid],
            ControllerContext(track, vehicle, line, game, config.schedule, config.seed),
        )
        for pid in pids
    }
    rule_params = RuleParams.defaults_for(vehicle.vehicle_radius, track.spec.lane_change_limit)
    auditor = RuleAuditor(track, rule_params, vehicle.vehicle_radius)
    trace = Trace(header={"config": config.to_dict(), "config_hash": config.digest(), "teams": teams})
    logs: dict[int, dict[int, float]] = {pid: {states[pid].last_checkpoint: 0.0} for pid in pids}
    finish: dict[int, tuple[float, float]] = {}
    deviation = {pid: DeviationAccumulator() for pid in pids}
    reward_weights = rw.RewardWeights()
    walls = track.boundary_pieces() if config.record_rewards else None
    active = list(pids)
    n_ticks = int(math.floor(config.max_time / config.dt + 1e-9))
    tick = 0
    while active and tick < n_ticks:
        t = round(tick * config.dt, 9)
        snapshot = WorldSnapshot(
            t,
            {pid: states[pid] for pid in active},
            {pid: dict(logs[pid]) for pid in active},
            {pid: teams[pid] for pid in active},
        )
        controls = {}
        for pid in active:
            try:
                controls[pid] = controllers[pid].step(snapshot, tick)
            except Exception as exc:  # noqa: BLE001 - abort with a diagnostic
                raise RaceAborted(f"controller for player {pid} failed at tick {tick}: {exc!r}") from exc
            ctrl = controllers[pid]
            if ctrl.plan is not None and ctrl.plan_tick == tick:
                trace.plans.append(
                    [tick, pid, [[w.checkpoint, w.lane, w.velocity, int(w.searched)] for w in ctrl.plan.waypoints]]
                )
        prev = {pid: states[pid] for pid in active}
        new = {pid: step(states[pid], controls[pid], config.dt, vehicle) for pid in active}
        _resolve_contacts(new, active, vehicle.vehicle_radius, vehicle.v_max)
        t_next = round((tick + 1) * config.dt, 9)
        crossings: list[tuple[int, int, float]] = []
        for pid in active:
            st = new[pid]
            proj = track.project(st.pos)
            r_old = prev[pid].last_checkpoint
            r_new = track.last_checkpoint(st.pos, r_old)
            lane = _lane_with_hysteresis(track, proj.offset, prev[pid].lane)
            st = replace(st, last_checkpoint=r_new, section=track.section_of(st.pos), lane=lane)
            st = replace(st, lane_change_count=update_lane_change_count(prev[pid], st, track))
            new[pid] = st
            for k in range(r_old + 1, r_new + 1):
                logs[pid][k] = t_next
                over = _unwrapped_progress(track, st) - track.gate(k).s
                crossings.append((pid, k, over))
        auditor.audit(t_next, prev, new, active)
        states.update(new)
        for pid, k, over in crossings:
            st = states[pid]
            wp = controllers[pid].planned_waypoint(k)
            rec = {"tick": tick + 1, "pid": pid, "k": k, "x": _r(st.x), "y": _r(st.y), "v": _r(st.v)}
            if wp is not None:
                deviation[pid].add(st.pos, st.v, wp)
                rec.update(wx=_r(wp.position[0]), wy=_r(wp.position[1]), wv=_r(wp.velocity), lane=wp.lane)
            if config.record_rewards:
                rank = 1 + sum(1 for q in pids if q != pid and k in logs[q] and logs[q][k] < t_next)
                target = None if wp is None else (wp.lane, wp.position, wp.velocity)
                cr = rw.checkpoint_rewards(
                    min(rank, 4), t_next, config.max_time, st.lane, st.pos, st.v, target, k, k - 1, reward_weights
                )
                rec["reward"] = _r(cr.total)
            trace.crossings.append(rec)
            if k == track.tau and pid not in finish:
                finish[pid] = (t_next, over)
        tick_rec: list[Any] = [_r(t_next)]
        if config.record_states:
            tick_rec.append([[pid, _r(states[pid].x), _r(states[pid].y), _r(states[pid].v), _r(states[pid].theta)] for pid in active])
            tick_rec.append([[pid, _r(controls[pid].accel), _r(controls[pid].yaw_rate)] for pid in active])
        if config.record_rewards:
            step_vals = []
            for pid in active:
                others = [states[q] for q in active if q != pid]
                scan = rw.lidar_scan(states[pid], others, track, vehicle.vehicle_radius, walls)
                sr = rw.step_rewards(states[pid], scan, reward_weights, track, vehicle.v_max)
                step_vals.append([pid, _r(sr.total)])
            tick_rec.append(step_vals)
        trace.ticks.append(tick_rec)
        active = [pid for pid in active if pid not in finish]
        tick += 1

    order_finished = sorted(finish, key=lambda p: (finish[p][0], -finish[p][1], p))
    unfinished = sorted(
        (p for p in pids if p not in finish),
        key=lambda p: (-states[p].last_checkpoint, -_unwrapped_progress(track, states[p]), p),
    )
    order = order_finished + unfinished
    finished = {p: p in finish for p in pids}
    team_map = {TEAM_A: [p for p in pids if teams[p] == TEAM_A], TEAM_B: [p for p in pids if teams[p] == TEAM_B]}
    score = score_finish(order, finished, team_map)
    counts = auditor.log.counts()
    violations = {p: {k: int(counts.get(p, {}).get(k, 0)) for k in (COLLISION, ILLEGAL_LANE_CHANGE, OFF_TRACK)} for p in pids}
    trace.events = [[e.time, list(e.players), e.kind] for e in auditor.log.events]
    result = RaceResult(
        finish_order=order,
        finish_times={p: (finish[p][0] if p in finish else None) for p in pids},
        dnf={p: not finished[p] for p in pids},
        teams=dict(teams),
        score=score,
        violations=violations,
        deviation={p: deviation[p].means() for p in pids},
        seed=config.seed,
        grid_id=config.grid_id,
    )
    trace.header["result"] = {
        "finish_order": order,
        "finish_times": {str(p): result.finish_times[p] for p in pids},
        "points": {str(p): score.points[p] for p in pids},
    }
    result.trace_hash = trace.digest()
    return result, trace


# -------------------------------------------------------------- tournament

CSV_COLUMNS = [
    "pairing",
    "seed",
    "grid_id",
    "winner_team",
    "points_A",
    "points_B",
    "collisions_at_fault_A",
    "collisions_at_fault_B",
    "illegal_lane_changes_A",
    "illegal_lane_changes_B",
    "safety_A",
    "safety_B",
    "lane_dist_A",
    "lane_dist_B",
    "vel_diff_A",
    "vel_diff_B",
]


@dataclass(frozen=True)
class Pairing:
    name: str
    team_a: ControllerSpec
    team_b: ControllerSpec


def race_row(pairing: str, result: RaceResult) -> dict:
    row: dict[str, Any] = {"pairing": pairing, "seed": result.seed, "grid_id": result.grid_id, "winner_team": result.winner_team()}
    for team in (TEAM_A, TEAM_B):
        coll = result.team_total(team, COLLISION)
        ill = result.team_total(team, ILLEGAL_LANE_CHANGE)
        lane_d, vel_d = result.team_deviation(team)
        row[f"points_{team}"] = result.score.team_points[team]
        row[f"collisions_at_fault_{team}"] = coll
        row[f"illegal_lane_changes_{team}"] = ill
        row[f"safety_{team}"] = coll + ill
        row[f"lane_dist_{team}"] = round(lane_d, 6)
        row[f"vel_diff_{team}"] = round(vel_d, 6)
    return {c: row[c] for c in CSV_COLUMNS}


def tournament_schedule(races: int, base_seed: int = 0) -> list[tuple[int, int]]:
    """(grid_id, seed) per race; grid ids rotate so each permutation gets races/6 races."""
    if races % len(GRID_PERMUTATIONS):
        raise ConfigError(f"races per pairing must be a multiple of {len(GRID_PERMUTATIONS)}")
    return [(i % len(GRID_PERMUTATIONS) + 1, base_seed + i) for i in range(races)]


def _run_job(cfg: RaceConfig) -> RaceResult:
    result, _ = run_race(cfg)
    return result


def run_races(configs: Sequence[RaceConfig], jobs: int = 1) -> list[RaceResult]:
    """Run races in order, optionally across worker processes; results keep input order."""
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_run_job, configs))
    return [_run_job(c) for c in configs]


def run_tournament(
    pairings: Sequence[Pairing],
    races: int = 48,
    base_seed: int = 0,
    track: str = "oval",
    vehicle: str = "kart",
    jobs: int = 1,
    max_time: float = 180.0,
) -> list[dict]:
    """Run every pairing over the grid rotation; returns one row per race."""
    schedule = tournament_schedule(races, base_seed)
    work = [
        (
            p.name,
            RaceConfig(
                track=track,
                vehicle=vehicle,
                team_a=p.team_a,
                team_b=p.team_b,
                grid_id=g,
                seed=s,
                max_time=max_time,
                record_states=False,
            ),
        )
        for p in pairings
        for g, s in schedule
    ]
    results = run_races([cfg for _, cfg in work], jobs)
    rows = [race_row(name, res) for (name, _), res in zip(work, results)]
    rows.sort(key=lambda r: (r["pairing"], r["seed"], r["grid_id"]))
    return rows


def aggregate(rows: Sequence[Mapping]) -> dict[str, dict]:
    """Per-pairing wins, average points, violation rates, safety score and deviations."""
    out: dict[str, dict] = {}
    for name in sorted({r["pairing"] for r in rows}):
        sub = [r for r in rows if r["pairing"] == name]
        n = len(sub)
        agg: dict[str, Any] = {"races": n}
        for team in (TEAM_A, TEAM_B):
            coll = sum(r[f"collisions_at_fault_{team}"] for r in sub) / n
            ill = sum(r[f"illegal_lane_changes_{team}"] for r in sub) / n
            agg[team] = {
                "wins": sum(1 for r in sub if r["winner_team"] == team),
                "total_points": sum(r[f"points_{team}"] for r in sub),
                "avg_points": sum(r[f"points_{team}"] for r in sub) / n,
                "avg_collisions_at_fault": coll,
                "avg_illegal_lane_changes": ill,
                "safety_score": coll + ill,
                "avg_lane_dist": sum(r[f"lane_dist_{team}"] for r in sub) / n,
                "avg_vel_diff": sum(r[f"vel_diff_{team}"] for r in sub) / n,
            }
        out[name] = agg
    return out


def export(rows: Sequence[Mapping], path: str | Path, fmt: str = "csv") -> None:
    path = Path(path)
    try:
        if fmt == "csv":
            with open(path, "w", newline="", encoding="utf-8") as f:
                writer = csv.DictWriter(f, fieldnames=CSV_COLUMNS)
                writer.writeheader()
                for r in rows:
                    writer.writerow({c: r[c] for c in CSV_COLUMNS})
        elif fmt == "json":
            with open(path, "w", encoding="utf-8") as f:
                json.dump({"rows": [{c: r[c] for c in CSV_COLUMNS} for r in rows], "aggregate": aggregate(rows)}, f, indent=1, sort_keys=True)
        else:
            raise ConfigError(f"unknown export format {fmt!r}")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def load_rows(path: str | Path) -> list[dict]:
    path = Path(path)
    if path.suffix == ".json":
        with open(path, encoding="utf-8") as f:
            return json.load(f)["rows"]
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.DictReader(f))
    ints = {"seed", "grid_id"} | {c for c in CSV_COLUMNS if c.startswith(("collisions", "illegal", "safety"))}
    out = []
    for r in rows:
        conv: dict[str, Any] = {}
        for c in CSV_COLUMNS:
            v = r[c]
            if c in ("pairing", "winner_team"):
                conv[c] = v
            elif c in ints:
                conv[c] = int(v)
            else:
                conv[c] = float(v)
        out.append(conv)
    return out


# --------------------------------------------------------------------- svg


def _sample_piece(piece: tuple[str, tuple], n: int = 24) -> list[tuple[float, float]]:
    typ, geo = piece
    if typ == "line":
        return [(geo[0], geo[1]), (geo[2], geo[3])]
    cx, cy, r, start, sweep = geo
    return [(cx + r * math.cos(start + sweep * i / n), cy + r * math.sin(start + sweep * i / n)) for i in range(n + 1)]


_COLORS = {1: "#d62728", 2: "#1f77b4", 3: "#2ca02c", 4: "#ff7f0e"}


def render_trace_svg(trace: Trace, track: TrackModel, path: str | Path | None = None) -> str:
    """SVG with walls, lane centres, one polyline per player (one point per tick) and plan markers."""
    if not trace.ticks or len(trace.ticks[0]) < 2:
        raise ValueError("trace has no recorded states")
    walls = [_sample_piece(p) for p in track.boundary_pieces()]
    lanes = []
    for lane in range(1, track.lanes + 1):
        off = track.lane_offset(lane)
        n = max(int(track.total_length / 2.0), 2)
        lanes.append([track.point_at(track.total_length * i / n, off) for i in range(n + 1)])
    paths: dict[int, list[tuple[float, float]]] = {}
    last: dict[int, tuple[float, float]] = {}
    for rec in trace.ticks:
        present = {row[0]: (row[1], row[2]) for row in rec[1]}
        last.update(present)
        for pid in last:
            paths.setdefault(pid, []).append(last[pid])
    pts = [p for w in walls for p in w]
    xs, ys = [p[0] for p in pts], [p[1] for p in pts]
    pad = 5.0
    x0, y0 = min(xs) - pad, min(ys) - pad
    w, h = max(xs) - x0 + pad, max(ys) - y0 + pad

    def fmt(seq):
        return " ".join(f"{x - x0:.2f},{h - (y - y0):.2f}" for x, y in seq)

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w:.1f}" height="{h:.1f}" viewBox="0 0 {w:.1f} {h:.1f}">']
    parts.append(f'<rect width="{w:.1f}" height="{h:.1f}" fill="white"/>')
    for wall in walls:
        parts.append(f'<polyline class="wall" points="{fmt(wall)}" fill="none" stroke="black" stroke-width="0.4"/>')
    for lane in lanes:
        parts.append(f'<polyline class="lane" points="{fmt(lane)}" fill="none" stroke="#bbbbbb" stroke-width="0.15" stroke-dasharray="1,1"/>')
    for pid in sorted(paths):
        color = _COLORS.get(pid, "#555555")
        parts.append(f'<polyline class="player" data-player="{pid}" points="{fmt(paths[pid])}" fill="none" stroke="{color}" stroke-width="0.3"/>')
    for tick, pid, wps in trace.plans:
        color = _COLORS.get(pid, "#555555")
        for k, lane, _v, _s in wps:
            x, y = track.gate(k).lane_positions[lane - 1]
            parts.append(f'<circle class="waypoint" cx="{x - x0:.2f}" cy="{h - (y - y0):.2f}" r="0.35" fill="{color}" fill-opacity="0.4"/>')
    parts.append("</svg>")
    svg = "\n".join(parts)
    if path is not None:
        Path(path).write_text(svg, encoding="utf-8")
    return svg
