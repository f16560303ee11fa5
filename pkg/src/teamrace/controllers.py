"""
Racing agents: hierarchical MCTS-LQNG, racing-line LQNG and a pure-pursuit
baseline, plus the offline racing-line computation.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import lqng
from .discrete_game import (
    ActionOutcome,
    GameState,
    DiscreteState,
    GameConfig,
    Transition,
    _base_outcomes,
    apply_action,
    audit_transitions,
    bucket_mid,
)
from .mcts import DefaultPolicy, MctsParams, Plan, PlanWaypoint, WorldSnapshot, plan as mcts_plan
from .track import TrackModel
from .vehicle import ContinuousState, ControlInput, VehicleParams, clamp_control


class ControllerKind(str, Enum):
    MCTS_LQNG = "mcts-lqng"
    FIXED_LQNG = "fixed-lqng"
    SCRIPTED_PURSUIT = "pursuit"

    @classmethod
    def parse(cls, text: str) -> "ControllerKind":
        norm = text.strip().lower().replace("_", "-")
        for kind in cls:
            if norm in (kind.value, kind.name.lower().replace("_", "-")):
                return kind
        raise ValueError(f"unknown controller kind {text!r}")


@dataclass(frozen=True)
class PlannerSchedule:
    low_level_period: int = 1
    high_level_period: int = 50
    latency: int = 0  # ticks between snapshot and plan activation

    def __post_init__(self) -> None:
        if self.low_level_period < 1 or self.high_level_period < 1:
            raise ValueError("planner periods must be >= 1 tick")
        if not 0 <= self.latency < self.high_level_period:
            raise ValueError("latency must be in [0, high_level_period)")


# Search settings shipped with the MCTS-LQNG agent: rollouts follow the racing
# line most of the time and plans only trust well-sampled ego actions.
DEFAULT_MCTS = MctsParams(rollout="guided", guided_epsilon=0.1, min_visits=40)


@dataclass(frozen=True)
class ControllerSpec:
    kind: ControllerKind
    mcts: MctsParams | None = None
    weights: lqng.LqngWeights | None = None
    lookahead: float | None = None

    def __post_init__(self) -> None:
        if self.kind in (ControllerKind.MCTS_LQNG, ControllerKind.FIXED_LQNG) and self.weights is None:
            raise ValueError(f"{self.kind.value} needs LQNG weights")
        if self.kind is ControllerKind.MCTS_LQNG and self.mcts is None:
            raise ValueError("mcts-lqng needs MCTS parameters")
        if self.kind is ControllerKind.SCRIPTED_PURSUIT and (self.lookahead is None or self.lookahead <= 0):
            raise ValueError("pursuit needs a positive lookahead")

    @classmethod
    def default(cls, kind: ControllerKind | str) -> "ControllerSpec":
        kind = ControllerKind.parse(kind) if isinstance(kind, str) else kind
        if kind is ControllerKind.MCTS_LQNG:
            return cls(kind, mcts=DEFAULT_MCTS, weights=lqng.LqngWeights())
        if kind is ControllerKind.FIXED_LQNG:
            return cls(kind, weights=lqng.LqngWeights())
        return cls(kind, lookahead=8.0)


# -------------------------------------------------------------- racing line


@dataclass(frozen=True)
class RacingLine:
    """Lane and target speed at every checkpoint 0..tau (entry 0 is the start line)."""

    lanes: tuple[int, ...]
    buckets: tuple[int, ...]
    velocities: tuple[float, ...]
    total_time: float
    lane_changes: int
    track_digest: str = ""
    vehicle_digest: str = ""

    def waypoint(self, track: TrackModel, k: int) -> PlanWaypoint:
        k = min(max(k, 0), len(self.lanes) - 1)
        gate = track.gate(k)
        lane = self.lanes[k]
        return PlanWaypoint(k, lane, self.velocities[k], gate.lane_positions[lane - 1], gate.tangent_heading)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RacingLine":
        return cls(
            lanes=tuple(int(x) for x in data["lanes"]),
            buckets=tuple(int(x) for x in data["buckets"]),
            velocities=tuple(float(x) for x in data["velocities"]),
            total_time=float(data["total_time"]),
            lane_changes=int(data["lane_changes"]),
            track_digest=data.get("track_digest", ""),
            vehicle_digest=data.get("vehicle_digest", ""),
        )


def vehicle_digest(vehicle: VehicleParams) -> str:
    blob = json.dumps(vehicle.to_dict(), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _wear_bucket(e: float) -> int:
    return int(math.floor(e * 10 + 1e-9))


def racing_line_path(
    track: TrackModel, vehicle: VehicleParams, lane_change_limit: int | None = None
) -> tuple[list[DiscreteState], float, int]:
    """Shortest-time single-player path through the checkpoint graph.

    Returns the states at checkpoints 0..tau, the exact total time and the
    number of lane changes.

    Labels are keyed by (lane, velocity bucket, lane-change count, wear
    bucket) per checkpoint; within a key the faster label wins, ties going
    to fewer lane changes and then lower wear.
    """
    cfg = GameConfig(track, vehicle, {0: "solo"}, lane_change_limit=lane_change_limit)
    # label: (time, lane_changes, wear, state, parent_key)
    layer: dict[tuple, tuple] = {}
    for lane in range(1, track.lanes + 1):
        s = DiscreteState(0, 0, lane, 0, 0, 0.0, 0.0)
        layer[(lane, 0, 0, 0)] = (0.0, 0, 0.0, s, None)
    history = [layer]
    for k in range(track.tau):
        nxt: dict[tuple, tuple] = {}
        for key in sorted(layer):
            t, changes, wear, s, _ = layer[key]
            for o in _base_outcomes(s, cfg):
                ns = apply_action(s, o, cfg)
                nkey = (ns.lane, ns.v_bucket, ns.l, _wear_bucket(ns.wear))
                cand = (t + o.dt, changes + abs(ns.lane - s.lane), ns.wear, ns, key)
                best = nxt.get(nkey)
                if best is None or (round(cand[0], 9), cand[1], cand[2]) < (round(best[0], 9), best[1], best[2]):
                    nxt[nkey] = cand
        if not nxt:
            raise ValueError(f"no feasible racing line past checkpoint {k}")
        history.append(nxt)
        layer = nxt
    end_key = min(layer, key=lambda kk: (round(layer[kk][0], 9), layer[kk][1], layer[kk][2], kk))
    path = []
    key = end_key
    for k in range(track.tau, -1, -1):
        label = history[k][key]
        path.append(label[3])
        key = label[4]
    path.reverse()
    # DiscreteState.t is quantized, so the exact time sum is returned alongside
    return path, layer[end_key][0], layer[end_key][1]


def compute_racing_line(
    track: TrackModel, vehicle: VehicleParams, lane_change_limit: int | None = None
) -> RacingLine:
    path, total, changes = racing_line_path(track, vehicle, lane_change_limit)
    return RacingLine(
        lanes=tuple(s.lane for s in path),
        buckets=tuple(s.v_bucket for s in path),
        velocities=tuple(bucket_mid(s.v_bucket) for s in path),
        total_time=total,
        lane_changes=changes,
        track_digest=track.digest(),
        vehicle_digest=vehicle_digest(vehicle),
    )


def load_or_compute_racing_line(
    track: TrackModel, vehicle: VehicleParams, cache_dir: str | Path | None = None
) -> RacingLine:
    """Racing line, cached as JSON under ``cache_dir`` keyed by track and vehicle hash."""
    if cache_dir is None:
        return compute_racing_line(track, vehicle)
    path = Path(cache_dir) / f"line-{track.digest()[:16]}-{vehicle_digest(vehicle)}.json"
    if path.exists():
        with open(path, encoding="utf-8") as f:
            line = RacingLine.from_dict(json.load(f))
        if line.track_digest == track.digest() and line.vehicle_digest == vehicle_digest(vehicle):
            return line
    line = compute_racing_line(track, vehicle)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(line.to_dict(), f, indent=1)
    return line


def audit_racing_line(line: RacingLine, track: TrackModel, vehicle: VehicleParams) -> list[str]:
    """Re-check a line with the discrete game's transition audit."""
    cfg = GameConfig(track, vehicle, {0: "solo"})
    s = DiscreteState(0, 0, line.lanes[0], line.buckets[0], 0, 0.0, 0.0)
    transitions = []
    problems = []
    for k in range(track.tau):
        match = [o for o in _base_outcomes(s, cfg) if (o.action.target_lane, o.action.target_v_bucket) == (line.lanes[k + 1], line.buckets[k + 1])]
        if not match:
            problems.append(f"infeasible step into checkpoint {k + 1}")
            break
        ns = apply_action(s, match[0], cfg)
        transitions.append(Transition(0, s, ns))
        s = ns
    return problems + audit_transitions(transitions, cfg)


# ----------------------------------------------------------------- agents


def line_policy(line: RacingLine) -> DefaultPolicy:
    """Default game policy that steers each player toward the racing line.

    Picks the option whose target (lane, speed bucket) is nearest the line's
    entry at the next checkpoint, then the fastest one.
    """

    def choose(state: GameState, options: Sequence[ActionOutcome]) -> ActionOutcome:
        k = min(state.state_of(state.next_actor()).k + 1, len(line.lanes) - 1)
        lane, bucket = line.lanes[k], line.buckets[k]

        def key(o: ActionOutcome):
            a = o.action
            return (abs(a.target_lane - lane) + abs(a.target_v_bucket - bucket), o.dt, a.target_lane)

        return min(options, key=key)

    return choose


def _target_from_waypoint(wp: PlanWaypoint, theta: float) -> lqng.Waypoint:
    return lqng.waypoint_target(wp, theta)


@dataclass
class ControllerContext:
    track: TrackModel
    vehicle: VehicleParams
    line: RacingLine
    game: GameConfig
    schedule: PlannerSchedule = field(default_factory=PlannerSchedule)
    seed: int = 0


class Controller:
    """One agent's controller; stateful only through its current plan."""

    def __init__(self, player: int, spec: ControllerSpec, ctx: ControllerContext):
        self.player = player
        self.spec = spec
        self.ctx = ctx
        self.plan: Plan | None = None
        self.pending: Plan | None = None
        self.plan_tick: int | None = None
        self.last_status = "ok"
        self._policy = line_policy(ctx.line)

    @property
    def kind(self) -> ControllerKind:
        return self.spec.kind

    # waypoint currently targeted at checkpoint crossings (for deviation metrics)
    def planned_waypoint(self, k: int) -> PlanWaypoint | None:
        if self.kind is ControllerKind.MCTS_LQNG and self.plan is not None:
            for wp in self.plan.waypoints:
                if wp.checkpoint == k:
                    return wp
            return None
        return self.ctx.line.waypoint(self.ctx.track, k)

    def step(self, snapshot: WorldSnapshot, tick: int) -> ControlInput:
        ego = snapshot.states[self.player]
        if self.kind is ControllerKind.SCRIPTED_PURSUIT:
            return self._pursuit(ego)
        if self.kind is ControllerKind.MCTS_LQNG:
            self._maybe_replan(snapshot, tick)
        return self._lqng(snapshot, ego)

    # ---------------------------------------------------------- high level
    def _maybe_replan(self, snapshot: WorldSnapshot, tick: int) -> None:
        sched = self.ctx.schedule
        if self.pending is not None and self.plan_tick is not None and tick - self.plan_tick >= sched.latency:
            self.plan, self.pending = self.pending, None
        if tick % sched.high_level_period != 0:
            return
        params = self.spec.mcts
        seed = (self.ctx.seed * 1_000_003 + self.player * 7919 + tick) % (2**31)
        new = mcts_plan(self.player, snapshot, self.ctx.game, replace(params, seed=seed), self._policy)
        self.plan_tick = tick
        if sched.latency == 0:
            self.plan = new
        else:
            self.pending = new

    def _targets(self, snapshot: WorldSnapshot, players: Sequence[int]) -> dict[int, lqng.Waypoint]:
        track, line = self.ctx.track, self.ctx.line
        out = {}
        for pid in players:
            st = snapshot.states[pid]
            wp = None
            if self.kind is ControllerKind.MCTS_LQNG and self.plan is not None:
                seq = self.plan.waypoints if pid == self.player else self.plan.estimates.get(pid)
                if seq:
                    wp = lqng.select_target_waypoint(seq, st)
                    if wp.checkpoint <= st.last_checkpoint:
                        wp = None
            if wp is None:
                wp = line.waypoint(track, min(st.last_checkpoint + 1, track.tau))
            out[pid] = _target_from_waypoint(wp, st.theta)
        return out

    # ----------------------------------------------------------- low level
    def _lqng(self, snapshot: WorldSnapshot, ego: ContinuousState) -> ControlInput:
        radius = self.ctx.game.nearby_radius
        players = [self.player] + [
            pid
            for pid in sorted(snapshot.states)
            if pid != self.player and math.hypot(snapshot.states[pid].x - ego.x, snapshot.states[pid].y - ego.y) <= radius
        ]
        states = {pid: snapshot.states[pid] for pid in players}
        targets = self._targets(snapshot, players)
        teams = {pid: snapshot.teams[pid] for pid in players}
        solution, problem, status = lqng.solve_with_fallback(self.player, teams, targets, self.spec.weights, states)
        self.last_status = status
        return lqng.compute_control(solution, problem.x0, self.player, ego, self.ctx.vehicle)

    def _pursuit(self, ego: ContinuousState) -> ControlInput:
        track, line = self.ctx.track, self.ctx.line
        proj = track.project(ego.pos)
        s = proj.s
        if track.closed and s < ego.last_checkpoint * track.spacing - track.total_length / 2:
            s += track.total_length
        s_look = s + self.spec.lookahead
        k_look = min(int(math.ceil(s_look / track.spacing)), track.tau)
        lane = line.lanes[k_look]
        tx, ty = track.point_at(s_look % track.total_length if track.closed else s_look, track.lane_offset(lane))
        alpha = math.atan2(ty - ego.y, tx - ego.x) - ego.theta
        alpha = (alpha + math.pi) % (2 * math.pi) - math.pi
        ld = max(math.hypot(tx - ego.x, ty - ego.y), 1e-6)
        yaw = 2.0 * max(ego.v, 1.0) * math.sin(alpha) / ld
        k_next = min(ego.last_checkpoint + 1, track.tau)
        v_target = min(line.velocities[k_next], line.velocities[k_look])
        accel = 2.0 * (v_target - ego.v)
        return clamp_control(ego, ControlInput(accel, yaw), self.ctx.vehicle)


def controller_step(controller: Controller, snapshot: WorldSnapshot, tick: int) -> ControlInput:
    return controller.step(snapshot, tick)


# ----------------------------------------------------------------- metrics


@dataclass
class DeviationAccumulator:
    """Streaming mean of plan deviations at checkpoint crossings."""

    count: int = 0
    lane_sum: float = 0.0
    vel_sum: float = 0.0

    def add(self, pos: tuple[float, float], v: float, wp: PlanWaypoint) -> None:
        self.count += 1
        self.lane_sum += math.hypot(pos[0] - wp.position[0], pos[1] - wp.position[1])
        self.vel_sum += abs(v - wp.velocity)

    def means(self) -> tuple[float, float]:
        if self.count == 0:
            return 0.0, 0.0
        return self.lane_sum / self.count, self.vel_sum / self.count


def plan_deviation_metrics(crossings: Sequence[Mapping]) -> tuple[float, float]:
    """(mean distance to planned lane position, mean |v - planned v|) over crossings.

    Each crossing carries ``x, y, v`` and the planned ``wx, wy, wv``.
    """
    if not crossings:
        return 0.0, 0.0
    d = np.array([math.hypot(c["x"] - c["wx"], c["y"] - c["wy"]) for c in crossings])
    dv = np.array([abs(c["v"] - c["wv"]) for c in crossings])
    return float(d.mean()), float(dv.mean())
