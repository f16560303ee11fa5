"""
Turn-based checkpoint game used by the tactical planner.

Players choose, at every checkpoint, a (lane, velocity bucket) target for the
next checkpoint.  One-dimensional kinematics give the travel time and tire
wear of each choice; dynamically infeasible choices and choices breaking the
lane-change limit or the collision time-window are pruned.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Mapping, Sequence

from .track import TrackModel
from .vehicle import ContinuousState, VehicleParams

VELOCITY_PITCH = 2.0
WEAR_PITCH = 0.1
TIME_RESOLUTION = 0.1
WEAR_PRECISION = 0.01


def quantize_time(t: float) -> float:
    """Round to the nearest 0.1 s, ties up."""
    return math.floor(t / TIME_RESOLUTION + 0.5 + 1e-9) * TIME_RESOLUTION


def _round_time(t: float) -> float:
    return round(quantize_time(t), 1)


def n_velocity_buckets(v_max: float) -> int:
    return int(math.floor((v_max - VELOCITY_PITCH / 2.0) / VELOCITY_PITCH + 1e-9)) + 1


def velocity_bucket(v: float, v_max: float) -> int:
    b = int(math.floor(v / VELOCITY_PITCH + 1e-12))
    return min(max(b, 0), n_velocity_buckets(v_max) - 1)


def bucket_range(b: int) -> tuple[float, float]:
    return b * VELOCITY_PITCH, (b + 1) * VELOCITY_PITCH


def bucket_mid(b: int) -> float:
    return (b + 0.5) * VELOCITY_PITCH


def wear_bucket_range(e: float) -> tuple[float, float]:
    i = min(int(math.floor(e / WEAR_PITCH + 1e-9)), int(round(1 / WEAR_PITCH)) - 1)
    return round(i * WEAR_PITCH, 10), round((i + 1) * WEAR_PITCH, 10)


@dataclass(frozen=True)
class DiscreteState:
    player: int
    k: int
    lane: int
    v_bucket: int
    l: int
    wear: float
    t: float

    @property
    def v_range(self) -> tuple[float, float]:
        return bucket_range(self.v_bucket)

    @property
    def v_mid(self) -> float:
        return bucket_mid(self.v_bucket)

    @property
    def wear_range(self) -> tuple[float, float]:
        return wear_bucket_range(self.wear)


@dataclass(frozen=True)
class DiscreteAction:
    target_lane: int
    target_v_bucket: int

    @property
    def target_velocity(self) -> float:
        return bucket_mid(self.target_v_bucket)


@dataclass(frozen=True)
class ActionOutcome:
    action: DiscreteAction
    dt: float
    de: float
    forced: bool = False


@dataclass
class GameConfig:
    track: TrackModel
    vehicle: VehicleParams
    teams: dict[int, str]
    zeta: float = 1.0
    horizon: int = 8
    nearby_radius: float = 25.0
    collision_time_window: float = 0.1
    lane_change_limit: int | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self) -> None:
        if not 0.0 <= self.zeta <= 1.0:
            raise ValueError("zeta must lie in [0, 1]")
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")
        if self.lane_change_limit is None:
            self.lane_change_limit = self.track.spec.lane_change_limit

    @property
    def n_buckets(self) -> int:
        return n_velocity_buckets(self.vehicle.v_max)

    def with_teams(self, teams: Mapping[int, str]) -> "GameConfig":
        """Same track/vehicle (and transition cache) with a different roster."""
        cfg = replace(self, teams=dict(teams))
        cfg._cache = self._cache
        return cfg


# ------------------------------------------------------------- abstraction


def discretize(
    state: ContinuousState, player: int, track: TrackModel, vehicle: VehicleParams, time_state: float = 0.0
) -> DiscreteState:
    lane = track.lane_id(state.pos)
    return DiscreteState(
        player=player,
        k=state.last_checkpoint,
        lane=lane,
        v_bucket=velocity_bucket(state.v, vehicle.v_max),
        l=state.lane_change_count,
        wear=round(min(state.tire_wear, 0.999), 2),
        t=_round_time(time_state),
    )


def travel_distance(track: TrackModel, k: int, lane_from: int, lane_to: int) -> float:
    """Estimated path length from ``lane_from`` at checkpoint k to ``lane_to`` at k + 1."""
    iv = track.interval(k)
    if iv.is_straight:
        return straight_distance(track.lane_width, abs(lane_from - lane_to), iv.chord)
    return curve_distance(iv.effective_radii[lane_from - 1], iv.effective_radii[lane_to - 1], iv.central_angle)


def straight_distance(lane_width: float, lane_delta: int, chord: float) -> float:
    return math.sqrt((lane_width * lane_delta) ** 2 + chord**2)


def curve_distance(r_from: float, r_to: float, central_angle: float) -> float:
    return (r_from + r_to) / 2.0 * central_angle


def max_allowed_velocity(wear: float, radius: float, vehicle: VehicleParams) -> float:
    if math.isinf(radius):
        return vehicle.v_max
    lateral = vehicle.a_max - (vehicle.a_max - vehicle.a_min) * wear
    return min(math.sqrt(lateral * radius), vehicle.v_max)


def min_travel_time(d: float, v0: float, v1: float, vstar: float, a: float, b: float) -> float | None:
    """Shortest time to cover ``d`` starting at ``v0`` and arriving at ``v1``
    without exceeding ``vstar``.  ``None`` means the action is ruled out."""
    if d <= 0:
        raise ValueError("distance must be positive")
    if v1 > vstar + 1e-12:
        return None
    need = (v1 * v1 - v0 * v0) / (2.0 * a) if v1 >= v0 else (v0 * v0 - v1 * v1) / (2.0 * b)
    if need > d + 1e-12:
        return None
    if vstar >= v0:
        cruise = d - (vstar**2 - v0**2) / (2.0 * a) - (vstar**2 - v1**2) / (2.0 * b)
        if cruise >= 0.0:
            return (vstar - v0) / a + (vstar - v1) / b + cruise / vstar
        peak = math.sqrt((2.0 * d * a * b + b * v0**2 + a * v1**2) / (a + b))
        return (peak - v0) / a + (peak - v1) / b
    cruise = d - (v0**2 - vstar**2) / (2.0 * b) - (vstar**2 - v1**2) / (2.0 * b)
    if cruise >= 0.0:
        return (v0 - vstar) / b + (vstar - v1) / b + cruise / vstar
    return None


def tire_wear_update(
    track: TrackModel, k: int, lane_from: int, lane_to: int, d: float, v1: float, vehicle: VehicleParams
) -> float:
    iv = track.interval(k)
    if iv.is_straight:
        return d * vehicle.L_straight
    return curve_wear(d, vehicle.L_curve, v1, iv.lane_radii[lane_from - 1] + iv.lane_radii[lane_to - 1])


def curve_wear(d: float, L_curve: float, v1: float, radius_sum: float) -> float:
    return 2.0 * d * L_curve * v1**2 / radius_sum


def _new_lane_count(track: TrackModel, k: int, l: int, lane_from: int, lane_to: int) -> tuple[int, int]:
    """Lane-change count at k + 1, and the count charged to checkpoint k's section.

    Changes made inside an interval are charged to every straight section
    the interval touches.
    """
    g0, g1 = track.gate(k), track.gate(k + 1)
    delta = abs(lane_to - lane_from)
    if g0.section_id == g1.section_id:
        new_l = l + delta if g1.is_straight else l
        charged_start = new_l
    else:
        new_l = delta if g1.is_straight else 0
        charged_start = l + delta if g0.is_straight else 0
    return new_l, charged_start


def _lane_limit_ok(track: TrackModel, k: int, l: int, lane_from: int, lane_to: int, limit: int) -> bool:
    if lane_from == lane_to:
        # holding a lane never adds to the count, even if it is already over
        return True
    g0, g1 = track.gate(k), track.gate(k + 1)
    new_l, charged_start = _new_lane_count(track, k, l, lane_from, lane_to)
    if g1.is_straight and new_l > limit:
        return False
    if g0.is_straight and charged_start > limit:
        return False
    return True


def _base_outcomes(s: DiscreteState, cfg: GameConfig) -> tuple[ActionOutcome, ...]:
    key = (s.k, s.lane, s.v_bucket, s.l, s.wear)
    hit = cfg._cache.get(key)
    if hit is not None:
        return hit
    track, veh = cfg.track, cfg.vehicle
    iv = track.interval(s.k)
    vstar = max_allowed_velocity(s.wear, iv.lane_radii[s.lane - 1], veh)
    v0 = s.v_mid
    out = []
    for lane in range(1, track.lanes + 1):
        if not _lane_limit_ok(track, s.k, s.l, s.lane, lane, cfg.lane_change_limit):
            continue
        d = travel_distance(track, s.k, s.lane, lane)
        for b in range(cfg.n_buckets):
            v1 = bucket_mid(b)
            dt = min_travel_time(d, v0, v1, vstar, veh.a, veh.b)
            if dt is None:
                continue
            de = tire_wear_update(track, s.k, s.lane, lane, d, v1, veh)
            out.append(ActionOutcome(DiscreteAction(lane, b), dt, de))
    res = tuple(out)
    cfg._cache[key] = res
    return res


def _fallback(s: DiscreteState, occupancy: Mapping[int, Sequence[float]], cfg: GameConfig) -> ActionOutcome:
    veh = cfg.vehicle
    d = travel_distance(cfg.track, s.k, s.lane, s.lane)
    v0 = s.v_mid
    v_end = math.sqrt(max(v0 * v0 - 2.0 * veh.b * d, 0.0))
    lowest = velocity_bucket(v_end, veh.v_max)
    chosen = None
    for b in range(lowest, max(lowest, s.v_bucket) + 1):
        v1 = bucket_mid(b)
        dt = 2.0 * d / (v0 + v1)
        if all(abs(s.t + dt - t) >= cfg.collision_time_window for t in occupancy.get(s.lane, ())):
            chosen = (b, dt)
            break
    if chosen is None:
        chosen = (lowest, 2.0 * d / (v0 + bucket_mid(lowest)))
    b, dt = chosen
    de = tire_wear_update(cfg.track, s.k, s.lane, s.lane, d, bucket_mid(b), veh)
    return ActionOutcome(DiscreteAction(s.lane, b), dt, de, forced=True)


def enumerate_actions(
    s: DiscreteState, occupancy: Mapping[int, Sequence[float]], cfg: GameConfig
) -> list[ActionOutcome]:
    """Feasible actions from ``s``; ``occupancy`` maps lane -> time states of
    players already committed to checkpoint ``s.k + 1``.  Never empty: when
    nothing survives pruning a single forced fallback is returned."""
    if s.k >= cfg.track.tau:
        raise ValueError("no checkpoint beyond the finish")
    window = cfg.collision_time_window
    out = []
    for o in _base_outcomes(s, cfg):
        times = occupancy.get(o.action.target_lane)
        if times:
            arrive = s.t + o.dt
            if any(abs(arrive - t) < window for t in times):
                continue
        out.append(o)
    if not out:
        out.append(_fallback(s, occupancy, cfg))
    return out


def apply_action(s: DiscreteState, outcome: ActionOutcome, cfg: GameConfig) -> DiscreteState:
    lane = outcome.action.target_lane
    new_l, _ = _new_lane_count(cfg.track, s.k, s.l, s.lane, lane)
    return DiscreteState(
        player=s.player,
        k=s.k + 1,
        lane=lane,
        v_bucket=outcome.action.target_v_bucket,
        l=new_l,
        wear=round(min(s.wear + outcome.de, 0.999), 2),
        t=_round_time(s.t + outcome.dt),
    )


def turn_order(states: Iterable[DiscreteState]) -> list[int]:
    return [s.player for s in sorted(states, key=lambda s: (s.t, s.player))]


def terminal_score(times: Mapping[int, float], player: int, teams: Mapping[int, str], zeta: float) -> float:
    """Team-weighted time objective of ``player`` (lower is better)."""
    team = teams[player]
    mates = [p for p in times if p != player and teams[p] == team]
    opponents = [p for p in times if teams[p] != team]
    score = times[player] + zeta * sum(times[p] for p in mates)
    if opponents:
        team_size = len(mates) + 1
        score -= (1.0 + zeta * (team_size - 1)) * sum(times[p] for p in opponents) / len(opponents)
    return score


# -------------------------------------------------------------- joint game


@dataclass(frozen=True)
class GameState:
    """Joint state of the checkpoint game.

    ``arrivals`` maps checkpoint -> ((player, lane, time), ...) for every
    arrival resolved inside the game; it feeds the collision time-window.
    """

    players: tuple[DiscreteState, ...]
    final_k: int
    arrivals: Mapping[int, tuple[tuple[int, int, float], ...]]
    forced: tuple[int, ...]

    @classmethod
    def initial(cls, states: Sequence[DiscreteState], final_k: int) -> "GameState":
        ordered = tuple(sorted(states, key=lambda s: s.player))
        return cls(ordered, final_k, {}, tuple(0 for _ in ordered))

    def index_of(self, player: int) -> int:
        for i, s in enumerate(self.players):
            if s.player == player:
                return i
        raise KeyError(player)

    def state_of(self, player: int) -> DiscreteState:
        return self.players[self.index_of(player)]

    def next_actor(self) -> int | None:
        pending = [s for s in self.players if s.k < self.final_k]
        if not pending:
            return None
        return min(pending, key=lambda s: (s.k, s.t, s.player)).player

    def is_terminal(self) -> bool:
        return self.next_actor() is None

    def occupancy(self, k: int, exclude: int) -> dict[int, list[float]]:
        occ: dict[int, list[float]] = {}
        for pid, lane, t in self.arrivals.get(k, ()):
            if pid != exclude:
                occ.setdefault(lane, []).append(t)
        return occ

    def actions(self, cfg: GameConfig) -> list[ActionOutcome]:
        """Legal actions of the next actor.

        Actions that would leave another player still heading for the same
        checkpoint without any legal action (boxing it in) are dropped, unless
        the actor has nothing else.
        """
        actor = self.next_actor()
        s = self.state_of(actor)
        options = enumerate_actions(s, self.occupancy(s.k + 1, actor), cfg)
        if options[0].forced:
            return options
        window = cfg.collision_time_window
        # (lane, arrival) of every legal option of each player yet to move to s.k + 1
        pending = []
        for q in self.players:
            if q.player == actor or q.k != s.k:
                continue
            legal = [o for o in enumerate_actions(q, self.occupancy(q.k + 1, q.player), cfg) if not o.forced]
            if legal:
                pending.append([(o.action.target_lane, q.t + o.dt) for o in legal])
        if not pending:
            return options

        def boxes_in(o: ActionOutcome) -> bool:
            lane, t = o.action.target_lane, _round_time(s.t + o.dt)
            return any(all(ql == lane and abs(qt - t) < window for ql, qt in q_opts) for q_opts in pending)

        kept = [o for o in options if not boxes_in(o)]
        return kept or options

    def play(self, outcome: ActionOutcome, cfg: GameConfig) -> "GameState":
        actor = self.next_actor()
        i = self.index_of(actor)
        new = apply_action(self.players[i], outcome, cfg)
        players = self.players[:i] + (new,) + self.players[i + 1 :]
        arrivals = dict(self.arrivals)
        arrivals[new.k] = arrivals.get(new.k, ()) + ((actor, new.lane, new.t),)
        forced = self.forced
        if outcome.forced:
            forced = forced[:i] + (forced[i] + 1,) + forced[i + 1 :]
        return GameState(players, self.final_k, arrivals, forced)

    def times(self) -> dict[int, float]:
        return {s.player: s.t for s in self.players}

    def scores(
        self,
        cfg: GameConfig,
        forced_penalty: float = 0.0,
        time_to_go: Callable[[DiscreteState], float] | None = None,
    ) -> dict[int, float]:
        """Terminal scores; ``time_to_go`` turns time states into finish-time estimates."""
        times = self.times()
        if time_to_go is not None:
            times = {s.player: s.t + time_to_go(s) for s in self.players}
        teams = {p: cfg.teams[p] for p in times}
        out = {}
        for i, s in enumerate(self.players):
            out[s.player] = terminal_score(times, s.player, teams, cfg.zeta) + forced_penalty * self.forced[i]
        return out


def solo_time_to_go(cfg: GameConfig) -> Callable[[DiscreteState], float]:
    """Shortest single-player time from a state to the last checkpoint.

    Backward induction over (checkpoint, lane, velocity bucket, lane-change
    count) with fresh tires, ignoring the other players.  States with no
    feasible continuation get the slowest finite value at their checkpoint
    plus one second.  The table is cached on ``cfg``.
    """
    cached = cfg._cache.get("solo_time_to_go")
    if cached is not None:
        return cached
    track = cfg.track
    max_l = cfg.lane_change_limit + track.lanes
    table: dict[tuple[int, int, int, int], float] = {}
    for lane in range(1, track.lanes + 1):
        for b in range(cfg.n_buckets):
            for l in range(max_l + 1):
                table[(track.tau, lane, b, l)] = 0.0
    for k in range(track.tau - 1, -1, -1):
        layer = {}
        for lane in range(1, track.lanes + 1):
            for b in range(cfg.n_buckets):
                for l in range(max_l + 1):
                    s = DiscreteState(0, k, lane, b, l, 0.0, 0.0)
                    best = math.inf
                    for o in _base_outcomes(s, cfg):
                        ns = apply_action(s, o, cfg)
                        best = min(best, o.dt + table.get((k + 1, ns.lane, ns.v_bucket, min(ns.l, max_l)), math.inf))
                    layer[(k, lane, b, l)] = best
        finite = [v for v in layer.values() if math.isfinite(v)]
        cap = (max(finite) if finite else 0.0) + 1.0
        table.update({key: v if math.isfinite(v) else cap for key, v in layer.items()})

    def time_to_go(s: DiscreteState) -> float:
        if s.k >= track.tau:
            return 0.0
        return table[(s.k, s.lane, s.v_bucket, min(s.l, max_l))]

    cfg._cache["solo_time_to_go"] = time_to_go
    return time_to_go


# ------------------------------------------------------------------ audit


@dataclass(frozen=True)
class Transition:
    player: int
    before: DiscreteState
    after: DiscreteState
    forced: bool = False


def audit_transitions(
    transitions: Sequence[Transition], cfg: GameConfig, others: Sequence[Transition] = ()
) -> list[str]:
    """Rule violations in a resolved sequence of checkpoint transitions.

    Checks lane validity (track bounds), the lane-change limit on straights
    and the collision time-window against every other arrival at the same
    checkpoint that was resolved earlier in the sequence.
    """
    problems: list[str] = []
    track = cfg.track
    seen: dict[int, list[tuple[int, int, float]]] = {}
    everything = list(others) + list(transitions)
    own = set(id(t) for t in transitions)
    for tr in everything:
        b, a = tr.before, tr.after
        if id(tr) in own:
            if not 1 <= a.lane <= track.lanes:
                problems.append(f"player {tr.player}: lane {a.lane} off track at checkpoint {a.k}")
            if not _lane_limit_ok(track, b.k, b.l, b.lane, a.lane, cfg.lane_change_limit):
                problems.append(f"player {tr.player}: lane-change limit broken entering checkpoint {a.k}")
            expect_l, _ = _new_lane_count(track, b.k, b.l, b.lane, a.lane)
            if expect_l != a.l:
                problems.append(f"player {tr.player}: inconsistent lane-change count at checkpoint {a.k}")
            if a.lane != b.lane and track.gate(a.k).is_straight and a.l > cfg.lane_change_limit:
                problems.append(f"player {tr.player}: {a.l} lane changes on a straight at checkpoint {a.k}")
            for pid, lane, t in seen.get(a.k, ()):
                if pid != tr.player and lane == a.lane and abs(t - a.t) < cfg.collision_time_window - 1e-6:
                    problems.append(
                        f"player {tr.player}: shares lane {lane} with player {pid} at checkpoint {a.k} "
                        f"({a.t:.1f}s vs {t:.1f}s)"
                    )
        seen.setdefault(a.k, []).append((tr.player, a.lane, a.t))
    return problems
