"""Racing rules: track bounds, responsibility-aware separation, lane-change
limits, finishing points and the safety score."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .track import TrackModel
from .vehicle import ContinuousState

POINTS = (10.0, 7.5, 6.0, 4.0)
DNF_POINTS = 0.0

COLLISION = "collision_at_fault"
ILLEGAL_LANE_CHANGE = "illegal_lane_change"
OFF_TRACK = "off_track"


@dataclass(frozen=True)
class RuleParams:
    s0: float = 1.2
    s1: float = 2.2
    lane_change_limit: int = 2
    behind_lateral_band: float = 1.5
    collision_time_window: float = 0.1

    def __post_init__(self) -> None:
        if not self.s1 >= self.s0 > 0:
            raise ValueError("need s1 >= s0 > 0")
        if self.lane_change_limit < 0:
            raise ValueError("lane_change_limit must be non-negative")
        if self.collision_time_window <= 0:
            raise ValueError("collision_time_window must be positive")

    @classmethod
    def defaults_for(cls, vehicle_radius: float, lane_change_limit: int, **kw) -> "RuleParams":
        s0 = 2.0 * vehicle_radius
        return cls(s0=s0, s1=s0 + 1.0, lane_change_limit=lane_change_limit, **kw)


@dataclass(frozen=True)
class Event:
    time: float
    players: tuple[int, ...]
    kind: str


@dataclass
class ViolationLog:
    events: list[Event] = field(default_factory=list)

    def record(self, time: float, players: Iterable[int], kind: str) -> None:
        self.events.append(Event(round(time, 6), tuple(players), kind))

    def count(self, player: int, kind: str) -> int:
        return sum(1 for e in self.events if e.kind == kind and player in e.players)

    def counts(self) -> dict[int, Counter]:
        out: dict[int, Counter] = {}
        for e in self.events:
            for p in e.players:
                out.setdefault(p, Counter())[e.kind] += 1
        return out


# ------------------------------------------------------------------ geometry


def _along_gap(track: TrackModel, s_i: float, s_j: float) -> float:
    """Signed progress of j ahead of i, wrapped on closed tracks."""
    gap = s_j - s_i
    if track.closed:
        half = track.total_length / 2.0
        if gap > half:
            gap -= track.total_length
        elif gap <= -half:
            gap += track.total_length
    return gap


def check_track_bounds(state: ContinuousState, track: TrackModel) -> bool:
    """True when inside the track (boundary inclusive)."""
    return track.centerline_distance(state.pos) <= track.half_width


def is_behind(
    i: ContinuousState,
    j: ContinuousState,
    track: TrackModel,
    params: RuleParams,
    vehicle_radius: float,
) -> bool:
    pi, pj = track.project(i.pos), track.project(j.pos)
    gap = _along_gap(track, pi.s, pj.s)
    if gap <= 0.0:
        return False
    if abs(pi.offset - pj.offset) > params.behind_lateral_band:
        return False
    return gap <= params.s1 + 2.0 * vehicle_radius


@dataclass(frozen=True)
class Separation:
    ok: bool
    required: float
    distance: float
    at_fault: tuple[int, ...]


def check_separation(
    i: ContinuousState,
    j: ContinuousState,
    track: TrackModel,
    params: RuleParams,
    vehicle_radius: float,
    ids: tuple[int, int] = (0, 1),
) -> Separation:
    d = math.hypot(i.x - j.x, i.y - j.y)
    if is_behind(i, j, track, params, vehicle_radius):
        required, fault = params.s1, (ids[0],)
    elif is_behind(j, i, track, params, vehicle_radius):
        required, fault = params.s1, (ids[1],)
    else:
        required, fault = params.s0, ids
    ok = d >= required
    return Separation(ok, required, d, () if ok else fault)


# ------------------------------------------------------------- lane changes


def next_lane_change_count(l: int, same_straight_section: bool, section_changed: bool, lane_changes: int) -> int:
    if section_changed:
        return 0
    if same_straight_section:
        return l + lane_changes
    return l


def update_lane_change_count(prev: ContinuousState, now: ContinuousState, track: TrackModel) -> int:
    """Recent lane-change counter after moving from ``prev`` to ``now``."""
    sec_prev = prev.section if prev.section is not None else track.section_of(prev.pos)
    sec_now = now.section if now.section is not None else track.section_of(now.pos)
    if sec_prev != sec_now:
        return 0
    straight, _ = track.is_straight(now.pos)
    lane_prev = prev.lane if prev.lane is not None else track.lane_for_offset(track.project(prev.pos).offset)
    lane_now = now.lane if now.lane is not None else track.lane_for_offset(track.project(now.pos).offset)
    changed = 1 if lane_prev != lane_now else 0
    return next_lane_change_count(prev.lane_change_count, straight, False, changed)


def check_lane_change_limit(state: ContinuousState, track: TrackModel, limit: int) -> bool:
    """True when the state respects the lane-change limit (only binding on straights)."""
    straight, _ = track.is_straight(state.pos)
    return not (straight and state.lane_change_count > limit)


# ------------------------------------------------------------------ auditor


class RuleAuditor:
    """Edge-triggered rule audit for one race; owns the race's ViolationLog."""

    def __init__(self, track: TrackModel, params: RuleParams, vehicle_radius: float):
        self.track = track
        self.params = params
        self.vehicle_radius = vehicle_radius
        self.log = ViolationLog()
        self._off_track: set[int] = set()
        self._contacts: dict[tuple[int, int], tuple[int, ...]] = {}

    def audit(
        self,
        time: float,
        prev: Mapping[int, ContinuousState],
        now: Mapping[int, ContinuousState],
        active: Sequence[int],
    ) -> None:
        for pid in active:
            s = now[pid]
            if not check_track_bounds(s, self.track):
                if pid not in self._off_track:
                    self._off_track.add(pid)
                    self.log.record(time, (pid,), OFF_TRACK)
            else:
                self._off_track.discard(pid)
            if s.lane_change_count > prev[pid].lane_change_count and not check_lane_change_limit(
                s, self.track, self.params.lane_change_limit
            ):
                self.log.record(time, (pid,), ILLEGAL_LANE_CHANGE)
        ids = sorted(active)
        for a in range(len(ids)):
            for b in range(a + 1, len(ids)):
                pa, pb = ids[a], ids[b]
                sep = check_separation(now[pa], now[pb], self.track, self.params, self.vehicle_radius, (pa, pb))
                key = (pa, pb)
                if sep.ok:
                    self._contacts.pop(key, None)
                    continue
                previous = self._contacts.get(key)
                if previous is None or not set(sep.at_fault) <= set(previous):
                    fresh = sep.at_fault if previous is None else tuple(p for p in sep.at_fault if p not in previous)
                    self.log.record(time, fresh, COLLISION)
                    self._contacts[key] = tuple(sorted(set(sep.at_fault) | set(previous or ())))


# ----------------------------------------------------------------- scoring


@dataclass(frozen=True)
class TeamScore:
    points: dict[int, float]
    team_points: dict[str, float]
    winner: int | None

    def wins(self, team_members: Sequence[int]) -> bool:
        return self.winner is not None and self.winner in team_members


def score_finish(
    finish_order: Sequence[int],
    finished: Mapping[int, bool],
    teams: Mapping[str, Sequence[int]] | None = None,
) -> TeamScore:
    if len(finish_order) != 4 or len(set(finish_order)) != 4:
        raise ValueError("scoring requires exactly 4 distinct players (2v2 protocol)")
    points: dict[int, float] = {}
    rank = 0
    winner = None
    for pid in finish_order:
        if finished.get(pid, False):
            points[pid] = POINTS[rank]
            if rank == 0:
                winner = pid
            rank += 1
        else:
            points[pid] = DNF_POINTS
    team_points = {}
    for name, members in (teams or {}).items():
        team_points[name] = sum(points[p] for p in members)
    return TeamScore(points, team_points, winner)


def safety_score(collisions_at_fault: Sequence[float], illegal_lane_changes: Sequence[float]) -> float:
    """Average collisions-at-fault per race plus average illegal lane changes per race."""
    n = len(collisions_at_fault)
    if n != len(illegal_lane_changes):
        raise ValueError("per-race sequences differ in length")
    if n == 0:
        return 0.0
    return sum(collisions_at_fault) / n + sum(illegal_lane_changes) / n
