"""
Per-tick and per-checkpoint reward terms and a 9-ray planar LIDAR model.

The terms are evaluated as diagnostics of race quality and as a ready
reward interface; no learning happens here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .track import TrackModel
from .vehicle import ContinuousState

N_RAYS = 9
FIELD_OF_VIEW = math.pi  # 180 degrees
MAX_RANGE = 20.0
FRONT_RAYS = frozenset({4, 5, 6})
ORDER_MULTIPLIERS = (1.0, 0.75, 0.6, 0.4)

WALL = "wall"
PLAYER = "player"
NONE = "none"


@dataclass(frozen=True)
class RewardWeights:
    speed: float = 1.0
    direction: float = 0.01
    swerve: float = 1.0
    wall_hit: float = 0.1
    player_hit: float = 0.2
    player_hit_front: float = 0.5
    checkpoint_base: float = 1.0
    checkpoint_time: float = 1.0
    target_lane: float = 0.5
    target_velocity: float = 0.5
    reverse: float = 1.0
    h: float = 1.5

    def __post_init__(self) -> None:
        for name, value in self.__dict__.items():
            if name != "h" and value < 0:
                raise ValueError(f"weight {name} must be non-negative")
        if not 0.0 < self.h <= MAX_RANGE:
            raise ValueError("proximity threshold h must lie in (0, 20]")


@dataclass(frozen=True)
class LidarScan:
    distances: tuple[float, ...]
    kinds: tuple[str, ...]
    front: frozenset = FRONT_RAYS


def ray_angles(heading: float) -> list[float]:
    """Absolute ray directions; ray 1 points to the left, ray 9 to the right."""
    step = FIELD_OF_VIEW / (N_RAYS - 1)
    return [heading + FIELD_OF_VIEW / 2.0 - i * step for i in range(N_RAYS)]


def _ray_segment(ox, oy, dx, dy, x0, y0, x1, y1) -> float | None:
    ex, ey = x1 - x0, y1 - y0
    den = dx * ey - dy * ex
    if abs(den) < 1e-12:
        return None
    wx, wy = x0 - ox, y0 - oy
    t = (wx * ey - wy * ex) / den
    u = (wx * dy - wy * dx) / den
    if t > 1e-9 and -1e-12 <= u <= 1.0 + 1e-12:
        return t
    return None


def _ray_circle(ox, oy, dx, dy, cx, cy, r) -> list[float]:
    fx, fy = ox - cx, oy - cy
    b = fx * dx + fy * dy
    c = fx * fx + fy * fy - r * r
    disc = b * b - c
    if disc < 0:
        return []
    sq = math.sqrt(disc)
    return [t for t in (-b - sq, -b + sq) if t > 1e-9]


def _on_arc(px, py, cx, cy, start, sweep) -> bool:
    ang = math.atan2(py - cy, px - cx)
    rel = (ang - start) if sweep >= 0 else (start - ang)
    rel %= 2.0 * math.pi
    return rel <= abs(sweep) + 1e-9


def lidar_scan(
    ego: ContinuousState,
    others: Iterable[ContinuousState],
    track: TrackModel | None,
    other_radius: float = 0.6,
    walls: Sequence[tuple[str, tuple]] | None = None,
) -> LidarScan:
    """Nearest hit per ray against the track walls and other players' discs."""
    pieces = walls if walls is not None else (track.boundary_pieces() if track is not None else [])
    others = list(others)
    dists, kinds = [], []
    for ang in ray_angles(ego.theta):
        dx, dy = math.cos(ang), math.sin(ang)
        best, kind = MAX_RANGE, NONE
        for typ, geo in pieces:
            if typ == "line":
                t = _ray_segment(ego.x, ego.y, dx, dy, *geo)
                hits = [] if t is None else [t]
            else:
                cx, cy, r, start, sweep = geo
                hits = [
                    t
                    for t in _ray_circle(ego.x, ego.y, dx, dy, cx, cy, r)
                    if _on_arc(ego.x + t * dx, ego.y + t * dy, cx, cy, start, sweep)
                ]
            for t in hits:
                if t < best:
                    best, kind = t, WALL
        for o in others:
            for t in _ray_circle(ego.x, ego.y, dx, dy, o.x, o.y, other_radius):
                if t < best:
                    best, kind = t, PLAYER
        dists.append(best)
        kinds.append(kind)
    return LidarScan(tuple(dists), tuple(kinds))


# ------------------------------------------------------------ step rewards


@dataclass(frozen=True)
class StepRewards:
    speed: float
    direction: float
    swerve: float
    wall_hit: float
    player_hit: float

    @property
    def total(self) -> float:
        return self.speed + self.direction + self.swerve + self.wall_hit + self.player_hit


def speed_reward(v: float, v_max: float, w: float) -> float:
    return w * v / v_max


def direction_reward(vx: float, vy: float, to_x: float, to_y: float, w: float) -> float:
    return w * (vx * to_x + vy * to_y)


def swerve_penalty(on_straight: bool, lane_changes: int, limit: int, w: float) -> float:
    return -w if (on_straight and lane_changes > limit) else 0.0


def wall_hit_penalty(scan: LidarScan, h: float, w: float) -> float:
    return -sum(w for d, k in zip(scan.distances, scan.kinds) if d < h and k == WALL)


def player_hit_penalty(scan: LidarScan, h: float, w: float, w_front: float) -> float:
    total = 0.0
    for j, (d, k) in enumerate(zip(scan.distances, scan.kinds), start=1):
        if d < h and k == PLAYER:
            total -= w
            if j in scan.front:
                total -= w_front
    return total


def step_rewards(
    ego: ContinuousState,
    scan: LidarScan,
    weights: RewardWeights,
    track: TrackModel,
    v_max: float,
    lane_change_limit: int | None = None,
) -> StepRewards:
    limit = track.spec.lane_change_limit if lane_change_limit is None else lane_change_limit
    nxt = track.gate(min(ego.last_checkpoint + 1, track.tau)).centerline_position
    straight, _ = track.is_straight(ego.pos)
    return StepRewards(
        speed=speed_reward(ego.v, v_max, weights.speed),
        direction=direction_reward(
            ego.v * math.cos(ego.theta), ego.v * math.sin(ego.theta), nxt[0] - ego.x, nxt[1] - ego.y, weights.direction
        ),
        swerve=swerve_penalty(straight, ego.lane_change_count, limit, weights.swerve),
        wall_hit=wall_hit_penalty(scan, weights.h, weights.wall_hit),
        player_hit=player_hit_penalty(scan, weights.h, weights.player_hit, weights.player_hit_front),
    )


# ------------------------------------------------------ checkpoint rewards


@dataclass(frozen=True)
class CheckpointRewards:
    base: float
    time: float
    target: float
    reverse: float

    @property
    def total(self) -> float:
        return self.base + self.time + self.target + self.reverse


def order_multiplier(rank: int) -> float:
    """Multiplier for the ``rank``-th (1-based) player to cross a checkpoint."""
    if not 1 <= rank <= len(ORDER_MULTIPLIERS):
        raise ValueError(f"crossing rank {rank} outside 1..{len(ORDER_MULTIPLIERS)}")
    return ORDER_MULTIPLIERS[rank - 1]


def checkpoint_time_reward(t: float, T: float, w: float) -> float:
    return w * (T - t) / T


def checkpoint_target_reward(
    lane: int, target_lane: int, dist: float, v: float, target_v: float, w_lane: float, w_vel: float
) -> float:
    return w_lane / 1.3 ** (abs(lane - target_lane) * dist) + w_vel / 1.1 ** abs(v - target_v)


def reverse_penalty(r_new: int, r_old: int, w: float) -> float:
    return -w if r_new <= r_old else 0.0


def checkpoint_rewards(
    rank: int,
    t: float,
    T: float,
    lane: int,
    pos: tuple[float, float],
    v: float,
    target: tuple[int, tuple[float, float], float] | None,
    r_new: int,
    r_old: int,
    weights: RewardWeights,
) -> CheckpointRewards:
    """Rewards on crossing checkpoint ``r_new``; ``target`` is (lane, position, velocity)."""
    if target is None:
        tgt = 0.0
    else:
        t_lane, t_pos, t_v = target
        dist = math.hypot(t_pos[0] - pos[0], t_pos[1] - pos[1])
        tgt = checkpoint_target_reward(lane, t_lane, dist, v, t_v, weights.target_lane, weights.target_velocity)
    return CheckpointRewards(
        base=order_multiplier(rank) * weights.checkpoint_base,
        time=checkpoint_time_reward(t, T, weights.checkpoint_time),
        target=tgt,
        reverse=reverse_penalty(r_new, r_old, weights.reverse),
    )


def crossing_ranks(crossings: Sequence[tuple[int, float, float]]) -> dict[int, int]:
    """Rank players crossing one checkpoint from (player, time, overshoot) tuples.

    Earlier time first; same tick broken by larger overshoot past the gate,
    then by lower player id.
    """
    ordered = sorted(crossings, key=lambda c: (round(c[1], 9), -c[2], c[0]))
    return {pid: i + 1 for i, (pid, _, _) in enumerate(ordered)}
