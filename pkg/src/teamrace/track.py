"""
Racetrack geometry.

A track is a chain of straight and circular-arc segments starting at the
origin heading along +x.  Lanes are parallel offset curves of the
centerline; checkpoints are gates placed every ``checkpoint_spacing``
meters of centerline arc length.

Conventions
-----------
* Lateral offsets are signed positive toward the track-left normal.
* Lane ``i`` (1-based) is centered at offset ``(i - (lanes + 1) / 2) * lane_width``,
  so lane 1 is the right-most lane and lane ``lanes`` the left-most.
* Checkpoint ``k`` sits at arc length ``k * spacing`` for ``k = 1..tau``.
  Index 0 denotes the start line, which is not a checkpoint.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

Point = tuple[float, float]

TWO_PI = 2.0 * math.pi
_EPS = 1e-9


class TrackError(ValueError):
    """Invalid track description or off-track query."""


class OffTrackError(TrackError):
    pass


@dataclass(frozen=True)
class SegmentSpec:
    kind: str
    length: float | None = None
    radius: float | None = None
    angle: float | None = None
    direction: str | None = None

    @property
    def sign(self) -> int:
        """+1 for a left turn, -1 for a right turn, 0 for a straight."""
        if self.kind == "straight":
            return 0
        return 1 if self.direction == "left" else -1

    @property
    def arc_length(self) -> float:
        if self.kind == "straight":
            return float(self.length)
        return float(self.radius) * float(self.angle)


@dataclass(frozen=True)
class TrackSpec:
    name: str
    lanes: int
    lane_width: float
    track_half_width: float
    lane_change_limit: int
    checkpoint_spacing: float
    segments: tuple[SegmentSpec, ...]

    def validate(self) -> None:
        if int(self.lanes) != self.lanes or self.lanes < 1:
            raise TrackError("lanes: must be a positive integer")
        if self.lane_width <= 0:
            raise TrackError("lane_width: must be positive")
        if self.track_half_width < self.lanes * self.lane_width / 2.0 - _EPS:
            raise TrackError("track_half_width: must be at least lanes * lane_width / 2")
        if int(self.lane_change_limit) != self.lane_change_limit or self.lane_change_limit < 0:
            raise TrackError("lane_change_limit: must be a non-negative integer")
        if not 10.0 <= self.checkpoint_spacing <= 15.0:
            raise TrackError("checkpoint_spacing: must lie in [10, 15] meters")
        if not self.segments:
            raise TrackError("segments: at least one segment is required")
        half_lanes = self.lanes * self.lane_width / 2.0
        for i, seg in enumerate(self.segments):
            where = f"segments[{i}]"
            if seg.kind == "straight":
                if seg.length is None or seg.length <= 0:
                    raise TrackError(f"{where}.length: must be positive")
            elif seg.kind == "arc":
                if seg.radius is None or seg.radius <= 0:
                    raise TrackError(f"{where}.radius: must be positive")
                if seg.radius <= half_lanes:
                    raise TrackError(
                        f"{where}.radius: innermost lane radius is non-positive "
                        f"(radius {seg.radius} <= lanes * lane_width / 2 = {half_lanes})"
                    )
                if seg.angle is None or not 0 < seg.angle <= TWO_PI + _EPS:
                    raise TrackError(f"{where}.angle: must lie in (0, 2*pi]")
                if seg.direction not in ("left", "right"):
                    raise TrackError(f"{where}.direction: must be 'left' or 'right'")
            else:
                raise TrackError(f"{where}.kind: must be 'straight' or 'arc'")

    def to_dict(self) -> dict[str, Any]:
        segs = []
        for seg in self.segments:
            if seg.kind == "straight":
                segs.append({"kind": "straight", "length": seg.length})
            else:
                segs.append(
                    {"kind": "arc", "radius": seg.radius, "angle": seg.angle, "direction": seg.direction}
                )
        return {
            "name": self.name,
            "lanes": self.lanes,
            "lane_width": self.lane_width,
            "track_half_width": self.track_half_width,
            "lane_change_limit": self.lane_change_limit,
            "checkpoint_spacing": self.checkpoint_spacing,
            "segments": segs,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "TrackSpec":
        allowed = {
            "name", "lanes", "lane_width", "track_half_width",
            "lane_change_limit", "checkpoint_spacing", "segments",
        }
        unknown = set(data) - allowed
        if unknown:
            raise TrackError(f"unknown track keys: {sorted(unknown)}")
        missing = allowed - set(data)
        if missing:
            raise TrackError(f"missing track keys: {sorted(missing)}")
        segments = []
        for i, raw in enumerate(data["segments"]):
            kind = raw.get("kind")
            keys = {"kind", "length"} if kind == "straight" else {"kind", "radius", "angle", "direction"}
            extra = set(raw) - keys
            if extra:
                raise TrackError(f"segments[{i}]: unknown keys {sorted(extra)}")
            segments.append(
                SegmentSpec(
                    kind=kind,
                    length=_opt_float(raw.get("length")),
                    radius=_opt_float(raw.get("radius")),
                    angle=_opt_float(raw.get("angle")),
                    direction=raw.get("direction"),
                )
            )
        return cls(
            name=str(data["name"]),
            lanes=data["lanes"],
            lane_width=float(data["lane_width"]),
            track_half_width=float(data["track_half_width"]),
            lane_change_limit=data["lane_change_limit"],
            checkpoint_spacing=float(data["checkpoint_spacing"]),
            segments=tuple(segments),
        )


def _opt_float(v: Any) -> float | None:
    return None if v is None else float(v)


def load_track_spec(path: str | Path) -> TrackSpec:
    with open(path, encoding="utf-8") as f:
        return TrackSpec.from_dict(json.load(f))


@dataclass(frozen=True)
class _Segment:
    spec: SegmentSpec
    s0: float
    s1: float
    x0: float
    y0: float
    h0: float
    section: int

    @property
    def is_straight(self) -> bool:
        return self.spec.kind == "straight"

    def center(self) -> Point:
        r, sg = self.spec.radius, self.spec.sign
        return (self.x0 - sg * r * math.sin(self.h0), self.y0 + sg * r * math.cos(self.h0))

    def pose(self, u: float) -> tuple[float, float, float]:
        """Centerline (x, y, heading) at local arc length ``u``."""
        if self.is_straight:
            c, s = math.cos(self.h0), math.sin(self.h0)
            return self.x0 + u * c, self.y0 + u * s, self.h0
        r, sg = self.spec.radius, self.spec.sign
        cx, cy = self.center()
        h = self.h0 + sg * u / r
        return cx + sg * r * math.sin(h), cy - sg * r * math.cos(h), h

    def project(self, x: float, y: float) -> tuple[float, float, float]:
        """Closest centerline point: returns (u, signed lateral offset, distance)."""
        length = self.s1 - self.s0
        if self.is_straight:
            c, s = math.cos(self.h0), math.sin(self.h0)
            dx, dy = x - self.x0, y - self.y0
            u = dx * c + dy * s
            lat = -dx * s + dy * c
            if 0.0 <= u <= length:
                return u, lat, abs(lat)
            uc = min(max(u, 0.0), length)
            return uc, lat, math.hypot(u - uc, lat)
        r, sg = self.spec.radius, self.spec.sign
        cx, cy = self.center()
        dx, dy = x - cx, y - cy
        rho = math.hypot(dx, dy)
        # angle of the radial vector, measured the way the start point sits
        start_ang = math.atan2(self.y0 - cy, self.x0 - cx)
        ang = math.atan2(dy, dx)
        sweep = (ang - start_ang) * sg
        sweep %= TWO_PI
        total = length / r
        lat = sg * (r - rho)
        if sweep <= total + _EPS:
            return min(sweep, total) * r, lat, abs(r - rho)
        # outside the fan: nearest endpoint
        best = None
        for u in (0.0, length):
            px, py, h = self.pose(u)
            d = math.hypot(x - px, y - py)
            lat_e = -(x - px) * math.sin(h) + (y - py) * math.cos(h)
            if best is None or d < best[2]:
                best = (u, lat_e, d)
        return best


@dataclass(frozen=True)
class Checkpoint:
    index: int
    s: float
    centerline_position: Point
    tangent_heading: float
    is_straight: bool
    lane_positions: tuple[Point, ...]
    lane_turn_radii: tuple[float, ...] | None
    straight_section_id: int | None
    section_id: int


@dataclass(frozen=True)
class Interval:
    """Centerline geometry between checkpoint ``k`` and ``k + 1``."""

    k: int
    chord: float
    heading_change: float
    is_straight: bool
    # geometric lane radii of the tightest arc in the interval (inf on straights)
    lane_radii: tuple[float, ...]
    # radii of the equivalent constant-curvature arc, used for path length
    effective_radii: tuple[float, ...]

    @property
    def central_angle(self) -> float:
        return abs(self.heading_change)


@dataclass(frozen=True)
class Projection:
    s: float
    offset: float
    distance: float
    segment: int


@dataclass(frozen=True)
class TrackModel:
    spec: TrackSpec
    total_length: float
    closed: bool
    checkpoints: tuple[Checkpoint, ...]
    segment_starts: tuple[float, ...]
    _segments: tuple[_Segment, ...] = field(repr=False)
    _intervals: tuple[Interval, ...] = field(repr=False)
    _start: Checkpoint | None = field(default=None, repr=False)

    # ----------------------------------------------------------------- basics
    @property
    def lanes(self) -> int:
        return self.spec.lanes

    @property
    def lane_width(self) -> float:
        return self.spec.lane_width

    @property
    def half_width(self) -> float:
        return self.spec.track_half_width

    @property
    def spacing(self) -> float:
        return self.spec.checkpoint_spacing

    @property
    def tau(self) -> int:
        return len(self.checkpoints)

    def lane_offset(self, lane: int) -> float:
        return (lane - (self.lanes + 1) / 2.0) * self.lane_width

    def digest(self) -> str:
        blob = json.dumps(self.spec.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def gate(self, k: int) -> Checkpoint:
        """Checkpoint ``k``; ``k == 0`` is the (uncounted) start line."""
        if k == 0:
            return self._start
        return self.checkpoints[k - 1]

    def interval(self, k: int) -> Interval:
        return self._intervals[k]

    # --------------------------------------------------------------- geometry
    def _segment_index(self, s: float) -> int:
        if s >= self.total_length:
            return len(self._segments) - 1
        lo, hi = 0, len(self._segments) - 1
        while lo < hi:
            mid = (lo + hi + 1) // 2
            if self._segments[mid].s0 <= s:
                lo = mid
            else:
                hi = mid - 1
        return lo

    def pose_at(self, s: float, offset: float = 0.0) -> tuple[float, float, float]:
        """(x, y, heading) at arc length ``s`` shifted ``offset`` toward track-left."""
        s = min(max(s, 0.0), self.total_length)
        seg = self._segments[self._segment_index(s)]
        x, y, h = seg.pose(s - seg.s0)
        return x - offset * math.sin(h), y + offset * math.cos(h), h

    def point_at(self, s: float, offset: float = 0.0) -> Point:
        x, y, _ = self.pose_at(s, offset)
        return x, y

    def project(self, pos: Sequence[float]) -> Projection:
        x, y = float(pos[0]), float(pos[1])
        best: Projection | None = None
        for i, seg in enumerate(self._segments):
            u, lat, dist = seg.project(x, y)
            if best is None or dist < best.distance - 1e-12:
                best = Projection(seg.s0 + u, lat, dist, i)
        s = best.s
        if self.closed and s >= self.total_length - 1e-12:
            s = 0.0
        return Projection(s, best.offset, best.distance, best.segment)

    def centerline_distance(self, pos: Sequence[float]) -> float:
        """Distance to the closest centerline point (the function q)."""
        return self.project(pos).distance

    def on_track(self, pos: Sequence[float]) -> bool:
        return self.centerline_distance(pos) <= self.half_width

    def lane_for_offset(self, offset: float) -> int:
        # nearest lane center, ties toward the lower index
        raw = offset / self.lane_width + (self.lanes + 1) / 2.0
        lane = math.ceil(raw - 0.5 - 1e-12)
        return min(max(lane, 1), self.lanes)

    def lane_id(self, pos: Sequence[float]) -> int:
        """Lane containing ``pos`` (the function z)."""
        proj = self.project(pos)
        if proj.distance > self.half_width:
            raise OffTrackError(f"off-track: distance {proj.distance:.3f} > {self.half_width}")
        return self.lane_for_offset(proj.offset)

    def progress(self, pos: Sequence[float]) -> float:
        proj = self.project(pos)
        if proj.distance > self.half_width:
            raise OffTrackError(f"off-track: distance {proj.distance:.3f} > {self.half_width}")
        return proj.s

    def checkpoint_for_progress(self, s: float) -> int:
        k = int(math.floor(s / self.spacing + 1e-9))
        return min(max(k, 0), self.tau)

    def last_checkpoint(self, pos: Sequence[float], r_prev: int) -> int:
        """Index of the latest checkpoint passed (the function p).

        Monotone in ``r_prev``; a jump of more than two gates is treated as a
        projection onto the wrong side of a closed track and ignored.
        """
        s = self.project(pos).s
        if self.closed and s < r_prev * self.spacing - self.total_length / 2.0:
            s += self.total_length
        k = self.checkpoint_for_progress(s)
        if k > r_prev + 2:
            return r_prev
        return max(r_prev, k)

    def segment_is_straight(self, s: float) -> tuple[bool, int]:
        seg = self._segments[self._segment_index(s)]
        return seg.is_straight, seg.section

    def is_straight(self, pos: Sequence[float]) -> tuple[bool, int | None]:
        """Straight/curve classification and the straight-section id (None on curves)."""
        proj = self.project(pos)
        seg = self._segments[proj.segment]
        return seg.is_straight, (seg.section if seg.is_straight else None)

    def section_of(self, pos: Sequence[float]) -> int:
        return self._segments[self.project(pos).segment].section

    def heading_change(self, s_from: float, s_to: float) -> float:
        total = 0.0
        for seg in self._segments:
            lo, hi = max(seg.s0, s_from), min(seg.s1, s_to)
            if hi > lo and not seg.is_straight:
                total += seg.spec.sign * (hi - lo) / seg.spec.radius
        return total

    def boundary_pieces(self) -> list[tuple[str, tuple]]:
        """Track walls as line segments ("line", (x0, y0, x1, y1)) and arcs
        ("arc", (cx, cy, radius, start_angle, sweep))."""
        out: list[tuple[str, tuple]] = []
        w = self.half_width
        for seg in self._segments:
            length = seg.s1 - seg.s0
            for side in (1.0, -1.0):
                if seg.is_straight:
                    x0, y0, h = seg.pose(0.0)
                    x1, y1, _ = seg.pose(length)
                    ox, oy = -side * w * math.sin(h), side * w * math.cos(h)
                    out.append(("line", (x0 + ox, y0 + oy, x1 + ox, y1 + oy)))
                else:
                    cx, cy = seg.center()
                    sg = seg.spec.sign
                    radius = seg.spec.radius - sg * side * w
                    start = math.atan2(seg.y0 - cy, seg.x0 - cx)
                    out.append(("arc", (cx, cy, radius, start, sg * length / seg.spec.radius)))
        return out


def _make_checkpoint(track: TrackModel, k: int, s: float) -> Checkpoint:
    x, y, h = track.pose_at(s)
    straight, section = track.segment_is_straight(s)
    seg = track._segments[track._segment_index(s)]
    lanes = []
    radii = []
    for lane in range(1, track.lanes + 1):
        off = track.lane_offset(lane)
        lanes.append((x - off * math.sin(h), y + off * math.cos(h)))
        if not straight:
            radii.append(seg.spec.radius - seg.spec.sign * off)
    return Checkpoint(
        index=k,
        s=s,
        centerline_position=(x, y),
        tangent_heading=h,
        is_straight=straight,
        lane_positions=tuple(lanes),
        lane_turn_radii=None if straight else tuple(radii),
        straight_section_id=section if straight else None,
        section_id=section,
    )


def build_track(spec: TrackSpec) -> TrackModel:
    spec.validate()
    segments: list[_Segment] = []
    x = y = h = 0.0
    s = 0.0
    section = -1
    prev_kind = None
    for seg_spec in spec.segments:
        if seg_spec.kind != prev_kind:
            section += 1
        prev_kind = seg_spec.kind
        length = seg_spec.arc_length
        seg = _Segment(seg_spec, s, s + length, x, y, h, section)
        segments.append(seg)
        x, y, h = seg.pose(length)
        s += length
    total = s
    heading_err = math.remainder(h, TWO_PI)
    closed = math.hypot(x, y) < 1e-6 and abs(heading_err) < 1e-9
    if closed and len(segments) > 1 and segments[-1].spec.kind == segments[0].spec.kind:
        # the run wrapping through the start line is one section
        last = segments[-1].section
        segments = [
            _Segment(sg.spec, sg.s0, sg.s1, sg.x0, sg.y0, sg.h0, 0 if sg.section == last else sg.section)
            for sg in segments
        ]

    tau = int(math.floor(total / spec.checkpoint_spacing + 1e-9))
    model = TrackModel(
        spec=spec,
        total_length=total,
        closed=closed,
        checkpoints=(),
        segment_starts=tuple(sg.s0 for sg in segments),
        _segments=tuple(segments),
        _intervals=(),
    )
    cps = tuple(_make_checkpoint(model, k, k * spec.checkpoint_spacing) for k in range(1, tau + 1))
    object.__setattr__(model, "checkpoints", cps)
    object.__setattr__(model, "_start", _make_checkpoint(model, 0, 0.0))
    object.__setattr__(model, "_intervals", tuple(_make_interval(model, k) for k in range(tau)))
    return model


def _make_interval(track: TrackModel, k: int) -> Interval:
    s0, s1 = k * track.spacing, (k + 1) * track.spacing
    dh = track.heading_change(s0, s1)
    arcs = [
        sg for sg in track._segments
        if not sg.is_straight and min(sg.s1, s1) - max(sg.s0, s0) > 1e-9
    ]
    p0, p1 = track.point_at(s0), track.point_at(s1)
    chord = math.hypot(p1[0] - p0[0], p1[1] - p0[1])
    straight = not arcs
    lane_radii = []
    eff = []
    for lane in range(1, track.lanes + 1):
        off = track.lane_offset(lane)
        if straight:
            lane_radii.append(math.inf)
            eff.append(math.inf)
            continue
        lane_radii.append(min(sg.spec.radius - sg.spec.sign * off for sg in arcs))
        if abs(dh) < 1e-12:
            eff.append(math.inf)
        else:
            sign = 1.0 if dh > 0 else -1.0
            eff.append((s1 - s0) / abs(dh) - sign * off)
    return Interval(k, chord, dh, straight, tuple(lane_radii), tuple(eff))


def load_track(path: str | Path) -> TrackModel:
    return build_track(load_track_spec(path))
