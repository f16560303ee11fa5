import json
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import straight_track
from teamrace.track import OffTrackError, SegmentSpec, TrackError, TrackSpec, build_track, load_track


def test_straight_checkpoints_every_spacing(straight100):
    assert straight100.tau == 10
    assert [g.s for g in straight100.checkpoints] == pytest.approx([10.0 * k for k in range(1, 11)])
    assert straight100.gate(0).s == 0.0


def test_oval_length_and_checkpoint_count(oval):
    assert oval.total_length == pytest.approx(200.0 + 2.0 * math.pi * 30.0, abs=1e-9)
    assert round(oval.total_length, 2) == 388.50
    assert oval.tau == 32
    assert oval.closed


def test_consecutive_checkpoints_spaced_exactly(oval):
    s = [g.s for g in oval.checkpoints]
    assert all(b - a == pytest.approx(12.0, abs=1e-9) for a, b in zip(s, s[1:]))


def test_arc_with_nonpositive_inner_lane_is_rejected():
    spec = TrackSpec("bad", 4, 2.0, 4.0, 2, 10.0, (SegmentSpec("arc", radius=1.0, angle=math.pi, direction="left"),))
    with pytest.raises(TrackError, match="radius"):
        build_track(spec)


@pytest.mark.parametrize(
    "field,value",
    [("lanes", 0), ("lane_width", -1.0), ("track_half_width", 1.0), ("checkpoint_spacing", 9.0), ("lane_change_limit", -1)],
)
def test_invalid_spec_fields_named_in_error(field, value):
    base = dict(name="t", lanes=4, lane_width=2.0, track_half_width=4.0, lane_change_limit=2, checkpoint_spacing=10.0,
                segments=(SegmentSpec("straight", 100.0),))
    base[field] = value
    with pytest.raises(TrackError, match=field):
        build_track(TrackSpec(**base))


def test_parser_rejects_unknown_keys(tmp_path, oval):
    data = oval.spec.to_dict()
    data["banking"] = 3
    path = tmp_path / "t.json"
    path.write_text(json.dumps(data))
    with pytest.raises(TrackError):
        load_track(path)


def test_spec_round_trip(tmp_path, oval):
    path = tmp_path / "oval.json"
    path.write_text(json.dumps(oval.spec.to_dict()))
    again = load_track(path)
    assert again.digest() == oval.digest()
    assert again.total_length == oval.total_length


def test_centerline_distance_examples(oval, straight100):
    assert straight100.centerline_distance((50.0, 1.5)) == pytest.approx(1.5)
    assert straight100.centerline_distance((50.0, 0.0)) == pytest.approx(0.0)
    # first arc of the oval is centred at (100, 30) with radius 30
    ang = -math.pi / 4.0
    point = (100.0 + 32.0 * math.cos(ang), 30.0 + 32.0 * math.sin(ang))
    assert oval.centerline_distance(point) == pytest.approx(2.0, abs=1e-9)


@pytest.mark.parametrize("offset,lane", [(1.0, 3), (0.0, 2), (-2.9, 1), (3.0, 4), (-1.0, 2)])
def test_lane_for_offset(straight100, offset, lane):
    assert straight100.lane_for_offset(offset) == lane
    assert straight100.lane_id((50.0, offset)) == lane


def test_lane_id_off_track_raises(straight100):
    with pytest.raises(OffTrackError):
        straight100.lane_id((50.0, 4.5))
    with pytest.raises(OffTrackError):
        straight100.progress((50.0, -4.01))


@pytest.mark.parametrize("s,r_prev,expected", [(35.0, 3, 3), (41.0, 3, 4), (25.0, 4, 4)])
def test_last_checkpoint_examples(straight100, s, r_prev, expected):
    assert straight100.last_checkpoint((s, 0.0), r_prev) == expected


def test_straight_classification(oval):
    straight, section = oval.is_straight((50.0, 0.0))
    assert straight and section is not None
    curved, none = oval.is_straight(oval.point_at(150.0))
    assert not curved and none is None


def test_abutting_straights_share_section():
    spec = TrackSpec("two", 4, 2.0, 4.0, 2, 10.0, (SegmentSpec("straight", 40.0), SegmentSpec("straight", 60.0)))
    track = build_track(spec)
    assert track.is_straight((10.0, 0.0)) == track.is_straight((80.0, 0.0))
    assert len({g.straight_section_id for g in track.checkpoints}) == 1


def test_progress_examples(oval):
    assert oval.progress((0.0, 0.0)) == pytest.approx(0.0)
    assert oval.progress((50.0, 0.0)) == pytest.approx(50.0)
    quarter = (100.0 + 30.0 * math.sin(math.pi / 4), 30.0 - 30.0 * math.cos(math.pi / 4))
    assert oval.progress(quarter) == pytest.approx(100.0 + 0.25 * math.pi * 30.0, abs=1e-9)
    assert round(oval.progress(quarter), 2) == 123.56


def test_lane_numbering_and_inner_lane(oval):
    # lane 1 is the right-most lane; on the left-turning oval lane 4 is inner
    gate = oval.gate(12)
    assert not gate.is_straight
    radii = gate.lane_turn_radii
    assert radii == pytest.approx((33.0, 31.0, 29.0, 27.0))
    assert oval.lane_offset(1) == -3.0 and oval.lane_offset(4) == 3.0


def test_every_lane_position_maps_back(oval):
    for gate in oval.checkpoints:
        for lane, pos in enumerate(gate.lane_positions, start=1):
            assert oval.lane_id(pos) == lane
            assert oval.centerline_distance(pos) <= oval.half_width
            # lane positions lie on the perpendicular to the tangent
            dx, dy = pos[0] - gate.centerline_position[0], pos[1] - gate.centerline_position[1]
            assert dx * math.cos(gate.tangent_heading) + dy * math.sin(gate.tangent_heading) == pytest.approx(0.0, abs=1e-9)


@settings(max_examples=200, deadline=None)
@given(s=st.floats(0.0, 388.0), d=st.floats(-4.9, 4.9))
def test_progress_and_distance_reconstruct(oval, s, d):
    point = oval.point_at(s, d)
    proj = oval.project(point)
    assert proj.distance == pytest.approx(abs(d), abs=1e-9)
    assert proj.s == pytest.approx(s, abs=1e-9) or (s > oval.total_length - 1e-9 and proj.s == 0.0)


@settings(max_examples=100, deadline=None)
@given(steps=st.lists(st.floats(0.0, 6.0), min_size=1, max_size=40), lateral=st.floats(-3.0, 3.0))
def test_last_checkpoint_monotone_along_forward_motion(steps, lateral):
    track = straight_track(length=150.0, spacing=12.0)
    r, s = 0, 0.0
    for ds in steps:
        s = min(s + ds, 150.0)
        new_r = track.last_checkpoint((s, lateral), r)
        assert new_r >= r
        r = new_r


def test_open_straight_has_no_wrap():
    track = straight_track(length=55.0, spacing=11.0)
    assert track.tau == 5 and not track.closed
