import math
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from teamrace.harness import resolve_data  # noqa: E402
from teamrace.track import SegmentSpec, TrackSpec, build_track, load_track  # noqa: E402
from teamrace.vehicle import VehicleParams, load_vehicle  # noqa: E402


def straight_track(length=100.0, lanes=4, lane_width=2.0, spacing=10.0, limit=2, name="straight"):
    spec = TrackSpec(name, lanes, lane_width, lanes * lane_width / 2.0, limit, spacing, (SegmentSpec("straight", length),))
    return build_track(spec)


def small_oval(straight=10.0, radius=5.0, lanes=2, lane_width=2.0, spacing=10.0, limit=2):
    segs = (
        SegmentSpec("straight", straight),
        SegmentSpec("arc", radius=radius, angle=math.pi, direction="left"),
        SegmentSpec("straight", straight),
        SegmentSpec("arc", radius=radius, angle=math.pi, direction="left"),
    )
    spec = TrackSpec("small-oval", lanes, lane_width, lanes * lane_width / 2.0, limit, spacing, segs)
    return build_track(spec)


@pytest.fixture(scope="session")
def oval():
    return load_track(resolve_data("oval", "track"))


@pytest.fixture(scope="session")
def kart():
    return load_vehicle(resolve_data("kart", "vehicle"))


@pytest.fixture(scope="session")
def straight100():
    return straight_track()


@pytest.fixture
def slow_vehicle():
    """Three velocity buckets, grip never binding on small tracks."""
    return VehicleParams(a=2.0, b=4.0, v_max=6.0, a_max=12.0, a_min=6.0)
