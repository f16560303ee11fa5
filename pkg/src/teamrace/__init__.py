"""Deterministic 2v2 team racing with a hierarchical tree-search / LQ Nash game controller."""

from .controllers import ControllerKind, ControllerSpec, RacingLine, compute_racing_line
from .harness import RaceConfig, RaceResult, run_race, run_tournament
from .track import TrackModel, load_track
from .vehicle import ContinuousState, ControlInput, VehicleParams, load_vehicle

__version__ = "0.1.0"

__all__ = [
    "ContinuousState",
    "ControlInput",
    "ControllerKind",
    "ControllerSpec",
    "RaceConfig",
    "RaceResult",
    "RacingLine",
    "TrackModel",
    "VehicleParams",
    "compute_racing_line",
    "load_track",
    "load_vehicle",
    "run_race",
    "run_tournament",
]
