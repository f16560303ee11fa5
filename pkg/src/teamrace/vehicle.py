"""Unicycle vehicle model with an exponential tire-wear grip law."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np

DT = 0.02
ZERO_SPEED_YAW_LIMIT = 1.0  # rad/s bound on yaw rate while stationary


@dataclass(frozen=True)
class VehicleParams:
    a: float = 4.0
    b: float = 8.0
    v_max: float = 22.0
    a_max: float = 12.0
    a_min: float = 6.0
    wear_rate: float = 0.05
    vehicle_radius: float = 0.6
    L_straight: float = 1e-5
    L_curve: float = 1.5e-4

    def __post_init__(self) -> None:
        if min(self.a, self.b, self.v_max) <= 0:
            raise ValueError("a, b and v_max must be positive")
        if not self.a_max > self.a_min > 0:
            raise ValueError("need a_max > a_min > 0")
        if self.wear_rate < 0:
            raise ValueError("wear_rate must be non-negative")
        if self.vehicle_radius <= 0:
            raise ValueError("vehicle_radius must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "VehicleParams":
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown vehicle keys: {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in data.items()})


def load_vehicle(path: str | Path) -> VehicleParams:
    with open(path, encoding="utf-8") as f:
        return VehicleParams.from_dict(json.load(f))


@dataclass(frozen=True)
class ContinuousState:
    x: float
    y: float
    v: float
    theta: float
    accumulated_turn: float = 0.0
    tire_wear: float = 0.0
    lane_change_count: int = 0
    last_checkpoint: int = 0
    elapsed_time: float = 0.0
    section: int | None = None
    lane: int | None = None

    @property
    def pos(self) -> tuple[float, float]:
        return (self.x, self.y)

    def vector(self) -> np.ndarray:
        return np.array([self.x, self.y, self.v, self.theta])


@dataclass(frozen=True)
class ControlInput:
    accel: float
    yaw_rate: float


def allowed_lateral_accel(wear: float, params: VehicleParams) -> float:
    return params.a_max - (params.a_max - params.a_min) * wear


def update_tire_wear(accumulated_turn: float, params: VehicleParams) -> float:
    return 1.0 - math.exp(-params.wear_rate * accumulated_turn)


def clamp_control(state: ContinuousState, u: ControlInput, params: VehicleParams) -> ControlInput:
    accel = min(max(u.accel, -params.b), params.a)
    if state.v > 1e-9:
        limit = allowed_lateral_accel(state.tire_wear, params) / state.v
    else:
        limit = ZERO_SPEED_YAW_LIMIT
    yaw = min(max(u.yaw_rate, -limit), limit)
    if accel == u.accel and yaw == u.yaw_rate:
        return u
    return ControlInput(accel, yaw)


def integrate(
    x: float, y: float, v: float, theta: float, accel: float, yaw: float, dt: float, v_max: float
) -> tuple[float, float, float, float]:
    """One forward-Euler step of the unicycle; speed clipped to [0, v_max]."""
    nx = x + v * math.cos(theta) * dt
    ny = y + v * math.sin(theta) * dt
    nv = min(max(v + accel * dt, 0.0), v_max)
    return nx, ny, nv, theta + yaw * dt


def step(state: ContinuousState, u: ControlInput, dt: float, params: VehicleParams) -> ContinuousState:
    """Advance kinematics, tire wear and clock.  ``u`` must already be clamped.

    Checkpoint and lane bookkeeping is track-dependent and handled by the
    race loop (see :mod:`teamrace.rules`).
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    x, y, v, th = integrate(state.x, state.y, state.v, state.theta, u.accel, u.yaw_rate, dt, params.v_max)
    turn = state.accumulated_turn + abs(u.yaw_rate) * dt
    return replace(
        state,
        x=x,
        y=y,
        v=v,
        theta=th,
        accumulated_turn=turn,
        tire_wear=update_tire_wear(turn, params),
        elapsed_time=state.elapsed_time + dt,
    )


def linearize(state0: ContinuousState | np.ndarray, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Jacobians of :func:`integrate` at ``state0`` w.r.t. (x, y, v, theta) and (accel, yaw)."""
    if isinstance(state0, ContinuousState):
        v0, th0 = state0.v, state0.theta
    else:
        v0, th0 = float(state0[2]), float(state0[3])
    c, s = math.cos(th0), math.sin(th0)
    A = np.array(
        [
            [1.0, 0.0, c * dt, -v0 * s * dt],
            [0.0, 1.0, s * dt, v0 * c * dt],
            [0.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ]
    )
    B = np.array([[0.0, 0.0], [0.0, 0.0], [dt, 0.0], [0.0, dt]])
    return A, B


def drift(state0: ContinuousState | np.ndarray, dt: float) -> np.ndarray:
    """Zero-input displacement f(x0, 0) - x0 over one step (ignores the speed clip)."""
    if isinstance(state0, ContinuousState):
        v0, th0 = state0.v, state0.theta
    else:
        v0, th0 = float(state0[2]), float(state0[3])
    return np.array([v0 * math.cos(th0) * dt, v0 * math.sin(th0) * dt, 0.0, 0.0])
