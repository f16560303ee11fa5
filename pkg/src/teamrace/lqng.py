"""
Short-horizon linear-quadratic Nash game (LQNG) waypoint tracker.

Every player's dynamics are linearized about its current state; the game is
posed in deviation coordinates ``dx = X - X0`` over the stacked joint state
``X = (x, y, v, theta)`` of all modelled players:

    dx_{t+1} = A dx_t + sum_j B_j u_j,t + c,        c = f(X0, 0) - X0

Player ``i`` minimises ``sum_{t=1..H} (dx_t' Q_i dx_t + 2 q_i' dx_t)
+ sum_{t=0..H-1} sum_j u_j,t' R_ij u_j,t``.  The feedback Nash equilibrium
is computed by the coupled backward Riccati recursion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .vehicle import DT, ContinuousState, ControlInput, VehicleParams, clamp_control, drift, linearize

HORIZON_SECONDS = 0.06
NX = 4
NU = 2


def horizon_steps(horizon: float = HORIZON_SECONDS, dt: float = DT) -> int:
    steps = int(round(horizon / dt))
    if steps < 1 or abs(steps * dt - horizon) > 1e-9:
        raise ValueError(f"horizon {horizon} is not a positive multiple of dt {dt}")
    return steps


class IllPosedGameError(RuntimeError):
    """Raised when the coupled gain equations have no unique solution."""


class IndefiniteGameError(IllPosedGameError):
    """Raised when a player's own control block is not positive definite."""


@dataclass(frozen=True)
class LqngWeights:
    rho1: float = 1.0    # own waypoint position
    rho2: float = 2.0    # own target velocity
    rho3: float = 6.0    # own target heading
    rho4: float = 0.05   # help teammates reach their waypoints
    rho5: float = 0.05   # hinder opponents
    rho6: float = 0.2    # separation from every other player
    rho_u: float = 1e-4  # control regularization

    def __post_init__(self) -> None:
        if self.rho_u <= 0:
            raise ValueError("rho_u must be strictly positive")
        for name in ("rho1", "rho2", "rho3", "rho4", "rho5", "rho6"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    def tracking_only(self) -> "LqngWeights":
        return replace(self, rho4=0.0, rho5=0.0, rho6=0.0)


@dataclass(frozen=True)
class Waypoint:
    """Target (x, y, v, theta) for one player."""

    x: float
    y: float
    v: float
    theta: float


@dataclass
class LqGameProblem:
    players: tuple[int, ...]
    A: np.ndarray                 # (n, n)
    B: list[np.ndarray]           # per player (n, 2)
    c: np.ndarray                 # (n,)
    Q: list[np.ndarray]           # per player (n, n), applied at t = 1..H
    q: list[np.ndarray]           # per player (n,)
    R: list[list[np.ndarray]]     # R[i][j] (2, 2): cost to i of j's control
    horizon: int
    x0: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self) -> None:
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")
        n = self.A.shape[0]
        if len(self.x0) == 0:
            self.x0 = np.zeros(n)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    def index(self, player: int) -> int:
        return self.players.index(player)


@dataclass
class NashSolution:
    players: tuple[int, ...]
    K: np.ndarray   # (N, H, 2, n)
    k: np.ndarray   # (N, H, 2)
    x0: np.ndarray

    def index(self, player: int) -> int:
        return self.players.index(player)


# ------------------------------------------------------------------ costs


def _wrap(angle: float) -> float:
    return (angle + math.pi) % (2.0 * math.pi) - math.pi


def build_costs(
    ego: int,
    teams: Mapping[int, str],
    waypoints: Mapping[int, Waypoint],
    weights: LqngWeights,
    states: Mapping[int, ContinuousState],
    dt: float = DT,
    horizon: int | None = None,
) -> LqGameProblem:
    """Assemble the joint LQ game around every modelled player's target waypoint.

    ``states`` defines the modelled players (ego first in the ordering);
    ``waypoints`` must cover each of them.
    """
    if ego not in states:
        raise KeyError(f"ego player {ego} has no state")
    players = (ego,) + tuple(p for p in sorted(states) if p != ego)
    for p in players:
        if p not in waypoints:
            raise ValueError(f"missing waypoint for player {p}")
    H = horizon_steps(dt=dt) if horizon is None else horizon
    N = len(players)
    n = NX * N
    A = np.zeros((n, n))
    c = np.zeros(n)
    x0 = np.zeros(n)
    Bs = []
    for idx, p in enumerate(players):
        sl = slice(NX * idx, NX * idx + NX)
        Ai, Bi = linearize(states[p], dt)
        A[sl, sl] = Ai
        c[sl] = drift(states[p], dt)
        x0[sl] = states[p].vector()
        B = np.zeros((n, NU))
        B[sl, :] = Bi
        Bs.append(B)

    # deviation of each player's (x, y, v, theta) from its own target
    offsets = []
    for idx, p in enumerate(players):
        st, wp = states[p], waypoints[p]
        offsets.append(
            np.array([st.x - wp.x, st.y - wp.y, st.v - wp.v, _wrap(st.theta - wp.theta)])
        )

    Qs, qs, Rs = [], [], []
    for i, pi in enumerate(players):
        Q = np.zeros((n, n))
        q = np.zeros(n)

        def add_diag(idx: int, comps: Sequence[int], rho: float) -> None:
            for comp in comps:
                a = NX * idx + comp
                Q[a, a] += rho
                q[a] += rho * offsets[idx][comp]

        add_diag(i, (0, 1), weights.rho1)
        add_diag(i, (2,), weights.rho2)
        add_diag(i, (3,), weights.rho3)
        for j, pj in enumerate(players):
            if j == i:
                continue
            if teams[pj] == teams[pi]:
                add_diag(j, (0, 1), weights.rho4)
            else:
                add_diag(j, (0, 1), -weights.rho5)
            # -rho6 * ||p_j - p_i||^2
            r6 = weights.rho6
            if r6:
                for comp in (0, 1):
                    a, b = NX * i + comp, NX * j + comp
                    Q[a, a] -= r6
                    Q[b, b] -= r6
                    Q[a, b] += r6
                    Q[b, a] += r6
                    gap = x0[b] - x0[a]
                    q[b] -= r6 * gap
                    q[a] += r6 * gap
        R = [np.zeros((NU, NU)) for _ in players]
        R[i] = weights.rho_u * np.eye(NU)
        Qs.append(Q)
        qs.append(q)
        Rs.append(R)
    return LqGameProblem(players, A, Bs, c, Qs, qs, Rs, H, x0)


# ----------------------------------------------------------------- solver


def solve_coupled_riccati(problem: LqGameProblem) -> NashSolution:
    """Feedback Nash equilibrium of the finite-horizon LQ game."""
    N = len(problem.players)
    n, H = problem.n, problem.horizon
    A, c, Bs = problem.A, problem.c, problem.B
    m = NU * N
    Z = [Q.copy() for Q in problem.Q]
    zeta = [q.copy() for q in problem.q]
    K = np.zeros((N, H, NU, n))
    kff = np.zeros((N, H, NU))
    Ball = np.hstack(Bs)  # (n, m)
    for t in range(H - 1, -1, -1):
        M = np.zeros((m, m))
        rhs_K = np.zeros((m, n))
        rhs_k = np.zeros(m)
        for i in range(N):
            rows = slice(NU * i, NU * i + NU)
            BiW = Bs[i].T @ Z[i]
            own = problem.R[i][i] + BiW @ Bs[i]
            own = 0.5 * (own + own.T)
            if np.linalg.eigvalsh(own)[0] <= 0.0:
                raise IndefiniteGameError(
                    f"player {problem.players[i]} control block not positive definite at step {t}"
                )
            M[rows, :] = BiW @ Ball
            M[rows, rows] = own
            rhs_K[rows] = BiW @ A
            rhs_k[rows] = BiW @ c + Bs[i].T @ zeta[i]
        try:
            if np.linalg.cond(M) > 1e12:
                raise np.linalg.LinAlgError("near singular")
            P = np.linalg.solve(M, rhs_K)
            alpha = np.linalg.solve(M, rhs_k)
        except np.linalg.LinAlgError as exc:
            raise IllPosedGameError(f"ill-posed game at step {t}: {exc}") from exc
        F = A - Ball @ P
        beta = c - Ball @ alpha
        for i in range(N):
            rows = slice(NU * i, NU * i + NU)
            K[i, t] = P[rows]
            kff[i, t] = alpha[rows]
        if t == 0:
            break
        newZ, newzeta = [], []
        for i in range(N):
            Zi = F.T @ Z[i] @ F + problem.Q[i]
            zi = F.T @ (Z[i] @ beta + zeta[i]) + problem.q[i]
            for j in range(N):
                Rij = problem.R[i][j]
                if np.any(Rij):
                    Pj = K[j, t]
                    Zi += Pj.T @ Rij @ Pj
                    zi += Pj.T @ Rij @ kff[j, t]
            newZ.append(0.5 * (Zi + Zi.T))
            newzeta.append(zi)
        Z, zeta = newZ, newzeta
    if not (np.all(np.isfinite(K)) and np.all(np.isfinite(kff))):
        raise IllPosedGameError("ill-posed game: non-finite gains")
    return NashSolution(problem.players, K, kff, problem.x0.copy())


def raw_control(solution: NashSolution, joint_state: np.ndarray, ego: int, step: int = 0) -> np.ndarray:
    """Unclamped ``u = -K dx - k`` for ``ego`` at ``step``."""
    i = solution.index(ego)
    dx = np.asarray(joint_state, dtype=float) - solution.x0
    return -solution.K[i, step] @ dx - solution.k[i, step]


def compute_control(
    solution: NashSolution,
    joint_state: np.ndarray,
    ego: int,
    ego_state: ContinuousState,
    params: VehicleParams,
) -> ControlInput:
    u = raw_control(solution, joint_state, ego)
    return clamp_control(ego_state, ControlInput(float(u[0]), float(u[1])), params)


def solve_with_fallback(
    ego: int,
    teams: Mapping[int, str],
    waypoints: Mapping[int, Waypoint],
    weights: LqngWeights,
    states: Mapping[int, ContinuousState],
    dt: float = DT,
    retries: int = 3,
) -> tuple[NashSolution, LqGameProblem, str]:
    """Solve, doubling ``rho_u`` on failure, then dropping interaction terms.

    Returns the solution, the problem actually solved and a status string
    (``"ok"``, ``"regularized"`` or ``"tracking_only"``).
    """
    w = weights
    for attempt in range(retries + 1):
        problem = build_costs(ego, teams, waypoints, w, states, dt)
        try:
            return solve_coupled_riccati(problem), problem, "ok" if attempt == 0 else "regularized"
        except IllPosedGameError:
            w = replace(w, rho_u=w.rho_u * 2.0)
    problem = build_costs(ego, teams, waypoints, weights.tracking_only(), states, dt)
    return solve_coupled_riccati(problem), problem, "tracking_only"


# -------------------------------------------------------------- waypoints


def select_target_waypoint(plan: Sequence, ego_state: ContinuousState):
    """First plan waypoint beyond the ego's last checkpoint (the last one if all passed)."""
    if not plan:
        raise ValueError("empty plan")
    for wp in plan:
        if wp.checkpoint > ego_state.last_checkpoint:
            return wp
    return plan[-1]


def waypoint_target(wp, ego_theta: float | None = None) -> Waypoint:
    """Convert a plan waypoint to a tracking target; heading unwrapped near ``ego_theta``."""
    theta = wp.heading
    if ego_theta is not None:
        theta = ego_theta + _wrap(theta - ego_theta)
    return Waypoint(wp.position[0], wp.position[1], wp.velocity, theta)
