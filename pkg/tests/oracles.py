"""Independent reference implementations used as test oracles.

Each oracle solves the same problem as a library routine by a different
method (brute-force integration, augmented-state LQR, best-response grid
search, exhaustive game-tree enumeration), so agreement is meaningful.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from teamrace.discrete_game import (
    GameState,
    bucket_mid,
    max_allowed_velocity,
    min_travel_time,
    n_velocity_buckets,
    tire_wear_update,
    travel_distance,
)


# --------------------------------------------------------------- kinematics


def integrate_travel_time(d, v0, v1, vstar, a, b, dt=1e-4, tol=1e-3):
    """Accelerate-cruise-brake forward integration of a point mass.

    Vectorised over equally shaped arrays.  Each step the mass brakes when
    above the speed cap or when it must start braking to arrive at ``v1``
    (the final braking phase uses the constant deceleration that lands
    exactly on ``v1``), accelerates while below the cap with room to spare,
    and cruises otherwise.  Returns ``(times, feasible, arrival_speeds)``;
    a run is feasible when the final braking never needs more than ``b``,
    the mass arrives within ``tol`` of ``v1`` and ``v1 <= vstar``.
    """
    arrays = [np.atleast_1d(np.asarray(x, dtype=float)) for x in (d, v0, v1, vstar, a, b)]
    size = arrays[0].shape[0]
    t_end = np.full(size, np.inf)
    v_end = np.zeros(size)
    overload = np.zeros(size, dtype=bool)

    idx = np.arange(size)
    d, v, v1, vstar, a, b = arrays
    v = v.copy()
    x = np.zeros(size)
    over = np.zeros(size, dtype=bool)
    t = 0.0
    while idx.size:
        for _ in range(1000):
            rem = d - x
            above = v > v1
            brake_need = np.where(above, (v * v - v1 * v1) / (2.0 * b), 0.0)
            final = above & (brake_need >= rem - v * dt)
            cap = v > vstar + 1e-12
            dec = np.where(final, (v * v - v1 * v1) / (2.0 * np.maximum(rem, 1e-12)), b)
            over |= final & (dec > b * (1.0 + 1e-6))
            v_up = np.minimum(v + a * dt, vstar)
            up_need = np.where(v_up > v1, (v_up * v_up - v1 * v1) / (2.0 * b), 0.0)
            accel = ~final & ~cap & (v < vstar) & (up_need < rem - 2.0 * v_up * dt)
            new_v = np.where(
                final | cap, np.maximum(v - np.minimum(dec, b) * dt, 0.0), np.where(accel, v_up, v)
            )
            new_x = x + 0.5 * (v + new_v) * dt
            hit = new_x >= d
            if hit.any():
                frac = (d[hit] - x[hit]) / np.maximum(new_x[hit] - x[hit], 1e-300)
                t_end[idx[hit]] = t + frac * dt
                v_end[idx[hit]] = v[hit] + (new_v[hit] - v[hit]) * frac
                overload[idx[hit]] = over[hit]
            x, v = new_x, new_v
            t += dt
            keep = ~hit & (v > 0.0)
            if not keep.all():
                idx, d, v, v1, vstar, a, b, x, over = (
                    arr[keep] for arr in (idx, d, v, v1, vstar, a, b, x, over)
                )
                if not idx.size:
                    break
    v1_all, vstar_all = arrays[2], arrays[3]
    feasible = (
        (v1_all <= vstar_all + 1e-12) & np.isfinite(t_end) & ~overload & (np.abs(v_end - v1_all) <= tol)
    )
    return t_end, feasible, v_end


# --------------------------------------------------------------------- LQR


def lqr_affine(A, B, c, Q, q, R, horizon):
    """Finite-horizon LQR on the augmented state ``z = (x, 1)``.

    Minimises ``sum_{t=1..H} x'Qx + 2q'x + sum_{t=0..H-1} u'Ru`` subject to
    ``x+ = Ax + Bu + c``.  Returns gains ``K[t]`` and offsets ``k[t]`` with
    ``u_t = -K[t] x_t - k[t]``.
    """
    n, m = B.shape
    Az = np.zeros((n + 1, n + 1))
    Az[:n, :n] = A
    Az[:n, n] = c
    Az[n, n] = 1.0
    Bz = np.vstack([B, np.zeros((1, m))])
    Qz = np.zeros((n + 1, n + 1))
    Qz[:n, :n] = Q
    Qz[:n, n] = q
    Qz[n, :n] = q
    P = Qz.copy()
    K = np.zeros((horizon, m, n))
    k = np.zeros((horizon, m))
    for t in reversed(range(horizon)):
        G = np.linalg.solve(R + Bz.T @ P @ Bz, Bz.T @ P @ Az)
        K[t], k[t] = G[:, :n], G[:, n]
        P = Qz + Az.T @ P @ (Az - Bz @ G)
    return K, k


# --------------------------------------------------------------- scalar Nash


def grid_search_nash(x0, a, b, c, Q, q, r, points=401, rounds=80):
    """Nash equilibrium of the one-step scalar game by best-response iteration.

    Player ``i`` picks ``u_i`` to minimise ``Q_i x1^2 + 2 q_i x1 + r_i u_i^2``
    with ``x1 = a x0 + b_1 u_1 + b_2 u_2 + c``.  Each best response is a grid
    search whose window shrinks around the current iterate.
    """
    u = [0.0, 0.0]
    width = 10.0
    for _ in range(rounds):
        for i in (0, 1):
            j = 1 - i
            grid = np.linspace(u[i] - width, u[i] + width, points)
            x1 = a * x0 + b[i] * grid + b[j] * u[j] + c
            cost = Q[i] * x1**2 + 2.0 * q[i] * x1 + r[i] * grid**2
            u[i] = float(grid[int(np.argmin(cost))])
        width = max(width * 0.7, 1e-9)
    return u


# ----------------------------------------------------------------- max-n


def backward_induction(state: GameState, cfg, forced_penalty: float):
    """Exact max-n value vector (rewards = negated scores) of a game state."""
    actor = state.next_actor()
    if actor is None:
        scores = state.scores(cfg, forced_penalty)
        return tuple(-scores[s.player] for s in state.players)
    idx = state.index_of(actor)
    best = None
    for option in state.actions(cfg):
        value = backward_induction(state.play(option, cfg), cfg, forced_penalty)
        if best is None or value[idx] > best[idx]:
            best = value
    return best


def root_action_values(state: GameState, cfg, forced_penalty: float) -> dict:
    """Backward-induction value of each root action for the root actor."""
    idx = state.index_of(state.next_actor())
    return {
        o.action: backward_induction(state.play(o, cfg), cfg, forced_penalty)[idx]
        for o in state.actions(cfg)
    }


# ------------------------------------------------------------ racing line


def enumerate_line_times(track, vehicle, lane_change_limit):
    """Exhaustive shortest single-player lap over lanes x velocity buckets.

    Starts from rest (lowest bucket) in any lane.  Wear is accumulated
    exactly along each path; lane changes inside one straight section are
    capped at ``lane_change_limit``.  Returns ``(best_time, best_path)``
    where the path lists ``(lane, bucket)`` at checkpoints 0..tau.
    """
    nb = n_velocity_buckets(vehicle.v_max)
    best = (math.inf, None)

    def rec(k, lane, bucket, changes, wear, elapsed, path):
        nonlocal best
        if elapsed >= best[0] - 1e-12:
            return
        if k == track.tau:
            best = (elapsed, list(path))
            return
        g0, g1 = track.gate(k), track.gate(k + 1)
        iv = track.interval(k)
        vstar = max_allowed_velocity(wear, iv.lane_radii[lane - 1], vehicle)
        for lane2, b2 in itertools.product(range(1, track.lanes + 1), range(nb)):
            delta = abs(lane2 - lane)
            same = g0.section_id == g1.section_id
            if same:
                new_changes = changes + delta if g1.is_straight else changes
                charged = new_changes
            else:
                new_changes = delta if g1.is_straight else 0
                charged = changes + delta if g0.is_straight else 0
            if delta and ((g1.is_straight and new_changes > lane_change_limit) or (g0.is_straight and charged > lane_change_limit)):
                continue
            d = travel_distance(track, k, lane, lane2)
            dt = min_travel_time(d, bucket_mid(bucket), bucket_mid(b2), vstar, vehicle.a, vehicle.b)
            if dt is None:
                continue
            de = tire_wear_update(track, k, lane, lane2, d, bucket_mid(b2), vehicle)
            path.append((lane2, b2))
            rec(k + 1, lane2, b2, new_changes, min(wear + de, 0.999), elapsed + dt, path)
            path.pop()

    for lane in range(1, track.lanes + 1):
        rec(0, lane, 0, 0, 0.0, 0.0, [(lane, 0)])
    return best
