import math

import numpy as np
import pytest

from oracles import grid_search_nash, lqr_affine
from teamrace.lqng import (
    NU,
    IllPosedGameError,
    LqGameProblem,
    LqngWeights,
    Waypoint,
    build_costs,
    compute_control,
    horizon_steps,
    raw_control,
    select_target_waypoint,
    solve_coupled_riccati,
    solve_with_fallback,
)
from teamrace.mcts import PlanWaypoint
from teamrace.vehicle import DT, ContinuousState, VehicleParams


def random_psd(rng, n, scale=1.0):
    M = rng.normal(size=(n, n))
    return scale * M @ M.T / n


def random_problem(rng, players, n_per=4, horizon=3, convex=True, rho_u=0.5):
    N = len(players)
    n = n_per * N
    A = np.eye(n) + 0.1 * rng.normal(size=(n, n))
    Bs = [0.3 * rng.normal(size=(n, NU)) for _ in players]
    c = 0.1 * rng.normal(size=n)
    Qs, qs, Rs = [], [], []
    for i in range(N):
        Q = random_psd(rng, n) if convex else rng.normal(size=(n, n))
        Qs.append(0.5 * (Q + Q.T))
        qs.append(rng.normal(size=n))
        R = [np.zeros((NU, NU)) for _ in players]
        R[i] = rho_u * np.eye(NU) + random_psd(rng, NU, 0.1)
        Rs.append(R)
    return LqGameProblem(tuple(players), A, Bs, c, Qs, qs, Rs, horizon)


def rollout_cost(problem, K, k, x0, player):
    """Player's cost under every player's affine feedback law from ``x0``."""
    N = len(problem.players)
    x = x0.copy()
    cost = 0.0
    for t in range(problem.horizon):
        us = [-K[j, t] @ x - k[j, t] for j in range(N)]
        cost += sum(us[j] @ problem.R[player][j] @ us[j] for j in range(N))
        x = problem.A @ x + sum(problem.B[j] @ us[j] for j in range(N)) + problem.c
        cost += x @ problem.Q[player] @ x + 2.0 * problem.q[player] @ x
    return cost


def test_horizon_is_three_steps():
    assert horizon_steps(0.06, 0.02) == 3
    with pytest.raises(ValueError):
        horizon_steps(0.05, 0.02)


@pytest.mark.parametrize("seed", range(20))
def test_single_player_matches_lqr(seed):
    rng = np.random.default_rng(seed)
    prob = random_problem(rng, (0,), horizon=5)
    sol = solve_coupled_riccati(prob)
    K, k = lqr_affine(prob.A, prob.B[0], prob.c, prob.Q[0], prob.q[0], prob.R[0][0], prob.horizon)
    assert np.max(np.abs(sol.K[0] - K)) < 1e-9
    assert np.max(np.abs(sol.k[0] - k)) < 1e-9


def scalar_game(a=1.0, b=(1.0, 0.5), c=0.2, Q=(1.0, 2.0), q=(0.3, -0.4), r=(1.0, 1.0)):
    A = np.array([[a]])
    Bs = [np.array([[b[0], 0.0]]), np.array([[0.0, b[1]]])]
    Qs = [np.array([[Q[0]]]), np.array([[Q[1]]])]
    qs = [np.array([q[0]]), np.array([q[1]])]
    Rs = [[r[0] * np.eye(2), np.zeros((2, 2))], [np.zeros((2, 2)), r[1] * np.eye(2)]]
    return LqGameProblem((0, 1), A, Bs, np.array([c]), Qs, qs, Rs, 1)


def test_scalar_two_player_matches_grid_nash():
    params = dict(a=1.0, b=(1.0, 0.5), c=0.2, Q=(1.0, 2.0), q=(0.3, -0.4), r=(1.0, 1.0))
    sol = solve_coupled_riccati(scalar_game(**params))
    for x0 in (0.0, 1.3, -0.7):
        u = grid_search_nash(x0, params["a"], params["b"], params["c"], params["Q"], params["q"], params["r"])
        mine = [-(sol.K[0, 0] @ [x0])[0] - sol.k[0, 0][0], -(sol.K[1, 0] @ [x0])[1] - sol.k[1, 0][1]]
        assert mine == pytest.approx(u, abs=1e-4)


@pytest.mark.parametrize("seed", range(5))
def test_unilateral_perturbations_do_not_help(seed):
    rng = np.random.default_rng(100 + seed)
    prob = random_problem(rng, (0, 1, 2), n_per=2, horizon=3)
    sol = solve_coupled_riccati(prob)
    x0 = rng.normal(size=prob.n)
    for i in range(3):
        base = rollout_cost(prob, sol.K, sol.k, x0, i)
        for _ in range(5):
            K, k = sol.K.copy(), sol.k.copy()
            dK, dk = rng.normal(size=K[i].shape), rng.normal(size=k[i].shape)
            norm = math.sqrt(np.sum(dK**2) + np.sum(dk**2))
            K[i] += 1e-3 * dK / norm
            k[i] += 1e-3 * dk / norm
            assert rollout_cost(prob, K, k, x0, i) >= base - 1e-6


def test_zero_state_cost_gives_zero_gains():
    rng = np.random.default_rng(0)
    prob = random_problem(rng, (0, 1))
    prob.Q = [np.zeros_like(Q) for Q in prob.Q]
    prob.q = [np.zeros_like(q) for q in prob.q]
    sol = solve_coupled_riccati(prob)
    assert np.all(sol.K == 0.0) and np.all(sol.k == 0.0)


def test_indefinite_control_block_raises():
    rng = np.random.default_rng(1)
    prob = random_problem(rng, (0,))
    prob.Q = [-100.0 * np.eye(prob.n)]
    with pytest.raises(IllPosedGameError):
        solve_coupled_riccati(prob)


# ------------------------------------------------------------------ costs


def two_player_states():
    return {
        0: ContinuousState(0.0, 0.0, 10.0, 0.0),
        1: ContinuousState(5.0, 2.0, 9.0, 0.1),
    }


def test_weights_validation():
    with pytest.raises(ValueError):
        LqngWeights(rho_u=0.0)
    with pytest.raises(ValueError):
        LqngWeights(rho4=-1.0)


def test_only_control_penalty_gives_zero_control():
    w = LqngWeights(rho1=0, rho2=0, rho3=0, rho4=0, rho5=0, rho6=0, rho_u=0.1)
    states = two_player_states()
    wps = {p: Waypoint(s.x + 10, s.y + 3, 15.0, 0.5) for p, s in states.items()}
    prob = build_costs(0, {0: "A", 1: "B"}, wps, w, states)
    sol = solve_coupled_riccati(prob)
    x = np.concatenate([states[p].vector() for p in prob.players])
    assert np.allclose(raw_control(sol, x, 0), 0.0)


def test_separation_term_is_negative_squared_distance():
    w = LqngWeights(rho1=0, rho2=0, rho3=0, rho4=0, rho5=0, rho6=0.2)
    states = two_player_states()
    wps = {p: Waypoint(s.x, s.y, s.v, s.theta) for p, s in states.items()}
    prob = build_costs(0, {0: "A", 1: "B"}, wps, w, states)
    Q = prob.Q[0]
    rng = np.random.default_rng(3)
    for _ in range(10):
        dx = rng.normal(size=8)
        dp = dx[0:2] - dx[4:6]
        assert dx @ Q @ dx == pytest.approx(-0.2 * dp @ dp)
    assert Q[0, 4] == pytest.approx(0.2) and Q[0, 0] == pytest.approx(-0.2)


def test_tracking_terms_vanish_at_waypoint():
    w = LqngWeights(rho4=0, rho5=0, rho6=0)
    states = two_player_states()
    wps = {p: Waypoint(s.x, s.y, s.v, s.theta) for p, s in states.items()}
    prob = build_costs(0, {0: "A", 1: "B"}, wps, w, states)
    assert np.allclose(prob.q[0], 0.0)


def test_missing_waypoint_names_player():
    states = two_player_states()
    with pytest.raises(ValueError, match="player 1"):
        build_costs(0, {0: "A", 1: "B"}, {0: Waypoint(0, 0, 1, 0)}, LqngWeights(), states)


def test_control_clamped_to_bounds():
    p = VehicleParams()
    state = ContinuousState(0.0, 0.0, 2.0, 0.0)
    wps = {0: Waypoint(40.0, 0.0, 22.0, 0.0)}
    sol, prob, _ = solve_with_fallback(0, {0: "A"}, wps, LqngWeights(), {0: state})
    u = compute_control(sol, state.vector(), 0, state, p)
    assert u.accel == pytest.approx(p.a)


def test_gains_continuous_in_tracking_weight():
    states = two_player_states()
    wps = {p: Waypoint(s.x + 12.0, s.y + 1.0, 12.0, 0.0) for p, s in states.items()}

    def control(rho1):
        w = LqngWeights(rho1=float(rho1))
        sol, prob, _ = solve_with_fallback(0, {0: "A", 1: "B"}, wps, w, states)
        return raw_control(sol, np.concatenate([states[p].vector() for p in prob.players]), 0)

    for rho1 in np.linspace(0.0, 1000.0, 41):
        u, nudged = control(rho1), control(rho1 * (1 + 1e-7) + 1e-7)
        assert np.all(np.isfinite(u))
        assert np.allclose(u, nudged, rtol=1e-4, atol=1e-6)


def test_solution_dimensions():
    states = {p: ContinuousState(3.0 * p, 0.0, 10.0, 0.0) for p in range(4)}
    teams = {0: "A", 1: "A", 2: "B", 3: "B"}
    wps = {p: Waypoint(s.x + 10, 0.0, 10.0, 0.0) for p, s in states.items()}
    sol, prob, status = solve_with_fallback(2, teams, wps, LqngWeights(), states)
    assert prob.players[0] == 2
    assert sol.K.shape == (4, 3, 2, 16) and sol.k.shape == (4, 3, 2)
    assert status in ("ok", "regularized", "tracking_only")


# -------------------------------------------------------------- waypoints


def make_plan(first, last):
    return [PlanWaypoint(k, 2, 10.0, (float(k), 0.0), 0.0) for k in range(first, last + 1)]


@pytest.mark.parametrize("r,expected", [(4, 5), (12, 12), (7, 8)])
def test_select_target_waypoint(r, expected):
    state = ContinuousState(0.0, 0.0, 1.0, 0.0, last_checkpoint=r)
    assert select_target_waypoint(make_plan(5, 12), state).checkpoint == expected


def test_select_target_waypoint_empty_plan():
    with pytest.raises(ValueError):
        select_target_waypoint([], ContinuousState(0.0, 0.0, 1.0, 0.0))


def test_stationary_ego_at_its_waypoint_needs_no_control():
    state = ContinuousState(3.0, -1.0, 0.0, 0.4)
    wp = Waypoint(3.0, -1.0, 0.0, 0.4)
    w = LqngWeights(rho4=0.0, rho5=0.0, rho6=0.0)
    sol, prob, _ = solve_with_fallback(0, {0: "A"}, {0: wp}, w, {0: state})
    assert np.linalg.norm(raw_control(sol, state.vector(), 0)) <= 1e-6
