"""
Receding-horizon Monte Carlo tree search over the checkpoint game.

Multi-player UCT in the max-n style: the player acting at a node selects
children by its own backed-up reward (the negated team score), with values
normalised by the range of rewards observed so far.

Turn order follows the players' time states, so the planning player is often
not the one acting at the root and its first decision may sit several plies
deep.  ``plan`` therefore reads the ego's choices from a table of its own
(state, action) returns gathered over every iteration, which marginalises
over the other players' interleaved moves.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

from .discrete_game import (
    ActionOutcome,
    DiscreteAction,
    _base_outcomes,
    apply_action,
    DiscreteState,
    GameConfig,
    GameState,
    Transition,
    bucket_mid,
    solo_time_to_go,
    velocity_bucket,
)
from .track import TrackModel
from .vehicle import ContinuousState

ROLLOUT_POLICIES = ("uniform", "guided")
LEAF_ESTIMATES = ("none", "solo")

DefaultPolicy = Callable[[GameState, Sequence[ActionOutcome]], ActionOutcome]
TimeToGo = Callable[[DiscreteState], float]
EgoTable = dict[tuple, dict[DiscreteAction, list[float]]]


@dataclass(frozen=True)
class MctsParams:
    iterations: int = 300
    c_uct: float = math.sqrt(2.0)
    horizon: int = 8
    nearby_radius: float = 25.0
    seed: int = 0
    forced_penalty: float = 5.0
    rollout: str = "uniform"
    guided_epsilon: float = 0.25
    min_visits: int = 4
    lane_margin: float = 0.0  # score slack within which the ego prefers the default policy's move
    leaf_estimate: str = "none"  # "solo": add each player's single-player time to go at the leaves
    record_rollouts: bool = False

    def __post_init__(self) -> None:
        if self.iterations < 1:
            raise ValueError("iterations budget must be at least 1")
        if self.c_uct <= 0:
            raise ValueError("c_uct must be positive")
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")
        if self.rollout not in ROLLOUT_POLICIES:
            raise ValueError(f"rollout must be one of {ROLLOUT_POLICIES}")
        if not 0.0 <= self.guided_epsilon <= 1.0:
            raise ValueError("guided_epsilon must lie in [0, 1]")
        if self.min_visits < 1:
            raise ValueError("min_visits must be at least 1")
        if self.lane_margin < 0:
            raise ValueError("lane_margin must be non-negative")
        if self.leaf_estimate not in LEAF_ESTIMATES:
            raise ValueError(f"leaf_estimate must be one of {LEAF_ESTIMATES}")


@dataclass(frozen=True)
class PlanWaypoint:
    checkpoint: int
    lane: int
    velocity: float
    position: tuple[float, float]
    heading: float
    searched: bool = True
    forced: bool = False


class SearchNode:
    __slots__ = ("state", "actor", "outcome", "children", "untried", "n", "totals")

    def __init__(self, state: GameState, outcome: ActionOutcome | None, cfg: GameConfig, rng: random.Random):
        self.state = state
        self.actor = state.next_actor()
        self.outcome = outcome
        self.children: dict[DiscreteAction, SearchNode] = {}
        if self.actor is None:
            self.untried: list[ActionOutcome] = []
        else:
            self.untried = list(state.actions(cfg))
            rng.shuffle(self.untried)
        self.n = 0
        self.totals = [0.0] * len(state.players)

    def mean(self, idx: int) -> float:
        return self.totals[idx] / self.n if self.n else 0.0


def uct_score(mean: float, child_n: int, parent_n: int, c: float) -> float:
    """UCB1 value of a child for the player choosing at the parent."""
    if child_n == 0:
        return math.inf
    if parent_n < 1:
        raise ValueError("parent must have been visited")
    return mean + c * math.sqrt(math.log(parent_n) / child_n)


@dataclass
class SearchResult:
    root: SearchNode
    path: list[tuple[int, Transition]]
    rollouts: list[list[float]] = field(default_factory=list)
    ego_table: EgoTable = field(default_factory=dict)

    def root_action(self) -> DiscreteAction | None:
        """Most-visited action of the player acting at the root."""
        if not self.root.children:
            return None
        idx = self.root.state.index_of(self.root.actor)
        best = max(self.root.children.values(), key=lambda c: (c.n, c.mean(idx)))
        return best.outcome.action

    def transitions_of(self, player: int) -> list[Transition]:
        return [tr for actor, tr in self.path if actor == player]


def _rewards(state: GameState, cfg: GameConfig, penalty: float, time_to_go: TimeToGo | None = None) -> list[float]:
    scores = state.scores(cfg, penalty, time_to_go)
    return [-scores[s.player] for s in state.players]


def _ego_key(s: DiscreteState) -> tuple:
    return (s.k, s.lane, s.v_bucket, s.l, s.wear)


def search(
    root_state: GameState,
    cfg: GameConfig,
    params: MctsParams,
    default_policy: DefaultPolicy | None = None,
    ego: int | None = None,
    time_to_go: TimeToGo | None = None,
) -> SearchResult:
    """Run ``params.iterations`` UCT iterations from ``root_state``.

    ``default_policy`` drives guided rollouts and deterministic completion.
    ``time_to_go`` (optional) scores leaves by estimated finish times rather
    than by the time states reached at the horizon.
    When ``ego`` is given, each iteration's ego moves (inside and beyond the
    tree) are credited with that iteration's ego reward in ``ego_table``.
    """
    if params.rollout == "guided" and default_policy is None:
        raise ValueError("guided rollouts need a default policy")
    rng = random.Random(params.seed)
    root = SearchNode(root_state, None, cfg, rng)
    lo, hi = math.inf, -math.inf
    rollouts: list[list[float]] = []
    table: EgoTable = {}
    ego_idx = root_state.index_of(ego) if ego is not None else -1
    for _ in range(params.iterations):
        node = root
        path = [root]
        ego_moves: list[tuple[tuple, DiscreteAction]] = []
        # selection
        while node.actor is not None and not node.untried and node.children:
            idx = node.state.index_of(node.actor)
            span = hi - lo if hi > lo else 1.0
            best, best_val = None, -math.inf
            for child in node.children.values():
                val = uct_score((child.mean(idx) - lo) / span, child.n, node.n, params.c_uct)
                if val > best_val:
                    best, best_val = child, val
            if node.actor == ego:
                ego_moves.append((_ego_key(node.state.players[idx]), best.outcome.action))
            node = best
            path.append(node)
        # expansion
        if node.actor is not None and node.untried:
            outcome = node.untried.pop()
            if node.actor == ego:
                ego_moves.append((_ego_key(node.state.state_of(ego)), outcome.action))
            child = SearchNode(node.state.play(outcome, cfg), outcome, cfg, rng)
            node.children[outcome.action] = child
            node = child
            path.append(node)
        # rollout
        state = node.state
        while True:
            actor = state.next_actor()
            if actor is None:
                break
            options = state.actions(cfg)
            if params.rollout == "guided" and rng.random() >= params.guided_epsilon:
                choice = default_policy(state, options)
            else:
                choice = options[rng.randrange(len(options))]
            if actor == ego:
                ego_moves.append((_ego_key(state.state_of(ego)), choice.action))
            state = state.play(choice, cfg)
        rewards = _rewards(state, cfg, params.forced_penalty, time_to_go)
        if params.record_rollouts:
            rollouts.append(rewards)
        lo = min(lo, *rewards)
        hi = max(hi, *rewards)
        for nd in path:
            nd.n += 1
            for i, r in enumerate(rewards):
                nd.totals[i] += r
        if ego is not None:
            r = rewards[ego_idx]
            for key, action in ego_moves:
                acc = table.setdefault(key, {}).setdefault(action, [0.0, 0.0])
                acc[0] += 1.0
                acc[1] += r
    result = SearchResult(root, [], rollouts, table)
    replay = _replay(root, cfg, None, {}, params.min_visits, default_policy)
    result.path = [(actor, tr) for actor, tr, _ in replay]
    return result


def fastest_safe_choice(state: GameState, options: Sequence[ActionOutcome], cfg: GameConfig) -> ActionOutcome:
    """Fastest action that does not leave the actor without a non-forced continuation."""
    before = state.state_of(state.next_actor())

    def key(o: ActionOutcome):
        return (o.dt, abs(o.action.target_lane - before.lane), o.action.target_lane, -o.action.target_v_bucket)

    ordered = sorted(options, key=key)
    for o in ordered:
        nxt = apply_action(before, o, cfg)
        if nxt.k >= state.final_k or nxt.k >= cfg.track.tau or _base_outcomes(nxt, cfg):
            return o
    return ordered[0]


def _replay(
    root: SearchNode,
    cfg: GameConfig,
    ego: int | None,
    table: EgoTable,
    min_visits: int,
    default_policy: DefaultPolicy | None,
    lane_margin: float = 0.0,
) -> list[tuple[int, Transition, bool]]:
    """Play one consistent joint line from the root.

    Non-ego players follow the most-visited child while inside the tree.  The
    ego follows the best-mean entry of its return table among actions tried
    at least ``min_visits`` times; among entries within ``lane_margin`` of
    that mean it prefers the default policy's move, then the smallest lane
    change.  Everything else uses the default policy (or the fastest safe
    action).  Each move comes from the legal action set
    of the actual joint state, so the line satisfies the game's pruning rules
    by construction; the flag on each entry tells whether the move came from
    search statistics.
    """
    out: list[tuple[int, Transition, bool]] = []
    node: SearchNode | None = root
    state = root.state
    while True:
        actor = state.next_actor()
        if actor is None:
            break
        options = state.actions(cfg)
        before = state.state_of(actor)
        by_action = {o.action: o for o in options}
        choice = None
        if actor == ego:
            slot = table.get(_ego_key(before), {})
            ranked = [
                (acc[1] / acc[0], acc[0], a.target_v_bucket, -a.target_lane, a)
                for a, acc in slot.items()
                if a in by_action and acc[0] >= min_visits
            ]
            if ranked:
                top = max(r[0] for r in ranked)
                near = [r for r in ranked if r[0] >= top - lane_margin]
                preferred = default_policy(state, options).action if default_policy is not None and len(near) > 1 else None
                best = max(near, key=lambda x: (x[4] == preferred, -abs(x[4].target_lane - before.lane)) + x[:4])
                choice = by_action[best[4]]
        elif node is not None and node.children:
            idx = node.state.index_of(actor)
            kids = [c for a, c in node.children.items() if a in by_action]
            if kids:
                best = max(kids, key=lambda c: (c.n, c.mean(idx)))
                choice = by_action[best.outcome.action]
        searched = choice is not None
        if choice is None:
            if default_policy is not None:
                choice = default_policy(state, options)
            else:
                choice = fastest_safe_choice(state, options, cfg)
        node = node.children.get(choice.action) if node is not None else None
        state = state.play(choice, cfg)
        out.append((actor, Transition(actor, before, state.state_of(actor), choice.forced), searched))
    return out


# ----------------------------------------------------------- world interface


def filter_nearby_opponents(
    ego: int,
    states: Mapping[int, ContinuousState],
    radius: float,
    teams: Mapping[int, str],
) -> list[int]:
    """Players modelled in ego's game: ego, every teammate, and opponents within ``radius``."""
    me = states[ego]
    out = []
    for pid in sorted(states):
        if pid == ego or teams[pid] == teams[ego]:
            out.append(pid)
            continue
        other = states[pid]
        if math.hypot(other.x - me.x, other.y - me.y) <= radius:
            out.append(pid)
    return out


def init_opponent_time_state(
    ego_log: Mapping[int, float], opponent_log: Mapping[int, float]
) -> tuple[float, bool]:
    """Opponent's passage-time lead/lag at the latest checkpoint both have passed.

    Returns ``(t0, cold_start)``; with no common checkpoint ``t0`` is 0.
    """
    common = set(ego_log) & set(opponent_log)
    if not common:
        return 0.0, True
    c = max(common)
    return opponent_log[c] - ego_log[c], False


@dataclass(frozen=True)
class WorldSnapshot:
    time: float
    states: Mapping[int, ContinuousState]
    passage_logs: Mapping[int, Mapping[int, float]]
    teams: Mapping[int, str]


@dataclass
class Plan:
    ego: int
    created_at: float
    waypoints: list[PlanWaypoint]
    estimates: dict[int, list[PlanWaypoint]]
    transitions: list[tuple[int, Transition]]
    forced: bool = False


def _waypoint(track: TrackModel, s: DiscreteState, searched: bool, forced: bool) -> PlanWaypoint:
    gate = track.gate(s.k)
    return PlanWaypoint(
        checkpoint=s.k,
        lane=s.lane,
        velocity=bucket_mid(s.v_bucket),
        position=gate.lane_positions[s.lane - 1],
        heading=gate.tangent_heading,
        searched=searched,
        forced=forced,
    )


def _lane_of(track: TrackModel, state: ContinuousState) -> int:
    return track.lane_for_offset(track.project(state.pos).offset)


def build_root(ego: int, snapshot: WorldSnapshot, cfg: GameConfig, horizon: int) -> GameState:
    """Joint discrete state of the ego, its teammates and nearby opponents."""
    track = cfg.track
    me = snapshot.states[ego]
    final_k = min(me.last_checkpoint + horizon, track.tau)
    members = filter_nearby_opponents(ego, snapshot.states, cfg.nearby_radius, snapshot.teams)
    ego_log = snapshot.passage_logs[ego]
    ego_ref = ego_log[me.last_checkpoint]
    players = []
    for pid in members:
        st = snapshot.states[pid]
        r = st.last_checkpoint
        if r >= final_k:
            continue
        if pid == ego:
            t0 = 0.0
        else:
            log = snapshot.passage_logs[pid]
            lead, cold = init_opponent_time_state(ego_log, log)
            if cold:
                t0 = log[r] - ego_ref
            else:
                c = max(set(ego_log) & set(log))
                # shift the common-checkpoint gap to each player's own latest checkpoint
                t0 = lead + (log[r] - log[c]) - (ego_ref - ego_log[c])
        players.append(
            DiscreteState(
                player=pid,
                k=r,
                lane=_lane_of(track, st),
                v_bucket=velocity_bucket(st.v, cfg.vehicle.v_max),
                l=st.lane_change_count,
                wear=round(min(st.tire_wear, 0.999), 2),
                t=round(math.floor(t0 * 10 + 0.5 + 1e-9) / 10, 1),
            )
        )
    return GameState.initial(players, final_k)


def plan(
    ego: int,
    snapshot: WorldSnapshot,
    cfg: GameConfig,
    params: MctsParams,
    default_policy: DefaultPolicy | None = None,
) -> Plan:
    """Tactical plan for ``ego``: its waypoints and best-response estimates for the others."""
    if ego not in snapshot.states:
        raise KeyError(ego)
    me = snapshot.states[ego]
    if me.last_checkpoint >= cfg.track.tau:
        return Plan(ego, snapshot.time, [], {}, [])
    game_cfg = cfg.with_teams(snapshot.teams)
    root = build_root(ego, snapshot, game_cfg, params.horizon)
    time_to_go = solo_time_to_go(game_cfg) if params.leaf_estimate == "solo" else None
    result = search(root, game_cfg, params, default_policy, ego, time_to_go)
    track = cfg.track
    replay = _replay(
        result.root, game_cfg, ego, result.ego_table, params.min_visits, default_policy, params.lane_margin
    )
    path = [(actor, tr) for actor, tr, _ in replay]
    waypoints: list[PlanWaypoint] = []
    estimates: dict[int, list[PlanWaypoint]] = {}
    any_forced = False
    for actor, tr, searched in replay:
        wp = _waypoint(track, tr.after, searched, tr.forced)
        any_forced |= tr.forced and actor == ego
        if actor == ego:
            waypoints.append(wp)
        else:
            estimates.setdefault(actor, []).append(wp)
    return Plan(ego, snapshot.time, waypoints, estimates, path, any_forced)

