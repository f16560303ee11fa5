import csv
import json
import re

import pytest

from teamrace.controllers import ControllerSpec
from teamrace.harness import (
    CSV_COLUMNS,
    GRID_PERMUTATIONS,
    TEAM_A,
    TEAM_B,
    ConfigError,
    Pairing,
    RaceConfig,
    _load_env,
    aggregate,
    export,
    load_rows,
    make_grid,
    race_row,
    render_trace_svg,
    run_race,
    run_tournament,
    tournament_schedule,
)

FIXED = ControllerSpec.default("fixed-lqng")
PURSUIT = ControllerSpec.default("pursuit")


def short_race(**kw):
    base = dict(team_a=FIXED, team_b=PURSUIT, max_time=2.0)
    base.update(kw)
    return run_race(RaceConfig(**base))


# ------------------------------------------------------------------- grid


def test_six_grid_permutations():
    assert len(GRID_PERMUTATIONS) == 6
    assert len(set(GRID_PERMUTATIONS)) == 6


@pytest.mark.parametrize("grid_id", range(1, 7))
def test_grid_states_on_track(oval, grid_id):
    states, teams = make_grid(grid_id, oval)
    assert sorted(teams.values()) == [TEAM_A, TEAM_A, TEAM_B, TEAM_B]
    for st in states.values():
        assert st.v == 0.0 and st.tire_wear == 0.0
        assert abs(oval.project(st.pos).offset) <= oval.spec.track_half_width
    positions = [st.pos for st in states.values()]
    assert len(set(positions)) == 4


def test_grid_one_puts_team_a_in_front(oval):
    states, teams = make_grid(1, oval)
    front = [p for p, st in states.items() if oval.project(st.pos).s > 5.0]
    assert sorted(teams[p] for p in front) == [TEAM_A, TEAM_A]


def test_invalid_grid_rejected(oval):
    with pytest.raises(ConfigError):
        make_grid(7, oval)
    with pytest.raises(ConfigError):
        RaceConfig(grid_id=0)


def test_schedule_balances_grids():
    sched = tournament_schedule(48, base_seed=100)
    counts = {g: sum(1 for gg, _ in sched if gg == g) for g in range(1, 7)}
    assert counts == {g: 8 for g in range(1, 7)}
    assert [s for _, s in sched] == list(range(100, 148))
    with pytest.raises(ConfigError):
        tournament_schedule(10)


# ------------------------------------------------------------------- race


def test_race_is_deterministic():
    a, trace_a = short_race(seed=3)
    b, trace_b = short_race(seed=3)
    assert a.trace_hash == b.trace_hash == trace_a.digest() == trace_b.digest()
    assert trace_a.to_bytes() == trace_b.to_bytes()


def test_tiny_time_limit_means_all_dnf():
    result, _ = short_race(max_time=0.5)
    assert all(result.dnf.values())
    assert result.score.team_points == {TEAM_A: 0.0, TEAM_B: 0.0}
    assert result.winner_team() == ""


def test_trace_records_one_entry_per_tick():
    _, trace = short_race(max_time=1.0)
    assert len(trace.ticks) == 50
    assert trace.header["config_hash"]


def test_svg_has_one_point_per_tick(oval, tmp_path):
    _, trace = short_race(max_time=1.0)
    svg = render_trace_svg(trace, oval, tmp_path / "race.svg")
    assert (tmp_path / "race.svg").read_text() == svg
    players = re.findall(r'class="player" data-player="(\d)" points="([^"]*)"', svg)
    assert len(players) == 4
    for _, pts in players:
        assert len(pts.split()) == len(trace.ticks)


def test_svg_needs_states(oval):
    result, trace = run_race(RaceConfig(team_a=FIXED, team_b=PURSUIT, max_time=0.2, record_states=False))
    with pytest.raises(ValueError):
        render_trace_svg(trace, oval)


@pytest.mark.slow
def test_full_race_finishes_and_scores():
    result, _ = run_race(RaceConfig(team_a=FIXED, team_b=PURSUIT, max_time=90.0))
    assert not any(result.dnf.values())
    assert sum(result.score.team_points.values()) == pytest.approx(27.5)
    assert result.finish_order[0] == result.score.winner


# ------------------------------------------------------------- tournament


def fake_rows(n_pairings=2, races=48):
    """Rows built from real short races, replicated over the schedule."""
    result, _ = short_race(max_time=0.5)
    rows = []
    for p in range(n_pairings):
        for g, s in tournament_schedule(races):
            result.seed, result.grid_id = s, g
            rows.append(race_row(f"pair{p}", result))
    return rows


def test_rows_per_pairing_and_race():
    rows = fake_rows()
    assert len(rows) == 96
    assert all(list(r) == CSV_COLUMNS for r in rows)
    agg = aggregate(rows)
    assert set(agg) == {"pair0", "pair1"} and agg["pair0"]["races"] == 48


def test_empty_csv_has_exact_header(tmp_path):
    path = tmp_path / "empty.csv"
    export([], path)
    with open(path, newline="") as f:
        assert next(csv.reader(f)) == CSV_COLUMNS
    assert load_rows(path) == []


def test_csv_and_json_round_trip(tmp_path):
    rows = fake_rows(1, 6)
    export(rows, tmp_path / "r.csv")
    export(rows, tmp_path / "r.json", fmt="json")
    assert load_rows(tmp_path / "r.csv") == rows
    assert load_rows(tmp_path / "r.json") == rows
    data = json.loads((tmp_path / "r.json").read_text())
    assert data["aggregate"] == json.loads(json.dumps(aggregate(rows)))


def test_unknown_export_format(tmp_path):
    with pytest.raises(ConfigError):
        export([], tmp_path / "x.txt", fmt="xml")


def test_unwritable_export_path(tmp_path):
    with pytest.raises(OSError):
        export([], tmp_path / "missing" / "out.csv")


def test_tournament_independent_of_worker_count():
    pairings = [Pairing("fixed_vs_pursuit", FIXED, PURSUIT)]
    serial = run_tournament(pairings, races=6, max_time=1.0, jobs=1)
    parallel = run_tournament(pairings, races=6, max_time=1.0, jobs=2)
    assert serial == parallel
    assert sorted(r["grid_id"] for r in serial) == [1, 2, 3, 4, 5, 6]


def test_unknown_track_is_config_error():
    with pytest.raises(ConfigError):
        _load_env("no-such-track", "kart")
