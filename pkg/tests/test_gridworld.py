import math

import numpy as np
import pytest

from dppoptions import gridworld as gw
from dppoptions.spectral import build_graph


def _free_adjacency(maze):
    edges = set()
    for r, c in maze.free_cells:
        for dr, dc in ((1, 0), (0, 1)):
            nb = (r + dr, c + dc)
            if maze.in_bounds(nb) and nb not in maze.walls:
                a, b = maze.state_of((r, c)), maze.state_of(nb)
                edges.add((min(a, b), max(a, b)))
    return tuple(sorted(edges))


def test_four_room_layout():
    maze = gw.four_room(11)
    assert maze.n_states == 104
    assert len(maze.bottlenecks) == 4
    assert gw.is_connected(maze)
    doors = {maze.state_of(d) for d in maze.bottlenecks}
    # removing all doorways leaves exactly four rooms
    remaining = set(range(maze.n_states)) - doors
    rooms = 0
    while remaining:
        seen = gw.reachable(maze, next(iter(remaining)), blocked=frozenset(doors))
        remaining -= seen
        rooms += 1
    assert rooms == 4
    table = gw.transition_table(maze)
    for d in maze.bottlenecks:
        s = maze.state_of(d)
        # one-cell doorway: exactly two free neighbours
        assert len(set(table[s].tolist()) - {s}) == 2


def test_corridor_chambers_only_through_doors():
    maze = gw.corridor(chambers=4)
    assert gw.is_connected(maze)
    row = maze.height // 2
    corridor_cells = {maze.state_of((row, c)) for c in range(1, maze.width - 1)}
    for d in maze.bottlenecks:
        door = maze.state_of(d)
        # the doorway is a cut vertex separating its chamber from the corridor
        seen = gw.reachable(maze, maze.start_states[0], blocked=frozenset({door}))
        assert len(seen) < maze.n_states - 1
        assert corridor_cells <= seen
    assert maze.n_states == 31 + 4 * (9 + 1)


def test_degenerate_sizes():
    with pytest.raises(ValueError):
        gw.four_room(1)
    with pytest.raises(ValueError):
        gw.build_maze("corridor", length=1)
    with pytest.raises(ValueError):
        gw.build_maze("spiral")


def test_step_walls_and_open_moves():
    maze = gw.parse_maze("#####\n#S..#\n#####\n")
    s = maze.state_of((1, 1))
    assert gw.step(maze, s, 0) == s  # up into wall
    assert gw.step(maze, s, 2) == s  # left into wall
    assert gw.step(maze, s, 3) == maze.state_of((1, 2))


def test_full_sweep_stays_free_and_matches_table():
    for maze in (gw.four_room(), gw.corridor()):
        table = gw.transition_table(maze)
        for s in range(maze.n_states):
            for a in range(gw.N_ACTIONS):
                s2 = gw.step(maze, s, a)
                assert 0 <= s2 < maze.n_states
                assert table[s, a] == s2
                assert maze.cell_of(s2) not in maze.walls


def test_graph_matches_free_cell_adjacency():
    for maze in (gw.four_room(7), gw.corridor(15, 2, 2)):
        g = build_graph(gw.all_transitions(maze), maze.n_states)
        assert g.edges == _free_adjacency(maze)


def test_maze_text_roundtrip():
    text = "#######\n#S..B.#\n#.##..#\n#....G#\n#######\n"
    maze = gw.parse_maze(text)
    assert gw.format_maze(maze) == text
    assert maze.starts == ((1, 1),) and maze.goals == ((3, 5),)
    with pytest.raises(ValueError):
        gw.parse_maze("#?#\n")
    with pytest.raises(ValueError):
        gw.MazeSpec(3, 3, frozenset({(1, 1)}), starts=((1, 1),))


def test_xy_coordinates():
    maze = gw.parse_maze("####\n#S.#\n#..#\n####\n")
    assert maze.xy(maze.state_of((1, 1))) == (1, 2)
    assert maze.xy(maze.state_of((2, 2))) == (2, 1)


def test_uniform_rollout():
    maze = gw.four_room()
    rec = gw.rollout(maze, maze.start_states[0], gw.uniform_policy, 0, 50, np.random.default_rng(0))
    assert len(rec.states) == 51 and len(rec.actions) == 50
    np.testing.assert_allclose(rec.logprobs, math.log(0.25))
    assert gw.random_walk_logprob(rec) == pytest.approx(-50 * math.log(4))
    assert gw.random_walk_logprob(rec) == pytest.approx(sum(rec.logprobs))


def test_deterministic_straight_line():
    maze = gw.parse_maze("#######\n#S....#\n#######\n")
    right = lambda s, c: np.array([0.0, 0.0, 0.0, 1.0])
    rec = gw.rollout(maze, 0, right, 3, 6, np.random.default_rng(0))
    assert rec.states == [0, 1, 2, 3, 4, 4, 4]
    assert rec.option == 3
    np.testing.assert_allclose(rec.logprobs, 0.0)


def test_rollout_replay_and_logprobs():
    maze = gw.corridor()
    rng = np.random.default_rng(4)
    logits = rng.normal(size=(maze.n_states, 4))

    def pol(s, c):
        e = np.exp(logits[s] - logits[s].max())
        return e / e.sum()

    a = gw.rollout(maze, 5, pol, 1, 30, np.random.default_rng(9))
    b = gw.rollout(maze, 5, pol, 1, 30, np.random.default_rng(9))
    assert a.states == b.states and a.actions == b.actions
    for s, act, lp in zip(a.states, a.actions, a.logprobs):
        assert lp == pytest.approx(math.log(pol(s, 1)[act]))


def test_rollout_errors():
    maze = gw.four_room()
    with pytest.raises(ValueError):
        gw.rollout(maze, 0, gw.uniform_policy, 0, 0, np.random.default_rng(0))
    bad = lambda s, c: np.array([np.nan, 0.5, 0.25, 0.25])
    with pytest.raises(FloatingPointError):
        gw.rollout(maze, 0, bad, 0, 3, np.random.default_rng(0))
    with pytest.raises(ValueError):
        gw.TrajectoryRecord(0, [0, 1], [0, 1], [0.0, 0.0])
    with pytest.raises(ValueError):
        gw.TrajectoryRecord(0, [0, 1], [0], [-math.inf])


def test_jsonl_roundtrip(tmp_path):
    maze = gw.four_room()
    rng = np.random.default_rng(1)
    recs = [gw.rollout(maze, maze.start_states[0], gw.uniform_policy, c, 5, rng) for c in range(3)]
    path = tmp_path / "t.jsonl"
    gw.write_jsonl(path, maze, recs)
    back = gw.read_jsonl(path, maze)
    assert [r.states for r in back] == [r.states for r in recs]
    assert [r.option for r in back] == [0, 1, 2]
    raw = gw.read_jsonl(path)
    assert raw[0].states[0] == maze.xy(recs[0].states[0])
    path.write_text('{"option": 0, "states": [[0, 0]], "actions": [], "logprobs": []}\n')
    with pytest.raises(ValueError, match="not a free cell"):
        gw.read_jsonl(path, maze)
    path.write_text("{not json}\n")
    with pytest.raises(ValueError, match="malformed"):
        gw.read_jsonl(path)
