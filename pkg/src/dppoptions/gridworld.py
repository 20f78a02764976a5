"""Discrete room/corridor mazes, deterministic grid dynamics and rollouts."""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

ACTIONS = ("up", "down", "left", "right")
N_ACTIONS = len(ACTIONS)
# (drow, dcol)
MOVES = np.array([(-1, 0), (1, 0), (0, -1), (0, 1)], dtype=np.int64)


@dataclass(frozen=True)
class MazeSpec:
    width: int
    height: int
    walls: frozenset  # (row, col) cells
    starts: tuple = ()
    goals: tuple = ()
    bottlenecks: tuple = ()

    def __post_init__(self):
        for cell in self.starts + self.goals:
            if cell in self.walls or not self.in_bounds(cell):
                raise ValueError(f"start/goal cell {cell} is not a free cell")
        free = [(r, c) for r in range(self.height) for c in range(self.width) if (r, c) not in self.walls]
        if not free:
            raise ValueError("maze has no free cells")
        object.__setattr__(self, "_free", tuple(free))
        object.__setattr__(self, "_index", {cell: i for i, cell in enumerate(free)})

    def in_bounds(self, cell):
        r, c = cell
        return 0 <= r < self.height and 0 <= c < self.width

    @property
    def free_cells(self):
        return self._free

    @property
    def n_states(self):
        return len(self._free)

    def state_of(self, cell):
        return self._index[tuple(cell)]

    def cell_of(self, s):
        return self._free[s]

    def xy(self, s):
        """(x, y) coordinates of a state: column, and row counted upwards."""
        r, c = self._free[s]
        return c, self.height - 1 - r

    @property
    def start_states(self):
        return tuple(self.state_of(c) for c in self.starts)

    @property
    def goal_states(self):
        return tuple(self.state_of(c) for c in self.goals)


def transition_table(maze):
    """(|S|, 4) array of successor states under deterministic moves."""
    table = np.empty((maze.n_states, N_ACTIONS), dtype=np.int64)
    for s, (r, c) in enumerate(maze.free_cells):
        for a, (dr, dc) in enumerate(MOVES):
            nxt = (r + int(dr), c + int(dc))
            table[s, a] = maze.state_of(nxt) if maze.in_bounds(nxt) and nxt not in maze.walls else s
    return table


def step(maze, s, a):
    """Move to the neighbouring cell if it is free, otherwise stay put."""
    r, c = maze.cell_of(s)
    dr, dc = MOVES[a]
    nxt = (r + int(dr), c + int(dc))
    if maze.in_bounds(nxt) and nxt not in maze.walls:
        return maze.state_of(nxt)
    return s


def all_transitions(maze):
    table = transition_table(maze)
    return [(s, a, int(table[s, a])) for s in range(maze.n_states) for a in range(N_ACTIONS)]


def reachable(maze, src, blocked=frozenset()):
    table = transition_table(maze)
    seen = {src}
    queue = deque([src])
    while queue:
        s = queue.popleft()
        for s2 in table[s]:
            s2 = int(s2)
            if s2 not in seen and s2 not in blocked:
                seen.add(s2)
                queue.append(s2)
    return seen


def is_connected(maze):
    return len(reachable(maze, 0)) == maze.n_states


def _bordered(height, width):
    walls = set()
    for r in range(height):
        walls.add((r, 0))
        walls.add((r, width - 1))
    for c in range(width):
        walls.add((0, c))
        walls.add((height - 1, c))
    return walls


def four_room(size=11):
    """Four rooms of a ``size`` x ``size`` interior split by a wall cross with one doorway per wall."""
    if size < 5:
        raise ValueError("four-room interior must be at least 5 cells wide")
    n = size + 2
    walls = _bordered(n, n)
    mid = n // 2
    for k in range(1, n - 1):
        walls.add((mid, k))
        walls.add((k, mid))
    q1 = (1 + mid) // 2
    q3 = (mid + n - 1) // 2
    doors = [(mid, q1), (mid, q3 + (1 if q3 + 1 < n - 1 else 0)), (q1 - (1 if q1 > 1 else 0), mid), (q3, mid)]
    for d in doors:
        walls.discard(d)
    start = (mid - 1 - (mid - 1) // 2, mid - 1 - (mid - 1) // 2)
    return MazeSpec(n, n, frozenset(walls), starts=(start,), bottlenecks=tuple(doors))


def corridor(length=31, chambers=4, chamber_size=3):
    """A one-cell-high corridor with ``chambers`` side rooms hanging off it.

    Chambers alternate above and below the corridor, spread towards the two
    ends, each joined to the corridor through a single doorway cell.
    """
    if length < 5 or chambers < 0 or chamber_size < 1:
        raise ValueError("degenerate corridor size")
    if chambers and length < 2 * chambers + 3:
        raise ValueError("corridor too short for the requested chambers")
    height = 2 * (chamber_size + 1) + 3
    width = length + 2
    walls = {(r, c) for r in range(height) for c in range(width)}
    row = height // 2
    for c in range(1, length + 1):
        walls.discard((row, c))
    doors = []
    for k in range(chambers):
        # alternate left/right ends, stepping inwards; alternate above/below
        j = k // 2
        offset = chamber_size // 2 + j * (chamber_size + 1)
        col = 1 + offset if k % 2 == 0 else length - offset
        up = (j + k) % 2 == 0
        door = (row - 1, col) if up else (row + 1, col)
        doors.append(door)
        walls.discard(door)
        lo = col - chamber_size // 2
        rows = range(row - 1 - chamber_size, row - 1) if up else range(row + 2, row + 2 + chamber_size)
        for r in rows:
            for c in range(lo, lo + chamber_size):
                walls.discard((r, c))
    start = (row, 1 + length // 2)
    return MazeSpec(width, height, frozenset(walls), starts=(start,), bottlenecks=tuple(doors))


def build_maze(kind, **size):
    if kind == "four_room":
        return four_room(**size)
    if kind == "corridor":
        return corridor(**size)
    raise ValueError(f"unknown maze kind {kind!r}")


def parse_maze(text):
    """Plain-text layout: ``#`` wall, ``.`` free, ``S`` start, ``G`` goal, ``B`` bottleneck."""
    rows = [ln.rstrip("\n") for ln in text.splitlines() if ln.strip()]
    if not rows:
        raise ValueError("empty maze text")
    width = max(len(r) for r in rows)
    walls, starts, goals, necks = set(), [], [], []
    for r, line in enumerate(rows):
        for c in range(width):
            ch = line[c] if c < len(line) else "#"
            if ch == "#":
                walls.add((r, c))
            elif ch == "S":
                starts.append((r, c))
            elif ch == "G":
                goals.append((r, c))
            elif ch == "B":
                necks.append((r, c))
            elif ch != ".":
                raise ValueError(f"unknown maze character {ch!r} at row {r}")
    return MazeSpec(width, len(rows), frozenset(walls), tuple(starts), tuple(goals), tuple(necks))


def format_maze(maze):
    out = []
    starts, goals, necks = set(maze.starts), set(maze.goals), set(maze.bottlenecks)
    for r in range(maze.height):
        line = []
        for c in range(maze.width):
            cell = (r, c)
            if cell in maze.walls:
                line.append("#")
            elif cell in starts:
                line.append("S")
            elif cell in goals:
                line.append("G")
            elif cell in necks:
                line.append("B")
            else:
                line.append(".")
        out.append("".join(line))
    return "\n".join(out) + "\n"


@dataclass
class TrajectoryRecord:
    option: int
    states: list
    actions: list
    logprobs: list
    landmarks: list = field(default_factory=list)
    feature: np.ndarray | None = None

    def __post_init__(self):
        if len(self.states) != len(self.actions) + 1:
            raise ValueError("trajectory needs exactly one more state than actions")
        if len(self.logprobs) != len(self.actions):
            raise ValueError("one log-probability per action required")
        if not all(math.isfinite(x) for x in self.logprobs):
            raise ValueError("non-finite behaviour log-probability")

    @property
    def horizon(self):
        return len(self.actions)


def rollout_batch(table, s0, probs_fn, options, T, rng):
    """Roll out many trajectories in lock-step.

    ``probs_fn(states, options)`` returns an (n, 4) array of action
    probabilities. Returns (states (n, T+1), actions (n, T), logp (n, T)).
    """
    s0 = np.asarray(s0, dtype=np.int64)
    options = np.asarray(options, dtype=np.int64)
    n = s0.shape[0]
    states = np.empty((n, T + 1), dtype=np.int64)
    actions = np.empty((n, T), dtype=np.int64)
    logp = np.empty((n, T))
    states[:, 0] = s0
    rows = np.arange(n)
    for t in range(T):
        p = probs_fn(states[:, t], options)
        if not np.all(np.isfinite(p)):
            raise FloatingPointError("non-finite policy probabilities")
        cdf = np.cumsum(p, axis=1)
        u = rng.random(n) * cdf[:, -1]
        a = np.minimum((u[:, None] >= cdf).sum(axis=1), N_ACTIONS - 1)
        actions[:, t] = a
        logp[:, t] = np.log(p[rows, a])
        states[:, t + 1] = table[states[:, t], a]
    return states, actions, logp


def rollout(maze, s0, policy, c, T, rng):
    """One trajectory of horizon T from ``s0`` under ``policy(s, c) -> probs``."""
    if T < 1:
        raise ValueError("horizon must be at least 1")
    table = transition_table(maze)

    def probs_fn(states, options):
        return np.stack([np.asarray(policy(int(s), int(o)), dtype=float) for s, o in zip(states, options)])

    states, actions, logp = rollout_batch(table, [s0], probs_fn, [c], T, rng)
    return TrajectoryRecord(int(c), states[0].tolist(), actions[0].tolist(), logp[0].tolist())


def uniform_policy(s, c):
    return np.full(N_ACTIONS, 1.0 / N_ACTIONS)


def random_walk_logprob(record, n_actions=N_ACTIONS):
    """Log-probability of the record's actions under the uniform random walk."""
    return -record.horizon * math.log(n_actions)


def record_to_json(maze, record):
    return json.dumps({
        "option": int(record.option),
        "states": [list(maze.xy(s)) for s in record.states],
        "actions": [int(a) for a in record.actions],
        "logprobs": [float(x) for x in record.logprobs],
    }, separators=(",", ":"))


def write_jsonl(path, maze, records):
    with open(path, "w") as fh:
        for rec in records:
            fh.write(record_to_json(maze, rec) + "\n")


def read_jsonl(path, maze=None):
    """Read trajectory records; (x, y) pairs map back to states when a maze is given."""
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                xy = [tuple(int(v) for v in p) for p in obj["states"]]
                option = int(obj["option"])
                actions = [int(a) for a in obj["actions"]]
                logprobs = [float(x) for x in obj["logprobs"]]
            except (ValueError, KeyError, TypeError) as exc:
                raise ValueError(f"malformed trajectory on line {lineno}: {exc}") from exc
            if maze is not None:
                states = []
                for x, y in xy:
                    cell = (maze.height - 1 - y, x)
                    if cell not in maze._index:
                        raise ValueError(f"line {lineno}: ({x}, {y}) is not a free cell")
                    states.append(maze.state_of(cell))
            else:
                states = xy
            out.append(TrajectoryRecord(option, states, actions, logprobs))
    return out
