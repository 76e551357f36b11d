"""Grid world, action semantics and the simultaneous-move step engine.

Coordinates are ``(row, col)`` tuples with row 0 at the top; ``Up`` decreases
the row. Every agent moves one cell or stays at each timestep, and any agent
involved in a vertex or edge conflict is held in place.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Mapping, Optional, Sequence

import numpy as np

Position = tuple[int, int]


class Action(Enum):
    UP = "U"
    DOWN = "D"
    LEFT = "L"
    RIGHT = "R"
    STAY = "S"

    @property
    def delta(self) -> Position:
        return _DELTAS[self]

    @property
    def opposite(self) -> "Action":
        return _OPPOSITES[self]

    @classmethod
    def from_delta(cls, dr: int, dc: int) -> "Action":
        for action, delta in _DELTAS.items():
            if delta == (dr, dc):
                return action
        raise ValueError(f"not a unit move: {(dr, dc)}")


_DELTAS = {
    Action.UP: (-1, 0),
    Action.DOWN: (1, 0),
    Action.LEFT: (0, -1),
    Action.RIGHT: (0, 1),
    Action.STAY: (0, 0),
}
_OPPOSITES = {
    Action.UP: Action.DOWN,
    Action.DOWN: Action.UP,
    Action.LEFT: Action.RIGHT,
    Action.RIGHT: Action.LEFT,
    Action.STAY: Action.STAY,
}

#: The four move actions, in the fixed order used wherever randomness is drawn.
MOVES: tuple[Action, ...] = (Action.UP, Action.DOWN, Action.LEFT, Action.RIGHT)
ALL_ACTIONS: tuple[Action, ...] = MOVES + (Action.STAY,)

HISTORY_LEN = 5


def apply_action(pos: Position, action: Action) -> Position:
    """Target cell of ``action`` from ``pos``; bounds are not checked."""
    dr, dc = _DELTAS[action]
    return (pos[0] + dr, pos[1] + dc)


class GridMap:
    """Static four-connected occupancy grid.

    Args:
        obstacles: 2D boolean array, ``True`` marks an obstacle cell.
    """

    __slots__ = ("obstacles", "height", "width", "_key")

    def __init__(self, obstacles) -> None:
        grid = np.array(obstacles, dtype=bool)
        if grid.ndim != 2 or grid.size == 0:
            raise ValueError("obstacle grid must be a non-empty 2D array")
        grid.setflags(write=False)
        self.obstacles = grid
        self.height, self.width = grid.shape
        digest = hashlib.sha1(np.packbits(grid).tobytes()).hexdigest()
        self._key = f"{self.height}x{self.width}:{digest}"

    @classmethod
    def empty(cls, height: int, width: int) -> "GridMap":
        return cls(np.zeros((height, width), dtype=bool))

    @classmethod
    def from_rows(cls, rows: Sequence[str]) -> "GridMap":
        """Build from text rows using ``'.'`` for free and ``'@'`` for obstacles."""
        return cls([[ch == "@" for ch in row] for row in rows])

    @property
    def key(self) -> str:
        """Content hash; two maps with equal cells share a key."""
        return self._key

    def in_bounds(self, pos: Position) -> bool:
        return 0 <= pos[0] < self.height and 0 <= pos[1] < self.width

    def is_free(self, pos: Position) -> bool:
        return self.in_bounds(pos) and not self.obstacles[pos]

    def free_cells(self) -> list[Position]:
        rows, cols = np.nonzero(~self.obstacles)
        return list(zip(rows.tolist(), cols.tolist()))

    @property
    def n_free(self) -> int:
        return int(self.obstacles.size - self.obstacles.sum())

    @property
    def obstacle_density(self) -> float:
        return float(self.obstacles.sum()) / self.obstacles.size

    def neighbors(self, pos: Position) -> list[Position]:
        """Free four-neighbours of ``pos``."""
        out = []
        for action in MOVES:
            nxt = apply_action(pos, action)
            if self.is_free(nxt):
                out.append(nxt)
        return out

    def to_rows(self) -> list[str]:
        return ["".join("@" if cell else "." for cell in row) for row in self.obstacles]

    def __eq__(self, other: object) -> bool:
        return isinstance(other, GridMap) and self._key == other._key

    def __hash__(self) -> int:
        return hash(self._key)

    def __repr__(self) -> str:
        return f"GridMap({self.height}x{self.width}, rho_o={self.obstacle_density:.3f})"


def valid_moves(grid: GridMap, pos: Position) -> set[Action]:
    """Actions (Stay included) whose target is an in-bounds free cell."""
    if not grid.is_free(pos):
        raise ValueError(f"position {pos} is not a free in-bounds cell")
    return {a for a in ALL_ACTIONS if grid.is_free(apply_action(pos, a))}


@dataclass(frozen=True)
class AgentState:
    """One agent: position, goal and the rolling window of recent positions.

    ``history`` holds at most the last five positions, oldest first, and its
    last entry is always ``pos``. ``prev_dir`` is the last executed move, or
    ``None`` after a Stay and at t=0.
    """

    id: int
    pos: Position
    goal: Position
    history: tuple[Position, ...] = ()
    prev_dir: Optional[Action] = None

    def __post_init__(self) -> None:
        if not self.history:
            object.__setattr__(self, "history", (self.pos,))

    @property
    def at_goal(self) -> bool:
        return self.pos == self.goal

    def advance(self, new_pos: Position) -> "AgentState":
        if new_pos == self.pos:
            direction = None
        else:
            direction = Action.from_delta(new_pos[0] - self.pos[0], new_pos[1] - self.pos[1])
        history = (self.history + (new_pos,))[-HISTORY_LEN:]
        return replace(self, pos=new_pos, history=history, prev_dir=direction)


@dataclass(frozen=True)
class Conflict:
    """A vertex ``<i, j, v, t>`` or edge ``<i, j, v, v', t>`` conflict.

    For an edge conflict agent ``i`` moves ``v -> v2`` while ``j`` moves
    ``v2 -> v``.
    """

    kind: str
    i: int
    j: int
    v: Position
    t: int
    v2: Optional[Position] = None

    def __post_init__(self) -> None:
        if self.i == self.j:
            raise ValueError("a conflict needs two distinct agents")
        if self.kind not in ("vertex", "edge"):
            raise ValueError(f"unknown conflict kind {self.kind!r}")
        if self.kind == "edge" and self.v2 is None:
            raise ValueError("edge conflict needs both cells")

    @property
    def participants(self) -> tuple[int, int]:
        return (self.i, self.j)

    def to_record(self) -> dict:
        rec = {"kind": self.kind, "agents": [self.i, self.j], "v": list(self.v)}
        if self.v2 is not None:
            rec["v2"] = list(self.v2)
        return rec


@dataclass(frozen=True)
class EpisodeState:
    timestep: int
    map: GridMap
    agents: tuple[AgentState, ...] = field(default_factory=tuple)

    @classmethod
    def initial(cls, grid: GridMap, starts: Sequence[Position], goals: Sequence[Position]) -> "EpisodeState":
        if len(starts) != len(goals):
            raise ValueError("starts and goals differ in length")
        agents = tuple(
            AgentState(id=i, pos=tuple(s), goal=tuple(g)) for i, (s, g) in enumerate(zip(starts, goals))
        )
        state = cls(timestep=0, map=grid, agents=agents)
        state.check()
        return state

    @property
    def positions(self) -> list[Position]:
        return [a.pos for a in self.agents]

    def check(self) -> None:
        """Raise ``ValueError`` if agents overlap or sit on obstacles."""
        seen: dict[Position, int] = {}
        for agent in self.agents:
            if not self.map.is_free(agent.pos):
                raise ValueError(f"agent {agent.id} at {agent.pos} is not on a free cell")
            if agent.pos in seen:
                raise ValueError(f"agents {seen[agent.pos]} and {agent.id} share {agent.pos}")
            seen[agent.pos] = agent.id


def detect_conflicts(
    current: Mapping[int, Position],
    proposed: Mapping[int, Position],
    t: int = 0,
) -> list[Conflict]:
    """All pairwise vertex and edge conflicts of a proposed joint move."""
    if set(current) != set(proposed):
        raise ValueError("current and proposed cover different agent ids")
    conflicts: list[Conflict] = []
    by_cell: dict[Position, list[int]] = {}
    for aid in sorted(proposed):
        by_cell.setdefault(proposed[aid], []).append(aid)
    for cell, ids in by_cell.items():
        for a in range(len(ids)):
            for b in range(a + 1, len(ids)):
                conflicts.append(Conflict("vertex", ids[a], ids[b], cell, t))
    occupant = {pos: aid for aid, pos in current.items()}
    for i in sorted(proposed):
        src, dst = current[i], proposed[i]
        if src == dst:
            continue
        j = occupant.get(dst)
        if j is not None and j > i and proposed[j] == src:
            conflicts.append(Conflict("edge", i, j, src, t, v2=dst))
    return conflicts


def resolve_step(
    state: EpisodeState, joint: Sequence[Action]
) -> tuple[EpisodeState, list[Conflict]]:
    """Execute one simultaneous step.

    Invalid moves become Stay. Then, until nothing changes, every agent in a
    vertex or edge conflict, and every agent moving into a cell whose occupant
    stays, is reverted to Stay. Returns the next state and every conflict seen.
    """
    agents = state.agents
    if len(joint) != len(agents):
        raise ValueError(f"expected {len(agents)} actions, got {len(joint)}")
    grid = state.map
    current = {a.id: a.pos for a in agents}
    proposed: dict[int, Position] = {}
    for agent, action in zip(agents, joint):
        target = apply_action(agent.pos, action)
        proposed[agent.id] = target if grid.is_free(target) else agent.pos

    occupant = {pos: aid for aid, pos in current.items()}
    seen: dict[tuple, Conflict] = {}
    while True:
        reverted: set[int] = set()
        for c in detect_conflicts(current, proposed, state.timestep):
            seen.setdefault((c.kind, c.i, c.j, c.v, c.v2), c)
            reverted.update(c.participants)
        for aid, dst in proposed.items():
            if dst == current[aid]:
                continue
            j = occupant.get(dst)
            if j is not None and proposed[j] == current[j]:
                reverted.add(aid)
        moving = {aid for aid in reverted if proposed[aid] != current[aid]}
        if not moving:
            break
        for aid in moving:
            proposed[aid] = current[aid]

    nxt = tuple(a.advance(proposed[a.id]) for a in agents)
    return EpisodeState(state.timestep + 1, grid, nxt), list(seen.values())


def is_success(state: EpisodeState) -> bool:
    return all(a.pos == a.goal for a in state.agents)

