"""Distance heat maps: shortest-path distance from a goal to every cell."""
from __future__ import annotations

import threading
from collections import deque
from typing import Union

import numpy as np

from .core import GridMap, Position


class _Infinity:
    """Heat of obstacles and unreachable cells.

    Orders above every integer but refuses arithmetic, so ``INF + 1`` raises
    instead of silently producing a plausible distance.
    """

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __lt__(self, other):
        return False

    def __le__(self, other):
        return other is self

    def __gt__(self, other):
        return other is not self

    def __ge__(self, other):
        return True

    def __eq__(self, other):
        return other is self

    def __hash__(self):
        return hash("rdemapf.INF")

    def __repr__(self):
        return "INF"

    def __reduce__(self):
        return (_Infinity, ())


INF = _Infinity()
Distance = Union[int, _Infinity]

_UNREACHED = -1


class DistanceHeatMap:
    """Immutable distance field for one goal.

    ``dist`` is a read-only int32 array where ``-1`` encodes infinity; use
    :meth:`query` to get :data:`INF` instead.
    """

    __slots__ = ("goal", "height", "width", "dist", "_rows")

    def __init__(self, goal: Position, dist: np.ndarray) -> None:
        self.goal = goal
        self.height, self.width = dist.shape
        dist.setflags(write=False)
        self.dist = dist
        self._rows = dist.tolist()

    def query(self, pos: Position) -> Distance:
        r, c = pos
        if not (0 <= r < self.height and 0 <= c < self.width):
            raise IndexError(f"{pos} is out of bounds")
        d = self._rows[r][c]
        return INF if d < 0 else d

    def finite(self, pos: Position) -> bool:
        return self.query(pos) is not INF

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, DistanceHeatMap)
            and self.goal == other.goal
            and np.array_equal(self.dist, other.dist)
        )

    def to_text(self, inf: str = "INF") -> str:
        """Debug dump, one row per line with right-aligned columns."""
        cells = [[inf if d < 0 else str(d) for d in row] for row in self._rows]
        width = max(len(s) for row in cells for s in row)
        return "\n".join(" ".join(s.rjust(width) for s in row) for row in cells)


def compute_dhm(grid: GridMap, goal: Position) -> DistanceHeatMap:
    """Breadth-first distance field from ``goal`` over free cells.

    Unit edge costs make BFS produce exactly the Dijkstra distances.
    """
    goal = (int(goal[0]), int(goal[1]))
    if not grid.is_free(goal):
        raise ValueError(f"goal {goal} is not a free in-bounds cell")
    h, w = grid.height, grid.width
    blocked = grid.obstacles.tolist()
    dist = [[_UNREACHED] * w for _ in range(h)]
    dist[goal[0]][goal[1]] = 0
    queue = deque([goal])
    while queue:
        r, c = queue.popleft()
        nd = dist[r][c] + 1
        for nr, nc in ((r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)):
            if 0 <= nr < h and 0 <= nc < w and not blocked[nr][nc] and dist[nr][nc] < 0:
                dist[nr][nc] = nd
                queue.append((nr, nc))
    return DistanceHeatMap(goal, np.array(dist, dtype=np.int32))


def query(dhm: DistanceHeatMap, pos: Position) -> Distance:
    return dhm.query(pos)


class DhmCache:
    """Heat maps keyed by ``(map content hash, goal)``.

    Reads are lock-free; insertion takes a lock. Two threads missing on the
    same key may both compute it, which is harmless since results are equal.
    """

    def __init__(self) -> None:
        self._store: dict[tuple[str, Position], DistanceHeatMap] = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def __len__(self) -> int:
        return len(self._store)

    def get_or_compute(self, grid: GridMap, goal: Position) -> DistanceHeatMap:
        key = (grid.key, (int(goal[0]), int(goal[1])))
        dhm = self._store.get(key)
        if dhm is not None:
            self.hits += 1
            return dhm
        dhm = compute_dhm(grid, goal)
        with self._lock:
            self.misses += 1
            return self._store.setdefault(key, dhm)


def get_or_compute(cache: DhmCache, grid: GridMap, goal: Position) -> DistanceHeatMap:
    return cache.get_or_compute(grid, goal)
