"""Warehouse-style maps, random start/goal instances and their file formats."""
from __future__ import annotations

import json
import os
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Sequence, Union

import numpy as np
from scipy import ndimage

from .core import GridMap, Position

PathLike = Union[str, os.PathLike]

DENSITY_TOLERANCE = 0.02
MAX_BLOCK_SHORT_SIDE = 4
MAX_BLOCK_LONG_SIDE = 12


class MapKind(str, Enum):
    SPARSE = "sparse"
    DENSE = "dense"


#: Obstacle densities of the two warehouse layouts.
TARGET_DENSITY = {MapKind.SPARSE: 0.419, MapKind.DENSE: 0.476}
#: Aisle width between pod blocks.
AISLE_WIDTH = {MapKind.SPARSE: 2, MapKind.DENSE: 1}


class MapFormatError(ValueError):
    pass


class InstanceError(ValueError):
    """An instance violates its invariants; ``agent`` names the offender if any."""

    def __init__(self, message: str, agent: int | None = None) -> None:
        super().__init__(message if agent is None else f"agent {agent}: {message}")
        self.agent = agent


@dataclass(frozen=True)
class MapSpec:
    kind: MapKind = MapKind.SPARSE
    width: int = 34
    height: int = 34
    seed: int = 0
    target_rho_o: float | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", MapKind(self.kind))
        if self.target_rho_o is None:
            object.__setattr__(self, "target_rho_o", TARGET_DENSITY[self.kind])
        if not 0 < self.target_rho_o < 1:
            raise ValueError(f"target density must lie in (0, 1), got {self.target_rho_o}")
        if self.width < 3 or self.height < 3:
            raise ValueError("maps need at least 3x3 cells for a border ring")


def _axis_layout(length: int, block: int, aisle: int) -> tuple[int, int]:
    """Number of blocks that fit on one axis, and the leftover slack."""
    k = (length + aisle) // (block + aisle)
    return k, length - (k * block + (k - 1) * aisle)


def _layouts(spec: MapSpec) -> list[tuple[float, int, int]]:
    """All ``(density, block_h, block_w)`` pod patterns, closest to target first."""
    aisle = AISLE_WIDTH[spec.kind]
    inner_h, inner_w = spec.height - 2, spec.width - 2
    out = []
    for bh in range(1, MAX_BLOCK_LONG_SIDE + 1):
        for bw in range(1, MAX_BLOCK_LONG_SIDE + 1):
            if min(bh, bw) > MAX_BLOCK_SHORT_SIDE or max(bh, bw) < 2:
                continue
            kr, _ = _axis_layout(inner_h, bh, aisle)
            kc, _ = _axis_layout(inner_w, bw, aisle)
            if kr < 1 or kc < 1:
                continue
            density = kr * bh * kc * bw / (spec.height * spec.width)
            out.append((density, bh, bw))
    out.sort(key=lambda x: (abs(x[0] - spec.target_rho_o), x[1], x[2]))
    return out


def generate_warehouse_map(spec: MapSpec) -> GridMap:
    """Rectangular pod blocks separated by aisles, inside a free border ring.

    Every block pattern whose density lies within half the tolerance of the
    target is eligible; the seed picks one of them and shifts it within the
    leftover slack. The result is deterministic per seed.

    Raises:
        ValueError: no block pattern reaches the target within tolerance.
    """
    layouts = _layouts(spec)
    if not layouts or abs(layouts[0][0] - spec.target_rho_o) > DENSITY_TOLERANCE:
        raise ValueError(
            f"no pod layout reaches density {spec.target_rho_o} on {spec.height}x{spec.width}"
        )
    eligible = [l for l in layouts if abs(l[0] - spec.target_rho_o) <= DENSITY_TOLERANCE / 2] or layouts[:1]
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed & ((1 << 64) - 1), 0x3A9]))
    _, bh, bw = eligible[int(rng.integers(len(eligible)))]
    aisle = AISLE_WIDTH[spec.kind]
    kr, slack_r = _axis_layout(spec.height - 2, bh, aisle)
    kc, slack_c = _axis_layout(spec.width - 2, bw, aisle)
    r0 = 1 + int(rng.integers(slack_r + 1))
    c0 = 1 + int(rng.integers(slack_c + 1))

    grid = np.zeros((spec.height, spec.width), dtype=bool)
    for i in range(kr):
        r = r0 + i * (bh + aisle)
        for j in range(kc):
            c = c0 + j * (bw + aisle)
            grid[r : r + bh, c : c + bw] = True
    result = GridMap(grid)
    if not is_connected(result):
        raise ValueError("generated map is not connected")
    return result


def is_connected(grid: GridMap) -> bool:
    _, n = ndimage.label(~grid.obstacles)
    return n <= 1


def _components(grid: GridMap) -> np.ndarray:
    labels, _ = ndimage.label(~grid.obstacles)
    return labels


def agent_density(grid: GridMap, m: int) -> float:
    if m < 0:
        raise ValueError("agent count must be non-negative")
    return m / grid.n_free


@dataclass(frozen=True)
class Instance:
    map: GridMap
    starts: tuple[Position, ...]
    goals: tuple[Position, ...]

    def __post_init__(self) -> None:
        validate_instance(self.map, self.starts, self.goals)
        object.__setattr__(self, "starts", tuple((int(r), int(c)) for r, c in self.starts))
        object.__setattr__(self, "goals", tuple((int(r), int(c)) for r, c in self.goals))

    @property
    def m(self) -> int:
        return len(self.starts)


def _as_position(value, what: str, agent: int) -> Position:
    if (
        not isinstance(value, (list, tuple))
        or len(value) != 2
        or not all(isinstance(v, (int, np.integer)) and not isinstance(v, bool) for v in value)
    ):
        raise InstanceError(f"{what} {value!r} is not a [row, col] integer pair", agent)
    return (int(value[0]), int(value[1]))


def validate_instance(grid: GridMap, starts: Sequence, goals: Sequence) -> None:
    """Raise :class:`InstanceError` unless starts/goals form a valid instance."""
    if len(starts) != len(goals):
        raise InstanceError(f"{len(starts)} starts but {len(goals)} goals")
    labels = _components(grid)
    seen_start: dict[Position, int] = {}
    seen_goal: dict[Position, int] = {}
    for i, (s, g) in enumerate(zip(starts, goals)):
        s = _as_position(s, "start", i)
        g = _as_position(g, "goal", i)
        for what, p, seen in (("start", s, seen_start), ("goal", g, seen_goal)):
            if not grid.in_bounds(p):
                raise InstanceError(f"{what} {p} is out of bounds", i)
            if grid.obstacles[p]:
                raise InstanceError(f"{what} {p} is an obstacle", i)
            if p in seen:
                raise InstanceError(f"{what} {p} duplicates agent {seen[p]}", i)
            seen[p] = i
        if labels[s] != labels[g]:
            raise InstanceError(f"goal {g} is unreachable from start {s}", i)


def generate_instance(grid: GridMap, m: int, seed: int, max_retries: int = 100) -> Instance:
    """Uniformly sample ``m`` distinct starts and ``m`` distinct goals.

    Resamples (up to ``max_retries`` times) if some goal is unreachable.
    """
    free = grid.free_cells()
    if m > len(free):
        raise ValueError(f"{m} agents do not fit in {len(free)} free cells")
    if m < 0:
        raise ValueError("agent count must be non-negative")
    rng = np.random.default_rng(np.random.SeedSequence([seed & ((1 << 64) - 1), 0x1257]))
    for _ in range(max_retries):
        starts = [free[i] for i in rng.choice(len(free), size=m, replace=False)]
        goals = [free[i] for i in rng.choice(len(free), size=m, replace=False)]
        try:
            return Instance(grid, tuple(starts), tuple(goals))
        except InstanceError:
            continue
    raise ValueError(f"no reachable instance found after {max_retries} attempts")


# --- file formats -----------------------------------------------------------


def write_map(grid: GridMap, path: PathLike) -> None:
    lines = ["type octile", f"height {grid.height}", f"width {grid.width}", "map", *grid.to_rows()]
    Path(path).write_text("\n".join(lines) + "\n")


def parse_map(text: str) -> GridMap:
    lines = text.splitlines()
    if len(lines) < 4:
        raise MapFormatError("map file is shorter than its 4-line header")
    dims = {}
    for lineno, key in ((2, "height"), (3, "width")):
        parts = lines[lineno - 1].split()
        if len(parts) != 2 or parts[0] != key or not parts[1].isdigit() or int(parts[1]) < 1:
            raise MapFormatError(f"line {lineno}: expected '{key} <positive int>', got {lines[lineno - 1]!r}")
        dims[key] = int(parts[1])
    if not lines[0].startswith("type "):
        raise MapFormatError(f"line 1: expected 'type <name>', got {lines[0]!r}")
    if lines[3].strip() != "map":
        raise MapFormatError(f"line 4: expected 'map', got {lines[3]!r}")
    rows = lines[4:]
    while rows and not rows[-1].strip():
        rows.pop()
    if len(rows) != dims["height"]:
        raise MapFormatError(f"expected {dims['height']} rows, found {len(rows)}")
    cells = []
    for offset, row in enumerate(rows):
        lineno = 5 + offset
        if len(row) != dims["width"]:
            raise MapFormatError(f"line {lineno}: expected {dims['width']} cells, found {len(row)}")
        bad = set(row) - {".", "@"}
        if bad:
            raise MapFormatError(f"line {lineno}: unknown cell characters {sorted(bad)}")
        cells.append([ch == "@" for ch in row])
    return GridMap(cells)


def read_map(path: PathLike) -> GridMap:
    return parse_map(Path(path).read_text())


INSTANCE_FORMAT = "rdemapf-instance"
INSTANCE_VERSION = 1


def write_instance(instance: Instance, path: PathLike, map_path: PathLike) -> None:
    """Write ``instance`` as JSON, referencing ``map_path`` relative to ``path``."""
    path = Path(path)
    map_path = Path(map_path)
    if not map_path.exists():
        write_map(instance.map, map_path)
    ref = os.path.relpath(map_path.resolve(), path.resolve().parent)
    doc = {
        "format": INSTANCE_FORMAT,
        "version": INSTANCE_VERSION,
        "map": Path(ref).as_posix(),
        "agents": [{"start": list(s), "goal": list(g)} for s, g in zip(instance.starts, instance.goals)],
    }
    path.write_text(json.dumps(doc, indent=1) + "\n")


def read_instance(path: PathLike) -> Instance:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except ValueError as exc:
        raise InstanceError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(doc, dict) or doc.get("format") != INSTANCE_FORMAT:
        raise InstanceError(f"{path}: not an {INSTANCE_FORMAT} file")
    version = doc.get("version")
    if isinstance(version, bool) or version != INSTANCE_VERSION:
        raise InstanceError(f"{path}: unsupported version {version!r}")
    ref = doc.get("map")
    if not isinstance(ref, str):
        raise InstanceError(f"{path}: missing map reference")
    map_path = path.parent / ref
    if not map_path.is_file():
        raise InstanceError(f"{path}: map file {ref!r} does not exist")
    try:
        grid = read_map(map_path)
    except MapFormatError as exc:
        raise InstanceError(f"{map_path}: {exc}") from exc
    agents = doc.get("agents")
    if not isinstance(agents, list):
        raise InstanceError(f"{path}: 'agents' must be a list")
    starts, goals = [], []
    for i, rec in enumerate(agents):
        if not isinstance(rec, dict) or set(rec) != {"start", "goal"}:
            raise InstanceError("record must have exactly 'start' and 'goal'", i)
        starts.append(_as_position(rec["start"], "start", i))
        goals.append(_as_position(rec["goal"], "goal", i))
    return Instance(grid, tuple(starts), tuple(goals))
