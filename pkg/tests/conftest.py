"""Shared fixtures and independent oracles.

Nothing here imports the engine's algorithms; the oracles are deliberately
naive so they can check the fast paths.
"""
import math
import random

import numpy as np
import pytest

from rdemapf.core import GridMap


def bellman_ford(obstacles, goal):
    """O(V*E) shortest distances on the four-connected grid; inf if unreachable."""
    h, w = len(obstacles), len(obstacles[0])
    dist = [[math.inf] * w for _ in range(h)]
    dist[goal[0]][goal[1]] = 0
    edges = []
    for r in range(h):
        for c in range(w):
            if obstacles[r][c]:
                continue
            for dr, dc in ((1, 0), (0, 1)):
                nr, nc = r + dr, c + dc
                if nr < h and nc < w and not obstacles[nr][nc]:
                    edges.append(((r, c), (nr, nc)))
                    edges.append(((nr, nc), (r, c)))
    for _ in range(h * w):
        changed = False
        for (a, b) in edges:
            if dist[a[0]][a[1]] + 1 < dist[b[0]][b[1]]:
                dist[b[0]][b[1]] = dist[a[0]][a[1]] + 1
                changed = True
        if not changed:
            break
    return dist


def transition_violations(before, after, obstacles=None):
    """Pairwise check of one joint transition.

    Reports vertex overlaps, swaps, non-unit jumps and moves onto obstacles.
    """
    out = []
    n = len(before)
    for i in range(n):
        b, a = before[i], after[i]
        if abs(b[0] - a[0]) + abs(b[1] - a[1]) > 1:
            out.append(("jump", i, i))
        if obstacles is not None and obstacles[a[0]][a[1]]:
            out.append(("obstacle", i, i))
        for j in range(i + 1, n):
            if after[i] == after[j]:
                out.append(("vertex", i, j))
            if after[i] == before[j] and after[j] == before[i]:
                out.append(("edge", i, j))
    return out


def reference_step(obstacles, positions, targets):
    """Naive fixpoint of the hold-on-conflict rule, by whole-configuration rescans.

    ``targets`` are proposed cells (already unit moves). Returns final cells.
    """
    h, w = len(obstacles), len(obstacles[0])
    n = len(positions)
    moving = set()
    for i in range(n):
        t = targets[i]
        if t != positions[i] and 0 <= t[0] < h and 0 <= t[1] < w and not obstacles[t[0]][t[1]]:
            moving.add(i)
    while True:
        final = [targets[i] if i in moving else positions[i] for i in range(n)]
        bad = set()
        for i in moving:
            for j in range(n):
                if j == i:
                    continue
                if final[i] == final[j]:
                    bad.add(i)
                if j in moving and final[i] == positions[j] and final[j] == positions[i]:
                    bad.add(i)
                if j not in moving and final[i] == positions[j]:
                    bad.add(i)
        if not bad:
            return final
        moving -= bad


def random_obstacles(rng: random.Random, h: int, w: int, density: float):
    return [[rng.random() < density for _ in range(w)] for _ in range(h)]


@pytest.fixture
def open5():
    return GridMap.empty(5, 5)


@pytest.fixture
def corridor_map():
    """A walled two-lane aisle, five cells long.

    Two agents entering head-on from opposite ends both aim for the middle
    cell every step and are held there forever unless something breaks the
    symmetry.
    """
    return GridMap.from_rows(
        [
            "@@@@@@@",
            "@.....@",
            "@.....@",
            "@@@@@@@",
        ]
    )


def rows(grid: GridMap):
    return np.asarray(grid.obstacles).tolist()


# --- acceptance verdicts --------------------------------------------------

_VERDICTS: dict[str, str] = {}


@pytest.fixture
def verdict():
    """Record a criterion's outcome for the summary, then assert it."""

    def record(name: str, ok: bool, detail: str) -> None:
        # names start with a zero-padded number ("05b ...") so they sort
        _VERDICTS[name] = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
        assert ok, detail

    return record


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_VERDICTS):
        terminalreporter.write_line(_VERDICTS[name])
