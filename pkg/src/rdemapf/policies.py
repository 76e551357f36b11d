"""Per-agent policies and the scenario classifier.

Every policy here is a pure function of the pre-step state plus the agent's
own random stream, so decisions for one timestep can be computed in any order.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .core import MOVES, Action, AgentState, EpisodeState, GridMap, apply_action
from .dhm import INF, DistanceHeatMap

RngStream = np.random.Generator

_SEED_MASK = (1 << 64) - 1


class ScenarioClass(Enum):
    COMPLEX = "Complex"
    SIMPLE = "Simple"
    DEADLOCK = "Deadlock"


class Source(str, Enum):
    """Which policy produced a decision."""

    COOPERATIVE = "Cooperative"
    DHM = "DHM"
    ESCAPE = "Escape"


@dataclass(frozen=True)
class FovSpec:
    width: int = 9
    height: int = 9

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1 or self.width % 2 == 0 or self.height % 2 == 0:
            raise ValueError(f"field of view must have odd positive sides, got {self.width}x{self.height}")

    @property
    def half_w(self) -> int:
        return self.width // 2

    @property
    def half_h(self) -> int:
        return self.height // 2


@dataclass(frozen=True)
class PolicyDecision:
    action: Action
    source: Source


def agent_rng(seed: int, episode_id: int, agent_id: int) -> RngStream:
    """Independent stream per (seed, episode, agent).

    Adding or removing agents does not perturb the other agents' streams.
    """
    entropy = [int(seed) & _SEED_MASK, int(episode_id) & _SEED_MASK, int(agent_id) & _SEED_MASK]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def _pick(rng: RngStream, options: Sequence[Action]) -> Action:
    if len(options) == 1:
        return options[0]
    return options[int(rng.integers(len(options)))]


def others_in_fov(state: EpisodeState, agent: int, fov: FovSpec = FovSpec()) -> bool:
    """True if another agent lies in the window centred on ``agent``."""
    r, c = state.agents[agent].pos
    hh, hw = fov.half_h, fov.half_w
    for other in state.agents:
        if other.id == agent:
            continue
        orow, ocol = other.pos
        if abs(orow - r) <= hh and abs(ocol - c) <= hw:
            return True
    return False


def is_deadlocked(agent: AgentState) -> bool:
    """Stagnation (n = 4) or single-step oscillation over the last five cells.

    With history ``(v[t-4], ..., v[t])`` the agent is deadlocked when it is
    off its goal, ``v[t-1] == v[t-3]`` and ``v[t-2] == v[t-4]``.
    """
    if agent.pos == agent.goal:
        return False
    h = agent.history
    if len(h) < 5:
        return False
    return h[3] == h[1] and h[2] == h[0]


def classify(state: EpisodeState, agent: int, fov: FovSpec = FovSpec()) -> ScenarioClass:
    if is_deadlocked(state.agents[agent]):
        return ScenarioClass.DEADLOCK
    if others_in_fov(state, agent, fov):
        return ScenarioClass.COMPLEX
    return ScenarioClass.SIMPLE


def dhm_greedy(dhm: DistanceHeatMap, agent: AgentState, rng: RngStream, grid: Optional[GridMap] = None) -> Action:
    """Step to the free neighbour closest to the goal.

    Among equally close neighbours the move that keeps the previous heading
    wins; otherwise one is drawn uniformly from ``rng``. Obstacles carry
    infinite heat, so ``grid`` is only needed to reject out-of-map cells and
    may be omitted.

    Raises:
        ValueError: if the agent's own cell cannot reach the goal.
    """
    here = dhm.query(agent.pos)
    if here is INF:
        raise ValueError(f"agent {agent.id} at {agent.pos} cannot reach goal {dhm.goal}")
    if here == 0:
        return Action.STAY
    best: list[Action] = []
    best_d = INF
    for action in MOVES:
        target = apply_action(agent.pos, action)
        if not (0 <= target[0] < dhm.height and 0 <= target[1] < dhm.width):
            continue
        if grid is not None and not grid.is_free(target):
            continue
        d = dhm.query(target)
        if d is INF:
            continue
        if d < best_d:
            best_d, best = d, [action]
        elif d == best_d:
            best.append(action)
    if agent.prev_dir in best:
        return agent.prev_dir
    return _pick(rng, best)


def escape_action(state: EpisodeState, agent: int, rng: RngStream) -> Action:
    """Uniform random move among the four directions not blocked by obstacles.

    Other agents are deliberately not filtered; the engine resolves those
    collisions. Returns Stay only when all four sides are walls.
    """
    grid = state.map
    pos = state.agents[agent].pos
    options = [a for a in MOVES if grid.is_free(apply_action(pos, a))]
    if not options:
        return Action.STAY
    return _pick(rng, options)


def coop_baseline(
    state: EpisodeState,
    agent: int,
    dhm: DistanceHeatMap,
    fov: FovSpec,
    rng: RngStream,
) -> Action:
    """Rule-based stand-in for a learned cooperative policy.

    Candidates (Stay included) are ranked by the heat of their target cell.
    Moves into a cell currently held by another agent, which covers head-on
    swaps with an adjacent agent, rank below every unoccupied candidate.
    Remaining ties prefer the straight continuation, then ``rng``.
    """
    me = state.agents[agent]
    if dhm.query(me.pos) is INF:
        raise ValueError(f"agent {agent} at {me.pos} cannot reach goal {dhm.goal}")
    hh, hw = fov.half_h, fov.half_w
    occupied = {
        a.pos
        for a in state.agents
        if a.id != agent and abs(a.pos[0] - me.pos[0]) <= hh and abs(a.pos[1] - me.pos[1]) <= hw
    }
    ranked: list[tuple[tuple, Action]] = []
    for action in MOVES + (Action.STAY,):
        target = apply_action(me.pos, action)
        if not state.map.is_free(target):
            continue
        heat = dhm.query(target)
        if heat is INF:
            continue
        demoted = action is not Action.STAY and target in occupied
        straight = action is me.prev_dir
        ranked.append(((demoted, heat, not straight), action))
    best_key = min(key for key, _ in ranked)
    return _pick(rng, [a for key, a in ranked if key == best_key])


def observe(
    state: EpisodeState, agent: int, dhm: DistanceHeatMap, fov: FovSpec
) -> dict:
    """Observation record sent to an external policy.

    Patches are ``fov.height`` rows of ``fov.width`` values centred on the
    agent. Cells outside the map count as obstacles with ``null`` heat.
    """
    me = state.agents[agent]
    grid = state.map
    others = {a.pos for a in state.agents if a.id != agent}
    obstacles, agents, heat = [], [], []
    for dr in range(-fov.half_h, fov.half_h + 1):
        orow, arow, hrow = [], [], []
        for dc in range(-fov.half_w, fov.half_w + 1):
            cell = (me.pos[0] + dr, me.pos[1] + dc)
            inside = grid.in_bounds(cell)
            orow.append(0 if inside and not grid.obstacles[cell] else 1)
            arow.append(1 if cell in others else 0)
            d = dhm.query(cell) if inside else INF
            hrow.append(None if d is INF else d)
        obstacles.append(orow)
        agents.append(arow)
        heat.append(hrow)
    return {
        "type": "obs",
        "timestep": state.timestep,
        "agent_id": me.id,
        "pos": list(me.pos),
        "goal": list(me.goal),
        "fov_obstacles": obstacles,
        "fov_agents": agents,
        "fov_heat": heat,
    }

