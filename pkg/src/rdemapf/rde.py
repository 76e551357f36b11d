"""Hybrid switching among the cooperative, DHM-greedy and escape policies.

Each agent is classified afresh every timestep: deadlocked agents escape,
agents with nobody in view follow their heat map, and everyone else defers
to the cooperative (complex-scenario) policy.
"""
from __future__ import annotations

import json
import logging
import os
from collections import Counter
from dataclasses import dataclass, field
from typing import IO, Optional, Sequence, Union

from .core import Action, EpisodeState, is_success, resolve_step
from .dhm import DhmCache
from .external import DEFAULT_TIMEOUT_MS, AdapterError, ExternalPolicy
from .policies import (
    FovSpec,
    PolicyDecision,
    RngStream,
    Source,
    agent_rng,
    coop_baseline,
    dhm_greedy,
    escape_action,
    is_deadlocked,
    observe,
    others_in_fov,
)
from .scenarios import Instance

log = logging.getLogger(__name__)

MAX_TIMESTEPS = 150

COOP_BASELINE = "coop_baseline"
EXTERNAL = "external"


@dataclass(frozen=True)
class RdeConfig:
    fov: FovSpec = field(default_factory=FovSpec)
    max_timesteps: int = MAX_TIMESTEPS
    complex_policy: str = COOP_BASELINE
    enable_dhm_policy: bool = True
    enable_escape: bool = True
    seed: int = 0
    adapter_command: Optional[str] = None
    adapter_timeout_ms: int = DEFAULT_TIMEOUT_MS

    def __post_init__(self) -> None:
        if self.max_timesteps < 1:
            raise ValueError("max_timesteps must be at least 1")
        if self.complex_policy not in (COOP_BASELINE, EXTERNAL):
            raise ValueError(f"unknown complex policy {self.complex_policy!r}")


class FailureKind:
    NONE = "none"
    TIMEOUT = "timeout"
    ADAPTER = "adapter_failure"


@dataclass
class EpisodeResult:
    success: bool
    makespan: int
    path_costs: list[Optional[int]]
    usage: dict[str, int]
    failure_kind: str = FailureKind.NONE
    steps: int = 0
    trace: Optional[list[dict]] = None
    message: str = ""


def rde_joint_action(
    state: EpisodeState,
    cfg: RdeConfig,
    rngs: Sequence[RngStream],
    cache: DhmCache,
    adapter: Optional[ExternalPolicy] = None,
) -> tuple[list[Action], list[PolicyDecision]]:
    """Pick one action per agent according to its scenario class.

    Deadlocked agents escape when escape is enabled; otherwise they are
    dispatched as simple or complex. Simple agents use the heat map when
    that policy is enabled, else the complex policy.
    """
    n = len(state.agents)
    actions: list[Optional[Action]] = [None] * n
    sources: list[Optional[Source]] = [None] * n
    deferred: list[int] = []
    for agent in state.agents:
        i = agent.id
        dhm = cache.get_or_compute(state.map, agent.goal)
        if cfg.enable_escape and is_deadlocked(agent):
            actions[i], sources[i] = escape_action(state, i, rngs[i]), Source.ESCAPE
            continue
        crowded = others_in_fov(state, i, cfg.fov)
        if not crowded and cfg.enable_dhm_policy:
            actions[i], sources[i] = dhm_greedy(dhm, agent, rngs[i]), Source.DHM
        elif cfg.complex_policy == EXTERNAL:
            deferred.append(i)
        else:
            actions[i] = coop_baseline(state, i, dhm, cfg.fov, rngs[i])
            sources[i] = Source.COOPERATIVE
    if deferred:
        if adapter is None:
            raise AdapterError("complex policy is external but no adapter is connected")
        obs = [observe(state, i, cache.get_or_compute(state.map, state.agents[i].goal), cfg.fov) for i in deferred]
        replies = adapter.step(obs)
        for i in deferred:
            actions[i], sources[i] = replies[i], Source.COOPERATIVE
    return actions, [PolicyDecision(a, s) for a, s in zip(actions, sources)]


def _step_record(state: EpisodeState) -> dict:
    return {"type": "step", "t": state.timestep, "positions": [list(p) for p in state.positions]}


def trace_header(instance: Instance, cfg: RdeConfig, episode_id: int) -> dict:
    return {
        "type": "header",
        "version": 1,
        "map": instance.map.to_rows(),
        "starts": [list(s) for s in instance.starts],
        "goals": [list(g) for g in instance.goals],
        "seed": cfg.seed,
        "episode_id": episode_id,
        "max_timesteps": cfg.max_timesteps,
        "fov": [cfg.fov.width, cfg.fov.height],
        "complex_policy": cfg.complex_policy,
        "enable_dhm_policy": cfg.enable_dhm_policy,
        "enable_escape": cfg.enable_escape,
    }


def run_episode(
    instance: Instance,
    cfg: RdeConfig,
    episode_id: int = 0,
    adapter: Optional[ExternalPolicy] = None,
    cache: Optional[DhmCache] = None,
    record_trace: bool = False,
    trace_out: Union[str, os.PathLike, IO[str], None] = None,
) -> EpisodeResult:
    """Simulate one instance until every agent is home or the step cap hits.

    With ``complex_policy="external"`` and no ``adapter`` given, the adapter
    is spawned from ``cfg.adapter_command`` and closed afterwards. Adapter
    failures end the episode with ``failure_kind="adapter_failure"``.
    """
    cache = cache if cache is not None else DhmCache()
    state = EpisodeState.initial(instance.map, instance.starts, instance.goals)
    m = len(state.agents)
    rngs = [agent_rng(cfg.seed, episode_id, i) for i in range(m)]
    usage: Counter = Counter({s.value: 0 for s in Source})
    trace: Optional[list[dict]] = [trace_header(instance, cfg, episode_id)] if (record_trace or trace_out) else None
    arrived: list[Optional[int]] = [0 if a.at_goal else None for a in state.agents]

    owned_adapter = None
    failure = FailureKind.NONE
    message = ""
    try:
        if cfg.complex_policy == EXTERNAL and adapter is None:
            if not cfg.adapter_command:
                raise AdapterError("complex policy is external but no adapter command is configured")
            adapter = owned_adapter = ExternalPolicy.spawn(cfg.adapter_command, cfg.adapter_timeout_ms)
        if adapter is not None and not adapter.ready:
            adapter.handshake(cfg.fov.width, cfg.fov.height, instance.map.width, instance.map.height)

        while not is_success(state) and state.timestep < cfg.max_timesteps:
            actions, decisions = rde_joint_action(state, cfg, rngs, cache, adapter)
            nxt, conflicts = resolve_step(state, actions)
            for d in decisions:
                usage[d.source.value] += 1
            if trace is not None:
                rec = _step_record(state)
                rec["actions"] = "".join(a.value for a in actions)
                rec["sources"] = [d.source.value for d in decisions]
                rec["conflicts"] = [c.to_record() for c in conflicts]
                trace.append(rec)
            for a in nxt.agents:
                if a.at_goal:
                    if arrived[a.id] is None:
                        arrived[a.id] = nxt.timestep
                else:
                    arrived[a.id] = None
            state = nxt
    except AdapterError as exc:
        failure = FailureKind.ADAPTER
        message = str(exc)
        log.warning("episode %d aborted: %s", episode_id, exc)
    finally:
        if owned_adapter is not None:
            owned_adapter.close()

    success = failure == FailureKind.NONE and is_success(state)
    if failure == FailureKind.NONE and not success:
        failure = FailureKind.TIMEOUT
    if trace is not None:
        final = _step_record(state)
        final.update(actions=None, sources=None, conflicts=[])
        trace.append(final)
        trace.append({"type": "result", "success": success, "makespan": state.timestep, "failure_kind": failure})
        if trace_out is not None:
            write_trace(trace, trace_out)
    return EpisodeResult(
        success=success,
        makespan=state.timestep if success or failure == FailureKind.ADAPTER else cfg.max_timesteps,
        path_costs=arrived,
        usage=dict(usage),
        failure_kind=failure,
        steps=state.timestep,
        trace=trace if record_trace else None,
        message=message,
    )


def write_trace(records: Sequence[dict], out: Union[str, os.PathLike, IO[str]]) -> None:
    """Write trace records as JSON lines."""
    if hasattr(out, "write"):
        for rec in records:
            out.write(json.dumps(rec, separators=(",", ":")) + "\n")
        return
    with open(out, "w") as fh:
        write_trace(records, fh)


def read_trace(path: Union[str, os.PathLike]) -> list[dict]:
    records = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                records.append(json.loads(line))
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: malformed trace record ({exc})") from exc
    if not records or records[0].get("type") != "header":
        raise ValueError(f"{path}: trace does not start with a header record")
    return records
