"""Batch experiments: success rate per (map kind, agent count, policy arm)."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import os
import statistics
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Union

from scipy.stats import norm

from .dhm import DhmCache
from .policies import FovSpec
from .rde import COOP_BASELINE, MAX_TIMESTEPS, FailureKind, RdeConfig, run_episode
from .scenarios import MapKind, MapSpec, generate_instance, generate_warehouse_map

log = logging.getLogger(__name__)

#: Policy arms: name -> (enable_dhm_policy, enable_escape).
ARMS = {
    "baseline": (False, False),
    "+DHM": (True, False),
    "+DHM+Escape": (True, True),
}
AGENT_COUNTS = (10, 30, 50, 70)
MAP_SIZE = (34, 34)
FULL_INSTANCES = 1000

CSV_COLUMNS = (
    "map_kind",
    "agents",
    "arm",
    "n_s",
    "n_t",
    "ssr",
    "mean_makespan",
    "complex_policy",
    "n_adapter_failures",
    "n_errors",
    "diag_usage_cooperative",
    "diag_usage_dhm",
    "diag_usage_escape",
)


def ssr(n_s: int, n_t: int) -> float:
    """Fraction of solved instances."""
    if n_t <= 0:
        raise ValueError("success rate needs at least one instance")
    if not 0 <= n_s <= n_t:
        raise ValueError(f"solved count {n_s} outside [0, {n_t}]")
    return n_s / n_t


@dataclass(frozen=True)
class BenchConfig:
    map_kinds: tuple[str, ...] = (MapKind.SPARSE.value, MapKind.DENSE.value)
    map_size: tuple[int, int] = MAP_SIZE
    agent_counts: tuple[int, ...] = AGENT_COUNTS
    instances: int = FULL_INSTANCES
    max_timesteps: int = MAX_TIMESTEPS
    arms: tuple[str, ...] = tuple(ARMS)
    seed: int = 0
    parallelism: int = 1
    fov: tuple[int, int] = (9, 9)
    complex_policy: str = COOP_BASELINE
    adapter_command: Optional[str] = None
    adapter_timeout_ms: int = 1000

    def __post_init__(self) -> None:
        for name in ("map_kinds", "agent_counts", "arms", "map_size", "fov"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if self.instances < 1:
            raise ValueError("need at least one instance per cell")
        if not self.arms:
            raise ValueError("need at least one policy arm")
        unknown = [a for a in self.arms if a not in ARMS]
        if unknown:
            raise ValueError(f"unknown arms {unknown}; choose from {list(ARMS)}")
        for kind in self.map_kinds:
            MapKind(kind)
        if self.parallelism < 1:
            raise ValueError("parallelism must be at least 1")

    @classmethod
    def load(cls, path: Union[str, os.PathLike]) -> "BenchConfig":
        data = json.loads(Path(path).read_text())
        known = set(cls.__dataclass_fields__)
        extra = set(data) - known
        if extra:
            raise ValueError(f"unknown config keys: {sorted(extra)}")
        return cls(**data)

    def dump(self) -> str:
        return json.dumps(asdict(self), indent=2)

    def rde_config(self, arm: str, seed: int) -> RdeConfig:
        dhm, escape = ARMS[arm]
        return RdeConfig(
            fov=FovSpec(*self.fov),
            max_timesteps=self.max_timesteps,
            complex_policy=self.complex_policy,
            enable_dhm_policy=dhm,
            enable_escape=escape,
            seed=seed,
            adapter_command=self.adapter_command,
            adapter_timeout_ms=self.adapter_timeout_ms,
        )


def derive_seed(*parts) -> int:
    """Stable 63-bit seed from arbitrary labelled parts."""
    digest = hashlib.blake2b(repr(parts).encode(), digest_size=8).digest()
    return int.from_bytes(digest, "big") >> 1


@dataclass(frozen=True)
class Job:
    kind: str
    agents: int
    index: int


@dataclass
class Outcome:
    arm: str
    success: bool
    makespan: int
    failure_kind: str
    usage: dict
    seconds: float
    error: str = ""


def _run_job(cfg: BenchConfig, job: Job) -> tuple[Job, list[Outcome]]:
    """All arms on one instance; arms share the map, instance and seeds."""
    outcomes = []
    try:
        h, w = cfg.map_size
        grid = generate_warehouse_map(
            MapSpec(job.kind, width=w, height=h, seed=derive_seed(cfg.seed, "map", job.kind, job.index))
        )
        instance = generate_instance(grid, job.agents, derive_seed(cfg.seed, "inst", job.kind, job.agents, job.index))
    except Exception:
        err = traceback.format_exc(limit=3)
        return job, [Outcome(arm, False, 0, "error", {}, 0.0, err) for arm in cfg.arms]
    cache = DhmCache()
    episode_id = derive_seed("episode", job.kind, job.agents, job.index)
    for arm in cfg.arms:
        t0 = time.perf_counter()
        try:
            res = run_episode(instance, cfg.rde_config(arm, cfg.seed), episode_id=episode_id, cache=cache)
            outcomes.append(
                Outcome(arm, res.success, res.makespan, res.failure_kind, res.usage, time.perf_counter() - t0)
            )
        except Exception:
            err = traceback.format_exc(limit=3)
            log.error("episode %s/%s/%s failed:\n%s", job, arm, cfg.seed, err)
            outcomes.append(Outcome(arm, False, 0, "error", {}, time.perf_counter() - t0, err))
    return job, outcomes


class _Runner:
    def __init__(self, cfg: BenchConfig) -> None:
        self.cfg = cfg

    def __call__(self, job: Job):
        return _run_job(self.cfg, job)


@dataclass
class Cell:
    map_kind: str
    agents: int
    arm: str
    n_s: int = 0
    n_t: int = 0
    makespans: list[int] = field(default_factory=list)
    usage: dict = field(default_factory=lambda: {"Cooperative": 0, "DHM": 0, "Escape": 0})
    n_adapter_failures: int = 0
    n_errors: int = 0
    seconds: list[float] = field(default_factory=list)
    errors: list[str] = field(default_factory=list)

    @property
    def ssr(self) -> Optional[float]:
        return ssr(self.n_s, self.n_t) if self.n_t else None

    @property
    def mean_makespan(self) -> Optional[float]:
        return statistics.fmean(self.makespans) if self.makespans else None

    def add(self, o: Outcome) -> None:
        self.seconds.append(o.seconds)
        if o.failure_kind == "error":
            self.n_errors += 1
            self.errors.append(o.error)
            return
        if o.failure_kind == FailureKind.ADAPTER:
            self.n_adapter_failures += 1
            return
        self.n_t += 1
        if o.success:
            self.n_s += 1
            self.makespans.append(o.makespan)
        for k, v in o.usage.items():
            self.usage[k] = self.usage.get(k, 0) + v


@dataclass
class BatchResult:
    config: BenchConfig
    cells: list[Cell]
    wall_seconds: float = 0.0
    episodes: int = 0

    def cell(self, map_kind: str, agents: int, arm: str) -> Cell:
        for c in self.cells:
            if (c.map_kind, c.agents, c.arm) == (map_kind, agents, arm):
                return c
        raise KeyError((map_kind, agents, arm))


def _jobs(cfg: BenchConfig) -> list[Job]:
    return [Job(k, m, i) for k in cfg.map_kinds for m in cfg.agent_counts for i in range(cfg.instances)]


def run_batch(cfg: BenchConfig, progress=None) -> BatchResult:
    """Run every (map kind, agent count, arm) cell of ``cfg``.

    Results depend only on ``cfg`` (seeds are derived per instance, never per
    worker), so any ``parallelism`` yields the same numbers.
    """
    t0 = time.perf_counter()
    jobs = _jobs(cfg)
    cells = {
        (k, m, a): Cell(k, m, a) for k in cfg.map_kinds for m in cfg.agent_counts for a in cfg.arms
    }
    runner = _Runner(cfg)
    if cfg.parallelism == 1:
        results: Iterable = map(runner, jobs)
        pool = None
    else:
        pool = ProcessPoolExecutor(max_workers=cfg.parallelism)
        chunk = max(1, len(jobs) // (cfg.parallelism * 8))
        results = pool.map(runner, jobs, chunksize=chunk)
    episodes = 0
    try:
        for done, (job, outcomes) in enumerate(results, 1):
            for o in outcomes:
                cells[(job.kind, job.agents, o.arm)].add(o)
                episodes += 1
            if progress is not None:
                progress(done, len(jobs))
    finally:
        if pool is not None:
            pool.shutdown()
    return BatchResult(cfg, list(cells.values()), time.perf_counter() - t0, episodes)


def _fmt(x: Optional[float]) -> str:
    return "" if x is None else f"{x:.6f}"


def results_csv(result: BatchResult) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for c in result.cells:
        writer.writerow(
            [
                c.map_kind,
                c.agents,
                c.arm,
                c.n_s,
                c.n_t,
                _fmt(c.ssr),
                _fmt(c.mean_makespan),
                result.config.complex_policy,
                c.n_adapter_failures,
                c.n_errors,
                c.usage.get("Cooperative", 0),
                c.usage.get("DHM", 0),
                c.usage.get("Escape", 0),
            ]
        )
    return buf.getvalue()


def write_results_csv(result: BatchResult, path: Union[str, os.PathLike]) -> None:
    Path(path).write_text(results_csv(result))


def one_sided_two_proportion_p(s1: int, n1: int, s2: int, n2: int) -> float:
    """p-value for H1: rate1 > rate2 (pooled z-test)."""
    p1, p2 = s1 / n1, s2 / n2
    pooled = (s1 + s2) / (n1 + n2)
    se = (pooled * (1 - pooled) * (1 / n1 + 1 / n2)) ** 0.5
    if se == 0:
        return 0.5 if p1 == p2 else (0.0 if p1 > p2 else 1.0)
    return float(norm.sf((p1 - p2) / se))


def summary_lines(result: BatchResult) -> list[str]:
    lines = [f"complex-scenario policy: {result.config.complex_policy} (rule-based stand-in)"
             if result.config.complex_policy == COOP_BASELINE
             else f"complex-scenario policy: external ({result.config.adapter_command})"]
    for c in result.cells:
        rate = "n/a" if c.ssr is None else f"{c.ssr:.3f}"
        lines.append(f"{c.map_kind:6s} m={c.agents:3d} {c.arm:12s} SSR={rate} ({c.n_s}/{c.n_t})")
        for err in c.errors[:1]:
            lines.append("  first error: " + err.strip().splitlines()[-1])
    lines.append("mean_makespan and diag_* columns are diagnostics beyond the success-rate metric")
    return lines

