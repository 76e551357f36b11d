"""Command-line entry point: ``rdemapf <subcommand> ...``."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import bench
from .policies import FovSpec
from .rde import COOP_BASELINE, EXTERNAL, MAX_TIMESTEPS, RdeConfig, run_episode
from .render import render_trace
from .scenarios import MapSpec, generate_instance, generate_warehouse_map, read_instance, read_map, write_instance, write_map


def _fov(text: str) -> FovSpec:
    try:
        w, h = (int(x) for x in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected WxH, got {text!r}") from None
    try:
        return FovSpec(w, h)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def cmd_gen_map(args) -> int:
    grid = generate_warehouse_map(MapSpec(args.kind, width=args.width, height=args.height, seed=args.seed))
    write_map(grid, args.out)
    print(f"wrote {args.out}: {grid.height}x{grid.width}, rho_o={grid.obstacle_density:.3f}, free={grid.n_free}")
    return 0


def cmd_gen_instances(args) -> int:
    grid = read_map(args.map)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for i in range(args.count):
        inst = generate_instance(grid, args.agents, bench.derive_seed(args.seed, "inst", args.agents, i))
        write_instance(inst, out / f"{Path(args.map).stem}-m{args.agents}-{i:04d}.json", args.map)
    print(f"wrote {args.count} instances to {out}")
    return 0


def cmd_run(args) -> int:
    inst = read_instance(args.instance)
    dhm, escape = bench.ARMS[args.arm]
    cfg = RdeConfig(
        fov=args.fov,
        max_timesteps=args.max_steps,
        complex_policy=EXTERNAL if args.adapter else COOP_BASELINE,
        enable_dhm_policy=dhm,
        enable_escape=escape,
        seed=args.seed,
        adapter_command=args.adapter,
        adapter_timeout_ms=args.adapter_timeout_ms,
    )
    res = run_episode(inst, cfg, trace_out=args.trace_out)
    print(
        json.dumps(
            {
                "success": res.success,
                "makespan": res.makespan,
                "failure_kind": res.failure_kind,
                "usage": res.usage,
                "complex_policy": cfg.complex_policy,
            }
        )
    )
    return 0 if res.success else 1


def cmd_bench(args) -> int:
    cfg = bench.BenchConfig.load(args.config) if args.config else bench.BenchConfig()
    overrides = {k: v for k, v in (("instances", args.instances), ("parallelism", args.parallelism)) if v}
    if overrides:
        cfg = bench.BenchConfig(**{**cfg.__dict__, **overrides})

    def progress(done, total):
        if args.verbose:
            print(f"\r{done}/{total} instances", end="", file=sys.stderr)

    result = bench.run_batch(cfg, progress)
    if args.verbose:
        print(file=sys.stderr)
    bench.write_results_csv(result, args.out)
    for line in bench.summary_lines(result):
        print(line)
    print(f"{result.episodes} episodes in {result.wall_seconds:.1f}s; results in {args.out}")
    return 0


def cmd_render(args) -> int:
    out = render_trace(args.trace, args.mode, args.out_dir)
    if args.mode == "ascii":
        print("\n\n".join(out))
    else:
        print(f"wrote {len(out)} frames to {args.out_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rdemapf", description=__doc__)
    p.add_argument("--log-level", default="WARNING")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-map", help="generate a warehouse map file")
    g.add_argument("--kind", choices=["sparse", "dense"], default="sparse")
    g.add_argument("--width", type=int, default=34)
    g.add_argument("--height", type=int, default=34)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("-o", "--out", required=True)
    g.set_defaults(func=cmd_gen_map)

    g = sub.add_parser("gen-instances", help="sample start/goal instances on a map")
    g.add_argument("--map", required=True)
    g.add_argument("--agents", "-m", type=int, required=True)
    g.add_argument("--count", "-n", type=int, default=1)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out-dir", required=True)
    g.set_defaults(func=cmd_gen_instances)

    g = sub.add_parser("run", help="simulate one instance")
    g.add_argument("--instance", required=True)
    g.add_argument("--arm", choices=list(bench.ARMS), default="+DHM+Escape")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--max-steps", type=int, default=MAX_TIMESTEPS)
    g.add_argument("--fov", type=_fov, default=FovSpec())
    g.add_argument("--trace-out")
    g.add_argument("--adapter", help="command line of an external complex-scenario policy")
    g.add_argument("--adapter-timeout-ms", type=int, default=1000)
    g.set_defaults(func=cmd_run)

    g = sub.add_parser("bench", help="run a batch experiment")
    g.add_argument("--config", help="JSON config file (defaults reproduce the full protocol)")
    g.add_argument("--out", default="results.csv")
    g.add_argument("--instances", type=int)
    g.add_argument("--parallelism", type=int)
    g.add_argument("-v", "--verbose", action="store_true")
    g.set_defaults(func=cmd_bench)

    g = sub.add_parser("render", help="render a trace as ascii or svg frames")
    g.add_argument("trace")
    g.add_argument("--mode", choices=["ascii", "svg"], default="ascii")
    g.add_argument("--out-dir")
    g.set_defaults(func=cmd_render)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except BrokenPipeError:
        # reader went away (e.g. piped into head); silence the flush at exit
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return 0
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
