"""Text and SVG frames from a recorded trace. Presentation only."""
from __future__ import annotations

import os
import string
from pathlib import Path
from typing import Sequence, Union

from .rde import read_trace

GLYPHS = string.ascii_uppercase + string.ascii_lowercase
GOAL = "+"
CELL_PX = 16


def agent_glyph(i: int) -> str:
    return GLYPHS[i % len(GLYPHS)]


def _frames(records: Sequence[dict]) -> tuple[dict, list[dict]]:
    header = records[0]
    steps = [r for r in records[1:] if r.get("type") == "step"]
    m = len(header.get("goals", []))
    rows = header.get("map")
    if not isinstance(rows, list) or not rows:
        raise ValueError("trace header has no map")
    for r in steps:
        if len(r.get("positions", [])) != m:
            raise ValueError(f"step {r.get('t')} has {len(r.get('positions', []))} positions, expected {m}")
    return header, steps


def ascii_frame(rows: Sequence[str], goals: Sequence, positions: Sequence) -> str:
    grid = [list(row) for row in rows]
    for r, c in goals:
        grid[r][c] = GOAL
    for i, (r, c) in enumerate(positions):
        grid[r][c] = agent_glyph(i)
    return "\n".join("".join(row) for row in grid)


def render_ascii(records: Sequence[dict]) -> list[str]:
    header, steps = _frames(records)
    out = []
    for rec in steps:
        body = ascii_frame(header["map"], header["goals"], rec["positions"])
        out.append(f"t={rec['t']}\n{body}")
    return out


def svg_frame(rows: Sequence[str], goals: Sequence, positions: Sequence) -> str:
    h, w = len(rows), len(rows[0])
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w * CELL_PX}" height="{h * CELL_PX}">',
        f'<rect width="{w * CELL_PX}" height="{h * CELL_PX}" fill="white"/>',
    ]
    for r, row in enumerate(rows):
        for c, ch in enumerate(row):
            if ch == "@":
                parts.append(
                    f'<rect x="{c * CELL_PX}" y="{r * CELL_PX}" width="{CELL_PX}" height="{CELL_PX}" fill="#555"/>'
                )
    for i, (r, c) in enumerate(goals):
        parts.append(
            f'<text x="{c * CELL_PX + 4}" y="{r * CELL_PX + 12}" font-size="10" fill="#c33">{agent_glyph(i).lower()}</text>'
        )
    half = CELL_PX / 2
    for i, (r, c) in enumerate(positions):
        parts.append(
            f'<circle cx="{c * CELL_PX + half}" cy="{r * CELL_PX + half}" r="{half - 1}" fill="#f90"/>'
            f'<text x="{c * CELL_PX + 4}" y="{r * CELL_PX + 12}" font-size="10">{agent_glyph(i)}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts)


def render_svg(records: Sequence[dict], out_dir: Union[str, os.PathLike]) -> list[Path]:
    header, steps = _frames(records)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for rec in steps:
        path = out_dir / f"frame_{rec['t']:04d}.svg"
        path.write_text(svg_frame(header["map"], header["goals"], rec["positions"]))
        paths.append(path)
    return paths


def render_trace(trace_path: Union[str, os.PathLike], mode: str = "ascii", out_dir=None):
    """ASCII frames as a list of strings, or SVG frame paths written to ``out_dir``."""
    records = read_trace(trace_path)
    if mode == "ascii":
        return render_ascii(records)
    if mode == "svg":
        if out_dir is None:
            raise ValueError("svg mode needs an output directory")
        return render_svg(records, out_dir)
    raise ValueError(f"unknown render mode {mode!r}")
