import json
import math
import random
from pathlib import Path

import pytest

from rdemapf.core import GridMap
from rdemapf.scenarios import (
    DENSITY_TOLERANCE,
    Instance,
    InstanceError,
    MapFormatError,
    MapKind,
    MapSpec,
    agent_density,
    generate_instance,
    generate_warehouse_map,
    is_connected,
    parse_map,
    read_instance,
    read_map,
    write_instance,
    write_map,
)

from conftest import bellman_ford

TABLE_AGENT_DENSITY = {
    MapKind.SPARSE: {10: 1.49e-2, 30: 4.47e-2, 50: 7.44e-2, 70: 10.42e-2},
    MapKind.DENSE: {10: 1.65e-2, 30: 4.95e-2, 50: 8.25e-2, 70: 11.56e-2},
}


class TestWarehouseMaps:
    @pytest.mark.parametrize("kind,target", [(MapKind.SPARSE, 0.419), (MapKind.DENSE, 0.476)])
    def test_density_and_connectivity(self, kind, target):
        for seed in range(40):
            grid = generate_warehouse_map(MapSpec(kind, seed=seed))
            assert (grid.height, grid.width) == (34, 34)
            assert abs(grid.obstacle_density - target) <= DENSITY_TOLERANCE
            assert is_connected(grid)
            # free border ring
            assert not grid.obstacles[0].any() and not grid.obstacles[-1].any()
            assert not grid.obstacles[:, 0].any() and not grid.obstacles[:, -1].any()

    def test_deterministic_per_seed(self):
        a = generate_warehouse_map(MapSpec(MapKind.SPARSE, seed=7))
        b = generate_warehouse_map(MapSpec(MapKind.SPARSE, seed=7))
        assert a == b

    def test_seeds_vary_layout(self):
        maps = {generate_warehouse_map(MapSpec(MapKind.SPARSE, seed=s)).key for s in range(20)}
        assert len(maps) > 1

    def test_dense_aisles_are_one_wide(self):
        grid = generate_warehouse_map(MapSpec(MapKind.DENSE, seed=0))
        inner = grid.obstacles[1:-1, 1:-1]
        # some interior free cell has obstacles on both sides horizontally or vertically
        rows, cols = inner.shape
        assert any(
            not inner[r, c] and inner[r, c - 1] and inner[r, c + 1]
            for r in range(rows)
            for c in range(1, cols - 1)
        ) or any(
            not inner[r, c] and inner[r - 1, c] and inner[r + 1, c]
            for r in range(1, rows - 1)
            for c in range(cols)
        )

    def test_unreachable_target_density(self):
        with pytest.raises(ValueError):
            generate_warehouse_map(MapSpec(MapKind.DENSE, width=5, height=5, target_rho_o=0.9))

    @pytest.mark.parametrize("kw", [dict(target_rho_o=1.5), dict(width=2)])
    def test_bad_spec(self, kw):
        with pytest.raises(ValueError):
            MapSpec(**kw)


class TestAgentDensity:
    def test_dense_reproduces_table(self):
        grid = generate_warehouse_map(MapSpec(MapKind.DENSE, seed=0))
        for m, want in TABLE_AGENT_DENSITY[MapKind.DENSE].items():
            assert abs(agent_density(grid, m) - want) <= 0.05e-2

    def test_sparse_ten_agents(self):
        for seed in range(20):
            grid = generate_warehouse_map(MapSpec(MapKind.SPARSE, seed=seed))
            assert abs(agent_density(grid, 10) - 1.49e-2) <= 0.05e-2

    def test_simple_ratio(self):
        assert agent_density(GridMap.from_rows(["@...", "...."]), 7) == 1.0


@pytest.fixture(scope="module")
def dense():
    return generate_warehouse_map(MapSpec(MapKind.DENSE, seed=1))


class TestGenerateInstance:
    def test_seventy_agents(self, dense):
        inst = generate_instance(dense, 70, seed=3)
        assert inst.m == 70
        assert len(set(inst.starts)) == 70 and len(set(inst.goals)) == 70
        assert all(dense.is_free(p) for p in inst.starts + inst.goals)

    def test_fills_every_free_cell(self, dense):
        assert generate_instance(dense, dense.n_free, seed=0).m == dense.n_free

    def test_one_too_many(self, dense):
        with pytest.raises(ValueError):
            generate_instance(dense, dense.n_free + 1, seed=0)

    def test_deterministic(self, dense):
        assert generate_instance(dense, 30, seed=5) == generate_instance(dense, 30, seed=5)
        assert generate_instance(dense, 30, seed=5) != generate_instance(dense, 30, seed=6)

    def test_retries_until_reachable(self):
        grid = GridMap.from_rows(["..@.."])
        for seed in range(20):
            inst = generate_instance(grid, 1, seed=seed)
            assert (inst.starts[0][1] < 2) == (inst.goals[0][1] < 2)

    def test_gives_up(self):
        # each draw pairs the two isolated cells correctly half the time
        grid = GridMap.from_rows([".@."])
        failures = 0
        for seed in range(20):
            try:
                generate_instance(grid, 2, seed=seed, max_retries=1)
            except ValueError:
                failures += 1
        assert 0 < failures < 20


class TestInstanceValidation:
    grid = GridMap.from_rows(["...", ".@.", "..@", "@.."])

    @pytest.mark.parametrize(
        "starts,goals,agent",
        [
            ([(0, 0)], [(1, 1)], 0),  # goal on obstacle
            ([(0, 0), (9, 0)], [(0, 1), (0, 2)], 1),  # out of bounds
            ([(0, 0), (0, 0)], [(0, 1), (0, 2)], 1),  # duplicate start
            ([(0, 0), (0, 1)], [(0, 2), (0, 2)], 1),  # duplicate goal
            ([(0, 0)], [(0, 1), (0, 2)], None),  # count mismatch
            ([(0.5, 0)], [(0, 1)], 0),  # non-integer
            ([(True, 0)], [(0, 1)], 0),  # bool is not a coordinate
        ],
    )
    def test_rejected(self, starts, goals, agent):
        with pytest.raises(InstanceError) as err:
            Instance(self.grid, starts, goals)
        assert err.value.agent == agent

    def test_unreachable_goal(self):
        grid = GridMap.from_rows(["..@.."])
        with pytest.raises(InstanceError, match="unreachable"):
            Instance(grid, [(0, 0)], [(0, 4)])


def test_map_round_trip(tmp_path):
    grid = generate_warehouse_map(MapSpec(MapKind.SPARSE, seed=3))
    write_map(grid, tmp_path / "w.map")
    text = (tmp_path / "w.map").read_text()
    assert text.startswith("type octile\nheight 34\nwidth 34\nmap\n")
    assert read_map(tmp_path / "w.map") == grid


@pytest.mark.parametrize(
    "text,line",
    [
        ("type octile\nheight 2\nwidth 2\nmap\n..\n.\n", "line 6"),
        ("type octile\nheight 2\nwidth 2\nmap\n..\n.x\n", "line 6"),
        ("type octile\nheight x\nwidth 2\nmap\n..\n..\n", "line 2"),
        ("type octile\nheight 2\nwidth 2\ngrid\n..\n..\n", "line 4"),
        ("octile\nheight 2\nwidth 2\nmap\n..\n..\n", "line 1"),
        ("type octile\nheight 3\nwidth 2\nmap\n..\n..\n", "expected 3 rows"),
        ("type octile\n", "header"),
    ],
)
def test_map_errors_name_the_line(text, line):
    with pytest.raises(MapFormatError, match=line):
        parse_map(text)


def test_instance_round_trip(tmp_path):
    grid = generate_warehouse_map(MapSpec(MapKind.DENSE, seed=0))
    inst = generate_instance(grid, 10, seed=1)
    (tmp_path / "maps").mkdir()
    write_instance(inst, tmp_path / "i.json", tmp_path / "maps" / "d.map")
    doc = json.loads((tmp_path / "i.json").read_text())
    assert doc["map"] == "maps/d.map" and doc["format"] == "rdemapf-instance" and doc["version"] == 1
    assert read_instance(tmp_path / "i.json") == inst


# --- fuzzing --------------------------------------------------------------

FUZZ_MAP = ["......", ".@@...", "......", "@@@@@@", "...@.."]


def oracle_accepts(path: Path) -> bool:
    """Independent validity check, written against the documented format."""
    try:
        doc = json.loads(path.read_text())
    except ValueError:
        return False
    if not isinstance(doc, dict) or doc.get("format") != "rdemapf-instance":
        return False
    if type(doc.get("version")) is not int or doc["version"] != 1:
        return False
    ref = doc.get("map")
    if not isinstance(ref, str) or not (path.parent / ref).is_file():
        return False
    lines = (path.parent / ref).read_text().splitlines()
    cells = [[ch == "@" for ch in row] for row in lines[4:]]
    h, w = len(cells), len(cells[0])
    agents = doc.get("agents")
    if not isinstance(agents, list):
        return False
    seen_s, seen_g = set(), set()
    for rec in agents:
        if not isinstance(rec, dict) or sorted(rec) != ["goal", "start"]:
            return False
        pts = []
        for key, seen in (("start", seen_s), ("goal", seen_g)):
            p = rec[key]
            if not isinstance(p, list) or len(p) != 2 or any(type(v) is not int for v in p):
                return False
            r, c = p
            if not (0 <= r < h and 0 <= c < w) or cells[r][c] or (r, c) in seen:
                return False
            seen.add((r, c))
            pts.append((r, c))
        if bellman_ford(cells, pts[1])[pts[0][0]][pts[0][1]] == math.inf:
            return False
    return True


def _mutate(doc: dict, rng: random.Random) -> str:
    doc = json.loads(json.dumps(doc))
    agents = doc["agents"]
    i = rng.randrange(len(agents))
    key = rng.choice(["start", "goal"])
    kind = rng.randrange(12)
    if kind == 0:
        agents[i][key] = [rng.choice([-1, 5, 6, 40]), rng.randrange(6)]
    elif kind == 1:
        agents[i][key] = rng.choice([[1, 1], [1, 2], [3, 0], [3, 4], [4, 3]])  # obstacles
    elif kind == 2:
        j = (i + 1) % len(agents)
        agents[i][key] = list(agents[j][key])
    elif kind == 3:
        del agents[i][key]
    elif kind == 4:
        agents[i]["speed"] = 1
    elif kind == 5:
        agents[i][key] = rng.choice([[1.0, 2], ["1", 2], [True, 0], [1], [1, 2, 3], None, "1,2"])
    elif kind == 6:
        doc[rng.choice(["format", "version"])] = rng.choice(["x", 2, True, None])
    elif kind == 7:
        doc["map"] = rng.choice(["missing.map", "", 7])
    elif kind == 8:
        # move this agent's goal to the other side of the wall
        s = agents[i]["start"]
        agents[i]["goal"] = [4, 4] if s[0] < 3 else [0, 0]
        for j, rec in enumerate(agents):
            if j != i and rec["goal"] == agents[i]["goal"]:
                rec["goal"] = agents[i]["goal"]  # also a duplicate
    elif kind == 9:
        doc["agents"] = rng.choice([{}, "none", 3])
    elif kind == 10:
        text = json.dumps(doc)
        return text[: rng.randrange(1, len(text) - 1)]
    else:
        text = bytearray(json.dumps(doc).encode())
        pos = rng.randrange(len(text))
        text[pos] = rng.choice(b'{}[]",:x')
        return text.decode(errors="replace")
    return json.dumps(doc)


def test_fuzzed_instances_agree_with_oracle(tmp_path):
    (tmp_path / "f.map").write_text(
        f"type octile\nheight {len(FUZZ_MAP)}\nwidth {len(FUZZ_MAP[0])}\nmap\n" + "\n".join(FUZZ_MAP) + "\n"
    )
    base = {
        "format": "rdemapf-instance",
        "version": 1,
        "map": "f.map",
        "agents": [
            {"start": [0, 0], "goal": [2, 5]},
            {"start": [2, 0], "goal": [0, 5]},
            {"start": [4, 0], "goal": [4, 2]},
            {"start": [4, 4], "goal": [4, 5]},
        ],
    }
    path = tmp_path / "i.json"
    path.write_text(json.dumps(base))
    assert oracle_accepts(path) and read_instance(path).m == 4

    rng = random.Random(1234)
    corrupt = 0
    for _ in range(1500):
        path.write_text(_mutate(base, rng))
        want = oracle_accepts(path)
        try:
            read_instance(path)
            got = True
        except InstanceError:
            got = False
        assert got == want, path.read_text()
        corrupt += not want
    assert corrupt >= 1000
