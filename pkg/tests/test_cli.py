import csv
import json

from rdemapf.cli import main


def test_end_to_end(tmp_path, capsys):
    m = tmp_path / "dense.map"
    assert main(["gen-map", "--kind", "dense", "--seed", "3", "-o", str(m)]) == 0
    assert "rho_o=0.476" in capsys.readouterr().out

    out = tmp_path / "inst"
    assert main(["gen-instances", "--map", str(m), "-m", "10", "-n", "2", "--out-dir", str(out)]) == 0
    files = sorted(out.glob("*.json"))
    assert len(files) == 2
    assert "wrote 2 instances" in capsys.readouterr().out

    trace = tmp_path / "t.jsonl"
    code = main(["run", "--instance", str(files[0]), "--seed", "2", "--trace-out", str(trace)])
    summary = json.loads(capsys.readouterr().out)
    assert code == (0 if summary["success"] else 1)
    assert summary["complex_policy"] == "coop_baseline"

    assert main(["render", str(trace)]) == 0
    assert capsys.readouterr().out.startswith("t=0\n")
    assert main(["render", str(trace), "--mode", "svg", "--out-dir", str(tmp_path / "svg")]) == 0
    assert list((tmp_path / "svg").glob("frame_*.svg"))


def test_run_flags(tmp_path, capsys):
    m = tmp_path / "s.map"
    main(["gen-map", "-o", str(m)])
    main(["gen-instances", "--map", str(m), "-m", "3", "--out-dir", str(tmp_path)])
    inst = next(tmp_path.glob("*.json"))
    capsys.readouterr()
    main(["run", "--instance", str(inst), "--arm", "baseline", "--max-steps", "2", "--fov", "3x5"])
    summary = json.loads(capsys.readouterr().out)
    assert summary["usage"]["DHM"] == 0 and summary["usage"]["Escape"] == 0


def test_bench_from_config(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"map_kinds": ["dense"], "agent_counts": [5], "instances": 2, "max_timesteps": 20}))
    out = tmp_path / "r.csv"
    assert main(["bench", "--config", str(cfg), "--out", str(out)]) == 0
    rows = list(csv.DictReader(out.open()))
    assert [r["arm"] for r in rows] == ["baseline", "+DHM", "+DHM+Escape"]
    assert "rule-based stand-in" in capsys.readouterr().out


def test_errors_exit_two(tmp_path, capsys):
    assert main(["run", "--instance", str(tmp_path / "missing.json")]) == 2
    bad = tmp_path / "c.json"
    bad.write_text('{"instances": 0}')
    assert main(["bench", "--config", str(bad)]) == 2
    assert "error:" in capsys.readouterr().err
