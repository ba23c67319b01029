import json
from pathlib import Path as FsPath

import pytest
import yaml

from convoylab.cli import EXIT_COLLISION, EXIT_INVALID, EXIT_OK, format_table, main

SCN_DIR = FsPath(__file__).parent.parent / "scenarios"


def write_scn(tmp_path, **kw):
    d = dict(name="short", path=dict(generator="straight", length=120.0), duration=2.0,
             initial=dict(start_s=30.0, lateral=0.1))
    d.update(kw)
    f = tmp_path / "short.yaml"
    f.write_text(yaml.safe_dump(d))
    return f


def test_validate_shipped(capsys):
    assert main(["validate", str(SCN_DIR / "tunnel_stall.yaml")]) == EXIT_OK
    assert "ok" in capsys.readouterr().out


def test_validate_unknown_field(tmp_path, capsys):
    f = write_scn(tmp_path, colour="red")
    assert main(["validate", str(f)]) == EXIT_INVALID
    assert "colour" in capsys.readouterr().err


def test_missing_file_and_bad_args(tmp_path):
    assert main(["validate", str(tmp_path / "nope.yaml")]) == EXIT_INVALID
    assert main(["frobnicate"]) == EXIT_INVALID
    assert main(["run", str(SCN_DIR / "straight.yaml"), "--controller", "pid"]) == EXIT_INVALID
    assert main(["compare", str(SCN_DIR / "straight.yaml"), "--seeds", "a,b"]) == EXIT_INVALID


def test_run_twice_gives_identical_bytes(tmp_path):
    f = write_scn(tmp_path)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", str(f), "--seed", "3", "--out", str(a)]) == EXIT_OK
    assert main(["run", str(f), "--seed", "3", "--out", str(b)]) == EXIT_OK
    name = "short_convoy_seed3.csv"
    assert (a / name).read_bytes() == (b / name).read_bytes()
    summary = json.loads((a / "short_convoy_seed3.json").read_text())
    assert summary["collision"] is False and summary["seed"] == 3


def test_run_reports_collision(tmp_path):
    # a tiny desired gap with a large collision radius makes the baseline drive into its lead
    f = write_scn(tmp_path, controller="base", duration=15.0, collision_radius=2.0,
                  convoy=dict(lambda1=0.0, K_min=0.5), initial=dict(start_s=30.0, spacing=2.5))
    assert main(["run", str(f), "--out", str(tmp_path / "o")]) == EXIT_COLLISION


def test_compare_writes_table(tmp_path, capsys):
    f = write_scn(tmp_path, duration=6.0)
    assert main(["compare", str(f), "--seeds", "0,1", "--out", str(tmp_path)]) == EXIT_OK
    out = capsys.readouterr().out
    assert "convoy" in out and "base" in out
    rows = (tmp_path / "short_compare.csv").read_text().splitlines()
    assert rows[0].startswith("scenario,controller,seed,avg_e_m1,avg_e_m2")
    assert len(rows) == 5


def test_sweep_speed(tmp_path, capsys):
    f = write_scn(tmp_path)
    assert main(["sweep-speed", str(f), "--speeds", "4,5", "--controller", "base", "--out", str(tmp_path)]) == 0
    rows = (tmp_path / "short_sweep.csv").read_text().splitlines()
    assert len(rows) == 3 and rows[0].startswith("v_t,")


def test_spring_demo(tmp_path, capsys):
    assert main(["spring-demo", "--out", str(tmp_path)]) == EXIT_OK
    data = json.loads((tmp_path / "spring_demo.json").read_text())
    assert [d["coupling"] for d in data] == ["lead_only", "both_neighbors"]


def test_format_table_alignment():
    text = format_table([dict(scenario="a", controller="convoy", seed=0, avg_e_m1=0.5, avg_e_m2=float("nan"),
                              max_e_m2=1.0, collision=False, completion=1.0)])
    lines = text.splitlines()
    assert len(lines) == 3 and len(set(map(len, lines))) == 1
    assert "nan" in lines[2] and "no" in lines[2]
