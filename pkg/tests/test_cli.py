import json
import os
import subprocess
import sys

import pytest

from tetherclimb.cli import main

SMALL = {
    "simulate": ["--duration", "2", "--dt", "0.004", "--n-hops", "1"],
    "hopsolve": ["--r0", "0", "0", "0", "--rtau", "0", "0.5", "0", "--t-max", "30"],
    "surface": ["--seed", "3", "--extent", "2e-4", "--r-s", "10e-6", "50e-6"],
    "evolve": ["--seed", "1", "--pop", "4", "--generations", "2", "--duration", "1", "--dt", "0.004",
               "--pre-settle", "0.2"],
    "plan": ["--seed", "0", "--export-mask"],
}


def run(sub, out, *extra):
    return main([sub, "--out", str(out), *SMALL[sub], *extra])


def outputs(out):
    manifest = json.loads((out / "manifest.json").read_text())
    return {name: (out / name).read_bytes() for name in manifest["outputs"]}


@pytest.mark.parametrize("sub", sorted(SMALL))
def test_rerun_and_manifest_replay_are_byte_identical(tmp_path, sub, capsys):
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    assert run(sub, a) == 0
    assert run(sub, b) == 0
    assert main([sub, "--out", str(c), "--manifest", str(a / "manifest.json")]) == 0
    first = outputs(a)
    assert first and first == outputs(b) == outputs(c)
    manifest = json.loads((a / "manifest.json").read_text())
    assert manifest["subcommand"] == sub and manifest["status"] == "ok"
    assert "total_s" in manifest["timings"]


def test_expected_files(tmp_path, capsys):
    assert run("simulate", tmp_path / "s") == 0
    assert {"trajectory.csv", "summary.json", "staircase.csv"} <= set(os.listdir(tmp_path / "s"))
    assert run("plan", tmp_path / "p") == 0
    files = set(os.listdir(tmp_path / "p"))
    assert {f"path_robot{i}.csv" for i in range(3)} | {"path_payload.csv", "path.json", "mask.csv"} <= files
    meta = json.loads((tmp_path / "p" / "path.json").read_text())
    assert meta["violations"] == [] and "iterations" in meta and "cells_explored" in meta
    manifest = json.loads((tmp_path / "p" / "manifest.json").read_text())
    assert manifest["timings"]["planning_s"] < 5.0


def test_infeasible_hop_exit_code(tmp_path, capsys):
    code = main(["hopsolve", "--out", str(tmp_path), "--rtau", "0", "5", "0", "--t-max", "1"])
    assert code == 1
    err = json.loads((tmp_path / "error.json").read_text())
    assert err["required_thrust"] > 1
    assert json.loads(capsys.readouterr().out)["required_thrust"] == err["required_thrust"]


def test_usage_errors(tmp_path, capsys):
    assert main(["teleport"]) == 2
    assert main(["plan", "--out", str(tmp_path)]) == 2  # seed is mandatory
    assert main(["evolve", "--out", str(tmp_path)]) == 2
    assert main(["simulate", "--out", str(tmp_path), "--scenario", str(tmp_path / "missing.json")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text('{"controller": {"dt": -1}}')
    assert main(["simulate", "--out", str(tmp_path), "--scenario", str(bad)]) == 2
    assert "dt" in capsys.readouterr().err


def test_manifest_subcommand_must_match(tmp_path, capsys):
    assert run("hopsolve", tmp_path / "h") == 0
    assert main(["plan", "--seed", "0", "--out", str(tmp_path / "x"),
                 "--manifest", str(tmp_path / "h" / "manifest.json")]) == 2


def test_heightmap_input_is_hashed(tmp_path, capsys):
    from tetherclimb.terrain import export_heightmap, two_ridge_heightmap
    hm_path = tmp_path / "ridge.csv"
    export_heightmap(two_ridge_heightmap(), hm_path)
    assert main(["plan", "--seed", "1", "--out", str(tmp_path / "o"), "--heightmap", str(hm_path)]) == 0
    manifest = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert len(next(iter(manifest["inputs"].values()))["sha256"]) == 64


def test_output_dir_from_environment(tmp_path):
    env = {**os.environ, "TETHERCLIMB_OUT": str(tmp_path / "envout")}
    proc = subprocess.run([sys.executable, "-m", "tetherclimb.cli", "hopsolve", *SMALL["hopsolve"]],
                          env=env, capture_output=True, text=True, cwd=tmp_path)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "envout" / "hop.json").exists()
