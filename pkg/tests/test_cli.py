import csv
import json
import subprocess
import sys

import pytest
import yaml

from lamdbar.cli import EXIT_CHECK, EXIT_CONFIG, EXIT_OK, RunConfig, main, run
from lamdbar.grid import GridField

SMALL = {"problem": {"n_max": 6, "word_cap": 8}}


def write_config(tmp_path, data, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(data) if name.endswith(".yaml") else json.dumps(data))
    return str(path)


def read_manifest(out):
    return json.loads((out / "manifest.json").read_text())


def test_lemmas_exit_zero(tmp_path):
    cfg = write_config(tmp_path, {"lemmas": {"samples": 2000}})
    out = tmp_path / "o"
    assert run("lemmas", cfg, str(out), seed=1) == EXIT_OK
    m = read_manifest(out)
    assert m["status"] == "ok"
    assert "lemmas.json" in m["artifacts"]
    assert all(v == 0 for v in m["values"]["hyperbolic_disk.verify_disk_lemmas"].values())


def test_partition_and_group(tmp_path):
    cfg = write_config(tmp_path, {"partition": {"n_max": 3, "points": 500, "regularity_samples": 5}, "group": {"word_cap": 8, "n_cap": 6}})
    assert run("partition", cfg, str(tmp_path / "p")) == EXIT_OK
    assert run("group", cfg, str(tmp_path / "g")) == EXIT_OK
    rows = list(csv.DictReader(open(tmp_path / "g" / "group_counts.csv")))
    assert {r["n"] for r in rows} >= {"0", "3"}


def test_solve_artifacts_carry_hash(tmp_path):
    cfg = write_config(tmp_path, SMALL, "cfg.json")
    out = tmp_path / "s"
    assert run("solve", cfg, str(out)) == EXIT_OK
    m = read_manifest(out)
    h = m["config_hash"]
    for name in ("u_t.gfld", "v_t.gfld", "annulus_norms.csv", "solve.json"):
        assert name in m["artifacts"]
    assert json.loads((out / "solve.json").read_text())["config_hash"] == h
    assert all(r["config_hash"] == h for r in csv.DictReader(open(out / "annulus_norms.csv")))
    f = GridField.load(out / "u_t.gfld")
    assert f.kind == "section"
    assert "deck_sum_solver.solve_leaf" in m["values"]


def test_zero_rhs_solve(tmp_path):
    cfg = write_config(tmp_path, {"problem": {"scale": 0.0, "n_max": 5, "word_cap": 6}})
    out = tmp_path / "z"
    assert run("solve", cfg, str(out)) == EXIT_OK
    assert not GridField.load(out / "u_t.gfld").values.any()


def test_constants_positive(tmp_path):
    cfg = write_config(tmp_path, SMALL)
    out = tmp_path / "c"
    assert run("constants", cfg, str(out)) == EXIT_OK
    d = json.loads((out / "constants.json").read_text())
    for key in ("c1", "c2", "c3", "c4"):
        assert d[key] > 0
    assert d["k"] == 0


def test_sweep_and_report(tmp_path):
    cfg = write_config(tmp_path, {**SMALL, "report": {"corpus_size": 2, "tail_from": 4}})
    assert run("sweep", cfg, str(tmp_path / "w")) == EXIT_OK
    sweep = json.loads((tmp_path / "w" / "sweep.json").read_text())
    assert sweep["derivative_order"] >= 1.5
    assert run("report", cfg, str(tmp_path / "r")) == EXIT_OK
    rows = list(csv.DictReader(open(tmp_path / "r" / "corpus.csv")))
    assert len(rows) == 2


@pytest.mark.parametrize(
    "data",
    [
        {"problem": {"m": 4, "s": 5}},
        {"nonsense": 1},
        {"problem": {"colour": "red"}},
        {"partition": {"n_min": 0}},
        {"sweep": {"lipschitz_steps": [0.1, -0.1]}},
    ],
)
def test_invalid_config(tmp_path, data):
    cfg = write_config(tmp_path, data)
    assert run("solve", cfg, str(tmp_path / "x")) == EXIT_CONFIG


def test_boundary_action_constraint_named(tmp_path, caplog):
    cfg = write_config(tmp_path, {"problem": {"action": "boundary"}})
    assert run("sweep", cfg, str(tmp_path / "x")) == EXIT_CONFIG
    assert "s <= 2(k+1) for boundary action" in caplog.text


def test_missing_file(tmp_path):
    assert run("solve", str(tmp_path / "nope.yaml"), str(tmp_path / "x")) == EXIT_CONFIG


def test_numerical_failure_exit_code(tmp_path, monkeypatch):
    from lamdbar import cli
    from lamdbar.exceptions import NumericalCheckError

    def boom(cfg, w, threads):
        raise NumericalCheckError("forced")

    monkeypatch.setitem(cli._HANDLERS, "group", boom)
    assert run("group", None, str(tmp_path / "x")) == EXIT_CHECK
    assert read_manifest(tmp_path / "x")["status"] == "check-failed"


def test_hash_ignores_threads_and_tracks_seed():
    a = RunConfig.load("solve", None, 0)
    b = RunConfig.load("solve", None, 1)
    assert a.hash() == RunConfig.load("solve", None, 0).hash()
    assert a.hash() != b.hash()


def test_byte_identical_across_threads(tmp_path):
    cfg = write_config(tmp_path, SMALL)
    assert run("solve", cfg, str(tmp_path / "t1"), threads=1) == EXIT_OK
    assert run("solve", cfg, str(tmp_path / "t3"), threads=3) == EXIT_OK
    for name in ("u_t.gfld", "v_t.gfld", "annulus_norms.csv", "solve.json", "manifest.json"):
        assert (tmp_path / "t1" / name).read_bytes() == (tmp_path / "t3" / name).read_bytes()


def test_main_entry_point(tmp_path):
    assert main(["group", "--out", str(tmp_path / "m"), "--seed", "2"]) == EXIT_OK
    with pytest.raises(SystemExit):
        main(["bogus"])


def test_console_script(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "lamdbar.cli", "solve", "--config", str(tmp_path / "missing.yaml"), "--out", str(tmp_path)],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == EXIT_CONFIG
    assert "invalid configuration" in proc.stderr
