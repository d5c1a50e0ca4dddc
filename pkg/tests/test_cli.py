import csv
import dataclasses
import json
import subprocess
import sys

import numpy as np
import pytest

from linfperturb import __version__, bounds
from linfperturb.cli import config_hash, load_schema, main
from linfperturb.linalg import read_matrix, write_matrix

SMALL = {
    "perturb-verify": ["--n", "60", "--k", "20", "--trials", "3"],
    "det-verify": ["--n", "20", "--k", "10", "--trials", "2"],
    "tails": ["--n", "30", "--k", "15", "--trials", "500", "--t-grid", "0:30:3"],
    "cluster-clique": ["--n", "100", "--sweep-c", "2:3", "--trials", "2"],
    "cluster-partition": ["--sizes", "40,25", "--trials", "2", "--epsilon", "0.5"],
    "cluster-hidden": ["--sizes", "40,40", "--densities", "0.95", "--trials", "2",
                       "--epsilon", "0.5"],
    "complete": ["--m", "20", "--n", "16", "--p", "1", "--B", "0", "--threshold", "5",
                 "--trials", "2"],
    "bounds-report": ["--n", "80", "--k", "30", "--T", "20"],
}


def run_cli(tmp_path, command, *extra, seed="7"):
    out = tmp_path / "out"
    code = main(["run", command, "--seed", seed, "--out", str(out), *extra])
    return code, out


def artifacts(out):
    return {p.name: p.read_bytes() for p in sorted(out.iterdir())}


def test_perturb_verify_reruns_are_byte_identical(tmp_path):
    args = ["--n", "400", "--k", "80", "--trials", "50"]
    code, out = run_cli(tmp_path / "a", "perturb-verify", *args)
    assert code == 0
    code, out2 = run_cli(tmp_path / "b", "perturb-verify", *args)
    assert code == 0
    first, second = artifacts(out), artifacts(out2)
    assert first == second
    assert sum(name.endswith(".csv") for name in first) == 2


@pytest.mark.parametrize("command", ["perturb-verify", "complete", "cluster-clique"])
def test_thread_count_leaves_artifacts_unchanged(tmp_path, command):
    _, one = run_cli(tmp_path / "one", command, *SMALL[command])
    _, four = run_cli(tmp_path / "four", command, *SMALL[command], "--threads", "4")
    assert artifacts(one) == artifacts(four)


@pytest.mark.parametrize("command", sorted(SMALL))
def test_csv_headers_match_schema(tmp_path, command, capsys):
    code, out = run_cli(tmp_path, command, *SMALL[command])
    assert code == 0
    line = capsys.readouterr().out.strip()
    assert line.startswith(command + ":")
    schema = load_schema()
    tables = schema["tables"][command]
    files = sorted(p for p in out.iterdir() if p.suffix == ".csv")
    assert len(files) == len(tables)
    for path in files:
        stem = path.stem.split("-")
        suffix = stem[-1] if not stem[-1].isdigit() else ""
        with open(path) as f:
            rows = list(csv.reader(f))
        assert rows[0] == schema["prefix"] + tables[suffix]
        for row in rows[1:]:
            assert row[1] == __version__
            assert len(row[0]) == 12
    meta = json.loads(next(p for p in out.iterdir() if p.suffix == ".json").read_text())
    assert meta["seed"] == 7 and meta["version"] == __version__
    assert meta["config_hash"] == config_hash(command, {**meta["config"], "out": "x",
                                                        "threads": 9})


def test_artifact_names_embed_hash_and_seed(tmp_path):
    code, out = run_cli(tmp_path, "complete", *SMALL["complete"], seed="3")
    meta = json.loads(next(out.glob("*.json")).read_text())
    h = meta["config_hash"]
    assert {p.name for p in out.iterdir()} == {
        f"complete-{h}-3.csv", f"complete-{h}-3-hist.csv", f"complete-{h}-3.json",
        f"complete-{h}-3-matrix.txt"}
    A_hat = read_matrix(out / f"complete-{h}-3-matrix.txt")
    assert A_hat.shape == (20, 16)
    assert meta["results"]["exact_trials"] == 2


def test_det_verify_exit_zero_without_violations(tmp_path):
    code, out = run_cli(tmp_path, "det-verify", "--n", "50", "--trials", "2")
    assert code == 0
    meta = json.loads(next(out.glob("*.json")).read_text())
    assert meta["results"]["violations"] == 0
    assert meta["results"]["assumptions_hold"] > 0


def test_det_verify_exit_two_on_injected_bug(tmp_path, monkeypatch):
    original = bounds.CoordinateContext.evaluate

    def broken(self, l):
        rep = original(self, l)
        return dataclasses.replace(rep, lhs=rep.bound + 1.0)

    monkeypatch.setattr(bounds.CoordinateContext, "evaluate", broken)
    code, out = run_cli(tmp_path, "det-verify", "--n", "50", "--trials", "1")
    assert code == 2
    meta = json.loads(next(out.glob("*.json")).read_text())
    assert meta["hard_violation"] is True


def test_usage_errors_exit_one(tmp_path, capsys):
    assert main(["run", "perturb-verify", "--bogus", "1"]) == 1
    assert main(["run", "no-such-command"]) == 1
    assert main(["run", "perturb-verify", "--trials", "0"]) == 1
    assert main(["run", "perturb-verify", "--const", "nope=1"]) == 1
    assert main(["run", "cluster-partition", "--holdout", "maybe",
                 "--out", str(tmp_path)]) == 1
    assert "error:" in capsys.readouterr().err


def test_config_file_merge_and_rejection(tmp_path):
    cfg = tmp_path / "exp.ini"
    cfg.write_text("[run]\nseed = 5\ntrials = 2\n\n[perturb-verify]\nn = 50\nk = 20\n\n"
                   "[constants]\nC_dk = 3.0\n")
    code, out = run_cli(tmp_path, "perturb-verify", "--config", str(cfg), "--n", "40",
                        seed="5")
    assert code == 0
    meta = json.loads(next(out.glob("*.json")).read_text())
    assert meta["config"]["n"] == 40  # flag wins
    assert meta["config"]["k"] == 20 and meta["config"]["trials"] == 2
    assert meta["config"]["constants"] == {"C_dk": 3.0}

    bad = tmp_path / "bad.ini"
    bad.write_text("[perturb-verify]\nmystery = 1\n")
    assert main(["run", "perturb-verify", "--config", str(bad)]) == 1
    bad.write_text("[elsewhere]\nn = 1\n")
    assert main(["run", "perturb-verify", "--config", str(bad)]) == 1
    assert main(["run", "perturb-verify", "--config", str(tmp_path / "missing.ini")]) == 1


def test_constant_override_changes_hash(tmp_path):
    a = tmp_path / "a"
    b = tmp_path / "b"
    main(["run", "bounds-report", *SMALL["bounds-report"], "--out", str(a)])
    main(["run", "bounds-report", *SMALL["bounds-report"], "--out", str(b),
          "--const", "C_dk=5"])
    assert {p.name for p in a.iterdir()}.isdisjoint({p.name for p in b.iterdir()})


def test_complete_from_matrix_file_and_json(tmp_path):
    A = np.kron([[2.0, 3.0], [3.0, 2.0]], np.ones((5, 4)))
    mpath = tmp_path / "A.txt"
    write_matrix(mpath, A)
    jpath = tmp_path / "c.json"
    jpath.write_text(json.dumps({"p": 1.0, "B": 0, "r": 2, "threshold": 1.0}))
    out = tmp_path / "out"
    code = main(["run", "complete", "--matrix", str(mpath), "--completion-json",
                 str(jpath), "--trials", "1", "--out", str(out)])
    assert code == 0
    assert np.array_equal(read_matrix(next(out.glob("*-matrix.txt"))), A)
    jpath.write_text(json.dumps({"p": 1.0, "surprise": 2}))
    assert main(["run", "complete", "--matrix", str(mpath), "--completion-json",
                 str(jpath), "--trials", "1", "--out", str(out)]) == 1


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "linfperturb", "--version"],
                         capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.strip() == __version__
