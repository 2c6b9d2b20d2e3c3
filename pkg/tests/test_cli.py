import csv
import json
from pathlib import Path

import pytest

from strichartz_lab.cli import EXIT_CONFIG, EXIT_INVARIANT, EXIT_IO, EXIT_OK, main
from strichartz_lab.experiments import read_records

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def _write(tmp_path, name, cfg):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_propagate(tmp_path):
    # small lambda needs a finer time grid to pass the refinement certificate
    cfg = dict(json.loads((CONFIGS / "propagate.json").read_text()), **{"lambda": 16, "nx": None, "oversample": 8})
    cfg["ensemble"]["count"] = 2
    out = tmp_path / "p.csv"
    assert main(["propagate", "--config", _write(tmp_path, "p.json", cfg), "--out", str(out)]) == EXIT_OK
    rows = _rows(out)
    assert len(rows) == 2
    assert all(float(r["direct_error"]) <= 1e-10 and float(r["audit_error"]) <= 1e-10 for r in rows)


def test_kernel(tmp_path):
    out = tmp_path / "k.csv"
    assert main(["kernel", "--config", str(CONFIGS / "kernel.json"), "--out", str(out), "--seed", "3"]) == EXIT_OK
    rows = _rows(out)
    assert len(rows) == 10
    assert all(float(r["poisson_rel_error"]) <= 1e-6 for r in rows)
    cfg = dict(json.loads((CONFIGS / "kernel.json").read_text()), cutoff={"level": 1, "index": [9]})
    assert main(["kernel", "--config", _write(tmp_path, "k.json", cfg), "--out", str(out)]) == EXIT_CONFIG


def test_decompose(tmp_path):
    cfg = dict(json.loads((CONFIGS / "decompose.json").read_text()), **{"lambda": 16})
    out = tmp_path / "d.jsonl"
    assert main(["decompose", "--config", _write(tmp_path, "d.json", cfg), "--out", str(out),
                 "--format", "jsonl"]) == EXIT_OK
    rows = [json.loads(line) for line in out.read_text().splitlines()]
    assert len(rows) == 2
    assert all(r["certificate_violations"] == 0 and r["domination_violations"] == 0 for r in rows)
    bad = dict(cfg, level=4)
    assert main(["decompose", "--config", _write(tmp_path, "b.json", bad), "--out", str(out)]) == EXIT_CONFIG


def test_sweep_and_flags_in_either_position(tmp_path):
    cfg = dict(json.loads((CONFIGS / "sweep.json").read_text()), lambdas=[16, 32], max_refinements=3)
    cfg["ensembles"][1]["count"] = 1
    path = _write(tmp_path, "s.json", cfg)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["--seed", "7", "--config", path, "sweep", "--out", str(a)]) == EXIT_OK
    assert main(["sweep", "--config", path, "--seed", "7", "--out", str(b)]) == EXIT_OK
    assert a.read_bytes() == b.read_bytes()
    recs = read_records(a)
    assert [r.lam for r in recs] == [16, 16, 32, 32]
    j = tmp_path / "c.jsonl"
    assert main(["sweep", "--config", path, "--seed", "7", "--out", str(j), "--format", "jsonl"]) == EXIT_OK
    assert read_records(j) == recs


def test_audit(tmp_path):
    cfg = dict(json.loads((CONFIGS / "audit.json").read_text()), **{"lambda": 16})
    out = tmp_path / "a.csv"
    args = ["audit", "--config", _write(tmp_path, "a.json", cfg), "--out", str(out), "--oversample", "8"]
    assert main(args) == EXIT_OK
    rows = _rows(out)
    assert [int(r["level"]) for r in rows] == [3, 2, 1]


def test_verify(tmp_path, capsys):
    assert main(["verify", "--config", str(CONFIGS / "verify.json")]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines and all(line.startswith("PASS") for line in lines)


def test_config_errors(tmp_path):
    missing = str(tmp_path / "none.json")
    assert main(["propagate", "--config", missing]) == EXIT_CONFIG
    broken = tmp_path / "broken.json"
    broken.write_text("{")
    assert main(["propagate", "--config", str(broken)]) == EXIT_CONFIG
    assert main(["propagate", "--config", _write(tmp_path, "l.json", [1])]) == EXIT_CONFIG
    assert main(["propagate", "--config", _write(tmp_path, "n.json", {"delta": 0.5})]) == EXIT_CONFIG
    assert main(["propagate", "--config", _write(tmp_path, "x.json", {"lambda": 12, "delta": 0.5})]) == EXIT_CONFIG
    assert main(["sweep", "--config", _write(tmp_path, "u.json", {"lambdas": [8], "bogus": 1})]) == EXIT_CONFIG
    assert main(["verify", "--threads", "0"]) == EXIT_CONFIG
    assert main(["verify", "--seed", "-1"]) == EXIT_CONFIG


def test_unwritable_output(tmp_path):
    out = str(tmp_path / "missing" / "out.csv")
    assert main(["verify", "--out", out]) == EXIT_IO


def test_invariant_exit(tmp_path):
    # too coarse a time grid for random data at small lambda fails the certificate
    cfg = {"lambdas": [8], "delta_rule": {"kind": "fixed", "delta": 0.5},
           "ensembles": [{"kind": "random-gaussian", "count": 1}]}
    assert main(["sweep", "--config", _write(tmp_path, "s.json", cfg), "--out", str(tmp_path / "o")]) == EXIT_INVARIANT


def test_usage_errors():
    with pytest.raises(SystemExit) as exc:
        main(["nope"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit):
        main(["sweep", "--format", "xml"])
