import json
import math
import subprocess
import sys

import pytest

from nestlab import __version__
from nestlab.cli import config_hash, load_config, main
from nestlab.errors import ConfigError


def run(tmp_path, *argv, name="out.txt"):
    out = tmp_path / name
    code = main([*argv, "--out", str(out)])
    return code, out.read_text() if out.exists() else ""


def records(text):
    return [json.loads(line) for line in text.splitlines()]


def test_classify_chebyshev(tmp_path):
    code, text = run(tmp_path, "classify", "--tau", "2.0")
    assert code == 0
    (rec,) = records(text)
    assert abs(rec["ce_exponent"] - math.log(4)) < 1e-3
    assert rec["config_hash"] and rec["version"] == __version__


def test_survey_byte_identical(tmp_path):
    argv = ["survey", "--tau-range", "1.5:2.0", "--n", "100", "--seed", "7",
            "--iterations", "5000", "--no-nest"]
    c1, a = run(tmp_path, *argv, name="a.jsonl")
    c2, b = run(tmp_path, *argv, name="b.jsonl")
    assert c1 == c2 == 0 and a == b
    recs = records(a)
    assert len(recs) == 100 and len({r["config_hash"] for r in recs}) == 1
    c3, c = run(tmp_path, *argv, "--jobs", "2", name="c.jsonl")
    assert c == a
    _, d = run(tmp_path, *argv[:-3], "--seed", "8", "--iterations", "5000", "--no-nest",
               name="d.jsonl")
    assert d != a


def test_modulus_calibration(tmp_path):
    code, text = run(tmp_path, "modulus", "--annulus", "1:2.718281828", "--grid", "512")
    assert code == 0
    (rec,) = records(text)
    assert abs(rec["value"] - 1.0) < 0.05


def test_every_command_tags_records(tmp_path):
    cases = [
        ["nest", "--tau", "1.9", "--max-depth", "4"],
        ["windows", "--tau", "1.9", "--levels", "2"],
        ["capacity", "--tau", "1.9", "--max-depth", "5"],
        ["mandel", "--box=-1.25:-0.75:-0.01:0.01", "--n", "50", "--seed", "1", "--budget", "500"],
    ]
    for argv in cases:
        code, text = run(tmp_path, *argv)
        assert code == 0, text
        recs = records(text)
        assert recs and all("config_hash" in r and r["version"] == __version__ for r in recs)


def test_csv_output_tagged(tmp_path):
    code, text = run(tmp_path, "mandel", "--box=-1.25:-0.75:-0.01:0.01", "--n", "50",
                     "--seed", "1", "--budget", "500", "--format", "csv")
    assert code == 0
    head, *rows = text.strip().splitlines()
    assert head.endswith("config_hash,version") and rows
    assert all(r.endswith(__version__) for r in rows)


def test_computational_error_exit_one(tmp_path):
    code, text = run(tmp_path, "nest", "--tau", "2.0")
    assert code == 1
    (rec,) = records(text)
    assert rec["error"] == "PeriodicCritical" and rec["command"] == "nest"
    assert "config_hash" in rec


def test_usage_errors_exit_two(tmp_path, capsys):
    assert main(["survey", "--tau-range", "1.5:2", "--n", "10"]) == 2
    assert main(["classify"]) == 2
    assert main(["mandel", "--seed", "1", "--n", "0"]) == 2
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("tau=1.9\nbogus=3\n")
    assert main(["classify", "--config", str(cfg)]) == 2
    cfg.write_text("not a pair\n")
    assert main(["classify", "--config", str(cfg)]) == 2


def test_config_file_and_override(tmp_path):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text("# experiment\ntau = 1.9\nn = 2000\nno_nest = true\n")
    assert load_config(cfg) == {"tau": "1.9", "n": "2000", "no_nest": "true"}
    c1, a = run(tmp_path, "classify", "--config", str(cfg), name="a")
    c2, b = run(tmp_path, "classify", "--tau", "1.9", "--n", "2000", "--no-nest", name="b")
    assert c1 == c2 == 0
    assert a == b
    c3, c = run(tmp_path, "classify", "--config", str(cfg), "--n", "3000", name="c")
    assert records(c)[0]["N"] == 3000
    assert records(c)[0]["config_hash"] != records(a)[0]["config_hash"]
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.cfg")


def test_config_hash_ignores_output_path():
    base = {"command": "classify", "tau": "1.9", "n": 100, "out": "a", "jobs": 1}
    assert config_hash(base) == config_hash({**base, "out": "b", "jobs": 4})
    assert config_hash(base) != config_hash({**base, "tau": "1.8"})


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "nestlab", "classify", "--tau", "1.2",
                          "--n", "2000"], capture_output=True, text=True)
    assert res.returncode == 0
    assert json.loads(res.stdout)["classification"] == "Regular"
