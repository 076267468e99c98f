import json
import subprocess
import sys

import pytest

from redthreads.cli import build_parser, main
from redthreads.harness import strip_timing


def test_spmv_json_report(tmp_path):
    out = tmp_path / "r.json"
    rc = main(["--kernel", "spmv", "--strength", "detect", "--rate", "1", "--runs", "100",
               "--seed", "7", "--size", "64", "--out", str(out), "--quiet"])
    assert rc == 0
    doc = json.loads(out.read_text())
    assert doc["kernel"] == "spmv" and doc["strength"] == "detect" and doc["n_runs"] == 100
    assert len(doc["runs"]) == 100 and 0.0 <= doc["aggregates"]["failure_rate"] <= 1.0


def test_same_seed_same_report(tmp_path):
    docs = []
    for name in ("a.json", "b.json"):
        p = tmp_path / name
        main(["--kernel", "cg", "--strength", "correct", "--rate", "2", "--runs", "10",
              "--seed", "3", "--size", "48", "--out", str(p), "--quiet"])
        docs.append(strip_timing(json.loads(p.read_text())))
    assert docs[0] == docs[1]


def test_lazy_cluster_islands(tmp_path, caplog):
    out = tmp_path / "c.json"
    rc = main(["--kernel", "dgemm", "--lazy", "--cluster", "--islands", "4", "--runs", "3",
               "--size", "6", "--out", str(out)])
    assert rc == 0
    doc = json.loads(out.read_text())
    assert doc["flags"]["lazy"] and doc["flags"]["cluster"] and doc["flags"]["island_size"] == 4


def test_sweep_reports_rating(capsys):
    rc = main(["--kernel", "spmv", "--strength", "off", "--rate", "0.5", "4", "32", "--runs", "20",
               "--size", "16", "--quiet"])
    assert rc == 0
    doc = json.loads(capsys.readouterr().out)
    assert [c["rate"] for c in doc["sweep"]] == [0.5, 4.0, 32.0]
    assert len(doc["campaigns"]) == 3
    assert doc["robustness_rating"] == "Unbounded" or doc["robustness_rating"] > 0


def test_csv(capsys):
    assert main(["--kernel", "spmv", "--runs", "2", "--size", "8", "--format", "csv",
                 "--quiet"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 2 and lines[0].startswith("kernel,")


@pytest.mark.parametrize("argv", [
    ["--kernel", "fft"],
    [],
    ["--kernel", "spmv", "--rate", "-1"],
    ["--kernel", "spmv", "--runs", "0"],
    ["--kernel", "dgemm", "--matrix", "m.mtx"],
    ["--kernel", "dgemm", "--islands", "2"],
    ["--kernel", "dgemm", "--threshold", "1.5"],
])
def test_usage_errors(argv):
    with pytest.raises(SystemExit) as exc:
        main(argv)
    assert exc.value.code != 0


def test_missing_matrix_file(tmp_path):
    assert main(["--kernel", "spmv", "--matrix", str(tmp_path / "none.mtx"), "--runs", "1",
                 "--quiet"]) == 1


def test_flags_listed():
    opts = {a for act in build_parser()._actions for a in act.option_strings}
    for flag in ("--kernel", "--size", "--strength", "--dynamic", "--lazy", "--cluster",
                 "--islands", "--rate", "--kind", "--runs", "--seed", "--out", "--format",
                 "--matrix"):
        assert flag in opts


def test_console_entry_point():
    out = subprocess.run([sys.executable, "-m", "redthreads.cli", "--kernel", "nope"],
                         capture_output=True, text=True)
    assert out.returncode == 2 and "invalid choice" in out.stderr
