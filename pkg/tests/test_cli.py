import csv
import json
import subprocess
import sys

import pytest

from qfatou.cli import EXIT_CONFIG, EXIT_FAIL, EXIT_PASS, main

SMALL = ["--kind", "fatou-carleson", "--scene", "hyperplane", "--depth", "4", "5", "--eps", "0.1", "0.2",
         "--walks", "1024", "--eta", "0.0625", "--kk", "16", "--param", "n_functions=2"]


def _files(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


def test_report_files_and_rows(tmp_path):
    assert main(SMALL + ["--out", str(tmp_path)]) == EXIT_PASS
    names = set(_files(tmp_path))
    assert {"summary.json", "carleson.csv", "carleson_long.csv"} <= names
    with open(tmp_path / "carleson.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 2 * 2
    assert {(r["depth"], r["eps"]) for r in rows} == {(d, e) for d in ("4", "5") for e in ("0.1", "0.2")}
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["provenance"]["seed"] == 0 and summary["provenance"]["walks"] == 1024


def test_reruns_are_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    main(SMALL + ["--out", str(a)])
    main(SMALL + ["--out", str(b)])
    assert _files(a) == _files(b)


@pytest.mark.parametrize("extra", [["--tau", "0.9"], ["--eta", "0.5", "--kk", "16"], ["--walks", "1000"],
                                   ["--depth", "40"], ["--scene", "nowhere"], ["--param", "oops"]])
def test_invalid_config_exits_two(tmp_path, extra, capsys):
    assert main(SMALL + extra + ["--out", str(tmp_path)]) == EXIT_CONFIG
    err = capsys.readouterr().err
    assert err.startswith("config error:")


def test_config_file_overrides_flags(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"depth": [4], "eps": 0.1, "kk": 16}))
    out = tmp_path / "out"
    assert main(SMALL + ["--config", str(cfg), "--out", str(out)]) == EXIT_PASS
    s = json.loads((out / "summary.json").read_text())
    assert s["config"]["depth"] == [4] and s["config"]["K"] == 16


def test_unknown_config_field(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"colour": "red"}))
    assert main(SMALL + ["--config", str(cfg), "--out", str(tmp_path)]) == EXIT_CONFIG


def test_failing_verdict_exits_one(tmp_path):
    # Cantor packing grows like the depth, so depth 2 to 3 is short of the factor 2
    code = main(["--kind", "corona-dichotomy", "--scene", "cantor", "--depth", "2", "3", "--eta", "0.0625",
                 "--kk", "16", "--out", str(tmp_path)])
    assert code == EXIT_FAIL
    assert json.loads((tmp_path / "summary.json").read_text())["verdicts"] == {"A6": False}


def test_console_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "qfatou.cli", "--kind", "fatou-carleson", "--tau", "0.9",
                        "--out", str(tmp_path)], capture_output=True, text=True)
    assert r.returncode == EXIT_CONFIG
