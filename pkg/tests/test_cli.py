import json
import shutil
import subprocess
import sys

import pytest

from hybridlens.cli import EXIT_APP_FAILED, EXIT_CONFIG, EXIT_OK, main

from .conftest import CORPUS, JS

CORPUS_APPS = sorted(str(p) for p in CORPUS.iterdir())


def test_no_inputs_prints_usage(capsys):
    assert main(["analyze", "--out", "x"]) == EXIT_CONFIG
    err = capsys.readouterr().err
    assert err.startswith("usage:")


def test_bad_arguments_exit_2(capsys):
    assert main(["analyze"]) == EXIT_CONFIG
    assert main(["nope"]) == EXIT_CONFIG
    assert main([]) == EXIT_CONFIG


def test_analyze_writes_n_plus_one_files(tmp_path, capsys):
    assert main(["analyze", *CORPUS_APPS, "--out", str(tmp_path)]) == EXIT_OK
    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == ["app_full.report.json", "app_js.report.json", "app_native.report.json",
                     "app_plain.report.json", "corpus.stats.json"]
    assert capsys.readouterr().out == ""


def test_csv_is_opt_in(tmp_path):
    assert main(["analyze", *CORPUS_APPS, "--out", str(tmp_path), "--csv"]) == EXIT_OK
    assert (tmp_path / "findings.csv").read_text().startswith("app_id,finding,class,method,index,subject,detail\n")


def test_one_unreadable_app_among_three(tmp_path, capsys):
    broken = tmp_path / "in" / "broken"
    broken.mkdir(parents=True)
    (broken / "A.smali").write_bytes(b"\xff not smali")
    out = tmp_path / "out"
    roots = [CORPUS_APPS[0], str(broken), CORPUS_APPS[1]]
    assert main(["analyze", *roots, "--out", str(out)]) == EXIT_APP_FAILED
    assert sorted(p.name for p in out.glob("*.report.json")) == ["app_full.report.json", "app_js.report.json"]
    stats = json.loads((out / "corpus.stats.json").read_text())
    assert stats["apps"] == 2
    assert "broken" in capsys.readouterr().err


def test_missing_root_is_app_failure(tmp_path):
    assert main(["analyze", CORPUS_APPS[0], str(tmp_path / "gone"), "--out", str(tmp_path / "o")]) == EXIT_APP_FAILED
    assert (tmp_path / "o" / "app_full.report.json").exists()


@pytest.mark.parametrize("extra", [["--jobs", "0"], ["--sources", "/no/such/file"], ["--sdk-db", "/no/such"]])
def test_config_errors(tmp_path, extra):
    assert main(["analyze", CORPUS_APPS[0], "--out", str(tmp_path), *extra]) == EXIT_CONFIG


def test_bad_source_list_is_config_error(tmp_path, capsys):
    bad = tmp_path / "src.txt"
    bad.write_text("La/B; m NotACategory\n")
    assert main(["analyze", CORPUS_APPS[0], "--out", str(tmp_path / "o"), "--sources", str(bad)]) == EXIT_CONFIG
    assert "unknown category" in capsys.readouterr().err


def test_duplicate_app_ids(tmp_path):
    twin = tmp_path / "app_full"
    shutil.copytree(CORPUS_APPS[0], twin)
    assert main(["analyze", CORPUS_APPS[0], str(twin), "--out", str(tmp_path / "o")]) == EXIT_CONFIG


def test_parallel_output_matches_serial(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["analyze", *CORPUS_APPS, "--out", str(a)]) == EXIT_OK
    assert main(["analyze", *CORPUS_APPS, "--out", str(b), "--jobs", "3"]) == EXIT_OK
    for f in a.iterdir():
        assert f.read_bytes() == (b / f.name).read_bytes()


def test_url_command(capsys):
    assert main(["url", "http://pinterac.net/dev/leapersheep/index.php?viewall=1"]) == EXIT_OK
    doc = json.loads(capsys.readouterr().out)
    assert doc["insecure_transport"] and doc["search"] == "viewall=1"


def test_js_command(capsys):
    assert main(["js", str(JS / "synchjs_writeback.js"), "--bridge", "SynchJS"]) == EXIT_OK
    doc = json.loads(capsys.readouterr().out)
    assert [p["pattern"] for p in doc["patterns"]] == ["BRIDGE_WRITEBACK"]
    assert doc["patterns"][0]["confidence"] == "bridge"


def test_js_command_missing_file(tmp_path):
    assert main(["js", str(tmp_path / "none.js")]) == EXIT_CONFIG


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "hybridlens.cli", "url", "about:blank"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["scheme_class"] == "ABOUT_BLANK"
