import json
import shutil
import subprocess
import sys

import pytest

from latchconv.cli import main

from conftest import DATA


def _run(argv, capsys):
    try:
        code = main(argv)
    except SystemExit as e:  # argparse usage errors
        code = e.code
    out = capsys.readouterr()
    return code, out.out, out.err


def test_convert_s27_ms(tmp_path, capsys):
    out = tmp_path / "s27_ms.bench"
    code, text, _ = _run(["convert", "--in", str(DATA / "s27.bench"), "--scheme", "ms", "--out", str(out),
                          "--json", "--vectors", "500"], capsys)
    rep = json.loads(text)
    assert code == 0 and rep["passed"] and rep["schema"] == 1
    assert rep["table"]["M-S"] == 6 and out.read_text().count("LATCH_") == 6


def test_convert_report_keys(tmp_path, capsys):
    rep_path = tmp_path / "r.json"
    code, _, _ = _run(["convert", "--in", str(DATA / "diamond5.bench"), "--report", str(rep_path),
                       "--vectors", "500"], capsys)
    rep = json.loads(rep_path.read_text())
    assert code == 0
    assert {"checks", "ilp", "retiming", "runtime", "table", "latches"} <= set(rep)
    assert set(rep["runtime"]) == {"ILP", "Conv", "Total"}


def test_convert_dumps(tmp_path, capsys):
    sg, lp, tr = tmp_path / "g.json", tmp_path / "m.lp", tmp_path / "t.txt"
    code, _, _ = _run(["convert", "--in", str(DATA / "s27.bench"), "--dump-seqgraph", str(sg), "--lp", str(lp),
                       "--dump-trace", str(tr), "--vectors", "50"], capsys)
    assert code == 0
    assert json.loads(sg.read_text())["ffs"]
    assert lp.read_text().startswith("\\ phase assignment")
    assert len(tr.read_text().splitlines()) == 50


@pytest.mark.parametrize("argv", [
    ["convert", "--in", "/nonexistent.bench"],
    ["convert", "--in", str(DATA / "s27.bench"), "--rho", "0.3"],
    ["convert", "--in", str(DATA / "s27.bench"), "--vectors", "0"],
    ["convert", "--in", str(DATA / "s27.bench"), "--clk2q-min", "2", "--clk2q-max", "1"],
    ["bogus"],
    ["timing", "--in", str(DATA / "s27.bench")],
])
def test_usage_errors_exit_2(argv, capsys):
    assert _run(argv, capsys)[0] == 2


def test_rho_accepts_fraction(capsys):
    code, _, _ = _run(["convert", "--in", str(DATA / "s27.bench"), "--rho", "1/6", "--vectors", "100"], capsys)
    assert code == 0


def test_parse_error_exits_2(tmp_path, capsys):
    bad = tmp_path / "bad.bench"
    bad.write_text("INPUT(a)\nOUTPUT(y)\ny = AND(a, b)\n")
    code, _, err = _run(["convert", "--in", str(bad)], capsys)
    assert code == 2 and "3" in err


def test_table_is_deterministic(tmp_path, capsys):
    d = tmp_path / "benches"
    d.mkdir()
    for name in ("s27", "diamond5", "shift8"):
        shutil.copy(DATA / f"{name}.bench", d)
    (d / "broken.bench").write_text("garbage\n")
    csv1 = tmp_path / "a.csv"
    code, first, _ = _run(["table", str(d), "--csv", str(csv1)], capsys)
    _, second, _ = _run(["table", str(d)], capsys)
    assert code == 0 and first == second == csv1.read_text()
    lines = first.splitlines()
    assert lines[0] == "Design,FF,M-S,3-phase,Save (%) 2*FF,Save (%) M-S"
    assert [l.split(",")[0] for l in lines[1:]] == ["diamond5", "s27", "shift8", "Average"]
    assert lines[1] == "diamond5,5,10,8,20.0,20.0"


def test_table_empty_dir(tmp_path, capsys):
    code, text, _ = _run(["table", str(tmp_path)], capsys)
    assert code == 0 and text.splitlines() == ["Design,FF,M-S,3-phase,Save (%) 2*FF,Save (%) M-S"]


def test_gen_is_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a.bench", tmp_path / "b.bench"
    args = ["gen", "--stages", "3", "--width", "2", "--gates", "2", "--loops", "0.5", "--seed", "9"]
    assert _run(args + ["--out", str(a)], capsys)[0] == 0
    assert _run(args + ["--out", str(b)], capsys)[0] == 0
    assert a.read_text() == b.read_text()


def test_verify_and_timing(tmp_path, capsys):
    conv = tmp_path / "s27_3p.bench"
    _run(["convert", "--in", str(DATA / "s27.bench"), "--out", str(conv), "--vectors", "100"], capsys)
    code, text, _ = _run(["verify", str(DATA / "s27.bench"), str(conv), "--vectors", "1000"], capsys)
    assert code == 0 and "PASS" in text
    code, text, _ = _run(["timing", "--in", str(conv), "--tc", "8", "--min-cycle", "--json"], capsys)
    rep = json.loads(text)
    assert code == 0 and rep["feasible"]


def test_verify_detects_difference(tmp_path, capsys):
    other = tmp_path / "other.bench"
    other.write_text((DATA / "s27.bench").read_text().replace("G17 = NOT(G11)", "G17 = BUFF(G11)"))
    code, text, _ = _run(["verify", str(DATA / "s27.bench"), str(other), "--vectors", "200"], capsys)
    assert code == 1 and "FAIL" in text


def test_oracle(capsys):
    code, text, _ = _run(["oracle", "--in", str(DATA / "diamond5.bench")], capsys)
    assert code == 0 and "PASS" in text


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "latchconv.cli", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "convert" in r.stdout
