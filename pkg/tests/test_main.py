from pathlib import Path

import main

ROOT = Path(__file__).parent.parent


def test_run_prints_the_record_stream(capsys):
    status = main.run(str(ROOT / "scripts" / "xi.ds"), seed=0)
    assert status == 0
    assert capsys.readouterr().out == (ROOT / "tests" / "golden" / "xi.jsonl").read_text()


def test_run_writes_json_file(tmp_path, capsys):
    target = tmp_path / "out.jsonl"
    status = main.run(str(ROOT / "scripts" / "union.ds"), seed=0, json_path=str(target))
    assert status == 0
    assert capsys.readouterr().out == ""
    assert target.read_text() == (ROOT / "tests" / "golden" / "union.jsonl").read_text()


def test_run_exit_status_on_errors(tmp_path, capsys):
    script = tmp_path / "bad.ds"
    script.write_text("xi at 0;\n")
    assert main.run(str(script), seed=0) == 1
    assert '"kind":"DivergentAtZero"' in capsys.readouterr().out


def test_check(tmp_path, capsys):
    script = tmp_path / "ok.ds"
    script.write_text("space M = R^2;   fn f = pi(1)+1;")
    assert main.check(str(script), pretty=True) == 0
    assert capsys.readouterr().out == "space M = R^2;\nfn f = (pi(1) + 1.0);\n"
    broken = tmp_path / "broken.ds"
    broken.write_text("space M = R^2;\nfn = ;")
    assert main.check(str(broken)) == 1
    assert f"{broken}:2:4:" in capsys.readouterr().err
