import json
import subprocess
import sys

import pytest

from neurocomp import corpus
from neurocomp.cli import main


@pytest.fixture
def src(tmp_path):
    def write(name, text):
        p = tmp_path / name
        p.write_text(text)
        return str(p)
    return write


def _json(capsys):
    return json.loads(capsys.readouterr().out)


def test_compile_run_decompile(tmp_path, src, capsys):
    fib = src("fib_tape.asm", corpus.source("fib_tape"))
    out = tmp_path / "fib.pm"
    assert main(["compile", fib, "-o", str(out), "--lenient"]) == 0
    info = _json(capsys)
    assert info["lines"] == 9 and out.exists() and out.with_suffix(".json").exists()

    assert main(["run", str(out), "--reg", "3=2", "--reg", "5=6"]) == 0
    rep = _json(capsys)
    assert rep["status"] == "halted" and rep["memory"][2:8] == [1, 1, 2, 3, 5, 8]

    assert main(["run", str(out), "--reg", "3=2", "--reg", "5=6", "--oracle"]) == 0
    assert _json(capsys)["memory"][2:8] == [1, 1, 2, 3, 5, 8]

    assert main(["decompile", str(out)]) == 0
    text = capsys.readouterr().out
    assert "jump 4 fib_loop" in text


def test_recompile_is_byte_identical(tmp_path, src, capsys):
    fib = src("fib.asm", corpus.source("fib"))
    a, b = tmp_path / "a.pm", tmp_path / "b.pm"
    main(["compile", fib, "-o", str(a)])
    main(["compile", fib, "-o", str(b)])
    capsys.readouterr()
    assert a.read_bytes() == b.read_bytes()


def test_named_sources_and_entry_points(tmp_path, src, capsys):
    m = src("m.asm", corpus.source("call_main"))
    d = src("d.asm", corpus.source("call_double"))
    out = tmp_path / "call.pm"
    assert main(["compile", f"main={m}", f"double={d}", "-o", str(out)]) == 0
    capsys.readouterr()
    assert main(["run", str(out), "--entry", "main", "--reg", "2=3", "--reg", "3=4"]) == 0
    assert _json(capsys)["memory"][0] == 14
    assert main(["run", str(out), "--entry", "nope"]) == 2


def test_timeout_exit_code(tmp_path, src, capsys):
    loop = src("loop.asm", "jump 0 0\n")
    out = tmp_path / "loop.pm"
    main(["compile", loop, "-o", str(out)])
    capsys.readouterr()
    assert main(["run", str(out), "--steps", "4"]) == 3
    assert _json(capsys)["status"] == "timeout"


@pytest.mark.parametrize("argv_tail,needle", [
    (["compile", "{bad}"], "unknown-opcode"),
    (["compile", "/no/such/file.asm"], "no such source"),
    (["run", "/no/such.pm"], "no such program matrix"),
    (["experiment", "banana"], "valid experiments"),
    (["train", "sorting"], "unknown task kind"),
    (["experiment", "memorize", "--config", "{cfg}"], "unknown config keys"),
])
def test_input_errors_exit_2(argv_tail, needle, src, capsys):
    bad = src("bad.asm", "halt\nfrob 1 2\n")
    cfg = src("cfg.json", json.dumps({"colour": "red"}))
    argv = [a.format(bad=bad, cfg=cfg) for a in argv_tail]
    assert main(argv) == 2
    assert needle in capsys.readouterr().err


def test_bad_assignment(tmp_path, src, capsys):
    out = tmp_path / "h.pm"
    main(["compile", src("h.asm", "halt\n"), "-o", str(out)])
    assert main(["run", str(out), "--reg", "2:3"]) == 2
    assert main(["run", str(out), "--reg", "2=99"]) == 2


def test_experiment_writes_to_env_dir(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("NEUROCOMP_OUT", str(tmp_path))
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"epochs": 10, "check_every": 5}))
    assert main(["experiment", "memorize", "--seed", "1", "--config", str(cfg)]) == 0
    report = _json(capsys)
    assert report["summary"][0]["seed"] == 1
    assert (tmp_path / "memorize" / "summary.json").exists()


def test_train_fib_depth_step_budget(tmp_path, capsys):
    assert main(["train", "fib_depth(3)", "--steps", "5", "--out", str(tmp_path)]) == 2
    assert "interpreter steps" in capsys.readouterr().err


def test_console_entry_point_runs():
    done = subprocess.run([sys.executable, "-m", "neurocomp.cli", "--help"], capture_output=True, text=True)
    assert done.returncode == 0 and "compile" in done.stdout
