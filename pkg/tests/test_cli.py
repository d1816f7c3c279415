import io
import subprocess
import sys

import pytest

from chrv.cli import main
from chrv.tracer import Port, read_trace

from conftest import DATA, LEQ_GOAL, PROGRAMS


def chrv(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = main(list(argv), out, err)
    return code, out.getvalue(), err.getvalue()


@pytest.fixture
def leq_trace(tmp_path):
    path = tmp_path / "leq.trace"
    code, _, _ = chrv("run", "-p", str(PROGRAMS / "leq.chr"), "-g", LEQ_GOAL,
                      "--trace", str(path))
    assert code == 0
    return path


def test_run_leq_prints_solution(leq_trace):
    code, out, _ = chrv("run", "-p", str(PROGRAMS / "leq.chr"), "-g", LEQ_GOAL)
    assert code == 0
    assert out == "Solution:\n     UDCS = []\n     BUILTS = [C=A,B=A]\n"
    assert len(read_trace(leq_trace.read_text())) == 38


def test_run_append_single_solution():
    code, out, _ = chrv("run", "-p", str(PROGRAMS / "append.chr"), "-g", "append([1],[2],Z)",
                        "--all")
    assert code == 0
    assert out.count("Solution:") == 1 and "Z=[1,2]" in out


def test_trace_to_stdout_sends_solutions_to_stderr():
    code, out, err = chrv("run", "-p", str(PROGRAMS / "append.chr"), "-g",
                          "append([1],[2],Z)", "--trace", "-")
    assert code == 0 and "Solution:" in err
    assert read_trace(out)[0].port is Port.ACTIVATE


def test_no_default_events(tmp_path):
    path = tmp_path / "t"
    chrv("run", "-p", str(PROGRAMS / "leq.chr"), "-g", LEQ_GOAL, "--no-default-events",
         "--trace", str(path))
    events = read_trace(path.read_text())
    assert len(events) == 17 and all(e.port is not Port.DEFAULT for e in events)


def test_broken_program_exits_1(tmp_path):
    bad = tmp_path / "bad.chr"
    bad.write_text("r @ p(X) <=> \n")
    out_path = tmp_path / "t"
    code, _, err = chrv("run", "-p", str(bad), "-g", "p(1)", "--trace", str(out_path))
    assert code == 1 and "line" in err
    assert not out_path.exists()
    code, _, _ = chrv("run", "-p", str(tmp_path / "missing.chr"), "-g", "p")
    assert code == 1
    code, _, _ = chrv("run", "-p", str(PROGRAMS / "leq.chr"), "-g", "leq(A,")
    assert code == 1


def test_no_solution_exits_2():
    code, out, _ = chrv("run", "-p", str(PROGRAMS / "leq.chr"), "-g", "false")
    assert code == 2 and "No solution." in out


def test_budget_exhaustion_exits_3():
    code, _, err = chrv("run", "-p", str(PROGRAMS / "leq_compiled.chr"), "-g", LEQ_GOAL,
                        "--budget", "10")
    assert code == 3 and "budget" in err


def test_query_count_and_rows():
    golden = str(DATA / "leq_golden.trace")
    code, out, _ = chrv("query", "--trace", golden, "--query",
                        "SELECT * FROM trace WHERE type='ApplyRule'", "--count")
    assert (code, out) == (0, "3\n")
    code, out, _ = chrv("query", "--trace", golden, "--query", "SELECT * FROM trace")
    assert code == 0 and len(out.splitlines()) == 17


def test_malformed_query_exits_1():
    code, _, err = chrv("query", "--trace", str(DATA / "leq_golden.trace"), "--query",
                        "SELECT * FROM trace WHERE")
    assert code == 1 and "query" in err


def test_malformed_trace_exits_1(tmp_path):
    bad = tmp_path / "bad.trace"
    bad.write_text("[0,ActivateRDC,[leq,A,B,1],2]\n[2,Drop,[leq,A,B,1],2]\n")
    code, _, err = chrv("query", "--trace", str(bad), "--query", "SELECT * FROM trace")
    assert code == 1 and "line 2" in err


def test_check_ok():
    for name, goal in [("leq", LEQ_GOAL), ("append", "append([1],[2],Z)")]:
        code, out, _ = chrv("check", "-p", str(PROGRAMS / f"{name}.chr"), "-g", goal)
        assert code == 0 and out.startswith("ok: faithful")


def test_check_corrupted_trace_exits_4(leq_trace, tmp_path):
    lines = leq_trace.read_text().splitlines()
    k = next(i for i, l in enumerate(lines) if ",TryRule," in l)
    lines[k] = lines[k].replace("transitivity@", "antisymmetry@")
    forged = tmp_path / "forged.trace"
    forged.write_text("\n".join(lines) + "\n")
    code, out, _ = chrv("check", "-p", str(PROGRAMS / "leq.chr"), "-g", LEQ_GOAL,
                        "--trace", str(forged))
    assert code == 4 and f"divergence at chrono {k}" in out
    code, _, _ = chrv("check", "-p", str(PROGRAMS / "leq.chr"), "-g", LEQ_GOAL,
                      "--trace", str(leq_trace))
    assert code == 0


def test_pretty(tmp_path):
    golden = DATA / "leq_golden.trace"
    code, out, _ = chrv("pretty", "--trace", str(golden))
    assert code == 0 and len(out.splitlines()) == 17
    assert out.splitlines()[3] == golden.read_text().splitlines()[3]
    empty = tmp_path / "empty.trace"
    empty.write_text("")
    assert chrv("pretty", "--trace", str(empty)) == (0, "", "")


def test_pretty_with_query_on_append(tmp_path):
    path = tmp_path / "a.trace"
    chrv("run", "-p", str(PROGRAMS / "append.chr"), "-g", "append([1],[2],Z)", "--all",
         "--trace", str(path))
    code, out, _ = chrv("pretty", "--trace", str(path), "--query", "type='Fail'")
    assert code == 0
    assert len(out.splitlines()) == 2 and all(",Fail," in l for l in out.splitlines())
    code, out2, _ = chrv("pretty", "--trace", str(path), "--query",
                         "SELECT * FROM trace WHERE type='Fail'")
    assert out2 == out


def test_compile_dump():
    code, out, _ = chrv("compile", "-p", str(PROGRAMS / "leq_compiled.chr"))
    assert code == 0 and len(out.splitlines()) == 6
    assert out.startswith("rule(leq,1,transitivity,[X,Y],")


def test_pipeline_closure(tmp_path):
    path = tmp_path / "c.trace"
    chrv("run", "-p", str(PROGRAMS / "coloring.chr"), "-g",
         "edges, l([r1,r7,r4,r3,r2,r5,r6],[C1,C7,C4,C3,C2,C5,C6])", "--trace", str(path))
    code, out, _ = chrv("query", "--trace", str(path), "--query", "SELECT * FROM trace")
    assert code == 0 and out == path.read_text()


def test_console_script_entry_point():
    r = subprocess.run([sys.executable, "-m", "chrv.cli", "compile", "-p",
                        str(PROGRAMS / "leq.chr")], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.count("rule(leq,") == 7
