import pytest
from click.testing import CliRunner

from opcalc.cli import main


@pytest.fixture
def runner():
    return CliRunner()


def invoke(runner, *args, input=None):
    return runner.invoke(main, list(args), input=input)


def test_run_with_golden(runner):
    r = invoke(runner, "run", "so4.deriv", "--golden", "so4.golden")
    assert r.exit_code == 0, r.output
    lines = r.stdout.splitlines()
    assert len(lines) == 141
    assert all(line.startswith("PASS (") for line in lines)
    assert "141/141 golden entries passed" in r.stderr


def test_run_missing_file(runner):
    r = invoke(runner, "run", "missing.deriv")
    assert r.exit_code == 2
    assert "missing.deriv" in r.stderr


def test_run_latex_emit(runner, tmp_path):
    out = tmp_path / "out.tex"
    r = invoke(runner, "run", "so4.deriv", "--format", "latex", "--emit", str(out))
    assert r.exit_code == 0, r.output
    tex = out.read_text()
    assert tex.count("\\begin{equation}") > 100
    assert "\\tag{141}" in tex


def test_run_local_script_prints_state(runner, tmp_path):
    script = tmp_path / "tiny.deriv"
    script.write_text("(1) eval A = B\n(2) swap (1)\n")
    r = invoke(runner, "run", str(script))
    assert r.exit_code == 0
    assert r.stdout == "(1) A = B\n(2) B = A\n"


def test_run_engine_error_exit_one(runner, tmp_path):
    script = tmp_path / "bad.deriv"
    script.write_text("(1) eval (999)\n")
    r = invoke(runner, "run", str(script))
    assert r.exit_code == 1
    assert "(999)" in r.stderr


def test_run_golden_failure_exit_one(runner, tmp_path):
    script = tmp_path / "t.deriv"
    script.write_text("(1) eval A = B\n")
    gold = tmp_path / "t.golden"
    gold.write_text("(1) | 1 | A = C | structural\n")
    r = invoke(runner, "run", str(script))
    assert r.exit_code == 1
    assert r.stdout.startswith("FAIL (1)")


def test_malformed_golden_is_usage_error(runner, tmp_path):
    gold = tmp_path / "bad.golden"
    gold.write_text("(1) | 1\n")
    script = tmp_path / "t.deriv"
    script.write_text("(1) eval A = B\n")
    r = invoke(runner, "run", str(script), "--golden", str(gold))
    assert r.exit_code == 2


def test_eval_rule_lookup(runner):
    r = invoke(runner, "eval", "Commutator(L[j],L[k])", "--ctx", "so4.setup")
    assert r.exit_code == 0, r.output
    assert r.stdout.strip() == "i*hbar*eps[j,k,n]*L[n]"


def test_eval_zero(runner):
    r = invoke(runner, "eval", "0")
    assert r.stdout.strip() == "0"


def test_eval_antisymmetry_kill(runner):
    r = invoke(runner, "eval", "Simplify(eps[m,n,q]*X[m]*X[n])")
    assert r.exit_code == 0, r.output
    assert r.stdout.strip() == "0"


def test_eval_latex(runner):
    r = invoke(runner, "eval", "%Commutator(p[q], V)", "--format", "latex")
    assert r.exit_code == 0
    assert "]_{-}" in r.stdout


def test_eval_parse_error_exit_one(runner):
    r = invoke(runner, "eval", "X[a")
    assert r.exit_code == 1


def test_bad_format_is_usage_error(runner):
    r = invoke(runner, "eval", "0", "--format", "html")
    assert r.exit_code == 2


def test_verify_selected_labels(runner):
    r = invoke(runner, "verify", "so4.deriv", "29", "(61)", "135")
    assert r.exit_code == 0, r.output
    assert [line.split()[1] for line in r.stdout.splitlines()] == ["(29)", "(61)", "(135)"]


def test_verify_unknown_label(runner):
    r = invoke(runner, "verify", "so4.deriv", "999")
    assert r.exit_code == 2


def test_run_is_deterministic(runner):
    first = invoke(runner, "run", "so4.deriv")
    second = invoke(runner, "run", "so4.deriv")
    assert first.exit_code == second.exit_code == 0
    assert first.stdout == second.stdout


def test_budget_override(runner):
    r = invoke(runner, "eval", "L[a]*p[b]*X[c]*L[d]", "--ctx", "so4.setup", "--budget", "2")
    assert r.exit_code == 1
    assert "budget" in r.stderr


REPL_SESSION = """\
rule %Commutator(p[q], V) = i*hbar*V^3*X[q]
rule %Commutator(L[q], V) = 0
definition H = p[l]^2/(2*m_e) - kappa*V
definition L[q] = eps[m,n,q]*X[m]*p[n]
Commutator((1),(2))
Simplify(%)
:labels
this is not an expression (
:quit
"""


def test_repl_session(runner, tmp_path):
    hist = tmp_path / "session.deriv"
    r = invoke(runner, "repl", "--ctx", "so4.setup", "--history", str(hist), input=REPL_SESSION)
    assert r.exit_code == 0, r.output
    lines = r.stdout.splitlines()
    assert "(3) %Commutator(H, L[q]) = 0" in lines
    assert "(4) %Commutator(H, L[q]) = 0" in lines
    assert "(1) (2) (3) (4)" in lines
    assert any(x.startswith("error:") for x in lines)


def test_repl_history_replays(runner, tmp_path):
    hist = tmp_path / "session.deriv"
    live = invoke(runner, "repl", "--ctx", "so4.setup", "--history", str(hist), input=REPL_SESSION)
    replay = invoke(runner, "run", str(hist))
    assert replay.exit_code == 0, replay.output
    shown = [x for x in live.stdout.splitlines() if x[:1] == "(" and ") " in x and not x.startswith("(1) (2)")]
    assert replay.stdout.splitlines() == shown


def test_repl_unknown_command(runner):
    r = invoke(runner, "repl", input=":frob\n:quit\n")
    assert r.exit_code == 0
    assert "error:" in r.stdout

