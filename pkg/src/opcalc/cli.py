"""Command-line front end: run scripts, evaluate expressions, verify labels, REPL.

Exit codes: 0 when everything passed, 1 for engine or verification
failures, 2 for usage and IO problems.
"""

from __future__ import annotations

import sys
import time
from pathlib import Path

import click

from . import context as C
from .deriv import (
    VERBS,
    DerivationState,
    DerivError,
    assert_golden,
    bundled_path,
    parse_args,
    parse_golden,
    parse_line,
    render_state,
    render_value,
    run_script,
    run_step,
)
from .expr import Commutator, Equation, ExprError, Tensor, render
from .simplify import simplify

FORMATS = click.Choice(["plain", "latex"])


class EngineFailure(click.ClickException):
    exit_code = 1


class InputFailure(click.FileError):
    exit_code = 2


def _source(path: str) -> tuple[str, Path | None]:
    """Text of ``path``; bare names of packaged data files resolve to the bundled copy."""
    p = Path(path)
    try:
        if p.is_file():
            return p.read_text(encoding="utf-8"), p
        if p.name == path:
            packaged = bundled_path(path)
            if packaged.is_file():
                return packaged.read_text(encoding="utf-8"), None
    except (OSError, UnicodeDecodeError) as err:
        raise InputFailure(path, str(err))
    raise InputFailure(path, "no such file")


def _adjacent_golden(script: str, found: Path | None) -> str | None:
    name = Path(script).with_suffix(".golden")
    if found is not None:
        return str(name) if name.is_file() else None
    return name.name if bundled_path(name.name).is_file() else None


def _load_state(ctx_path: str | None, budget: int | None) -> tuple[DerivationState, str]:
    state = DerivationState()
    text = ""
    if budget is not None:
        state.ctx = C.with_budget(state.ctx, budget)
    if ctx_path:
        text, _ = _source(ctx_path)
        try:
            run_script(text, state)
        except DerivError as err:
            raise EngineFailure(f"{ctx_path}: {err}")
    return state, text


def _run(script: str, budget: int | None, verbose: int) -> tuple[DerivationState, Path | None]:
    text, found = _source(script)
    state = DerivationState()
    if budget is not None:
        state.ctx = C.with_budget(state.ctx, budget)
    start = time.perf_counter()
    try:
        run_script(text, state)
    except DerivError as err:
        raise EngineFailure(f"{script} {err}")
    if verbose:
        click.echo(f"ran {len(state.labels)} labels in {time.perf_counter() - start:.2f}s", err=True)
    return state, found


def _golden_report(state, golden: str, labels=(), verbose: int = 0) -> bool:
    text, _ = _source(golden)
    try:
        expectations = parse_golden(text)
    except DerivError as err:
        raise click.UsageError(f"{golden}: {err}")
    if labels:
        wanted = {lab.strip("()") for lab in labels}
        expectations = [g for g in expectations if g.label in wanted]
        missing = wanted - {g.label for g in expectations}
        if missing:
            raise click.UsageError(f"no golden entry for {', '.join(sorted(missing, key=int))}")
    results = assert_golden(state, expectations)
    for r in results:
        click.echo(r.line())
        if verbose:
            click.echo(f"  {r.seconds:.3f}s", err=True)
    passed = sum(r.ok for r in results)
    click.echo(f"{passed}/{len(results)} golden entries passed", err=True)
    return passed == len(results)


@click.group()
def main():
    """Symbolic operator algebra: derivation scripts and golden checks."""


@main.command()
@click.argument("script")
@click.option("--golden", help="Golden expectation file (defaults to an adjacent .golden).")
@click.option("--format", "fmt", type=FORMATS, default="plain", show_default=True)
@click.option("--emit", type=click.Path(dir_okay=False), help="Write the rendered labels here.")
@click.option("--budget", type=int, help="Rewrite budget per monomial.")
@click.option("-v", "--verbose", count=True)
def run(script, golden, fmt, emit, budget, verbose):
    """Run a derivation script, then check it against its golden file."""
    state, found = _run(script, budget, verbose)
    rendered = render_state(state, fmt)
    if emit:
        try:
            Path(emit).write_text(rendered, encoding="utf-8")
        except OSError as err:
            raise InputFailure(emit, str(err))
    golden = golden or _adjacent_golden(script, found)
    if golden is None:
        if not emit:
            click.echo(rendered, nl=False)
        return
    if not _golden_report(state, golden, verbose=verbose):
        sys.exit(1)


@main.command()
@click.argument("script")
@click.argument("labels", nargs=-1)
@click.option("--golden", help="Golden expectation file (defaults to an adjacent .golden).")
@click.option("--budget", type=int)
@click.option("-v", "--verbose", count=True)
def verify(script, labels, golden, budget, verbose):
    """Check selected labels (all by default) of a script against golden values."""
    state, found = _run(script, budget, verbose)
    golden = golden or _adjacent_golden(script, found)
    if golden is None:
        raise click.UsageError("no golden file given and none found next to the script")
    if not _golden_report(state, golden, labels, verbose):
        sys.exit(1)


def evaluate(e, ctx: C.AlgebraContext):
    """What ``eval`` prints: a stored rule for an atom commutator, else the simplified form."""
    if isinstance(e, Equation):
        return e.map(lambda s: evaluate(s, ctx))
    if isinstance(e, Commutator) and not e.inert and isinstance(e.a, Tensor) and isinstance(e.b, Tensor):
        value = ctx.lookup(C.AtomPattern.of(e.a), C.AtomPattern.of(e.b), keep_dummies=True)
        if value is not None:
            return value
    return simplify(e, ctx)


@main.command("eval")
@click.argument("expression")
@click.option("--ctx", "ctx_path", help="Context preamble (.setup) to load first.")
@click.option("--format", "fmt", type=FORMATS, default="plain", show_default=True)
@click.option("--budget", type=int)
def eval_cmd(expression, ctx_path, fmt, budget):
    """Evaluate one expression under an optional context."""
    state, _ = _load_state(ctx_path, budget)
    try:
        values = parse_args(expression, state)
        if len(values) != 1:
            raise DerivError("expected a single expression")
        click.echo(render(evaluate(values[0], state.ctx), fmt))
    except (ExprError, RecursionError) as err:
        raise EngineFailure(str(err))


class Session:
    """A REPL session: every accepted line is kept as a replayable script line."""

    def __init__(self, state: DerivationState, preamble: str = "", fmt: str = "plain"):
        self.state = state
        self.fmt = fmt
        self.history = [ln for ln in preamble.splitlines() if parse_line(ln) is not None]

    def next_label(self) -> str:
        used = [int(k) for k in self.state.labels]
        return str(max(used, default=0) + 1)

    def feed(self, line: str) -> str | None:
        """Run one line; returns the text to show (errors included)."""
        parsed = parse_line(line)
        if parsed is None:
            return None
        label, verb, args = parsed
        if verb not in VERBS:
            verb, args = "eval", line if label is None else line.split(")", 1)[1].strip()
        if label is None and verb not in C_VERBS:
            label = self.next_label()
        try:
            value = run_step(self.state, label, verb, args)
        except DerivError as err:
            return f"error: {err}"
        self.history.append(f"({label}) {verb} {args}" if label else f"{verb} {args}")
        if label is None:
            return None
        shown = self.state.labels.get(label, value)
        return f"({label}) {render_value(shown, self.fmt)}"

    def script(self) -> str:
        return "\n".join(self.history) + "\n"


C_VERBS = {"setup", "rule", "define", "assume", "diffops", "momentum", "identity", "budget", "note"}


@main.command()
@click.option("--ctx", "ctx_path", help="Context preamble (.setup) to load first.")
@click.option("--history", type=click.Path(dir_okay=False), help="Save the session as a script on exit.")
@click.option("--format", "fmt", type=FORMATS, default="plain", show_default=True)
@click.option("--budget", type=int)
def repl(ctx_path, history, fmt, budget):
    """Line-at-a-time derivation; `%` is the last result, `(N)` a label."""
    state, preamble = _load_state(ctx_path, budget)
    session = Session(state, preamble, fmt)
    stream = click.get_text_stream("stdin")
    interactive = stream.isatty()

    def save(path):
        try:
            Path(path).write_text(session.script(), encoding="utf-8")
        except OSError as err:
            click.echo(f"error: {err}")

    while True:
        if interactive:
            click.echo("opcalc> ", nl=False)
        line = stream.readline()
        if not line:
            break
        line = line.strip()
        if line == ":quit":
            break
        if line == ":labels":
            click.echo(" ".join(f"({k})" for k in sorted(state.labels, key=int)))
            continue
        if line.startswith(":save"):
            save(line[5:].strip() or "session.deriv")
            continue
        if line.startswith(":"):
            click.echo("error: commands are :labels, :save <path>, :quit")
            continue
        out = session.feed(line)
        if out:
            click.echo(out)
    if history:
        save(history)


if __name__ == "__main__":
    main()
