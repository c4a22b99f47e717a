"""Acceptance criteria 1-10, one PASS/FAIL line each."""

import subprocess
import sys
import time
from pathlib import Path

import pytest

from opcalc import oracle as O
from opcalc.deriv import assert_golden, bundled, parse_golden, run_script
from opcalc.expr import ZERO, Equation, dagger, parse, render
from opcalc.oracle import _dummy_count
from opcalc.simplify import simplify

TESTS = Path(__file__).parent


@pytest.fixture
def report(capsys):
    def emit(n: int, ok: bool, what: str):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {n}: {what}")
        assert ok, what

    return emit


@pytest.fixture(scope="module")
def golden():
    return {g.label: g for g in parse_golden(bundled("so4.golden"))}


def checked(state, golden, *labels):
    results = assert_golden(state, [golden[lab] for lab in labels])
    return all(r.ok for r in results), [r.line() for r in results if not r.ok]


def text(state, label):
    return render(state.labels[label])


def test_criterion_1_conservation_laws(golden, report):
    start = time.perf_counter()
    state = run_script(bundled("so4.deriv"), only=lambda lab: lab is None or int(lab) <= 51)
    ok, bad = checked(state, golden, "29", "41", "51")
    exact = (text(state, "29") == "%Commutator(H, L[q]) = 0"
             and state.labels["41"].rhs == ZERO and state.labels["51"].rhs == ZERO)
    elapsed = time.perf_counter() - start
    report(1, ok and exact and elapsed < 10,
           f"[H,L]=0 and [H,Z]=0 by both paths, exact, {elapsed:.2f}s {bad}")


def test_criterion_2_runge_lenz_algebra(golden, report):
    start = time.perf_counter()
    state = run_script(bundled("so4.deriv"), only=lambda lab: lab is None or int(lab) <= 93)
    ok, bad = checked(state, golden, "61", "80", "92", "93")
    rule = text(state, "61") == "%Commutator(L[q], Z[k]) = -i*hbar*eps[a,k,q]*Z[a]"
    paths = O.equivalence_check(state.labels["80"].rhs, state.labels["92"].rhs, state.contexts["93"])
    elapsed = time.perf_counter() - start
    report(2, ok and rule and paths.ok and elapsed < 30,
           f"[L,Z] rule, [Z,Z] by both paths, path verdict {paths}, {elapsed:.2f}s {bad}")


def test_criterion_3_orthogonality(derivation, report):
    ok = text(derivation, "66") == "L[a]*Z[a] = 0" and text(derivation, "67") == "Z[a]*L[a] = 0"
    report(3, ok, "L_k Z_k = 0 and Z_k L_k = 0")


def test_criterion_4_norm_identity(derivation, golden, report):
    ok, bad = checked(derivation, golden, "105", "108")
    exact = (text(derivation, "105") == "p[a]*p[b]*L[a]*L[b] = 0"
             and text(derivation, "108") == "Z[a]^2 = 2*(hbar^2 + L[a]^2)*H/m_e + kappa^2")
    report(4, ok and exact, f"Z^2 = 2H(hbar^2 + L^2)/m_e + kappa^2 with p_a p_b L_a L_b = 0 {bad}")


def test_criterion_5_so4_closure(derivation, golden, report):
    ok, bad = checked(derivation, golden, "125", "128", "130", "135")
    exact = [text(derivation, lab) for lab in ("125", "128", "130", "135")] == [
        "%Commutator(J[m], J[n]) = i*hbar*eps[a,m,n]*J[a]",
        "%Commutator(K[m], K[n]) = i*hbar*eps[a,m,n]*K[a]",
        "%Commutator(J[m], K[n]) = 0",
        "J[m]^2 - K[m]^2 = 0",
    ]
    report(5, ok and exact, f"[J,J], [K,K], [J,K] = 0 and J^2 = K^2 {bad}")


def test_criterion_6_spectrum(derivation, golden, report):
    ok, bad = checked(derivation, golden, "138", "141")
    final = text(derivation, "141") == "E(n) = -kappa^2*m_e/(2*hbar^2*n^2)"
    report(6, ok and final, f"E(n) = -kappa^2 m_e/(2 hbar^2 n^2) via J^2 {bad}")


def test_criterion_7_hermiticity(derivation, report):
    ctx = derivation.contexts["32"]
    z = derivation.labels["35"].rhs
    diff = simplify(z - dagger(z, ctx), ctx)
    report(7, diff == ZERO and derivation.labels["32"].rhs == ZERO, "Z_k - Z_k^dagger simplifies to 0")


def test_criterion_8_oracles(derivation, golden, report):
    checked_labels, skipped, failures = 0, [], []
    for label, g in golden.items():
        value = derivation.labels[label]
        if g.mode != "oracle" or not isinstance(value, Equation):
            continue
        defs = {n: derivation.definitions[n] for n in g.expand}
        diff = O.substitute_definitions(value.lhs - value.rhs, defs)
        if _dummy_count(diff) > 4:
            # beyond the component bound: certify through the functional representation
            skipped.append(label)
            v = O.functional_check(value, derivation.contexts[label], definitions=derivation.definitions)
            if not v.ok:
                failures.append((label, str(v)))
            continue
        v = O.equivalence_check(value, None, derivation.contexts[label], defs)
        checked_labels += 1
        if not v.ok:
            failures.append((label, str(v)))
    ctx = derivation.contexts["141"]
    defs = {n: derivation.definitions[n] for n in ("H", "L", "Z")}
    rules = [r.as_equation() for r in derivation.contexts["2"].rules]
    identities = rules + [derivation.labels[lab] for lab in ("20", "24", "29", "66")]
    functional = [O.functional_check(eq, ctx, definitions=defs) for eq in identities]
    functional_goldens = assert_golden(derivation, [g for g in golden.values() if g.mode == "functional"])
    # negative controls: a wrong sign must be caught by both oracles
    wrong = parse("%Commutator(p[q], V) = -i*hbar*V^3*X[q]")
    controls = (O.functional_check(wrong, ctx).status == "unequal"
                and O.equivalence_check(wrong, None, derivation.contexts["26"]).status == "unequal")
    ok = (not failures and all(v.ok for v in functional) and len(functional) == 10 and controls
          and all(r.ok for r in functional_goldens))
    report(8, ok, f"{checked_labels} equations component-checked, "
                  f"{len(skipped)} more (over four dummies) certified functionally, "
                  f"{len(functional) + len(functional_goldens)} functional certifications {failures}")


def test_criterion_9_property_suite(report):
    proc = subprocess.run([sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider",
                           str(TESTS / "test_properties.py")], capture_output=True, text=True)
    summary = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr
    report(9, proc.returncode == 0 and "failed" not in summary, f"property suite: {summary}")


def test_criterion_10_determinism(tmp_path, report):
    outs = []
    for n in range(2):
        emit = tmp_path / f"run{n}.txt"
        proc = subprocess.run([sys.executable, "-m", "opcalc.cli", "run", "so4.deriv", "--emit", str(emit)],
                              capture_output=True, cwd=tmp_path)
        outs.append((proc.returncode, proc.stdout, emit.read_bytes()))
    ok = outs[0] == outs[1] and outs[0][0] == 0 and outs[0][1].count(b"\n") == 141
    report(10, ok, "two runs of so4.deriv give byte-identical reports")
