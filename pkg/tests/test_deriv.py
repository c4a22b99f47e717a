import pytest

from opcalc.deriv import (
    DerivationState,
    DerivError,
    Echo,
    GoldenExpectation,
    assert_golden,
    bundled,
    parse_golden,
    render_state,
    run_script,
    spectrum_closure,
)
from opcalc.expr import render


def test_final_label_is_the_spectrum(derivation):
    assert render(derivation.labels["141"]) == "E(n) = -kappa^2*m_e/(2*hbar^2*n^2)"


def test_every_output_is_bound(derivation):
    assert sorted(map(int, derivation.labels)) == list(range(1, 142))


def test_empty_script():
    state = run_script("")
    assert state.labels == {}
    assert run_script("# only a comment\n\n").labels == {}


def test_undefined_label():
    with pytest.raises(DerivError, match=r"\(999\)"):
        run_script("(1) eval (999)")


def test_labels_are_immutable():
    with pytest.raises(DerivError, match="already bound"):
        run_script("(1) eval A = B\n(1) eval C = D")


def test_percent_is_the_previous_result():
    state = run_script("(1) eval A = B\n(2) swap %")
    assert render(state.labels["2"]) == "B = A"


def test_error_names_label_and_line():
    with pytest.raises(DerivError) as err:
        run_script("(1) eval A = B\n\n(2) frobnicate (1)")
    assert err.value.label == "2"
    assert err.value.line == 3


def test_engine_errors_carry_step_context():
    with pytest.raises(DerivError, match=r"\(2\) line 2"):
        run_script("(1) eval X[a] = p[a]\n(2) isolate (1), Q")


def test_replay_is_identical(derivation):
    again = run_script(bundled("so4.deriv"))
    assert render_state(again) == render_state(derivation)


def test_log_records_each_step(derivation):
    labelled = [r.label for r in derivation.log if r.label]
    assert labelled == [str(n) for n in range(1, 142)]
    assert [r.label for r in derivation.log if r.axiom] == ["139"]


def test_settings_outputs_are_echoes(derivation):
    assert isinstance(derivation.labels["1"], Echo)
    assert "dimension = 3" in derivation.labels["1"].text


def golden_for(*labels):
    wanted = set(labels)
    return [g for g in parse_golden(bundled("so4.golden")) if g.label in wanted]


def test_golden_conservation_of_angular_momentum(derivation):
    (r,) = assert_golden(derivation, golden_for("29"))
    assert r.ok, r.detail


def test_golden_runge_lenz_rule(derivation):
    (r,) = assert_golden(derivation, golden_for("61"))
    assert r.ok, r.detail
    assert render(derivation.labels["61"]) == "%Commutator(L[q], Z[k]) = -i*hbar*eps[a,k,q]*Z[a]"


def test_golden_equal_casimirs(derivation):
    (r,) = assert_golden(derivation, golden_for("135"))
    assert r.ok, r.detail


def test_summary_table_form_of_runge_lenz_rule(derivation):
    g = GoldenExpectation("61", "61", "%Commutator(L[q], Z[k]) = i*hbar*eps[q,k,o]*Z[o]", "oracle",
                          expand=("Z", "L"))
    (r,) = assert_golden(derivation, [g])
    assert r.ok, r.detail


def test_golden_failure_is_a_report_entry(derivation):
    g = GoldenExpectation("29", "29", "%Commutator(H, L[q]) = L[q]", "oracle")
    (r,) = assert_golden(derivation, [g])
    assert not r.ok
    assert r.line().startswith("FAIL (29)")


def test_golden_missing_label():
    (r,) = assert_golden(DerivationState(), golden_for("29"))
    assert not r.ok and r.detail == "label not bound"


def test_so4_closure_triple(derivation):
    results = assert_golden(derivation, golden_for("120", "125", "128", "130"))
    assert len(results) == 4 and all(r.ok for r in results)


def test_whole_golden_file(derivation):
    results = assert_golden(derivation, parse_golden(bundled("so4.golden")))
    assert len(results) == 141
    assert [r.label for r in results if not r.ok] == []


def test_golden_entries_cite_equations():
    for g in parse_golden(bundled("so4.golden")):
        assert g.paper_eq == g.label


def test_parse_golden_errors():
    with pytest.raises(DerivError, match="four fields"):
        parse_golden("(1) | 1 | A = B")
    with pytest.raises(DerivError, match="unknown option"):
        parse_golden("(1) | 1 | A = B | oracle | budget=3")
    with pytest.raises(ValueError, match="unknown golden mode"):
        parse_golden("(1) | 1 | A = B | textual")


def test_spectrum_closure_from_prefix():
    source = bundled("so4.deriv")
    state = run_script(source, only=lambda lab: lab is None or int(lab) < 135)
    assert "141" not in state.labels
    out = spectrum_closure(state)
    assert render(out) == "E(n) = -kappa^2*m_e/(2*hbar^2*n^2)"
    assert render(state.labels["138"]) == "J[a]^2 = -hbar^2/4 - kappa^2*m_e/(8*E)"


def test_spectrum_closure_needs_prerequisites():
    with pytest.raises(DerivError, match="missing prerequisite"):
        spectrum_closure(DerivationState())


def test_runge_lenz_square_and_casimir(derivation):
    results = assert_golden(derivation, golden_for("137", "138"))
    assert all(r.ok for r in results), [r.detail for r in results]


def test_latex_rendering(derivation):
    tex = render_state(derivation, "latex")
    assert "\\tag{141}" in tex
    assert "\\tag{1}" not in tex
    assert "[" in tex and "]_{-}" in tex
