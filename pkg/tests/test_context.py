from dataclasses import replace

import pytest

from opcalc import context as C
from opcalc import rewrite
from opcalc.context import ContextError, TensorDecl
from opcalc.expr import Commutator, parse, render
from opcalc.simplify import simplify

BASIC_RULES = [
    "%Commutator(L[j], L[k]) = i*hbar*eps[j,k,n]*L[n]",
    "%Commutator(p[j], L[k]) = i*hbar*eps[j,k,n]*p[n]",
    "%Commutator(p[k], p[l]) = 0",
    "%Commutator(X[j], L[k]) = i*hbar*eps[j,k,n]*X[n]",
    "%Commutator(X[k], p[l]) = i*hbar*g[k,l]",
    "%Commutator(X[k], V) = 0",
]


def test_setup_stores_the_six_basic_rules(ctx):
    assert [render(e) for e in ctx.rule_equations()] == BASIC_RULES


def test_setup_via_api_matches_preamble(ctx):
    built = C.setup(real=["hbar", "kappa", "m_e"], hermitian=["V", "H", "L", "X", "p"], quantum=["Z"],
                    rules=[parse(r) for r in BASIC_RULES])
    assert built.rules == ctx.rules


def test_without_rules_commutators_stay_put():
    bare = C.setup(hermitian=["L"], quantum=[])
    e = Commutator(parse("L[j]"), parse("L[k]"))
    out = simplify(e, bare)
    assert isinstance(out, Commutator) and out.inert
    assert render(out) == "%Commutator(L[j], L[k])"


def test_derived_rules_extend_the_store(derivation):
    before = derivation.contexts["25"].rules
    after = derivation.contexts["26"].rules
    assert len(after) == len(before) + 3
    added = {render(r.as_equation()) for r in after[len(before):]}
    assert added == {
        "%Commutator(L[q], V) = 0",
        "%Commutator(p[q], V) = i*hbar*V^3*X[q]",
        "%Commutator(p[q], V^3) = 3*i*hbar*X[q]*V^5",
    }


def test_conservation_rules_added(derivation):
    rules = {render(r.as_equation()) for r in derivation.contexts["53"].rules}
    assert {"%Commutator(H, L[q]) = 0", "%Commutator(H, Z[k]) = 0"} <= rules


def test_duplicate_rule_stored_once(ctx):
    rule = parse("%Commutator(H, L[q]) = 0")
    twice = C.add_rules(C.add_rules(ctx, [rule]), [rule])
    assert len(twice.rules) == len(ctx.rules) + 1


def test_rule_on_undeclared_symbol_rejected(ctx):
    with pytest.raises(ContextError):
        C.add_rules(ctx, [parse("%Commutator(Q[a], L[b]) = 0")])


def test_declarations_after_define(derivation):
    names = {d.name for d in derivation.contexts["3"].decls}
    assert {"L", "Z", "p", "eps", "g", "X"} <= names
    names = {d.name for d in derivation.contexts["110"].decls}
    assert {"M", "J", "K"} <= names


def test_redefining_identically_is_a_noop(ctx):
    decl = ctx.decl("p")
    assert C.define_tensor(ctx, decl) == ctx


def test_conflicting_redefinition_rejected(ctx):
    with pytest.raises(ContextError):
        C.define_tensor(ctx, TensorDecl("p", 2, "operator", "none", True))


def test_assumptions_simplify_square_roots(derivation):
    with_signs = derivation.contexts["113"]
    assert with_signs.assumptions == (("m_e", "positive"), ("E", "negative"))
    definition = derivation.labels["112"]
    out = rewrite.isolate(definition, parse("Z[n]"), with_signs)
    assert render(out) == "Z[n] = 2^(1/2)*(-E)^(1/2)*M[n]/m_e^(1/2)"
    # without the sign facts the root of -m_e/E stays as it is
    bare = replace(with_signs, assumptions=())
    assert render(rewrite.isolate(definition, parse("Z[n]"), bare)) == "Z[n] = 2^(1/2)*M[n]/(-m_e/E)^(1/2)"


def test_assume_on_undeclared_symbol(ctx):
    with pytest.raises(ContextError):
        C.assume(ctx, [("zeta", "positive")])


def test_contradictory_assumption(ctx):
    once = C.assume(ctx, [("m_e", "positive")])
    with pytest.raises(ContextError):
        C.assume(once, [("m_e", "negative")])


def test_differential_operator_echo(ctx):
    on = C.set_differential_operators(ctx, "p")
    assert C.describe(on)[-1] == "differentialoperators = {[p, [x, y, z]]}"
    off = C.set_differential_operators(on, "p", on=False)
    assert C.describe(off)[-1] == "differentialoperators = none"


def test_enabling_twice_is_idempotent(ctx):
    once = C.set_differential_operators(ctx, "p")
    assert C.set_differential_operators(once, "p") == once


def test_lookup_keeps_written_dummies(ctx):
    a, b = C.AtomPattern("L", ("j",)), C.AtomPattern("L", ("k",))
    assert render(ctx.lookup(a, b, keep_dummies=True)) == "i*hbar*eps[j,k,n]*L[n]"
    # the template dummy n clashes with a query index and is renamed
    clash = ctx.lookup(C.AtomPattern("L", ("n",)), b, keep_dummies=True)
    assert "n" in render(clash) and render(clash).count("L[n]") == 0


def test_lookup_reversed_pair_negates(ctx):
    out = ctx.lookup(C.AtomPattern("p", ("l",)), C.AtomPattern("X", ("k",)))
    assert render(out) == "-i*hbar*g[k,l]"
