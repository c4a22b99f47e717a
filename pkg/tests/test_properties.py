"""Randomized algebraic properties of the engine, 1000 cases each."""

import itertools

import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from opcalc import context as C
from opcalc import oracle
from opcalc.expr import Commutator, ZERO, add, dagger, mul, neg, parse, rename_indices, render
from opcalc.simplify import epsilon_reduce, simplify

CASES = settings(max_examples=1000, deadline=None, suppress_health_check=[HealthCheck.too_slow])

OPS = ["X", "p", "L"]
FIELDS = ["V", "H", "V^3"]
COEFFS = ["1", "-2", "i", "kappa", "3/2"]


@st.composite
def terms(draw, free="k", dummies=("a", "b"), max_pairs=2, max_fields=2, fields=FIELDS):
    slots = [f"{draw(st.sampled_from(OPS))}[{free}]"]
    for d in dummies[:draw(st.integers(0, max_pairs))]:
        slots += [f"{draw(st.sampled_from(OPS))}[{d}]" for _ in range(2)]
    slots += draw(st.lists(st.sampled_from(fields), max_size=max_fields))
    slots = draw(st.permutations(slots))
    return "*".join([draw(st.sampled_from(COEFFS))] + list(slots))


@st.composite
def sums(draw, **kw):
    return parse(" + ".join(draw(st.lists(terms(**kw), min_size=1, max_size=3))))


@pytest.fixture(scope="module")
def final_ctx(derivation):
    return derivation.contexts["141"]


@pytest.fixture(scope="module")
def so4_ctx(derivation):
    rules = [derivation.labels[n] for n in ("125", "128", "130")]
    return C.setup(quantum=["J", "K"], rules=rules)


@CASES
@given(sums())
def test_simplify_is_idempotent(final_ctx, e):
    once = simplify(e, final_ctx)
    assert simplify(once, final_ctx) == once


@CASES
@given(sums(), st.permutations(["u", "v", "w", "a", "b"]))
def test_simplify_ignores_dummy_names(final_ctx, e, names):
    renamed = rename_indices(e, {"a": names[0], "b": names[1]})
    assert simplify(renamed, final_ctx) == simplify(e, final_ctx)


@CASES
@given(sums())
def test_dagger_is_an_involution(final_ctx, e):
    assert dagger(dagger(e, final_ctx), final_ctx) == e


# every pair drawn from X, p, L and V has a stored rule
COVERED = ["V", "V^3"]


@settings(max_examples=300, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(terms(max_pairs=1, max_fields=1, fields=COVERED),
       terms(free="l", dummies=("c",), max_pairs=1, max_fields=1, fields=COVERED))
def test_antisymmetry_is_sound_on_phase_space_products(final_ctx, a, b):
    # the normal form does not apply 3D Schouten identities, so a nonzero
    # leftover is allowed only when the component oracle proves it vanishes
    a, b = parse(a), parse(b)
    out = simplify(add(Commutator(a, b), Commutator(b, a)), final_ctx)
    assert out == ZERO or oracle.equivalence_check(out, ZERO, final_ctx).ok


@st.composite
def algebra_elements(draw, names, free, quadratic=False):
    """Random combination of generators with one free index, optionally times a contracted pair."""
    out = []
    for _ in range(draw(st.integers(1, 3))):
        slots = [f"{draw(st.sampled_from(names))}[{free}]"]
        if quadratic and draw(st.booleans()):
            slots += [f"{draw(st.sampled_from(names))}[d]" for _ in range(2)]
        out.append("*".join([draw(st.sampled_from(COEFFS))] + draw(st.permutations(slots))))
    return parse(" + ".join(out))


@CASES
@given(algebra_elements(["L", "M"], "m"), algebra_elements(["L", "M"], "n"))
def test_commutator_is_antisymmetric_angular_runge_lenz(final_ctx, a, b):
    assert simplify(add(Commutator(a, b), Commutator(b, a)), final_ctx) == ZERO


@CASES
@given(algebra_elements(["J", "K"], "m"), algebra_elements(["J", "K"], "n"))
def test_commutator_is_antisymmetric_so4_pair(so4_ctx, a, b):
    assert simplify(add(Commutator(a, b), Commutator(b, a)), so4_ctx) == ZERO


@settings(max_examples=200, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(algebra_elements(["L", "M"], "m", quadratic=True), algebra_elements(["L", "M"], "n", quadratic=True))
def test_antisymmetry_is_sound_on_polynomials(final_ctx, a, b):
    # contracted pairs such as L[d]*M[d] are rotation invariants the normal
    # form does not recognize, so leftovers must be certified by the oracle
    out = simplify(add(Commutator(a, b), Commutator(b, a)), final_ctx)
    assert out == ZERO or oracle.equivalence_check(out, ZERO, final_ctx).ok


def jacobi(a, b, c):
    return add(
        Commutator(Commutator(a, b), c),
        Commutator(Commutator(b, c), a),
        Commutator(Commutator(c, a), b),
    )


@CASES
@given(st.lists(st.sampled_from(["L", "M"]), min_size=3, max_size=3), st.permutations("abc"))
def test_jacobi_angular_and_runge_lenz(final_ctx, names, idx):
    a, b, c = (parse(f"{n}[{i}]") for n, i in zip(names, idx))
    assert simplify(jacobi(a, b, c), final_ctx) == ZERO


@CASES
@given(st.lists(st.sampled_from(["J", "K"]), min_size=3, max_size=3), st.permutations("abc"))
def test_jacobi_so4_pair(so4_ctx, names, idx):
    a, b, c = (parse(f"{n}[{i}]") for n, i in zip(names, idx))
    assert simplify(jacobi(a, b, c), so4_ctx) == ZERO


def levi(i, j, k):
    return (i - j) * (j - k) * (k - i) // 2


@CASES
@given(st.permutations("abq"), st.permutations("mnq"), st.integers(-3, 3))
def test_epsilon_delta_against_all_assignments(left, right, scale):
    e = mul(parse(str(scale)), parse(f"eps[{','.join(left)}]*eps[{','.join(right)}]"))
    reduced = epsilon_reduce(e)
    free = ["a", "b", "m", "n"]
    for values in itertools.product((1, 2, 3), repeat=4):
        env = dict(zip(free, values))
        want = scale * sum(
            levi(*[env.get(i, q) for i in left]) * levi(*[env.get(i, q) for i in right]) for q in (1, 2, 3)
        )
        assert evaluate_structs(reduced, env) == want, render(reduced)


def evaluate_structs(e, env):
    """Numeric value of a sum of products of integers, g and eps under an index assignment."""
    from opcalc.expr import Number, Tensor, factors_of, terms_of

    total = 0
    for t in terms_of(e):
        if t == ZERO:
            continue
        value = 1
        for f in factors_of(t):
            if isinstance(f, Number):
                value *= f.value
            elif isinstance(f, Tensor) and f.name == "g":
                i, j = (env[x] for x in f.indices)
                value *= int(i == j)
            elif isinstance(f, Tensor) and f.name == "eps":
                value *= levi(*(env[x] for x in f.indices))
            else:
                raise AssertionError(f"unexpected factor {render(f)}")
        total += value
    return total


def test_negation_helper_sanity():
    assert simplify(add(parse("X[k]"), neg(parse("X[k]"))), C.setup()) == ZERO
