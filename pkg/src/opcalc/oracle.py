"""Brute-force equality certification.

Two independent checks live here.  The component oracle instantiates every
Einstein sum over {1, 2, 3}, evaluates epsilon and the metric numerically and
brings the resulting words of component operators to a normal form using the
context's rules instantiated at concrete index values.  The functional oracle
applies operators to explicit functions x^a y^b z^c r^m with p = -i hbar d.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Mapping, Sequence

import sympy as sp

from .context import AlgebraContext, AtomPattern, fresh_index
from .expr import (
    Add,
    Commutator,
    Dagger,
    Deriv,
    Equation,
    Expr,
    ExprError,
    Func,
    Pow,
    Tensor,
    add,
    all_indices,
    free_indices,
    mul,
    neg,
    rebuild,
    render,
    rename_indices,
)
from .simplify import Engine, symbol, term_indices

DIM = 3
BASIS = (1, 2, 3)

Word = tuple  # tuple of component atoms (name, indices)


class OracleError(ExprError):
    pass


@dataclass(frozen=True)
class Verdict:
    status: str  # "equal" | "unequal" | "inconclusive"
    witness: Mapping[str, int] | None = None
    residual: str | None = None
    reason: str | None = None

    @property
    def ok(self) -> bool:
        return self.status == "equal"

    def __str__(self):
        if self.status == "equal":
            return "equal"
        if self.status == "unequal":
            return f"unequal at {dict(self.witness or {})}: residual {self.residual}"
        return f"inconclusive: {self.reason}"


# ------------------------------------------------------------ preprocessing


def substitute_definitions(e: Expr, definitions: Mapping[str, Equation]) -> Expr:
    """Replace defined atoms (e.g. L[q], H) by their defining expressions."""
    if not definitions:
        return e

    def go(x: Expr) -> Expr:
        if isinstance(x, Tensor) and x.name in definitions:
            return go(_instantiate(definitions[x.name], x.indices))
        if isinstance(x, Func) and x.name in definitions:
            return go(_instantiate(definitions[x.name], ()))
        if isinstance(x, Deriv):
            return Deriv(x.indices, go(x.target))
        return rebuild(x, go)

    return go(e)


def _instantiate(defn: Equation, indices: Sequence[str]) -> Expr:
    lhs = defn.lhs
    pattern = lhs.indices if isinstance(lhs, Tensor) else ()
    mapping = dict(zip(pattern, indices))
    for i in dict.fromkeys(all_indices(defn.rhs)):
        if i not in pattern:
            mapping[i] = fresh_index()
    return rename_indices(defn.rhs, mapping)


def activate(e: Expr) -> Expr:
    """Write every commutator, inert or not, as AB - BA."""
    if isinstance(e, Commutator):
        a, b = activate(e.a), activate(e.b)
        return add(mul(a, b), neg(mul(b, a)))
    if isinstance(e, Deriv):
        return Deriv(e.indices, activate(e.target))
    return rebuild(e, activate)


# ------------------------------------------------------------ components


def _eps(i, j, k) -> int:
    if len({i, j, k}) < 3:
        return 0
    return 1 if (i, j, k) in ((1, 2, 3), (2, 3, 1), (3, 1, 2)) else -1


class ComponentOracle:
    def __init__(self, ctx: AlgebraContext, budget: int = 200_000):
        self.ctx = ctx
        self.engine = Engine(ctx)
        self.budget = budget
        self._comm: dict = {}
        self._hbar = symbol("hbar", ctx.sign_of("hbar"))

    # ---- expansion of symbolic monomials into component words
    def expand(self, e: Expr, assignment: Mapping[str, int] | None = None) -> dict:
        """ComponentExpr of ``e``: dict word -> coefficient.  Free indices come from ``assignment``."""
        assignment = dict(assignment or {})
        out: dict = {}
        for coeff, structs, ops in self.engine.terms(activate(e)):
            counts = term_indices(structs, ops)
            loose = [i for i, n in counts.items() if n == 1 and i not in assignment]
            if loose:
                raise OracleError(f"free index {loose[0]} left uninstantiated")
            dummies = [i for i in counts if counts[i] == 2 and i not in assignment]
            for val, binding in self._assignments(structs, dummies, assignment):
                words = [(sp.Integer(1), ())]
                for atom in ops:
                    words = [(c * c2, w + w2) for c, w in words for c2, w2 in self._atom(atom, binding)]
                for c, w in words:
                    out[w] = out.get(w, 0) + coeff * val * c
        return out

    def _assignments(self, structs, dummies, fixed):
        """Yield (numeric value of structs, full binding) with nonzero value."""
        order = []
        for s in structs:
            for i in s.indices:
                if i in dummies and i not in order:
                    order.append(i)
        order += [d for d in dummies if d not in order]

        def value(b):
            v = 1
            for s in structs:
                idx = [b[i] for i in s.indices]
                if s.name == "eps":
                    v *= _eps(*idx)
                else:
                    v *= 1 if idx[0] == idx[1] else 0
                if v == 0:
                    return 0
            return v

        def rec(k, b):
            if k == len(order):
                v = value(b)
                if v:
                    yield v, dict(b)
                return
            for x in BASIS:
                b[order[k]] = x
                if self._partial_ok(structs, b):
                    yield from rec(k + 1, b)
            del b[order[k]]

        yield from rec(0, dict(fixed))

    @staticmethod
    def _partial_ok(structs, b) -> bool:
        for s in structs:
            idx = [b.get(i) for i in s.indices]
            known = [x for x in idx if x is not None]
            if s.name == "eps" and len(set(known)) < len(known):
                return False
            if s.name == "g" and len(known) == 2 and known[0] != known[1]:
                return False
        return True

    def _atom(self, atom: Expr, b: Mapping[str, int]) -> list:
        """Component words (with coefficients) for one symbolic operator atom."""
        if isinstance(atom, Tensor):
            return [(sp.Integer(1), ((atom.name, tuple(b[i] for i in atom.indices)),))]
        if isinstance(atom, Func):
            return [(sp.Integer(1), ((atom.name, ()),))]
        if isinstance(atom, Pow) and isinstance(atom.base, Func):
            k = int(atom.exp)
            if k < 0:
                return [(sp.Integer(1), ((f"{atom.base.name}^{k}", ()),))]
            return [(sp.Integer(1), ((atom.base.name, ()),) * k)]
        if isinstance(atom, Deriv):
            return self._deriv(atom, b)
        if isinstance(atom, Dagger):
            inner = render(rename_indices(atom, {k: str(v) for k, v in b.items()}))
            return [(sp.Integer(1), (("#", inner),))]
        raise OracleError(f"cannot expand atom {render(atom)}")

    def _deriv(self, atom: Deriv, b) -> list:
        idx = [b[i] for i in atom.indices]
        target = atom.target
        if isinstance(target, Func) and target.name == "G":
            # derivatives of the test function in momentum form: d_l G = (i/hbar) p_l G
            c = (sp.I / self._hbar) ** len(idx)
            return [(c, tuple(("p", (i,)) for i in sorted(idx)) + (("G", ()),))]
        words = self._atom_words(target, b)
        for i in idx:
            words = [t for c, w in words for t in _grad_word(i, w, c)]
        return words

    def _atom_words(self, target, b):
        out = []
        for coeff, structs, ops in self.engine.terms(target):
            if structs:
                raise OracleError("structural tensor inside a derivative")
            out.extend((coeff * c, w) for c, w in self._monomial_words(structs, ops, b))
        return out

    def _monomial_words(self, structs, ops, b):
        words = [(sp.Integer(1), ())]
        for atom in ops:
            words = [(c * c2, w + w2) for c, w in words for c2, w2 in self._atom(atom, b)]
        return words

    # ---- component normal ordering
    def _key(self, a):
        rank = self.ctx.class_rank(a[0])
        if rank is None or a[0] == "#":
            return None
        return (rank, a[0], a[1])

    def _commutator(self, a, b):
        key = (a, b)
        if key in self._comm:
            return self._comm[key]
        if a == b:
            value: dict | None = {}
        else:
            pa = AtomPattern(a[0], tuple(str(i) for i in a[1]), 1)
            pb = AtomPattern(b[0], tuple(str(i) for i in b[1]), 1)
            t = self.ctx.lookup(pa, pb)
            if t is None:
                value = None
            else:
                value = self.expand(rename_indices(t, {str(i): _NUM[i] for i in BASIS}),
                                    {_NUM[i]: i for i in BASIS})
        self._comm[key] = value
        return value

    def normal_form(self, ce: Mapping[Word, object]) -> dict:
        """component_normal_order: sorted words, rule corrections, V^2 X^2 = 1 applied."""
        out: dict = {}
        stack = [(w, c) for w, c in ce.items()]
        steps = 0
        while stack:
            w, c = stack.pop()
            if c == 0:
                continue
            steps += 1
            if steps > self.budget:
                raise OracleError("component budget exhausted")
            nxt = self._order_step(w, c)
            if nxt is None:
                nxt = _reduce_radial(w, c)
            if nxt is None:
                out[w] = out.get(w, 0) + c
            else:
                stack.extend(nxt)
        result = {}
        for w, c in out.items():
            c = sp.expand(c)
            if c != 0:
                result[w] = c
        return result

    def _order_step(self, w, c):
        for k in range(len(w) - 1):
            a, b = w[k], w[k + 1]
            ka, kb = self._key(a), self._key(b)
            if ka is None or kb is None or not kb < ka:
                continue
            value = self._commutator(a, b)
            if value is None:
                continue
            out = [(w[:k] + (b, a) + w[k + 2:], c)]
            for w2, c2 in value.items():
                out.append((w[:k] + w2 + w[k + 2:], c * c2))
            return out
        return None


_NUM = {1: "1", 2: "2", 3: "3"}


def _grad_word(i: int, word: Word, c) -> list:
    """d_i of a product of commuting position functions X_k and V."""
    out = []
    for k, a in enumerate(word):
        rest = word[:k] + word[k + 1:]
        if a[0] == "X":
            if a[1][0] == i:
                out.append((c, rest))
        elif a[0] == "V":
            out.append((-c, rest[:k] + (("V", ()),) * 3 + (("X", (i,)),) + rest[k:]))
        else:
            raise OracleError(f"cannot differentiate {a[0]}")
    return [(cc, tuple(sorted(w, key=lambda a: (a[0] != "X", a)))) for cc, w in out]


def _reduce_radial(word: Word, c):
    """Use V^2 (X_1^2 + X_2^2 + X_3^2) = 1 on the leading block of X and V atoms."""
    n = 0
    while n < len(word) and word[n][0] in ("X", "V"):
        n += 1
    block, rest = word[:n], word[n:]
    x3 = sum(1 for a in block if a == ("X", (3,)))
    v = sum(1 for a in block if a == ("V", ()))
    if x3 < 2 or v < 2:
        return None
    xs = [a for a in block if a[0] == "X"]
    xs.remove(("X", (3,)))
    xs.remove(("X", (3,)))
    vs = (("V", ()),) * v
    out = [(tuple(xs) + vs[2:] + rest, c)]
    for j in (1, 2):
        out.append((tuple(sorted(xs + [("X", (j,)), ("X", (j,))])) + vs + rest, -c))
    return out


# ------------------------------------------------------------ public API


def expand_components(e: Expr, ctx: AlgebraContext, assignment: Mapping[str, int] | None = None) -> dict:
    n_dummy = _dummy_count(e)
    if n_dummy > 4:
        raise OracleError(f"{n_dummy} dummy indices exceed the instantiation bound of 4")
    return ComponentOracle(ctx).expand(e, assignment)


def _dummy_count(e: Expr) -> int:
    best = 0
    for t in (e.terms if isinstance(e, Add) else (e,)):
        counts = {}
        for i in all_indices(t):
            counts[i] = counts.get(i, 0) + 1
        best = max(best, sum(1 for v in counts.values() if v == 2))
    return best


def component_normal_order(ce: Mapping[Word, object], ctx: AlgebraContext) -> dict:
    return ComponentOracle(ctx).normal_form(ce)


def render_component(ce: Mapping[Word, object]) -> str:
    if not ce:
        return "0"
    parts = []
    for w, c in sorted(ce.items(), key=lambda t: (len(t[0]), t[0])):
        atoms = "*".join(f"{n}{''.join(map(str, i))}" if isinstance(i, tuple) else str(i) for n, i in w)
        parts.append(f"({c})*{atoms}" if atoms else f"({c})")
    return " + ".join(parts)


def equivalence_check(a, b, ctx: AlgebraContext, definitions: Mapping[str, Equation] | None = None,
                      budget: int = 200_000) -> Verdict:
    """Compare ``a`` and ``b`` (expressions, or one equation) component by component."""
    if isinstance(a, Equation) and b is None:
        a, b = a.lhs, a.rhs
    try:
        diff = add(a, neg(b))
        diff = substitute_definitions(diff, definitions or {})
        free = sorted(set(free_indices(a)) | set(free_indices(b)) | set(free_indices(diff)))
        oracle = ComponentOracle(ctx, budget)
        for values in itertools.product(BASIS, repeat=len(free)):
            binding = dict(zip(free, values))
            ce = oracle.normal_form(oracle.expand(diff, binding))
            if ce:
                return Verdict("unequal", binding, render_component(ce))
        return Verdict("equal")
    except (OracleError, ExprError, RecursionError) as err:
        return Verdict("inconclusive", reason=str(err))


# ------------------------------------------------------------ functional oracle

# a function is a dict (a, b, c, m) -> coefficient meaning sum coeff x^a y^b z^c r^m

DEFAULT_SAMPLE = (
    (0, 0, 0, -1),
    (1, 0, 0, -1),
    (0, 1, 0, 0),
    (0, 0, 1, -3),
    (2, 1, 0, -3),
    (1, 1, 1, -2),
    (0, 2, 1, -1),
    (3, 0, 0, -3),
    (1, 0, 2, 1),
    (0, 0, 0, 1),
    (1, 2, 0, -2),
    (0, 1, 1, 0),
)


def _fn_add(f: dict, g: dict, scale=1) -> dict:
    out = dict(f)
    for k, v in g.items():
        out[k] = out.get(k, 0) + scale * v
    return out


def _partial(i: int, f: dict) -> dict:
    out: dict = {}
    for (a, b, c, m), v in f.items():
        e = [a, b, c]
        if e[i - 1]:
            k = list(e)
            k[i - 1] -= 1
            key = (k[0], k[1], k[2], m)
            out[key] = out.get(key, 0) + e[i - 1] * v
        if m:
            k = list(e)
            k[i - 1] += 1
            key = (k[0], k[1], k[2], m - 2)
            out[key] = out.get(key, 0) + m * v
    return out


def _times_x(i: int, f: dict) -> dict:
    out = {}
    for (a, b, c, m), v in f.items():
        e = [a, b, c]
        e[i - 1] += 1
        out[(e[0], e[1], e[2], m)] = v
    return out


def _times_rinv(f: dict, k: int = 1) -> dict:
    return {(a, b, c, m - k): v for (a, b, c, m), v in f.items()}


def _canonical_fn(f: dict) -> dict:
    """Reduce with z^2 = r^2 - x^2 - y^2 and drop zero coefficients."""
    work = dict(f)
    out: dict = {}
    while work:
        (a, b, c, m), v = work.popitem()
        if c >= 2:
            for key, s in (((a, b, c - 2, m + 2), 1), ((a + 2, b, c - 2, m), -1), ((a, b + 2, c - 2, m), -1)):
                work[key] = work.get(key, 0) + s * v
            continue
        out[(a, b, c, m)] = out.get((a, b, c, m), 0) + v
    return {k: sp.expand(v) for k, v in out.items() if sp.expand(v) != 0}


def apply_word(word: Word, f: dict, hbar) -> dict:
    """Apply a component operator word (rightmost first) to a function.

    A trailing test function G stands for the sample function itself.
    """
    if word and word[-1] == ("G", ()):
        word = word[:-1]
    for name, idx in reversed(word):
        if name == "X":
            f = _times_x(idx[0], f)
        elif name == "V":
            f = _times_rinv(f)
        elif name.startswith("V^"):
            # negative powers of V are positive powers of r
            f = _times_rinv(f, int(name[2:]))
        elif name == "p":
            f = {k: -sp.I * hbar * v for k, v in _partial(idx[0], f).items()}
        else:
            raise OracleError(f"operator {name} has no functional representation")
    return f


def functional_check(identity: Equation, ctx: AlgebraContext, sample=DEFAULT_SAMPLE,
                     definitions: Mapping[str, Equation] | None = None) -> Verdict:
    """Apply both sides of ``identity`` to every sample function exactly."""
    try:
        diff = substitute_definitions(add(identity.lhs, neg(identity.rhs)), definitions or {})
        oracle = ComponentOracle(ctx)
        hbar = oracle._hbar
        free = list(free_indices(identity))
        for values in itertools.product(BASIS, repeat=len(free)):
            binding = dict(zip(free, values))
            ce = oracle.expand(diff, binding)
            for elem in sample:
                total: dict = {}
                for w, c in ce.items():
                    total = _fn_add(total, apply_word(w, {tuple(elem): sp.Integer(1)}, hbar), c)
                residual = _canonical_fn(total)
                if residual:
                    return Verdict("unequal", {**binding, "basis": elem}, str(residual))
        return Verdict("equal")
    except (OracleError, ExprError) as err:
        return Verdict("inconclusive", reason=str(err))
