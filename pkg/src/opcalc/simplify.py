"""Normal form for sums of noncommutative tensor monomials.

A monomial is held internally as ``(coeff, structs, ops)``: a sympy scalar
coefficient, a tuple of structural tensors (eps, g) and an ordered tuple of
operator atoms.  Simplification contracts metrics and epsilon pairs, sorts
operator atoms into the class order using commutator rules, renames dummy
indices canonically and combines like monomials.
"""

from __future__ import annotations

import itertools
from collections import Counter
from fractions import Fraction
from typing import Iterable

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
    I,
    ImagUnit,
    Mul,
    Number,
    Pow,
    Scalar,
    Tensor,
    ZERO,
    add,
    all_indices,
    dagger,
    factors_of,
    is_scalar,
    mul,
    power,
    render,
    rename_indices,
    walk,
)


class SimplifyError(ExprError):
    pass


class BudgetExceeded(SimplifyError):
    """The rewrite budget for one monomial ran out (likely a looping rule set)."""


# ------------------------------------------------------------ scalar bridge

_SYMBOLS: dict = {}


def symbol(name: str, sign: str | None = None) -> sp.Symbol:
    key = (name, sign)
    s = _SYMBOLS.get(key)
    if s is None:
        flags = {"real": True}
        if sign == "positive":
            flags["positive"] = True
        elif sign == "negative":
            flags["negative"] = True
        s = _SYMBOLS[key] = sp.Symbol(name, **flags)
    return s


def to_sympy(e: Expr, ctx: AlgebraContext | None = None):
    if isinstance(e, Number):
        return sp.Rational(e.value.numerator, e.value.denominator)
    if isinstance(e, Scalar):
        return symbol(e.name, ctx.sign_of(e.name) if ctx is not None else None)
    if isinstance(e, ImagUnit):
        return sp.I
    if isinstance(e, Add):
        return sp.Add(*(to_sympy(t, ctx) for t in e.terms))
    if isinstance(e, Mul):
        return sp.Mul(*(to_sympy(t, ctx) for t in e.factors))
    if isinstance(e, Pow):
        k = e.exp
        return sp.Pow(to_sympy(e.base, ctx), sp.Rational(k.numerator, k.denominator))
    raise SimplifyError(f"not a commuting scalar: {render(e)}")


def from_sympy(s) -> Expr:
    if s.is_Integer or s.is_Rational:
        return Number(Fraction(int(s.p), int(s.q)))
    if s == sp.I:
        return I
    if s.is_Symbol:
        return Scalar(s.name)
    if s.is_Mul:
        return mul(*(from_sympy(a) for a in s.args))
    if s.is_Add:
        return add(*(from_sympy(a) for a in s.args))
    if s.is_Pow:
        k = s.exp
        if not k.is_Rational:
            raise SimplifyError(f"unsupported exponent {k}")
        return power(from_sympy(s.base), Fraction(int(k.p), int(k.q)))
    raise SimplifyError(f"unsupported scalar {s}")


def canonical_scalar(s):
    return sp.expand(s)


# ------------------------------------------------------------ monomial utils

_ZERO = sp.Integer(0)
_ONE = sp.Integer(1)


def atom_pattern(a: Expr) -> AtomPattern | None:
    if isinstance(a, Tensor):
        return AtomPattern(a.name, a.indices, 1)
    if isinstance(a, Func):
        return AtomPattern(a.name, (), 1)
    if isinstance(a, Pow) and isinstance(a.base, Func) and a.exp.denominator == 1 and a.exp > 0:
        return AtomPattern(a.base.name, (), int(a.exp))
    return None


def _func_power(a: Expr):
    if isinstance(a, Func):
        return a, 1
    if isinstance(a, Pow) and isinstance(a.base, Func) and a.exp.denominator == 1:
        return a.base, int(a.exp)
    return None, 0


def merge_ops(ops: Iterable[Expr]) -> tuple:
    """Concatenate atoms, merging adjacent powers of the same function atom."""
    out: list = []
    for a in ops:
        f, k = _func_power(a)
        if f is not None and out:
            g, m = _func_power(out[-1])
            if g == f:
                out.pop()
                if k + m != 0:
                    out.append(f if k + m == 1 else Pow(f, k + m))
                continue
        out.append(a)
    return tuple(out)


def term_indices(structs, ops) -> Counter:
    c: Counter = Counter()
    for s in structs:
        c.update(s.indices)
    for a in ops:
        c.update(all_indices(a))
    return c


def separate_dummies(s1, o1, s2, o2):
    """Rename dummies so that two monomials can be multiplied safely."""
    c1, c2 = term_indices(s1, o1), term_indices(s2, o2)
    if not (c1.keys() & c2.keys()):
        return s1, o1, s2, o2
    m2 = {i: fresh_index() for i, n in c2.items() if n == 2 and i in c1}
    if m2:
        s2 = tuple(rename_indices(t, m2) for t in s2)
        o2 = tuple(rename_indices(t, m2) for t in o2)
    m1 = {i: fresh_index() for i, n in c1.items() if n == 2 and i in c2 and i not in m2}
    if m1:
        s1 = tuple(rename_indices(t, m1) for t in s1)
        o1 = tuple(rename_indices(t, m1) for t in o1)
    return s1, o1, s2, o2


def _perm_sign(seq) -> int:
    seq = list(seq)
    sign = 1
    for i in range(len(seq)):
        for j in range(i + 1, len(seq)):
            if seq[i] > seq[j]:
                sign = -sign
    return sign


def _g(a, b) -> Tensor:
    return Tensor("g", (a, b))


class Engine:
    """Per-context rewriting machinery with small caches."""

    def __init__(self, ctx: AlgebraContext, budget: int | None = None):
        self.ctx = ctx
        self.budget = ctx.budget if budget is None else budget
        self._commute: dict = {}
        self._normal: dict = {}  # canonical flag -> monomial -> normal form

    # ---------------------------------------------------------- expansion
    def terms(self, e: Expr) -> list:
        """Expand ``e`` into raw monomials, preserving factor order."""
        if isinstance(e, Equation):
            raise SimplifyError("expected an expression, got an equation")
        if isinstance(e, Tensor) and e.name in ("eps", "g"):
            return [(_ONE, (e,), ())]
        if is_scalar(e) and not any(isinstance(x, Tensor) for x in walk(e)):
            return [(to_sympy(e, self.ctx), (), ())]
        if isinstance(e, Add):
            out = []
            for t in e.terms:
                out.extend(self.terms(t))
            return out
        if isinstance(e, Mul):
            acc = [(_ONE, (), ())]
            for f in e.factors:
                acc = self.product(acc, self.terms(f))
                if not acc:
                    break
            return acc
        if isinstance(e, Pow):
            b, k = e.base, e.exp
            if isinstance(b, Func):
                return [(_ONE, (), (e,))]
            if k.denominator == 1 and k > 0:
                if isinstance(b, Tensor):
                    return [(_ONE, (), (b,) * int(k))]
                base_terms = self.terms(b)
                acc = [(_ONE, (), ())]
                for _ in range(int(k)):
                    acc = self.product(acc, base_terms)
                return acc
            return [(_ONE, (), (e,))]
        if isinstance(e, Commutator):
            if e.inert:
                return self.inert_commutator(self.terms(e.a), self.terms(e.b))
            return self.commutator(self.terms(e.a), self.terms(e.b))
        if isinstance(e, Dagger):
            if isinstance(e.arg, (Tensor, Func, Deriv, Commutator)) or atom_pattern(e.arg):
                return [(_ONE, (), (e,))]
            return self.terms(dagger(e.arg, self.ctx))
        if isinstance(e, (Tensor, Func, Deriv)):
            return [(_ONE, (), (e,))]
        raise SimplifyError(f"cannot expand {render(e)}")

    @staticmethod
    def product(xs: list, ys: list) -> list:
        out = []
        for c1, s1, o1 in xs:
            for c2, s2, o2 in ys:
                s1_, o1_, s2_, o2_ = separate_dummies(s1, o1, s2, o2)
                out.append((c1 * c2, s1_ + s2_, merge_ops(o1_ + o2_)))
        return out

    @staticmethod
    def inert_commutator(xs: list, ys: list) -> list:
        """Pull scalars and structural factors out of an unevaluated [x, y]."""
        out = []
        for c1, s1, o1 in xs:
            for c2, s2, o2 in ys:
                if not o1 or not o2 or o1 == o2:
                    continue
                s1_, o1_, s2_, o2_ = separate_dummies(s1, o1, s2, o2)
                atom = Commutator(mul(*o1_), mul(*o2_), inert=True)
                out.append((c1 * c2, s1_ + s2_, (atom,)))
        return out

    def commutator(self, xs: list, ys: list) -> list:
        """Bilinear, Leibniz-expanded [x, y]; uncovered atom pairs stay inert."""
        out = []
        for c1, s1, o1 in xs:
            for c2, s2, o2 in ys:
                s1_, o1_, s2_, o2_ = separate_dummies(s1, o1, s2, o2)
                for c, s, o in self._word_commutator(o1_, o2_):
                    out.append((c1 * c2 * c, s1_ + s2_ + s, o))
        return out

    def _word_commutator(self, o1: tuple, o2: tuple) -> list:
        out = []
        for i, a in enumerate(o1):
            for j, b in enumerate(o2):
                value = self.atom_commutator(a, b)
                if value is None:
                    sign, atom = _oriented(a, b)
                    inner = [(sign * _ONE, (), (atom,))]
                elif value == ZERO:
                    continue
                else:
                    inner = self.terms(value)
                for c, s, o in inner:
                    out.append((c, s, merge_ops(o1[:i] + o2[:j] + o + o2[j + 1:] + o1[i + 1:])))
        return out

    # ---------------------------------------------------------- commutators
    def atom_commutator(self, a: Expr, b: Expr) -> Expr | None:
        if a == b:
            return ZERO
        pa, pb = atom_pattern(a), atom_pattern(b)
        if pa is None or pb is None:
            return None
        v = self.ctx.lookup(pa, pb)
        if v is not None:
            return v
        if pb.power > 1 and isinstance(b, Pow):
            base = b.base
            c = self.atom_commutator(a, base)
            if c is None:
                return None
            n = pb.power
            return add(*(mul(power(base, k), c, power(base, n - 1 - k)) for k in range(n)))
        if pa.power > 1 and isinstance(a, Pow):
            base = a.base
            c = self.atom_commutator(base, b)
            if c is None:
                return None
            m = pa.power
            return add(*(mul(power(base, k), c, power(base, m - 1 - k)) for k in range(m)))
        return None

    def commutes(self, a: Expr, b: Expr) -> bool:
        key = (a, b)
        hit = self._commute.get(key)
        if hit is None:
            v = self.atom_commutator(a, b)
            hit = self._commute[key] = v is not None and v == ZERO
        return hit

    # ---------------------------------------------------------- contraction
    def contract(self, term):
        """One contraction step, or None when the monomial is fully contracted."""
        coeff, structs, ops = term
        for k, s in enumerate(structs):
            if s.name == "eps" and len(set(s.indices)) < 3:
                return []
        step = self.contract_metric(term)
        if step is not None:
            return step
        counts = term_indices(structs, ops)
        eps = [k for k, s in enumerate(structs) if s.name == "eps"]
        for i, j in itertools.combinations(eps, 2):
            e1, e2 = structs[i].indices, structs[j].indices
            shared = [x for x in e1 if x in e2]
            if not shared:
                continue
            rest = tuple(s for k, s in enumerate(structs) if k not in (i, j))
            r1 = [x for x in e1 if x not in shared]
            r2 = [x for x in e2 if x not in shared]
            sign = _perm_sign([e1.index(x) for x in r1 + shared]) * _perm_sign([e2.index(x) for x in r2 + shared])
            if len(shared) == 3:
                return [(coeff * 6 * sign, rest, ops)]
            if len(shared) == 2:
                return [(coeff * 2 * sign, rest + (_g(r1[0], r2[0]),), ops)]
            (a, b), (c, d) = r1, r2
            return [(coeff * sign, rest + (_g(a, c), _g(b, d)), ops),
                    (-coeff * sign, rest + (_g(a, d), _g(b, c)), ops)]
        return self._eps_pair(term, counts)

    def contract_metric(self, term):
        """Remove one metric factor by trace or index renaming, if possible."""
        coeff, structs, ops = term
        counts = term_indices(structs, ops)
        for k, s in enumerate(structs):
            if s.name != "g":
                continue
            a, b = s.indices
            rest = structs[:k] + structs[k + 1:]
            if a == b:
                return [(coeff * self.ctx.dimension, rest, ops)]
            for x, y in ((a, b), (b, a)):
                if counts[x] == 2:
                    m = {x: y}
                    return [(coeff, tuple(rename_indices(t, m) for t in rest),
                             tuple(rename_indices(t, m) for t in ops))]
        return None

    def _eps_pair(self, term, counts):
        """eps_{xy.} A_x B_y with adjacent same-symbol A, B becomes eps [A_x, B_y] / 2."""
        coeff, structs, ops = term
        for s in structs:
            if s.name != "eps":
                continue
            for k in range(len(ops) - 1):
                a, b = ops[k], ops[k + 1]
                if not (isinstance(a, Tensor) and isinstance(b, Tensor) and a.name == b.name
                        and len(a.indices) == 1 and len(b.indices) == 1):
                    continue
                x, y = a.indices[0], b.indices[0]
                if x == y or x not in s.indices or y not in s.indices:
                    continue
                if counts[x] != 2 or counts[y] != 2:
                    continue
                value = self.atom_commutator(a, b)
                if value is None:
                    continue
                if value == ZERO:
                    return []
                out = []
                for c, st, o in self.terms(value):
                    out.append((coeff * c / 2, structs + st, merge_ops(ops[:k] + o + ops[k + 2:])))
                return out
        return None

    # ---------------------------------------------------------- ordering
    def _order_key(self, a: Expr, counts: Counter):
        p = atom_pattern(a)
        if p is None:
            return None
        rank = self.ctx.class_rank(p.name)
        if rank is None:
            return None
        idx = tuple(i if counts[i] == 1 else "~" for i in p.indices)
        return (rank, p.name, p.power, idx)

    def order_step(self, term):
        """Perform the leftmost available swap, or return None when ordered."""
        coeff, structs, ops = term
        if len(ops) < 2:
            return None
        counts = term_indices(structs, ops)
        for k in range(len(ops) - 1):
            a, b = ops[k], ops[k + 1]
            ka, kb = self._order_key(a, counts), self._order_key(b, counts)
            if ka is None or kb is None or not kb < ka:
                continue
            value = self.atom_commutator(a, b)
            if value is None:
                continue
            out = [(coeff, structs, merge_ops(ops[:k] + (b, a) + ops[k + 2:]))]
            if value != ZERO:
                for c, st, o in self.terms(value):
                    out.append((coeff * c, structs + st, merge_ops(ops[:k] + o + ops[k + 2:])))
            return out
        return None

    # ---------------------------------------------------------- canonical form
    def canonical(self, term):
        """Canonical dummy names and commuting-run order; None if the term vanishes."""
        coeff, structs, ops = term
        counts = term_indices(structs, ops)
        free = {i for i, n in counts.items() if n == 1}
        runs = self._runs(ops)
        choices = []
        for run in runs:
            items = sorted(run, key=lambda a: self._run_key(a, counts))
            groups = [list(g) for _, g in itertools.groupby(items, key=lambda a: self._run_key(a, counts))]
            choices.append([list(itertools.chain.from_iterable(p))
                            for p in itertools.product(*(self._perms(g) for g in groups))])
        best = None
        signs = set()
        total = 1
        for c in choices:
            total *= len(c)
        if total > 720:
            choices = [c[:1] for c in choices]
        for combo in itertools.product(*choices):
            cand_ops = tuple(itertools.chain.from_iterable(combo))
            sign, new_structs, new_ops = self._rename(structs, cand_ops, free)
            key = (tuple(_atom_key(a) for a in new_ops), tuple(_atom_key(s) for s in new_structs))
            if best is None or key < best[0]:
                best = (key, sign, new_structs, new_ops)
                signs = {sign}
            elif key == best[0]:
                signs.add(sign)
        if len(signs) > 1 or best[1] == 0:
            return None
        _, sign, new_structs, new_ops = best
        return (coeff * sign, new_structs, merge_ops(new_ops))

    @staticmethod
    def _perms(group):
        if len(group) == 1 or len(set(group)) == 1:
            return [group]
        return [list(p) for p in dict.fromkeys(itertools.permutations(group))]

    def _run_key(self, a: Expr, counts: Counter):
        p = atom_pattern(a)
        rank = self.ctx.class_rank(p.name) if p else None
        idx = tuple(i if counts[i] == 1 else "~" for i in (p.indices if p else ()))
        return (99 if rank is None else rank, p.name if p else render(a), p.power if p else 0, idx)

    def _runs(self, ops: tuple) -> list:
        runs: list = []
        for a in ops:
            if runs and atom_pattern(a) is not None and all(
                    atom_pattern(b) is not None and self.commutes(b, a) for b in runs[-1]):
                runs[-1].append(a)
            else:
                runs.append([a])
        return runs

    def _rename(self, structs, ops, free):
        order: list = []
        for a in ops:
            for i in all_indices(a):
                if i not in free and i not in order:
                    order.append(i)
        for s in sorted(structs, key=lambda s: (s.name, tuple(i if i in free else "~" for i in s.indices))):
            for i in s.indices:
                if i not in free and i not in order:
                    order.append(i)
        names = (x for x in self.ctx.index_alphabet if x not in free)
        mapping = {old: next(names) for old in order}
        new_ops = tuple(rename_indices(a, mapping) for a in ops)
        sign = 1
        new_structs = []
        for s in structs:
            idx = tuple(mapping.get(i, i) for i in s.indices)
            if s.name == "eps":
                sign *= _perm_sign(idx)
                idx = tuple(sorted(idx))
            elif s.name == "g":
                idx = tuple(sorted(idx))
            new_structs.append(Tensor(s.name, idx))
        new_structs.sort(key=_atom_key)
        return sign, tuple(new_structs), new_ops

    # ---------------------------------------------------------- driver
    def reduce_term(self, term, canonical: bool = True) -> list:
        c, s, o = term
        if canonical:
            t = self.canonical(term)
            if t is None:
                return []
            c, s, o = t
        done = [(c * fc, fs, fo) for (fs, fo), fc in self._normal_of((s, o), canonical).items()]
        if not canonical:
            return done
        out = []
        for t in done:
            t = self.canonical(t)
            if t is not None:
                out.append(t)
        return out

    def _normal_of(self, key, canonical: bool) -> dict:
        """Normal form of the unit monomial ``key``, memoized for the engine's lifetime.

        Depth-first with an explicit stack; a monomial that reappears while
        its own reduction is in progress means the rules loop. In canonical
        mode every intermediate monomial is renamed first, so monomials that
        differ only by dummy names share one reduction.
        """
        memo = self._normal.setdefault(canonical, {})
        stack = [(key, None)]
        active = set()
        steps = 0
        while stack:
            k, children = stack[-1]
            if children is None:
                if k in memo:
                    stack.pop()
                    continue
                steps += 1
                if steps > self.budget:
                    raise BudgetExceeded(f"rewrite budget of {self.budget} exhausted")
                t = (_ONE, k[0], k[1])
                nxt = self.contract(t)
                if nxt is None:
                    nxt = self.order_step(t)
                if nxt is None:
                    memo[k] = {k: _ONE}
                    stack.pop()
                    continue
                children = {}
                for t2 in nxt:
                    if canonical:
                        t2 = self.canonical(t2)
                        if t2 is None:
                            continue
                    c2, s2, o2 = t2
                    if c2 != 0:
                        children[(s2, o2)] = children.get((s2, o2), _ZERO) + c2
                stack[-1] = (k, children)
                active.add(k)
                for ck in children:
                    if ck in active:
                        raise BudgetExceeded("rewrite rules loop: a monomial regenerates itself")
                    if ck not in memo:
                        stack.append((ck, None))
                continue
            out: dict = {}
            for ck, cc in children.items():
                for fk, fc in memo[ck].items():
                    out[fk] = out.get(fk, _ZERO) + cc * fc
            memo[k] = {fk: fc for fk, fc in out.items() if fc != 0}
            active.discard(k)
            stack.pop()
        return memo[key]

    def normal_terms(self, e: Expr, canonical: bool = True) -> dict:
        acc: dict = {}
        work = list(self.terms(e))
        rounds = 0
        while work:
            for c, s, o in self.reduce_term(work.pop(), canonical):
                again = self.dummy_order_step((c, s, o)) if canonical else None
                if again is not None:
                    rounds += 1
                    if rounds > self.budget:
                        raise BudgetExceeded(f"rewrite budget of {self.budget} exhausted")
                    work.extend(again)
                    continue
                key = (s, o)
                acc[key] = acc.get(key, _ZERO) + c
        return acc

    def dummy_order_step(self, term):
        """Order adjacent same-kind operators by dummy name, once names are canonical.

        Dummies are invisible to the main ordering, so L[b]*L[a] and L[a]*L[b]
        would otherwise both count as ordered. Self-contracted pairs sort last.
        """
        coeff, structs, ops = term
        counts = term_indices(structs, ops)

        pats = [atom_pattern(x) for x in ops]

        def key(p):
            # squares like L[b]*L[b] go right, out of the way of other contractions
            within = Counter(i for q in pats if q and q.name == p.name for i in q.indices * q.power)
            return (any(counts[i] == 2 and within[i] == 2 for i in p.indices), p.indices)

        for k in range(len(ops) - 1):
            a, b = ops[k], ops[k + 1]
            ka, kb = self._order_key(a, counts), self._order_key(b, counts)
            if ka is None or ka != kb:
                continue
            pa, pb = atom_pattern(a), atom_pattern(b)
            if not key(pb) < key(pa):
                continue
            value = self.atom_commutator(a, b)
            if value is None or value == ZERO:
                # commuting runs are already ordered by canonical()
                continue
            out = [(coeff, structs, merge_ops(ops[:k] + (b, a) + ops[k + 2:]))]
            if value != ZERO:
                for c, st, o in self.terms(value):
                    out.append((coeff * c, structs + st, merge_ops(ops[:k] + o + ops[k + 2:])))
            return out
        return None

    def to_expr(self, acc: dict) -> Expr:
        rows = []
        for (s, o), c in acc.items():
            c = canonical_scalar(c)
            if c == 0:
                continue
            for mono in sp.Add.make_args(c):
                rows.append((s, o, mono))
        rows.sort(key=lambda r: (_degree(r[1]), tuple(_atom_key(a) for a in r[1]),
                                 tuple(_atom_key(a) for a in r[0]), sp.default_sort_key(r[2])))
        return add(*(mul(from_sympy(m), *s, *o) for s, o, m in rows))


def _oriented(a: Expr, b: Expr) -> tuple[int, Commutator]:
    """Residue [a, b] with the later operator class first, so [b, a] = -[a, b] cancels.

    Only commutators left over by evaluation are oriented; ones written
    inert by the user keep their order.
    """
    def key(x):
        # later class first, then names and indices ascending
        return tuple((-k[0],) + k[1:] for k in map(_atom_key, factors_of(x)))

    if key(b) < key(a):
        return -1, Commutator(b, a, inert=True)
    return 1, Commutator(a, b, inert=True)


def _degree(ops) -> int:
    d = 0
    for a in ops:
        f, k = _func_power(a)
        d += abs(k) if f is not None else 1
    return d


def _atom_key(a: Expr):
    p = atom_pattern(a)
    if p is not None:
        from .context import CLASS_ORDER

        rank = CLASS_ORDER.index(p.name) if p.name in CLASS_ORDER else 50
        return (rank, p.name, p.indices, p.power, "")
    return (90, type(a).__name__, (), 0, render(a))


# ------------------------------------------------------------ public API


def simplify(e, ctx: AlgebraContext, budget: int | None = None):
    """Normal form of an expression or of both sides of an equation."""
    if isinstance(e, Equation):
        return e.map(lambda s: simplify(s, ctx, budget))
    eng = Engine(ctx, budget)
    return eng.to_expr(eng.normal_terms(e))


def normal_order(e: Expr, ctx: AlgebraContext, budget: int | None = None) -> Expr:
    """Sort operator factors into class order without renaming dummies."""
    eng = Engine(ctx, budget)
    return eng.to_expr(eng.normal_terms(e, canonical=False))


def contract_metric(e: Expr) -> Expr:
    """Eliminate every metric factor that shares an index with the rest of its term."""
    from .context import base_context

    eng = Engine(base_context())
    out = []
    for t in eng.terms(e):
        stack = [t]
        while stack:
            term = stack.pop()
            step = eng.contract_metric(term)
            if step is None:
                c, st, o = term
                out.append(mul(from_sympy(c), *st, *o))
            else:
                stack.extend(step)
    return add(*out)


def epsilon_reduce(e: Expr) -> Expr:
    """Apply the eps-delta identity and kill eps against commuting symmetric pairs."""
    from .context import base_context

    eng = Engine(base_context())
    acc: dict = {}
    for t in eng.terms(e):
        for c, s, o in eng.reduce_term(t):
            acc[(s, o)] = acc.get((s, o), _ZERO) + c
    return eng.to_expr(acc)


def canonical_dummies(e: Expr) -> Expr:
    """Rename dummy indices per term in first-occurrence order."""
    from .context import base_context

    eng = Engine(base_context())
    out = []
    for t in (e.terms if isinstance(e, Add) else (e,)):
        term_parts = eng.terms(t)
        if len(term_parts) != 1:
            out.append(t)
            continue
        c, s, o = term_parts[0]
        counts = term_indices(s, o)
        free = {i for i, n in counts.items() if n == 1}
        sign, s2, o2 = eng._rename(s, o, free)
        out.append(mul(from_sympy(c * sign), *s2, *o2))
    return add(*out)


def equalize_repeated_indices(e):
    """Rename dummies so that terms equal up to dummy names merge."""
    if isinstance(e, Equation):
        return e.map(equalize_repeated_indices)
    return canonical_dummies(e)
