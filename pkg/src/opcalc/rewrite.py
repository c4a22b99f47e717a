"""User-directed transformations applied between simplify calls."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import sympy as sp

from .context import AlgebraContext, fresh_index
from .expr import (
    Add,
    Commutator,
    Dagger,
    Deriv,
    Equation,
    Expr,
    ExprError,
    Func,
    ImagUnit,
    Mul,
    Number,
    ONE,
    Pow,
    Scalar,
    Tensor,
    ZERO,
    BOX_INDEX,
    add,
    all_indices,
    deriv,
    factors_of,
    free_indices,
    is_position_field,
    is_scalar,
    mul,
    neg,
    power,
    rebuild,
    render,
    rename_indices,
    terms_of,
)
from .simplify import Engine, atom_pattern, canonical_dummies, from_sympy, simplify, to_sympy

ALPHABET = tuple("abcdefghijklmnopqrstuvwxyz")


class RewriteError(ExprError):
    pass


def _both(e, f):
    return e.map(f) if isinstance(e, Equation) else f(e)


# ------------------------------------------------------------ commutator


def commutator(a, b, ctx: AlgebraContext, budget: int | None = None) -> Equation:
    """Inert [a, b] on the left; its evaluated value on the right."""
    la, ra = (a.lhs, a.rhs) if isinstance(a, Equation) else (a, a)
    lb, rb = (b.lhs, b.rhs) if isinstance(b, Equation) else (b, b)
    lhs = Commutator(la, lb, inert=True)
    if atom_pattern(ra) is not None and atom_pattern(rb) is not None:
        # a stored rule is returned as written, keeping its dummy names
        value = _rule_value(ra, rb, ctx)
        if value is not None:
            return Equation(lhs, value)
    return Equation(lhs, simplify(Commutator(ra, rb), ctx, budget))


def _rule_value(a: Expr, b: Expr, ctx: AlgebraContext):
    if a == b:
        return ZERO
    eng = Engine(ctx)
    value = eng.atom_commutator(a, b)
    if value is None:
        return None
    fresh = [i for i in dict.fromkeys(all_indices(value)) if i.startswith("_")]
    if not fresh:
        return value
    used = set(all_indices(a)) | set(all_indices(b))
    for r in ctx.rules:
        if {r.left.name, r.right.name} == {atom_pattern(a).name, atom_pattern(b).name}:
            names = [i for i in dict.fromkeys(all_indices(r.template))
                     if i not in r.left.indices and i not in r.right.indices]
            if len(names) == len(fresh) and not used & set(names):
                return rename_indices(value, dict(zip(fresh, names)))
    names = (x for x in ctx.index_alphabet if x not in used)
    return rename_indices(value, {f: next(names) for f in fresh})


# ------------------------------------------------------------ index binding matcher


def _bind(p: str, t: str, b: dict) -> bool:
    if p in b:
        return b[p] == t
    if t in b.values():
        return False
    b[p] = t
    return True


def match(pat: Expr, tgt: Expr, binding: dict | None = None) -> dict | None:
    """Structural match allowing a consistent injective renaming of indices."""
    b = dict(binding or {})
    return b if _match(pat, tgt, b) else None


def _match(p: Expr, t: Expr, b: dict) -> bool:
    if type(p) is not type(t):
        return False
    if isinstance(p, (Number, Scalar, ImagUnit, Func)):
        return p == t
    if isinstance(p, Tensor):
        if p.name != t.name or len(p.indices) != len(t.indices):
            return False
        return all(_bind(x, y, b) for x, y in zip(p.indices, t.indices))
    if isinstance(p, Pow):
        return p.exp == t.exp and _match(p.base, t.base, b)
    if isinstance(p, (Mul, Add)):
        if len(p.args) != len(t.args):
            return False
        return all(_match(x, y, b) for x, y in zip(p.args, t.args))
    if isinstance(p, Commutator):
        return p.inert == t.inert and _match(p.a, t.a, b) and _match(p.b, t.b, b)
    if isinstance(p, Dagger):
        return _match(p.arg, t.arg, b)
    if isinstance(p, Deriv):
        if len(p.indices) != len(t.indices):
            return False
        for perm in dict.fromkeys(itertools.permutations(t.indices)):
            trial = dict(b)
            if all(_bind(x, y, trial) for x, y in zip(p.indices, perm)) and _match(p.target, t.target, trial):
                b.clear()
                b.update(trial)
                return True
        return False
    return p == t


def _fresh_names(avoid: Iterable[str]):
    avoid = set(avoid)
    for x in ALPHABET:
        if x not in avoid:
            yield x
    while True:
        yield fresh_index()


def _instantiate(rhs: Expr, lhs: Expr, binding: dict, avoid: Iterable[str]) -> Expr:
    """rhs with the match binding applied and its own dummies made fresh."""
    mapping = dict(binding)
    names = _fresh_names(set(avoid) | set(binding.values()))
    for i in dict.fromkeys(all_indices(rhs)):
        if i not in mapping:
            mapping[i] = next(names)
    if isinstance(avoid, set):
        # later replacements in the same pass must not reuse these names
        avoid.update(mapping.values())
    return rename_indices(rhs, mapping)


# ------------------------------------------------------------ scalar / operator split


def split_scalar(term: Expr) -> tuple[Expr, list[Expr]]:
    """(commuting non-structural scalar part, remaining factors in order)."""
    sc, rest = [], []
    for f in factors_of(term):
        if is_scalar(f) and not any(isinstance(x, Tensor) for x in _walk_tensors(f)):
            sc.append(f)
        else:
            rest.append(f)
    return mul(*sc), rest


def _walk_tensors(e: Expr):
    from .expr import walk

    return (x for x in walk(e) if isinstance(x, Tensor))


def _ratio(a: Expr, b: Expr):
    return sp.simplify(to_sympy(a) / to_sympy(b))


# ------------------------------------------------------------ substitute_tensor


def substitute_tensor(identities: Sequence[Equation] | Equation, target, max_rounds: int = 50):
    """Replace occurrences of each identity's lhs by its rhs, to a fixed point."""
    if isinstance(identities, Equation):
        identities = [identities]
    for ident in identities:
        if not isinstance(ident, Equation):
            raise RewriteError("substitute_tensor expects equations")
    return _both(target, lambda e: _substitute_expr(list(identities), e, max_rounds))


def _substitute_expr(identities, e: Expr, max_rounds: int) -> Expr:
    for _ in range(max_rounds):
        before = e
        for ident in identities:
            if ident.lhs == ident.rhs:
                continue
            lhs = ident.lhs
            if isinstance(lhs, Mul) and any(isinstance(f, Add) for f in lhs.factors):
                # c*(A + B) is matched as the sub-sum c*A + c*B
                lhs = _expand(lhs)
            e = _subst(e, lhs, ident.rhs, set(all_indices(e)))
        if e == before:
            return e
    return e


def _subst(e: Expr, lhs: Expr, rhs: Expr, avoid: set) -> Expr:
    b = match(lhs, e)
    if b is not None:
        return _instantiate(rhs, lhs, b, avoid)
    if isinstance(e, Mul) and not isinstance(lhs, Add):
        hit = _subst_run(e, lhs, rhs, avoid)
        if hit is not None:
            return hit
    if isinstance(e, Add) and isinstance(lhs, Add):
        hit = _subst_sum(e, lhs, rhs, avoid)
        if hit is not None:
            return hit
    return rebuild(e, lambda x: _subst(x, lhs, rhs, avoid))


def _subst_run(e: Mul, lhs: Expr, rhs: Expr, avoid: set):
    lsc, lpat = split_scalar(lhs)
    esc, efs = split_scalar(e)
    pstructs = [f for f in lpat if isinstance(f, Tensor) and is_scalar(f)]
    pops = [f for f in lpat if f not in pstructs]
    estructs = [f for f in efs if isinstance(f, Tensor) and is_scalar(f)]
    eops = [f for f in efs if f not in estructs]
    n = len(pops)
    if n == 0:
        return None
    # position fields commute, so any reordering of such a run is the same product
    for ops in itertools.chain([eops], _position_variants(eops)):
        for start in range(len(ops) - n + 1):
            b: dict = {}
            if not all(_match(p, t, b) for p, t in zip(pops, ops[start:start + n])):
                continue
            b = _match_structs(pstructs, estructs, b)
            if b is None:
                continue
            used, rest_structs = b
            new = _instantiate(rhs, lhs, used, avoid)
            scale = mul(esc, power(lsc, -1)) if lsc != ONE else esc
            return mul(scale, *rest_structs, *ops[:start], new, *ops[start + n:])
    return None


def _position_variants(ops: list, limit: int = 720):
    """Reorderings of ``ops`` that permute runs of commuting position fields."""
    runs, k = [], 0
    while k < len(ops):
        j = k
        while j < len(ops) and is_position_field(ops[j]) and not is_scalar(ops[j]):
            j += 1
        if j - k > 1:
            runs.append((k, j))
        k = max(j, k + 1)
    if not runs:
        return
    choices = [list(dict.fromkeys(itertools.permutations(ops[a:b]))) for a, b in runs]
    for count, pick in enumerate(itertools.product(*choices)):
        if count >= limit:
            return
        out = list(ops)
        for (a, b), seg in zip(runs, pick):
            out[a:b] = seg
        if out != ops:
            yield out


def _match_structs(pats, structs, b):
    if not pats:
        return b, list(structs)
    for k, s in enumerate(structs):
        trial = dict(b)
        if _match(pats[0], s, trial):
            got = _match_structs(pats[1:], structs[:k] + structs[k + 1:], trial)
            if got is not None:
                return got
    return None


def _subst_sum(e: Add, lhs: Add, rhs: Expr, avoid: set):
    """Replace a sub-sum lam*(lhs terms) where lam may carry eps/g factors."""
    pats = [_split_structs(t) for t in lhs.terms]
    tgts = [_split_structs(t) for t in e.terms]

    def search(k, b, lam, structs, used):
        if k == len(pats):
            return b, lam, structs, used
        pc, ps, pf = pats[k]
        for j, (tc, ts, tf) in enumerate(tgts):
            if j in used:
                continue
            if ps:
                got = _match_structs(ps, ts, dict(b))
                if got is None:
                    continue
                trial, rest = got
            else:
                trial, rest = dict(b), ts
            if structs is not None and sorted(map(repr, rest)) != sorted(map(repr, structs)):
                continue
            trial = match(mul(*pf), mul(*tf), trial)
            if trial is None:
                continue
            r = _ratio(tc, pc)
            if lam is not None and sp.simplify(r - lam) != 0:
                continue
            got = search(k + 1, trial, r if lam is None else lam, rest, used | {j})
            if got is not None:
                return got
        return None

    got = search(0, {}, None, None, frozenset())
    if got is None:
        return None
    b, lam, structs, used = got
    new = mul(from_sympy(lam), *structs, _instantiate(rhs, lhs, b, avoid))
    return add(*(t for j, t in enumerate(e.terms) if j not in used), new)


def _split_structs(term: Expr):
    c, fs = split_scalar(term)
    structs = [f for f in fs if isinstance(f, Tensor) and is_scalar(f)]
    return c, structs, [f for f in fs if f not in structs]


# ------------------------------------------------------------ substitute_tensor_indices


def substitute_tensor_indices(renaming: dict | Sequence[tuple[str, str]], target):
    """Rename free indices; clashing dummies are refreshed first."""
    pairs = list(renaming.items()) if isinstance(renaming, dict) else list(renaming)
    for src, dst in pairs:
        target = _rename_free(src, dst, target)
    return target


def _rename_free(src: str, dst: str, target):
    free = set(free_indices(target))
    if src not in free or src == dst:
        return target
    if dst in free:
        raise RewriteError(f"index {dst} is already free")

    def side(e: Expr) -> Expr:
        out = []
        for t in terms_of(e):
            idx = all_indices(t)
            if dst in idx:
                new = next(_fresh_names(set(idx) | free | {dst}))
                t = rename_indices(t, {dst: new})
            out.append(rename_indices(t, {src: dst}))
        return add(*out)

    return _both(target, side)


# ------------------------------------------------------------ expand / normal


def expand(e):
    """Distribute products over sums and expand positive integer powers of sums."""
    return _both(e, _expand)


def _expand(e: Expr) -> Expr:
    if isinstance(e, Add):
        return add(*(_expand(t) for t in e.terms))
    if isinstance(e, Mul):
        acc = [ONE]
        for f in e.factors:
            parts = terms_of(_expand(f))
            acc = [_times(x, y) for x in acc for y in parts]
        return add(*acc)
    if isinstance(e, Pow):
        base = _expand(e.base)
        k = e.exp
        if isinstance(base, Add) and k.denominator == 1 and k > 0 and not is_scalar(base):
            acc = [ONE]
            for _ in range(int(k)):
                acc = [_times(x, y) for x in acc for y in base.terms]
            return add(*acc)
        return power(base, k)
    if isinstance(e, Commutator):
        return Commutator(_expand(e.a), _expand(e.b), e.inert)
    if isinstance(e, Deriv):
        return deriv(e.indices, _expand(e.target))
    return e


def _dummies(e: Expr) -> set:
    counts: dict = {}
    for i in all_indices(e):
        counts[i] = counts.get(i, 0) + 1
    return {i for i, n in counts.items() if n >= 2}


def _times(x: Expr, y: Expr) -> Expr:
    """Product of two terms with colliding dummies of ``y`` renamed."""
    clash = _dummies(y) & set(all_indices(x))
    if clash:
        names = _fresh_names(set(all_indices(x)) | set(all_indices(y)))
        y = rename_indices(y, {i: next(names) for i in sorted(clash)})
    return mul(x, y)


def collect(e: Expr) -> Expr:
    """Combine terms whose non-scalar parts coincide; operator order untouched."""
    acc: dict = {}
    for t in terms_of(_expand(e)):
        sc, rest = split_scalar(t)
        key = mul(*rest)
        acc[key] = acc.get(key, 0) + to_sympy(sc)
    out = []
    for key, c in acc.items():
        c = sp.factor(sp.expand(c))
        if c != 0:
            out.append(mul(from_sympy(c), key))
    return add(*out)


def normal(e):
    """Collect terms over a common commutative denominator."""
    return _both(e, _normal)


def _normal(e: Expr) -> Expr:
    acc: dict = {}
    for t in terms_of(_expand(e)):
        sc, rest = split_scalar(t)
        key = mul(*rest)
        acc[key] = acc.get(key, 0) + to_sympy(sc)
    items = [(k, sp.together(sp.expand(c))) for k, c in acc.items()]
    items = [(k, c) for k, c in items if c != 0]
    if not items:
        return ZERO
    den = sp.Integer(1)
    for _, c in items:
        den = sp.lcm(den, sp.denom(c))
    terms = [mul(from_sympy(sp.expand(c * den)), k) for k, c in items]
    if den == 1:
        return add(*terms)
    return mul(from_sympy(1 / den), add(*terms))


# ------------------------------------------------------------ sort_products


@dataclass(frozen=True)
class FactorPattern:
    name: str
    index: str | None = None
    power: int = 1

    @classmethod
    def of(cls, e: Expr) -> "FactorPattern":
        k = 1
        if isinstance(e, Pow):
            if e.exp.denominator != 1:
                raise RewriteError(f"bad order pattern {render(e)}")
            e, k = e.base, int(e.exp)
        if isinstance(e, Tensor):
            return cls(e.name, e.indices[0] if len(e.indices) == 1 else None, k)
        if isinstance(e, Func):
            return cls(e.name, None, k)
        raise RewriteError(f"bad order pattern {render(e)}")

    def matches(self, base: Expr, k: int) -> bool:
        name = base.name if isinstance(base, (Tensor, Func)) else None
        if name != self.name or k != self.power:
            return False
        if self.index is not None:
            return isinstance(base, Tensor) and base.indices == (self.index,)
        return True


@dataclass(frozen=True)
class ProductOrderSpec:
    patterns: tuple

    @classmethod
    def of(cls, items: Sequence) -> "ProductOrderSpec":
        return cls(tuple(p if isinstance(p, FactorPattern) else FactorPattern.of(p) for p in items))

    def rank(self, base: Expr, k: int):
        for n, p in enumerate(self.patterns):
            if p.matches(base, k):
                return n
        return None


def _group(ops: Sequence[Expr]) -> list:
    """Atoms to (base, power) factors, merging adjacent equal atoms."""
    out: list = []
    for a in ops:
        base, k = (a.base, int(a.exp)) if isinstance(a, Pow) else (a, 1)
        if out and out[-1][0] == base:
            out[-1] = (base, out[-1][1] + k)
        else:
            out.append((base, k))
    return out


def _ungroup(fs) -> tuple:
    out = []
    for base, k in fs:
        if isinstance(base, Func):
            out.append(base if k == 1 else Pow(base, Fraction(k)))
        else:
            out.extend([base] * k)
    return tuple(out)


def sort_products(e, spec, ctx: AlgebraContext, budget: int | None = None):
    """Move factors matching ``spec`` into its order, adding commutator corrections."""
    if not isinstance(spec, ProductOrderSpec):
        spec = ProductOrderSpec.of(spec)
    return _both(e, lambda x: _sort_expr(x, spec, ctx, budget))


def _sort_expr(e: Expr, spec: ProductOrderSpec, ctx: AlgebraContext, budget):
    eng = Engine(ctx, budget)
    stack = list(reversed(eng.terms(e)))
    done: dict = {}
    steps = 0
    while stack:
        c, s, o = stack.pop()
        if c == 0:
            continue
        steps += 1
        if steps > eng.budget:
            raise RewriteError("sort budget exhausted")
        fs = _group(o)
        move = _next_swap(fs, spec)
        if move is None:
            key = (s, _ungroup(fs))
            done[key] = done.get(key, 0) + c
            continue
        k = move
        (a, ka), (b, kb) = fs[k], fs[k + 1]
        left, right = _ungroup(fs[:k]), _ungroup(fs[k + 2:])
        wa, wb = _ungroup([(a, ka)]), _ungroup([(b, kb)])
        corr = eng._word_commutator(wa, wb)
        for _, _, ow in corr:
            if any(isinstance(x, Commutator) and x.inert for x in ow):
                raise RewriteError(f"no rule to swap {render(mul(*wa))} and {render(mul(*wb))}")
        stack.append((c, s, left + wb + wa + right))
        for cc, sc, oc in corr:
            stack.append((c * cc, s + sc, left + oc + right))
    return _assemble(done, eng)


def _next_swap(fs, spec: ProductOrderSpec):
    ranks = [spec.rank(b, k) for b, k in fs]
    for j, rj in enumerate(ranks):
        if rj is None:
            continue
        if any(ri is not None and ri > rj for ri in ranks[:j]):
            return j - 1
    return None


def _assemble(done: dict, eng: Engine) -> Expr:
    acc: dict = {}
    for (s, o), c in done.items():
        for c2, s2, o2 in _tidy(c, s, o, eng):
            acc[(s2, o2)] = acc.get((s2, o2), 0) + c2
    out = []
    for (s, o), c in acc.items():
        c = sp.expand(c)
        if c == 0:
            continue
        for mono in sp.Add.make_args(c):
            out.append(mul(from_sympy(mono), *s, *o))
    return add(*out)


def _tidy(c, s, o, eng: Engine) -> list:
    """Drop vanishing epsilons, contract metrics and give engine dummies letter names."""
    if any(t.name == "eps" and len(set(t.indices)) < 3 for t in s):
        return []
    step = eng.contract_metric((c, s, o))
    if step is not None:
        return [t for x in step for t in _tidy(*x, eng)]
    idx = [i for t in s + o for i in all_indices(t)]
    engine_made = [i for i in dict.fromkeys(idx) if i.startswith("_") and i != BOX_INDEX]
    if engine_made:
        names = _fresh_names(idx)
        m = {i: next(names) for i in engine_made}
        s = tuple(rename_indices(t, m) for t in s)
        o = tuple(rename_indices(t, m) for t in o)
    return [(c, s, o)]


# ------------------------------------------------------------ isolate


def isolate(eq: Equation, target: Expr, ctx: AlgebraContext | None = None) -> Equation:
    """Solve ``eq`` for ``target``, which must appear linearly."""
    diff = _expand(add(eq.lhs, neg(eq.rhs)))
    if isinstance(target, Scalar) and is_scalar(diff) and not any(True for _ in _walk_tensors(diff)):
        sym = to_sympy(target, ctx)
        sols = sp.solve(to_sympy(diff, ctx), sym)
        if len(sols) != 1:
            raise RewriteError(f"{render(target)} has {len(sols)} solutions")
        return Equation(target, from_sympy(sp.factor(sols[0])))
    coeff = 0
    rest = []
    key = canonical_dummies(target)
    for t in terms_of(diff):
        sc, fs = split_scalar(t)
        if fs and canonical_dummies(mul(*fs)) == key:
            coeff += to_sympy(sc, ctx)
        else:
            rest.append(t)
    coeff = sp.simplify(coeff)
    if coeff == 0:
        raise RewriteError(f"{render(target)} does not occur as a lone summand")
    remaining = add(*rest)
    if _occurs(target, remaining):
        raise RewriteError(f"{render(target)} occurs nonlinearly or under an operator coefficient")
    return Equation(target, collect(mul(from_sympy(-1 / coeff), remaining)))


def _occurs(target: Expr, e: Expr) -> bool:
    from .expr import walk

    if isinstance(target, Mul):
        return False
    return any(match(target, x) is not None for x in walk(e))


# ------------------------------------------------------------ factor


def factor(e, ctx: AlgebraContext | None = None):
    """Best-effort factorization; returns the input unchanged on failure.

    Without a context only exact (order-preserving) splits are accepted.
    """
    from .context import base_context

    ctx = ctx or base_context()
    return _both(e, lambda x: _factor(x, ctx))


def _factor(e: Expr, ctx: AlgebraContext, retry: bool = True) -> Expr:
    terms = terms_of(_expand(e))
    if len(terms) < 2:
        return e
    parts = [split_scalar(t) for t in terms]
    coeffs = [to_sympy(c) for c, _ in parts]
    g = coeffs[0]
    for c in coeffs[1:]:
        g = sp.gcd(g, c)
    if g == 0:
        return e
    if sp.expand(coeffs[0] / g).could_extract_minus_sign():
        g = -g
    coeffs = [sp.expand(c / g) for c in coeffs]
    bodies = [list(fs) for _, fs in parts]
    # common left and right factors
    left: list = []
    while all(bodies) and all(b[0] == bodies[0][0] for b in bodies):
        left.append(bodies[0][0])
        bodies = [b[1:] for b in bodies]
    right: list = []
    while all(bodies) and all(b[-1] == bodies[0][-1] for b in bodies):
        right.insert(0, bodies[0][-1])
        bodies = [b[:-1] for b in bodies]
    inner = add(*(mul(from_sympy(c), *b) for c, b in zip(coeffs, bodies)))
    split = _bilinear(list(zip(coeffs, bodies)), ctx, inner)
    if split is not None:
        inner = split
    elif not left and not right and retry:
        # commuting factors may hide a common factor; retry on the normal form
        try:
            canon = simplify(e, ctx)
        except ExprError:
            canon = e
        if canon != e:
            again = _factor(canon, ctx, retry=False)
            if isinstance(again, Mul) and any(isinstance(f, Add) for f in again.factors):
                return again
    return mul(from_sympy(g), *left, inner, *right)


def _shadow(fs) -> tuple:
    return tuple(sorted(render(f) for f in fs))


def _splits(fs):
    """(left, right) sub-multisets with right of size 1..3, not splitting a dummy pair."""
    n = len(fs)
    for size in range(1, min(3, n - 1) + 1):
        for pick in itertools.combinations(range(n), size):
            r = [fs[i] for i in pick]
            l = [fs[i] for i in range(n) if i not in pick]
            if set(_idx(l)) & set(_idx(r)):
                continue
            yield l, r


def _idx(fs):
    out = []
    for f in fs:
        out.extend(all_indices(f))
    return out


def _primitive(pairs):
    """(content, sum) with the content chosen to leave the simplest coefficients."""
    best = None
    for c0, _ in pairs:
        coeffs = [sp.simplify(c / c0) for c, _ in pairs]
        cost = sum(sp.count_ops(c) + (0 if sp.denom(c) == 1 else 5) for c in coeffs)
        if best is None or cost < best[0]:
            best = (cost, c0, coeffs)
    _, c0, coeffs = best
    return c0, add(*(mul(from_sympy(c), *fs) for c, (_, fs) in zip(coeffs, pairs)))


def _bilinear(terms, ctx, inner):
    """Find inner = A * B with A, B sums over small monomial bases (rank one)."""
    atoms = []
    for c, b in terms:
        expanded = []
        for f in b:
            if isinstance(f, Pow) and isinstance(f.base, Tensor) and f.exp.denominator == 1:
                expanded.extend([f.base] * int(f.exp))
            else:
                expanded.append(f)
        atoms.append((c, expanded))
    table = {}
    for c, fs in atoms:
        table[_shadow(fs)] = table.get(_shadow(fs), 0) + c
    if len(terms) < 4 or not atoms[0][1]:
        return None
    for l0, r0 in _splits(atoms[0][1]):
        lefts = {}
        rights = {_shadow(r0): (r0, sp.Integer(1))}
        for c, fs in atoms:
            for l, r in _splits(fs):
                if _shadow(r) == _shadow(r0):
                    lefts.setdefault(_shadow(l), (l, c))
        if len(lefts) < 2:
            continue
        for c, fs in atoms:
            for l, r in _splits(fs):
                if _shadow(l) in lefts and _shadow(r) not in rights:
                    ul = lefts[_shadow(l)][1]
                    v = sp.simplify(c / ul)
                    ok = all(sp.simplify(table.get(_shadow(list(ll) + list(r)), 0) - uu * v) == 0
                             for ll, uu in lefts.values())
                    if ok:
                        rights[_shadow(r)] = (r, v)
        if len(rights) < 2 or len(lefts) * len(rights) != len(table):
            continue
        ca, A = _primitive([(u, l) for l, u in lefts.values()])
        cb, B = _primitive([(v, r) for r, v in rights.values()])
        scale = from_sympy(sp.simplify(ca * cb))
        for cand in (mul(scale, A, B), mul(scale, B, A)):
            try:
                if simplify(add(_expand(cand), neg(inner)), ctx) == ZERO:
                    return cand
            except ExprError:
                return None
    return None
