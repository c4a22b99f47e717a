"""Immutable expression trees for noncommutative tensor operator algebra.

Nodes are hashable values.  The module-level constructors ``add``, ``mul`` and
``power`` return canonically flattened trees; the node classes themselves do
no normalisation and should only be built directly by code that already
guarantees the invariants.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Iterator, Mapping, Sequence

STRUCTURAL = ("eps", "g")
DEFAULT_SCALARS = ("hbar", "kappa", "m_e", "E", "j", "n")
DEFAULT_FUNCS = ("V", "G", "H")
DEFAULT_ARITY = {"eps": 3, "g": 2, "X": 1, "p": 1, "L": 1, "Z": 1, "M": 1, "J": 1, "K": 1}


class ExprError(ValueError):
    pass


class IndexError_(ExprError):
    """Raised for malformed Einstein index structure."""


class Expr:
    __slots__ = ("args", "_hash")

    def _init(self, args):
        self.args = args
        self._hash = hash((type(self).__name__,) + args)

    def __hash__(self):
        return self._hash

    def __eq__(self, other):
        if self is other:
            return True
        return type(self) is type(other) and self._hash == other._hash and self.args == other.args

    def __ne__(self, other):
        return not self == other

    def __repr__(self):
        return f"{type(self).__name__}<{render(self)}>"

    def __str__(self):
        return render(self)

    # arithmetic sugar; equations get their own operators
    def __add__(self, other):
        return add(self, _lift(other))

    def __radd__(self, other):
        return add(_lift(other), self)

    def __sub__(self, other):
        return add(self, neg(_lift(other)))

    def __rsub__(self, other):
        return add(_lift(other), neg(self))

    def __mul__(self, other):
        return mul(self, _lift(other))

    def __rmul__(self, other):
        return mul(_lift(other), self)

    def __truediv__(self, other):
        return mul(self, power(_lift(other), -1))

    def __rtruediv__(self, other):
        return mul(_lift(other), power(self, -1))

    def __neg__(self):
        return neg(self)

    def __pow__(self, k):
        return power(self, k)


def _lift(x) -> Expr:
    if isinstance(x, (Expr, Equation)):
        return x
    if isinstance(x, (int, Fraction)):
        return Number(x)
    raise TypeError(f"cannot use {type(x).__name__} as an expression")


class Number(Expr):
    __slots__ = ()

    def __init__(self, value):
        self._init((Fraction(value),))

    @property
    def value(self) -> Fraction:
        return self.args[0]


class Scalar(Expr):
    """A commuting real symbol such as hbar or m_e."""

    __slots__ = ()

    def __init__(self, name: str):
        self._init((name,))

    @property
    def name(self) -> str:
        return self.args[0]


class ImagUnit(Expr):
    __slots__ = ()

    def __init__(self):
        self._init(())


class Add(Expr):
    __slots__ = ()

    def __init__(self, terms: Sequence[Expr]):
        self._init(tuple(terms))

    @property
    def terms(self) -> tuple:
        return self.args


class Mul(Expr):
    __slots__ = ()

    def __init__(self, factors: Sequence[Expr]):
        self._init(tuple(factors))

    @property
    def factors(self) -> tuple:
        return self.args


class Pow(Expr):
    __slots__ = ()

    def __init__(self, base: Expr, exp):
        self._init((base, Fraction(exp)))

    @property
    def base(self) -> Expr:
        return self.args[0]

    @property
    def exp(self) -> Fraction:
        return self.args[1]


class Tensor(Expr):
    __slots__ = ()

    def __init__(self, name: str, indices: Sequence[str] = ()):
        self._init((name, tuple(indices)))

    @property
    def name(self) -> str:
        return self.args[0]

    @property
    def indices(self) -> tuple:
        return self.args[1]


class Func(Expr):
    """Operator-valued atom with a suppressed argument, e.g. V(X), G(X), H."""

    __slots__ = ()

    def __init__(self, name: str):
        self._init((name,))

    @property
    def name(self) -> str:
        return self.args[0]


class Commutator(Expr):
    __slots__ = ()

    def __init__(self, a: Expr, b: Expr, inert: bool = False):
        self._init((a, b, bool(inert)))

    @property
    def a(self) -> Expr:
        return self.args[0]

    @property
    def b(self) -> Expr:
        return self.args[1]

    @property
    def inert(self) -> bool:
        return self.args[2]


class Dagger(Expr):
    __slots__ = ()

    def __init__(self, arg: Expr):
        self._init((arg,))

    @property
    def arg(self) -> Expr:
        return self.args[0]


class Deriv(Expr):
    """Partial derivatives d_i d_j ... applied to ``target``."""

    __slots__ = ()

    def __init__(self, indices: Sequence[str], target: Expr):
        self._init((tuple(indices), target))

    @property
    def indices(self) -> tuple:
        return self.args[0]

    @property
    def target(self) -> Expr:
        return self.args[1]


BOX_INDEX = "_box"


def deriv(indices: Sequence[str], target: Expr) -> Expr:
    """Derivative node with nested derivatives flattened and indices sorted."""
    idx = list(indices)
    while isinstance(target, Deriv):
        idx.extend(target.indices)
        target = target.args[1]
    if not idx:
        return target
    return Deriv(tuple(sorted(idx)), target)


ZERO = Number(0)
ONE = Number(1)
I = ImagUnit()


@dataclass(frozen=True)
class Equation:
    lhs: Expr
    rhs: Expr

    def __str__(self):
        return render(self)

    def map(self, f: Callable[[Expr], Expr]) -> "Equation":
        return Equation(f(self.lhs), f(self.rhs))

    def swap(self) -> "Equation":
        return Equation(self.rhs, self.lhs)

    def __add__(self, other):
        return eq_arith(self, "add", other)

    def __sub__(self, other):
        return eq_arith(self, "sub", other)

    def __mul__(self, other):
        return eq_arith(self, "mul", other)

    def __rmul__(self, other):
        return eq_arith(_lift(other), "mul", self)

    def __truediv__(self, other):
        return eq_arith(self, "div", other)

    def __pow__(self, k):
        return eq_arith(self, "pow", k)

    def __neg__(self):
        return self.map(neg)


# ---------------------------------------------------------------- predicates


def is_scalar(e: Expr) -> bool:
    """True when ``e`` commutes with everything (c-number valued)."""
    if isinstance(e, (Number, Scalar, ImagUnit)):
        return True
    if isinstance(e, Tensor):
        return e.name in STRUCTURAL
    if isinstance(e, Pow):
        return is_scalar(e.base)
    if isinstance(e, (Add, Mul)):
        return all(is_scalar(a) for a in e.args)
    return False


def is_position_field(e: Expr) -> bool:
    """True for commuting functions of position built from X, V and scalars."""
    for x in walk(e):
        if isinstance(x, Tensor) and x.name not in STRUCTURAL and x.name != "X":
            return False
        if isinstance(x, Func) and x.name != "V":
            return False
        if isinstance(x, (Commutator, Dagger, Deriv)):
            return False
    return True


def is_number(e: Expr) -> bool:
    return isinstance(e, Number)


def _is_symbolic_scalar(e: Expr) -> bool:
    # scalars other than numbers, i and structural tensors
    return is_scalar(e) and not isinstance(e, (Number, ImagUnit)) and not isinstance(e, Tensor)


# -------------------------------------------------------------- constructors


def neg(e: Expr) -> Expr:
    if isinstance(e, Add):
        return add(*(neg(t) for t in e.terms))
    return mul(Number(-1), e)


def _scalar_key(e: Expr) -> tuple:
    if isinstance(e, Scalar):
        return (0, e.name, "")
    if isinstance(e, Pow) and isinstance(e.base, Scalar):
        return (0, e.base.name, str(e.exp))
    if isinstance(e, Pow) and isinstance(e.base, Number):
        return (1, str(e.base.value), str(e.exp))
    return (2, render(e), "")


def _split_power(e: Expr) -> tuple[Expr, Fraction]:
    if isinstance(e, Pow):
        return e.base, e.exp
    return e, Fraction(1)


def mul(*factors: Expr) -> Expr:
    coeff = Fraction(1)
    ipow = 0
    scalars: dict[Expr, Fraction] = {}
    structs: list[Expr] = []
    ops: list[Expr] = []

    def push(f: Expr):
        nonlocal coeff, ipow
        if isinstance(f, Mul):
            for g in f.factors:
                push(g)
        elif isinstance(f, Number):
            coeff *= f.value
        elif isinstance(f, ImagUnit):
            ipow += 1
        elif isinstance(f, Tensor) and f.name in STRUCTURAL:
            structs.append(f)
        elif _is_symbolic_scalar(f):
            base, k = _split_power(f)
            scalars[base] = scalars.get(base, Fraction(0)) + k
        elif isinstance(f, Equation):
            raise ExprError("use eq_arith to combine equations")
        else:
            base, k = _split_power(f)
            if ops:
                pb, pk = _split_power(ops[-1])
                if pb == base and k.denominator == 1 and pk.denominator == 1:
                    ops.pop()
                    if pk + k != 0:
                        ops.append(Pow(base, pk + k) if pk + k != 1 else base)
                    return
            ops.append(f)

    for f in factors:
        push(_lift(f))
    scalar_out: list[Expr] = []
    for base in sorted(scalars, key=_scalar_key):
        k = scalars[base]
        if k == 0:
            continue
        p = power(base, k)
        if isinstance(p, Number):
            coeff *= p.value
        elif isinstance(p, ImagUnit):
            ipow += 1
        elif isinstance(p, Mul):
            for g in p.factors:
                if isinstance(g, Number):
                    coeff *= g.value
                elif isinstance(g, ImagUnit):
                    ipow += 1
                else:
                    scalar_out.append(g)
        else:
            scalar_out.append(p)
    if coeff == 0:
        return ZERO
    ipow %= 4
    if ipow >= 2:
        coeff = -coeff
        ipow -= 2
    out: list[Expr] = []
    if coeff != 1:
        out.append(Number(coeff))
    if ipow:
        out.append(I)
    out.extend(sorted(scalar_out, key=_scalar_key))
    out.extend(sorted(structs, key=render))
    out.extend(ops)
    if not out:
        return ONE
    if len(out) == 1:
        return out[0]
    return Mul(out)


def coeff_and_rest(e: Expr) -> tuple[Fraction, Expr]:
    """Split the rational prefactor from a product."""
    if isinstance(e, Number):
        return e.value, ONE
    if isinstance(e, Mul) and isinstance(e.factors[0], Number):
        rest = e.factors[1:]
        return e.factors[0].value, rest[0] if len(rest) == 1 else Mul(rest)
    return Fraction(1), e


def add(*terms: Expr) -> Expr:
    flat: list[Expr] = []

    def push(t: Expr):
        if isinstance(t, Add):
            for u in t.terms:
                push(u)
        elif isinstance(t, Equation):
            raise ExprError("use eq_arith to combine equations")
        else:
            flat.append(t)

    for t in terms:
        push(_lift(t))
    acc: dict[Expr, Fraction] = {}
    for t in flat:
        c, rest = coeff_and_rest(t)
        acc[rest] = acc.get(rest, Fraction(0)) + c
    out = [mul(Number(c), rest) for rest, c in acc.items() if c != 0]
    if not out:
        return ZERO
    if len(out) == 1:
        return out[0]
    return Add(out)


def _root_of_rational(q: Fraction, k: Fraction):
    """Exact q**k if rational, else None."""
    if k.denominator == 1:
        return q ** int(k)
    if q < 0:
        return None
    num = _int_root(q.numerator, k.denominator)
    den = _int_root(q.denominator, k.denominator)
    if num is None or den is None:
        return None
    return Fraction(num, den) ** k.numerator


def _int_root(n: int, d: int):
    r = round(n ** (1.0 / d)) if n else 0
    for c in (r - 1, r, r + 1):
        if c >= 0 and c**d == n:
            return c
    return None


def power(base: Expr, k) -> Expr:
    base = _lift(base)
    k = Fraction(k)
    if k == 0:
        return ONE
    if k == 1:
        return base
    if isinstance(base, Number):
        if base.value == 0:
            if k < 0:
                raise ExprError("division by zero")
            return ZERO
        r = _root_of_rational(base.value, k)
        return Number(r) if r is not None else Pow(base, k)
    if isinstance(base, ImagUnit) and k.denominator == 1:
        return mul(*([I] * (int(k) % 4))) if int(k) % 4 else ONE
    if isinstance(base, Pow) and k.denominator == 1 and not isinstance(base.base, Tensor):
        return power(base.base, base.exp * k)
    if isinstance(base, Mul) and k.denominator == 1 and all(is_scalar(f) for f in base.factors):
        return mul(*(power(f, k) for f in base.factors))
    if isinstance(base, Mul) and k.denominator == 1 and k < 0:
        # (AB)^-1 = B^-1 A^-1
        return mul(*(power(f, k) for f in reversed(base.factors)))
    if not is_scalar(base) and k.denominator != 1 and not is_position_field(base):
        raise ExprError(f"non-integer power of operator {render(base)}")
    return Pow(base, k)


def sum_of(terms: Iterable[Expr]) -> Expr:
    return add(*terms)


def terms_of(e: Expr) -> tuple:
    return e.terms if isinstance(e, Add) else (e,)


def factors_of(e: Expr) -> tuple:
    return e.factors if isinstance(e, Mul) else (e,)


# -------------------------------------------------------------------- walking


def rebuild(e: Expr, f: Callable[[Expr], Expr]) -> Expr:
    """Apply ``f`` to the direct children of ``e`` and reconstruct canonically."""
    if isinstance(e, Add):
        return add(*(f(t) for t in e.terms))
    if isinstance(e, Mul):
        return mul(*(f(t) for t in e.factors))
    if isinstance(e, Pow):
        return power(f(e.base), e.exp)
    if isinstance(e, Commutator):
        return Commutator(f(e.a), f(e.b), e.inert)
    if isinstance(e, Dagger):
        return dagger_node(f(e.arg))
    if isinstance(e, Deriv):
        return deriv(e.indices, f(e.target))
    return e


def dagger_node(x: Expr) -> Expr:
    if isinstance(x, Dagger):
        return x.arg
    return Dagger(x)


def walk(e: Expr) -> Iterator[Expr]:
    yield e
    if isinstance(e, (Add, Mul)):
        for a in e.args:
            yield from walk(a)
    elif isinstance(e, Pow):
        yield from walk(e.base)
    elif isinstance(e, Commutator):
        yield from walk(e.a)
        yield from walk(e.b)
    elif isinstance(e, Dagger):
        yield from walk(e.arg)
    elif isinstance(e, Deriv):
        yield from walk(e.target)


def contains(e: Expr, pred: Callable[[Expr], bool]) -> bool:
    return any(pred(x) for x in walk(e))


def rename_indices(e: Expr, mapping: Mapping[str, str]) -> Expr:
    if not mapping:
        return e
    if isinstance(e, Tensor):
        return Tensor(e.name, tuple(mapping.get(i, i) for i in e.indices))
    if isinstance(e, Deriv):
        return deriv(tuple(mapping.get(i, i) for i in e.indices), rename_indices(e.target, mapping))
    return rebuild(e, lambda x: rename_indices(x, mapping))


def all_indices(e: Expr) -> list[str]:
    """Every index occurrence in reading order; integer powers repeat their base."""
    if isinstance(e, Tensor):
        return list(e.indices)
    if isinstance(e, Deriv):
        return list(e.indices) + all_indices(e.target)
    if isinstance(e, Pow):
        inner = all_indices(e.base)
        k = e.exp
        return inner * abs(int(k)) if k.denominator == 1 else inner
    out: list[str] = []
    for a in e.args:
        if isinstance(a, Expr):
            out.extend(all_indices(a))
    return out


# ------------------------------------------------------------------- indices


@dataclass(frozen=True)
class IndexClassification:
    free: tuple[str, ...]
    dummy: tuple[str, ...]
    positions: Mapping[str, tuple[int, ...]] = field(default_factory=dict)


def _occurrences(e: Expr) -> Counter:
    """Free-index occurrence counts of a single term; raises on triple use."""
    if isinstance(e, Tensor):
        c = Counter(e.indices)
    elif isinstance(e, Deriv):
        c = Counter(e.indices) + _free_counter(e.target)
    elif isinstance(e, (Mul, Commutator)):
        c = Counter()
        for a in (e.factors if isinstance(e, Mul) else (e.a, e.b)):
            c.update(_free_counter(a))
    elif isinstance(e, Pow):
        inner = _free_counter(e.base)
        n = abs(int(e.exp)) if e.exp.denominator == 1 else 1
        c = Counter({k: v * n for k, v in inner.items()})
    elif isinstance(e, Dagger):
        c = _free_counter(e.arg)
    elif isinstance(e, Add):
        return _free_counter(e)
    else:
        c = Counter()
    bad = [k for k, v in c.items() if v > 2]
    if bad:
        raise IndexError_(f"index {bad[0]} repeated more than twice in {render(e)}")
    return c


def _free_counter(e: Expr) -> Counter:
    if isinstance(e, Add):
        sets = set()
        for t in e.terms:
            f = frozenset(k for k, v in _occurrences(t).items() if v == 1)
            if not isinstance(t, Number) and not _is_constant(t):
                sets.add(f)
        if len(sets) > 1:
            raise IndexError_(f"inconsistent free indices in {render(e)}")
        return Counter(next(iter(sets))) if sets else Counter()
    return Counter({k: 1 for k, v in _occurrences(e).items() if v == 1})


def _is_constant(e: Expr) -> bool:
    return not all_indices(e)


def classify_indices(term: Expr) -> IndexClassification:
    counts = _occurrences(term)
    positions: dict[str, list[int]] = {}
    for pos, i in enumerate(all_indices(term)):
        if counts.get(i):
            positions.setdefault(i, []).append(pos)
    free = tuple(sorted(k for k, v in counts.items() if v == 1))
    dummy = tuple(sorted(k for k, v in counts.items() if v == 2))
    return IndexClassification(free, dummy, {k: tuple(v) for k, v in positions.items()})


def free_indices(e: Expr | Equation) -> tuple[str, ...]:
    if isinstance(e, Equation):
        return tuple(sorted(set(free_indices(e.lhs)) | set(free_indices(e.rhs))))
    return tuple(sorted(_free_counter(e)))


def check_indices(e: Expr | Equation) -> None:
    if isinstance(e, Equation):
        check_indices(e.lhs)
        check_indices(e.rhs)
        if ZERO not in (e.lhs, e.rhs) and set(free_indices(e.lhs)) != set(free_indices(e.rhs)):
            raise IndexError_("free indices differ between the sides of the equation")
        return
    _free_counter(e)


# ------------------------------------------------------------ substitutions


def subs_syntactic(rule: Equation, target):
    """Replace every structural occurrence of ``rule.lhs`` in ``target``.

    A product lhs also matches a contiguous run of factors inside a larger
    product.  No index renaming is performed.
    """
    if isinstance(target, Equation):
        return target.map(lambda t: subs_syntactic(rule, t))
    lhs, rhs = rule.lhs, rule.rhs
    if lhs == rhs:
        return target
    return _subs(target, lhs, rhs)


def _subs(e: Expr, lhs: Expr, rhs: Expr) -> Expr:
    if e == lhs:
        return rhs
    if isinstance(e, Mul) and isinstance(lhs, Mul):
        hit = _subs_run(e, lhs, rhs)
        if hit is not None:
            return hit
    if isinstance(e, Add) and isinstance(lhs, Add):
        hit = _subs_sum(e, lhs, rhs)
        if hit is not None:
            return hit
    return rebuild(e, lambda x: _subs(x, lhs, rhs))


def _expand_powers(fs: Sequence[Expr]) -> list[Expr]:
    out = []
    for f in fs:
        if isinstance(f, Pow) and f.exp.denominator == 1 and f.exp > 0 and not is_scalar(f.base):
            out.extend([f.base] * int(f.exp))
        else:
            out.append(f)
    return out


def _subs_run(e: Mul, lhs: Mul, rhs: Expr):
    lc, lrest = coeff_and_rest(lhs)
    pat = _expand_powers(factors_of(lrest))
    fs = _expand_powers(e.factors)
    ec, _ = coeff_and_rest(e)
    pat_sc = [f for f in pat if is_scalar(f)]
    pat_op = [f for f in pat if not is_scalar(f)]
    sc = [f for f in fs if is_scalar(f) and not isinstance(f, Number)]
    ops = [f for f in fs if not is_scalar(f)]
    pool = list(sc)
    for f in pat_sc:
        if f in pool:
            pool.remove(f)
        else:
            return None
    n = len(pat_op)
    for start in range(len(ops) - n + 1):
        if ops[start:start + n] == pat_op:
            new_ops = ops[:start] + [mul(Number(1 / lc) if lc != 1 else ONE, rhs)] + ops[start + n:]
            new_ops = [_subs(f, lhs, rhs) for f in new_ops]
            return mul(Number(ec), *pool, *new_ops)
    return None


def _subs_sum(e: Add, lhs: Add, rhs: Expr):
    rest = list(e.terms)
    for t in lhs.terms:
        if t in rest:
            rest.remove(t)
        else:
            return None
    return add(rhs, *(_subs(t, lhs, rhs) for t in rest))


# --------------------------------------------------------------- arithmetic


def eq_arith(a, op: str, b):
    """Side-wise arithmetic between equations and expressions."""
    if op not in ("add", "sub", "mul", "div", "pow"):
        raise ExprError(f"unknown equation operation {op}")
    if op == "pow":
        k = b.value if isinstance(b, Number) else Fraction(b)
        if not isinstance(a, Equation):
            return power(a, k)
        if not ((k.denominator == 1 and k > 0) or (is_scalar(a.lhs) and is_scalar(a.rhs))):
            raise ExprError("equation powers need a positive integer exponent or scalar sides")
        return a.map(lambda s: power(s, k))
    if not isinstance(b, (Expr, Equation)):
        b = _lift(b)
    if op == "div":
        divisor_sides = (b.lhs, b.rhs) if isinstance(b, Equation) else (b,)
        for d in divisor_sides:
            _check_invertible(d)
    fn = {
        "add": lambda x, y: add(x, y),
        "sub": lambda x, y: add(x, neg(y)),
        "mul": lambda x, y: mul(x, y),
        "div": lambda x, y: mul(x, power(y, -1)),
    }[op]
    if isinstance(a, Equation) and isinstance(b, Equation):
        return Equation(fn(a.lhs, b.lhs), fn(a.rhs, b.rhs))
    if isinstance(a, Equation):
        return a.map(lambda s: fn(s, b))
    if isinstance(b, Equation):
        return b.map(lambda s: fn(a, s))
    return fn(a, b)


def _check_invertible(d: Expr) -> None:
    if d == ZERO:
        raise ExprError("division by zero")
    for f in factors_of(d):
        base, _ = _split_power(f)
        if is_scalar(base) or (isinstance(base, Func) and base.name in ("G", "V")):
            continue
        if isinstance(base, Pow) and is_position_field(base) and not free_indices(base):
            # radial powers such as (X_l^2)^q
            continue
        raise ExprError(f"cannot divide by non-invertible {render(d)}")


# ------------------------------------------------------------------ dagger


def dagger(e, ctx):
    """Hermitian conjugate: antilinear and order reversing."""
    if isinstance(e, Equation):
        return e.map(lambda s: dagger(s, ctx))
    if isinstance(e, (Number, Scalar)):
        return e
    if isinstance(e, ImagUnit):
        return neg(I)
    if isinstance(e, Add):
        return add(*(dagger(t, ctx) for t in e.terms))
    if isinstance(e, Mul):
        return mul(*(dagger(f, ctx) for f in reversed(e.factors)))
    if isinstance(e, Pow):
        return power(dagger(e.base, ctx), e.exp)
    if isinstance(e, Dagger):
        return e.arg
    if isinstance(e, Commutator):
        if e.inert:
            return Dagger(e)
        return Commutator(dagger(e.b, ctx), dagger(e.a, ctx))
    if isinstance(e, Tensor):
        if e.name in STRUCTURAL:
            return e
        return e if _hermitian(ctx, e.name) else Dagger(e)
    if isinstance(e, Func):
        return e if _hermitian(ctx, e.name) else Dagger(e)
    if isinstance(e, Deriv):
        return e if _hermitian(ctx, _deriv_head(e)) else Dagger(e)
    raise ExprError(f"cannot conjugate {render(e)}")


def _deriv_head(e: Deriv) -> str:
    t = e.target
    while isinstance(t, Pow):
        t = t.base
    return t.name if isinstance(t, (Func, Tensor)) else "?"


def _hermitian(ctx, name: str) -> bool:
    flag = ctx.is_hermitian(name)
    if flag is None:
        raise ExprError(f"operator {name} is not declared")
    return flag


# ------------------------------------------------------------------- parser


class ParseError(ExprError):
    def __init__(self, message: str, pos: int):
        super().__init__(f"{message} at position {pos}")
        self.pos = pos


_PUNCT = "[](),+-*/^=%"


def tokenize(text: str) -> list[tuple[str, str, int]]:
    toks = []
    i = 0
    while i < len(text):
        c = text[i]
        if c.isspace():
            i += 1
        elif c.isdigit():
            j = i
            while j < len(text) and text[j].isdigit():
                j += 1
            toks.append(("num", text[i:j], i))
            i = j
        elif c.isalpha() or c == "_":
            j = i
            while j < len(text) and (text[j].isalnum() or text[j] == "_"):
                j += 1
            toks.append(("id", text[i:j], i))
            i = j
        elif c in _PUNCT:
            toks.append(("op", c, i))
            i += 1
        else:
            raise ParseError(f"unexpected character {c!r}", i)
    toks.append(("end", "", len(text)))
    return toks


class Parser:
    """Recursive-descent parser for the expression grammar.

    ``funcs`` maps extra call names to Python callables so that script layers
    can reuse the grammar for verbs like ``Simplify(...)``; ``ref`` resolves
    ``(N)`` label references and ``%`` when given.
    """

    def __init__(self, text: str, *, scalars=DEFAULT_SCALARS, opfuncs=DEFAULT_FUNCS,
                 arity: Mapping[str, int] | None = None, funcs: Mapping[str, Callable] | None = None,
                 ref: Callable[[str], object] | None = None):
        self.text = text
        self.toks = tokenize(text)
        self.pos = 0
        self.scalars = set(scalars)
        self.opfuncs = set(opfuncs)
        self.arity = dict(DEFAULT_ARITY if arity is None else arity)
        self.funcs = dict(funcs or {})
        self.ref = ref

    def peek(self, k=0):
        return self.toks[min(self.pos + k, len(self.toks) - 1)]

    def next(self):
        t = self.toks[self.pos]
        self.pos += 1
        return t

    def expect(self, val):
        t = self.next()
        if t[1] != val or t[0] == "num":
            raise ParseError(f"expected {val!r}", t[2])
        return t

    def at(self, val):
        t = self.peek()
        return t[0] == "op" and t[1] == val

    def parse(self):
        value = self.equation()
        t = self.peek()
        if t[0] != "end":
            raise ParseError(f"unexpected {t[1]!r}", t[2])
        return value

    def equation(self):
        lhs = self.sum()
        if self.at("="):
            self.next()
            rhs = self.sum()
            if isinstance(lhs, Equation) or isinstance(rhs, Equation):
                raise ParseError("nested equation", self.peek()[2])
            return Equation(lhs, rhs)
        return lhs

    def sum(self):
        v = self.product()
        while self.at("+") or self.at("-"):
            op = self.next()[1]
            w = self.product()
            v = eq_arith(v, "add" if op == "+" else "sub", w)
        return v

    def product(self):
        v = self.unary()
        while self.at("*") or self.at("/"):
            op = self.next()[1]
            w = self.unary()
            v = eq_arith(v, "mul" if op == "*" else "div", w)
        return v

    def unary(self):
        if self.at("-"):
            self.next()
            v = self.unary()
            return eq_arith(Number(-1), "mul", v)
        if self.at("+"):
            self.next()
            return self.unary()
        return self.pow()

    def pow(self):
        base = self.primary()
        if self.at("^"):
            t = self.next()
            ex = self.unary()
            if not isinstance(ex, Number):
                raise ParseError("exponent must be a rational number", t[2])
            try:
                return eq_arith(base, "pow", ex)
            except ExprError as err:
                raise ParseError(str(err), t[2]) from None
        return base

    def args(self):
        self.expect("(")
        out = []
        if not self.at(")"):
            out.append(self.equation())
            while self.at(","):
                self.next()
                out.append(self.equation())
        self.expect(")")
        return out

    def index_list(self):
        self.expect("[")
        out = []
        while True:
            t = self.next()
            if t[0] not in ("id", "num"):
                raise ParseError("expected index", t[2])
            out.append(t[1])
            if self.at(","):
                self.next()
                continue
            break
        self.expect("]")
        return out

    def primary(self):
        t = self.peek()
        if t[0] == "num":
            self.next()
            return Number(int(t[1]))
        if t[0] == "op" and t[1] == "(":
            # label reference (N)
            if self.ref is not None and self.peek(1)[0] == "num" and self.peek(2)[1] == ")":
                self.next()
                n = self.next()[1]
                self.next()
                return self.ref(n)
            self.next()
            v = self.equation()
            self.expect(")")
            return v
        if t[0] == "op" and t[1] == "%":
            self.next()
            nt = self.peek()
            if nt[0] == "id" and nt[1] == "Commutator":
                self.next()
                a = self.args()
                if len(a) != 2:
                    raise ParseError("Commutator takes two arguments", nt[2])
                return Commutator(a[0], a[1], inert=True)
            if self.ref is not None:
                return self.ref("%")
            raise ParseError("'%' is only valid before Commutator here", t[2])
        if t[0] == "id":
            self.next()
            name = t[1]
            if name == "d_" and self.at("["):
                idx = self.index_list()
                a = self.args()
                if len(a) != 1:
                    raise ParseError("d_ takes one argument", t[2])
                return _apply_side(a[0], lambda x: deriv(idx, x))
            if name == "Box" and self.at("("):
                a = self.args()
                if len(a) != 1:
                    raise ParseError("Box takes one argument", t[2])
                return _apply_side(a[0], lambda x: deriv((BOX_INDEX, BOX_INDEX), x))
            if self.at("["):
                idx = self.index_list()
                want = self.arity.get(name)
                if want is not None and want != len(idx):
                    raise ParseError(f"{name} expects {want} indices, got {len(idx)}", t[2])
                return Tensor(name, idx)
            if name in self.funcs and self.at("("):
                a = self.args()
                try:
                    return self.funcs[name](*a)
                except ParseError:
                    raise
                except ExprError as err:
                    raise ParseError(str(err), t[2]) from None
            if name == "Commutator" and self.at("("):
                a = self.args()
                if len(a) != 2:
                    raise ParseError("Commutator takes two arguments", t[2])
                return Commutator(a[0], a[1])
            if name == "Dagger" and self.at("("):
                a = self.args()
                if len(a) != 1:
                    raise ParseError("Dagger takes one argument", t[2])
                return _apply_side(a[0], dagger_node)
            if name == "i":
                return I
            if name in self.scalars:
                if self.at("(") and self.peek(1)[0] == "id" and self.peek(2)[1] == ")":
                    # a scalar function value such as E(n) is an opaque symbol
                    arg = self.peek(1)[1]
                    self.pos += 3
                    return Scalar(f"{name}({arg})")
                return Scalar(name)
            if name in self.opfuncs or name[:1].isupper():
                if self.at("(") and self.peek(1)[1] == "X" and self.peek(2)[1] == ")":
                    self.pos += 3
                if name in self.arity and self.arity[name] > 0:
                    raise ParseError(f"{name} expects {self.arity[name]} indices", t[2])
                return Func(name)
            raise ParseError(f"unknown symbol {name!r}", t[2])
        raise ParseError(f"unexpected {t[1] or 'end of input'!r}", t[2])


def _apply_side(v, f):
    if isinstance(v, Equation):
        return v.map(f)
    return f(v)


def parse(text: str, **kw):
    """Parse an expression or a top-level equation ``lhs = rhs``."""
    value = Parser(text, **kw).parse()
    if isinstance(value, (Expr, Equation)):
        try:
            check_indices(value)
        except IndexError_ as err:
            raise ParseError(str(err), 0) from None
    return value


# ----------------------------------------------------------------- rendering


def _is_negative(e: Expr) -> bool:
    c, _ = coeff_and_rest(e)
    return c < 0


def _fmt_exp(k: Fraction, latex=False) -> str:
    if latex:
        return str(k) if k.denominator == 1 else f"{k.numerator}/{k.denominator}"
    if k.denominator == 1 and k > 0:
        return str(k)
    return f"({k})"


def render(e, fmt: str = "plain") -> str:
    if fmt == "latex":
        return _latex(e)
    if fmt != "plain":
        raise ExprError(f"unknown format {fmt}")
    return _plain(e)


def _plain(e) -> str:
    if isinstance(e, Equation):
        return f"{_plain(e.lhs)} = {_plain(e.rhs)}"
    if isinstance(e, Number):
        return str(e.value)
    if isinstance(e, Scalar):
        return e.name
    if isinstance(e, ImagUnit):
        return "i"
    if isinstance(e, Tensor):
        return f"{e.name}[{','.join(e.indices)}]" if e.indices else e.name
    if isinstance(e, Func):
        return e.name
    if isinstance(e, Commutator):
        head = "%Commutator" if e.inert else "Commutator"
        return f"{head}({_plain(e.a)}, {_plain(e.b)})"
    if isinstance(e, Dagger):
        return f"Dagger({_plain(e.arg)})"
    if isinstance(e, Deriv):
        idx = list(e.indices)
        inner = _plain(e.target)
        for i in sorted({i for i in idx if idx.count(i) == 2}):
            idx.remove(i)
            idx.remove(i)
            inner = f"Box({inner})"
        return f"d_[{','.join(idx)}]({inner})" if idx else inner
    if isinstance(e, Add):
        out = _plain(e.terms[0])
        for t in e.terms[1:]:
            if _is_negative(t):
                m = neg(t)
                out += " - " + (f"({_plain(m)})" if isinstance(m, Add) else _plain(m))
            else:
                out += " + " + _plain(t)
        return out
    if isinstance(e, Pow):
        return f"{_atom_plain(e.base)}^{_fmt_exp(e.exp)}"
    if isinstance(e, Mul):
        return _mul_plain(e)
    raise ExprError(f"cannot render {type(e).__name__}")


def _factor_plain(e: Expr) -> str:
    s = _plain(e)
    if isinstance(e, Add) or (isinstance(e, Number) and (e.value < 0 or e.value.denominator != 1)):
        return f"({s})"
    return s


def _atom_plain(e: Expr) -> str:
    s = _plain(e)
    if isinstance(e, (Add, Mul, Pow)) or (isinstance(e, Number) and (e.value < 0 or e.value.denominator != 1)):
        return f"({s})"
    return s


def _split_fraction(e: Mul):
    c, rest = coeff_and_rest(e)
    num, den = [], []
    for f in factors_of(rest):
        if isinstance(f, Pow) and f.exp < 0 and is_scalar(f.base):
            den.append(power(f.base, -f.exp))
        else:
            num.append(f)
    return c, num, den


def _mul_plain(e: Mul) -> str:
    c, num, den = _split_fraction(e)
    sign = "-" if c < 0 else ""
    c = abs(c)
    nparts = [_factor_plain(f) for f in num]
    if c.numerator != 1 or not nparts:
        nparts.insert(0, str(c.numerator))
    dparts = [_factor_plain(f) for f in den]
    if c.denominator != 1:
        dparts.insert(0, str(c.denominator))
    out = sign + "*".join(nparts)
    if dparts:
        out += "/" + (dparts[0] if len(dparts) == 1 else "(" + "*".join(dparts) + ")")
    return out


_LATEX_NAMES = {"hbar": r"\hbar", "kappa": r"\kappa", "m_e": "m_{e}", "eps": r"\varepsilon"}


def _latex(e) -> str:
    if isinstance(e, Equation):
        return f"{_latex(e.lhs)} = {_latex(e.rhs)}"
    if isinstance(e, Number):
        v = e.value
        if v.denominator == 1:
            return str(v)
        s = "-" if v < 0 else ""
        return rf"{s}\frac{{{abs(v.numerator)}}}{{{v.denominator}}}"
    if isinstance(e, Scalar):
        return _LATEX_NAMES.get(e.name, e.name)
    if isinstance(e, ImagUnit):
        return "i"
    if isinstance(e, Tensor):
        name = _LATEX_NAMES.get(e.name, e.name)
        return f"{name}_{{{' '.join(e.indices)}}}" if e.indices else name
    if isinstance(e, Func):
        return e.name
    if isinstance(e, Commutator):
        return f"[{_latex(e.a)}, {_latex(e.b)}]_{{-}}"
    if isinstance(e, Dagger):
        return f"{{{_latex(e.arg)}}}^{{\\dagger}}"
    if isinstance(e, Deriv):
        idx = list(e.indices)
        boxes = 0
        # contracted pairs print as the box operator
        while True:
            pair = next((i for i in idx if idx.count(i) == 2), None)
            if pair is None:
                break
            idx.remove(pair)
            idx.remove(pair)
            boxes += 1
        inner = _latex(e.target)
        for _ in range(boxes):
            inner = rf"\Box({inner})"
        if not idx:
            return inner
        return rf"\partial_{{{' '.join(idx)}}}({inner})"
    if isinstance(e, Add):
        out = _latex(e.terms[0])
        for t in e.terms[1:]:
            if _is_negative(t):
                m = neg(t)
                out += " - " + (f"\\left({_latex(m)}\\right)" if isinstance(m, Add) else _latex(m))
            else:
                out += " + " + _latex(t)
        return out
    if isinstance(e, Pow):
        base = _latex(e.base)
        if isinstance(e.base, (Add, Mul, Pow)) or (isinstance(e.base, Number) and e.base.value < 0):
            base = f"\\left({base}\\right)"
        elif isinstance(e.base, Tensor):
            base = f"{{{base}}}"
        if e.exp == Fraction(1, 2):
            return rf"\sqrt{{{_latex(e.base)}}}"
        return f"{base}^{{{_fmt_exp(e.exp, latex=True)}}}"
    if isinstance(e, Mul):
        c, num, den = _split_fraction(e)
        sign = "-" if c < 0 else ""
        c = abs(c)

        def part(f):
            s = _latex(f)
            return f"\\left({s}\\right)" if isinstance(f, Add) else s

        n = " ".join(part(f) for f in num)
        if c.numerator != 1 or not n:
            n = f"{c.numerator} {n}".strip()
        d = " ".join(part(f) for f in den)
        if c.denominator != 1:
            d = f"{c.denominator} {d}".strip()
        if d:
            return rf"{sign}\frac{{{n}}}{{{d}}}"
        return sign + n
    raise ExprError(f"cannot render {type(e).__name__}")
