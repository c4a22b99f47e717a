"""Algebra context: declarations, commutator rules, assumptions.

Every mutator returns a new context; nothing here is modified in place.
"""

from __future__ import annotations

import itertools
import string
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Iterable, Sequence

from .expr import (
    Commutator,
    Equation,
    Expr,
    ExprError,
    Func,
    Pow,
    Tensor,
    ZERO,
    all_indices,
    free_indices,
    neg,
    render,
    rename_indices,
    walk,
)

OPERATOR, CNUMBER, STRUCTURAL = "operator", "c-number", "structural"
NO_SYMMETRY, ANTISYMMETRIC, SYMMETRIC = "none", "antisymmetric", "symmetric"

# canonical class order used by normal ordering
CLASS_ORDER = ("X", "V", "p", "L", "Z", "M", "J", "K", "H")

KNOWN_SCALARS = ("hbar", "kappa", "m_e", "E", "j", "n")


class ContextError(ExprError):
    pass


@dataclass(frozen=True)
class TensorDecl:
    name: str
    arity: int | None = 1
    kind: str = OPERATOR
    symmetry: str = NO_SYMMETRY
    hermitian: bool = False
    diff_coords: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.kind not in (OPERATOR, CNUMBER, STRUCTURAL):
            raise ContextError(f"unknown tensor kind {self.kind}")
        if self.diff_coords is not None and self.kind != OPERATOR:
            raise ContextError("only operators can act as differential operators")

    def compatible(self, other: "TensorDecl") -> bool:
        a = replace(self, arity=other.arity) if self.arity is None else self
        b = replace(other, arity=self.arity) if other.arity is None else other
        return replace(a, diff_coords=None) == replace(b, diff_coords=None)


@dataclass(frozen=True)
class AtomPattern:
    """One side of a commutator rule: a symbol, its index variables, a power."""

    name: str
    indices: tuple[str, ...] = ()
    power: int = 1

    @staticmethod
    def of(e: Expr) -> "AtomPattern":
        k = 1
        if isinstance(e, Pow):
            if e.exp.denominator != 1 or e.exp < 1:
                raise ContextError(f"rule powers must be positive integers: {render(e)}")
            k = int(e.exp)
            e = e.base
        if isinstance(e, Tensor):
            return AtomPattern(e.name, e.indices, k)
        if isinstance(e, Func):
            return AtomPattern(e.name, (), k)
        raise ContextError(f"rule side must be a declared symbol or its power: {render(e)}")

    def key(self) -> tuple[str, int]:
        return (self.name, self.power)


@dataclass(frozen=True)
class CommutatorRule:
    left: AtomPattern
    right: AtomPattern
    template: Expr

    @staticmethod
    def from_equation(eq: Equation) -> "CommutatorRule":
        lhs = eq.lhs
        if not isinstance(lhs, Commutator):
            raise ContextError(f"rule lhs must be a commutator: {render(eq)}")
        left, right = AtomPattern.of(lhs.a), AtomPattern.of(lhs.b)
        bound = set(left.indices) | set(right.indices)
        loose = set(free_indices(eq.rhs)) - bound
        if loose:
            raise ContextError(f"template index {sorted(loose)[0]} is not bound by the rule pattern")
        return CommutatorRule(left, right, eq.rhs)

    def as_equation(self) -> Equation:
        def atom(p: AtomPattern) -> Expr:
            base = Tensor(p.name, p.indices) if p.indices else Func(p.name)
            return base if p.power == 1 else Pow(base, p.power)

        return Equation(Commutator(atom(self.left), atom(self.right), inert=True), self.template)

    def pair_key(self) -> frozenset:
        return frozenset((self.left.key(), self.right.key()))


_fresh_counter = itertools.count()


def fresh_index() -> str:
    """A dummy name that cannot clash with user indices; renamed away later."""
    return f"_{next(_fresh_counter)}"


def _template_dummies(r: "CommutatorRule") -> tuple[str, ...]:
    bound = set(r.left.indices) | set(r.right.indices)
    return tuple(dict.fromkeys(i for i in all_indices(r.template) if i not in bound))


def _bind(pattern: AtomPattern, indices: Sequence[str], out: dict) -> bool:
    if len(pattern.indices) != len(indices):
        return False
    for var, idx in zip(pattern.indices, indices):
        if out.setdefault(var, idx) != idx:
            return False
    return True


@dataclass(frozen=True)
class AlgebraContext:
    dimension: int = 3
    metric: str = "euclidean"
    index_alphabet: str = string.ascii_lowercase
    decls: tuple[TensorDecl, ...] = ()
    rules: tuple[CommutatorRule, ...] = ()
    real_objects: tuple[str, ...] = ()
    assumptions: tuple[tuple[str, str], ...] = ()
    identities: tuple[Equation, ...] = ()
    diffops: tuple[tuple[str, tuple[str, ...]], ...] = ()
    explicit_momentum: bool = False
    budget: int = 10_000
    settings: tuple[tuple[str, str], ...] = field(default=(), compare=False)

    # --- lookups
    @cached_property
    def _decl_map(self) -> dict:
        return {d.name: d for d in self.decls}

    @cached_property
    def _rule_map(self) -> dict:
        out: dict = {}
        for r in self.rules:
            out.setdefault(r.pair_key(), []).append(r)
        return out

    def decl(self, name: str) -> TensorDecl | None:
        return self._decl_map.get(name)

    def is_hermitian(self, name: str) -> bool | None:
        d = self.decl(name)
        if d is None:
            return None
        return d.hermitian or d.kind != OPERATOR

    def arities(self) -> dict[str, int]:
        return {d.name: d.arity for d in self.decls if d.arity}

    def scalar_names(self) -> tuple[str, ...]:
        return tuple(dict.fromkeys(KNOWN_SCALARS + self.real_objects))

    def sign_of(self, name: str) -> str | None:
        for n, s in self.assumptions:
            if n == name:
                return s
        return None

    def is_diffop(self, name: str) -> bool:
        return any(n == name for n, _ in self.diffops)

    def class_rank(self, name: str) -> int | None:
        try:
            return CLASS_ORDER.index(name)
        except ValueError:
            return None

    def lookup(self, a: AtomPattern, b: AtomPattern, keep_dummies: bool = False) -> Expr | None:
        """Instantiated value of [a, b], or None when no rule covers the pair.

        Dummy indices of the template are replaced by fresh names, or with
        ``keep_dummies`` keep their written names unless those clash.
        """
        for r in self._rule_map.get(frozenset((a.key(), b.key())), ()):
            for sign, (pa, pb) in ((1, (r.left, r.right)), (-1, (r.right, r.left))):
                if pa.key() != a.key() or pb.key() != b.key():
                    continue
                binding: dict = {}
                if _bind(pa, a.indices, binding) and _bind(pb, b.indices, binding):
                    taken = set(a.indices) | set(b.indices)
                    for i in _template_dummies(r):
                        binding[i] = i if keep_dummies and i not in taken else fresh_index()
                    t = rename_indices(r.template, binding) if binding else r.template
                    return t if sign == 1 else neg(t)
        if a.name == b.name and (a.indices == b.indices or a.name in ("X",) or not a.indices):
            return ZERO
        return None

    def rule_equations(self) -> list[Equation]:
        return [r.as_equation() for r in self.rules]


def _merge_decl(decls: tuple, d: TensorDecl) -> tuple:
    for k, old in enumerate(decls):
        if old.name == d.name:
            if not old.compatible(d):
                raise ContextError(f"conflicting redeclaration of {d.name}")
            merged = replace(old, arity=old.arity if old.arity is not None else d.arity,
                             diff_coords=old.diff_coords or d.diff_coords)
            return decls[:k] + (merged,) + decls[k + 1:]
    return decls + (d,)


BASE_DECLS = (
    TensorDecl("eps", 3, STRUCTURAL, ANTISYMMETRIC, True),
    TensorDecl("g", 2, STRUCTURAL, SYMMETRIC, True),
    TensorDecl("X", 1, OPERATOR, NO_SYMMETRY, True),
    TensorDecl("G", 0, OPERATOR, NO_SYMMETRY, False),
)


def base_context() -> AlgebraContext:
    """Euclidean 3-space with eps, g, X and the test function G."""
    return AlgebraContext(decls=BASE_DECLS)


def setup(*, dimension: int = 3, metric: str = "euclidean", indices: str = "lowercaselatin",
          real: Iterable[str] = (), hermitian: Iterable[str] = (), quantum: Iterable[str] = (),
          rules: Iterable[Equation] = (), base: AlgebraContext | None = None) -> AlgebraContext:
    if dimension != 3:
        raise ContextError("only dimension 3 is supported")
    if metric.lower() != "euclidean":
        raise ContextError("only the Euclidean metric is supported")
    if indices != "lowercaselatin":
        raise ContextError("only lowercase latin indices are supported")
    ctx = base or base_context()
    real = tuple(real)
    hermitian, quantum = tuple(hermitian), tuple(quantum)
    rules = list(rules)
    arity = _rule_arities(rules)
    decls = ctx.decls
    for name in hermitian:
        decls = _merge_decl(decls, TensorDecl(name, arity.get(name), OPERATOR, NO_SYMMETRY, True))
    for name in quantum:
        decls = _merge_decl(decls, TensorDecl(name, arity.get(name), OPERATOR, NO_SYMMETRY, False))
    settings = (
        ("dimension", str(dimension)),
        ("metric", "Euclidean"),
        ("spacetimeindices", "lowercaselatin"),
        ("realobjects", "{" + ", ".join(real) + "}"),
        ("hermitianoperators", "{" + ", ".join(hermitian) + "}"),
        ("quantumoperators", "{" + ", ".join(quantum) + "}"),
    )
    ctx = replace(ctx, decls=decls, real_objects=tuple(dict.fromkeys(ctx.real_objects + real)),
                  settings=settings)
    return add_rules(ctx, rules)


def _rule_arities(rules: Sequence[Equation]) -> dict:
    out = {}
    for eq in rules:
        for x in walk(eq.lhs):
            if isinstance(x, Tensor):
                out[x.name] = len(x.indices)
            elif isinstance(x, Func):
                out[x.name] = 0
    return out


def define_tensor(ctx: AlgebraContext, decl: TensorDecl) -> AlgebraContext:
    return replace(ctx, decls=_merge_decl(ctx.decls, decl))


def _check_declared(ctx: AlgebraContext, p: AtomPattern) -> None:
    d = ctx.decl(p.name)
    if d is None:
        raise ContextError(f"rule references undeclared symbol {p.name}")
    if d.arity is not None and d.arity != len(p.indices):
        raise ContextError(f"{p.name} expects {d.arity} indices")


def add_rules(ctx: AlgebraContext, rules: Iterable[Equation]) -> AlgebraContext:
    store = list(ctx.rules)
    for eq in rules:
        r = CommutatorRule.from_equation(eq)
        _check_declared(ctx, r.left)
        _check_declared(ctx, r.right)
        if r not in store:
            store.append(r)
    return replace(ctx, rules=tuple(store))


def assume(ctx: AlgebraContext, facts: Iterable[tuple[str, str]]) -> AlgebraContext:
    """Record sign facts; each fact is ``(name, "positive" | "negative")``."""
    current = list(ctx.assumptions)
    for name, sign in facts:
        if sign not in ("positive", "negative"):
            raise ContextError(f"unsupported assumption {sign}")
        if name not in ctx.scalar_names():
            raise ContextError(f"cannot assume on undeclared symbol {name}")
        old = next((s for n, s in current if n == name), None)
        if old is not None and old != sign:
            raise ContextError(f"contradictory assumption on {name}")
        if old is None:
            current.append((name, sign))
    return replace(ctx, assumptions=tuple(current))


def set_differential_operators(ctx: AlgebraContext, name: str, coords: Sequence[str] = ("x", "y", "z"),
                               on: bool = True) -> AlgebraContext:
    d = ctx.decl(name)
    if d is None or d.kind != OPERATOR:
        raise ContextError(f"unknown operator {name}")
    ops = tuple(x for x in ctx.diffops if x[0] != name)
    if on:
        ops += ((name, tuple(coords)),)
    return replace(ctx, diffops=ops)


def register_identity(ctx: AlgebraContext, eq: Equation) -> AlgebraContext:
    if eq in ctx.identities:
        return ctx
    return replace(ctx, identities=ctx.identities + (eq,))


def with_budget(ctx: AlgebraContext, budget: int) -> AlgebraContext:
    return replace(ctx, budget=int(budget))


def describe(ctx: AlgebraContext) -> list[str]:
    """Human-readable echo of the settings, one line each."""
    lines = [f"{k} = {v}" for k, v in ctx.settings]
    lines.append("algebrarules = {" + ", ".join(render(e) for e in ctx.rule_equations()) + "}")
    if ctx.diffops:
        lines.append("differentialoperators = {" + ", ".join(
            f"[{n}, [{', '.join(c)}]]" for n, c in ctx.diffops) + "}")
    else:
        lines.append("differentialoperators = none")
    return lines
