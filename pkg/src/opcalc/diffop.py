"""Gradients, momentum as a differential operator, and the test function G."""

from __future__ import annotations

from dataclasses import replace

from .context import AlgebraContext
from .expr import (
    BOX_INDEX,
    Add,
    Commutator,
    Deriv,
    Equation,
    Expr,
    ExprError,
    Func,
    I,
    Mul,
    Number,
    Pow,
    Scalar,
    Tensor,
    ZERO,
    add,
    all_indices,
    deriv,
    factors_of,
    is_position_field,
    is_scalar,
    mul,
    neg,
    power,
    rename_indices,
    rebuild,
    render,
    terms_of,
)
from .rewrite import _dummies, _expand, _fresh_names
from .simplify import contract_metric

TEST_FUNCTION = "G"


class DiffopError(ExprError):
    pass


def is_scalar_field(e: Expr) -> bool:
    """Sums of c (X_l^2)^q X_i ... and powers of V: the family closed under grad."""
    return is_position_field(e)


def _identity_for(ctx: AlgebraContext | None, n: str, f: Expr):
    """A registered identity d_[k](f) = ... instantiated at index n."""
    if ctx is None:
        return None
    for eq in ctx.identities:
        if isinstance(eq.lhs, Deriv) and len(eq.lhs.indices) == 1 and eq.lhs.target == f:
            k = eq.lhs.indices[0]
            return rename_indices(eq.rhs, {k: n})
    return None


def grad(n: str, f: Expr, ctx: AlgebraContext | None = None) -> Expr:
    """d_n f by the chain and product rules.

    d_n V uses a registered identity from ``ctx`` when present and stays a
    symbolic derivative otherwise; derivatives of G always stay symbolic.
    """
    return contract_metric(_grad(n, f, ctx))


def _grad(n: str, f: Expr, ctx) -> Expr:
    if isinstance(f, Add):
        return add(*(_grad(n, t, ctx) for t in f.terms))
    if is_scalar(f) and not all_indices(f):
        return ZERO
    if isinstance(f, Tensor):
        if f.name == "X":
            return Tensor("g", (n, f.indices[0]))
        if is_scalar(f):
            return ZERO
        raise DiffopError(f"gradient of operator {render(f)}")
    if isinstance(f, Func):
        if f.name == TEST_FUNCTION:
            return deriv((n,), f)
        if f.name == "V":
            known = _identity_for(ctx, n, f)
            return known if known is not None else deriv((n,), f)
        raise DiffopError(f"gradient of operator {render(f)}")
    if isinstance(f, Deriv):
        if isinstance(f.target, Func) and f.target.name in (TEST_FUNCTION, "V"):
            return deriv((n,) + f.indices, f.target)
        raise DiffopError(f"cannot differentiate {render(f)}")
    if isinstance(f, Mul):
        fs = f.factors
        out = []
        for k, x in enumerate(fs):
            if is_scalar(x) and not all_indices(x):
                continue
            d = _grad(n, x, ctx)
            if d != ZERO:
                out.append(mul(*fs[:k], d, *fs[k + 1:]))
        return add(*out)
    if isinstance(f, Pow):
        b, k = f.base, f.exp
        if k.denominator == 1 and k > 0:
            # keep operator products in their written order
            m = int(k)
            db = _grad(n, b, ctx)
            return add(*(mul(power(b, j), db, power(b, m - 1 - j)) for j in range(m)))
        if is_scalar_field(b):
            # the derivative part gets its own dummy names
            used = set(all_indices(b)) | {n}
            names = _fresh_names(used)
            fresh = rename_indices(b, {i: next(names) for i in sorted(_dummies(b))})
            return mul(Number(k), power(b, k - 1), _grad(n, fresh, ctx))
        raise DiffopError(f"gradient of {render(f)}")
    raise DiffopError(f"gradient of operator-valued {render(f)}")


def differentiate(e, ctx: AlgebraContext | None = None):
    """Evaluate symbolic derivatives of scalar fields with ``grad``."""
    if isinstance(e, Equation):
        return e.map(lambda s: differentiate(s, ctx))

    def go(x: Expr) -> Expr:
        x = rebuild(x, go)
        if isinstance(x, Deriv) and BOX_INDEX not in x.indices and is_scalar_field(x.target):
            out = x.target
            for n in reversed(x.indices):
                out = grad(n, out, ctx)
            return out
        return x

    return go(e)


def enable_explicit_momentum(ctx: AlgebraContext, on: bool = True) -> AlgebraContext:
    return replace(ctx, explicit_momentum=bool(on))


def _hbar(ctx) -> Expr:
    return Scalar("hbar")


def apply_diffops(e, ctx: AlgebraContext):
    """Apply each registered differential operator to the factors on its right."""
    if isinstance(e, Equation):
        return e.map(lambda s: apply_diffops(s, ctx))
    if not ctx.diffops:
        raise DiffopError("no differential operators are registered")
    return add(*(_apply_term(t, ctx) for t in terms_of(_expand(_activate(e, ctx)))))


def _activate(e: Expr, ctx) -> Expr:
    """Commutators involving a differential operator become AB - BA."""
    from .expr import rebuild, walk

    if isinstance(e, Commutator):
        a, b = _activate(e.a, ctx), _activate(e.b, ctx)
        if any(isinstance(x, Tensor) and ctx.is_diffop(x.name) for x in walk(e)):
            return add(mul(a, b), neg(mul(b, a)))
        return Commutator(a, b, e.inert)
    return rebuild(e, lambda x: _activate(x, ctx))


def _atoms(term: Expr) -> list:
    out = []
    for f in factors_of(term):
        if isinstance(f, Pow) and isinstance(f.base, Tensor) and f.exp.denominator == 1 and f.exp > 0:
            out.extend([f.base] * int(f.exp))
        else:
            out.append(f)
    return out


def _apply_term(term: Expr, ctx: AlgebraContext) -> Expr:
    if not ctx.explicit_momentum:
        return term
    fs = _atoms(term)
    for k in range(len(fs) - 1, -1, -1):
        f = fs[k]
        if isinstance(f, Tensor) and ctx.is_diffop(f.name):
            right = mul(*fs[k + 1:])
            if right == Number(1) or (is_scalar(right) and not all_indices(right)):
                value = ZERO
            else:
                value = mul(neg(I), _hbar(ctx), grad(f.indices[0], right))
            return add(*(_apply_term(t, ctx) for t in terms_of(_expand(mul(*fs[:k], value)))))
    return term


def test_function_eliminate(eq: Equation) -> Equation:
    """Right-cancel the test function G from every term of both sides."""
    return eq.map(_strip_g)


def _strip_g(side: Expr) -> Expr:
    out = []
    for t in terms_of(side):
        if t == ZERO:
            continue
        fs = factors_of(t)
        last = fs[-1]
        if isinstance(last, Func) and last.name == TEST_FUNCTION:
            out.append(mul(*fs[:-1]))
        elif isinstance(last, Pow) and last.base == Func(TEST_FUNCTION) and last.exp.denominator == 1:
            out.append(mul(*fs[:-1], power(last.base, last.exp - 1)))
        else:
            raise DiffopError(f"term {render(t)} does not end in the test function")
    return add(*out)

