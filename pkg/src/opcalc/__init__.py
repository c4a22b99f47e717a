"""Symbolic noncommutative tensor operator algebra with a scripted derivation runner."""

from .context import AlgebraContext, setup
from .expr import Equation, Expr, parse, render
from .simplify import simplify

__all__ = ["AlgebraContext", "Equation", "Expr", "parse", "render", "setup", "simplify"]
__version__ = "0.1.0"
