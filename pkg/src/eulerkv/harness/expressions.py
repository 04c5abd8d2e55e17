"""
Scalar field expressions in ``t``, ``x``, ``y`` for configuration files.

Expressions are screened against a character and name whitelist before sympy
sees them, then compiled to numpy functions.
"""
from __future__ import annotations

import re
from functools import lru_cache

import numpy as np
import sympy
from sympy.parsing.sympy_parser import (convert_xor, parse_expr,
                                        standard_transformations)

from ..errors import ConfigError

VARIABLES = ("t", "x", "y")
FUNCTIONS = ("sin", "cos", "tan", "exp", "log", "sqrt", "tanh", "sinh", "cosh", "atan", "Abs")
CONSTANTS = ("pi", "E")
_ALLOWED_CHARS = re.compile(r"^[0-9A-Za-z_+\-*/^().,\s]*$")
_NAME = re.compile(r"(?<![0-9.])[A-Za-z_][A-Za-z_0-9]*")
_SYMBOLS = {name: sympy.Symbol(name, real=True) for name in VARIABLES}
_LOCALS = {**_SYMBOLS, **{f: getattr(sympy, f) for f in FUNCTIONS}, "pi": sympy.pi, "E": sympy.E}
_TRANSFORMS = standard_transformations + (convert_xor,)


@lru_cache(maxsize=256)
def parse(text: str) -> sympy.Expr:
    """Parse ``text`` into a sympy expression; raises :class:`ConfigError`."""
    if not isinstance(text, str):
        raise ConfigError(f"expression must be a string, got {type(text).__name__}")
    if not text.strip():
        raise ConfigError("empty expression")
    if len(text) > 2000 or not _ALLOWED_CHARS.match(text):
        raise ConfigError(f"expression {text!r} contains disallowed characters")
    for name in _NAME.findall(text):
        if name not in _LOCALS:
            raise ConfigError(f"unknown name {name!r} in expression {text!r}; "
                              f"allowed: {', '.join(VARIABLES + FUNCTIONS + CONSTANTS)}")
    try:
        expr = parse_expr(text, local_dict=dict(_LOCALS), global_dict={"__builtins__": {}, **_builtins()},
                          transformations=_TRANSFORMS, evaluate=True)
    except Exception as exc:  # sympy raises a zoo of types for bad syntax
        raise ConfigError(f"cannot parse expression {text!r}: {exc}") from None
    if not isinstance(expr, sympy.Expr):
        raise ConfigError(f"expression {text!r} is not a scalar expression")
    if expr.has(sympy.zoo, sympy.nan, sympy.oo, -sympy.oo):
        raise ConfigError(f"expression {text!r} is not finite")
    return expr


@lru_cache(maxsize=1)
def _builtins():
    # names parse_expr needs to build the expression tree
    return {"Integer": sympy.Integer, "Float": sympy.Float, "Rational": sympy.Rational,
            "Symbol": sympy.Symbol}


def compile_field(text: str):
    """``f(t, x, y) -> ndarray`` broadcast to the shape of ``x``."""
    expr = parse(text)
    fn = sympy.lambdify([_SYMBOLS[v] for v in VARIABLES], expr, modules="numpy")

    def field(t, x, y):
        x = np.asarray(x, dtype=float)
        out = np.asarray(fn(t, x, np.asarray(y, dtype=float)), dtype=float)
        return np.broadcast_to(out, np.broadcast(x, y).shape).copy()

    field.expression = text
    return field


def depends_on_time(text: str) -> bool:
    return _SYMBOLS["t"] in parse(text).free_symbols
