"""Coefficient expressions evaluated at vertex coordinates.

Grammar (total, side-effect-free):

    expr   := term  { ("+" | "-") term }
    term   := unary { ("*" | "/") unary }
    unary  := ("+" | "-") unary | power
    power  := atom [ "^" unary ]
    atom   := NUMBER | "x" | "y" | "z"
            | ("sin" | "cos" | "exp" | "abs") "(" expr ")"
            | "(" expr ")"

Precedence, loosest to tightest: + - (binary), * /, unary + -, ^.
"^" is right-associative and binds tighter than unary minus, so
-x^2 == -(x^2) and 2^-3 is accepted.  NUMBER is a decimal literal with
optional fraction and exponent (1, 0.5, 1e-9, 2.5E+3).

Evaluation is vectorized over all vertices at once; any non-finite
result (division by zero, overflow, fractional power of a negative)
is reported as an evaluation error.
"""

from __future__ import annotations

import numpy as np

from .geometry import Field

_FUNCTIONS = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "abs": np.abs}
_VARIABLES = ("x", "y", "z")


class ExpressionError(ValueError):
    """Parse or evaluation failure, with the source position."""

    def __init__(self, message, position):
        super().__init__(f"{message} (position {position})")
        self.position = position


def _tokenize(text):
    tokens = []  # (kind, value, position)
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
        elif ch in "+-*/^()":
            tokens.append((ch, ch, i))
            i += 1
        elif ch.isdigit() or ch == ".":
            j = i
            while j < n and (text[j].isdigit() or text[j] == "."):
                j += 1
            if j < n and text[j] in "eE":
                k = j + 1
                if k < n and text[k] in "+-":
                    k += 1
                if k < n and text[k].isdigit():
                    j = k
                    while j < n and text[j].isdigit():
                        j += 1
            lit = text[i:j]
            try:
                value = float(lit)
            except ValueError:
                raise ExpressionError(f"bad number literal '{lit}'", i) from None
            tokens.append(("num", value, i))
            i = j
        elif ch.isalpha():
            j = i
            while j < n and text[j].isalpha():
                j += 1
            name = text[i:j]
            if name in _VARIABLES:
                tokens.append(("var", name, i))
            elif name in _FUNCTIONS:
                tokens.append(("func", name, i))
            else:
                raise ExpressionError(f"unknown name '{name}'", i)
            i = j
        else:
            raise ExpressionError(f"unexpected character '{ch}'", i)
    tokens.append(("end", None, n))
    return tokens


class _Parser:
    """Recursive descent, evaluating directly on coordinate arrays."""

    def __init__(self, tokens, env):
        self.tokens = tokens
        self.pos = 0
        self.env = env

    def peek(self):
        return self.tokens[self.pos]

    def take(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, kind):
        tok = self.take()
        if tok[0] != kind:
            raise ExpressionError(f"expected '{kind}', found '{tok[1]}'", tok[2])
        return tok

    def expr(self):
        value = self.term()
        while self.peek()[0] in ("+", "-"):
            op = self.take()[0]
            rhs = self.term()
            value = value + rhs if op == "+" else value - rhs
        return value

    def term(self):
        value = self.unary()
        while self.peek()[0] in ("*", "/"):
            op = self.take()[0]
            rhs = self.unary()
            value = value * rhs if op == "*" else value / rhs
        return value

    def unary(self):
        kind = self.peek()[0]
        if kind in ("+", "-"):
            op = self.take()[0]
            value = self.unary()
            return -value if op == "-" else value
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[0] == "^":
            self.take()
            exponent = self.unary()  # right-associative
            return base ** exponent
        return base

    def atom(self):
        tok = self.take()
        kind, value, pos = tok
        if kind == "num":
            # np.float64 so that 1/0 yields inf (flagged later), not a raise
            return np.float64(value)
        if kind == "var":
            return self.env[value]
        if kind == "func":
            self.expect("(")
            arg = self.expr()
            self.expect(")")
            return _FUNCTIONS[value](arg)
        if kind == "(":
            inner = self.expr()
            self.expect(")")
            return inner
        raise ExpressionError(f"unexpected token '{value}'", pos)


def evaluate_expression(text, coordinates):
    """Evaluate an expression at each coordinate row; returns an array."""
    coords = np.asarray(coordinates, dtype=float)
    env = {name: coords[:, k] for k, name in enumerate(_VARIABLES)}
    tokens = _tokenize(text)
    parser = _Parser(tokens, env)
    with np.errstate(all="ignore"):
        value = parser.expr()
    end = parser.take()
    if end[0] != "end":
        raise ExpressionError(f"trailing input '{end[1]}'", end[2])
    value = np.broadcast_to(np.asarray(value, dtype=float), (coords.shape[0],))
    if not np.all(np.isfinite(value)):
        bad = int(np.flatnonzero(~np.isfinite(value))[0])
        raise ExpressionError(
            f"expression '{text}' is non-finite at vertex {bad}", 0
        )
    return np.array(value)


def parse_coefficient(expr, domain):
    """Evaluate a coefficient expression at every vertex of a domain."""
    return Field(domain, evaluate_expression(expr, domain.coordinates))
