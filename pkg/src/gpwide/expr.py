"""Coefficient expressions: a small recursive-descent parser and a numpy evaluator.

Grammar::

    expr  := term (('+'|'-') term)*
    term  := unary (('*'|'/') unary)*
    unary := '-' unary | pow
    pow   := atom ('^' unary)?
    atom  := number | 't' | 'x' | 's' | ident '(' expr (',' expr)* ')' | '(' expr ')'

``^`` is right-associative and binds tighter than unary minus, so ``-x^2``
is ``-(x^2)`` and ``2^-1`` is ``0.5``.  Identifiers: exp, sin, cos, sqrt,
abs (one argument) and min, max (two or more).

Evaluation is vectorised: variables may be numpy arrays that broadcast
against each other.  Division by zero, square roots of negative numbers and
any non-finite result raise :class:`ExprEvalError`.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Union

import numpy as np

from .errors import ExprEvalError, ExprSyntaxError, UndeclaredVariableError

VARIABLES = ("t", "x", "s")
UNARY_FUNCS = {
    "exp": np.exp,
    "sin": np.sin,
    "cos": np.cos,
    "sqrt": np.sqrt,
    "abs": np.abs,
}
VARIADIC_FUNCS = {"min": np.minimum, "max": np.maximum}


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    arg: "Node"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple


Node = Union[Num, Var, Neg, BinOp, Call]


# ---------------------------------------------------------------- tokenizer

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^(),]))"
)


def _tokenize(src):
    tokens = []
    pos = 0
    while pos < len(src):
        if src[pos:].strip() == "":
            break
        m = _TOKEN_RE.match(src, pos)
        if m is None or m.end() == pos:
            start = pos + (len(src[pos:]) - len(src[pos:].lstrip()))
            raise ExprSyntaxError(f"unexpected character {src[start]!r}", start)
        kind = m.lastgroup
        text = m.group(kind)
        tokens.append((kind, text, m.start(kind)))
        pos = m.end()
    tokens.append(("end", "", len(src)))
    return tokens


class _Parser:
    def __init__(self, src, allowed):
        self.src = src
        self.allowed = allowed
        self.tokens = _tokenize(src)
        self.i = 0

    @property
    def tok(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, text):
        kind, value, pos = self.tok
        if value != text or kind not in ("op",):
            found = value or "end of input"
            raise ExprSyntaxError(f"expected {text!r}, found {found!r}", pos)
        self.advance()

    def parse(self):
        node = self.expr()
        kind, value, pos = self.tok
        if kind != "end":
            raise ExprSyntaxError(f"unexpected token {value!r}", pos)
        return node

    def expr(self):
        node = self.term()
        while self.tok[0] == "op" and self.tok[1] in "+-":
            op = self.advance()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.tok[0] == "op" and self.tok[1] in "*/":
            op = self.advance()[1]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self):
        if self.tok[0] == "op" and self.tok[1] == "-":
            self.advance()
            return Neg(self.unary())
        return self.power()

    def power(self):
        base = self.atom()
        if self.tok[0] == "op" and self.tok[1] == "^":
            self.advance()
            return BinOp("^", base, self.unary())
        return base

    def atom(self):
        kind, value, pos = self.tok
        if kind == "num":
            self.advance()
            return Num(float(value))
        if kind == "ident":
            self.advance()
            if value in VARIABLES:
                if value not in self.allowed:
                    raise UndeclaredVariableError(value, self.allowed)
                return Var(value)
            if value in UNARY_FUNCS or value in VARIADIC_FUNCS:
                self.expect("(")
                args = [self.expr()]
                while self.tok[0] == "op" and self.tok[1] == ",":
                    self.advance()
                    args.append(self.expr())
                self.expect(")")
                if value in UNARY_FUNCS and len(args) != 1:
                    raise ExprSyntaxError(f"{value} takes exactly one argument", pos)
                if value in VARIADIC_FUNCS and len(args) < 2:
                    raise ExprSyntaxError(f"{value} takes at least two arguments", pos)
                return Call(value, tuple(args))
            raise ExprSyntaxError(f"unknown identifier {value!r}", pos)
        if kind == "op" and value == "(":
            self.advance()
            node = self.expr()
            self.expect(")")
            return node
        found = value or "end of input"
        raise ExprSyntaxError(f"unexpected {found!r}", pos)


# ------------------------------------------------------------------ printer

_PREC_ADD, _PREC_MUL, _PREC_NEG, _PREC_POW, _PREC_ATOM = 1, 2, 3, 4, 5


def _prec(node):
    if isinstance(node, BinOp):
        return {"+": _PREC_ADD, "-": _PREC_ADD, "*": _PREC_MUL, "/": _PREC_MUL}.get(node.op, _PREC_POW)
    if isinstance(node, Neg):
        return _PREC_NEG
    if isinstance(node, Num) and (node.value < 0 or np.signbit(node.value)):
        return _PREC_NEG
    return _PREC_ATOM


def _wrap(node, needs):
    text = format_node(node)
    return f"({text})" if needs else text


def format_node(node):
    if isinstance(node, Num):
        return repr(float(node.value))
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Neg):
        return "-" + _wrap(node.arg, _prec(node.arg) < _PREC_NEG)
    if isinstance(node, Call):
        return f"{node.name}({', '.join(format_node(a) for a in node.args)})"
    if node.op == "^":
        left = _wrap(node.left, _prec(node.left) < _PREC_ATOM)
        right = _wrap(node.right, _prec(node.right) < _PREC_NEG)
        return f"{left}^{right}"
    p = _prec(node)
    left = _wrap(node.left, _prec(node.left) < p)
    right = _wrap(node.right, _prec(node.right) <= p)
    return f"{left} {node.op} {right}"


def free_variables(node):
    if isinstance(node, Var):
        return {node.name}
    if isinstance(node, Num):
        return set()
    if isinstance(node, Neg):
        return free_variables(node.arg)
    if isinstance(node, BinOp):
        return free_variables(node.left) | free_variables(node.right)
    out = set()
    for a in node.args:
        out |= free_variables(a)
    return out


# ---------------------------------------------------------------- evaluator

def _eval(node, env):
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        return env[node.name]
    if isinstance(node, Neg):
        return -_eval(node.arg, env)
    if isinstance(node, BinOp):
        a = _eval(node.left, env)
        b = _eval(node.right, env)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        if node.op == "/":
            if np.any(np.asarray(b) == 0):
                raise ExprEvalError("division by zero")
            return a / b
        return np.power(a, b)
    args = [_eval(a, env) for a in node.args]
    if node.name == "sqrt" and np.any(np.asarray(args[0]) < 0):
        raise ExprEvalError("sqrt of a negative number")
    if node.name in UNARY_FUNCS:
        return UNARY_FUNCS[node.name](args[0])
    fn = VARIADIC_FUNCS[node.name]
    out = args[0]
    for a in args[1:]:
        out = fn(out, a)
    return out


@dataclass(frozen=True)
class CoefficientExpr:
    """Parsed scalar function of a declared subset of (t, x, s)."""

    root: Node
    allowed: frozenset = field(default=frozenset(VARIABLES))

    @property
    def variables(self):
        return frozenset(free_variables(self.root))

    def depends_on(self, name):
        return name in self.variables

    @property
    def is_zero(self):
        return isinstance(self.root, Num) and self.root.value == 0.0

    def __str__(self):
        return format_node(self.root)

    def __call__(self, t=None, x=None, s=None):
        return eval_coefficient(self, t, x, s)


def parse_coefficient_expr(src: str, allowed_vars: Iterable[str] = VARIABLES) -> CoefficientExpr:
    if not src or not src.strip():
        raise ExprSyntaxError("empty expression", 0)
    allowed = frozenset(allowed_vars)
    bad = allowed - set(VARIABLES)
    if bad:
        raise ValueError(f"unknown variable names {sorted(bad)}")
    return CoefficientExpr(_Parser(src, allowed).parse(), allowed)


def eval_coefficient(expr: CoefficientExpr, t=None, x=None, s=None):
    """Evaluate ``expr``; returns a float for scalar input, else an array.

    The result always has the broadcast shape of the supplied arguments, even
    when the expression does not reference some of them.
    """
    env = {"t": t, "x": x, "s": s}
    for name in expr.variables:
        if env[name] is None:
            raise ExprEvalError(f"variable {name!r} referenced but not supplied")
    supplied = [np.asarray(v, dtype=float) for v in (t, x, s) if v is not None]
    env = {k: (np.asarray(v, dtype=float) if v is not None else None) for k, v in env.items()}
    with np.errstate(all="ignore"):
        value = _eval(expr.root, env)
        shape = np.broadcast_shapes(*(a.shape for a in supplied)) if supplied else ()
        value = np.broadcast_to(np.asarray(value, dtype=float), shape)
    if not np.all(np.isfinite(value)):
        raise ExprEvalError(f"non-finite value while evaluating {expr}")
    if value.ndim == 0:
        return float(value)
    return np.array(value)
