"""Arithmetic expression language for metric coefficient functions.

Expressions are parsed once into an immutable tree and then evaluated many
times — over jets (to get derivatives), over plain floats, or over numpy
arrays (vectorized, for samplers and finite-difference cross-checks).

Grammar (EBNF, also reproduced in the README):

    sum     = term , { ("+" | "-") , term } ;
    term    = unary , { ("*" | "/") , unary } ;
    unary   = "-" , unary | power ;
    power   = atom , [ "^" , unary ] ;
    atom    = NUMBER | variable | function , "(" , sum , ")" | "(" , sum , ")" ;

`^` is right-associative and binds tighter than unary minus, so ``-x0^2``
means ``-(x0^2)``.  Variables are ``x0..x{n-1}`` and ``y0..y{n-1}``; two
opt-in extensions exist for mechanics contexts: ``t`` (an explicit time
slot) and ``p0..p{n-1}`` as aliases for the y-slots.  Functions: sin, cos,
exp, log, sqrt, atan.

A non-integer literal exponent requires a positive base at evaluation time;
integer exponents go through repeated squaring and work for any base.  A
variable exponent is evaluated as exp(log(base) * exponent).
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ExprSyntaxError, InputError
from .jets import Jet

__all__ = ["Expr", "parse_expr", "eval_expr", "eval_expr_arrays"]

FUNCTIONS = ("sin", "cos", "exp", "log", "sqrt", "atan")

_TOKEN_RE = re.compile(
    r"""
    (?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^()])
    """,
    re.VERBOSE,
)

_VAR_RE = re.compile(r"^([xyp])([0-9]+)$")


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    kind: str  # 'x', 'y' or 't'
    index: int


@dataclass(frozen=True)
class Neg:
    arg: object


@dataclass(frozen=True)
class Bin:
    op: str
    left: object
    right: object


@dataclass(frozen=True)
class Call:
    fn: str
    arg: object


class _Token:
    __slots__ = ("kind", "text", "column")

    def __init__(self, kind: str, text: str, column: int):
        self.kind = kind
        self.text = text
        self.column = column


def _tokenize(source: str) -> list[_Token]:
    tokens = []
    i = 0
    while i < len(source):
        ch = source[i]
        if ch in " \t\r\n":
            i += 1
            continue
        m = _TOKEN_RE.match(source, i)
        if m is None:
            raise ExprSyntaxError(f"unexpected character {ch!r}", i + 1)
        kind = m.lastgroup
        tokens.append(_Token(kind, m.group(), i + 1))
        i = m.end()
    tokens.append(_Token("end", "", len(source) + 1))
    return tokens


class _Parser:
    def __init__(self, tokens: list[_Token], dim: int, allow_t: bool, p_alias: bool):
        self.tokens = tokens
        self.pos = 0
        self.dim = dim
        self.allow_t = allow_t
        self.p_alias = p_alias

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def take(self) -> _Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect_op(self, text: str) -> None:
        tok = self.peek()
        if tok.kind != "op" or tok.text != text:
            raise ExprSyntaxError(f"expected {text!r}", tok.column)
        self.pos += 1

    def parse(self):
        tree = self.sum()
        tok = self.peek()
        if tok.kind != "end":
            raise ExprSyntaxError(f"unexpected {tok.text!r}", tok.column)
        return tree

    def sum(self):
        node = self.term()
        while self.peek().kind == "op" and self.peek().text in "+-":
            op = self.take().text
            node = Bin(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek().kind == "op" and self.peek().text in "*/":
            op = self.take().text
            node = Bin(op, node, self.unary())
        return node

    def unary(self):
        tok = self.peek()
        if tok.kind == "op" and tok.text == "-":
            self.pos += 1
            return Neg(self.unary())
        return self.power()

    def power(self):
        base = self.atom()
        tok = self.peek()
        if tok.kind == "op" and tok.text == "^":
            self.pos += 1
            return Bin("^", base, self.unary())
        return base

    def atom(self):
        tok = self.take()
        if tok.kind == "num":
            return Num(float(tok.text))
        if tok.kind == "op" and tok.text == "(":
            node = self.sum()
            self.expect_op(")")
            return node
        if tok.kind == "ident":
            nxt = self.peek()
            if nxt.kind == "op" and nxt.text == "(":
                if tok.text not in FUNCTIONS:
                    raise ExprSyntaxError(f"unknown function {tok.text!r}", tok.column)
                self.pos += 1
                arg = self.sum()
                self.expect_op(")")
                return Call(tok.text, arg)
            return self.variable(tok)
        raise ExprSyntaxError(
            "unexpected end of input" if tok.kind == "end" else f"unexpected {tok.text!r}",
            tok.column,
        )

    def variable(self, tok: _Token):
        if tok.text == "t":
            if not self.allow_t:
                raise ExprSyntaxError("variable 't' is not allowed here", tok.column)
            return Var("t", 0)
        m = _VAR_RE.match(tok.text)
        if m is None:
            raise ExprSyntaxError(f"unknown identifier {tok.text!r}", tok.column)
        kind, index = m.group(1), int(m.group(2))
        if kind == "p":
            if not self.p_alias:
                raise ExprSyntaxError(f"unknown identifier {tok.text!r}", tok.column)
            kind = "y"
        if index >= self.dim:
            raise ExprSyntaxError(
                f"variable index {index} out of range for dimension {self.dim}",
                tok.column,
            )
        return Var(kind, index)


class Expr:
    """An immutable parsed expression tied to a coordinate dimension."""

    __slots__ = ("root", "dim", "uses_y", "uses_t")

    def __init__(self, root, dim: int):
        self.root = root
        self.dim = dim
        kinds = set()
        _collect_kinds(root, kinds)
        self.uses_y = "y" in kinds
        self.uses_t = "t" in kinds

    def canonical(self) -> str:
        return _print(self.root, 0)

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"Expr({self.canonical()!r}, dim={self.dim})"

    def __eq__(self, other) -> bool:
        return isinstance(other, Expr) and self.dim == other.dim and self.root == other.root

    def __hash__(self) -> int:
        return hash((self.dim, self.root))


def _collect_kinds(node, out: set) -> None:
    if isinstance(node, Var):
        out.add(node.kind)
    elif isinstance(node, Neg):
        _collect_kinds(node.arg, out)
    elif isinstance(node, Bin):
        _collect_kinds(node.left, out)
        _collect_kinds(node.right, out)
    elif isinstance(node, Call):
        _collect_kinds(node.arg, out)


def parse_expr(source: str, dim: int, *, allow_t: bool = False, p_alias: bool = False) -> Expr:
    """Parse an expression over x0..x{dim-1}, y0..y{dim-1}.

    ``allow_t`` admits a bare time variable ``t``; ``p_alias`` lets
    ``p0..p{dim-1}`` stand for the y-slots (momentum notation).  Raises
    ``ExprSyntaxError`` with a 1-based column on any malformed input,
    unknown identifier, or out-of-range variable index.
    """
    if not source or not source.strip():
        raise ExprSyntaxError("empty expression", 1)
    if dim < 1:
        raise InputError(f"expression dimension must be >= 1, got {dim}")
    tokens = _tokenize(source)
    root = _Parser(tokens, dim, allow_t, p_alias).parse()
    return Expr(root, dim)


# ---------------------------------------------------------------------------
# Canonical printer.  Precedence levels: sum 1, product 2, unary minus 3,
# power 4, atoms 5.  Chosen so that printing and reparsing is the identity
# on parse trees.


def _format_number(v: float) -> str:
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def _print(node, context: int) -> str:
    if isinstance(node, Num):
        text = _format_number(node.value)
        return text
    if isinstance(node, Var):
        if node.kind == "t":
            return "t"
        return f"{node.kind}{node.index}"
    if isinstance(node, Call):
        return f"{node.fn}({_print(node.arg, 0)})"
    if isinstance(node, Neg):
        inner = _print(node.arg, 4)
        text = f"-{inner}"
        return f"({text})" if context > 3 else text
    if isinstance(node, Bin):
        if node.op in "+-":
            # left-associative: any same-precedence right child keeps parens
            # so the printed string reparses to the identical tree
            prec = 1
            left = _print(node.left, prec)
            right = _print(node.right, prec + 1)
            text = f"{left} {node.op} {right}"
        elif node.op in "*/":
            prec = 2
            left = _print(node.left, prec)
            right = _print(node.right, prec + 1)
            text = f"{left}{node.op}{right}"
        else:  # '^', right-associative, exponent slot accepts unary minus
            prec = 4
            left = _print(node.left, prec + 1)
            right = _print(node.right, 3)
            text = f"{left}^{right}"
        return f"({text})" if context > prec else text
    raise InputError(f"unknown expression node {node!r}")


# ---------------------------------------------------------------------------
# Evaluation


def _const_value(node) -> float | None:
    """Fold a variable-free subtree to a float, else None."""
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Neg):
        v = _const_value(node.arg)
        return None if v is None else -v
    if isinstance(node, Bin):
        a = _const_value(node.left)
        b = _const_value(node.right)
        if a is None or b is None:
            return None
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        if node.op == "/":
            if b == 0:
                raise DomainError("division by zero in constant expression")
            return a / b
        return a**b
    if isinstance(node, Call):
        v = _const_value(node.arg)
        if v is None:
            return None
        return _apply_fn_float(node.fn, v)
    return None


def _apply_fn_float(fn: str, v: float) -> float:
    if fn == "log":
        if v <= 0.0:
            raise DomainError(f"log of non-positive value {v}")
        return math.log(v)
    if fn == "sqrt":
        if v <= 0.0:
            raise DomainError(f"sqrt of non-positive value {v}")
        return math.sqrt(v)
    return getattr(math, fn)(v)


def _apply_fn(fn: str, v):
    if isinstance(v, Jet):
        return getattr(v, fn)()
    return _apply_fn_float(fn, float(v))


def _pow(base, exponent_node, point, dim, uses_t):
    c = _const_value(exponent_node)
    if c is not None:
        if float(c).is_integer():
            if isinstance(base, Jet):
                return base ** int(c)
            b = float(base)
            if b == 0.0 and c < 0:
                raise DomainError("zero raised to a negative power")
            return b ** int(c)
        if isinstance(base, Jet):
            return base.pow_real(float(c))
        b = float(base)
        if b <= 0.0:
            raise DomainError(f"fractional power of non-positive base {b}")
        return b ** float(c)
    e = _ev(exponent_node, point, dim, uses_t)
    if isinstance(base, Jet) or isinstance(e, Jet):
        log_base = base.log() if isinstance(base, Jet) else _apply_fn_float("log", float(base))
        prod = log_base * e if isinstance(log_base, Jet) else e * log_base
        return prod.exp()
    b = float(base)
    if b <= 0.0:
        raise DomainError(f"variable power of non-positive base {b}")
    return math.exp(math.log(b) * float(e))


def _ev(node, point, dim: int, uses_t: bool):
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        if node.kind == "x":
            return point[node.index]
        if node.kind == "y":
            return point[dim + node.index]
        return point[-1]  # 't', stored in the last slot
    if isinstance(node, Neg):
        return -_ev(node.arg, point, dim, uses_t)
    if isinstance(node, Call):
        return _apply_fn(node.fn, _ev(node.arg, point, dim, uses_t))
    if isinstance(node, Bin):
        left = _ev(node.left, point, dim, uses_t)
        if node.op == "^":
            return _pow(left, node.right, point, dim, uses_t)
        right = _ev(node.right, point, dim, uses_t)
        if node.op == "+":
            return left + right
        if node.op == "-":
            return left - right
        if node.op == "*":
            return left * right
        if not isinstance(right, Jet) and float(right) == 0.0:
            raise DomainError("division by zero")
        return left / right
    raise InputError(f"unknown expression node {node!r}")


def eval_expr(e: Expr, point) -> "Jet | float":
    """Evaluate over a slot vector of jets and/or floats.

    Layout: ``point[0:dim]`` are the x-slots.  If the expression mentions
    any y-variable, ``point[dim:2*dim]`` must hold the y-slots.  If it
    mentions ``t``, the final extra slot holds t.
    """
    need = e.dim * (2 if e.uses_y else 1) + (1 if e.uses_t else 0)
    if len(point) < need:
        raise InputError(
            f"expression needs {need} slots (dim {e.dim}, uses_y={e.uses_y}, "
            f"uses_t={e.uses_t}), got {len(point)}"
        )
    return _ev(e.root, point, e.dim, e.uses_t)


# ---------------------------------------------------------------------------
# Vectorized float evaluation (independent of the jet route; used by
# samplers and finite-difference cross-checks).  NaN-permissive: domain
# violations surface as non-finite entries for the caller to filter.


def _ev_arrays(node, point, dim: int):
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        if node.kind == "x":
            return point[node.index]
        if node.kind == "y":
            return point[dim + node.index]
        return point[-1]
    if isinstance(node, Neg):
        return -_ev_arrays(node.arg, point, dim)
    if isinstance(node, Call):
        arg = _ev_arrays(node.arg, point, dim)
        if node.fn == "sqrt":
            return np.sqrt(arg)
        return getattr(np, node.fn)(arg)
    if isinstance(node, Bin):
        left = _ev_arrays(node.left, point, dim)
        if node.op == "^":
            c = _const_value(node.right)
            if c is not None:
                return np.power(left, int(c)) if float(c).is_integer() else np.power(left, c)
            return np.exp(np.log(left) * _ev_arrays(node.right, point, dim))
        right = _ev_arrays(node.right, point, dim)
        if node.op == "+":
            return left + right
        if node.op == "-":
            return left - right
        if node.op == "*":
            return left * right
        return left / right
    raise InputError(f"unknown expression node {node!r}")


def eval_expr_arrays(e: Expr, point):
    """Vectorized evaluation over numpy arrays (same slot layout as eval_expr)."""
    with np.errstate(all="ignore"):
        return _ev_arrays(e.root, point, e.dim)
