"""Closed-form Przanowski functions as text.

Grammar::

    expr   := term (("+" | "-") term)*
    term   := unary (("*" | "/") unary)*
    unary  := "-" unary | power
    power  := atom ("^" ["-"] literal)?
    atom   := literal | ident | func "(" expr ")" | "(" expr ")"

Identifiers are restricted to the coordinates ``w z wb zb`` and the parameters
``lam eps``; functions are ``ln exp sqrt``.  Literals are non-negative reals
(``2``, ``0.5``, ``1e-3``) or imaginary numbers (``4i``, ``i``), so the complex
constant 3+4i is written exactly like that.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Union

import numpy as np

from .jets import Jet, Point4

COORDINATES = ("w", "z", "wb", "zb")
PARAMETERS = ("lam", "eps")
FUNCTIONS = ("ln", "exp", "sqrt")
SMALL = 1e-13


class ExprError(ValueError):
    pass


class LexError(ExprError):
    def __init__(self, message, offset):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class ParseError(ExprError):
    def __init__(self, found, expected, offset):
        exp = ", ".join(sorted(expected))
        super().__init__(f"unexpected {found!r} at offset {offset}; expected one of: {exp}")
        self.found = found
        self.expected = frozenset(expected)
        self.offset = offset


class EvaluationError(ExprError):
    def __init__(self, message, subexpression):
        super().__init__(f"{message} in {subexpression}")
        self.subexpression = subexpression


# -- AST -------------------------------------------------------------------


@dataclass(frozen=True)
class Num:
    value: complex


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Param:
    name: str


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Ast"
    right: "Ast"


@dataclass(frozen=True)
class Neg:
    operand: "Ast"


@dataclass(frozen=True)
class Func:
    name: str
    arg: "Ast"


@dataclass(frozen=True)
class Pow:
    base: "Ast"
    exponent: float


Ast = Union[Num, Var, Param, BinOp, Neg, Func, Pow]


# -- lexer -----------------------------------------------------------------

_NUMBER = r"(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?"
_TOKEN = re.compile(
    rf"\s*(?:(?P<imag>{_NUMBER}i(?![A-Za-z_0-9]))|(?P<num>{_NUMBER})|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^()]))"
)


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    offset: int


def tokenize(source: str) -> list:
    tokens, pos = [], 0
    source = source.rstrip()
    while pos < len(source):
        m = _TOKEN.match(source, pos)
        if m is None or m.end() == pos:
            bad = pos + len(source[pos:]) - len(source[pos:].lstrip())
            raise LexError(f"unexpected character {source[bad]!r}", bad)
        kind = m.lastgroup
        text = m.group(kind)
        start = m.start(kind)
        if kind == "ident" and text == "i":
            kind, text = "imag", "1i"
        tokens.append(Token(kind, text, start))
        pos = m.end()
    tokens.append(Token("eof", "", len(source)))
    return tokens


class _Parser:
    def __init__(self, source: str):
        self.tokens = tokenize(source)
        self.pos = 0

    @property
    def tok(self) -> Token:
        return self.tokens[self.pos]

    def advance(self) -> Token:
        t = self.tokens[self.pos]
        self.pos += 1
        return t

    def expect_op(self, text):
        if self.tok.kind == "op" and self.tok.text == text:
            return self.advance()
        raise ParseError(self.tok.text or "end of input", {text}, self.tok.offset)

    def at_op(self, *texts) -> bool:
        return self.tok.kind == "op" and self.tok.text in texts

    def parse(self) -> Ast:
        node = self.expr()
        if self.tok.kind != "eof":
            raise ParseError(self.tok.text, {"+", "-", "*", "/", "^", "end of input"}, self.tok.offset)
        return node

    def expr(self):
        node = self.term()
        while self.at_op("+", "-"):
            op = self.advance().text
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.at_op("*", "/"):
            op = self.advance().text
            node = BinOp(op, node, self.unary())
        return node

    def unary(self):
        if self.at_op("-"):
            self.advance()
            return Neg(self.unary())
        return self.power()

    def power(self):
        node = self.atom()
        if self.at_op("^"):
            self.advance()
            sign = 1.0
            if self.at_op("-"):
                self.advance()
                sign = -1.0
            if self.tok.kind != "num":
                raise ParseError(self.tok.text or "end of input", {"real literal exponent"}, self.tok.offset)
            node = Pow(node, sign * float(self.advance().text))
        return node

    def atom(self):
        t = self.tok
        if t.kind == "num":
            self.advance()
            return Num(complex(float(t.text)))
        if t.kind == "imag":
            self.advance()
            return Num(complex(0.0, float(t.text[:-1])))
        if t.kind == "ident":
            self.advance()
            if t.text in COORDINATES:
                return Var(t.text)
            if t.text in PARAMETERS:
                return Param(t.text)
            if t.text in FUNCTIONS:
                self.expect_op("(")
                arg = self.expr()
                self.expect_op(")")
                return Func(t.text, arg)
            raise ParseError(t.text, set(COORDINATES + PARAMETERS + FUNCTIONS), t.offset)
        if self.at_op("("):
            self.advance()
            node = self.expr()
            self.expect_op(")")
            return node
        expected = {"literal", "(", "-"} | set(COORDINATES + PARAMETERS + FUNCTIONS)
        raise ParseError(t.text or "end of input", expected, t.offset)


def parse(source: str) -> Ast:
    """Parse ``source`` into an AST."""
    return _Parser(source).parse()


# -- printing --------------------------------------------------------------


def _literal(x: float) -> str:
    return repr(float(x))


def print_canonical(node: Ast) -> str:
    """Fully parenthesised text that reparses to the same tree."""
    if isinstance(node, Num):
        v = complex(node.value)
        if v.imag == 0 and v.real >= 0:
            return _literal(v.real)
        if v.real == 0 and v.imag >= 0:
            return _literal(v.imag) + "i"
        # only reachable for hand-built trees; keep it reparseable as a value
        re_part = _literal(abs(v.real)) if v.real >= 0 else f"(-{_literal(-v.real)})"
        im_part = _literal(abs(v.imag)) + "i"
        return f"({re_part} {'+' if v.imag >= 0 else '-'} {im_part})"
    if isinstance(node, (Var, Param)):
        return node.name
    if isinstance(node, BinOp):
        return f"({print_canonical(node.left)} {node.op} {print_canonical(node.right)})"
    if isinstance(node, Neg):
        return f"(-{print_canonical(node.operand)})"
    if isinstance(node, Func):
        return f"{node.name}({print_canonical(node.arg)})"
    if isinstance(node, Pow):
        e = node.exponent
        lit = _literal(e) if e >= 0 else "-" + _literal(-e)
        return f"({print_canonical(node.base)} ^ {lit})"
    raise TypeError(f"not an AST node: {node!r}")


# -- evaluation ------------------------------------------------------------


def _params(at: Point4, params):
    out = {"lam": at.lam, "eps": float(np.sign(at.lam))}
    if params:
        out.update(params)
    return out


def eval_jet(node: Ast, at: Point4, order: int, params=None) -> Jet:
    """Jet of the expression at ``at``; ``lam``/``eps`` default to the point's values."""
    env = _params(at, params)
    cache = {}

    def var(name):
        if name not in cache:
            cache[name] = Jet.variable(at, COORDINATES.index(name), order)
        return cache[name]

    def ev(n):
        if isinstance(n, Num):
            return Jet.constant(at, n.value, order)
        if isinstance(n, Var):
            return var(n.name)
        if isinstance(n, Param):
            return Jet.constant(at, env[n.name], order)
        if isinstance(n, Neg):
            return -ev(n.operand)
        if isinstance(n, BinOp):
            a, b = ev(n.left), ev(n.right)
            if n.op == "+":
                return a + b
            if n.op == "-":
                return a - b
            if n.op == "*":
                return a * b
            if np.any(np.abs(b.value) < SMALL):
                raise EvaluationError("division by ~0", print_canonical(n.right))
            return a / b
        if isinstance(n, Func):
            a = ev(n.arg)
            if n.name == "exp":
                return a.exp()
            if np.any(np.abs(a.value) < SMALL):
                raise EvaluationError(f"{n.name} at a branch point", print_canonical(n.arg))
            return a.log() if n.name == "ln" else a.sqrt()
        if isinstance(n, Pow):
            a = ev(n.base)
            e = n.exponent
            if float(e).is_integer():
                if e < 0 and np.any(np.abs(a.value) < SMALL):
                    raise EvaluationError("negative power of ~0", print_canonical(n.base))
                return a ** int(e)
            if np.any(np.abs(a.value) < SMALL):
                raise EvaluationError("fractional power at a branch point", print_canonical(n.base))
            if float(2 * e).is_integer():
                r = a.sqrt()
                return r ** int(2 * e)
            return a.power(e)
        raise TypeError(f"not an AST node: {n!r}")

    return ev(node)


def evaluate(node: Ast, at: Point4, params=None) -> np.ndarray:
    """Plain value of the expression."""
    return eval_jet(node, at, 0, params).value


def variables_used(node: Ast) -> set:
    if isinstance(node, Var):
        return {node.name}
    if isinstance(node, (Num, Param)):
        return set()
    if isinstance(node, BinOp):
        return variables_used(node.left) | variables_used(node.right)
    if isinstance(node, Neg):
        return variables_used(node.operand)
    if isinstance(node, Func):
        return variables_used(node.arg)
    if isinstance(node, Pow):
        return variables_used(node.base)
    raise TypeError(node)


_SWAP = {"w": "wb", "z": "zb", "wb": "w", "zb": "z"}


def conjugate(node: Ast) -> Ast:
    """Formal complex conjugate: swap w <-> wb, z <-> zb and conjugate literals.

    Parameters are real.  ln and sqrt commute with conjugation off their branch cuts.
    """
    if isinstance(node, Num):
        return Num(complex(node.value).conjugate())
    if isinstance(node, Var):
        return Var(_SWAP[node.name])
    if isinstance(node, Param):
        return node
    if isinstance(node, BinOp):
        return BinOp(node.op, conjugate(node.left), conjugate(node.right))
    if isinstance(node, Neg):
        return Neg(conjugate(node.operand))
    if isinstance(node, Func):
        return Func(node.name, conjugate(node.arg))
    if isinstance(node, Pow):
        return Pow(conjugate(node.base), node.exponent)
    raise TypeError(f"not an AST node: {node!r}")
