"""Arithmetic expressions in one free variable ``x``.

Coefficients b, sigma and the initial data u0, v0 are written as small
expressions so problems can be changed from a config file.  Parsing is a
Pratt parser (binding powers: ``+ -`` 10, ``* /`` 20, unary minus 25,
``^`` 30).  Evaluation works on floats and numpy arrays; a forward-mode dual
evaluation gives exact first derivatives for the adjoint solver.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable, Dict, Iterator, List, Tuple, Union

import numpy as np

from .exceptions import (
    ArityError,
    ExpressionEvalError,
    ExpressionSyntaxError,
    UnknownIdentifierError,
)

ArrayLike = Union[float, np.ndarray]


# --------------------------------------------------------------------------
# tree


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str = "x"


@dataclass(frozen=True)
class Neg:
    operand: "Node"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Pow:
    base: "Node"
    exponent: int


@dataclass(frozen=True)
class Call:
    func: str
    args: Tuple["Node", ...]


Node = Union[Num, Var, Neg, BinOp, Pow, Call]

FUNCTION_ARITY: Dict[str, int] = {
    "sin": 1,
    "cos": 1,
    "exp": 1,
    "tanh": 1,
    "abs": 1,
    "min": 2,
    "max": 2,
}


# --------------------------------------------------------------------------
# tokenizer

TOKEN_PAT = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][-+]?\d+)?)"
    r"|(?P<ident>[A-Za-z_]\w*)"
    r"|(?P<op>\*\*|[-+*/^(),]))"
)


@dataclass(frozen=True)
class Token:
    kind: str  # num | ident | op | end
    text: str
    offset: int


def tokenize(src: str) -> Iterator[Token]:
    pos = 0
    while pos < len(src):
        if src[pos:].strip() == "":
            break
        match = TOKEN_PAT.match(src, pos)
        if match is None or match.end() == pos:
            offset = pos + (len(src[pos:]) - len(src[pos:].lstrip()))
            raise ExpressionSyntaxError(f"unexpected character {src[offset]!r}", offset, src)
        kind = match.lastgroup
        text = match.group(kind)
        offset = match.start(kind)
        if text == "**":
            text = "^"
        yield Token(kind, text, offset)
        pos = match.end()
    yield Token("end", "", len(src))


# --------------------------------------------------------------------------
# parser

BINARY_BP = {"+": 10, "-": 10, "*": 20, "/": 20}
UNARY_BP = 25
POWER_BP = 30


class _Parser:
    def __init__(self, src: str):
        self.src = src
        self.tokens: List[Token] = list(tokenize(src))
        self.index = 0

    @property
    def token(self) -> Token:
        return self.tokens[self.index]

    def advance(self) -> Token:
        tok = self.tokens[self.index]
        self.index += 1
        return tok

    def expect(self, text: str) -> Token:
        tok = self.token
        if tok.text != text or tok.kind == "end":
            found = "end of input" if tok.kind == "end" else repr(tok.text)
            raise ExpressionSyntaxError(f"expected {text!r}, found {found}", tok.offset, self.src)
        return self.advance()

    def parse(self) -> Node:
        node = self.expression(0)
        if self.token.kind != "end":
            raise ExpressionSyntaxError(f"unexpected {self.token.text!r}", self.token.offset, self.src)
        return node

    def expression(self, rbp: int) -> Node:
        left = self.nud(self.advance())
        while True:
            tok = self.token
            lbp = BINARY_BP.get(tok.text, 0) if tok.kind == "op" else 0
            if rbp >= lbp:
                return left
            self.advance()
            right = self.expression(lbp)
            left = BinOp(tok.text, left, right)

    def nud(self, tok: Token) -> Node:
        if tok.kind == "num":
            return self.postfix(Num(float(tok.text)))
        if tok.kind == "ident":
            return self.postfix(self.identifier(tok))
        if tok.kind == "op" and tok.text == "(":
            inner = self.expression(0)
            self.expect(")")
            return self.postfix(inner)
        if tok.kind == "op" and tok.text == "-":
            return Neg(self.expression(UNARY_BP))
        if tok.kind == "op" and tok.text == "+":
            return self.expression(UNARY_BP)
        found = "end of input" if tok.kind == "end" else repr(tok.text)
        raise ExpressionSyntaxError(f"unexpected {found}", tok.offset, self.src)

    def identifier(self, tok: Token) -> Node:
        name = tok.text
        if name == "x":
            return Var()
        if name not in FUNCTION_ARITY:
            raise UnknownIdentifierError(f"unknown identifier {name!r}", tok.offset, self.src)
        self.expect("(")
        args: List[Node] = []
        if self.token.text != ")":
            args.append(self.expression(0))
            while self.token.text == ",":
                self.advance()
                args.append(self.expression(0))
        self.expect(")")
        if len(args) != FUNCTION_ARITY[name]:
            raise ArityError(
                f"{name} takes {FUNCTION_ARITY[name]} argument(s), got {len(args)}",
                tok.offset,
                self.src,
            )
        return Call(name, tuple(args))

    def postfix(self, node: Node) -> Node:
        # '^' binds tighter than unary minus and only takes integer exponents
        while self.token.kind == "op" and self.token.text == "^":
            self.advance()
            sign = 1
            if self.token.text in ("-", "+"):
                sign = -1 if self.advance().text == "-" else 1
            tok = self.advance()
            if tok.kind != "num" or not re.fullmatch(r"\d+", tok.text):
                raise ExpressionSyntaxError("exponent must be an integer literal", tok.offset, self.src)
            node = Pow(node, sign * int(tok.text))
        return node


# --------------------------------------------------------------------------
# evaluation


def _check_finite(value: ArrayLike, what: str) -> None:
    if not np.all(np.isfinite(value)):
        raise ExpressionEvalError(f"non-finite result in {what}")


def _eval(node: Node, x: ArrayLike) -> ArrayLike:
    if isinstance(node, Num):
        return node.value + 0.0 * x
    if isinstance(node, Var):
        return x
    if isinstance(node, Neg):
        return -_eval(node.operand, x)
    if isinstance(node, BinOp):
        a = _eval(node.left, x)
        b = _eval(node.right, x)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        if np.any(b == 0):
            raise ExpressionEvalError("division by zero")
        return a / b
    if isinstance(node, Pow):
        base = _eval(node.base, x)
        if node.exponent < 0 and np.any(base == 0):
            raise ExpressionEvalError("division by zero in negative power")
        return np.power(base, float(node.exponent))
    if isinstance(node, Call):
        args = [_eval(arg, x) for arg in node.args]
        return _FUNCS[node.func](*args)
    raise TypeError(f"not an expression node: {node!r}")


_FUNCS: Dict[str, Callable[..., ArrayLike]] = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "tanh": np.tanh,
    "abs": np.abs,
    "min": np.minimum,
    "max": np.maximum,
}


def _eval_dual(node: Node, x: ArrayLike) -> Tuple[ArrayLike, ArrayLike]:
    """Value and d/dx of the tree (forward-mode dual numbers)."""
    if isinstance(node, Num):
        return node.value + 0.0 * x, 0.0 * x
    if isinstance(node, Var):
        return x, 1.0 + 0.0 * x
    if isinstance(node, Neg):
        v, d = _eval_dual(node.operand, x)
        return -v, -d
    if isinstance(node, BinOp):
        a, da = _eval_dual(node.left, x)
        b, db = _eval_dual(node.right, x)
        if node.op == "+":
            return a + b, da + db
        if node.op == "-":
            return a - b, da - db
        if node.op == "*":
            return a * b, da * b + a * db
        if np.any(b == 0):
            raise ExpressionEvalError("division by zero")
        return a / b, (da * b - a * db) / (b * b)
    if isinstance(node, Pow):
        v, d = _eval_dual(node.base, x)
        k = node.exponent
        if k < 0 and np.any(v == 0):
            raise ExpressionEvalError("division by zero in negative power")
        if k == 0:
            return 1.0 + 0.0 * v, 0.0 * v
        return np.power(v, float(k)), k * np.power(v, float(k - 1)) * d
    if isinstance(node, Call):
        duals = [_eval_dual(arg, x) for arg in node.args]
        (a, da) = duals[0]
        f = node.func
        if f == "sin":
            return np.sin(a), np.cos(a) * da
        if f == "cos":
            return np.cos(a), -np.sin(a) * da
        if f == "exp":
            e = np.exp(a)
            return e, e * da
        if f == "tanh":
            th = np.tanh(a)
            return th, (1.0 - th * th) * da
        if f == "abs":
            return np.abs(a), np.sign(a) * da
        b, db = duals[1]
        pick_left = a <= b if f == "min" else a >= b
        return np.where(pick_left, a, b), np.where(pick_left, da, db)
    raise TypeError(f"not an expression node: {node!r}")


# --------------------------------------------------------------------------
# printing


def to_source(node: Node) -> str:
    if isinstance(node, Num):
        text = repr(float(node.value))
        return f"({text})" if node.value < 0 or text.startswith("-") else text
    if isinstance(node, Var):
        return "x"
    if isinstance(node, Neg):
        return f"(-{to_source(node.operand)})"
    if isinstance(node, BinOp):
        return f"({to_source(node.left)} {node.op} {to_source(node.right)})"
    if isinstance(node, Pow):
        return f"({to_source(node.base)})^{node.exponent}"
    if isinstance(node, Call):
        return f"{node.func}({', '.join(to_source(a) for a in node.args)})"
    raise TypeError(f"not an expression node: {node!r}")


def _has_var(node: Node) -> bool:
    if isinstance(node, Var):
        return True
    if isinstance(node, Num):
        return False
    if isinstance(node, Neg):
        return _has_var(node.operand)
    if isinstance(node, BinOp):
        return _has_var(node.left) or _has_var(node.right)
    if isinstance(node, Pow):
        return _has_var(node.base)
    return any(_has_var(a) for a in node.args)


# --------------------------------------------------------------------------
# public API


@dataclass(frozen=True)
class Expression:
    """Immutable parsed expression; safe to share between threads and processes."""

    root: Node
    source: str

    def __call__(self, x: ArrayLike) -> ArrayLike:
        return eval_expression(self, x)

    def with_derivative(self, x: ArrayLike) -> Tuple[ArrayLike, ArrayLike]:
        try:
            with np.errstate(over="raise", invalid="raise", divide="raise", under="ignore"):
                value, deriv = _eval_dual(self.root, np.asarray(x, dtype=float))
        except FloatingPointError as exc:
            raise ExpressionEvalError(f"{self.source}: {exc}") from exc
        _check_finite(value, self.source)
        _check_finite(deriv, self.source)
        return value, deriv

    def derivative(self, x: ArrayLike) -> ArrayLike:
        return self.with_derivative(x)[1]

    def is_constant(self) -> bool:
        return not _has_var(self.root)

    def to_source(self) -> str:
        return to_source(self.root)

    def __str__(self) -> str:
        return self.source


def parse_expression(src: str) -> Expression:
    if src is None or not src.strip():
        raise ExpressionSyntaxError("empty expression", 0, src or "")
    return Expression(_Parser(src).parse(), src.strip())


def eval_expression(e: Expression, x: ArrayLike) -> ArrayLike:
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ExpressionEvalError(f"{e.source}: non-finite argument")
    try:
        with np.errstate(over="raise", invalid="raise", divide="raise", under="ignore"):
            value = _eval(e.root, arr)
    except FloatingPointError as exc:
        raise ExpressionEvalError(f"{e.source}: {exc}") from exc
    _check_finite(value, e.source)
    if np.ndim(value) == 0:
        return float(value)
    return value
