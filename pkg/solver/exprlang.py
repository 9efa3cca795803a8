"""
Univariate expression language used to specify h, f and g.

Grammar (recursive descent, no implicit multiplication)::

    expression := term (("+" | "-") term)*
    term       := unary (("*" | "/") unary)*
    unary      := ("-" | "+") unary | power
    power      := primary ("^" unary)?
    primary    := number | "x" | "pi" | "e" | name "(" expression ")" | "(" expression ")"

``^`` binds tighter than unary minus and is right associative; its exponent
must fold to a constant. Constant subtrees are folded while parsing, so the
parsed tree never contains an operator whose operands are all constants.
"""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .exceptions import (
    EvaluationError,
    LexicalError,
    NonConstantExponentError,
    ParseError,
    UnknownFunctionError,
)

logger = logging.getLogger(__name__)

# name -> (scalar implementation, vectorized implementation)
FUNCTIONS: dict[str, tuple[Callable[[float], float], Callable[[np.ndarray], np.ndarray]]] = {
    "sin": (math.sin, np.sin),
    "cos": (math.cos, np.cos),
    "exp": (math.exp, np.exp),
    "abs": (abs, np.abs),
    "sqrt": (math.sqrt, np.sqrt),
    "atan": (math.atan, np.arctan),
}

CONSTANTS = {"pi": math.pi, "π": math.pi, "e": math.e}

# Functions whose value stays bounded whatever their argument does.
BOUNDED_FUNCTIONS = frozenset({"sin", "cos", "atan"})
# Functions mapping bounded arguments to bounded values.
BOUNDED_PRESERVING = frozenset({"abs", "exp", "sqrt"})

_NUMBER = re.compile(r"(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?")
_IDENTIFIER = re.compile(r"[A-Za-z_π][A-Za-z0-9_]*")


@dataclass(frozen=True)
class Token:
    kind: str  # number | identifier | operator | left-paren | right-paren | comma
    lexeme: str
    position: int


def tokenize(src: str) -> list[Token]:
    """Split ``src`` into tokens; whitespace separates tokens and is dropped."""
    tokens: list[Token] = []
    idx = 0
    while idx < len(src):
        c = src[idx]
        if c.isspace():
            idx += 1
            continue
        if c.isdigit() or (c == "." and idx + 1 < len(src) and src[idx + 1].isdigit()):
            match = _NUMBER.match(src, idx)
            tokens.append(Token("number", match.group(), idx))
            idx = match.end()
            continue
        match = _IDENTIFIER.match(src, idx)
        if match:
            tokens.append(Token("identifier", match.group(), idx))
            idx = match.end()
            continue
        if c in "+-*/^":
            tokens.append(Token("operator", c, idx))
        elif c == "(":
            tokens.append(Token("left-paren", c, idx))
        elif c == ")":
            tokens.append(Token("right-paren", c, idx))
        elif c == ",":
            tokens.append(Token("comma", c, idx))
        else:
            raise LexicalError(f"unexpected character {c!r} at offset {idx}", position=idx)
        idx += 1
    return tokens


# --- AST ------------------------------------------------------------------------

class Expr:
    """Base class of expression nodes."""

    def __str__(self) -> str:
        return to_source(self)


@dataclass(frozen=True)
class Constant(Expr):
    value: float


@dataclass(frozen=True)
class Variable(Expr):
    name: str = "x"


@dataclass(frozen=True)
class Negate(Expr):
    operand: Expr


@dataclass(frozen=True)
class Binary(Expr):
    op: str
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Call(Expr):
    name: str
    argument: Expr


# --- Parser -----------------------------------------------------------------------

class _Parser:
    def __init__(self, src: str):
        self.src = src
        self.tokens = tokenize(src)
        self.idx = 0

    def peek(self) -> Token | None:
        return self.tokens[self.idx] if self.idx < len(self.tokens) else None

    def advance(self) -> Token:
        token = self.tokens[self.idx]
        self.idx += 1
        return token

    def at_operator(self, *ops: str) -> bool:
        token = self.peek()
        return token is not None and token.kind == "operator" and token.lexeme in ops

    def end_position(self) -> int:
        return len(self.src)

    def parse(self) -> Expr:
        if not self.tokens:
            raise ParseError("empty expression", position=0)
        node = self.expression()
        token = self.peek()
        if token is not None:
            raise ParseError(f"unexpected {token.lexeme!r} at offset {token.position}", position=token.position)
        return node

    def expression(self) -> Expr:
        node = self.term()
        while self.at_operator("+", "-"):
            op = self.advance()
            node = _binary(op.lexeme, node, self.term(), op.position)
        return node

    def term(self) -> Expr:
        node = self.unary()
        while self.at_operator("*", "/"):
            op = self.advance()
            node = _binary(op.lexeme, node, self.unary(), op.position)
        return node

    def unary(self) -> Expr:
        if self.at_operator("-"):
            op = self.advance()
            return _fold(Negate(self.unary()), op.position)
        if self.at_operator("+"):
            self.advance()
            return self.unary()
        return self.power()

    def power(self) -> Expr:
        base = self.primary()
        if self.at_operator("^"):
            op = self.advance()
            exponent = self.unary()
            if not isinstance(exponent, Constant):
                raise NonConstantExponentError(
                    f"exponent of '^' at offset {op.position} is not constant", position=op.position
                )
            return _binary("^", base, exponent, op.position)
        return base

    def primary(self) -> Expr:
        token = self.peek()
        if token is None:
            pos = self.end_position()
            raise ParseError(f"unexpected end of input at offset {pos}", position=pos)
        if token.kind == "number":
            self.advance()
            return Constant(float(token.lexeme))
        if token.kind == "left-paren":
            self.advance()
            node = self.expression()
            self.expect_right_paren(token)
            return node
        if token.kind == "identifier":
            self.advance()
            return self.identifier(token)
        raise ParseError(f"unexpected {token.lexeme!r} at offset {token.position}", position=token.position)

    def identifier(self, token: Token) -> Expr:
        name = token.lexeme
        following = self.peek()
        if following is not None and following.kind == "left-paren":
            if name not in FUNCTIONS:
                raise UnknownFunctionError(f"unknown function {name!r} at offset {token.position}", position=token.position)
            self.advance()
            argument = self.expression()
            self.expect_right_paren(following)
            return _fold(Call(name, argument), token.position)
        if name == "x":
            return Variable()
        if name in CONSTANTS:
            return Constant(CONSTANTS[name])
        if name in FUNCTIONS:
            raise ParseError(f"missing parenthesis after {name!r} at offset {token.position}", position=token.position)
        raise ParseError(f"unknown identifier {name!r} at offset {token.position}", position=token.position)

    def expect_right_paren(self, opening: Token) -> None:
        token = self.peek()
        if token is None or token.kind != "right-paren":
            pos = token.position if token is not None else self.end_position()
            raise ParseError(f"missing ')' for '(' at offset {opening.position}", position=pos)
        self.advance()


def _binary(op: str, left: Expr, right: Expr, position: int) -> Expr:
    return _fold(Binary(op, left, right), position)


def _fold(node: Expr, position: int) -> Expr:
    children = _children(node)
    if not children or not all(isinstance(child, Constant) for child in children):
        return node
    try:
        value = evaluate(node, 0.0)
    except EvaluationError:
        raise ParseError(f"constant subexpression at offset {position} is not finite", position=position)
    return Constant(value)


def _children(node: Expr) -> tuple[Expr, ...]:
    if isinstance(node, Negate):
        return (node.operand,)
    if isinstance(node, Binary):
        return (node.left, node.right)
    if isinstance(node, Call):
        return (node.argument,)
    return ()


def parse(src: str) -> Expr:
    """Parse ``src`` into an expression tree with constants folded."""
    return _Parser(src).parse()


# --- Evaluation -------------------------------------------------------------------

def evaluate(e: Expr, x: float) -> float:
    """Evaluate ``e`` at ``x`` in double precision."""
    try:
        value = _evaluate(e, float(x))
    except (ZeroDivisionError, ValueError, OverflowError) as exc:
        raise EvaluationError(f"evaluation failed at x={x!r}: {exc}", x=float(x))
    if not math.isfinite(value):
        raise EvaluationError(f"non-finite value at x={x!r}", x=float(x))
    return value


def _evaluate(e: Expr, x: float) -> float:
    if isinstance(e, Constant):
        return e.value
    if isinstance(e, Variable):
        return x
    if isinstance(e, Negate):
        return -_evaluate(e.operand, x)
    if isinstance(e, Binary):
        left = _evaluate(e.left, x)
        right = _evaluate(e.right, x)
        if e.op == "+":
            return left + right
        if e.op == "-":
            return left - right
        if e.op == "*":
            return left * right
        if e.op == "/":
            return left / right
        return math.pow(left, right)
    if isinstance(e, Call):
        return float(FUNCTIONS[e.name][0](_evaluate(e.argument, x)))
    raise TypeError(f"not an expression node: {e!r}")


def evaluate_array(e: Expr, xs: np.ndarray) -> np.ndarray:
    """Vectorized evaluation; any non-finite entry raises with its abscissa."""
    xs = np.asarray(xs, dtype=float)
    with np.errstate(all="ignore"):
        values = np.broadcast_to(_evaluate_array(e, xs), xs.shape).astype(float, copy=True)
    bad = ~np.isfinite(values)
    if bad.any():
        x_bad = float(xs.reshape(-1)[np.flatnonzero(bad.reshape(-1))[0]])
        raise EvaluationError(f"non-finite value at x={x_bad!r}", x=x_bad)
    return values


def _evaluate_array(e: Expr, xs: np.ndarray) -> np.ndarray:
    if isinstance(e, Constant):
        return np.full(xs.shape, e.value)
    if isinstance(e, Variable):
        return xs
    if isinstance(e, Negate):
        return -_evaluate_array(e.operand, xs)
    if isinstance(e, Binary):
        left = _evaluate_array(e.left, xs)
        right = _evaluate_array(e.right, xs)
        if e.op == "+":
            return left + right
        if e.op == "-":
            return left - right
        if e.op == "*":
            return left * right
        if e.op == "/":
            return left / right
        return np.power(left, right)
    if isinstance(e, Call):
        return FUNCTIONS[e.name][1](_evaluate_array(e.argument, xs))
    raise TypeError(f"not an expression node: {e!r}")


# --- Structural analysis ------------------------------------------------------------

def affine_pattern(e: Expr) -> tuple[float, float] | None:
    """Return ``(slope, intercept)`` when ``e`` is syntactically affine in x."""
    if isinstance(e, Constant):
        return 0.0, e.value
    if isinstance(e, Variable):
        return 1.0, 0.0
    if isinstance(e, Negate):
        inner = affine_pattern(e.operand)
        return None if inner is None else (-inner[0], -inner[1])
    if isinstance(e, Binary):
        left = affine_pattern(e.left)
        right = affine_pattern(e.right)
        if left is None or right is None:
            return None
        (s1, b1), (s2, b2) = left, right
        if e.op == "+":
            return s1 + s2, b1 + b2
        if e.op == "-":
            return s1 - s2, b1 - b2
        if e.op == "*":
            if s1 == 0.0:
                return b1 * s2, b1 * b2
            if s2 == 0.0:
                return s1 * b2, b1 * b2
            return None
        if e.op == "/":
            if s2 == 0.0 and b2 != 0.0:
                return s1 / b2, b1 / b2
            return None
        if e.op == "^" and s2 == 0.0:
            if b2 == 1.0:
                return s1, b1
            if b2 == 0.0:
                return 0.0, 1.0
        return None
    return None


def is_bounded(e: Expr) -> bool:
    """True when ``e`` is bounded over the real line by construction."""
    if isinstance(e, Constant):
        return True
    if isinstance(e, Variable):
        return False
    if isinstance(e, Negate):
        return is_bounded(e.operand)
    if isinstance(e, Binary):
        if e.op in "+-*":
            return is_bounded(e.left) and is_bounded(e.right)
        if e.op == "/":
            return is_bounded(e.left) and isinstance(e.right, Constant) and e.right.value != 0.0
        return is_bounded(e.left) and isinstance(e.right, Constant) and e.right.value >= 0.0
    if isinstance(e, Call):
        if e.name in BOUNDED_FUNCTIONS:
            return True
        return e.name in BOUNDED_PRESERVING and is_bounded(e.argument)
    return False


def linear_growth(e: Expr) -> float | None:
    """
    Slope κ such that ``e(x) - κ·x`` is bounded, when that follows from the
    syntax alone (affine parts plus bounded terms); ``None`` otherwise.
    """
    if is_bounded(e):
        return 0.0
    if isinstance(e, Variable):
        return 1.0
    if isinstance(e, Negate):
        inner = linear_growth(e.operand)
        return None if inner is None else -inner
    if isinstance(e, Binary):
        if e.op in "+-":
            left, right = linear_growth(e.left), linear_growth(e.right)
            if left is None or right is None:
                return None
            return left + right if e.op == "+" else left - right
        if e.op == "*":
            if isinstance(e.left, Constant):
                inner = linear_growth(e.right)
                return None if inner is None else e.left.value * inner
            if isinstance(e.right, Constant):
                inner = linear_growth(e.left)
                return None if inner is None else e.right.value * inner
            return None
        if e.op == "/" and isinstance(e.right, Constant) and e.right.value != 0.0:
            inner = linear_growth(e.left)
            return None if inner is None else inner / e.right.value
        if e.op == "^" and isinstance(e.right, Constant) and e.right.value == 1.0:
            return linear_growth(e.left)
    return None


def to_source(e: Expr) -> str:
    """Fully parenthesized source text that parses back to ``e``."""
    if isinstance(e, Constant):
        text = repr(float(e.value))
        return f"({text})" if text.startswith("-") else text
    if isinstance(e, Variable):
        return "x"
    if isinstance(e, Negate):
        return f"(-{to_source(e.operand)})"
    if isinstance(e, Binary):
        return f"({to_source(e.left)} {e.op} {to_source(e.right)})"
    if isinstance(e, Call):
        return f"{e.name}({to_source(e.argument)})"
    raise TypeError(f"not an expression node: {e!r}")


# --- Callable handles -------------------------------------------------------------

class ExprFunction:
    """
    A parsed expression used as a real function: callable on floats and on
    numpy arrays, with its affine pattern and linear growth precomputed.
    """

    def __init__(self, expr: Expr, source: str | None = None):
        self.expr = expr
        self.source = source if source is not None else to_source(expr)
        self.affine = affine_pattern(expr)
        self.growth = linear_growth(expr)

    def __call__(self, x: Union[float, np.ndarray]):
        if np.ndim(x) == 0:
            return evaluate(self.expr, float(x))
        return evaluate_array(self.expr, x)

    def __repr__(self) -> str:
        return f"ExprFunction({self.source!r})"


def compile_expr(src: str) -> ExprFunction:
    expr = parse(src)
    logger.debug(f"Parsed {src!r} as {to_source(expr)}")
    return ExprFunction(expr, source=src)
