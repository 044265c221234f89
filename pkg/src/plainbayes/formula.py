"""The likelihood-mean expression language: lexer, parser, evaluator, derivatives.

Grammar (EBNF)::

    expr    := term  (("+" | "-") term)*
    term    := unary (("*" | "/") unary)*
    unary   := "-" unary | primary
    primary := NUMBER | IDENT | "(" expr ")"

Binary operators are left-associative; unary minus binds tighter than "*"
and "/".  Only those constructs are accepted.  Exponentiation (``^``,
``**``) and function calls are rejected with position-bearing errors so
that out-of-contract model formulas fail fast instead of misparsing.

Evaluation environments may bind numpy arrays as well as scalars; arithmetic
then broadcasts element-wise, which is how the posterior module applies one
scalar formula across every data row.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterator, Mapping, Sequence, Union

import numpy as np

from .errors import (
    IllegalCharacter,
    NonFiniteResult,
    UnboundVariable,
    UnexpectedEnd,
    UnexpectedToken,
)

__all__ = [
    "NumberLiteral",
    "Variable",
    "Negate",
    "Binary",
    "FormulaAst",
    "Token",
    "tokenize",
    "parse",
    "parse_formula",
    "free_vars",
    "evaluate",
    "differentiate",
    "simplify",
    "to_source",
]


# ---------------------------------------------------------------------------
# AST


@dataclass(frozen=True)
class NumberLiteral:
    value: float

    def __post_init__(self):
        if not np.isfinite(self.value):
            raise ValueError(f"number literals must be finite, got {self.value!r}")


@dataclass(frozen=True)
class Variable:
    name: str


@dataclass(frozen=True)
class Negate:
    child: "FormulaAst"


@dataclass(frozen=True)
class Binary:
    op: str  # one of + - * /
    left: "FormulaAst"
    right: "FormulaAst"


FormulaAst = Union[NumberLiteral, Variable, Negate, Binary]


# ---------------------------------------------------------------------------
# Lexer


@dataclass(frozen=True)
class Token:
    kind: str  # "number" | "ident" | one of "+-*/()"
    text: str
    pos: int
    value: float | None = None


_NUMBER_RE = re.compile(r"(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?")
_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_OPERATORS = "+-*/()"


def tokenize(source: str) -> list[Token]:
    """Lex a formula source string into tokens, skipping whitespace."""
    tokens: list[Token] = []
    i = 0
    n = len(source)
    while i < n:
        c = source[i]
        if c.isspace():
            i += 1
            continue
        if c == "^":
            raise IllegalCharacter(i, "unsupported operator '^' (exponentiation is not part of the formula grammar)")
        if c == "*" and i + 1 < n and source[i + 1] == "*":
            raise IllegalCharacter(i, "unsupported operator '**' (exponentiation is not part of the formula grammar)")
        if c in _OPERATORS:
            tokens.append(Token(c, c, i))
            i += 1
            continue
        m = _NUMBER_RE.match(source, i)
        if m:
            tokens.append(Token("number", m.group(), i, value=float(m.group())))
            i = m.end()
            continue
        m = _IDENT_RE.match(source, i)
        if m:
            tokens.append(Token("ident", m.group(), i))
            i = m.end()
            continue
        raise IllegalCharacter(i, repr(c))
    return tokens


# ---------------------------------------------------------------------------
# Parser (recursive descent)


class _Parser:
    def __init__(self, tokens: Sequence[Token]):
        self.tokens = list(tokens)
        self.i = 0

    def peek(self) -> Token | None:
        return self.tokens[self.i] if self.i < len(self.tokens) else None

    def advance(self) -> Token:
        tok = self.peek()
        if tok is None:
            raise UnexpectedEnd()
        self.i += 1
        return tok

    def parse_expr(self) -> FormulaAst:
        node = self.parse_term()
        while (tok := self.peek()) is not None and tok.kind in "+-":
            self.advance()
            node = Binary(tok.kind, node, self.parse_term())
        return node

    def parse_term(self) -> FormulaAst:
        node = self.parse_unary()
        while (tok := self.peek()) is not None and tok.kind in "*/":
            self.advance()
            node = Binary(tok.kind, node, self.parse_unary())
        return node

    def parse_unary(self) -> FormulaAst:
        tok = self.peek()
        if tok is None:
            raise UnexpectedEnd()
        if tok.kind == "-":
            self.advance()
            nxt = self.peek()
            # "-3" is one negative literal; "-(3)" stays an explicit negation.
            if nxt is not None and nxt.kind == "number":
                self.advance()
                return NumberLiteral(-nxt.value)
            return Negate(self.parse_unary())
        return self.parse_primary()

    def parse_primary(self) -> FormulaAst:
        tok = self.peek()
        if tok is None:
            raise UnexpectedEnd()
        if tok.kind == "number":
            self.advance()
            return NumberLiteral(tok.value)
        if tok.kind == "ident":
            self.advance()
            nxt = self.peek()
            if nxt is not None and nxt.kind == "(":
                raise UnexpectedToken(
                    nxt.pos, f"'(' after {tok.text!r}; function calls are not supported"
                )
            return Variable(tok.text)
        if tok.kind == "(":
            self.advance()
            node = self.parse_expr()
            closing = self.peek()
            if closing is None:
                raise UnexpectedEnd("missing closing parenthesis")
            if closing.kind != ")":
                raise UnexpectedToken(closing.pos, f"{closing.text!r} (expected ')')")
            self.advance()
            return node
        raise UnexpectedToken(tok.pos, repr(tok.text))


def parse(tokens: Sequence[Token]) -> FormulaAst:
    """Parse a token sequence into an AST, requiring all tokens be consumed."""
    parser = _Parser(tokens)
    node = parser.parse_expr()
    tok = parser.peek()
    if tok is not None:
        raise UnexpectedToken(tok.pos, repr(tok.text))
    return node


def parse_formula(source: str) -> FormulaAst:
    """Convenience: ``parse(tokenize(source))``."""
    return parse(tokenize(source))


# ---------------------------------------------------------------------------
# Analysis and evaluation


def free_vars(ast: FormulaAst) -> set[str]:
    """The exact set of variable names appearing in the expression."""
    if isinstance(ast, NumberLiteral):
        return set()
    if isinstance(ast, Variable):
        return {ast.name}
    if isinstance(ast, Negate):
        return free_vars(ast.child)
    return free_vars(ast.left) | free_vars(ast.right)


def _all_finite(value) -> bool:
    return bool(np.all(np.isfinite(value)))


def _eval(node: FormulaAst, env: Mapping[str, object]):
    if isinstance(node, NumberLiteral):
        return node.value
    if isinstance(node, Variable):
        try:
            return env[node.name]
        except KeyError:
            raise UnboundVariable(node.name) from None
    if isinstance(node, Negate):
        return -_eval(node.child, env)
    left = _eval(node.left, env)
    right = _eval(node.right, env)
    if node.op == "+":
        return left + right
    if node.op == "-":
        return left - right
    if node.op == "*":
        return left * right
    # Division: non-finite quotients are an error, not IEEE propagation.
    try:
        with np.errstate(divide="ignore", invalid="ignore"):
            out = left / right
    except ZeroDivisionError:
        raise NonFiniteResult(f"division by zero in {to_source(node)!r}") from None
    if not _all_finite(out):
        raise NonFiniteResult(f"non-finite quotient in {to_source(node)!r}", value=out)
    return out


def evaluate(ast: FormulaAst, env: Mapping[str, object]):
    """Evaluate the expression under ``env``.

    ``env`` maps variable names to floats or numpy arrays; array values
    broadcast element-wise.  Raises :class:`UnboundVariable` for missing
    names and :class:`NonFiniteResult` if any (intermediate quotient or
    final) value is not finite.
    """
    value = _eval(ast, env)
    if not _all_finite(value):
        raise NonFiniteResult("expression evaluated to a non-finite value", value=value)
    return value


# ---------------------------------------------------------------------------
# Symbolic differentiation


_ZERO = NumberLiteral(0.0)
_ONE = NumberLiteral(1.0)


def _is_literal(node: FormulaAst, value: float) -> bool:
    return isinstance(node, NumberLiteral) and node.value == value


def simplify(node: FormulaAst) -> FormulaAst:
    """Best-effort simplification: constant folding plus identity elimination.

    Applied rules: fold binary/unary operations on finite literals (division
    by a literal zero is left intact), 0+e -> e, e-0 -> e, 0-e -> -e,
    1*e -> e, 0*e -> 0, e/1 -> e, and double-negation elimination.
    """
    if isinstance(node, (NumberLiteral, Variable)):
        return node
    if isinstance(node, Negate):
        child = simplify(node.child)
        if isinstance(child, NumberLiteral):
            return NumberLiteral(-child.value)
        if isinstance(child, Negate):
            return child.child
        return Negate(child)

    left = simplify(node.left)
    right = simplify(node.right)
    op = node.op
    if isinstance(left, NumberLiteral) and isinstance(right, NumberLiteral):
        if op == "+":
            folded = left.value + right.value
        elif op == "-":
            folded = left.value - right.value
        elif op == "*":
            folded = left.value * right.value
        elif right.value != 0.0:
            folded = left.value / right.value
        else:
            folded = float("nan")  # x/0: leave the node intact
        if np.isfinite(folded):
            return NumberLiteral(float(folded))
    if op == "+":
        if _is_literal(left, 0.0):
            return right
        if _is_literal(right, 0.0):
            return left
    elif op == "-":
        if _is_literal(right, 0.0):
            return left
        if _is_literal(left, 0.0):
            return simplify(Negate(right))
    elif op == "*":
        if _is_literal(left, 0.0) or _is_literal(right, 0.0):
            return _ZERO
        if _is_literal(left, 1.0):
            return right
        if _is_literal(right, 1.0):
            return left
    elif op == "/":
        if _is_literal(right, 1.0):
            return left
    return Binary(op, left, right)


def _diff(node: FormulaAst, var: str) -> FormulaAst:
    if isinstance(node, NumberLiteral):
        return _ZERO
    if isinstance(node, Variable):
        return _ONE if node.name == var else _ZERO
    if isinstance(node, Negate):
        return Negate(_diff(node.child, var))
    dl = _diff(node.left, var)
    dr = _diff(node.right, var)
    if node.op in "+-":
        return Binary(node.op, dl, dr)
    if node.op == "*":
        return Binary("+", Binary("*", dl, node.right), Binary("*", node.left, dr))
    # quotient rule: (l/r)' = (l'r - lr') / r^2
    numerator = Binary("-", Binary("*", dl, node.right), Binary("*", node.left, dr))
    return Binary("/", numerator, Binary("*", node.right, node.right))


def differentiate(ast: FormulaAst, var: str) -> FormulaAst:
    """Symbolic partial derivative of ``ast`` with respect to ``var``."""
    return simplify(_diff(ast, var))


# ---------------------------------------------------------------------------
# Canonical printing


_PREC = {"+": 10, "-": 10, "*": 20, "/": 20}
_UNARY_PREC = 30


def _print(node: FormulaAst) -> tuple[str, int]:
    if isinstance(node, NumberLiteral):
        return repr(node.value), 100
    if isinstance(node, Variable):
        return node.name, 100
    if isinstance(node, Negate):
        text, prec = _print(node.child)
        # parenthesize negated literals so they re-parse as Negate, not as a
        # (folded) negative literal
        if prec < _UNARY_PREC or isinstance(node.child, NumberLiteral):
            text = f"({text})"
        return f"-{text}", _UNARY_PREC
    prec = _PREC[node.op]
    left_text, left_prec = _print(node.left)
    right_text, right_prec = _print(node.right)
    if left_prec < prec:
        left_text = f"({left_text})"
    if right_prec <= prec:  # left associativity
        right_text = f"({right_text})"
    return f"{left_text} {node.op} {right_text}", prec


def to_source(ast: FormulaAst) -> str:
    """Render the AST as formula source; ``parse_formula(to_source(a)) == a``."""
    return _print(ast)[0]


def iter_nodes(ast: FormulaAst) -> Iterator[FormulaAst]:
    """Pre-order traversal of every node in the tree."""
    yield ast
    if isinstance(ast, Negate):
        yield from iter_nodes(ast.child)
    elif isinstance(ast, Binary):
        yield from iter_nodes(ast.left)
        yield from iter_nodes(ast.right)
