"""
Lexer and recursive-descent parser for spatial regular expressions.

Inside `[...]` the same glyphs serve formulas, set terms and metric
expressions (`&` is conjunction or intersection, `~` negation or complement),
so bracket contents are parsed into a neutral tree first and then resolved
by the position each operand occupies.
"""

import logging
import re
from dataclasses import dataclass
from enum import Enum
from functools import reduce
from typing import Any, FrozenSet, List, Optional, Sequence, Tuple

from app.regions import METRIC_FUNCTIONS
from app.syntax import (
    Add,
    Alternation,
    And,
    Atom,
    BinaryFn,
    Closure,
    Complement,
    Concatenation,
    Const,
    Epsilon,
    Exists,
    FormulaLeaf,
    Interior,
    Intersect,
    KleeneStar,
    LessEq,
    MetricExpr,
    Mul,
    Negate,
    NonEmpty,
    Not,
    Or,
    Pow,
    QueryAst,
    Range,
    RegexNode,
    SpatialFormula,
    SpatialTerm,
    SubsetOf,
    TermAtom,
    UnaryFn,
    Union_,
    Var,
)

logger = logging.getLogger(__name__)


class QueryError(Exception):
    """Custom exception for query-language errors."""
    pass


class QueryLexError(QueryError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class QuerySyntaxError(QueryError):
    def __init__(self, message: str, span: Tuple[int, int], expected: Sequence[str] = ()):
        detail = f"{message} at {span[0]}..{span[1]}"
        if expected:
            detail += f" (expected one of: {', '.join(expected)})"
        super().__init__(detail)
        self.span = span
        self.expected = tuple(expected)


class QueryArityError(QuerySyntaxError):
    pass


# ==================== TOKENS ====================


class TokenKind(Enum):
    LBRACK = "["
    RBRACK = "]"
    LPAREN = "("
    RPAREN = ")"
    PIPE = "|"
    AMP = "&"
    TILDE = "~"
    STAR = "*"
    PLUS = "+"
    MINUS = "-"
    CARET = "^"
    COMMA = ","
    COLONEQ = ":="
    LT = "<"
    LE = "<="
    GT = ">"
    GE = ">="
    EQ = "="
    RANGE = "{m,n}"
    ANGLE = "<op>"
    ATTRCLASS = "[:name:]"
    NUMBER = "number"
    IDENT = "identifier"


@dataclass(frozen=True)
class Token:
    kind: TokenKind
    text: str
    span: Tuple[int, int]
    value: Any = None


# operator name -> number of parenthesized arguments (exists is parsed specially)
STRUCTURAL_OPERATORS = {"nonempty": 1, "subset": 2, "interior": 1, "closure": 1, "exists": 2}
SUGAR_OPERATORS = {"leftof": 2, "rightof": 2, "frontof": 2, "behind": 2}
ANGLE_OPERATORS = set(STRUCTURAL_OPERATORS) | set(SUGAR_OPERATORS) | set(METRIC_FUNCTIONS)

_SINGLE = {
    "[": TokenKind.LBRACK,
    "]": TokenKind.RBRACK,
    "(": TokenKind.LPAREN,
    ")": TokenKind.RPAREN,
    "|": TokenKind.PIPE,
    "&": TokenKind.AMP,
    "~": TokenKind.TILDE,
    "*": TokenKind.STAR,
    "+": TokenKind.PLUS,
    "-": TokenKind.MINUS,
    "^": TokenKind.CARET,
    ",": TokenKind.COMMA,
    "=": TokenKind.EQ,
}

_ANGLE_RE = re.compile(r"<([A-Za-z_][A-Za-z0-9_]*)>")
_RANGE_RE = re.compile(r"\{\s*(\d+)\s*(?:(,)\s*(\d*)\s*)?\}")
_NUMBER_RE = re.compile(r"(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?")
_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")


def tokenize(query: str) -> List[Token]:
    """
    Split a query into tokens with source spans. Whitespace is insignificant.

    Raises:
        QueryLexError: unterminated attribute class, unknown angle operator,
            malformed range, or an unexpected character
    """
    tokens: List[Token] = []
    pos = 0
    length = len(query)

    while pos < length:
        ch = query[pos]
        if ch.isspace():
            pos += 1
            continue

        if query.startswith("[:", pos):
            end = query.find(":]", pos + 2)
            if end == -1:
                raise QueryLexError("unterminated attribute class", pos)
            names = [name.strip() for name in query[pos + 2:end].split(",")]
            if not all(names):
                raise QueryLexError("empty attribute name", pos)
            tokens.append(Token(TokenKind.ATTRCLASS, query[pos:end + 2], (pos, end + 2), frozenset(names)))
            pos = end + 2
            continue

        if ch == "<":
            angle = _ANGLE_RE.match(query, pos)
            if angle:
                name = angle.group(1)
                if name not in ANGLE_OPERATORS:
                    raise QueryLexError(f"unknown operator <{name}>", pos)
                tokens.append(Token(TokenKind.ANGLE, angle.group(0), angle.span(), name))
                pos = angle.end()
            elif query.startswith("<=", pos):
                tokens.append(Token(TokenKind.LE, "<=", (pos, pos + 2)))
                pos += 2
            else:
                tokens.append(Token(TokenKind.LT, "<", (pos, pos + 1)))
                pos += 1
            continue

        if ch == ">":
            if query.startswith(">=", pos):
                tokens.append(Token(TokenKind.GE, ">=", (pos, pos + 2)))
                pos += 2
            else:
                tokens.append(Token(TokenKind.GT, ">", (pos, pos + 1)))
                pos += 1
            continue

        if ch == ":":
            if query.startswith(":=", pos):
                tokens.append(Token(TokenKind.COLONEQ, ":=", (pos, pos + 2)))
                pos += 2
                continue
            raise QueryLexError("unexpected ':'", pos)

        if ch == "{":
            bounds = _RANGE_RE.match(query, pos)
            if not bounds:
                raise QueryLexError("malformed range", pos)
            m = int(bounds.group(1))
            if bounds.group(2) is None:
                n: Optional[int] = m
            elif bounds.group(3):
                n = int(bounds.group(3))
            else:
                n = None
            tokens.append(Token(TokenKind.RANGE, bounds.group(0), bounds.span(), (m, n)))
            pos = bounds.end()
            continue

        number = _NUMBER_RE.match(query, pos)
        if number:
            tokens.append(Token(TokenKind.NUMBER, number.group(0), number.span(), float(number.group(0))))
            pos = number.end()
            continue

        ident = _IDENT_RE.match(query, pos)
        if ident:
            tokens.append(Token(TokenKind.IDENT, ident.group(0), ident.span(), ident.group(0)))
            pos = ident.end()
            continue

        if ch in _SINGLE:
            tokens.append(Token(_SINGLE[ch], ch, (pos, pos + 1)))
            pos += 1
            continue

        raise QueryLexError(f"unexpected character {ch!r}", pos)

    return tokens


# ==================== NEUTRAL BRACKET TREE ====================


@dataclass(frozen=True)
class _Node:
    """Bracket-level node whose role (formula, term or metric) is not yet known."""

    kind: str
    args: Tuple[Any, ...]
    span: Tuple[int, int]


def _describe(node: _Node) -> str:
    return {
        "attr": "an attribute class",
        "var": "a variable",
        "num": "a number",
        "cmp": "a comparison",
        "exists": "an existential formula",
    }.get(node.kind, f"'{node.kind}' expression")


def _to_formula(node: _Node) -> SpatialFormula:
    kind, args = node.kind, node.args
    if kind == "attr":
        return Atom(args[0])
    if kind == "not":
        return Not(_to_formula(args[0]))
    if kind == "and":
        return And(_to_formula(args[0]), _to_formula(args[1]))
    if kind == "or":
        return Or(_to_formula(args[0]), _to_formula(args[1]))
    if kind == "exists":
        var, binder, body = args
        return Exists(var, binder, _to_formula(body))
    if kind == "cmp":
        op, left, right = args
        lhs, rhs = _to_metric(left), _to_metric(right)
        return _compare(op, lhs, rhs)
    if kind == "call":
        name, operands = args
        if name == "nonempty":
            return NonEmpty(_to_term(operands[0]))
        if name == "subset":
            return SubsetOf(_to_term(operands[0]), _to_term(operands[1]))
        if name in SUGAR_OPERATORS:
            return _expand_sugar(name, _to_term(operands[0]), _to_term(operands[1]))
    raise QuerySyntaxError(f"expected a spatial formula, found {_describe(node)}", node.span)


def _to_term(node: _Node) -> SpatialTerm:
    kind, args = node.kind, node.args
    if kind == "attr":
        return TermAtom(args[0])
    if kind == "var":
        return Var(args[0])
    if kind == "not":
        return Complement(_to_term(args[0]))
    if kind == "and":
        return Intersect(_to_term(args[0]), _to_term(args[1]))
    if kind == "or":
        return Union_(_to_term(args[0]), _to_term(args[1]))
    if kind == "call" and args[0] in ("interior", "closure"):
        inner = _to_term(args[1][0])
        return Interior(inner) if args[0] == "interior" else Closure(inner)
    raise QuerySyntaxError(f"expected a spatial term, found {_describe(node)}", node.span)


def _to_metric(node: _Node) -> MetricExpr:
    kind, args = node.kind, node.args
    if kind == "num":
        return Const(args[0])
    if kind == "neg":
        return Negate(_to_metric(args[0]))
    if kind == "add":
        return Add(_to_metric(args[0]), _to_metric(args[1]))
    if kind == "sub":
        return Add(_to_metric(args[0]), Negate(_to_metric(args[1])))
    if kind == "mul":
        return Mul(_to_metric(args[0]), _to_metric(args[1]))
    if kind == "pow":
        return Pow(_to_metric(args[0]), args[1])
    if kind == "call" and args[0] in METRIC_FUNCTIONS:
        name, operands = args
        if len(operands) == 1:
            return UnaryFn(name, _to_term(operands[0]))
        return BinaryFn(name, _to_term(operands[0]), _to_term(operands[1]))
    raise QuerySyntaxError(f"expected a metric expression, found {_describe(node)}", node.span)


def _strictly_less(lhs: MetricExpr, rhs: MetricExpr) -> SpatialFormula:
    # e <= e holds exactly when e has a value, so an empty side stays false under the negation.
    formula: SpatialFormula = Not(LessEq(rhs, lhs))
    for side in (rhs, lhs):
        if not isinstance(side, Const):
            formula = And(LessEq(side, side), formula)
    return formula


def _compare(op: TokenKind, lhs: MetricExpr, rhs: MetricExpr) -> SpatialFormula:
    # Only <= is primitive; the other comparators are derived from it.
    if op is TokenKind.LE:
        return LessEq(lhs, rhs)
    if op is TokenKind.GE:
        return LessEq(rhs, lhs)
    if op is TokenKind.LT:
        return _strictly_less(lhs, rhs)
    if op is TokenKind.GT:
        return _strictly_less(rhs, lhs)
    return And(LessEq(lhs, rhs), LessEq(rhs, lhs))


def _expand_sugar(name: str, a: SpatialTerm, b: SpatialTerm) -> SpatialFormula:
    if name == "leftof":
        return _compare(TokenKind.LT, UnaryFn("y", a), UnaryFn("y", b))
    if name == "rightof":
        return _compare(TokenKind.GT, UnaryFn("y", a), UnaryFn("y", b))
    if name == "frontof":
        return _compare(TokenKind.GT, UnaryFn("x", a), UnaryFn("x", b))
    return _compare(TokenKind.LT, UnaryFn("x", a), UnaryFn("x", b))


# ==================== PARSER ====================

_RELATIONAL = (TokenKind.LT, TokenKind.LE, TokenKind.GT, TokenKind.GE, TokenKind.EQ)


class Parser:
    """Recursive-descent parser over a token list."""

    def __init__(self, tokens: Sequence[Token]):
        self.tokens = list(tokens)
        self.pos = 0

    # -------- helpers --------

    def peek(self, ahead: int = 0) -> Optional[Token]:
        index = self.pos + ahead
        if index < len(self.tokens):
            return self.tokens[index]
        return None

    def at(self, *kinds: TokenKind) -> bool:
        token = self.peek()
        return token is not None and token.kind in kinds

    def _here(self) -> Tuple[int, int]:
        token = self.peek()
        if token is not None:
            return token.span
        end = self.tokens[-1].span[1] if self.tokens else 0
        return (end, end)

    def expect(self, *kinds: TokenKind) -> Token:
        token = self.peek()
        if token is None or token.kind not in kinds:
            found = "end of query" if token is None else repr(token.text)
            raise QuerySyntaxError(f"unexpected {found}", self._here(), [k.value for k in kinds])
        self.pos += 1
        return token

    # -------- regex level --------

    def parse_query(self) -> QueryAst:
        if not self.tokens:
            raise QuerySyntaxError("empty query", (0, 0), ["[", "("])
        root = self.parse_regex()
        if self.peek() is not None:
            raise QuerySyntaxError(f"unexpected {self.peek().text!r}", self._here(), ["|", "[", "(", "end of query"])
        return QueryAst(root)

    def parse_regex(self) -> RegexNode:
        left = self.parse_concatenation()
        while self.at(TokenKind.PIPE):
            self.pos += 1
            left = Alternation(left, self.parse_concatenation())
        return left

    def parse_concatenation(self) -> RegexNode:
        items = []
        while self.at(TokenKind.LBRACK, TokenKind.LPAREN):
            items.append(self.parse_postfix())
        if not items:
            found = "end of query" if self.peek() is None else repr(self.peek().text)
            raise QuerySyntaxError(f"unexpected {found}", self._here(), ["[", "("])
        return reduce(Concatenation, items)

    def parse_postfix(self) -> RegexNode:
        node = self.parse_group()
        while self.at(TokenKind.STAR, TokenKind.RANGE):
            token = self.expect(TokenKind.STAR, TokenKind.RANGE)
            if token.kind is TokenKind.STAR:
                node = KleeneStar(node)
            else:
                m, n = token.value
                if n is not None and m > n:
                    raise QuerySyntaxError(f"range lower bound {m} exceeds upper bound {n}", token.span)
                node = Range(node, m, n)
        return node

    def parse_group(self) -> RegexNode:
        token = self.expect(TokenKind.LBRACK, TokenKind.LPAREN)
        if token.kind is TokenKind.LPAREN:
            if self.at(TokenKind.RPAREN):
                self.pos += 1
                return Epsilon()
            node = self.parse_regex()
            self.expect(TokenKind.RPAREN)
            return node
        formula = _to_formula(self.parse_or())
        self.expect(TokenKind.RBRACK)
        return FormulaLeaf(formula)

    # -------- bracket level --------

    def _binary(self, kind: str, left: _Node, right: _Node) -> _Node:
        return _Node(kind, (left, right), (left.span[0], right.span[1]))

    def parse_or(self) -> _Node:
        left = self.parse_and()
        while self.at(TokenKind.PIPE):
            self.pos += 1
            left = self._binary("or", left, self.parse_and())
        return left

    def parse_and(self) -> _Node:
        left = self.parse_unary()
        while self.at(TokenKind.AMP):
            self.pos += 1
            left = self._binary("and", left, self.parse_unary())
        return left

    def parse_unary(self) -> _Node:
        if self.at(TokenKind.TILDE):
            start = self.expect(TokenKind.TILDE).span[0]
            inner = self.parse_unary()
            return _Node("not", (inner,), (start, inner.span[1]))
        return self.parse_comparison()

    def parse_comparison(self) -> _Node:
        left = self.parse_additive()
        if self.at(*_RELATIONAL):
            op = self.expect(*_RELATIONAL).kind
            right = self.parse_additive()
            return _Node("cmp", (op, left, right), (left.span[0], right.span[1]))
        return left

    def parse_additive(self) -> _Node:
        left = self.parse_multiplicative()
        while self.at(TokenKind.PLUS, TokenKind.MINUS):
            op = self.expect(TokenKind.PLUS, TokenKind.MINUS).kind
            kind = "add" if op is TokenKind.PLUS else "sub"
            left = self._binary(kind, left, self.parse_multiplicative())
        return left

    def parse_multiplicative(self) -> _Node:
        left = self.parse_signed()
        while self.at(TokenKind.STAR):
            self.pos += 1
            left = self._binary("mul", left, self.parse_signed())
        return left

    def parse_signed(self) -> _Node:
        if self.at(TokenKind.MINUS):
            start = self.expect(TokenKind.MINUS).span[0]
            nxt, after = self.peek(), self.peek(1)
            # ^ binds tighter than unary minus: -2^2 is -(2^2)
            if nxt is not None and nxt.kind is TokenKind.NUMBER and (after is None or after.kind is not TokenKind.CARET):
                self.pos += 1
                return self.parse_power(_Node("num", (-nxt.value,), (start, nxt.span[1])))
            inner = self.parse_signed()
            return _Node("neg", (inner,), (start, inner.span[1]))
        return self.parse_power(self.parse_primary())

    def parse_power(self, base: _Node) -> _Node:
        if not self.at(TokenKind.CARET):
            return base
        self.pos += 1
        negative = False
        if self.at(TokenKind.MINUS):
            self.pos += 1
            negative = True
        exponent = self.expect(TokenKind.NUMBER)
        value = -exponent.value if negative else exponent.value
        return _Node("pow", (base, value), (base.span[0], exponent.span[1]))

    def parse_primary(self) -> _Node:
        token = self.expect(
            TokenKind.ATTRCLASS, TokenKind.IDENT, TokenKind.NUMBER, TokenKind.LPAREN, TokenKind.ANGLE
        )
        if token.kind is TokenKind.ATTRCLASS:
            return _Node("attr", (token.value,), token.span)
        if token.kind is TokenKind.IDENT:
            return _Node("var", (token.value,), token.span)
        if token.kind is TokenKind.NUMBER:
            return _Node("num", (token.value,), token.span)
        if token.kind is TokenKind.LPAREN:
            inner = self.parse_or()
            self.expect(TokenKind.RPAREN)
            return inner
        if token.value == "exists":
            return self.parse_exists(token)
        return self.parse_call(token)

    def parse_exists(self, op: Token) -> _Node:
        self.expect(TokenKind.LPAREN)
        var = self.expect(TokenKind.IDENT).value
        self.expect(TokenKind.COLONEQ)
        binder = self.expect(TokenKind.ATTRCLASS).value
        self.expect(TokenKind.RPAREN)
        self.expect(TokenKind.LPAREN)
        body = self.parse_or()
        end = self.expect(TokenKind.RPAREN).span[1]
        return _Node("exists", (var, binder, body), (op.span[0], end))

    def parse_call(self, op: Token) -> _Node:
        name = op.value
        self.expect(TokenKind.LPAREN)
        operands = [self.parse_or()]
        while self.at(TokenKind.COMMA):
            self.pos += 1
            operands.append(self.parse_or())
        end = self.expect(TokenKind.RPAREN).span[1]

        if name in METRIC_FUNCTIONS:
            arity = METRIC_FUNCTIONS[name][0]
        elif name in SUGAR_OPERATORS:
            arity = SUGAR_OPERATORS[name]
        else:
            arity = STRUCTURAL_OPERATORS[name]
        if len(operands) != arity:
            raise QueryArityError(
                f"<{name}> takes {arity} argument(s), got {len(operands)}", (op.span[0], end)
            )
        return _Node("call", (name, tuple(operands)), (op.span[0], end))


def parse(tokens: Sequence[Token]) -> QueryAst:
    """
    Parse a token list into a QueryAst.

    Raises:
        QuerySyntaxError: unexpected token, with the expected-token set and span
        QueryArityError: operator or metric function called with the wrong arity
    """
    return Parser(tokens).parse_query()


def parse_query(query: str) -> QueryAst:
    """Tokenize and parse in one step."""
    ast = parse(tokenize(query))
    logger.debug(f"Parsed query: {query}")
    return ast


# ==================== WELL-FORMEDNESS ====================


@dataclass(frozen=True)
class Diagnostic:
    message: str
    variable: Optional[str] = None


def _check_term(term: SpatialTerm, bound: FrozenSet[str], out: List[Diagnostic]) -> None:
    if isinstance(term, Var):
        if term.name not in bound:
            out.append(Diagnostic(f"free variable '{term.name}'", term.name))
    elif isinstance(term, (Complement, Interior, Closure)):
        _check_term(term.inner, bound, out)
    elif isinstance(term, (Intersect, Union_)):
        _check_term(term.left, bound, out)
        _check_term(term.right, bound, out)


def _check_metric(expr: MetricExpr, bound: FrozenSet[str], out: List[Diagnostic]) -> None:
    if isinstance(expr, (UnaryFn, BinaryFn)):
        expected = 1 if isinstance(expr, UnaryFn) else 2
        if expr.name not in METRIC_FUNCTIONS:
            out.append(Diagnostic(f"unknown metric function '{expr.name}'"))
        elif METRIC_FUNCTIONS[expr.name][0] != expected:
            out.append(Diagnostic(f"metric function '{expr.name}' called with {expected} argument(s)"))
        if isinstance(expr, UnaryFn):
            _check_term(expr.arg, bound, out)
        else:
            _check_term(expr.left, bound, out)
            _check_term(expr.right, bound, out)
    elif isinstance(expr, (Negate, Pow)):
        _check_metric(expr.inner, bound, out)
    elif isinstance(expr, (Add, Mul)):
        _check_metric(expr.left, bound, out)
        _check_metric(expr.right, bound, out)


def _check_formula(formula: SpatialFormula, bound: FrozenSet[str], out: List[Diagnostic]) -> None:
    if isinstance(formula, Exists):
        _check_formula(formula.body, bound | {formula.var}, out)
    elif isinstance(formula, NonEmpty):
        _check_term(formula.term, bound, out)
    elif isinstance(formula, SubsetOf):
        _check_term(formula.left, bound, out)
        _check_term(formula.right, bound, out)
    elif isinstance(formula, Not):
        _check_formula(formula.inner, bound, out)
    elif isinstance(formula, (And, Or)):
        _check_formula(formula.left, bound, out)
        _check_formula(formula.right, bound, out)
    elif isinstance(formula, LessEq):
        _check_metric(formula.left, bound, out)
        _check_metric(formula.right, bound, out)


def check_well_formed(ast: QueryAst) -> List[Diagnostic]:
    """Diagnostics for free variables, unknown metric functions and bad ranges; empty when well-formed."""
    out: List[Diagnostic] = []

    def walk(node: RegexNode) -> None:
        if isinstance(node, FormulaLeaf):
            _check_formula(node.formula, frozenset(), out)
        elif isinstance(node, (Alternation, Concatenation)):
            walk(node.left)
            walk(node.right)
        elif isinstance(node, KleeneStar):
            walk(node.inner)
        elif isinstance(node, Range):
            if node.m < 0 or (node.n is not None and node.m > node.n):
                out.append(Diagnostic(f"invalid range {{{node.m},{node.n}}}"))
            walk(node.inner)

    walk(ast.root)
    return out


# ==================== RANGE EXPANSION ====================


def _repeat(node: RegexNode, times: int) -> RegexNode:
    if times == 0:
        return Epsilon()
    result = node
    for _ in range(times - 1):
        result = Concatenation(node, result)
    return result


def _expand(node: RegexNode) -> RegexNode:
    if isinstance(node, (FormulaLeaf, Epsilon)):
        return node
    if isinstance(node, Alternation):
        return Alternation(_expand(node.left), _expand(node.right))
    if isinstance(node, Concatenation):
        return Concatenation(_expand(node.left), _expand(node.right))
    if isinstance(node, KleeneStar):
        return KleeneStar(_expand(node.inner))
    if isinstance(node, Range):
        inner = _expand(node.inner)
        if node.n is None:
            star = KleeneStar(inner)
            if node.m == 0:
                return star
            result: RegexNode = star
            for _ in range(node.m):
                result = Concatenation(inner, result)
            return result
        if node.n == 0:
            return Epsilon()
        alternatives = [_repeat(inner, count) for count in range(node.m, node.n + 1)]
        return reduce(Alternation, alternatives)
    raise TypeError(f"not a regex node: {node!r}")


def expand_ranges(ast: QueryAst) -> QueryAst:
    """Rewrite every Range node into alternations of concatenations (or a star tail)."""
    return QueryAst(_expand(ast.root))
