"""
Parse-tree node types for spatial regular expressions.
Regex nodes over spatial-formula leaves, which hold metric expressions and spatial terms.
Nodes are frozen dataclasses, so structural equality and hashing come for free.
"""

from dataclasses import dataclass
from typing import FrozenSet, Optional, Union


def _attrs(values: FrozenSet[str]) -> str:
    return "[:" + ",".join(sorted(values)) + ":]"


def _number(value: float) -> str:
    text = repr(float(value))
    return text[:-2] if text.endswith(".0") else text


# ==================== SPATIAL TERMS ====================


@dataclass(frozen=True)
class TermAtom:
    values: FrozenSet[str]


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Complement:
    inner: "SpatialTerm"


@dataclass(frozen=True)
class Intersect:
    left: "SpatialTerm"
    right: "SpatialTerm"


@dataclass(frozen=True)
class Union_:
    left: "SpatialTerm"
    right: "SpatialTerm"


@dataclass(frozen=True)
class Interior:
    inner: "SpatialTerm"


@dataclass(frozen=True)
class Closure:
    inner: "SpatialTerm"


SpatialTerm = Union[TermAtom, Var, Complement, Intersect, Union_, Interior, Closure]


# ==================== METRIC EXPRESSIONS ====================


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class UnaryFn:
    name: str
    arg: SpatialTerm


@dataclass(frozen=True)
class BinaryFn:
    name: str
    left: SpatialTerm
    right: SpatialTerm


@dataclass(frozen=True)
class Negate:
    inner: "MetricExpr"


@dataclass(frozen=True)
class Add:
    left: "MetricExpr"
    right: "MetricExpr"


@dataclass(frozen=True)
class Mul:
    left: "MetricExpr"
    right: "MetricExpr"


@dataclass(frozen=True)
class Pow:
    inner: "MetricExpr"
    exponent: float


MetricExpr = Union[Const, UnaryFn, BinaryFn, Negate, Add, Mul, Pow]


# ==================== SPATIAL FORMULAS ====================


@dataclass(frozen=True)
class Atom:
    values: FrozenSet[str]


@dataclass(frozen=True)
class Exists:
    var: str
    binder: FrozenSet[str]
    body: "SpatialFormula"


@dataclass(frozen=True)
class NonEmpty:
    term: SpatialTerm


@dataclass(frozen=True)
class SubsetOf:
    left: SpatialTerm
    right: SpatialTerm


@dataclass(frozen=True)
class Not:
    inner: "SpatialFormula"


@dataclass(frozen=True)
class And:
    left: "SpatialFormula"
    right: "SpatialFormula"


@dataclass(frozen=True)
class Or:
    left: "SpatialFormula"
    right: "SpatialFormula"


@dataclass(frozen=True)
class LessEq:
    left: MetricExpr
    right: MetricExpr


SpatialFormula = Union[Atom, Exists, NonEmpty, SubsetOf, Not, And, Or, LessEq]


# ==================== REGEX NODES ====================


@dataclass(frozen=True)
class FormulaLeaf:
    formula: SpatialFormula


@dataclass(frozen=True)
class Alternation:
    left: "RegexNode"
    right: "RegexNode"


@dataclass(frozen=True)
class Concatenation:
    left: "RegexNode"
    right: "RegexNode"


@dataclass(frozen=True)
class KleeneStar:
    inner: "RegexNode"


@dataclass(frozen=True)
class Range:
    inner: "RegexNode"
    m: int
    n: Optional[int]  # None means unbounded


@dataclass(frozen=True)
class Epsilon:
    """The empty word; only produced by range expansion or an empty group `()`."""


RegexNode = Union[FormulaLeaf, Alternation, Concatenation, KleeneStar, Range, Epsilon]


@dataclass(frozen=True)
class QueryAst:
    root: RegexNode


# ==================== CANONICAL PRINTER ====================


def term_to_source(term: SpatialTerm) -> str:
    if isinstance(term, TermAtom):
        return _attrs(term.values)
    if isinstance(term, Var):
        return term.name
    if isinstance(term, Complement):
        return f"~({term_to_source(term.inner)})"
    if isinstance(term, Intersect):
        return f"({term_to_source(term.left)} & {term_to_source(term.right)})"
    if isinstance(term, Union_):
        return f"({term_to_source(term.left)} | {term_to_source(term.right)})"
    if isinstance(term, Interior):
        return f"<interior>({term_to_source(term.inner)})"
    if isinstance(term, Closure):
        return f"<closure>({term_to_source(term.inner)})"
    raise TypeError(f"not a spatial term: {term!r}")


def metric_to_source(expr: MetricExpr) -> str:
    if isinstance(expr, Const):
        return _number(expr.value)
    if isinstance(expr, UnaryFn):
        return f"<{expr.name}>({term_to_source(expr.arg)})"
    if isinstance(expr, BinaryFn):
        return f"<{expr.name}>({term_to_source(expr.left)}, {term_to_source(expr.right)})"
    if isinstance(expr, Negate):
        return f"-({metric_to_source(expr.inner)})"
    if isinstance(expr, Add):
        return f"({metric_to_source(expr.left)} + {metric_to_source(expr.right)})"
    if isinstance(expr, Mul):
        return f"({metric_to_source(expr.left)} * {metric_to_source(expr.right)})"
    if isinstance(expr, Pow):
        return f"({metric_to_source(expr.inner)})^{_number(expr.exponent)}"
    raise TypeError(f"not a metric expression: {expr!r}")


def formula_to_source(formula: SpatialFormula) -> str:
    if isinstance(formula, Atom):
        return _attrs(formula.values)
    if isinstance(formula, Exists):
        return f"<exists>({formula.var} := {_attrs(formula.binder)})({formula_to_source(formula.body)})"
    if isinstance(formula, NonEmpty):
        return f"<nonempty>({term_to_source(formula.term)})"
    if isinstance(formula, SubsetOf):
        return f"<subset>({term_to_source(formula.left)}, {term_to_source(formula.right)})"
    if isinstance(formula, Not):
        return f"~({formula_to_source(formula.inner)})"
    if isinstance(formula, And):
        return f"({formula_to_source(formula.left)} & {formula_to_source(formula.right)})"
    if isinstance(formula, Or):
        return f"({formula_to_source(formula.left)} | {formula_to_source(formula.right)})"
    if isinstance(formula, LessEq):
        return f"({metric_to_source(formula.left)} <= {metric_to_source(formula.right)})"
    raise TypeError(f"not a spatial formula: {formula!r}")


def regex_to_source(node: RegexNode) -> str:
    if isinstance(node, FormulaLeaf):
        return f"[{formula_to_source(node.formula)}]"
    if isinstance(node, Alternation):
        return f"({regex_to_source(node.left)} | {regex_to_source(node.right)})"
    if isinstance(node, Concatenation):
        return f"({regex_to_source(node.left)} {regex_to_source(node.right)})"
    if isinstance(node, KleeneStar):
        return f"({regex_to_source(node.inner)})*"
    if isinstance(node, Range):
        upper = "" if node.n is None else str(node.n)
        if node.n == node.m:
            return f"({regex_to_source(node.inner)}){{{node.m}}}"
        return f"({regex_to_source(node.inner)}){{{node.m},{upper}}}"
    if isinstance(node, Epsilon):
        return "()"
    raise TypeError(f"not a regex node: {node!r}")


def to_source(ast: Union[QueryAst, RegexNode]) -> str:
    """Canonical concrete syntax; re-parses to a structurally equal tree."""
    if isinstance(ast, QueryAst):
        return regex_to_source(ast.root)
    return regex_to_source(ast)
