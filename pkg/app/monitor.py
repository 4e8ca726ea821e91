"""
Per-frame evaluation of spatial terms, metric expressions and formulas.
Reports which automaton symbols a frame satisfies as a bitmask.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, Mapping, Optional, Sequence, Set, Tuple

from app.config import CANDIDATE_CAP
from app.regions import (
    EmptyRegionError,
    Region,
    closure,
    complement,
    interior,
    intersect,
    is_non_empty,
    is_subset,
    metric_fn,
    union,
)
from app.stream import ChannelInfo, Frame, ObjectAnnotation, objects_with_attributes, region_of
from app.syntax import (
    Add,
    And,
    Atom,
    BinaryFn,
    Closure,
    Complement,
    Const,
    Exists,
    Interior,
    Intersect,
    LessEq,
    MetricExpr,
    Mul,
    Negate,
    NonEmpty,
    Not,
    Or,
    Pow,
    SpatialFormula,
    SpatialTerm,
    SubsetOf,
    TermAtom,
    UnaryFn,
    Union_,
    Var,
    term_to_source,
)

logger = logging.getLogger(__name__)


class MonitorError(Exception):
    """Custom exception for formula evaluation errors."""
    pass


class UnboundVariableError(MonitorError):
    pass


class CandidateLimitError(MonitorError):
    """A term node produced more candidate regions than the configured cap."""
    pass


class ChannelNotFoundError(MonitorError):
    pass


@dataclass(frozen=True)
class LookupTable:
    """Variable -> bound object. Missing names are unbound."""

    bindings: Mapping[str, Optional[ObjectAnnotation]] = field(default_factory=dict)

    def bind(self, var: str, obj: ObjectAnnotation) -> "LookupTable":
        extended = dict(self.bindings)
        extended[var] = obj
        return LookupTable(extended)

    def lookup(self, var: str) -> ObjectAnnotation:
        obj = self.bindings.get(var)
        if obj is None:
            raise UnboundVariableError(f"variable '{var}' is unbound")
        return obj


EMPTY_TABLE = LookupTable()


def _dedup(regions: Iterable[Region]) -> Tuple[Region, ...]:
    return tuple(dict.fromkeys(regions))


class FrameEvaluator:
    """
    Evaluates formulas against the objects of one channel sample.

    Object regions are computed once per evaluator and shared by every
    atom, variable and binder that refers to them.
    """

    def __init__(self, objects: Sequence[ObjectAnnotation], channel: ChannelInfo, candidate_cap: int = CANDIDATE_CAP):
        self.objects = objects
        self.channel = channel
        self.candidate_cap = candidate_cap
        self._regions: Dict[int, Region] = {}

    def region(self, obj: ObjectAnnotation) -> Region:
        key = id(obj)
        cached = self._regions.get(key)
        if cached is None:
            cached = region_of(obj, self.channel)
            self._regions[key] = cached
        return cached

    def _check_cap(self, count: int, node) -> None:
        if count > self.candidate_cap:
            raise CandidateLimitError(
                f"term {term_to_source(node)} yields {count} candidates (cap {self.candidate_cap})"
            )

    # -------- terms --------

    def eval_term(self, term: SpatialTerm, table: LookupTable) -> Tuple[Region, ...]:
        if isinstance(term, TermAtom):
            return _dedup(self.region(obj) for obj in objects_with_attributes(self.objects, term.values))
        if isinstance(term, Var):
            return (self.region(table.lookup(term.name)),)
        if isinstance(term, Complement):
            return _dedup(complement(r) for r in self.eval_term(term.inner, table))
        if isinstance(term, Interior):
            return _dedup(interior(r) for r in self.eval_term(term.inner, table))
        if isinstance(term, Closure):
            return _dedup(closure(r) for r in self.eval_term(term.inner, table))
        if isinstance(term, (Intersect, Union_)):
            left = self.eval_term(term.left, table)
            right = self.eval_term(term.right, table)
            self._check_cap(len(left) * len(right), term)
            op = intersect if isinstance(term, Intersect) else union
            return _dedup(op(a, b) for a in left for b in right)
        raise TypeError(f"not a spatial term: {term!r}")

    # -------- metrics --------

    def _apply(self, name: str, args: Sequence[Region]) -> Optional[float]:
        try:
            return metric_fn(name, args)
        except EmptyRegionError:
            return None

    def eval_metric(self, expr: MetricExpr, table: LookupTable) -> Set[float]:
        if isinstance(expr, Const):
            return {float(expr.value)}
        if isinstance(expr, UnaryFn):
            values = (self._apply(expr.name, (a,)) for a in self.eval_term(expr.arg, table))
            return {v for v in values if v is not None}
        if isinstance(expr, BinaryFn):
            left = self.eval_term(expr.left, table)
            right = self.eval_term(expr.right, table)
            self._check_cap(len(left) * len(right), Intersect(expr.left, expr.right))
            values = (self._apply(expr.name, (a, b)) for a in left for b in right)
            return {v for v in values if v is not None}
        if isinstance(expr, Negate):
            return {-v for v in self.eval_metric(expr.inner, table)}
        if isinstance(expr, Add):
            left = self.eval_metric(expr.left, table)
            right = self.eval_metric(expr.right, table)
            return {a + b for a in left for b in right}
        if isinstance(expr, Mul):
            left = self.eval_metric(expr.left, table)
            right = self.eval_metric(expr.right, table)
            return {a * b for a in left for b in right}
        if isinstance(expr, Pow):
            out = set()
            for v in self.eval_metric(expr.inner, table):
                try:
                    out.add(math.pow(v, expr.exponent))
                except (ValueError, OverflowError):
                    # no real value (negative base with fractional exponent, 0 to a negative power)
                    continue
            return out
        raise TypeError(f"not a metric expression: {expr!r}")

    # -------- formulas --------

    def satisfies(self, formula: SpatialFormula, table: LookupTable = EMPTY_TABLE) -> bool:
        if isinstance(formula, Atom):
            return bool(objects_with_attributes(self.objects, formula.values))
        if isinstance(formula, Exists):
            return self.find_witness(formula, table) is not None
        if isinstance(formula, NonEmpty):
            return any(is_non_empty(r) for r in self.eval_term(formula.term, table))
        if isinstance(formula, SubsetOf):
            left = self.eval_term(formula.left, table)
            right = self.eval_term(formula.right, table)
            return any(is_subset(a, b) for a in left for b in right)
        if isinstance(formula, Not):
            return not self.satisfies(formula.inner, table)
        if isinstance(formula, And):
            return self.satisfies(formula.left, table) and self.satisfies(formula.right, table)
        if isinstance(formula, Or):
            return self.satisfies(formula.left, table) or self.satisfies(formula.right, table)
        if isinstance(formula, LessEq):
            left = self.eval_metric(formula.left, table)
            if not left:
                return False
            right = self.eval_metric(formula.right, table)
            return bool(right) and min(left) <= max(right)
        raise TypeError(f"not a spatial formula: {formula!r}")

    def find_witness(self, formula: Exists, table: LookupTable = EMPTY_TABLE) -> Optional[ObjectAnnotation]:
        """First object (in frame order) that makes the existential body true."""
        for obj in objects_with_attributes(self.objects, formula.binder):
            if self.satisfies(formula.body, table.bind(formula.var, obj)):
                return obj
        return None


def eval_term(term: SpatialTerm, objects: Sequence[ObjectAnnotation], table: LookupTable, channel: ChannelInfo) -> Tuple[Region, ...]:
    """
    Candidate regions of a spatial term, one per nondeterministic object choice.

    Raises:
        UnboundVariableError: a variable has no binding in `table`
        CandidateLimitError: a set operation would exceed the candidate cap
    """
    return FrameEvaluator(objects, channel).eval_term(term, table)


def eval_metric(expr: MetricExpr, objects: Sequence[ObjectAnnotation], table: LookupTable, channel: ChannelInfo) -> Set[float]:
    """Value set of a metric expression; candidates outside a function's domain are dropped."""
    return FrameEvaluator(objects, channel).eval_metric(expr, table)


def satisfies(formula: SpatialFormula, objects: Sequence[ObjectAnnotation], table: LookupTable, channel: ChannelInfo) -> bool:
    return FrameEvaluator(objects, channel).satisfies(formula, table)


def find_witness(formula: Exists, objects: Sequence[ObjectAnnotation], channel: ChannelInfo) -> Optional[ObjectAnnotation]:
    return FrameEvaluator(objects, channel).find_witness(formula)


class Monitor:
    """Evaluates a fixed symbol table against frames on one channel."""

    def __init__(self, symbols: Sequence[SpatialFormula], channel: Optional[str] = None, candidate_cap: int = CANDIDATE_CAP):
        self.symbols = tuple(symbols)
        self.channel = channel
        self.candidate_cap = candidate_cap

    def evaluator(self, frame: Frame) -> FrameEvaluator:
        sample = frame.channel(self.channel)
        if sample is None:
            wanted = self.channel if self.channel is not None else "<first>"
            raise ChannelNotFoundError(f"frame {frame.index} has no channel '{wanted}'")
        return FrameEvaluator(sample.objects, sample.info, self.candidate_cap)

    def mask(self, frame: Frame) -> int:
        """Bit s is set iff the frame satisfies symbol s."""
        evaluator = self.evaluator(frame)
        bits = 0
        for symbol_id, formula in enumerate(self.symbols):
            if evaluator.satisfies(formula):
                bits |= 1 << symbol_id
        return bits

    def satisfied_symbols(self, frame: Frame) -> Set[int]:
        bits = self.mask(frame)
        return {s for s in range(len(self.symbols)) if bits >> s & 1}


def satisfied_symbols(frame: Frame, symbols: Iterable[Tuple[int, SpatialFormula]], channel: Optional[str] = None) -> Set[int]:
    """
    Ids of the symbols whose formula holds on the frame's selected channel.

    Raises:
        ChannelNotFoundError: the frame has no channel named `channel`
            (or no channels at all when `channel` is None)
    """
    evaluator = Monitor((), channel).evaluator(frame)
    return {symbol_id for symbol_id, formula in symbols if evaluator.satisfies(formula)}
