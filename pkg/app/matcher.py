"""
Offline and online matching of compiled queries over perception streams.
"""

import logging
import time
from collections import deque
from dataclasses import dataclass
from functools import cached_property
from typing import Any, Deque, Dict, List, Optional, Sequence, Tuple

from app.automaton import Horizon, SpatialAutomaton, collect_symbols, compile_forward, compile_reverse, horizon
from app.config import STATE_CAP
from app.metrics import Metrics
from app.monitor import Monitor
from app.parser import QueryError, check_well_formed, parse_query
from app.stream import Frame, MatchRange, PerceptionStream
from app.syntax import (
    Alternation,
    Concatenation,
    Epsilon,
    FormulaLeaf,
    KleeneStar,
    QueryAst,
    Range,
    RegexNode,
    SpatialFormula,
    to_source,
)

logger = logging.getLogger(__name__)


class MatcherConfigError(Exception):
    """Custom exception for invalid matcher settings."""
    pass


@dataclass(frozen=True)
class CompiledQuery:
    """A parsed, checked query with its forward automaton and horizon."""

    text: str
    ast: QueryAst
    forward: SpatialAutomaton
    horizon: Horizon
    state_cap: int = STATE_CAP

    @classmethod
    def compile(cls, text: str, state_cap: int = STATE_CAP) -> "CompiledQuery":
        """
        Parse, check and compile a query string.

        Raises:
            QueryError: lexical, syntax or well-formedness problems
            StateLimitError: the automaton outgrows `state_cap`
        """
        ast = parse_query(text)
        problems = check_well_formed(ast)
        if problems:
            raise QueryError("; ".join(problem.message for problem in problems))
        compiled = cls(text, ast, compile_forward(ast, state_cap), horizon(ast), state_cap)
        logger.info(f"Compiled query with horizon {compiled.horizon}")
        return compiled

    @cached_property
    def reverse(self) -> SpatialAutomaton:
        return compile_reverse(self.ast, self.state_cap)

    @property
    def canonical(self) -> str:
        return to_source(self.ast)

    @property
    def symbols(self) -> Tuple[SpatialFormula, ...]:
        return self.forward.symbols

    def monitor(self, channel: Optional[str] = None) -> Monitor:
        return Monitor(self.symbols, channel)


@dataclass(frozen=True)
class MatchReport:
    range: MatchRange
    channel: str
    frame_timestamps: Tuple[float, float]  # (first frame, last frame) in seconds
    query_text: str

    def to_dict(self) -> Dict[str, Any]:
        return {
            "start": self.range.start,
            "end": self.range.end,
            "frames": len(self.range),
            "channel": self.channel,
            "timestamps": list(self.frame_timestamps),
        }

    def __str__(self) -> str:
        return str(self.range)


def _timestamp(frame: Frame, channel: Optional[str]) -> Tuple[str, float]:
    sample = frame.channel(channel)
    if sample is None:
        return (channel or "", 0.0)
    return (sample.info.name, sample.info.timestamp)


def report(stream: PerceptionStream, match: MatchRange, query_text: str, channel: Optional[str] = None) -> MatchReport:
    name, first = _timestamp(stream[match.start], channel)
    _, last = _timestamp(stream[match.end - 1], channel)
    return MatchReport(match, name, (first, last), query_text)


# ==================== OFFLINE ====================


def match_at(
    stream: PerceptionStream,
    start: int,
    automaton: SpatialAutomaton,
    monitor: Monitor,
    masks: Optional[List[Optional[int]]] = None,
) -> Optional[MatchRange]:
    """
    Longest match starting at frame `start`, or None.

    Runs until every active state is dead or the stream ends. Zero-length
    matches are never returned. `masks` caches per-frame symbol masks
    between calls.
    """
    states = automaton.initial()
    end = None
    for index in range(start, len(stream)):
        if not states:
            break
        if masks is None:
            mask = monitor.mask(stream[index])
        else:
            mask = masks[index]
            if mask is None:
                mask = masks[index] = monitor.mask(stream[index])
        states = automaton.step(states, mask)
        if automaton.is_accepting(states):
            end = index + 1
    if end is None:
        return None
    return MatchRange(start, end)


def match_offline(stream: PerceptionStream, automaton: SpatialAutomaton, monitor: Monitor) -> List[MatchRange]:
    """Non-overlapping leftmost-longest matches, in stream order."""
    masks: List[Optional[int]] = [None] * len(stream)
    matches: List[MatchRange] = []
    position = 0
    while position < len(stream):
        found = match_at(stream, position, automaton, monitor, masks)
        if found is None:
            position += 1
        else:
            matches.append(found)
            position = found.end
    return matches


# ==================== ONLINE ====================


class OnlineSession:
    """
    Reports, for each incoming frame, the longest match ending at it.

    Keeps the symbol masks of the last B frames, where B is the query
    horizon capped by `max_window`, and re-runs the reverse automaton
    over them on every push.
    """

    def __init__(
        self,
        query: CompiledQuery,
        channel: Optional[str] = None,
        max_window: Optional[int] = None,
        metrics: Optional[Metrics] = None,
    ):
        if max_window is not None and max_window <= 0:
            raise MatcherConfigError(f"max window must be positive, got {max_window}")
        if query.horizon.is_finite:
            bound = query.horizon.value
            if max_window is not None:
                bound = min(bound, max_window)
        elif max_window is None:
            raise MatcherConfigError("query has an unbounded horizon; a max window is required in online mode")
        else:
            bound = max_window

        self.query = query
        self.channel = channel
        self.bound = bound
        self.metrics = metrics
        self.automaton = query.reverse
        self.monitor = query.monitor(channel)
        self._masks: Deque[int] = deque(maxlen=bound)
        self._stamps: Deque[Tuple[str, float]] = deque(maxlen=bound)
        self.frames_seen = 0
        logger.info(f"Online session started with window {bound}")

    def push(self, frame: Frame) -> Optional[MatchRange]:
        start_time = time.time()
        self._masks.append(self.monitor.mask(frame))
        self._stamps.append(_timestamp(frame, self.channel))
        newest = self.frames_seen
        self.frames_seen += 1

        states = self.automaton.initial()
        earliest = None
        for back, mask in enumerate(reversed(self._masks)):
            states = self.automaton.step(states, mask)
            if not states:
                break
            if self.automaton.is_accepting(states):
                earliest = newest - back

        found = MatchRange(earliest, newest + 1) if earliest is not None else None
        if self.metrics is not None:
            self.metrics.record_run(1, 0 if found is None else 1, (time.time() - start_time) * 1000)
        return found

    def report_for(self, match: MatchRange) -> MatchReport:
        """Report for a match returned by the latest push."""
        first = self._stamps[match.start - self.frames_seen]
        last = self._stamps[-1]
        return MatchReport(match, last[0], (first[1], last[1]), self.query.text)


def match_online(session: OnlineSession, frame: Frame) -> Optional[MatchRange]:
    return session.push(frame)


# ==================== REFERENCE SEMANTICS ====================


class LanguageOracle:
    """
    Direct recursive membership test over a sequence of symbol masks.

    `contains(i, j)` decides whether positions [i, j) form a word of the
    query language, following the regex structure without any automaton.
    """

    def __init__(self, root: RegexNode, masks: Sequence[int], symbol_ids: Dict[SpatialFormula, int]):
        self.root = root
        self.masks = masks
        self.symbol_ids = symbol_ids
        self._memo: Dict[Tuple, bool] = {}

    def contains(self, i: int, j: int) -> bool:
        return self.member(self.root, i, j)

    def member(self, node: RegexNode, i: int, j: int) -> bool:
        key = (id(node), i, j)
        cached = self._memo.get(key)
        if cached is None:
            cached = self._memo[key] = self._member(node, i, j)
        return cached

    def _member(self, node: RegexNode, i: int, j: int) -> bool:
        if isinstance(node, FormulaLeaf):
            return j == i + 1 and bool(self.masks[i] >> self.symbol_ids[node.formula] & 1)
        if isinstance(node, Epsilon):
            return i == j
        if isinstance(node, Alternation):
            return self.member(node.left, i, j) or self.member(node.right, i, j)
        if isinstance(node, Concatenation):
            return any(self.member(node.left, i, k) and self.member(node.right, k, j) for k in range(i, j + 1))
        if isinstance(node, KleeneStar):
            return self._star(node.inner, i, j)
        if isinstance(node, Range):
            if node.n is None:
                return any(
                    self._repeat(node.inner, node.m, i, k) and self._star(node.inner, k, j) for k in range(i, j + 1)
                )
            return any(self._repeat(node.inner, count, i, j) for count in range(node.m, node.n + 1))
        raise TypeError(f"not a regex node: {node!r}")

    def _star(self, inner: RegexNode, i: int, j: int) -> bool:
        key = ("*", id(inner), i, j)
        cached = self._memo.get(key)
        if cached is None:
            # Empty iterations add nothing, so every step consumes a frame
            cached = i == j or any(
                self.member(inner, i, k) and self._star(inner, k, j) for k in range(i + 1, j + 1)
            )
            self._memo[key] = cached
        return cached

    def _repeat(self, inner: RegexNode, count: int, i: int, j: int) -> bool:
        if count > j - i:
            # at most j - i copies can be non-empty
            if not self.member(inner, i, i):
                return False
            count = j - i
        key = ("{}", id(inner), count, i, j)
        cached = self._memo.get(key)
        if cached is None:
            if count == 0:
                cached = i == j
            else:
                cached = any(
                    self.member(inner, i, k) and self._repeat(inner, count - 1, k, j) for k in range(i, j + 1)
                )
            self._memo[key] = cached
        return cached


def in_language(ast: QueryAst, masks: Sequence[int], symbols: Sequence[SpatialFormula]) -> bool:
    """Whether the whole mask sequence is a word of the query language."""
    symbol_ids = {formula: i for i, formula in enumerate(symbols)}
    return LanguageOracle(ast.root, masks, symbol_ids).contains(0, len(masks))


def equivalence_oracle(stream: PerceptionStream, ast: QueryAst, channel: Optional[str] = None) -> List[MatchRange]:
    """
    Leftmost-longest matches found by testing every subsequence directly.

    Exponential in the worst case; meant for cross-checking the automaton
    on short streams.
    """
    symbols = collect_symbols(ast)
    monitor = Monitor(symbols, channel)
    masks = [monitor.mask(frame) for frame in stream]
    oracle = LanguageOracle(ast.root, masks, {formula: i for i, formula in enumerate(symbols)})

    matches: List[MatchRange] = []
    position = 0
    while position < len(stream):
        end = next((j for j in range(len(stream), position, -1) if oracle.contains(position, j)), None)
        if end is None:
            position += 1
        else:
            matches.append(MatchRange(position, end))
            position = end
    return matches
