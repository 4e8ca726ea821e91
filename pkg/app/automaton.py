"""
Compiles a query into a formula-labeled automaton.

Structurally equal formula leaves share one symbol id. The regex over
symbol ids goes through Thompson construction, subset construction and
Moore minimization; the result runs with active-set semantics because a
frame can satisfy several symbols at once.
"""

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Set, Tuple, Union

from app.config import STATE_CAP
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
    formula_to_source,
)

logger = logging.getLogger(__name__)


class StateLimitError(Exception):
    """Custom exception for automata that outgrow the state cap."""
    pass


# ==================== SYMBOLS & HORIZON ====================


def _leaves(node: RegexNode) -> Iterable[SpatialFormula]:
    if isinstance(node, FormulaLeaf):
        yield node.formula
    elif isinstance(node, (Alternation, Concatenation)):
        yield from _leaves(node.left)
        yield from _leaves(node.right)
    elif isinstance(node, (KleeneStar, Range)):
        yield from _leaves(node.inner)


def collect_symbols(ast: Union[QueryAst, RegexNode]) -> Tuple[SpatialFormula, ...]:
    """Distinct leaf formulas in left-to-right order; a formula's symbol id is its position."""
    root = ast.root if isinstance(ast, QueryAst) else ast
    return tuple(dict.fromkeys(_leaves(root)))


@dataclass(frozen=True)
class Horizon:
    """Longest match length a query admits; `value` None means unbounded."""

    value: Optional[int]

    @property
    def is_finite(self) -> bool:
        return self.value is not None

    def __str__(self) -> str:
        return "inf" if self.value is None else str(self.value)


def _horizon(node: RegexNode) -> Optional[int]:
    if isinstance(node, FormulaLeaf):
        return 1
    if isinstance(node, Epsilon):
        return 0
    if isinstance(node, Alternation):
        left, right = _horizon(node.left), _horizon(node.right)
        return None if left is None or right is None else max(left, right)
    if isinstance(node, Concatenation):
        left, right = _horizon(node.left), _horizon(node.right)
        return None if left is None or right is None else left + right
    if isinstance(node, KleeneStar):
        return None
    if isinstance(node, Range):
        if node.n == 0:
            return 0
        inner = _horizon(node.inner)
        if node.n is None or inner is None:
            return None
        return node.n * inner
    raise TypeError(f"not a regex node: {node!r}")


def horizon(ast: Union[QueryAst, RegexNode]) -> Horizon:
    root = ast.root if isinstance(ast, QueryAst) else ast
    return Horizon(_horizon(root))


# ==================== THOMPSON NFA ====================


class _Nfa:
    """Thompson NFA with a single start and a single accepting state."""

    def __init__(self):
        self.epsilon: List[List[int]] = []
        self.edges: List[List[Tuple[int, int]]] = []  # (symbol id, target)
        self.start = 0
        self.accept = 0

    def new_state(self) -> int:
        self.epsilon.append([])
        self.edges.append([])
        return len(self.edges) - 1

    def build(self, node: RegexNode, symbol_ids: Dict[SpatialFormula, int]) -> Tuple[int, int]:
        if isinstance(node, FormulaLeaf):
            s, f = self.new_state(), self.new_state()
            self.edges[s].append((symbol_ids[node.formula], f))
            return s, f
        if isinstance(node, Epsilon):
            s, f = self.new_state(), self.new_state()
            self.epsilon[s].append(f)
            return s, f
        if isinstance(node, Concatenation):
            s1, f1 = self.build(node.left, symbol_ids)
            s2, f2 = self.build(node.right, symbol_ids)
            self.epsilon[f1].append(s2)
            return s1, f2
        if isinstance(node, Alternation):
            s, f = self.new_state(), self.new_state()
            for branch in (node.left, node.right):
                bs, bf = self.build(branch, symbol_ids)
                self.epsilon[s].append(bs)
                self.epsilon[bf].append(f)
            return s, f
        if isinstance(node, KleeneStar):
            s, f = self.new_state(), self.new_state()
            bs, bf = self.build(node.inner, symbol_ids)
            self.epsilon[s].extend((bs, f))
            self.epsilon[bf].extend((bs, f))
            return s, f
        if isinstance(node, Range):
            s = f = self.new_state()
            for _ in range(node.m):
                bs, bf = self.build(node.inner, symbol_ids)
                self.epsilon[f].append(bs)
                f = bf
            if node.n is None:
                ss, sf = self.build(KleeneStar(node.inner), symbol_ids)
                self.epsilon[f].append(ss)
                return s, sf
            end = self.new_state()
            # n - m optional copies; skipping any of them jumps to the end
            for _ in range(node.n - node.m):
                bs, bf = self.build(node.inner, symbol_ids)
                self.epsilon[f].extend((bs, end))
                f = bf
            self.epsilon[f].append(end)
            return s, end
        raise TypeError(f"cannot build NFA fragment for {node!r}")

    def reversed(self) -> "_Nfa":
        rev = _Nfa()
        rev.epsilon = [[] for _ in self.epsilon]
        rev.edges = [[] for _ in self.edges]
        for src, targets in enumerate(self.epsilon):
            for dst in targets:
                rev.epsilon[dst].append(src)
        for src, labeled in enumerate(self.edges):
            for symbol, dst in labeled:
                rev.edges[dst].append((symbol, src))
        rev.start, rev.accept = self.accept, self.start
        return rev

    def closure(self, states: Iterable[int]) -> FrozenSet[int]:
        seen = set(states)
        stack = list(seen)
        while stack:
            for nxt in self.epsilon[stack.pop()]:
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
        return frozenset(seen)


# ==================== DETERMINIZATION & MINIMIZATION ====================


def _determinize(nfa: _Nfa, state_cap: int) -> Tuple[List[Dict[int, int]], Set[int]]:
    start = nfa.closure([nfa.start])
    index: Dict[FrozenSet[int], int] = {start: 0}
    delta: List[Dict[int, int]] = [{}]
    queue = deque([start])
    while queue:
        current = queue.popleft()
        source = index[current]
        moves: Dict[int, Set[int]] = {}
        for state in current:
            for symbol, target in nfa.edges[state]:
                moves.setdefault(symbol, set()).add(target)
        for symbol in sorted(moves):
            target_set = nfa.closure(moves[symbol])
            if target_set not in index:
                if len(index) >= state_cap:
                    raise StateLimitError(f"automaton exceeds {state_cap} states during subset construction")
                index[target_set] = len(delta)
                delta.append({})
                queue.append(target_set)
            delta[source][symbol] = index[target_set]
    accepting = {i for subset, i in index.items() if nfa.accept in subset}
    return delta, accepting


def _coaccessible(delta: Sequence[Dict[int, int]], accepting: Set[int]) -> Set[int]:
    predecessors: List[Set[int]] = [set() for _ in delta]
    for src, moves in enumerate(delta):
        for dst in moves.values():
            predecessors[dst].add(src)
    live = set(accepting)
    stack = list(live)
    while stack:
        for prev in predecessors[stack.pop()]:
            if prev not in live:
                live.add(prev)
                stack.append(prev)
    return live


def _minimize(delta: List[Dict[int, int]], accepting: Set[int], num_symbols: int) -> Tuple[List[Dict[int, int]], Set[int]]:
    """
    Moore partition refinement on the trimmed DFA.

    States that cannot reach acceptance are removed first, so a missing
    transition stands for the (implicit) dead sink.
    """
    live = _coaccessible(delta, accepting)
    states = [s for s in range(len(delta)) if s in live or s == 0]
    trimmed = {s: {a: t for a, t in delta[s].items() if t in live} for s in states}

    block = {s: (1 if s in accepting else 0) for s in states}
    while True:
        signatures: Dict[Tuple, int] = {}
        refined: Dict[int, int] = {}
        for s in states:
            signature = (block[s],) + tuple(block.get(trimmed[s].get(a, -1), -1) for a in range(num_symbols))
            refined[s] = signatures.setdefault(signature, len(signatures))
        if len(signatures) == len(set(block.values())):
            block = refined
            break
        block = refined

    # Renumber blocks in breadth-first order from the start state
    order: Dict[int, int] = {block[0]: 0}
    queue = deque([0])
    representative = {block[0]: 0}
    while queue:
        s = queue.popleft()
        for a in range(num_symbols):
            t = trimmed[s].get(a)
            if t is not None and block[t] not in order:
                order[block[t]] = len(order)
                representative[block[t]] = t
                queue.append(t)

    minimal: List[Dict[int, int]] = [{} for _ in order]
    for b, rep in representative.items():
        minimal[order[b]] = {a: order[block[t]] for a, t in sorted(trimmed[rep].items())}
    minimal_accepting = {order[b] for b, rep in representative.items() if rep in accepting}
    return minimal, minimal_accepting


# ==================== AUTOMATON ====================


@dataclass(frozen=True)
class SpatialAutomaton:
    """
    Deterministic automaton over symbol ids.

    `step` follows every enabled transition from every active state, so a
    frame that satisfies several symbols can activate several successors.
    """

    num_states: int
    start: int
    accepting: FrozenSet[int]
    transitions: Tuple[Tuple[int, int, int], ...]  # (source, symbol id, target)
    symbols: Tuple[SpatialFormula, ...]
    dead_states: FrozenSet[int] = frozenset()
    _outgoing: Tuple[Tuple[Tuple[int, int], ...], ...] = field(default=(), repr=False, compare=False)

    @classmethod
    def build(
        cls,
        delta: Sequence[Dict[int, int]],
        accepting: Set[int],
        symbols: Tuple[SpatialFormula, ...],
    ) -> "SpatialAutomaton":
        transitions = tuple((s, a, t) for s, moves in enumerate(delta) for a, t in sorted(moves.items()))
        live = _coaccessible(delta, accepting)
        dead = frozenset(s for s in range(len(delta)) if s not in live)
        outgoing = tuple(
            tuple((1 << a, t) for a, t in sorted(moves.items()) if t not in dead) for moves in delta
        )
        return cls(len(delta), 0, frozenset(accepting), transitions, symbols, dead, outgoing)

    @property
    def states(self) -> range:
        return range(self.num_states)

    @property
    def accepts_empty(self) -> bool:
        return self.start in self.accepting

    def initial(self) -> FrozenSet[int]:
        if self.start in self.dead_states:
            return frozenset()
        return frozenset((self.start,))

    def step(self, states: Iterable[int], mask: int) -> FrozenSet[int]:
        """Successors of `states` along every transition whose symbol bit is set in `mask`."""
        nxt = set()
        for state in states:
            for bit, target in self._outgoing[state]:
                if mask & bit:
                    nxt.add(target)
        return frozenset(nxt)

    def is_accepting(self, states: Iterable[int]) -> bool:
        return any(s in self.accepting for s in states)

    def accepts_masks(self, masks: Iterable[int]) -> bool:
        """Whether some symbol choice per position spells a word of the language."""
        states = self.initial()
        for mask in masks:
            if not states:
                return False
            states = self.step(states, mask)
        return self.is_accepting(states)


def _compile(ast: QueryAst, reverse: bool, state_cap: int) -> SpatialAutomaton:
    symbols = collect_symbols(ast)
    symbol_ids = {formula: i for i, formula in enumerate(symbols)}

    # Ranges are unrolled in place as Q^m followed by n-m optional copies of Q
    nfa = _Nfa()
    nfa.start, nfa.accept = nfa.build(ast.root, symbol_ids)
    if reverse:
        nfa = nfa.reversed()

    delta, accepting = _determinize(nfa, state_cap)
    delta, accepting = _minimize(delta, accepting, len(symbols))
    automaton = SpatialAutomaton.build(delta, accepting, symbols)
    logger.info(
        f"Compiled {'reverse' if reverse else 'forward'} automaton: "
        f"{len(symbols)} symbols, {automaton.num_states} states, {len(automaton.transitions)} transitions"
    )
    return automaton


def compile_forward(ast: QueryAst, state_cap: int = STATE_CAP) -> SpatialAutomaton:
    """
    Minimal deterministic automaton for the query language over symbol ids.

    Range nodes are unrolled during construction, so expanded and
    unexpanded trees compile to the same automaton.

    Raises:
        StateLimitError: subset construction exceeds `state_cap` states
    """
    return _compile(ast, False, state_cap)


def compile_reverse(ast: QueryAst, state_cap: int = STATE_CAP) -> SpatialAutomaton:
    """Automaton for the reversed language, built from the reversed Thompson NFA."""
    return _compile(ast, True, state_cap)


def to_dot(automaton: SpatialAutomaton, name: str = "spre") -> str:
    """Graphviz rendering with formula-labeled edges."""
    lines = [f"digraph {name} {{", "  rankdir=LR;", '  __start [shape=point, label=""];']
    for state in automaton.states:
        shape = "doublecircle" if state in automaton.accepting else "circle"
        lines.append(f'  q{state} [shape={shape}, label="q{state}"];')
    lines.append(f"  __start -> q{automaton.start};")
    for src, symbol, dst in automaton.transitions:
        label = formula_to_source(automaton.symbols[symbol]).replace("\\", "\\\\").replace('"', '\\"')
        lines.append(f'  q{src} -> q{dst} [label="{label}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"
