"""
Tests for the query lexer, parser, well-formedness check and range expansion.
"""

import pytest
from hypothesis import HealthCheck, given, settings

from app.automaton import collect_symbols
from app.matcher import in_language
from app.parser import (
    QueryArityError,
    QueryLexError,
    QuerySyntaxError,
    TokenKind,
    check_well_formed,
    expand_ranges,
    parse,
    parse_query,
    tokenize,
)
from app.syntax import (
    Add,
    Alternation,
    And,
    Atom,
    BinaryFn,
    Complement,
    Concatenation,
    Const,
    Epsilon,
    Exists,
    FormulaLeaf,
    Intersect,
    KleeneStar,
    LessEq,
    Mul,
    Negate,
    NonEmpty,
    Not,
    Or,
    Pow,
    QueryAst,
    Range,
    SubsetOf,
    TermAtom,
    UnaryFn,
    Union_,
    Var,
    to_source,
)
from tests.corpus import CORPUS, QUERY_A1, QUERY_A3, QUERY_B2, QUERY_B3
from tests.strategies import letter_queries, mask_words, queries


def atom(name):
    return frozenset({name})


def leaf(name):
    return FormulaLeaf(Atom(atom(name)))


def strict(lhs, rhs):
    """lhs < rhs: both sides have a value and no rhs value is at most an lhs value."""
    return And(LessEq(lhs, lhs), And(LessEq(rhs, rhs), Not(LessEq(rhs, lhs))))


def formula_of(query):
    """Formula of a single-leaf query."""
    root = parse_query(query).root
    assert isinstance(root, FormulaLeaf)
    return root.formula


class TestTokenize:
    """Tests for the lexer."""

    def test_query_a1_tokens(self):
        """The overlap query lexes into nine tokens."""
        kinds = [token.kind for token in tokenize(QUERY_A1)]
        assert kinds == [
            TokenKind.LBRACK,
            TokenKind.ANGLE,
            TokenKind.LPAREN,
            TokenKind.ATTRCLASS,
            TokenKind.AMP,
            TokenKind.ATTRCLASS,
            TokenKind.RPAREN,
            TokenKind.RBRACK,
            TokenKind.STAR,
        ]

    def test_spans_point_into_source(self):
        """Every token's span slices back to its text."""
        for token in tokenize(QUERY_A3):
            assert QUERY_A3[token.span[0]:token.span[1]] == token.text

    def test_whitespace_insignificant(self):
        """Spacing does not change the token stream."""
        compact = [t.kind for t in tokenize("[[:a:]&[:b:]]{1,2}")]
        spaced = [t.kind for t in tokenize(" [ [:a:] & [:b:] ] { 1 , 2 } ")]
        assert compact == spaced

    def test_range_values(self):
        """Ranges carry (m, n) with None for an open upper bound."""
        values = [t.value for t in tokenize("{2} {1,} {1,200}") if t.kind is TokenKind.RANGE]
        assert values == [(2, 2), (1, None), (1, 200)]

    def test_attribute_class_with_several_values(self):
        """[:bus, red:] holds both values."""
        token = tokenize("[:bus, red:]")[0]
        assert token.kind is TokenKind.ATTRCLASS
        assert token.value == frozenset({"bus", "red"})

    def test_numbers(self):
        """Integers, decimals and exponents."""
        values = [t.value for t in tokenize("2 2.5 .5 1e3") if t.kind is TokenKind.NUMBER]
        assert values == [2.0, 2.5, 0.5, 1000.0]

    def test_comparators(self):
        """Angle operators are told apart from comparisons."""
        kinds = [t.kind for t in tokenize("<x> < <= > >= = :=")]
        assert kinds == [
            TokenKind.ANGLE,
            TokenKind.LT,
            TokenKind.LE,
            TokenKind.GT,
            TokenKind.GE,
            TokenKind.EQ,
            TokenKind.COLONEQ,
        ]

    def test_unknown_operator(self):
        """Angle names must be known operators or metric functions."""
        with pytest.raises(QueryLexError) as exc_info:
            tokenize("[<speed>([:car:]) < 3]")
        assert exc_info.value.offset == 1

    def test_unterminated_attribute_class(self):
        """[: without :] is a lexical error."""
        with pytest.raises(QueryLexError):
            tokenize("[[:car]")

    def test_unexpected_character(self):
        """Stray characters report their offset."""
        with pytest.raises(QueryLexError) as exc_info:
            tokenize("[[:car:]] @")
        assert exc_info.value.offset == 10

    def test_malformed_range(self):
        """A brace must open a numeric range."""
        with pytest.raises(QueryLexError):
            tokenize("[[:car:]]{a}")


class TestRegexLevel:
    """Tests for regex operators and their precedence."""

    def test_star(self):
        """Postfix star wraps the preceding group."""
        assert parse_query("[[:a:]]*").root == KleeneStar(leaf("a"))

    def test_concatenation_folds_left(self):
        """Juxtaposition associates to the left."""
        root = parse_query("[[:a:]][[:b:]][[:c:]]").root
        assert root == Concatenation(Concatenation(leaf("a"), leaf("b")), leaf("c"))

    def test_alternation_binds_loosest(self):
        """Alternation is looser than concatenation."""
        root = parse_query("[[:a:]] | [[:b:]] [[:c:]]").root
        assert root == Alternation(leaf("a"), Concatenation(leaf("b"), leaf("c")))

    def test_postfix_binds_tightest(self):
        """Star applies to the last group only."""
        root = parse_query("[[:a:]] [[:b:]]*").root
        assert root == Concatenation(leaf("a"), KleeneStar(leaf("b")))

    def test_groups(self):
        """Parentheses group regexes."""
        root = parse_query("([[:a:]] | [[:b:]])*").root
        assert root == KleeneStar(Alternation(leaf("a"), leaf("b")))

    def test_empty_group_is_epsilon(self):
        """() is the empty word."""
        root = parse_query("() | [[:a:]]").root
        assert root == Alternation(Epsilon(), leaf("a"))

    def test_ranges(self):
        """Bounded, exact and open ranges."""
        assert parse_query("[[:a:]]{1,3}").root == Range(leaf("a"), 1, 3)
        assert parse_query("[[:a:]]{4}").root == Range(leaf("a"), 4, 4)
        assert parse_query("[[:a:]]{2,}").root == Range(leaf("a"), 2, None)

    def test_inverted_range(self):
        """m > n is rejected."""
        with pytest.raises(QuerySyntaxError):
            parse_query("[[:a:]]{3,1}")

    def test_empty_query(self):
        """An empty query is a syntax error."""
        with pytest.raises(QuerySyntaxError):
            parse_query("   ")

    def test_missing_bracket(self):
        """An unclosed formula names what was expected."""
        with pytest.raises(QuerySyntaxError) as exc_info:
            parse_query("[[:car:]")
        assert "]" in exc_info.value.expected
        assert exc_info.value.span == (8, 8)
        assert "end of query" in str(exc_info.value)

    def test_trailing_garbage(self):
        """Leftover tokens after a complete query are rejected."""
        with pytest.raises(QuerySyntaxError):
            parse_query("[[:a:]] )")

    def test_bare_attribute_class_at_regex_level(self):
        """Formulas must sit inside brackets."""
        with pytest.raises(QuerySyntaxError):
            parse_query("[:a:]")

    def test_parse_takes_tokens(self):
        """parse() works on a token list."""
        assert parse(tokenize("[[:a:]]")) == QueryAst(leaf("a"))


class TestFormulaLevel:
    """Tests for formulas, terms and metric expressions inside brackets."""

    def test_query_a1(self):
        """Nonempty overlap of two classes, starred."""
        expected = KleeneStar(FormulaLeaf(NonEmpty(Intersect(TermAtom(atom("pedestrian")), TermAtom(atom("bicycle"))))))
        assert parse_query(QUERY_A1).root == expected

    def test_and_binds_tighter_than_or(self):
        """& before |."""
        assert formula_of("[[:a:] | [:b:] & [:c:]]") == Or(Atom(atom("a")), And(Atom(atom("b")), Atom(atom("c"))))

    def test_negation_binds_tightest(self):
        """~ applies to the next operand only."""
        assert formula_of("[~[:a:] & [:b:]]") == And(Not(Atom(atom("a"))), Atom(atom("b")))

    def test_same_glyphs_resolve_by_position(self):
        """Inside <nonempty>, & and ~ are set operations."""
        formula = formula_of("[<nonempty>(~[:a:] & [:b:])]")
        assert formula == NonEmpty(Intersect(Complement(TermAtom(atom("a"))), TermAtom(atom("b"))))

    def test_subset(self):
        """<subset> takes two terms."""
        formula = formula_of("[<subset>([:a:], [:b:] | [:c:])]")
        assert formula == SubsetOf(TermAtom(atom("a")), Union_(TermAtom(atom("b")), TermAtom(atom("c"))))

    def test_less_equal_is_primitive(self):
        """<= maps directly onto LessEq."""
        formula = formula_of("[<area>([:car:]) <= 5]")
        assert formula == LessEq(UnaryFn("area", TermAtom(atom("car"))), Const(5.0))

    def test_derived_comparators(self):
        """<, >, >= and = are built from LessEq; strict forms also require a value on each side."""
        area = UnaryFn("area", TermAtom(atom("car")))
        five = Const(5.0)
        assert formula_of("[<area>([:car:]) >= 5]") == LessEq(five, area)
        assert formula_of("[<area>([:car:]) < 5]") == And(LessEq(area, area), Not(LessEq(five, area)))
        assert formula_of("[<area>([:car:]) > 5]") == And(LessEq(area, area), Not(LessEq(area, five)))
        assert formula_of("[<area>([:car:]) < <area>([:bus:])]") == strict(area, UnaryFn("area", TermAtom(atom("bus"))))
        assert formula_of("[<area>([:car:]) = 5]") == And(LessEq(area, five), LessEq(five, area))

    def test_metric_arithmetic(self):
        """* binds tighter than +; binary minus adds a negation."""
        area = UnaryFn("area", TermAtom(atom("car")))
        formula = formula_of("[<area>([:car:]) * 2 + 1 - 3 <= 0]")
        expected_left = Add(Add(Mul(area, Const(2.0)), Const(1.0)), Negate(Const(3.0)))
        assert formula == LessEq(expected_left, Const(0.0))

    def test_negative_literals_and_negation(self):
        """-3 is a constant; -(...) is a negation."""
        area = UnaryFn("area", TermAtom(atom("car")))
        assert formula_of("[-3 <= <area>([:car:])]") == LessEq(Const(-3.0), area)
        assert formula_of("[-(<area>([:car:])) <= 0]") == LessEq(Negate(area), Const(0.0))

    def test_power(self):
        """^ takes a numeric literal exponent, optionally negative."""
        x = UnaryFn("x", TermAtom(atom("car")))
        assert formula_of("[<x>([:car:])^2 <= 4]") == LessEq(Pow(x, 2.0), Const(4.0))
        assert formula_of("[<x>([:car:])^-1 <= 4]") == LessEq(Pow(x, -1.0), Const(4.0))

    def test_power_binds_tighter_than_minus(self):
        """-2^2 is -(2^2), the same as for a function call."""
        x = UnaryFn("x", TermAtom(atom("car")))
        assert formula_of("[-2^2 <= 0]") == LessEq(Negate(Pow(Const(2.0), 2.0)), Const(0.0))
        assert formula_of("[-<x>([:car:])^2 <= 0]") == LessEq(Negate(Pow(x, 2.0)), Const(0.0))
        assert formula_of("[(-2)^2 <= 0]") == LessEq(Pow(Const(-2.0), 2.0), Const(0.0))

    def test_binary_metric(self):
        """dist and iou take two terms."""
        formula = formula_of("[<iou>([:a:], [:b:]) >= 0.5]")
        assert formula == LessEq(Const(0.5), BinaryFn("iou", TermAtom(atom("a")), TermAtom(atom("b"))))

    def test_positional_sugar(self):
        """leftof/rightof compare y, frontof/behind compare x."""
        a, b = TermAtom(atom("a")), TermAtom(atom("b"))
        assert formula_of("[<leftof>([:a:], [:b:])]") == strict(UnaryFn("y", a), UnaryFn("y", b))
        assert formula_of("[<rightof>([:a:], [:b:])]") == strict(UnaryFn("y", b), UnaryFn("y", a))
        assert formula_of("[<frontof>([:a:], [:b:])]") == strict(UnaryFn("x", b), UnaryFn("x", a))
        assert formula_of("[<behind>([:a:], [:b:])]") == strict(UnaryFn("x", a), UnaryFn("x", b))

    def test_exists(self):
        """<exists>(v := [:c:])(body) binds v in the body."""
        formula = formula_of("[<exists>(v := [:cyclist:])(<nonempty>(v & [:ego:]))]")
        assert formula == Exists("v", atom("cyclist"), NonEmpty(Intersect(Var("v"), TermAtom(atom("ego")))))

    def test_query_a3(self):
        """Nested existentials with chained comparisons."""
        p, q = Var("p"), Var("q")
        dist = BinaryFn("dist", p, q)
        body = And(
            And(
                strict(UnaryFn("y", p), UnaryFn("y", q)),
                And(LessEq(dist, dist), Not(LessEq(Const(2.0), dist))),
            ),
            strict(UnaryFn("x", TermAtom(atom("ego"))), UnaryFn("x", p)),
        )
        expected = KleeneStar(
            FormulaLeaf(Exists("p", atom("pedestrian"), Exists("q", atom("truck"), body)))
        )
        assert parse_query(QUERY_A3).root == expected

    def test_operator_arity(self):
        """Operators and metric functions check their argument count."""
        with pytest.raises(QueryArityError):
            parse_query("[<nonempty>([:a:], [:b:])]")
        with pytest.raises(QueryArityError):
            parse_query("[<dist>([:a:]) < 3]")
        with pytest.raises(QueryArityError):
            parse_query("[<leftof>([:a:])]")

    def test_metric_in_formula_position(self):
        """A bare metric expression is not a formula."""
        with pytest.raises(QuerySyntaxError) as exc_info:
            parse_query("[<area>([:a:])]")
        assert "spatial formula" in str(exc_info.value)

    def test_metric_in_term_position(self):
        """A metric expression is not a set."""
        with pytest.raises(QuerySyntaxError) as exc_info:
            parse_query("[<nonempty>(<area>([:a:]))]")
        assert "spatial term" in str(exc_info.value)

    def test_comparison_in_term_position(self):
        """Comparisons are formulas, not sets."""
        with pytest.raises(QuerySyntaxError):
            parse_query("[<nonempty>([:a:] < 3)]")

    def test_variable_as_formula(self):
        """A variable alone is not a formula."""
        with pytest.raises(QuerySyntaxError):
            parse_query("[<exists>(v := [:a:])(v)]")


class TestCorpus:
    """The example queries all parse and pass the well-formedness check."""

    @pytest.mark.parametrize("query", CORPUS)
    def test_corpus_query_is_well_formed(self, query):
        """No diagnostics for any corpus query."""
        assert check_well_formed(parse_query(query)) == []

    def test_query_b2_structure(self):
        """A bounded run of signs followed by an overlap."""
        root = parse_query(QUERY_B2).root
        assert isinstance(root, Concatenation)
        assert root.left == Range(leaf("sign"), 1, 200)

    def test_query_b3_exact_range(self):
        """{300} is an exact repetition."""
        root = parse_query(QUERY_B3).root
        assert isinstance(root, Range)
        assert (root.m, root.n) == (300, 300)


class TestWellFormedness:
    """Tests for the static check."""

    def test_free_variable(self):
        """Variables outside any binder are reported by name."""
        problems = check_well_formed(parse_query("[<nonempty>(v)]"))
        assert len(problems) == 1
        assert problems[0].variable == "v"

    def test_variable_out_of_scope(self):
        """A binder covers its own body only."""
        query = "[<exists>(v := [:a:])(<nonempty>(v)) & <nonempty>(v)]"
        problems = check_well_formed(parse_query(query))
        assert [p.variable for p in problems] == ["v"]

    def test_unknown_metric_function(self):
        """Hand-built trees can name unknown functions."""
        ast = QueryAst(FormulaLeaf(LessEq(UnaryFn("speed", TermAtom(atom("car"))), Const(1.0))))
        problems = check_well_formed(ast)
        assert len(problems) == 1
        assert "speed" in problems[0].message

    def test_wrong_metric_arity(self):
        """dist used as a unary function is reported."""
        ast = QueryAst(FormulaLeaf(LessEq(UnaryFn("dist", TermAtom(atom("car"))), Const(1.0))))
        assert len(check_well_formed(ast)) == 1

    def test_invalid_range(self):
        """Hand-built ranges with m > n are reported."""
        ast = QueryAst(Range(leaf("a"), 3, 1))
        assert len(check_well_formed(ast)) == 1


class TestExpandRanges:
    """Tests for range expansion."""

    def test_bounded_range(self):
        """{1,2} becomes one copy or two."""
        ast = expand_ranges(QueryAst(Range(leaf("a"), 1, 2)))
        assert ast.root == Alternation(leaf("a"), Concatenation(leaf("a"), leaf("a")))

    def test_zero_range(self):
        """{0} is the empty word."""
        assert expand_ranges(QueryAst(Range(leaf("a"), 0, 0))).root == Epsilon()

    def test_open_range(self):
        """{2,} becomes two copies and a star."""
        ast = expand_ranges(QueryAst(Range(leaf("a"), 2, None)))
        assert ast.root == Concatenation(leaf("a"), Concatenation(leaf("a"), KleeneStar(leaf("a"))))

    def test_open_range_from_zero(self):
        """{0,} is a plain star."""
        assert expand_ranges(QueryAst(Range(leaf("a"), 0, None))).root == KleeneStar(leaf("a"))

    def test_nested_ranges_expand(self):
        """Ranges inside other operators are rewritten too."""
        ast = expand_ranges(QueryAst(KleeneStar(Range(leaf("a"), 2, 2))))
        assert ast.root == KleeneStar(Concatenation(leaf("a"), leaf("a")))

    def test_range_free_tree_unchanged(self):
        """Trees without ranges are returned as is."""
        ast = parse_query(QUERY_A1)
        assert expand_ranges(ast) == ast

    @settings(max_examples=300, deadline=None)
    @given(letter_queries(), mask_words())
    def test_expansion_preserves_language(self, ast, word):
        """Expanded and original trees accept the same words."""
        symbols = collect_symbols(ast)
        assert in_language(expand_ranges(ast), word, symbols) == in_language(ast, word, symbols)


class TestRoundTrip:
    """Canonical printing re-parses to the same tree."""

    @settings(max_examples=300, deadline=None, suppress_health_check=[HealthCheck.too_slow])
    @given(queries())
    def test_print_then_parse(self, ast):
        """parse(to_source(ast)) == ast."""
        assert parse_query(to_source(ast)) == ast

    @pytest.mark.parametrize("query", CORPUS)
    def test_corpus_canonical_form_is_stable(self, query):
        """The canonical form of a corpus query is a fixed point."""
        canonical = to_source(parse_query(query))
        assert to_source(parse_query(canonical)) == canonical
