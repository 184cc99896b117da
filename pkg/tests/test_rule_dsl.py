import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import random_ast, random_schema, schema_and_ast
from rulehead.errors import RuleError, RuleNameError, RuleSyntaxError
from rulehead.rule_dsl import FALSE, TRUE, And, Iff, Implies, Lit, Not, Or, check_ast, format_ast, parse_rules
from rulehead.schema import ConceptSchema


def test_woodpecker_rule(wood):
    ast = parse_rules("IF head = red AND bill IN {dagger, allpurpose} THEN bird = rhw", wood)
    assert ast == Implies(And(Lit(1, {1}), Lit(2, {2, 3})), Lit(0, {1}))


def test_clause_form(wood):
    ast = parse_rules("bird = rhw OR head = green OR bill = chisel", wood)
    assert ast == Or(Lit(0, {1}), Lit(1, {2}), Lit(2, {1}))


def test_negation(wood):
    assert parse_rules("NOT head = red", wood) == Not(Lit(1, {1}))
    assert parse_rules("!head = red", wood) == Not(Lit(1, {1}))


def test_precedence(wood):
    ast = parse_rules("head = red OR bill = chisel AND NOT bird = rhw -> bird = egw <-> head = green", wood)
    lhs = Implies(Or(Lit(1, {1}), And(Lit(2, {1}), Not(Lit(0, {1})))), Lit(0, {2}))
    assert ast == Iff(lhs, Lit(1, {2}))


def test_implication_right_associative(wood):
    ast = parse_rules("head = red -> bill = chisel -> bird = rhw", wood)
    assert ast == Implies(Lit(1, {1}), Implies(Lit(2, {1}), Lit(0, {1})))


def test_iff_left_associative(wood):
    ast = parse_rules("head = red <-> bill = chisel <-> bird = rhw", wood)
    assert ast == Iff(Iff(Lit(1, {1}), Lit(2, {1})), Lit(0, {1}))


def test_keywords_case_insensitive(wood):
    a = parse_rules("if head = red and bill in {chisel} then bird = rhw", wood)
    b = parse_rules("IF head = red AND bill IN {chisel} THEN bird = rhw", wood)
    assert a == b


def test_symbol_operators(wood):
    assert parse_rules("head = red & bird = rhw | bill = chisel", wood) == Or(
        And(Lit(1, {1}), Lit(0, {1})), Lit(2, {1})
    )


def test_multiple_rules_conjoined(wood):
    text = "# two rules\nhead = red -> bird = rhw\n\nbill = chisel ; bird = egw  # trailing\n"
    ast = parse_rules(text, wood)
    assert ast == And(Implies(Lit(1, {1}), Lit(0, {1})), Lit(2, {1}), Lit(0, {2}))


def test_newlines_inside_parentheses(wood):
    ast = parse_rules("(head = red\n AND bird = rhw)", wood)
    assert ast == And(Lit(1, {1}), Lit(0, {1}))


def test_constants(wood):
    assert parse_rules("TRUE", wood) == TRUE
    assert parse_rules("false OR head = red", wood) == Or(FALSE, Lit(1, {1}))


@pytest.mark.parametrize(
    "text, line, col",
    [
        ("head = ", 1, 8),
        ("head = red AND", 1, 15),
        ("(head = red", 1, 12),
        ("head red", 1, 6),
        ("bird = rhw\nhead = red bill = chisel", 2, 12),
        ("head = red $", 1, 12),
        ("IF head = red bird = rhw", 1, 15),
    ],
)
def test_syntax_errors_have_positions(wood, text, line, col):
    with pytest.raises(RuleSyntaxError) as exc:
        parse_rules(text, wood)
    assert (exc.value.line, exc.value.column) == (line, col)


def test_unknown_names(wood):
    with pytest.raises(RuleNameError, match="unknown concept 'wing'"):
        parse_rules("wing = red", wood)
    with pytest.raises(RuleNameError, match="unknown value 'blue'") as exc:
        parse_rules("bird = rhw\nhead = blue", wood)
    assert exc.value.line == 2


def test_empty_value_set(wood):
    with pytest.raises(RuleSyntaxError, match="empty value set"):
        parse_rules("bill IN {}", wood)


def test_empty_text(wood):
    with pytest.raises(RuleSyntaxError):
        parse_rules("  # nothing\n", wood)


def test_deep_nesting_is_an_error_not_a_crash(wood):
    with pytest.raises(RuleSyntaxError, match="nested too deeply"):
        parse_rules("(" * 5000 + "head = red" + ")" * 5000, wood)
    with pytest.raises(RuleSyntaxError):
        parse_rules("NOT " * 5000 + "head = red", wood)


def test_format_examples(wood):
    assert format_ast(Lit(1, {1}), wood) == "head = red"
    assert format_ast(Implies(Lit(1, {1}), Lit(0, {1})), wood) == "(head = red) -> (bird = rhw)"
    assert format_ast(Lit(2, {3, 2}), wood) == "bill IN {dagger, allpurpose}"


def test_format_quotes_awkward_names():
    schema = ConceptSchema.from_dict(
        {"concepts": [{"name": "wing color", "values": ["and", 'say "hi"']}, {"name": "x", "values": ["a", "b"]}]}
    )
    ast = Or(Lit(0, {1}), Not(Lit(0, {2})))
    text = format_ast(ast, schema)
    assert text == '("wing color" = "and") OR (NOT ("wing color" = "say \\"hi\\""))'
    assert parse_rules(text, schema) == ast


def test_round_trip_100_random_asts():
    rng = np.random.default_rng(7)
    for _ in range(100):
        schema = random_schema(rng)
        ast = random_ast(rng, schema, depth=5, consts=True)
        assert parse_rules(format_ast(ast, schema), schema) == ast


@settings(max_examples=200, deadline=None)
@given(schema_and_ast)
def test_round_trip_property(pair):
    schema, ast = pair
    assert parse_rules(format_ast(ast, schema), schema) == ast


TOKENS = ["bird", "head", "bill", "=", "IN", "{", "}", ",", "rhw", "red", "chisel", "dagger",
          "AND", "OR", "NOT", "->", "<->", "(", ")", "IF", "THEN", ";", "\n", "TRUE", "#", "&", "|", "!", "zzz", '"']


@settings(max_examples=500, deadline=None)
@given(st.lists(st.sampled_from(TOKENS), max_size=25))
def test_parser_total_over_token_soup(tokens):
    schema = ConceptSchema.from_dict(
        {"concepts": [{"name": "bird", "values": ["rhw", "egw"]}, {"name": "head", "values": ["red", "green"]},
                      {"name": "bill", "values": ["chisel", "dagger", "allpurpose"]}]}
    )
    try:
        ast = parse_rules(" ".join(tokens), schema)
    except RuleSyntaxError as e:
        assert e.line >= 1 and e.column >= 1
    else:
        check_ast(ast, schema)


@settings(max_examples=300, deadline=None)
@given(st.text(max_size=40))
def test_parser_total_over_arbitrary_text(text, ):
    schema = ConceptSchema.from_sizes([2, 3])
    try:
        parse_rules(text, schema)
    except RuleSyntaxError:
        pass


def test_check_ast_rejects_bad_literals(wood):
    with pytest.raises(RuleError):
        check_ast(Lit(5, {1}), wood)
    with pytest.raises(RuleError):
        check_ast(Lit(2, {4}), wood)
    with pytest.raises(RuleError):
        check_ast(Lit(2, set()), wood)
