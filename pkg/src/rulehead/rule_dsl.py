"""A small textual language for expert rules over multi-valued concepts.

Example::

    # woodpeckers
    IF head = red AND bill IN {dagger, allpurpose} THEN bird = rhw

Grammar, loosest binding first::

    rule    := "IF" expr "THEN" expr | expr
    expr    := impl ("<->" impl)*          left-associative
    impl    := or ("->" impl)?             right-associative
    or      := and (("OR" | "|") and)*
    and     := unary (("AND" | "&") unary)*
    unary   := ("NOT" | "!") unary | atom
    atom    := literal | "TRUE" | "FALSE" | "(" rule ")"
    literal := NAME ("=" | "IN") (NAME | "{" NAME ("," NAME)* "}")

Keywords are case-insensitive. Rules are separated by newlines or ``;`` and
conjoined. ``#`` starts a comment. Names that are not bare words may be written
in double quotes.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Union

from .errors import RuleError, RuleNameError, RuleSyntaxError
from .schema import ConceptSchema


@dataclass(frozen=True)
class Lit:
    concept: int
    outcomes: frozenset

    def __init__(self, concept, outcomes):
        object.__setattr__(self, "concept", int(concept))
        object.__setattr__(self, "outcomes", frozenset(int(j) for j in outcomes))


@dataclass(frozen=True)
class Not:
    arg: "Rule"


@dataclass(frozen=True)
class And:
    args: tuple

    def __init__(self, *args):
        object.__setattr__(self, "args", tuple(args))


@dataclass(frozen=True)
class Or:
    args: tuple

    def __init__(self, *args):
        object.__setattr__(self, "args", tuple(args))


@dataclass(frozen=True)
class Implies:
    lhs: "Rule"
    rhs: "Rule"


@dataclass(frozen=True)
class Iff:
    lhs: "Rule"
    rhs: "Rule"


@dataclass(frozen=True)
class Const:
    value: bool


TRUE = Const(True)
FALSE = Const(False)

Rule = Union[Lit, Not, And, Or, Implies, Iff, Const]

KEYWORDS = {"AND", "OR", "NOT", "IN", "IF", "THEN", "TRUE", "FALSE"}
MAX_DEPTH = 200

_BARE = re.compile(r"[A-Za-z0-9_]+(?:-[A-Za-z0-9_]+)*")
_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<comment>\#[^\n]*)
  | (?P<nl>\n)
  | (?P<op><->|->|[=(){},;&|!])
  | (?P<quoted>"(?:[^"\\\n]|\\.)*")
  | (?P<word>[A-Za-z0-9_]+(?:-[A-Za-z0-9_]+)*)
    """,
    re.VERBOSE,
)


@dataclass
class Token:
    kind: str  # "op", "kw", "name", "sep", "eof"
    text: str
    line: int
    col: int


def tokenize(text: str) -> list[Token]:
    tokens = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        col = pos - line_start + 1
        if m is None:
            raise RuleSyntaxError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        s = m.group()
        if kind == "nl":
            tokens.append(Token("sep", "\n", line, col))
            line, line_start = line + 1, m.end()
        elif kind == "op":
            tokens.append(Token("sep" if s == ";" else "op", s, line, col))
        elif kind == "quoted":
            tokens.append(Token("name", re.sub(r"\\(.)", r"\1", s[1:-1]), line, col))
        elif kind == "word":
            if s.upper() in KEYWORDS:
                tokens.append(Token("kw", s.upper(), line, col))
            else:
                tokens.append(Token("name", s, line, col))
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


class _Parser:
    def __init__(self, tokens, schema):
        self.tokens = tokens
        self.pos = 0
        self.schema = schema
        self.paren = 0
        self.depth = 0

    # token helpers; newlines inside parentheses are insignificant
    def peek(self) -> Token:
        while self.paren > 0 and self.tokens[self.pos].text == "\n":
            self.pos += 1
        return self.tokens[self.pos]

    def next(self) -> Token:
        tok = self.peek()
        if tok.kind != "eof":
            self.pos += 1
        return tok

    def at(self, *texts) -> bool:
        tok = self.peek()
        return tok.kind in ("op", "kw", "sep") and tok.text in texts

    def expect(self, text) -> Token:
        tok = self.peek()
        if not self.at(text):
            self.fail(f"expected {text!r}", tok)
        return self.next()

    def fail(self, msg, tok=None):
        tok = tok or self.peek()
        found = "end of input" if tok.kind == "eof" else repr(tok.text)
        raise RuleSyntaxError(f"{msg}, found {found}", tok.line, tok.col)

    def enter(self):
        self.depth += 1
        if self.depth > MAX_DEPTH:
            self.fail("expression nested too deeply")

    def leave(self):
        self.depth -= 1

    def parse_all(self) -> Rule:
        rules = []
        while True:
            while self.at("\n", ";"):
                self.next()
            if self.peek().kind == "eof":
                break
            rules.append(self.rule())
            if not (self.at("\n", ";") or self.peek().kind == "eof"):
                self.fail("expected end of rule")
        if not rules:
            tok = self.peek()
            raise RuleSyntaxError("no rules found", tok.line, tok.col)
        return rules[0] if len(rules) == 1 else And(*rules)

    def rule(self) -> Rule:
        if self.at("IF"):
            self.next()
            self.enter()
            cond = self.expr()
            self.expect("THEN")
            out = Implies(cond, self.expr())
            self.leave()
            return out
        return self.expr()

    def expr(self) -> Rule:
        node = self.impl()
        while self.at("<->"):
            self.next()
            node = Iff(node, self.impl())
        return node

    def impl(self) -> Rule:
        self.enter()
        node = self.or_()
        if self.at("->"):
            self.next()
            node = Implies(node, self.impl())
        self.leave()
        return node

    def or_(self) -> Rule:
        args = [self.and_()]
        while self.at("OR", "|"):
            self.next()
            args.append(self.and_())
        return args[0] if len(args) == 1 else Or(*args)

    def and_(self) -> Rule:
        args = [self.unary()]
        while self.at("AND", "&"):
            self.next()
            args.append(self.unary())
        return args[0] if len(args) == 1 else And(*args)

    def unary(self) -> Rule:
        if self.at("NOT", "!"):
            self.next()
            self.enter()
            node = Not(self.unary())
            self.leave()
            return node
        return self.atom()

    def atom(self) -> Rule:
        tok = self.peek()
        if self.at("("):
            self.next()
            self.paren += 1
            self.enter()
            node = self.rule()
            self.leave()
            self.expect(")")
            self.paren -= 1
            return node
        if self.at("TRUE"):
            self.next()
            return TRUE
        if self.at("FALSE"):
            self.next()
            return FALSE
        if tok.kind == "name":
            return self.literal()
        self.fail("expected a literal or '('")

    def literal(self) -> Lit:
        name_tok = self.next()
        try:
            i = self.schema.concept_index(name_tok.text)
        except KeyError:
            raise RuleNameError(
                f"unknown concept {name_tok.text!r}", name_tok.line, name_tok.col
            ) from None
        if self.at("="):
            self.next()
            value_toks = [self.name()]
        elif self.at("IN"):
            self.next()
            open_tok = self.expect("{")
            value_toks = []
            if not self.at("}"):
                value_toks.append(self.name())
                while self.at(","):
                    self.next()
                    value_toks.append(self.name())
            self.expect("}")
            if not value_toks:
                raise RuleSyntaxError("empty value set", open_tok.line, open_tok.col)
        else:
            self.fail("expected '=' or 'IN'")
        outcomes = set()
        for vt in value_toks:
            try:
                outcomes.add(self.schema.value_index(i, vt.text))
            except KeyError:
                raise RuleNameError(
                    f"unknown value {vt.text!r} for concept {name_tok.text!r}", vt.line, vt.col
                ) from None
        return Lit(i, outcomes)

    def name(self) -> Token:
        tok = self.peek()
        if tok.kind != "name":
            self.fail("expected a value name")
        return self.next()


def parse_rules(text: str, schema: ConceptSchema) -> Rule:
    """Parse rule text into a single conjoined AST, resolving names against ``schema``."""
    return _Parser(tokenize(text), schema).parse_all()


def load_rules(path, schema: ConceptSchema) -> Rule:
    with open(path, encoding="utf-8") as fh:
        return parse_rules(fh.read(), schema)


def _quote(name: str) -> str:
    if _BARE.fullmatch(name) and name.upper() not in KEYWORDS:
        return name
    return '"' + name.replace("\\", "\\\\").replace('"', '\\"') + '"'


def format_ast(ast: Rule, schema: ConceptSchema) -> str:
    """Render ``ast`` so that ``parse_rules`` gives back the same tree."""

    def sub(node):
        return f"({fmt(node)})"

    def fmt(node):
        if isinstance(node, Lit):
            concept = schema.concepts[node.concept]
            names = [_quote(concept.values[j - 1]) for j in sorted(node.outcomes)]
            if len(names) == 1:
                return f"{_quote(concept.name)} = {names[0]}"
            return f"{_quote(concept.name)} IN {{{', '.join(names)}}}"
        if isinstance(node, Const):
            return "TRUE" if node.value else "FALSE"
        if isinstance(node, Not):
            return f"NOT {sub(node.arg)}"
        if isinstance(node, And):
            return " AND ".join(sub(a) for a in node.args)
        if isinstance(node, Or):
            return " OR ".join(sub(a) for a in node.args)
        if isinstance(node, Implies):
            return f"{sub(node.lhs)} -> {sub(node.rhs)}"
        if isinstance(node, Iff):
            return f"{sub(node.lhs)} <-> {sub(node.rhs)}"
        raise TypeError(f"not a rule node: {node!r}")

    return fmt(ast)


def check_ast(ast: Rule, schema: ConceptSchema):
    """Raise RuleError if a literal references a missing concept or outcome."""
    for node in walk(ast):
        if isinstance(node, Lit):
            if not 0 <= node.concept < len(schema):
                raise RuleError(f"literal references concept {node.concept}")
            n = schema.sizes[node.concept]
            if not node.outcomes or not all(1 <= j <= n for j in node.outcomes):
                raise RuleError(f"literal {node} has outcomes outside 1..{n}")
        elif isinstance(node, (And, Or)) and not node.args:
            raise RuleError(f"empty {type(node).__name__}")


def walk(ast: Rule):
    stack = [ast]
    while stack:
        node = stack.pop()
        yield node
        if isinstance(node, Not):
            stack.append(node.arg)
        elif isinstance(node, (And, Or)):
            stack.extend(node.args)
        elif isinstance(node, (Implies, Iff)):
            stack.extend((node.lhs, node.rhs))
