"""Random schemas and rules for property tests."""
import itertools

import numpy as np
from hypothesis import strategies as st

from rulehead.rule_dsl import FALSE, TRUE, And, Iff, Implies, Lit, Not, Or
from rulehead.schema import ConceptSchema

WOODPECKER = {
    "concepts": [
        {"name": "bird", "values": ["rhw", "egw"]},
        {"name": "head", "values": ["red", "green"]},
        {"name": "bill", "values": ["chisel", "dagger", "allpurpose"]},
    ]
}
WOODPECKER_RULE = "IF head = red AND bill IN {dagger, allpurpose} THEN bird = rhw"

# every joint state in index order, with whether the rule admits it
WOOD_STATES = [
    ((1, 1, 1), True), ((1, 1, 2), True), ((1, 1, 3), True), ((1, 2, 1), True),
    ((1, 2, 2), True), ((1, 2, 3), True), ((2, 1, 1), True), ((2, 1, 2), False),
    ((2, 1, 3), False), ((2, 2, 1), True), ((2, 2, 2), True), ((2, 2, 3), True),
]


def all_states(schema):
    return list(itertools.product(*[range(1, n + 1) for n in schema.sizes]))


def random_schema(rng, max_concepts=4, max_outcomes=4):
    k = int(rng.integers(2, max_concepts + 1))
    return ConceptSchema.from_sizes([int(rng.integers(2, max_outcomes + 1)) for _ in range(k)])


def random_literal(rng, schema):
    i = int(rng.integers(len(schema)))
    n = schema.sizes[i]
    size = int(rng.integers(1, n + 1))
    return Lit(i, rng.choice(np.arange(1, n + 1), size=size, replace=False).tolist())


def random_ast(rng, schema, depth=5, consts=False):
    if depth <= 1 or rng.random() < 0.25:
        if consts and rng.random() < 0.05:
            return TRUE if rng.random() < 0.5 else FALSE
        return random_literal(rng, schema)
    kind = rng.choice(["and", "or", "not", "implies", "iff"], p=[0.3, 0.3, 0.15, 0.15, 0.1])
    sub = lambda: random_ast(rng, schema, depth - 1, consts)  # noqa: E731
    if kind == "and":
        return And(*[sub() for _ in range(int(rng.integers(2, 4)))])
    if kind == "or":
        return Or(*[sub() for _ in range(int(rng.integers(2, 4)))])
    if kind == "not":
        return Not(sub())
    if kind == "implies":
        return Implies(sub(), sub())
    return Iff(sub(), sub())


# hypothesis strategies --------------------------------------------------------------

schemas = st.lists(st.integers(2, 4), min_size=2, max_size=4).map(ConceptSchema.from_sizes)


def literals(schema):
    def lit(i):
        n = schema.sizes[i]
        return st.sets(st.integers(1, n), min_size=1, max_size=n).map(lambda s: Lit(i, s))

    return st.integers(0, len(schema) - 1).flatmap(lit)


def asts(schema, max_leaves=12, consts=True):
    leaves = literals(schema)
    if consts:
        leaves = leaves | st.sampled_from([TRUE, FALSE])

    def extend(children):
        many = st.lists(children, min_size=2, max_size=3)
        return (
            many.map(lambda a: And(*a))
            | many.map(lambda a: Or(*a))
            | children.map(Not)
            | st.tuples(children, children).map(lambda t: Implies(*t))
            | st.tuples(children, children).map(lambda t: Iff(*t))
        )

    return st.recursive(leaves, extend, max_leaves=max_leaves)


schema_and_ast = schemas.flatmap(lambda s: st.tuples(st.just(s), asts(s)))
