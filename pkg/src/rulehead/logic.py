"""Rule evaluation, negation elimination and CNF conversion.

Clauses are frozensets of ``(concept, outcome)`` pairs with 1-based outcomes and
no negations: a negated literal is replaced by the remaining outcomes of its
concept before clauses are built.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from .errors import CnfExplosion, UnsatisfiableRule
from .rule_dsl import FALSE, TRUE, And, Const, Iff, Implies, Lit, Not, Or, Rule
from .schema import ConceptSchema

Clause = frozenset  # of (concept, outcome) pairs

DEFAULT_CLAUSE_BUDGET = 10_000


@dataclass(frozen=True)
class Cnf:
    """Conjunction of negation-free clauses. No clauses means TRUE."""

    clauses: tuple

    def __len__(self):
        return len(self.clauses)

    def __iter__(self):
        return iter(self.clauses)


def evaluate(ast: Rule, c) -> bool:
    """Truth value of ``ast`` at concept vector ``c`` (1-based outcomes)."""
    if isinstance(ast, Lit):
        return c[ast.concept] in ast.outcomes
    if isinstance(ast, Const):
        return ast.value
    if isinstance(ast, Not):
        return not evaluate(ast.arg, c)
    if isinstance(ast, And):
        return all(evaluate(a, c) for a in ast.args)
    if isinstance(ast, Or):
        return any(evaluate(a, c) for a in ast.args)
    if isinstance(ast, Implies):
        return (not evaluate(ast.lhs, c)) or evaluate(ast.rhs, c)
    if isinstance(ast, Iff):
        return evaluate(ast.lhs, c) == evaluate(ast.rhs, c)
    raise TypeError(f"not a rule node: {ast!r}")


def evaluate_batch(ast: Rule, states: np.ndarray) -> np.ndarray:
    """Vectorised ``evaluate`` over the rows of an ``(n, m+1)`` array of states."""
    n = states.shape[0]
    if isinstance(ast, Lit):
        return np.isin(states[:, ast.concept], sorted(ast.outcomes))
    if isinstance(ast, Const):
        return np.full(n, ast.value)
    if isinstance(ast, Not):
        return ~evaluate_batch(ast.arg, states)
    if isinstance(ast, And):
        out = np.ones(n, dtype=bool)
        for a in ast.args:
            out &= evaluate_batch(a, states)
        return out
    if isinstance(ast, Or):
        out = np.zeros(n, dtype=bool)
        for a in ast.args:
            out |= evaluate_batch(a, states)
        return out
    if isinstance(ast, Implies):
        return ~evaluate_batch(ast.lhs, states) | evaluate_batch(ast.rhs, states)
    if isinstance(ast, Iff):
        return evaluate_batch(ast.lhs, states) == evaluate_batch(ast.rhs, states)
    raise TypeError(f"not a rule node: {ast!r}")


def _nnf(ast: Rule, schema: ConceptSchema, positive: bool) -> Rule:
    if isinstance(ast, Lit):
        full = set(range(1, schema.sizes[ast.concept] + 1))
        keep = set(ast.outcomes) if positive else full - set(ast.outcomes)
        if not keep:
            return FALSE
        if keep == full:
            return TRUE
        return Lit(ast.concept, keep)
    if isinstance(ast, Const):
        return Const(ast.value == positive)
    if isinstance(ast, Not):
        return _nnf(ast.arg, schema, not positive)
    if isinstance(ast, Implies):
        return _nnf(Or(Not(ast.lhs), ast.rhs), schema, positive)
    if isinstance(ast, Iff):
        rewritten = And(Or(Not(ast.lhs), ast.rhs), Or(Not(ast.rhs), ast.lhs))
        return _nnf(rewritten, schema, positive)
    if isinstance(ast, (And, Or)):
        is_and = isinstance(ast, And) == positive
        args = [_nnf(a, schema, positive) for a in ast.args]
        absorbing, neutral = (FALSE, TRUE) if is_and else (TRUE, FALSE)
        if absorbing in args:
            return absorbing
        flat = []
        kind = And if is_and else Or
        for a in args:
            if a == neutral:
                continue
            flat.extend(a.args if isinstance(a, kind) else [a])
        if not flat:
            return neutral
        return flat[0] if len(flat) == 1 else kind(*flat)
    raise TypeError(f"not a rule node: {ast!r}")


def eliminate_negations(ast: Rule, schema: ConceptSchema) -> Rule:
    """Equivalent tree of And/Or/Lit nodes (or a bare TRUE).

    Negated literals become literals over the complementary outcomes.
    Raises UnsatisfiableRule if the tree folds to FALSE.
    """
    out = _nnf(ast, schema, True)
    if out == FALSE:
        raise UnsatisfiableRule("rule simplifies to FALSE")
    return out


def _is_tautology(clause, sizes) -> bool:
    per = {}
    for i, j in clause:
        per.setdefault(i, set()).add(j)
    return any(len(v) == sizes[i] for i, v in per.items())


def _reduce(clauses, sizes) -> list:
    """Drop tautologies, duplicates and subsumed clauses; canonical order."""
    uniq = {c for c in clauses if not _is_tautology(c, sizes)}
    ordered = sorted(uniq, key=lambda c: (len(c), sorted(c)))
    kept = []
    for c in ordered:
        if not any(k <= c for k in kept):
            kept.append(c)
    return kept


def _cnf(node, sizes, budget) -> list:
    if isinstance(node, Lit):
        return _reduce([frozenset((node.concept, j) for j in node.outcomes)], sizes)
    if isinstance(node, And):
        clauses = []
        for a in node.args:
            clauses.extend(_cnf(a, sizes, budget))
        return _reduce(clauses, sizes)
    if isinstance(node, Or):
        acc = [frozenset()]
        for a in node.args:
            part = _cnf(a, sizes, budget)
            if not part:  # a TRUE disjunct
                return []
            if len(acc) * len(part) > budget:
                raise CnfExplosion(
                    f"CNF needs more than {budget} intermediate clauses; "
                    "use the admissible-state or vertex head instead"
                )
            acc = _reduce([x | y for x, y in product(acc, part)], sizes)
            if not acc:
                return []
        return acc
    raise TypeError(f"to_cnf expects a negation-free tree, got {node!r}")


def to_cnf(nnf: Rule, schema: ConceptSchema, clause_budget: int = DEFAULT_CLAUSE_BUDGET) -> Cnf:
    """Distribute OR over AND, simplifying at every step."""
    if nnf == TRUE:
        return Cnf(())
    if nnf == FALSE:
        raise UnsatisfiableRule("rule is FALSE")
    return Cnf(tuple(_cnf(nnf, schema.sizes, clause_budget)))


def simplify_cnf(cnf: Cnf, schema: ConceptSchema) -> Cnf:
    clauses = [frozenset(c) for c in cnf.clauses]
    if any(not c for c in clauses):
        raise UnsatisfiableRule("empty clause")
    return Cnf(tuple(_reduce(clauses, schema.sizes)))


def rule_to_cnf(ast: Rule, schema: ConceptSchema, clause_budget=DEFAULT_CLAUSE_BUDGET) -> Cnf:
    return simplify_cnf(to_cnf(eliminate_negations(ast, schema), schema, clause_budget), schema)


def _resolve(a, b, i, sizes):
    """Resolvent of two clauses on concept ``i``: outcome sets meet there, join elsewhere."""
    on_a = {j for k, j in a if k == i}
    on_b = {j for k, j in b if k == i}
    rest = {q for q in a | b if q[0] != i}
    out = frozenset(rest | {(i, j) for j in on_a & on_b})
    return None if _is_tautology(out, sizes) else out


def prime_implicates(cnf: Cnf, schema: ConceptSchema, clause_budget=DEFAULT_CLAUSE_BUDGET) -> Cnf:
    """All prime implicates, by resolution to saturation with subsumption.

    The result is logically equivalent to ``cnf``. Its clause inequalities
    cut off fractional marginals that a plain CNF can leave in, e.g. the
    pair ``a OR b = 1``, ``a OR b = 2`` admits ``Pr(a) = 0.5`` until the
    resolvent ``a`` is added.
    """
    sizes = schema.sizes
    kept = list(simplify_cnf(cnf, schema).clauses)
    queue = list(kept)
    while queue:
        c = queue.pop()
        if c not in kept:
            continue
        for other in list(kept):
            if other is c:
                continue
            for i in {k for k, _ in c} & {k for k, _ in other}:
                on_c = {j for k, j in c if k == i}
                on_o = {j for k, j in other if k == i}
                if on_c <= on_o or on_o <= on_c:
                    continue  # resolvent would be subsumed
                r = _resolve(c, other, i, sizes)
                if r is None or any(k <= r for k in kept):
                    continue
                if not r:
                    raise UnsatisfiableRule("resolution derives the empty clause")
                kept = [k for k in kept if not r <= k]
                kept.append(r)
                queue.append(r)
                if len(kept) > clause_budget:
                    raise CnfExplosion(f"more than {clause_budget} prime implicates")
        # c may have been subsumed meanwhile; later pairs see the current set
    return Cnf(tuple(sorted(kept, key=lambda c: (len(c), sorted(c)))))


def cnf_satisfied(cnf: Cnf, c) -> bool:
    return all(any(c[i] == j for i, j in clause) for clause in cnf.clauses)


def cnf_satisfied_batch(cnf: Cnf, states: np.ndarray) -> np.ndarray:
    out = np.ones(states.shape[0], dtype=bool)
    for clause in cnf.clauses:
        hit = np.zeros(states.shape[0], dtype=bool)
        for i, j in clause:
            hit |= states[:, i] == j
        out &= hit
    return out


def format_clause(clause, schema: ConceptSchema) -> str:
    parts = [
        f"{schema.concepts[i].name} = {schema.concepts[i].values[j - 1]}" for i, j in sorted(clause)
    ]
    return " OR ".join(parts)
